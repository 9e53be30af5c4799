"""
Tests for utils/coefficients.py
"""

import numpy as np
import pytest

from utils.coefficients import (
    CoefficientField,
    build_coefficient,
    constant_matrix,
    cubic_drift,
    datum,
    linear_drift,
    log_drift,
    oscillating_diffusion,
    ou_drift,
    polynomial_datum,
    polynomial_drift,
    quadratic_lyapunov,
    tanh_datum,
)
from utils.errors import InsufficientDerivativeData, ScenarioError


class TestCoefficientField:
    """Tests for evaluation shapes and derivative registration."""

    def test_vector_shape(self):
        """A drift evaluates to shape (d, ...)."""
        b = ou_drift(2.0, d=2)
        x = np.ones((2, 3, 4))
        out = b(0.0, x)
        assert out.shape == (2, 3, 4)
        np.testing.assert_allclose(out, -2.0)

    def test_matrix_shape(self):
        """A constant diffusion broadcasts over space."""
        Q = constant_matrix(1.5, d=2)
        out = Q(0.0, np.zeros((2, 5)))
        assert out.shape == (2, 2, 5)
        np.testing.assert_allclose(out[0, 0], 1.5)
        np.testing.assert_allclose(out[0, 1], 0.0)

    def test_space_independent_derivative_is_zero(self):
        """Space-independent coefficients have zero spatial derivatives."""
        Q = constant_matrix(1.0)
        assert Q.has_derivative((0, 0, 0))
        np.testing.assert_allclose(Q.derivative((0,), 0.0, np.zeros((1, 3))), 0.0)

    def test_missing_derivative_raises(self):
        """Unregistered derivatives raise with the missing symbol."""
        f = datum("g", lambda x: x[0] ** 2)
        with pytest.raises(InsufficientDerivativeData) as excinfo:
            f.derivative((0,), 0.0, np.zeros((1, 2)))
        assert "D_x0 g" in str(excinfo.value)

    def test_missing_lists_symbols(self):
        """missing() reports every absent index."""
        f = datum("g", lambda x: x[0], {(0,): lambda x: np.ones_like(x[0])})
        assert f.missing([(0,), (0, 0)]) == ["D_x0x0 g"]

    def test_index_normalized(self):
        """Derivative keys are sorted multi-indices."""
        field = CoefficientField("q", "scalar", 2, lambda t, x: x[0] * x[1],
                                 {(1, 0): lambda t, x: np.ones(np.shape(x)[1:])})
        assert (0, 1) in field.derivatives

    def test_invalid_index_rejected(self):
        """Indices beyond the dimension are rejected."""
        with pytest.raises(ValueError):
            CoefficientField("q", "scalar", 1, lambda t, x: x[0], {(1,): lambda t, x: x[0]})


class TestDerivativeCheck:
    """Tests for the central-difference guard."""

    @pytest.mark.parametrize("field", [tanh_datum(), cubic_drift(-1.0), log_drift(1.0),
                                       oscillating_diffusion(0.5), quadratic_lyapunov(2)])
    def test_catalogue_registrations_agree(self, field):
        """Catalogue derivatives agree with finite differences."""
        assert field.check_derivatives((0.0, 1.0), 3.0) == []

    def test_wrong_registration_detected(self):
        """A wrong derivative is reported."""
        f = datum("bad", lambda x: x[0] ** 2, {(0,): lambda x: x[0]})
        assert f.check_derivatives((0.0, 1.0), 2.0) == ["D_x0 bad"]


class TestCatalogue:
    """Tests for scenario catalogue lookup."""

    def test_linear_rate(self):
        """{"kind": "linear", "rate": 2} is b = -2x."""
        b = build_coefficient({"kind": "linear", "rate": 2.0}, "b", 1)
        np.testing.assert_allclose(b(0.0, np.array([[1.5]])), [[-3.0]])

    def test_linear_matrix(self):
        """An explicit matrix gives b = A x."""
        b = build_coefficient({"kind": "linear", "matrix": [[0.0, 1.0], [-1.0, 0.0]]}, "b", 2)
        np.testing.assert_allclose(b(0.0, np.array([[1.0], [2.0]])).ravel(), [2.0, -1.0])

    def test_polynomial_datum(self):
        """Coefficients are in increasing degree."""
        f = build_coefficient({"kind": "polynomial", "coefficients": [1.0, 0.0, 2.0]}, "f", 1)
        x = np.array([[2.0]])
        assert float(f(0.0, x)) == pytest.approx(9.0)
        assert float(f.derivative((0,), 0.0, x)) == pytest.approx(8.0)

    def test_polynomial_drift_third_derivative_only_when_smooth(self):
        """The third derivative exists for eps = 1 but not for eps = 0.5."""
        assert polynomial_drift(1.0).has_derivative((0, 0, 0))
        assert not polynomial_drift(0.5).has_derivative((0, 0, 0))

    def test_unknown_kind(self):
        """Unknown kinds raise ScenarioError."""
        with pytest.raises(ScenarioError):
            build_coefficient({"kind": "nope"}, "b", 1)

    def test_bad_parameter(self):
        """Unexpected parameters raise ScenarioError."""
        with pytest.raises(ScenarioError):
            build_coefficient({"kind": "linear", "slope": 1.0}, "b", 1)

    def test_one_dimensional_only(self):
        """One-dimensional kinds refuse d = 2."""
        with pytest.raises(ScenarioError):
            build_coefficient({"kind": "cubic"}, "b", 2)

    def test_zero_drift(self):
        """The zero drift vanishes everywhere."""
        b = build_coefficient({"kind": "zero"}, "b", 1)
        np.testing.assert_allclose(b(0.0, np.linspace(-1, 1, 5)[None]), 0.0)

    def test_linear_drift_jacobian(self):
        """Registered first derivative of A x is the column of A."""
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = linear_drift(A)
        col = b.derivative((1,), 0.0, np.zeros((2, 1)))
        np.testing.assert_allclose(col.ravel(), [2.0, 4.0])

    def test_polynomial_zero_derivatives(self):
        """Derivatives above the degree vanish."""
        f = polynomial_datum([0.0, 1.0])
        np.testing.assert_allclose(f.derivative((0, 0), 0.0, np.array([[0.3, 0.7]])), 0.0)
