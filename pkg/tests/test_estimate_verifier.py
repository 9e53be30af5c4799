"""
Tests for utils/estimate_verifier.py
"""

import numpy as np
import pytest

from utils.coefficients import mollified_step, polynomial_datum, tanh_datum
from utils.errors import DomainError, GridTooCoarse, UnsupportedOperation
from utils.estimate_verifier import (
    constant_inputs,
    derivative_norm,
    extract_derivatives,
    verify_composition,
    verify_gradient_estimate,
    verify_pointwise,
    verify_smoothing_rate,
)
from utils.grid import GridFunction
from utils.operator_model import SamplingWindow, check_hypotheses

SMALL_WINDOW = SamplingWindow(radius=4, time_samples=4, space_samples=17)


def _cubic() -> GridFunction:
    return GridFunction.sample_with_spacing(lambda X: X[0] ** 3, 1, 2.0, 0.01, core_margin=5)


class TestDerivatives:
    """Tests for finite-difference derivatives on the core region."""

    def test_first_derivative(self):
        """D x^3 = 3 x^2 up to O(h^2)."""
        parts = extract_derivatives(_cubic(), 1)
        g = parts[(0,)]
        core = g.restrict(g.core_radius)
        x = core.coordinates()[0]
        np.testing.assert_allclose(core.values, 3 * x**2, atol=1e-3)

    def test_margin_grows(self):
        """The derivative core shrinks by the stencil radius."""
        u = _cubic()
        assert extract_derivatives(u, 2)[(0, 0)].core_margin > u.core_margin

    def test_norm_order_zero(self):
        """Order zero is the absolute value."""
        u = _cubic()
        np.testing.assert_allclose(derivative_norm(u, 0).values, np.abs(u.values))

    def test_unsupported_order(self):
        """Only orders 1 to 3 are supported."""
        with pytest.raises(UnsupportedOperation):
            extract_derivatives(_cubic(), 4)

    def test_coarse_grid(self):
        """Too few core points for the stencil."""
        u = GridFunction.sample(lambda X: X[0], 1, 1.0, 9, core_margin=2)
        with pytest.raises(GridTooCoarse):
            extract_derivatives(u, 3)


class TestPreconditions:
    """Argument checks that run before any solve."""

    def test_order(self, ou_spec):
        """k beyond 3 is unsupported."""
        with pytest.raises(UnsupportedOperation):
            verify_pointwise(ou_spec, tanh_datum(), 0.0, 1.0, 4, 2.0)

    def test_small_p(self, ou_spec):
        """p < 1 is unsupported."""
        with pytest.raises(UnsupportedOperation, match="p <= 1 unsupported"):
            verify_pointwise(ou_spec, tanh_datum(), 0.0, 1.0, 1, 0.5)

    def test_p_one_needs_plain_variant(self, ou_spec):
        """p = 1 exists only for the plain estimate."""
        with pytest.raises(UnsupportedOperation):
            verify_pointwise(ou_spec, tanh_datum(), 0.0, 1.0, 1, 1.0, variant="aaaa")

    def test_time_order(self, ou_spec):
        """t must exceed s."""
        with pytest.raises(DomainError):
            verify_pointwise(ou_spec, tanh_datum(), 1.0, 1.0, 1, 2.0)

    def test_composition_orders(self, ou_spec):
        """The chain needs h < k."""
        with pytest.raises(DomainError):
            verify_composition(ou_spec, tanh_datum(), 0.0, 1.0, 2.0, h=2, k=2)

    def test_rate_samples(self, ou_spec):
        """At least four times are fitted."""
        with pytest.raises(DomainError):
            verify_smoothing_rate(ou_spec, tanh_datum(), 0.0, 0, 1, [0.1, 0.2, 0.4])

    def test_rate_times(self, ou_spec):
        """Times must lie in (0, 1]."""
        with pytest.raises(DomainError):
            verify_smoothing_rate(ou_spec, tanh_datum(), 0.0, 0, 1, [0.1, 0.2, 0.4, 2.0])

    def test_rate_orders(self, ou_spec):
        """m must not be below h."""
        with pytest.raises(DomainError):
            verify_smoothing_rate(ou_spec, tanh_datum(), 0.0, 2, 1, [0.1, 0.2, 0.4, 0.8])


class TestConstantInputs:
    """Tests for constants read off a hypothesis report."""

    def test_ou(self, ou_spec):
        """The OU drift gives r0 = -1 and nu0 = 1."""
        report = check_hypotheses(ou_spec, "H4.2(1)", SMALL_WINDOW)
        inputs = constant_inputs(ou_spec, report, 2.0, 1, SMALL_WINDOW)
        assert inputs.d == 1
        assert inputs.r0 == pytest.approx(-1.0)
        assert inputs.nu0 == pytest.approx(1.0)


class TestPointwiseEstimates:
    """Bernstein estimates against the solver on the OU operator."""

    def test_linear_datum_is_sharp(self, ou_spec):
        """f = x gives |D G f|^2 = e^{-2} on both sides at t - s = 1."""
        report = verify_pointwise(ou_spec, polynomial_datum([0.0, 1.0]), 0.0, 1.0, 1, 2.0)
        assert report.passed
        gap = np.abs(report.rhs.values - report.lhs.values)
        assert float(np.max(gap)) <= 1e-4
        np.testing.assert_allclose(report.lhs.values, np.exp(-2.0), atol=1e-4)

    def test_tanh_first_order(self, ou_spec):
        """The k = 1, p = 2 estimate holds for tanh."""
        report = verify_pointwise(ou_spec, tanh_datum(), 0.0, 1.0, 1, 2.0)
        assert report.passed
        assert report.estimate == "aa(1,2)"
        assert report.constants["gamma"] > 0

    def test_gradient_estimate(self, ou_spec):
        """|grad G f|^2 <= e^{2 sigma r} G |grad f|^2 for tanh."""
        report = verify_gradient_estimate(ou_spec, tanh_datum(), 0.0, 1.0, 2.0)
        assert report.estimate == "poi-es(2)"
        assert report.passed
        assert "entry" in report.constants

    def test_composition(self, ou_spec, desk_scheme, desk_exhaustion):
        """Two one-order gains chain into the (1 -> 3) estimate."""
        report = verify_composition(ou_spec, tanh_datum(), 0.0, 1.0, 2.0, h=1, k=3,
                                    exhaustion=desk_exhaustion, params=desk_scheme)
        assert len(report.parts) == 2
        assert report.implication_holds
        assert report.to_dict()["implication_holds"] is True


class TestSmoothingRates:
    """Log-log slopes of ||D^m G f|| for a step-like datum."""

    TIMES = [0.05, 0.1, 0.2, 0.4]

    @pytest.mark.parametrize("m, tol", [(1, 0.1), (2, 0.15)])
    def test_heat(self, heat_spec, m, tol):
        """The heat semigroup gains half an order per unit of log tau."""
        report = verify_smoothing_rate(heat_spec, mollified_step(), 0.0, 0, m, self.TIMES)
        assert report.predicted == pytest.approx(-m / 2.0)
        assert report.deviation <= tol

    @pytest.mark.parametrize("m, tol", [(1, 0.1), (2, 0.15)])
    def test_ou_on_heat_clock(self, ou_spec, m, tol):
        """Dividing out the OU contraction recovers the heat slope."""
        report = verify_smoothing_rate(ou_spec, mollified_step(), 0.0, 0, m, self.TIMES, time_change=True)
        assert "heat clock" in report.tags
        assert report.deviation <= tol

    def test_ou_short_times(self, ou_spec):
        """Without the clock change, short times keep the m = 2 slope in tolerance."""
        report = verify_smoothing_rate(ou_spec, mollified_step(), 0.0, 0, 2, [0.025, 0.05, 0.1, 0.2])
        assert "heat clock" not in report.tags
        assert report.deviation <= 0.15
