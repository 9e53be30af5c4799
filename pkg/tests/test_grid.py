"""
Tests for utils/grid.py
"""

import numpy as np
import pytest

from utils.errors import DomainError, GridTooCoarse
from utils.grid import (
    GridFunction,
    default_core_margin,
    first_derivative,
    multi_indices,
    multiplicity,
    nodes_for_spacing,
    partial_derivative,
    second_derivative,
    tensor_norm_squared,
    third_derivative,
)


class TestGridFunction:
    """Tests for construction and geometry."""

    def test_sample_one_dimensional(self):
        """Sampling x^2 on [-2, 2] with 5 points."""
        g = GridFunction.sample(lambda X: X[0] ** 2, 1, 2.0, 5, core_margin=0)
        assert g.d == 1
        assert g.h == pytest.approx(1.0)
        np.testing.assert_allclose(g.values, [4.0, 1.0, 0.0, 1.0, 4.0])

    def test_sample_two_dimensional(self):
        """Coordinates are ij-indexed."""
        g = GridFunction.sample(lambda X: X[0] + 10 * X[1], 2, 1.0, 5)
        assert g.values.shape == (5, 5)
        assert g.values[0, -1] == pytest.approx(-1.0 + 10.0)

    def test_too_coarse(self):
        """Fewer than five points per axis is rejected."""
        with pytest.raises(GridTooCoarse):
            GridFunction(1.0, 3, np.zeros(3))

    def test_non_finite_rejected(self):
        """NaN values are rejected."""
        with pytest.raises(DomainError):
            GridFunction(1.0, 5, np.array([0.0, 1.0, np.nan, 1.0, 0.0]))

    def test_values_read_only(self):
        """Stored values cannot be mutated."""
        g = GridFunction.sample(lambda X: X[0], 1, 1.0, 5)
        with pytest.raises(ValueError):
            g.values[0] = 3.0

    def test_spacing_snaps_half_width(self):
        """Half-width snaps to the requested spacing."""
        g = GridFunction.sample_with_spacing(lambda X: X[0], 1, 1.0, 0.1)
        assert g.n == nodes_for_spacing(1.0, 0.1) == 21
        assert g.h == pytest.approx(0.1)

    def test_core_region(self):
        """Core excludes the outer margin cells."""
        g = GridFunction.sample(lambda X: X[0], 1, 1.0, 21, core_margin=2)
        assert g.core_values().size == 17
        assert g.core_radius == pytest.approx(0.8)

    def test_default_core_margin(self):
        """A fifth of the half-width in cells."""
        assert default_core_margin(101, 0.2) == 10

    def test_sup_norm_core(self):
        """Sup over the core ignores boundary spikes."""
        values = np.zeros(21)
        values[0] = 5.0
        g = GridFunction(1.0, 21, values, core_margin=2)
        assert g.sup_norm(core=True) == 0.0
        assert g.sup_norm(core=False) == 5.0

    def test_integral_trapezoid(self):
        """Trapezoid integral of x^2 on [-1, 1]."""
        g = GridFunction.sample(lambda X: X[0] ** 2, 1, 1.0, 401)
        assert g.integral() == pytest.approx(2.0 / 3.0, abs=1e-5)

    def test_restrict(self):
        """Restriction keeps the nodes inside the radius."""
        g = GridFunction.sample(lambda X: X[0], 1, 2.0, 41)
        r = g.restrict(1.0)
        assert r.half_width == pytest.approx(1.0)
        assert r.n == 21
        assert r.values[0] == pytest.approx(-1.0)

    def test_interpolator_held_beyond_box(self):
        """Outside the box the interpolant takes the boundary value."""
        g = GridFunction.sample(lambda X: X[0], 1, 1.0, 11)
        evaluate = g.interpolator()
        out = evaluate(np.array([[0.05, 3.0, -3.0]]))
        np.testing.assert_allclose(out, [0.05, 1.0, -1.0])


class TestStencils:
    """Tests for finite-difference stencils."""

    def test_first_derivative_quadratic_exact(self):
        """Second-order stencils are exact on quadratics."""
        x = np.linspace(-1, 1, 21)
        np.testing.assert_allclose(first_derivative(x**2, x[1] - x[0], 0), 2 * x, atol=1e-12)

    def test_second_derivative_cubic_exact(self):
        """Second derivative of x^3 is 6x, including the ends."""
        x = np.linspace(-1, 1, 21)
        np.testing.assert_allclose(second_derivative(x**3, x[1] - x[0], 0), 6 * x, atol=1e-9)

    def test_third_derivative_interior(self):
        """Third derivative of x^3 is 6 in the interior; outer nodes stay zero."""
        x = np.linspace(-1, 1, 21)
        out = third_derivative(x**3, x[1] - x[0], 0)
        np.testing.assert_allclose(out[2:-2], 6.0, atol=1e-8)
        assert out[0] == 0.0 and out[-1] == 0.0

    def test_mixed_partial(self):
        """d^2/dxdy of xy is 1."""
        g = GridFunction.sample(lambda X: X[0] * X[1], 2, 1.0, 11)
        out = partial_derivative(g.values, g.h, (0, 1))
        np.testing.assert_allclose(out, 1.0, atol=1e-12)

    def test_multi_indices(self):
        """Distinct second-order indices in two dimensions."""
        assert multi_indices(2, 2) == [(0, 0), (0, 1), (1, 1)]

    def test_multiplicity(self):
        """Ordered tuples per sorted index."""
        assert multiplicity((0, 1)) == 2
        assert multiplicity((0, 0, 1)) == 3
        assert multiplicity((0, 0)) == 1

    def test_tensor_norm(self):
        """Off-diagonal entries count twice in the Frobenius norm."""
        total = tensor_norm_squared({(0, 0): np.array(1.0), (0, 1): np.array(2.0), (1, 1): np.array(3.0)})
        assert float(total) == pytest.approx(1 + 2 * 4 + 9)
