"""
Tests for utils/measure_flow.py
"""

import numpy as np
import pytest

from utils.coefficients import polynomial_datum
from utils.config_loader import build_operator
from utils.errors import DomainError
from utils.measure_flow import (
    ANALYTIC,
    BURNIN,
    average_and_norms,
    check_invariance,
    check_tightness,
    compute_measures,
)


@pytest.fixture(scope="module")
def ou_measures(ou_spec):
    return compute_measures(ou_spec, [0.0, 1.0, 2.0])


class TestAnalytic:
    """Tests for the closed-form OU system."""

    def test_unit_mass(self, ou_measures):
        """Every density integrates to one."""
        assert ou_measures.provenance == ANALYTIC
        for rho in ou_measures.densities:
            assert rho.integral() == pytest.approx(1.0, abs=1e-6)

    def test_second_moment(self, ou_measures):
        """mu_t = N(0, 1) for q = a = 1."""
        assert ou_measures.integrate(lambda X: X[0] ** 2, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_average_and_norms(self, ou_measures):
        """Mean 0 and L^2 norm 1 for f = x."""
        mean, norm = average_and_norms(ou_measures, lambda X: X[0], 0.0, 2.0)
        assert mean == pytest.approx(0.0, abs=1e-10)
        assert norm == pytest.approx(1.0, abs=1e-6)

    def test_unknown_time(self, ou_measures):
        """Only times of the grid are available."""
        with pytest.raises(DomainError):
            ou_measures.density_at(0.5)

    def test_non_ou_rejected(self):
        """The closed form needs a linear drift."""
        with pytest.raises(DomainError):
            compute_measures(build_operator({"preset": "cubic_well"}), [0.0])

    def test_unknown_method(self, ou_spec):
        """Only analytic and burnin exist."""
        with pytest.raises(DomainError):
            compute_measures(ou_spec, [0.0], method="monte-carlo")


class TestBurnin:
    """Tests for the Fokker-Planck burn-in."""

    def test_matches_gaussian(self, ou_spec):
        """The discrete steady state is close to N(0, 1)."""
        measures = compute_measures(ou_spec, [0.0, 1.0], method="burnin", radius=8.0, h=0.05, dt=0.01)
        assert measures.provenance == BURNIN
        assert measures.burnin["forgetting_gap"] <= 1e-4
        assert measures.integrate(lambda X: X[0] ** 2, 1.0) == pytest.approx(1.0, abs=1e-2)

    def test_quartic_well(self, config):
        """The cubic well settles on e^{-x^4/4} up to 1e-3 in L^1."""
        spec = build_operator({"preset": "cubic_well"}, config)
        measures = compute_measures(spec, [10.0, 11.0], method="burnin", radius=5.0)
        rho = measures.density_at(10.0)
        target = np.exp(-rho.coordinates()[0] ** 4 / 4.0)
        target /= rho.with_values(target).integral()
        distance = rho.with_values(np.abs(rho.values - target)).integral()
        assert distance <= 1e-3


class TestTightness:
    """Tests for uniform tail bounds."""

    def test_tail_masses(self, ou_measures):
        """mu(|x| > 1) is about 0.3173 and radius 3 meets epsilon = 0.01."""
        report = check_tightness(ou_measures, [1.0, 2.0, 3.0], epsilon=0.01)
        assert report.sup_tail[0] == pytest.approx(0.3173, abs=1e-4)
        assert report.tight_radius == 3.0

    def test_radii_increase(self, ou_measures):
        """Radii must be strictly increasing."""
        with pytest.raises(DomainError):
            check_tightness(ou_measures, [2.0, 1.0])

    def test_radius_inside_box(self, ou_measures):
        """Radii beyond the density box are rejected."""
        with pytest.raises(DomainError):
            check_tightness(ou_measures, [1.0, 50.0])


class TestInvariance:
    """Tests for the invariance check arguments."""

    def test_order(self, ou_spec, ou_measures):
        """s must precede t."""
        with pytest.raises(DomainError):
            check_invariance(ou_spec, ou_measures, lambda X: X[0], 1.0, 1.0)

    def test_ou_cubic_family(self, ou_spec, ou_measures):
        """int G(1,0)f d mu_1 = int f d mu_0 for twenty random cubics."""
        rng = np.random.default_rng(7)
        for coefficients in rng.uniform(-1.0, 1.0, size=(20, 4)):
            report = check_invariance(ou_spec, ou_measures, polynomial_datum(coefficients), 0.0, 1.0, tol=1e-5)
            assert report.passed, (coefficients, report.worst_margin)
