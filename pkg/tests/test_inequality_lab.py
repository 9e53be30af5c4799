"""
Tests for utils/inequality_lab.py
"""

import math

import pytest

from utils.coefficients import exponential_datum, polynomial_datum
from utils.config_loader import build_operator
from utils.errors import DomainError
from utils.inequality_lab import (
    check_hypercontractivity,
    check_log_sobolev,
    check_poincare,
    classify_drift_growth,
    estimate_decay,
    functional_constants,
    hypercontractivity_frame,
    hypercontractivity_times,
    supercontractivity_probe,
)
from utils.measure_flow import compute_measures
from utils.operator_model import SamplingWindow
from utils.reference_oracles import OUSpec1D

SMALL_WINDOW = SamplingWindow(radius=4, time_samples=4, space_samples=17)


@pytest.fixture(scope="module")
def standard_normal(ou_spec):
    return compute_measures(ou_spec, [0.0])


class TestFunctionalConstants:
    """Tests for Lambda0, nu0 and r0."""

    def test_ou(self, ou_spec):
        """Q = 1 and Jac b = -1."""
        consts = functional_constants(ou_spec, SMALL_WINDOW)
        assert consts == pytest.approx({"Lambda0": 1.0, "nu0": 1.0, "r0": -1.0})


class TestLogSobolevPoincare:
    """Tests against N(0, 1)."""

    def test_log_sobolev_holds(self, standard_normal):
        """Ent(f^2) <= 2 E|f'|^2."""
        report = check_log_sobolev(standard_normal, polynomial_datum([1.0, 0.3]), 0.0, 2.0, 1.0, -1.0)
        assert report.constants["C_p"] == pytest.approx(2.0)
        assert report.passed
        assert report.constants["lhs"] > 0

    def test_log_sobolev_extremal(self, standard_normal):
        """e^{x/2} turns the Gaussian log-Sobolev inequality into an equality."""
        report = check_log_sobolev(standard_normal, exponential_datum(0.5), 0.0, 2.0, 1.0, -1.0)
        assert report.constants["lhs"] == pytest.approx(0.5 * math.exp(0.5), rel=1e-6)
        assert abs(report.constants["rhs"] - report.constants["lhs"]) <= 1e-6
        assert report.passed

    def test_log_sobolev_needs_p_two(self, standard_normal):
        """p < 2 is outside the inequality."""
        with pytest.raises(DomainError):
            check_log_sobolev(standard_normal, polynomial_datum([1.0, 0.3]), 0.0, 1.5, 1.0, -1.0)

    def test_poincare_equality_on_linear(self, standard_normal):
        """f = x attains the Gaussian Poincare constant."""
        report = check_poincare(standard_normal, polynomial_datum([0.0, 1.0]), 0.0, 1.0, -1.0)
        assert report.constants["factor"] == pytest.approx(1.0)
        assert report.constants["lhs"] == pytest.approx(1.0, abs=1e-6)
        assert report.constants["rhs"] == pytest.approx(1.0, abs=1e-6)
        assert report.passed

    def test_poincare_factor_multiplies_squared_gradient(self, standard_normal):
        """Lambda0 = 2 gives factor 2 and rhs = sqrt(2) ||f'|| for f = x."""
        report = check_poincare(standard_normal, polynomial_datum([0.0, 1.0]), 0.0, 2.0, -1.0)
        assert report.constants["factor"] == pytest.approx(2.0)
        assert report.constants["rhs"] == pytest.approx(math.sqrt(2.0), abs=1e-6)
        assert report.worst_margin == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-6)


class TestHypercontractivity:
    """Tests for the closed-form OU route."""

    def test_holds_from_threshold(self, ou_spec):
        """Threshold log(3) / 2 for p = 2, q = 4."""
        threshold = math.log(3.0) / 2.0
        measures = compute_measures(ou_spec, hypercontractivity_times(0.0, threshold))
        report = check_hypercontractivity(ou_spec, measures, polynomial_datum([1.0, 0.5]), 0.0, 2.0, 4.0,
                                          1.0, 1.0, -1.0, oracle=OUSpec1D.with_constant_rates())
        assert report.constants["threshold"] == pytest.approx(threshold)
        assert report.passed
        assert set(report.constants["ratios"]) == {"1", "1.5", "2"}
        assert list(hypercontractivity_frame(report).columns) == ["t", "norm"]


class TestSupercontractivity:
    """Tests for exponential-square moments."""

    def test_gaussian_moments(self, standard_normal):
        """exp(0.1 x^2) is integrable under N(0, 1); exp(x^2) is not."""
        report = supercontractivity_probe(standard_normal, [1.0, 0.1])
        assert report.lambdas == [0.1, 1.0]
        assert report.divergent == [False, True]
        assert report.verdict == "not supercontractive on evidence"

    def test_positive_lambdas(self, standard_normal):
        """Non-positive lambdas are rejected."""
        with pytest.raises(DomainError):
            supercontractivity_probe(standard_normal, [0.0])


class TestDriftGrowth:
    """Tests for the growth classifier."""

    def test_linear_drift(self, ou_spec):
        """<b, x> = -|x|^2 supports none of the conclusions."""
        assert classify_drift_growth(ou_spec).conclusion == "none"

    def test_cubic_drift(self):
        """<b, x> = -|x|^4 has gamma = 4."""
        verdict = classify_drift_growth(build_operator({"preset": "cubic_well"}))
        assert verdict.conclusion == "ultracontractive-sufficient"
        assert verdict.gamma == pytest.approx(4.0, abs=1e-6)
        assert verdict.K == pytest.approx(1.0, rel=1e-6)

    def test_small_window(self, ou_spec):
        """The window must reach past e."""
        with pytest.raises(DomainError):
            classify_drift_growth(ou_spec, SamplingWindow(radius=2.0))


class TestDecay:
    """Tests for decay-rate fitting."""

    TIMES = [1.0, 2.5, 4.0, 7.0, 10.0]

    def test_ou_linear_datum(self, ou_spec):
        """G(t,s)x = e^{-(t-s)} x decays with slope -1."""
        measures = compute_measures(ou_spec, [0.0] + self.TIMES)
        estimate = estimate_decay(ou_spec, measures, polynomial_datum([0.0, 1.0]), 0.0, 2.0, self.TIMES,
                                  oracle=OUSpec1D.with_constant_rates())
        assert estimate.slope == pytest.approx(-1.0, abs=1e-6)
        assert estimate.gradient_slope == pytest.approx(-1.0, abs=1e-3)
        assert list(estimate.to_frame().columns) == ["elapsed", "norm", "gradient_norm"]

    def test_constant_datum(self, ou_spec):
        """A constant is already at its mean."""
        measures = compute_measures(ou_spec, [0.0] + self.TIMES)
        with pytest.raises(DomainError):
            estimate_decay(ou_spec, measures, lambda X: 0.0 * X[0] + 2.0, 0.0, 2.0, self.TIMES,
                           oracle=OUSpec1D.with_constant_rates())

    def test_needs_a_decade(self, ou_spec, standard_normal):
        """Times must span a factor of ten in t - s."""
        with pytest.raises(DomainError):
            estimate_decay(ou_spec, standard_normal, polynomial_datum([0.0, 1.0]), 0.0, 2.0,
                           [1.0, 2.0, 3.0, 4.0, 5.0])
