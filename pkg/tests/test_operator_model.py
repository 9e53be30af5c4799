"""
Tests for utils/operator_model.py
"""

from dataclasses import replace

import numpy as np
import pytest

from utils.coefficients import (
    CoefficientField,
    constant_matrix,
    constant_scalar,
    linear_drift,
    log_drift,
    ou_drift,
)
from utils.config_loader import build_operator
from utils.errors import DomainError, InsufficientDerivativeData
from utils.grid import GridFunction
from utils.operator_model import (
    SAMPLED_LABEL,
    OperatorSpec,
    SamplingWindow,
    apply_operator,
    check_hypotheses,
    check_lp_preservation,
    parse_profile,
    reevaluate_witness,
    sample_quantities,
)

SMALL_WINDOW = SamplingWindow(radius=4.0, time_samples=4, space_samples=17, inference_radius=2.0)


class TestOperatorSpec:
    """Tests for operator construction."""

    def test_wrong_arity_rejected(self):
        """A vector field cannot serve as the diffusion matrix."""
        with pytest.raises(DomainError):
            OperatorSpec(1, (0.0, 1.0), ou_drift(), ou_drift(), constant_scalar(0.0))

    def test_empty_interval_rejected(self):
        """The time interval must be non-degenerate."""
        with pytest.raises(DomainError):
            OperatorSpec(1, (1.0, 1.0), constant_matrix(1.0), ou_drift(), constant_scalar(0.0))

    def test_with_params(self):
        """Declared constants merge."""
        spec = OperatorSpec(1, (0.0, 1.0), constant_matrix(1.0), ou_drift(), constant_scalar(0.0),
                            declared_params={"nu0": 1.0})
        assert spec.with_params(r0=-1.0).declared_params == {"nu0": 1.0, "r0": -1.0}

    def test_window_rejects_bad_radius(self):
        """The sampling radius must be finite and positive."""
        with pytest.raises(DomainError):
            SamplingWindow(radius=float("inf"))


class TestProfiles:
    """Tests for profile parsing."""

    def test_parse_with_k(self):
        """k follows the profile name."""
        assert parse_profile("H3.1(2)") == ("H3.1", 2, None)

    def test_parse_sub_item(self):
        """Sub-item selectors are kept."""
        assert parse_profile("H1.1(iv)") == ("H1.1", 0, "(iv)")
        assert parse_profile("H4.2(1)(iii)") == ("H4.2", 1, "(iii)")

    def test_missing_k(self):
        """Profiles indexed by k require it."""
        with pytest.raises(DomainError):
            parse_profile("H3.1")

    def test_unknown_profile(self):
        """Unknown names are rejected."""
        with pytest.raises(DomainError):
            check_hypotheses(build_operator({"preset": "ou"}), "H9.9", SMALL_WINDOW)


class TestCheckHypotheses:
    """Tests for sampled hypothesis checks."""

    def test_ou_basic_hypotheses(self):
        """OU satisfies the standing hypotheses with a quadratic Lyapunov function."""
        report = check_hypotheses(build_operator({"preset": "ou"}), "H1.1", SMALL_WINDOW)
        assert report.satisfied
        assert report.label == SAMPLED_LABEL
        assert report.constants["lambda"] == pytest.approx(2.0)

    def test_missing_lyapunov_not_checkable(self):
        """Without phi the Lyapunov item cannot be checked."""
        report = check_hypotheses(build_operator({"preset": "cubic_repulsive"}), "H1.1", SMALL_WINDOW)
        assert report.verdicts["H1.1(iv)"].status == "not-checkable"
        assert not report.satisfied

    def test_ou_reduced_dissipativity(self):
        """OU has r0 = -1 and no growth of Q."""
        report = check_hypotheses(build_operator({"preset": "ou"}), "H4.2(1)", SMALL_WINDOW)
        assert report.satisfied
        assert report.constants["r0"] == pytest.approx(-1.0)
        assert report.constants["C"] == pytest.approx(0.0)

    def test_repulsive_drift_violation_has_witness(self):
        """r0 inferred on the inference box is exceeded at the window edge."""
        spec = build_operator({"preset": "cubic_repulsive"})
        report = check_hypotheses(spec, "H4.2(1)", SMALL_WINDOW)
        key = "H4.2(1)(iii).r0"
        verdict = report.verdicts[key]
        assert verdict.status == "violated"
        assert abs(verdict.witness["x"][0]) == pytest.approx(4.0)
        assert key in report.violations
        assert "r0" in report.inferred

    def test_witness_reevaluates(self):
        """Re-evaluating at the witness reproduces the slack."""
        spec = build_operator({"preset": "cubic_repulsive"})
        report = check_hypotheses(spec, "H4.2(1)", SMALL_WINDOW)
        key = "H4.2(1)(iii).r0"
        assert reevaluate_witness(spec, report, key) == pytest.approx(report.verdicts[key].worst_slack)

    def test_declared_constant_used(self):
        """A declared r0 too small is violated everywhere."""
        spec = build_operator({"preset": "ou"}).with_params(r0=-2.0)
        report = check_hypotheses(spec, "H4.2(1)(iii)", SMALL_WINDOW)
        assert report.verdicts["H4.2(1)(iii).r0"].status == "violated"
        assert "r0" not in report.inferred

    def test_missing_derivatives(self):
        """H4.1(3) needs third derivatives of b."""
        spec = OperatorSpec(1, (0.0, 1.0), constant_matrix(1.0), log_drift(), constant_scalar(0.0))
        with pytest.raises(InsufficientDerivativeData) as excinfo:
            check_hypotheses(spec, "H4.1(3)", SMALL_WINDOW)
        assert "D_x0x0x0 b" in excinfo.value.missing

    def test_dissipative_lyapunov(self):
        """OU with phi = 1 + x^2 gives A phi + 2 phi = 4."""
        report = check_hypotheses(build_operator({"preset": "ou"}), "H5.1", SMALL_WINDOW)
        assert report.satisfied
        assert report.constants["a2"] == pytest.approx(2.0)
        assert report.constants["a1"] == pytest.approx(4.0)

    def test_report_serializes(self):
        """to_dict carries the window and verdicts."""
        data = check_hypotheses(build_operator({"preset": "ou"}), "H1.1", SMALL_WINDOW).to_dict()
        assert data["window"]["radius"] == 4.0
        assert set(data["verdicts"]) >= {"H1.1(ii).ellipticity", "H1.1(iii)"}

    def test_indefinite_diffusion(self):
        """Q = [[1, 2], [2, 1]] has eigenvalue -1 and fails ellipticity."""
        spec = OperatorSpec(2, (0.0, 1.0), constant_matrix([[1.0, 2.0], [2.0, 1.0]]), ou_drift(d=2),
                            constant_scalar(0.0, d=2))
        window = SamplingWindow(radius=1.0, time_samples=2, space_samples=5)
        report = check_hypotheses(spec, "H1.1(ii)", window)
        verdict = report.verdicts["H1.1(ii).ellipticity"]
        assert verdict.status == "violated"
        assert verdict.worst_slack == pytest.approx(-1.0)
        assert report.constants["nu0_sampled"] == pytest.approx(-1.0)
        assert report.verdicts["H1.1(ii).symmetry"].satisfied


class TestWindowMonotonicity:
    """Enlarging the sampling window keeps every violation."""

    @staticmethod
    def _late_potential(spec):
        # c vanishes on |x| <= 5 and equals 1 from |x| = 6 on
        c = CoefficientField("c", "scalar", 1, lambda t, x: np.clip(np.abs(x[0]) - 5.0, 0.0, 1.0))
        return replace(spec, c=c)

    def test_enlarged_windows_nest(self):
        """Enlarging keeps the spacing."""
        window = SamplingWindow(radius=10.0, time_samples=2, space_samples=41)
        big = window.enlarged(4)
        assert big.radius == 40.0
        assert 2 * big.radius / (big.space_samples - 1) == pytest.approx(2 * window.radius / (window.space_samples - 1))

    def test_late_growth_stays_violated(self):
        """c0 inferred on the inference box stays 0 however far the window reaches."""
        spec = self._late_potential(build_operator({"preset": "ou"}))
        window = SamplingWindow(radius=10.0, time_samples=2, space_samples=41)
        for factor in (1, 2, 4):
            report = check_hypotheses(spec, "H1.1(iii)", window.enlarged(factor))
            assert report.verdicts["H1.1(iii)"].status == "violated"
            assert report.constants["c0"] == pytest.approx(0.0)

    def test_window_inside_inference_box(self):
        """A window within the inference box cannot violate an inferred constant."""
        spec = self._late_potential(build_operator({"preset": "ou"}))
        report = check_hypotheses(spec, "H1.1(iii)", SamplingWindow(radius=4.0, time_samples=2, space_samples=17))
        assert report.verdicts["H1.1(iii)"].satisfied

    def test_repulsive_drift_stays_violated(self):
        """The r0 violation of x^3 survives every enlargement."""
        spec = build_operator({"preset": "cubic_repulsive"})
        for factor in (1, 2, 3):
            report = check_hypotheses(spec, "H4.2(1)", SMALL_WINDOW.enlarged(factor))
            assert report.verdicts["H4.2(1)(iii).r0"].status == "violated"

    def test_declared_violation_survives(self):
        """A declared constant violated on a window is violated on its enlargements."""
        spec = build_operator({"preset": "ou"}).with_params(c0=-0.5)
        for factor in (1, 3):
            report = check_hypotheses(spec, "H1.1(iii)", SMALL_WINDOW.enlarged(factor))
            assert report.verdicts["H1.1(iii)"].worst_slack == pytest.approx(-0.5)


class TestLpPreservation:
    """Tests for the L^p(R^d) preservation conditions."""

    def test_ou(self):
        """OU: div beta = -1 is bounded below, |beta|^2 = x^2 is not bounded by nu."""
        report = check_lp_preservation(build_operator({"preset": "ou"}), SMALL_WINDOW)
        assert report.verdicts["Lp(a)"].satisfied
        assert report.constants["K0"] == pytest.approx(1.0)
        assert report.verdicts["Lp(b)"].status == "violated"

    def test_zero_drift(self):
        """b = 0 and q = 1 give beta = 0, so K0 = K1 = 0."""
        spec = OperatorSpec(1, (0.0, 1.0), constant_matrix(1.0), linear_drift(0.0), constant_scalar(0.0))
        report = check_lp_preservation(spec, SMALL_WINDOW)
        assert report.satisfied
        assert report.constants["K0"] == 0.0
        assert report.constants["K1"] == 0.0

    def test_superlinear_drift(self):
        """b = -x|x| has div beta = -2|x|, unbounded below, so (a) fails past the inference box."""
        spec = build_operator({"preset": "polynomial_eps1"})
        window = SamplingWindow(radius=10.0, time_samples=2, space_samples=41)
        report = check_lp_preservation(spec, window)
        assert report.verdicts["Lp(a)"].status == "violated"
        assert report.constants["K0"] == pytest.approx(10.0)
        assert report.verdicts["Lp(b)"].status == "violated"


class TestApplyOperator:
    """Tests for the discrete operator."""

    def test_ou_on_quadratic(self):
        """A x^2 = 2 - 2 x^2 for OU, exactly for second-order stencils."""
        spec = build_operator({"preset": "ou"})
        u = GridFunction.sample(lambda X: X[0] ** 2, 1, 2.0, 41)
        out = apply_operator(spec, u, 0.0)
        np.testing.assert_allclose(out.values, 2.0 - 2.0 * u.coordinates()[0] ** 2, atol=1e-9)
        assert out.flagged[0] and out.flagged[-1] and not out.flagged[20]

    def test_heat_on_sine(self):
        """The second difference of sin x at h = 0.01 is -sin x to 1e-4."""
        spec = build_operator({"preset": "heat"})
        u = GridFunction.sample(lambda X: np.sin(X[0]), 1, 2.0, 401)
        out = apply_operator(spec, u, 0.0)
        interior = ~out.flagged
        err = np.abs(out.values - (-np.sin(u.coordinates()[0])))
        assert np.max(err[interior]) <= 1e-4

    def test_linearity(self):
        """A(2u - 3v) = 2 Au - 3 Av."""
        spec = build_operator({"preset": "ou"})
        u = GridFunction.sample(lambda X: np.sin(X[0]), 1, 2.0, 81)
        v = GridFunction.sample(lambda X: X[0] ** 2, 1, 2.0, 81)
        combined = apply_operator(spec, u.with_values(2.0 * u.values - 3.0 * v.values), 0.3)
        expected = 2.0 * apply_operator(spec, u, 0.3).values - 3.0 * apply_operator(spec, v, 0.3).values
        np.testing.assert_allclose(combined.values, expected, rtol=0.0, atol=1e-10)

    def test_constant_annihilated(self):
        """With c = 0 constants are mapped to 0."""
        spec = build_operator({"preset": "ou"})
        u = GridFunction.sample(lambda X: np.ones_like(X[0]), 1, 2.0, 41)
        np.testing.assert_allclose(apply_operator(spec, u, 0.0).values, 0.0, atol=1e-12)

    def test_dimension_mismatch(self):
        """A 2-D grid with a 1-D operator is rejected."""
        spec = build_operator({"preset": "ou"})
        u = GridFunction.sample(lambda X: X[0], 2, 1.0, 5)
        with pytest.raises(DomainError):
            apply_operator(spec, u, 0.0)


class TestSampleQuantities:
    """Tests for flattened window samples."""

    def test_ou_samples(self):
        """nu = Lambda = 1, r0 = -1, c = 0."""
        samples = sample_quantities(build_operator({"preset": "ou"}), SMALL_WINDOW)
        np.testing.assert_allclose(samples["nu"], 1.0)
        np.testing.assert_allclose(samples["Lambda"], 1.0)
        np.testing.assert_allclose(samples["r0"], -1.0)
        np.testing.assert_allclose(samples["c"], 0.0)
