"""
Functional inequalities and asymptotics against a tight evolution system of measures.

Every check integrates by composite trapezoid on the density grid of the
MeasureFamily. Evolved data come from the exhaustion solver, or from the
closed-form OU action when an ``oracle`` is supplied.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.coefficients import CoefficientField
from utils.constants import (
    ALREADY_CONVERGED_NORM,
    DECAY_MIN_ELAPSED,
    DEFAULT_ULTRA_DELTA,
    DIVERGENCE_GROWTH,
    DRIFT_ALPHA_LOWER,
    DRIFT_ALPHA_UPPER,
    DRIFT_GAMMA_MARGIN,
    DRIFT_GROWTH_RADIUS,
    DRIFT_GROWTH_SAMPLES,
    HYPER_FACTORS,
    HYPER_SUBTHRESHOLD_FACTOR,
    MIN_DECAY_SAMPLES,
    TOL_ESTIMATE,
    ZERO_SET_THRESHOLD,
)
from utils.errors import DomainError
from utils.evolution_solver import Exhaustion, SchemeParams, evolution_operator
from utils.explicit_constants import hypercontractivity_entry, log_sobolev_entry, poincare_constant
from utils.grid import GridFunction, first_derivative
from utils.measure_flow import Datum, MeasureFamily
from utils.operator_model import OperatorSpec, SamplingWindow, sample_quantities
from utils.reference_oracles import OUSpec1D, ou_evolution
from utils.reports import EstimateReport, fit_line, jsonable

logger = logging.getLogger(__name__)


def _values(f: Datum, X: np.ndarray) -> np.ndarray:
    if isinstance(f, CoefficientField):
        return f(0.0, X)
    return np.asarray(f(X), dtype=float)


def _gradient(f: Datum, rho: GridFunction) -> np.ndarray:
    """Registered first derivatives when available, central differences otherwise."""
    X = rho.coordinates()
    if isinstance(f, CoefficientField) and all(f.has_derivative((i,)) for i in range(rho.d)):
        return np.stack([f.derivative((i,), 0.0, X) for i in range(rho.d)])
    values = _values(f, X)
    return np.stack([first_derivative(values, rho.h, i) for i in range(rho.d)])


def _mean(rho: GridFunction, values: np.ndarray) -> float:
    return rho.integral(weights=values)


def _lp(rho: GridFunction, values: np.ndarray, p: float) -> float:
    return _mean(rho, np.abs(values) ** p) ** (1.0 / p)


def functional_constants(spec: OperatorSpec, window: Optional[SamplingWindow] = None) -> Dict[str, float]:
    """Lambda0 = sup lambda_max(Q), nu0 = inf nu and r0 = sup lambda_max(sym Jac b) on the window."""
    samples = sample_quantities(spec, window)
    return {"Lambda0": float(np.max(samples["Lambda"])), "nu0": float(np.min(samples["nu"])),
            "r0": float(np.max(samples["r0"]))}


# ======================================================================
# log-Sobolev and Poincare
# ======================================================================

def check_log_sobolev(measures: MeasureFamily, f: Datum, s: float, p: float,
                      Lambda0: float, r0: float, tol: float = TOL_ESTIMATE) -> EstimateReport:
    """
    Entropy of |f|^p under mu_s against C_p int |f|^{p-2} |grad f|^2 1_{f != 0} d mu_s.
    """
    if p < 2.0:
        raise DomainError("the log-Sobolev check needs p >= 2")
    entry = log_sobolev_entry(p, Lambda0, r0)
    rho = measures.density_at(s)
    values = _values(f, rho.coordinates())
    magnitude = np.abs(values)
    support = magnitude >= ZERO_SET_THRESHOLD
    power = np.where(support, magnitude, 1.0) ** p
    mass = _mean(rho, np.where(support, power, 0.0))
    if mass == 0.0:
        return EstimateReport("log-sobolev", 0.0, tol, constants={"C_p": entry.value, "lhs": 0.0, "rhs": 0.0},
                              provenance={"measures": measures.provenance}, tags=["degenerate: f = 0"])

    entropy = _mean(rho, np.where(support, power * np.log(power), 0.0)) - mass * math.log(mass)
    grad_sq = np.sum(_gradient(f, rho) ** 2, axis=0)
    dirichlet = _mean(rho, np.where(support, np.where(support, magnitude, 1.0) ** (p - 2.0) * grad_sq, 0.0))
    rhs = entry.value * dirichlet
    return EstimateReport("log-sobolev", rhs - entropy, tol * max(1.0, abs(rhs)),
                          constants={"C_p": entry.value, "lhs": entropy, "rhs": rhs, "p": p,
                                     "formula": entry.to_dict()},
                          provenance={"measures": measures.provenance})


def check_poincare(measures: MeasureFamily, f: Datum, s: float, Lambda0: float, r0: float,
                   tol: float = TOL_ESTIMATE) -> EstimateReport:
    """
    ||f - mean||_{L^2(mu_s)}^2 <= (C_2 / 2) ||grad f||_{L^2(mu_s)}^2.

    This is the squared form: the factor C_2 / 2 multiplies ||grad f||^2, not
    ||grad f||. lhs and rhs are the square roots of both sides, ||f - mean|| and
    sqrt(C_2 / 2) ||grad f||, so the margin has the sign of the squared inequality.
    """
    factor = poincare_constant(Lambda0, r0)
    rho = measures.density_at(s)
    values = _values(f, rho.coordinates())
    mean = _mean(rho, values)
    lhs = _lp(rho, values - mean, 2.0)
    rhs = math.sqrt(factor) * _lp(rho, np.sqrt(np.sum(_gradient(f, rho) ** 2, axis=0)), 2.0)
    return EstimateReport("poincare", rhs - lhs, tol * max(1.0, rhs),
                          constants={"factor": factor, "lhs": lhs, "rhs": rhs, "mean": mean},
                          provenance={"measures": measures.provenance})


# ======================================================================
# evolved data against mu_t
# ======================================================================

@dataclass
class _Evolved:
    values: List[np.ndarray]
    gradients: List[np.ndarray]
    provenance: str
    resolution: Dict[str, Any] = field(default_factory=dict)
    tags: List[str] = field(default_factory=list)


def _oracle_datum(f: Datum):
    if isinstance(f, CoefficientField):
        return f
    return lambda y: np.asarray(f(np.asarray(y, dtype=float)[None]), dtype=float)


def _evolve(spec: OperatorSpec, measures: MeasureFamily, f: Datum, s: float, times: Sequence[float],
            exhaustion: Optional[Exhaustion], params: Optional[SchemeParams],
            oracle: Optional[OUSpec1D], with_gradients: bool = False) -> _Evolved:
    """G(t,s)f (and its gradient) on the density grid of mu_t for each t."""
    grids = [measures.density_at(t) for t in times]
    if oracle is not None:
        datum = _oracle_datum(f)
        values = [ou_evolution(oracle, datum, s, t, rho.coordinates()[0]) for t, rho in zip(times, grids)]
        gradients = [first_derivative(v, rho.h, 0)[None] for v, rho in zip(values, grids)] if with_gradients else []
        return _Evolved(values, gradients, "ou-closed-form")

    params = replace(params or SchemeParams(), snapshot_times=tuple(times))
    result = evolution_operator(spec, f, s, max(times), exhaustion, params)
    values, gradients = [], []
    for t, rho in zip(times, grids):
        snap = result.snapshot_at(t)
        values.append(snap.interpolator()(rho.coordinates()))
        if with_gradients:
            parts = [snap.with_values(first_derivative(snap.values, snap.h, i)).interpolator()(rho.coordinates())
                     for i in range(snap.d)]
            gradients.append(np.stack(parts))
    tags = [] if result.converged else ["exhaustion not converged"]
    return _Evolved(values, gradients, "exhaustion-solver", result.metadata(), tags)


# ======================================================================
# hypercontractivity
# ======================================================================

def hypercontractivity_times(s: float, threshold: float) -> List[float]:
    """Times at which check_hypercontractivity evaluates; the measures must contain them."""
    factors = sorted((HYPER_SUBTHRESHOLD_FACTOR,) + tuple(HYPER_FACTORS))
    return [s] + [s + factor * threshold for factor in factors]


def check_hypercontractivity(spec: OperatorSpec, measures: MeasureFamily, f: Datum, s: float,
                             p: float, q: float, Lambda0: float, nu0: float, r0: float,
                             exhaustion: Optional[Exhaustion] = None, params: Optional[SchemeParams] = None,
                             oracle: Optional[OUSpec1D] = None, tol: float = TOL_ESTIMATE) -> EstimateReport:
    """
    ||G(t,s)f||_{L^q(mu_t)} <= ||f||_{L^p(mu_s)} at and beyond the threshold.

    The ratio at half the threshold is recorded without pass/fail meaning.
    """
    entry = hypercontractivity_entry(p, q, Lambda0, nu0, r0)
    threshold = entry.value
    times = hypercontractivity_times(s, threshold)[1:]
    rho_s = measures.density_at(s)
    base = _lp(rho_s, _values(f, rho_s.coordinates()), p)
    evolved = _evolve(spec, measures, f, s, times, exhaustion, params, oracle)
    norms = [_lp(measures.density_at(t), u, q) for t, u in zip(times, evolved.values)]
    ratios = [n / base if base > 0 else 0.0 for n in norms]

    checked = {}
    sub_ratio = None
    for t, ratio in zip(times, ratios):
        factor = (t - s) / threshold
        if math.isclose(factor, HYPER_SUBTHRESHOLD_FACTOR, rel_tol=1e-9):
            sub_ratio = ratio
        else:
            checked[f"{factor:g}"] = ratio
    worst = min(1.0 - r for r in checked.values())
    curve = {"t": times, "norm": norms}
    return EstimateReport("hypercontractivity", worst, tol,
                          constants={"threshold": threshold, "p": p, "q": q, "f_norm": base,
                                     "ratios": checked, "subthreshold_ratio": sub_ratio, "curve": curve,
                                     "formula": entry.to_dict()},
                          provenance={"measures": measures.provenance, "evolution": evolved.provenance},
                          resolution=evolved.resolution, tags=evolved.tags)


def hypercontractivity_frame(report: EstimateReport) -> pd.DataFrame:
    """(t, norm) curve of a hypercontractivity report."""
    return pd.DataFrame(report.constants["curve"])


# ======================================================================
# super- and ultra- probes
# ======================================================================

@dataclass
class SupercontractivityReport:
    lambdas: List[float]
    sup_norms: List[float]
    divergent: List[bool]
    verdict: str
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({"lambdas": self.lambdas, "sup_norms": self.sup_norms, "divergent": self.divergent,
                          "verdict": self.verdict, "notes": self.notes})


def _ball_moment(rho: GridFunction, lam: float, radius: float) -> float:
    X = rho.coordinates()
    r2 = np.sum(X**2, axis=0)
    with np.errstate(over="ignore", invalid="ignore"):
        weight = np.where(r2 <= radius**2 + 1e-12, np.exp(lam * r2), 0.0)
        value = rho.integral(weights=weight)
    return value if np.isfinite(value) else math.inf


def supercontractivity_probe(measures: MeasureFamily, lambdas: Sequence[float]) -> SupercontractivityReport:
    """
    sup_t ||exp(lam |x|^2)||_{L^1(mu_t)} for each lam.

    An integral counts as divergent when doubling the ball radius (half box
    to full box) raises it by more than DIVERGENCE_GROWTH. Divergence at one
    lam is carried to every larger lam.
    """
    lambdas = sorted(float(lam) for lam in lambdas)
    if not lambdas or lambdas[0] <= 0:
        raise DomainError("lambdas must be positive")
    box = measures.densities[0].half_width
    sups, divergent = [], []
    carried = False
    for lam in lambdas:
        full = [_ball_moment(rho, lam, box) for rho in measures.densities]
        half = [_ball_moment(rho, lam, 0.5 * box) for rho in measures.densities]
        grows = any(not math.isfinite(a) or a > (1.0 + DIVERGENCE_GROWTH) * b for a, b in zip(full, half))
        carried = carried or grows
        sups.append(max(full))
        divergent.append(carried)
    verdict = "not supercontractive on evidence" if any(divergent) else "consistent with supercontractivity"
    note = (f"divergence heuristic: doubling the radius from {0.5 * box:g} to {box:g} "
            f"raises the integral by more than {DIVERGENCE_GROWTH:.0%}")
    return SupercontractivityReport(lambdas, sups, divergent, verdict, [note])


@dataclass
class UltraboundednessReport:
    lam: float
    delta: float
    times: List[float]
    sup_values: List[float]
    sup_half: List[float]
    verdict: str
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({"lambda": self.lam, "delta": self.delta, "times": self.times,
                          "sup_values": self.sup_values, "sup_half_core": self.sup_half,
                          "verdict": self.verdict, "notes": self.notes})


def ultraboundedness_probe(spec: OperatorSpec, lam: float, s: float, t_list: Sequence[float],
                           delta: float = DEFAULT_ULTRA_DELTA, exhaustion: Optional[Exhaustion] = None,
                           params: Optional[SchemeParams] = None) -> UltraboundednessReport:
    """
    sup_x G(t,s) exp(lam |x|^2) over the core region for t - s >= delta.

    Bounded on evidence when the sup over the core exceeds the sup over the
    half core by at most DIVERGENCE_GROWTH at every tested time.
    """
    if not lam > 0 or not delta > 0:
        raise DomainError("lam and delta must be positive")
    times = sorted(float(t) for t in t_list if t - s >= delta)
    if not times:
        raise DomainError(f"no time with t - s >= {delta}")

    def weight(X: np.ndarray) -> np.ndarray:
        return np.exp(lam * np.sum(X**2, axis=0))

    params = replace(params or SchemeParams(), snapshot_times=tuple(times))
    result = evolution_operator(spec, weight, s, times[-1], exhaustion, params)
    sups, halves = [], []
    for t in times:
        snap = result.snapshot_at(t)
        sups.append(snap.sup_norm(core=False))
        halves.append(snap.restrict(0.5 * snap.half_width).sup_norm(core=False))
    bounded = all(a <= (1.0 + DIVERGENCE_GROWTH) * b for a, b in zip(sups, halves))
    verdict = "bounded on evidence" if bounded else "unbounded on evidence"
    notes = [f"sup recorded for t - s >= delta = {delta:g}; the uniform bound is stated for any delta > 0"]
    if not result.converged:
        notes.append("exhaustion not converged")
    return UltraboundednessReport(lam, delta, times, sups, halves, verdict, notes)


# ======================================================================
# drift growth
# ======================================================================

@dataclass
class DriftGrowthVerdict:
    conclusion: str
    gamma: float
    alpha: float
    K: Optional[float]
    radii: Tuple[float, float]
    residuals: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({"conclusion": self.conclusion, "gamma": self.gamma, "alpha": self.alpha,
                          "K": self.K, "radii": list(self.radii), "residuals": self.residuals,
                          "notes": self.notes})


def _directions(d: int) -> np.ndarray:
    dirs = [np.eye(d)[i] for i in range(d)]
    if d > 1:
        dirs.append(np.ones(d) / math.sqrt(d))
    dirs += [-u for u in dirs]
    return np.stack(dirs, axis=1)


def classify_drift_growth(spec: OperatorSpec, window: Optional[SamplingWindow] = None) -> DriftGrowthVerdict:
    """
    Match sup_t <b(t,x), x> against -K|x|^gamma (gamma > 2), -K|x|^2 (log|x|)^alpha
    (alpha > 1) and -K|x|^2 log|x| on the last decade of |x| in [e, R].
    """
    window = window or SamplingWindow(radius=DRIFT_GROWTH_RADIUS)
    R = window.radius
    if R <= math.e:
        raise DomainError("the drift-growth window needs radius > e")
    lo = max(math.e, R / 10.0)
    radii = np.geomspace(lo, R, DRIFT_GROWTH_SAMPLES)
    dirs = _directions(spec.d)
    X = dirs[:, :, None] * radii[None, None, :]
    inner = np.full(radii.shape, -np.inf)
    for t in window.times(spec):
        inner = np.maximum(inner, np.max(np.sum(spec.b(t, X) * X, axis=0), axis=0))

    if np.any(inner >= 0):
        return DriftGrowthVerdict("none", math.nan, math.nan, None, (lo, R),
                                  notes=["<b(t,x), x> is not negative on the window"])
    log_r = np.log(radii)
    power = fit_line(log_r, np.log(-inner))
    logs = fit_line(np.log(log_r), np.log(-inner / radii**2))
    gamma, alpha = power["slope"], logs["slope"]
    residuals = {"power": power["residual"], "log": logs["residual"]}

    if gamma > 2.0 + DRIFT_GAMMA_MARGIN:
        conclusion, K = "ultracontractive-sufficient", float(np.min(-inner / radii**gamma))
    elif alpha >= DRIFT_ALPHA_UPPER:
        conclusion, K = "ultrabounded-sufficient", float(np.min(-inner / (radii**2 * log_r**alpha)))
    elif alpha >= DRIFT_ALPHA_LOWER:
        conclusion, K = "supercontractive-sufficient", float(np.min(-inner / (radii**2 * log_r)))
    else:
        conclusion, K = "none", None
    logger.info("Drift growth: gamma=%.3f alpha=%.3f -> %s", gamma, alpha, conclusion)
    return DriftGrowthVerdict(conclusion, gamma, alpha, K, (lo, R), residuals)


# ======================================================================
# decay rates
# ======================================================================

@dataclass
class DecayEstimate:
    """Exponential decay of ||G(t,s)f - mean||_p and ||grad G(t,s)f||_p in t - s."""
    p: float
    slope: float
    gradient_slope: float
    residual: float
    gradient_residual: float
    elapsed: List[float]
    norms: List[float]
    gradient_norms: List[float]
    M: float
    N: float
    tags: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.elapsed) < MIN_DECAY_SAMPLES:
            raise DomainError(f"decay estimates need at least {MIN_DECAY_SAMPLES} samples")
        if not (math.isfinite(self.slope) and math.isfinite(self.gradient_slope)):
            raise DomainError("decay slopes must be finite")

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({"p": self.p, "slope": self.slope, "gradient_slope": self.gradient_slope,
                          "residual": self.residual, "gradient_residual": self.gradient_residual,
                          "elapsed": self.elapsed, "norms": self.norms, "gradient_norms": self.gradient_norms,
                          "M": self.M, "N": self.N, "tags": self.tags, "notes": self.notes})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"elapsed": self.elapsed, "norm": self.norms, "gradient_norm": self.gradient_norms})


def estimate_decay(spec: OperatorSpec, measures: MeasureFamily, f: Datum, s: float, p: float,
                   times: Sequence[float], exhaustion: Optional[Exhaustion] = None,
                   params: Optional[SchemeParams] = None, oracle: Optional[OUSpec1D] = None) -> DecayEstimate:
    """
    Fit log-norms of the centred evolution and of its gradient against t - s.

    Only times with t - s >= 1 enter the fit; at least five are required and
    they must span a factor of ten in t - s.
    """
    if p < 1.0:
        raise DomainError("p must be at least 1")
    times = sorted(float(t) for t in times if t - s >= DECAY_MIN_ELAPSED)
    if len(times) < MIN_DECAY_SAMPLES:
        raise DomainError(f"need {MIN_DECAY_SAMPLES} times with t - s >= {DECAY_MIN_ELAPSED}")
    if (times[-1] - s) < 10.0 * (times[0] - s):
        raise DomainError("decay times must span a decade in t - s")

    rho_s = measures.density_at(s)
    initial = _values(f, rho_s.coordinates())
    mean = _mean(rho_s, initial)
    if _lp(rho_s, initial - mean, p) < ALREADY_CONVERGED_NORM:
        raise DomainError("already converged: f equals its mean")

    evolved = _evolve(spec, measures, f, s, times, exhaustion, params, oracle, with_gradients=True)
    norms, grad_norms = [], []
    for t, u, g in zip(times, evolved.values, evolved.gradients):
        rho = measures.density_at(t)
        norms.append(_lp(rho, u - mean, p))
        grad_norms.append(_lp(rho, np.sqrt(np.sum(g**2, axis=0)), p))
    if norms[0] < ALREADY_CONVERGED_NORM:
        raise DomainError("already converged at the first sample")

    elapsed = [t - s for t in times]
    fit = fit_line(elapsed, np.log(norms))
    grad_fit = fit_line(elapsed, np.log(np.maximum(grad_norms, 1e-300)))
    notes = []
    if p == 1.0:
        notes.append("p = 1: decay rates need not be independent of p here; read the slope with care")
    return DecayEstimate(p, fit["slope"], grad_fit["slope"], fit["residual"], grad_fit["residual"],
                         elapsed, norms, grad_norms, math.exp(fit["intercept"]), math.exp(grad_fit["intercept"]),
                         tags=evolved.tags + [evolved.provenance], notes=notes)
