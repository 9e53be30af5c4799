"""
Tight evolution systems of measures {mu_t}.

Analytic path: the Gaussian family of a 1-D OU operator. Numeric path:
forward Fokker-Planck burn-in

    d rho / dt = sum_ij D_ij (q_ij rho) - div(b rho)

from two Gaussian seeds, accepted once the two solutions have forgotten
their initial data in L^1. The flux is exponentially fitted
(Scharfetter-Gummel) with zero flux through the box boundary, so mass is
conserved and densities stay non-negative.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import solve_banded

from utils.coefficients import CoefficientField
from utils.constants import (
    BURNIN_RETRIES,
    BURNIN_SEED_WIDTHS,
    DEFAULT_TOL_FORGET,
    MASS_TOLERANCE,
    TOL_INVARIANCE_ANALYTIC,
    TOL_INVARIANCE_BURNIN,
)
from utils.errors import DomainError, TightnessError, UnsupportedOperation
from utils.evolution_solver import Exhaustion, SchemeParams, evolution_operator
from utils.grid import GridFunction
from utils.operator_model import OperatorSpec
from utils.reference_oracles import GaussianDensity, OUSpec1D, ou_tight_measure
from utils.reports import EstimateReport

logger = logging.getLogger(__name__)

Datum = Union[CoefficientField, Callable[[np.ndarray], np.ndarray]]

ANALYTIC = "analytic-gaussian"
BURNIN = "fokker-planck-burnin"

DEFAULT_MEASURE_RADIUS = 10.0
DEFAULT_MEASURE_H = 0.02
DEFAULT_BURNIN_DT = 1e-3
DEFAULT_BURNIN_LENGTH = 10.0
TAIL_TRUNCATION_RATIO = 1e-8


def _values(f: Datum, X: np.ndarray) -> np.ndarray:
    if isinstance(f, CoefficientField):
        return f(0.0, X)
    return np.asarray(f(X), dtype=float)


@dataclass
class MeasureFamily:
    """Densities rho(t, .) on a common box, one per time of ``t_grid``."""
    t_grid: Tuple[float, ...]
    densities: Tuple[GridFunction, ...]
    provenance: str
    burnin: Dict[str, Any] = field(default_factory=dict)
    gaussians: Optional[Tuple[GaussianDensity, ...]] = None
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.t_grid) != len(self.densities):
            raise DomainError("one density per time required")
        for t, rho in zip(self.t_grid, self.densities):
            if np.min(rho.values) < 0:
                raise DomainError(f"negative density at t={t}")
            if abs(rho.integral() - 1.0) > MASS_TOLERANCE:
                raise DomainError(f"density at t={t} has mass {rho.integral():.8f}")

    def index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(np.asarray(self.t_grid) - t)))
        if abs(self.t_grid[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not on the measure time grid")
        return idx

    def density_at(self, t: float) -> GridFunction:
        return self.densities[self.index(t)]

    def integrate(self, f: Datum, t: float) -> float:
        """int f d mu_t by composite trapezoid on the density grid."""
        rho = self.density_at(t)
        return rho.integral(weights=_values(f, rho.coordinates()))

    def lp_norm(self, f: Datum, t: float, p: float) -> float:
        rho = self.density_at(t)
        return rho.integral(weights=np.abs(_values(f, rho.coordinates())) ** p) ** (1.0 / p)

    def to_dict(self) -> Dict[str, Any]:
        first = self.densities[0]
        return {"t_grid": list(self.t_grid), "provenance": self.provenance, "burnin": self.burnin,
                "half_width": first.half_width, "n": first.n, "notes": list(self.notes)}


# ======================================================================
# construction
# ======================================================================

def _require_zero_potential(spec: OperatorSpec, grid: GridFunction, t_grid: Sequence[float]) -> None:
    X = grid.coordinates()
    for t in (t_grid[0], t_grid[-1]):
        if np.max(np.abs(spec.c(t, X))) > 0:
            raise DomainError("evolution systems of measures are computed for c = 0 only")


def compute_measures(spec: OperatorSpec, t_grid: Sequence[float], method: str = "analytic",
                     s0: Optional[float] = None, tol_forget: float = DEFAULT_TOL_FORGET,
                     radius: float = DEFAULT_MEASURE_RADIUS, h: float = DEFAULT_MEASURE_H,
                     dt: float = DEFAULT_BURNIN_DT) -> MeasureFamily:
    """
    Tight evolution system of measures on ``t_grid``.

    Args:
        spec: Operator with c = 0
        t_grid: Increasing times
        method: "analytic" (1-D OU only) or "burnin"
        s0: Burn-in start (default: first time minus 10)
        tol_forget: L^1 gap between the two seeds accepted at the first time

    Raises:
        TightnessError: when the seeds do not forget their initial data
    """
    t_grid = tuple(sorted(float(t) for t in t_grid))
    if not t_grid:
        raise DomainError("empty time grid")
    probe = GridFunction.sample_with_spacing(lambda X: np.zeros(X.shape[1:]), spec.d, radius, h, core_margin=0)
    _require_zero_potential(spec, probe, t_grid)
    if method == "analytic":
        return _analytic_family(spec, t_grid, probe)
    if method == "burnin":
        return _burnin_family(spec, t_grid, probe, s0, tol_forget, dt)
    raise DomainError(f"unknown measure method {method!r}")


def _analytic_family(spec: OperatorSpec, t_grid: Tuple[float, ...], probe: GridFunction) -> MeasureFamily:
    ou = OUSpec1D.from_operator(spec)
    X = probe.coordinates()
    for t in (t_grid[0], t_grid[-1]):
        a = ou.a(t)
        if not np.allclose(spec.b(t, X)[0], -a * X[0], rtol=1e-12, atol=1e-12):
            raise DomainError("analytic measures need a 1-D OU operator b(t,x) = -a(t) x")
    gaussians = tuple(ou_tight_measure(ou, t) for t in t_grid)
    widest = max(g.std for g in gaussians)
    if 8.0 * widest > probe.half_width:
        probe = GridFunction.sample_with_spacing(lambda Y: np.zeros(Y.shape[1:]), 1, 8.0 * widest,
                                                 probe.h, core_margin=0)
        X = probe.coordinates()
    densities = tuple(probe.with_values(g.pdf(X[0])) for g in gaussians)
    tail = max(g.tail_mass(probe.half_width) for g in gaussians)
    notes = [f"mass outside the box at most {tail:.3g}"]
    return MeasureFamily(t_grid, densities, ANALYTIC, gaussians=gaussians, notes=notes)


def _bernoulli(z: np.ndarray) -> np.ndarray:
    """B(z) = z / (e^z - 1), B(0) = 1."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z / 2.0, safe / np.expm1(safe))


class _FokkerPlanck:
    """Exponentially fitted zero-flux discretization, one axis at a time."""

    def __init__(self, spec: OperatorSpec, grid: GridFunction):
        if spec.d == 2:
            X = grid.coordinates()
            for t in spec.time_interval:
                Q = spec.Q(t, X)
                if np.max(np.abs(Q[0, 1])) > 0 or np.max(np.abs(Q[1, 0])) > 0:
                    raise UnsupportedOperation("burn-in supports diagonal diffusion only")
        self.spec = spec
        self.grid = grid
        self.h = grid.h
        axis = grid.axis
        self.mid = 0.5 * (axis[1:] + axis[:-1])

    def _axis_coefficients(self, t: float, axis: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower, diag, upper) of the flux divergence along ``axis``, lines along the last axis."""
        h = self.h
        X = self.grid.coordinates()
        n = X.shape[axis + 1]
        lo = np.take(X, np.arange(n - 1), axis=axis + 1)
        hi = np.take(X, np.arange(1, n), axis=axis + 1)
        b_mid = np.moveaxis(self.spec.b(t, 0.5 * (lo + hi))[axis], axis, -1)
        q_lines = np.moveaxis(self.spec.Q(t, X)[axis, axis], axis, -1)
        q_mid = 0.5 * (q_lines[..., 1:] + q_lines[..., :-1])
        # flux q rho' - (b - q') rho with q' by differences
        beta = b_mid - (q_lines[..., 1:] - q_lines[..., :-1]) / h
        P = beta * h / q_mid
        a = q_mid / h * _bernoulli(P)
        c = q_mid / h * _bernoulli(-P)
        lower = np.zeros_like(q_lines)
        diag = np.zeros_like(q_lines)
        upper = np.zeros_like(q_lines)
        upper[..., :-1] = a / h
        lower[..., 1:] = c / h
        diag[..., :-1] -= c / h
        diag[..., 1:] -= a / h
        return lower, diag, upper

    def step(self, rho: np.ndarray, t: float, dt: float) -> np.ndarray:
        """One implicit Euler step per axis; the matrices are M-matrices, so tails stay accurate."""
        for axis in range(self.spec.d):
            lines = np.moveaxis(rho, axis, -1)
            shape = lines.shape
            lo, di, up = (x.reshape(-1, shape[-1]) for x in self._axis_coefficients(t + dt, axis))
            ab = np.zeros((3, lines.size))
            ab[0, 1:] = (-dt * up).ravel()[:-1]
            ab[1] = (1.0 - dt * di).ravel()
            ab[2, :-1] = (-dt * lo).ravel()[1:]
            solved = solve_banded((1, 1), ab, lines.ravel()).reshape(shape)
            rho = np.moveaxis(solved, -1, axis)
        return rho


def _normalize(grid: GridFunction, rho: np.ndarray) -> np.ndarray:
    rho = np.maximum(rho, 0.0)
    return rho / grid.with_values(rho).integral()


def _seed(grid: GridFunction, width: float) -> np.ndarray:
    X = grid.coordinates()
    return _normalize(grid, np.exp(-np.sum(X**2, axis=0) / (2.0 * width**2)))


def _burnin_family(spec: OperatorSpec, t_grid: Tuple[float, ...], grid: GridFunction,
                   s0: Optional[float], tol_forget: float, dt: float) -> MeasureFamily:
    fp = _FokkerPlanck(spec, grid)
    start = t_grid[0] - DEFAULT_BURNIN_LENGTH if s0 is None else float(s0)
    if not start < t_grid[0]:
        raise DomainError("burn-in must start before the first time of the grid")
    for attempt in range(BURNIN_RETRIES + 1):
        seeds = [_seed(grid, w) for w in BURNIN_SEED_WIDTHS]
        gaps: List[float] = []
        t = start
        steps = max(1, int(math.ceil((t_grid[0] - start) / dt)))
        tau = (t_grid[0] - start) / steps
        for _ in range(steps):
            seeds = [_normalize(grid, fp.step(rho, t, tau)) for rho in seeds]
            t += tau
            gaps.append(grid.with_values(np.abs(seeds[0] - seeds[1])).integral())
        gap = gaps[-1]
        logger.info("Burn-in from s0=%.3g: L1 gap %.3g at t=%.3g", start, gap, t_grid[0])
        if gap <= tol_forget:
            break
        if attempt == BURNIN_RETRIES:
            raise TightnessError("tight system not resolved; extend burn-in")
        start = t_grid[0] - 2.0 * (t_grid[0] - start)

    monotone = bool(np.all(np.diff(gaps) <= 1e-12 + 1e-9 * np.asarray(gaps[:-1])))
    if not monotone:
        logger.warning("L1 gap between burn-in seeds is not monotone")
    rho = seeds[0]
    densities = [grid.with_values(rho)]
    t = t_grid[0]
    for target in t_grid[1:]:
        steps = max(1, int(math.ceil((target - t) / dt)))
        tau = (target - t) / steps
        for _ in range(steps):
            rho = _normalize(grid, fp.step(rho, t, tau))
            t += tau
        t = target
        densities.append(grid.with_values(rho))
    burnin = {"s0": start, "forgetting_gap": gap, "tol_forget": tol_forget, "attempts": attempt + 1,
              "gap_monotone": monotone, "dt": dt}
    notes = ["uniqueness of the tight system is assumed, not proven, for this operator"]
    return MeasureFamily(t_grid, tuple(densities), BURNIN, burnin=burnin, notes=notes)


# ======================================================================
# checks
# ======================================================================

def check_invariance(spec: OperatorSpec, measures: MeasureFamily, f: Datum, s: float, t: float,
                     exhaustion: Optional[Exhaustion] = None, params: Optional[SchemeParams] = None,
                     tol: Optional[float] = None) -> EstimateReport:
    """Compare int G(t,s)f d mu_t with int f d mu_s."""
    if not s < t:
        raise DomainError("need s < t")
    if tol is None:
        tol = TOL_INVARIANCE_ANALYTIC if measures.provenance == ANALYTIC else TOL_INVARIANCE_BURNIN
    rho_t = measures.density_at(t)
    rho_s = measures.density_at(s)
    result = evolution_operator(spec, f, s, t, exhaustion, params)
    u = result.final.interpolator()(rho_t.coordinates())
    lhs = rho_t.integral(weights=u)
    rhs = measures.integrate(f, s)

    tags = [] if result.converged else ["exhaustion not converged"]
    edge = _edge_weight(rho_s, f)
    if edge > TAIL_TRUNCATION_RATIO:
        logger.warning("tail truncation dominates: |f| rho at the box edge is %.3g of its maximum", edge)
        tags.append("tail truncation dominates")
    return EstimateReport("invariance", -abs(lhs - rhs), tol,
                          constants={"lhs": lhs, "rhs": rhs},
                          provenance={"measures": measures.provenance},
                          resolution=result.metadata(), tags=tags)


def _edge_weight(rho: GridFunction, f: Datum) -> float:
    weighted = np.abs(_values(f, rho.coordinates())) * rho.values
    peak = float(np.max(weighted))
    if peak == 0.0:
        return 0.0
    boundary = np.zeros(weighted.shape, dtype=bool)
    for axis in range(rho.d):
        edge = [slice(None)] * rho.d
        edge[axis] = [0, -1]
        boundary[tuple(edge)] = True
    return float(np.max(weighted[boundary])) / peak


@dataclass
class TightnessReport:
    radii: List[float]
    sup_tail: List[float]
    per_time: List[List[float]]
    epsilon: Optional[float] = None
    tight_radius: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"radii": self.radii, "sup_tail": self.sup_tail, "per_time": self.per_time,
                "epsilon": self.epsilon, "tight_radius": self.tight_radius}


def _tail_mass(measures: MeasureFamily, idx: int, radius: float) -> float:
    if radius <= 0:
        return 1.0
    if measures.gaussians is not None:
        return measures.gaussians[idx].tail_mass(radius)
    rho = measures.densities[idx]
    inside = np.sqrt(np.sum(rho.coordinates() ** 2, axis=0)) <= radius
    return max(0.0, 1.0 - rho.integral(weights=inside.astype(float)))


def check_tightness(measures: MeasureFamily, radii: Sequence[float],
                    epsilon: Optional[float] = None) -> TightnessReport:
    """sup over the time grid of mu_t(|x| > R) for each radius."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise DomainError("radii must increase")
    box = measures.densities[0].half_width
    if radii and radii[-1] > box:
        raise DomainError(f"radius {radii[-1]} exceeds the density box {box}")
    per_time = [[_tail_mass(measures, i, r) for i in range(len(measures.t_grid))] for r in radii]
    sup_tail = [max(row) for row in per_time]
    tight_radius = None
    if epsilon is not None:
        tight_radius = next((r for r, tail in zip(radii, sup_tail) if tail <= epsilon), None)
    return TightnessReport(radii, sup_tail, per_time, epsilon, tight_radius)


def average_and_norms(measures: MeasureFamily, f: Datum, s: float, p: float) -> Tuple[float, float]:
    """(mean of f under mu_s, ||f||_{L^p(mu_s)})."""
    if not p >= 1.0:
        raise DomainError("p must be at least 1")
    return measures.integrate(f, s), measures.lp_norm(f, s, p)
