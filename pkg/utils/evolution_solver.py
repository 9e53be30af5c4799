"""
Evolution operator G(t,s)f by domain exhaustion.

Each level solves the Cauchy-Dirichlet problem u_t = A u on the box
[-R, R]^d with u = 0 on the boundary, using the theta-scheme in time and
second-order central differences in space. One-dimensional steps are a
single banded solve; two-dimensional steps use Strang splitting of the
implicit x and y solves with the mixed derivative treated explicitly.
Levels grow until two consecutive solutions agree on the core region of
the smaller box.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve_banded

from utils.coefficients import CoefficientField
from utils.constants import (
    CORE_FRACTION,
    DEFAULT_DT,
    DEFAULT_H,
    DEFAULT_MAX_LEVELS,
    DEFAULT_R_START,
    DEFAULT_R_STEP,
    DEFAULT_THETA,
    MAX_CROSS_DIFFUSION_RATIO,
    MONOTONE_SLACK,
    STARTUP_HALF_STEPS,
    TOL_EXHAUST,
    TOL_LAW,
)
from utils.errors import DomainError, SolverBlowUp
from utils.grid import GridFunction, default_core_margin
from utils.operator_model import OperatorSpec
from utils.reports import EstimateReport

logger = logging.getLogger(__name__)

Datum = Union[CoefficientField, Callable[[np.ndarray], np.ndarray]]
Stencil = Tuple[np.ndarray, np.ndarray, np.ndarray]

BINARY_DTYPE_INT = "<i4"
BINARY_DTYPE_FLOAT = "<f8"


@dataclass(frozen=True)
class SchemeParams:
    """Time stepping parameters; ``h`` is only used when a datum is sampled by the solver."""
    theta: float = DEFAULT_THETA
    dt: float = DEFAULT_DT
    h: float = DEFAULT_H
    snapshot_times: Optional[Tuple[float, ...]] = None
    startup_half_steps: int = STARTUP_HALF_STEPS

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")
        if not (self.dt > 0 and self.h > 0):
            raise DomainError("dt and h must be positive")
        if self.startup_half_steps < 0:
            raise DomainError("startup_half_steps must be non-negative")
        if self.snapshot_times is not None:
            object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))


@dataclass(frozen=True)
class Exhaustion:
    """Boxes of half-width R_start, R_start + R_step, ... up to max_levels."""
    R_start: float = DEFAULT_R_START
    R_step: float = DEFAULT_R_STEP
    max_levels: int = DEFAULT_MAX_LEVELS
    tol_exhaust: float = TOL_EXHAUST
    core_fraction: float = CORE_FRACTION

    def __post_init__(self):
        if not (self.R_start > 0 and self.R_step > 0 and self.max_levels >= 1):
            raise DomainError("exhaustion needs R_start > 0, R_step > 0 and at least one level")
        if not 0.0 <= self.core_fraction < 1.0:
            raise DomainError("core fraction must lie in [0, 1)")


@dataclass
class EvolutionResult:
    """Snapshots of u(t, .) = G(t,s)f together with scheme metadata."""
    s: float
    t_grid: Tuple[float, ...]
    snapshots: Tuple[GridFunction, ...]
    domain_level: int
    theta: float
    dt: float
    h: float
    status: str = "complete"
    warnings: List[str] = field(default_factory=list)
    monotone_violation: Optional[float] = None
    level_differences: List[float] = field(default_factory=list)
    max_principle: bool = False

    def __post_init__(self):
        if len(self.t_grid) != len(self.snapshots):
            raise DomainError("one snapshot per time required")
        if self.t_grid[0] != self.s or np.any(np.diff(self.t_grid) <= 0):
            raise DomainError("time grid must start at s and increase")

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1]

    @property
    def converged(self) -> bool:
        return self.status in ("complete", "converged")

    def snapshot_at(self, t: float) -> GridFunction:
        idx = int(np.argmin(np.abs(np.asarray(self.t_grid) - t)))
        if abs(self.t_grid[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"no snapshot at t={t}")
        return self.snapshots[idx]

    def metadata(self) -> Dict[str, object]:
        return {
            "s": self.s,
            "t_grid": list(self.t_grid),
            "domain_level": self.domain_level,
            "half_width": self.final.half_width,
            "n": self.final.n,
            "theta": self.theta,
            "dt": self.dt,
            "h": self.h,
            "status": self.status,
            "warnings": list(self.warnings),
            "monotone_violation": self.monotone_violation,
            "level_differences": list(self.level_differences),
            "max_principle": self.max_principle,
        }


# ======================================================================
# spatial discretization
# ======================================================================

def _line_stencil(q: np.ndarray, b: np.ndarray, c: np.ndarray, h: float) -> Stencil:
    """Three-point coefficients of q D_xx + b D_x + c along the last axis."""
    lower = q / h**2 - b / (2.0 * h)
    diag = -2.0 * q / h**2 + c
    upper = q / h**2 + b / (2.0 * h)
    return lower, diag, upper


def _apply_lines(u: np.ndarray, stencil: Stencil) -> np.ndarray:
    lower, diag, upper = stencil
    out = np.zeros_like(u)
    out[..., 1:-1] = (lower[..., 1:-1] * u[..., :-2] + diag[..., 1:-1] * u[..., 1:-1]
                      + upper[..., 1:-1] * u[..., 2:])
    return out


def _implicit_lines(rhs: np.ndarray, stencil: Stencil, factor: float) -> np.ndarray:
    """Solve (I - factor L) v = rhs on every line, v = 0 at both ends, as one banded system."""
    lower, diag, upper = stencil
    m, n = rhs.shape
    main = 1.0 - factor * diag
    lo = -factor * lower
    up = -factor * upper
    for arr, edge in ((main, 1.0), (lo, 0.0), (up, 0.0)):
        arr[:, 0] = edge
        arr[:, -1] = edge
    rhs = rhs.copy()
    rhs[:, 0] = 0.0
    rhs[:, -1] = 0.0
    ab = np.zeros((3, m * n))
    ab[0, 1:] = up.ravel()[:-1]
    ab[1] = main.ravel()
    ab[2, :-1] = lo.ravel()[1:]
    return solve_banded((1, 1), ab, rhs.ravel()).reshape(m, n)


def _theta_lines(u: np.ndarray, now: Stencil, nxt: Stencil, dt: float, theta: float) -> np.ndarray:
    rhs = u + (1.0 - theta) * dt * _apply_lines(u, now) if theta < 1.0 else u
    return _implicit_lines(rhs, nxt, theta * dt)


def _mixed_term(u: np.ndarray, q12: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = 2.0 * q12[1:-1, 1:-1] * (
        u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4.0 * h**2)
    return out


class _Discretization:
    """Coefficient stencils of one operator on one grid, cached per time."""

    def __init__(self, spec: OperatorSpec, grid: GridFunction):
        self.spec = spec
        self.d = grid.d
        self.h = grid.h
        self.X = grid.coordinates()
        self._cache: Dict[float, Dict[str, object]] = {}

    def at(self, t: float) -> Dict[str, object]:
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            Q = self.spec.Q(t, self.X)
            b = self.spec.b(t, self.X)
            c = self.spec.c(t, self.X)
            if self.d == 1:
                entry = {"lines": _line_stencil(Q[0, 0][None], b[0][None], c[None], self.h)}
            else:
                half_c = 0.5 * c
                entry = {
                    # x-lines: transpose so the x axis is last
                    "x": _line_stencil(Q[0, 0].T, b[0].T, half_c.T, self.h),
                    "y": _line_stencil(Q[1, 1], b[1], half_c, self.h),
                    "q12": 0.5 * (Q[0, 1] + Q[1, 0]),
                }
            entry["Q"], entry["b"], entry["c"] = Q, b, c
            self._cache[key] = entry
        return self._cache[key]

    def step(self, u: np.ndarray, t: float, dt: float, theta: float) -> np.ndarray:
        if self.d == 1:
            return _theta_lines(u[None], self.at(t)["lines"], self.at(t + dt)["lines"], dt, theta)[0]
        mid = t + 0.5 * dt
        half = 0.5 * dt
        u = _theta_lines(u.T, self.at(t)["x"], self.at(mid)["x"], half, theta).T
        u = _theta_lines(u, self.at(t)["y"], self.at(mid)["y"], half, theta)
        u = u + dt * _mixed_term(u, self.at(mid)["q12"], self.h)
        u = _theta_lines(u, self.at(mid)["y"], self.at(t + dt)["y"], half, theta)
        u = _theta_lines(u.T, self.at(mid)["x"], self.at(t + dt)["x"], half, theta).T
        return u


def _scheme_warnings(disc: _Discretization, s: float, t_end: float, params: SchemeParams) -> Tuple[List[str], bool]:
    warnings = []
    peclet = 0.0
    diffusion_number = 0.0
    for t in (s, 0.5 * (s + t_end), t_end):
        coeffs = disc.at(t)
        Q, b = coeffs["Q"], coeffs["b"]
        for i in range(disc.d):
            q_ii = np.maximum(Q[i, i], 1e-300)
            peclet = max(peclet, float(np.max(np.abs(b[i]) * disc.h / (2.0 * q_ii))))
            diffusion_number = max(diffusion_number, float(np.max(Q[i, i])) * params.dt / disc.h**2)
        if disc.d == 2:
            ratio = np.abs(coeffs["q12"]) / np.sqrt(np.maximum(Q[0, 0] * Q[1, 1], 1e-300))
            if np.max(ratio) > MAX_CROSS_DIFFUSION_RATIO:
                raise DomainError(
                    f"off-diagonal diffusion too large for splitting: |q12| / sqrt(q11 q22) = {np.max(ratio):.3g}"
                    f" > {MAX_CROSS_DIFFUSION_RATIO}")
    if peclet > 1.0:
        warnings.append(f"Peclet number {peclet:.3g} > 1: central drift differences may oscillate")
    if params.theta == 0.5 and params.startup_half_steps == 0 and diffusion_number > 1.0:
        warnings.append(f"Crank-Nicolson with q dt / h^2 = {diffusion_number:.3g} > 1 and no implicit start-up")
    if params.theta < 0.5 and 2.0 * (1.0 - 2.0 * params.theta) * diffusion_number > 1.0:
        warnings.append(f"explicit stability limit exceeded (q dt / h^2 = {diffusion_number:.3g})")
    for message in warnings:
        logger.warning(message)
    cross_free = disc.d == 1 or all(float(np.max(np.abs(disc.at(t)["q12"]))) == 0.0 for t in (s, t_end))
    max_principle = params.theta == 1.0 and peclet <= 1.0 and cross_free
    if not max_principle:
        warnings.append("discrete maximum principle not guaranteed for this scheme")
    return warnings, max_principle


def _segments(s: float, t_end: float, snapshot_times: Optional[Sequence[float]]) -> List[float]:
    times = {s, t_end}
    for t in snapshot_times or ():
        if s < t < t_end:
            times.add(float(t))
        elif not s <= t <= t_end:
            raise DomainError(f"snapshot time {t} outside [{s}, {t_end}]")
    return sorted(times)


def solve_dirichlet(spec: OperatorSpec, f: GridFunction, s: float, t_end: float,
                    params: Optional[SchemeParams] = None) -> EvolutionResult:
    """
    Advance u_t = A u on f's box with homogeneous Dirichlet data.

    Args:
        spec: Operator
        f: Initial datum on the box (boundary values are replaced by 0)
        s: Initial time
        t_end: Final time (> s)
        params: Theta, time step and snapshot schedule

    Returns:
        EvolutionResult with a snapshot at s, each requested time and t_end

    Raises:
        SolverBlowUp: when a non-finite value is produced
    """
    params = params or SchemeParams()
    if not t_end > s:
        raise DomainError(f"t_end must exceed s, got s={s}, t_end={t_end}")
    if f.d != spec.d:
        raise DomainError(f"datum dimension {f.d} does not match operator dimension {spec.d}")
    disc = _Discretization(spec, f)
    warnings, max_principle = _scheme_warnings(disc, s, t_end, params)

    u = np.array(f.values, dtype=float)
    for axis in range(f.d):
        edge = [slice(None)] * f.d
        edge[axis] = [0, -1]
        u[tuple(edge)] = 0.0

    times = _segments(s, t_end, params.snapshot_times)
    snapshots = [f.with_values(u)]
    startup = params.startup_half_steps if params.theta < 1.0 else 0
    t = s
    for a, b in zip(times[:-1], times[1:]):
        steps = max(1, int(math.ceil((b - a) / params.dt - 1e-9)))
        dt = (b - a) / steps
        for _ in range(steps):
            if startup > 0:
                sub = dt / startup
                for _ in range(startup):
                    u = disc.step(u, t, sub, 1.0)
                    t += sub
                startup = 0
            else:
                u = disc.step(u, t, dt, params.theta)
                t += dt
            if not np.all(np.isfinite(u)):
                raise SolverBlowUp(t)
        t = b
        snapshots.append(f.with_values(u))
    return EvolutionResult(s, tuple(times), tuple(snapshots), 0, params.theta, params.dt, f.h,
                           "complete", warnings, max_principle=max_principle)


# ======================================================================
# domain exhaustion
# ======================================================================

def _sampler(f: Datum, s: float) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, CoefficientField):
        return lambda X: f(s, X)
    if isinstance(f, GridFunction):
        return f.interpolator()
    return f


def evolution_operator(spec: OperatorSpec, f: Datum, s: float, t_end: float,
                       exhaustion: Optional[Exhaustion] = None,
                       params: Optional[SchemeParams] = None) -> EvolutionResult:
    """
    G(t,s)f as the limit of Dirichlet solutions on growing boxes.

    ``f`` must be defined on all of R^d: a CoefficientField, a callable on
    coordinate arrays of shape (d, ...) or a GridFunction (held constant
    beyond its box). The returned snapshots are the final level restricted
    to its core region.

    For f >= 0 the limit is the minimal bounded solution; when bounded
    solutions are not unique this is the one returned.
    """
    exhaustion = exhaustion or Exhaustion()
    params = params or SchemeParams()
    sample = _sampler(f, s)
    previous: Optional[EvolutionResult] = None
    differences: List[float] = []
    violation: Optional[float] = None
    status = "exhaustion not converged"
    current = None
    for level in range(exhaustion.max_levels):
        R = exhaustion.R_start + level * exhaustion.R_step
        probe = GridFunction.sample_with_spacing(sample, spec.d, R, params.h, core_margin=0)
        grid = probe.with_values(probe.values, core_margin=default_core_margin(probe.n, exhaustion.core_fraction))
        current = solve_dirichlet(spec, grid, s, t_end, params)
        current.domain_level = level
        logger.info("Exhaustion level %d: R=%.3g, n=%d", level, grid.half_width, grid.n)
        if previous is not None:
            diff, gap = _compare_levels(previous, current)
            differences.append(diff)
            if _monotone_applies(spec, grid, s, t_end):
                violation = gap if violation is None else max(violation, gap)
                if gap > MONOTONE_SLACK:
                    logger.warning("Level %d does not dominate level %d (gap %.3g)", level, level - 1, gap)
            if diff <= exhaustion.tol_exhaust:
                status = "converged"
                break
        previous = current

    if status != "converged":
        logger.warning("Exhaustion not converged after %d levels (last difference %s)",
                       exhaustion.max_levels, differences[-1] if differences else "n/a")
    core = [snap.restrict(snap.core_radius) for snap in current.snapshots]
    return EvolutionResult(s, current.t_grid, tuple(core), current.domain_level, params.theta, params.dt,
                           current.h, status, current.warnings, violation, differences, current.max_principle)


def _compare_levels(previous: EvolutionResult, current: EvolutionResult) -> Tuple[float, float]:
    """Sup difference on the previous core region and the worst domination gap on shared nodes."""
    diff = 0.0
    gap = -np.inf
    for old, new in zip(previous.snapshots, current.snapshots):
        on_old = new.interpolator()(old.coordinates())
        diff = max(diff, float(np.max(np.abs(on_old - old.values)[old.core_slices()])))
        gap = max(gap, float(np.max(old.values - on_old)))
    return diff, gap


def _monotone_applies(spec: OperatorSpec, grid: GridFunction, s: float, t_end: float) -> bool:
    if np.min(grid.values) < 0:
        return False
    X = grid.coordinates()
    return all(np.max(spec.c(t, X)) <= 0 for t in (s, 0.5 * (s + t_end), t_end))


# ======================================================================
# evolution law and the sup bound
# ======================================================================

def check_evolution_law(spec: OperatorSpec, f: Datum, s: float, r: float, t: float,
                        exhaustion: Optional[Exhaustion] = None,
                        params: Optional[SchemeParams] = None,
                        tol: float = TOL_LAW) -> EstimateReport:
    """Compare G(t,s)f with G(t,r)G(r,s)f on the common core region."""
    if not s <= r <= t or s == t:
        raise DomainError(f"evolution law needs s <= r <= t with s < t, got ({s}, {r}, {t})")
    direct = evolution_operator(spec, f, s, t, exhaustion, params)
    lhs = direct.final
    if r in (s, t):
        return EstimateReport("evolution-law", 0.0, tol, lhs, lhs,
                              resolution=direct.metadata(), tags=["identity"])
    middle = evolution_operator(spec, f, s, r, exhaustion, params)
    composed = evolution_operator(spec, middle.final, r, t, exhaustion, params)
    radius = min(lhs.half_width, composed.final.half_width)
    lhs = lhs.restrict(radius)
    rhs = lhs.with_values(composed.final.interpolator()(lhs.coordinates()))
    worst = -float(np.max(np.abs(lhs.values - rhs.values)))
    tags = [] if direct.converged and composed.converged else ["exhaustion not converged"]
    return EstimateReport("evolution-law", worst, tol, lhs, rhs,
                          resolution=direct.metadata(), tags=tags,
                          notes=["G(r,s)f is extended beyond its core region by its boundary values"])


def reality_bound_margin(result: EvolutionResult, c0: float, f_sup: Optional[float] = None) -> float:
    """
    min over snapshots of (e^{c0 (t-s)} sup|f| - sup|u(t)|) / sup|f|.

    A run satisfies the sup bound when this is >= -tol_solver.
    """
    f_sup = result.snapshots[0].sup_norm(core=False) if f_sup is None else f_sup
    scale = f_sup if f_sup > 0 else 1.0
    margins = [(math.exp(c0 * (t - result.s)) * f_sup - snap.sup_norm(core=False)) / scale
               for t, snap in zip(result.t_grid, result.snapshots)]
    return float(min(margins))


# ======================================================================
# snapshot export
# ======================================================================

def snapshots_frame(result: EvolutionResult) -> pd.DataFrame:
    """One row per node and time: t, x[, y], u."""
    frames = []
    for t, snap in zip(result.t_grid, result.snapshots):
        coords = snap.coordinates()
        columns = {"t": np.full(snap.values.size, t)}
        for i, name in enumerate(["x", "y"][: snap.d]):
            columns[name] = coords[i].ravel()
        columns["u"] = snap.values.ravel()
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def export_binary(result: EvolutionResult, path: Path) -> Path:
    """
    Little-endian binary: int32 d, int32 n, float64 R, int32 count, then per
    snapshot one float64 time followed by n^d float64 values (C order).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    first = result.snapshots[0]
    with open(path, "wb") as out:
        out.write(np.array([first.d, first.n], dtype=BINARY_DTYPE_INT).tobytes())
        out.write(np.array([first.half_width], dtype=BINARY_DTYPE_FLOAT).tobytes())
        out.write(np.array([len(result.snapshots)], dtype=BINARY_DTYPE_INT).tobytes())
        for t, snap in zip(result.t_grid, result.snapshots):
            out.write(np.array([t], dtype=BINARY_DTYPE_FLOAT).tobytes())
            out.write(np.ascontiguousarray(snap.values, dtype=BINARY_DTYPE_FLOAT).tobytes())
    return path


def load_binary(path: Path) -> Tuple[List[float], List[GridFunction]]:
    """Read a file written by ``export_binary``: (times, snapshots)."""
    raw = Path(path).read_bytes()
    d, n = np.frombuffer(raw, dtype=BINARY_DTYPE_INT, count=2, offset=0)
    R = float(np.frombuffer(raw, dtype=BINARY_DTYPE_FLOAT, count=1, offset=8)[0])
    count = int(np.frombuffer(raw, dtype=BINARY_DTYPE_INT, count=1, offset=16)[0])
    size = int(n) ** int(d)
    offset = 20
    times, snapshots = [], []
    for _ in range(count):
        times.append(float(np.frombuffer(raw, dtype=BINARY_DTYPE_FLOAT, count=1, offset=offset)[0]))
        offset += 8
        values = np.frombuffer(raw, dtype=BINARY_DTYPE_FLOAT, count=size, offset=offset)
        offset += 8 * size
        snapshots.append(GridFunction(R, int(n), values.reshape((int(n),) * int(d))))
    return times, snapshots
