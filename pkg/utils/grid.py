"""
Grid functions on centred boxes and the finite-difference stencils used on them.

A GridFunction samples a scalar field on the uniform tensor grid
[-R, R]^d with n points per axis. The outer ``core_margin`` cells are
excluded from every verdict (Dirichlet truncation and stencil edges live
there).
"""

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from utils.constants import CORE_FRACTION, MIN_GRID_POINTS
from utils.errors import DomainError, GridTooCoarse

MultiIndex = Tuple[int, ...]


def default_core_margin(n: int, fraction: float = CORE_FRACTION) -> int:
    """Cells covering ``fraction`` of the half-width."""
    return int(math.ceil(fraction * (n - 1) / 2.0 - 1e-9))


@dataclass(frozen=True)
class GridFunction:
    """Scalar field on the box [-half_width, half_width]^d."""
    half_width: float
    n: int
    values: np.ndarray
    core_margin: int = 0
    flagged: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if self.n < MIN_GRID_POINTS:
            raise GridTooCoarse(self.n, MIN_GRID_POINTS)
        if values.ndim not in (1, 2) or values.shape != (self.n,) * values.ndim:
            raise DomainError(f"values of shape {values.shape} do not match n={self.n}")
        if not self.half_width > 0:
            raise DomainError("half-width must be positive")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid values must be finite")
        if not 0 <= self.core_margin < (self.n - 1) // 2:
            raise DomainError(f"core margin {self.core_margin} leaves no core for n={self.n}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def sample(cls, func: Callable[[np.ndarray], np.ndarray], d: int, half_width: float,
               n: int, core_margin: Optional[int] = None) -> "GridFunction":
        """Evaluate ``func`` (taking coordinates of shape (d, ...)) on the grid."""
        axis = np.linspace(-half_width, half_width, n)
        coords = np.stack(np.meshgrid(*([axis] * d), indexing="ij"))
        values = np.broadcast_to(np.asarray(func(coords), dtype=float), (n,) * d)
        margin = default_core_margin(n) if core_margin is None else core_margin
        return cls(half_width, n, values, margin)

    @classmethod
    def sample_with_spacing(cls, func: Callable[[np.ndarray], np.ndarray], d: int,
                            half_width: float, h: float,
                            core_margin: Optional[int] = None) -> "GridFunction":
        """Sample on the grid of spacing ``h``; the half-width is snapped to a multiple of h/2."""
        n = nodes_for_spacing(half_width, h)
        return cls.sample(func, d, 0.5 * h * (n - 1), n, core_margin)

    def with_values(self, values: np.ndarray, core_margin: Optional[int] = None,
                    flagged: Optional[np.ndarray] = None) -> "GridFunction":
        margin = self.core_margin if core_margin is None else core_margin
        return GridFunction(self.half_width, self.n, values, margin, flagged)

    # ------------------------------------------------------------------
    # geometry
    # ------------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (d, n, ..., n)."""
        return np.stack(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    def core_slices(self) -> Tuple[slice, ...]:
        m = self.core_margin
        return tuple(slice(m, self.n - m) for _ in range(self.d))

    @property
    def core_radius(self) -> float:
        return self.half_width - self.core_margin * self.h

    def core_values(self) -> np.ndarray:
        return self.values[self.core_slices()]

    def core_coordinates(self) -> np.ndarray:
        return self.coordinates()[(slice(None),) + self.core_slices()]

    def sup_norm(self, core: bool = True) -> float:
        vals = self.core_values() if core else self.values
        return float(np.max(np.abs(vals)))

    def integral(self, weights: Optional[np.ndarray] = None) -> float:
        """Composite trapezoid integral over the whole box."""
        vals = self.values if weights is None else self.values * weights
        for _ in range(self.d):
            vals = trapezoid(vals, dx=self.h, axis=0)
        return float(vals)

    def restrict(self, radius: float, core_margin: int = 0) -> "GridFunction":
        """Sub-grid of the nodes with |x_i| <= radius on every axis."""
        keep = np.flatnonzero(np.abs(self.axis) <= radius + 1e-9 * self.h)
        lo, hi = int(keep[0]), int(keep[-1]) + 1
        sl = tuple(slice(lo, hi) for _ in range(self.d))
        flagged = None if self.flagged is None else self.flagged[sl]
        return GridFunction(float(self.axis[hi - 1]), hi - lo, self.values[sl], core_margin, flagged)

    def interpolator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Linear interpolant, held constant beyond the box."""
        axis = self.axis
        interp = RegularGridInterpolator((axis,) * self.d, self.values,
                                         bounds_error=False, fill_value=None)

        def evaluate(coords: np.ndarray) -> np.ndarray:
            coords = np.asarray(coords, dtype=float)
            clipped = np.clip(coords, -self.half_width, self.half_width)
            points = np.moveaxis(clipped, 0, -1)
            return interp(points)

        return evaluate


def nodes_for_spacing(half_width: float, h: float) -> int:
    """Points per axis of the grid with spacing close to ``h`` on [-R, R]."""
    if h <= 0:
        raise DomainError("grid spacing must be positive")
    return int(round(2.0 * half_width / h)) + 1


# ----------------------------------------------------------------------
# stencils
# ----------------------------------------------------------------------

def first_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central differences inside, second-order one-sided at the two ends."""
    return np.gradient(values, h, axis=axis, edge_order=2)


def second_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Three-point central stencil inside, second-order one-sided at the two ends."""
    u = np.moveaxis(values, axis, 0)
    out = np.empty_like(u, dtype=float)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h**2
    out[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def third_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Five-point central stencil; the two outer nodes on each side are left at zero."""
    u = np.moveaxis(values, axis, 0)
    out = np.zeros_like(u, dtype=float)
    out[2:-2] = (u[4:] - 2.0 * u[3:-1] + 2.0 * u[1:-3] - u[:-4]) / (2.0 * h**3)
    return np.moveaxis(out, 0, axis)


_AXIS_STENCILS = {1: first_derivative, 2: second_derivative, 3: third_derivative}


def stencil_radius(index: MultiIndex) -> int:
    """Cells lost at each boundary when differentiating along ``index``."""
    counts = [index.count(a) for a in set(index)]
    return max((2 if c == 3 else 1) for c in counts) if counts else 0


def partial_derivative(values: np.ndarray, h: float, index: MultiIndex) -> np.ndarray:
    """Mixed partial derivative: one-dimensional stencils composed axis by axis."""
    out = np.asarray(values, dtype=float)
    for axis in sorted(set(index)):
        out = _AXIS_STENCILS[index.count(axis)](out, h, axis)
    return out


def multi_indices(order: int, d: int) -> List[MultiIndex]:
    """Distinct multi-indices of the given order as sorted axis tuples."""
    return list(combinations_with_replacement(range(d), order))


def multiplicity(index: MultiIndex) -> int:
    """Number of ordered tuples that sort to ``index``."""
    total = math.factorial(len(index))
    for axis in set(index):
        total //= math.factorial(index.count(axis))
    return total


def tensor_norm_squared(components: Dict[MultiIndex, np.ndarray]) -> np.ndarray:
    """|D^k u|^2 as the Frobenius norm of the full symmetric derivative tensor."""
    total = None
    for index, comp in components.items():
        term = multiplicity(index) * np.asarray(comp, dtype=float) ** 2
        total = term if total is None else total + term
    return total
