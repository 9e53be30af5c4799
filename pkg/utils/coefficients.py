"""
Coefficient fields of Kolmogorov operators and the built-in catalogue.

A CoefficientField wraps an evaluator ``(t, x) -> value`` where ``x`` has
shape (d, ...) and the value has shape ``value_shape + x.shape[1:]``.
Spatial derivatives are registered by the user under sorted multi-indices,
e.g. ``(0,)`` for D_{x_0} and ``(0, 1)`` for D_{x_0 x_1}; they are never
computed symbolically. ``check_derivatives`` compares them with central
differences; utils.config_loader.build_operator runs it on every operator.

Initial data are scalar fields that ignore ``t``; ``datum`` builds them.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from utils.constants import (
    DEFAULT_HOLDER_EXPONENT,
    DERIVATIVE_CHECK_RTOL,
    DERIVATIVE_CHECK_SAMPLES,
    DERIVATIVE_CHECK_STEP,
)
from utils.errors import InsufficientDerivativeData, ScenarioError
from utils.grid import multi_indices

MultiIndex = Tuple[int, ...]
Evaluator = Callable[[Any, np.ndarray], Any]

ARITIES = ("scalar", "vector", "matrix")


def _spatial_shape(x: np.ndarray) -> Tuple[int, ...]:
    return np.shape(x)[1:]


def _ones(x: np.ndarray) -> np.ndarray:
    return np.ones(_spatial_shape(x))


def index_symbol(name: str, index: MultiIndex) -> str:
    """Human-readable derivative symbol, e.g. ``D_x0x1 q``."""
    if not index:
        return name
    return "D_" + "".join(f"x{i}" for i in index) + " " + name


@dataclass(frozen=True)
class CoefficientField:
    """One coefficient (scalar, vector or matrix valued) with its registered derivatives."""
    name: str
    arity: str
    d: int
    evaluator: Evaluator
    derivatives: Mapping[MultiIndex, Evaluator] = field(default_factory=dict)
    holder_exponent: float = DEFAULT_HOLDER_EXPONENT
    space_independent: bool = False

    def __post_init__(self):
        if self.arity not in ARITIES:
            raise ValueError(f"unknown arity {self.arity!r}")
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        normalized = {tuple(sorted(k)): v for k, v in dict(self.derivatives).items()}
        for index in normalized:
            if not 1 <= len(index) <= 3 or any(not 0 <= i < self.d for i in index):
                raise ValueError(f"invalid derivative index {index} for d={self.d}")
        object.__setattr__(self, "derivatives", normalized)

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return {"scalar": (), "vector": (self.d,), "matrix": (self.d, self.d)}[self.arity]

    def _shaped(self, raw: Any, x: np.ndarray) -> np.ndarray:
        shape = self.value_shape + _spatial_shape(x)
        return np.broadcast_to(np.asarray(raw, dtype=float), shape)

    def __call__(self, t: Any, x: np.ndarray) -> np.ndarray:
        return self._shaped(self.evaluator(t, np.asarray(x, dtype=float)), x)

    def has_derivative(self, index: Sequence[int]) -> bool:
        return self.space_independent or tuple(sorted(index)) in self.derivatives

    def derivative(self, index: Sequence[int], t: Any, x: np.ndarray) -> np.ndarray:
        """Registered derivative D^index evaluated at (t, x)."""
        key = tuple(sorted(index))
        if not key:
            return self(t, x)
        if key in self.derivatives:
            return self._shaped(self.derivatives[key](t, np.asarray(x, dtype=float)), x)
        if self.space_independent:
            return np.zeros(self.value_shape + _spatial_shape(x))
        raise InsufficientDerivativeData([index_symbol(self.name, key)])

    def missing(self, indices: Sequence[MultiIndex]) -> List[str]:
        return [index_symbol(self.name, tuple(sorted(i))) for i in indices if not self.has_derivative(i)]

    def check_derivatives(self, time_window: Tuple[float, float], radius: float,
                          samples: int = DERIVATIVE_CHECK_SAMPLES,
                          step: float = DERIVATIVE_CHECK_STEP,
                          rtol: float = DERIVATIVE_CHECK_RTOL,
                          seed: int = 0) -> List[str]:
        """
        Compare each registered derivative with a central difference of the
        next-lower one at random points.

        Returns:
            Symbols whose registration disagrees (empty when all agree).
        """
        rng = np.random.default_rng(seed)
        t = rng.uniform(time_window[0], time_window[1], samples)
        x = rng.uniform(-radius, radius, (self.d, samples))
        failures = []
        for index in sorted(self.derivatives, key=len):
            lower, axis = index[:-1], index[-1]
            if lower and not self.has_derivative(lower):
                continue
            shift = np.zeros((self.d, 1))
            shift[axis] = step
            numeric = (self.derivative(lower, t, x + shift) - self.derivative(lower, t, x - shift)) / (2 * step)
            exact = self.derivative(index, t, x)
            err = np.abs(numeric - exact) / np.maximum(np.abs(exact), 1.0)
            if np.max(err) > rtol:
                failures.append(index_symbol(self.name, index))
        return failures


# ======================================================================
# scalar fields
# ======================================================================

def constant_scalar(value: float, d: int = 1, name: str = "c") -> CoefficientField:
    return CoefficientField(name, "scalar", d, lambda t, x: value * _ones(x), space_independent=True)


def time_sin_scalar(value: float, amplitude: float, frequency: float = 1.0, d: int = 1,
                    name: str = "c") -> CoefficientField:
    def evaluate(t, x):
        return (value + amplitude * np.sin(frequency * np.asarray(t))) * _ones(x)
    return CoefficientField(name, "scalar", d, evaluate, space_independent=True)


def quadratic_lyapunov(d: int = 1) -> CoefficientField:
    """phi(x) = 1 + |x|^2."""
    derivatives: Dict[MultiIndex, Evaluator] = {}
    for i in range(d):
        derivatives[(i,)] = lambda t, x, i=i: 2.0 * x[i]
        for j in range(i, d):
            derivatives[(i, j)] = lambda t, x, same=(i == j): (2.0 if same else 0.0) * _ones(x)
    return CoefficientField("phi", "scalar", d, lambda t, x: 1.0 + np.sum(x**2, axis=0), derivatives)


# ======================================================================
# drifts
# ======================================================================

def linear_drift(matrix: Any, d: int = 1) -> CoefficientField:
    """b(t, x) = A x; a scalar ``matrix`` means A = matrix * I."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(d)
    d = A.shape[0]

    def evaluate(t, x):
        return np.tensordot(A, x, axes=1)

    derivatives = {(j,): (lambda t, x, j=j: A[:, j].reshape((d,) + (1,) * (np.ndim(x) - 1)) * _ones(x))
                   for j in range(d)}
    for order in (2, 3):
        for index in multi_indices(order, d):
            derivatives[index] = lambda t, x: np.zeros((d,) + _spatial_shape(x))
    return CoefficientField("b", "vector", d, evaluate, derivatives)


def ou_drift(rate: float = 1.0, d: int = 1) -> CoefficientField:
    """b(t, x) = -rate * x."""
    return linear_drift(-rate, d)


def time_linear_drift(a0: float, a1: float, frequency: float = 1.0, d: int = 1) -> CoefficientField:
    """b(t, x) = -(a0 + a1 sin(frequency t)) x."""
    def rate(t):
        return a0 + a1 * np.sin(frequency * np.asarray(t))

    def evaluate(t, x):
        return -rate(t) * x

    derivatives = {}
    for j in range(d):
        def column(t, x, j=j):
            out = np.zeros((d,) + _spatial_shape(x))
            out[j] = -rate(t) * _ones(x)
            return out
        derivatives[(j,)] = column
    for order in (2, 3):
        for index in multi_indices(order, d):
            derivatives[index] = lambda t, x: np.zeros((d,) + _spatial_shape(x))
    return CoefficientField("b", "vector", d, evaluate, derivatives)


def polynomial_drift(eps: float) -> CoefficientField:
    """One-dimensional b(x) = -x |x|^eps."""
    def first(t, x):
        return -(1 + eps) * np.abs(x) ** eps

    def second(t, x):
        ax = np.abs(x)
        safe = np.where(ax > 0, ax, 1.0)
        return np.where(ax > 0, -(1 + eps) * eps * safe ** (eps - 1) * np.sign(x), 0.0)

    derivatives = {(0,): first, (0, 0): second}
    if eps == 1 or eps >= 2:
        def third(t, x):
            ax = np.abs(x)
            safe = np.where(ax > 0, ax, 1.0)
            return np.where(ax > 0, -(1 + eps) * eps * (eps - 1) * safe ** (eps - 2), 0.0)
        derivatives[(0, 0, 0)] = third
    return CoefficientField("b", "vector", 1, lambda t, x: -x * np.abs(x) ** eps, derivatives)


def cubic_drift(sign: float = -1.0) -> CoefficientField:
    """One-dimensional b(x) = sign * x^3."""
    return CoefficientField("b", "vector", 1, lambda t, x: sign * x**3, {
        (0,): lambda t, x: 3.0 * sign * x**2,
        (0, 0): lambda t, x: 6.0 * sign * x,
        (0, 0, 0): lambda t, x: 6.0 * sign * _ones(x),
    })


def log_drift(strength: float = 1.0) -> CoefficientField:
    """One-dimensional b(x) = -k x log(e + x^2)."""
    e = math.e

    def first(t, x):
        return -strength * (np.log(e + x**2) + 2 * x**2 / (e + x**2))

    def second(t, x):
        s = e + x**2
        return -strength * (2 * x / s + 4 * e * x / s**2)

    return CoefficientField("b", "vector", 1, lambda t, x: -strength * x * np.log(e + x**2),
                            {(0,): first, (0, 0): second})


# ======================================================================
# diffusion matrices
# ======================================================================

def constant_matrix(value: Any, d: int = 1) -> CoefficientField:
    """Q constant in (t, x); a scalar ``value`` means value * I."""
    Q = np.asarray(value, dtype=float)
    if Q.ndim == 0:
        Q = float(Q) * np.eye(d)
    d = Q.shape[0]

    def evaluate(t, x):
        return Q.reshape((d, d) + (1,) * (np.ndim(x) - 1)) * _ones(x)

    return CoefficientField("Q", "matrix", d, evaluate, space_independent=True)


def time_sin_diffusion(q0: float, q1: float, frequency: float = 1.0, d: int = 1) -> CoefficientField:
    """Q(t) = (q0 + q1 sin(frequency t)) I."""
    eye = np.eye(d)

    def evaluate(t, x):
        q = (q0 + q1 * np.sin(frequency * np.asarray(t))) * _ones(x)
        return eye.reshape((d, d) + (1,) * q.ndim) * q

    return CoefficientField("Q", "matrix", d, evaluate, space_independent=True)


def oscillating_diffusion(amplitude: float = 0.5) -> CoefficientField:
    """One-dimensional q(x) = 1 + amplitude cos x, amplitude < 1."""
    a = amplitude
    return CoefficientField("Q", "matrix", 1, lambda t, x: (1 + a * np.cos(x))[None], {
        (0,): lambda t, x: (-a * np.sin(x))[None],
        (0, 0): lambda t, x: (-a * np.cos(x))[None],
        (0, 0, 0): lambda t, x: (a * np.sin(x))[None],
    })


# ======================================================================
# initial data
# ======================================================================

def datum(name: str, func: Callable[[np.ndarray], np.ndarray],
          derivatives: Optional[Mapping[MultiIndex, Callable[[np.ndarray], np.ndarray]]] = None,
          d: int = 1) -> CoefficientField:
    """Time-independent scalar field used as an initial datum."""
    lifted = {k: (lambda t, x, g=g: g(x)) for k, g in (derivatives or {}).items()}
    return CoefficientField(name, "scalar", d, lambda t, x: func(x), lifted)


def tanh_datum() -> CoefficientField:
    def sech2(x):
        return 1.0 - np.tanh(x[0]) ** 2
    return datum("tanh", lambda x: np.tanh(x[0]), {
        (0,): sech2,
        (0, 0): lambda x: -2.0 * np.tanh(x[0]) * sech2(x),
        (0, 0, 0): lambda x: sech2(x) * (4.0 * np.tanh(x[0]) ** 2 - 2.0 * sech2(x)),
    })


def sin_datum(frequency: float = 1.0) -> CoefficientField:
    w = frequency
    return datum("sin", lambda x: np.sin(w * x[0]), {
        (0,): lambda x: w * np.cos(w * x[0]),
        (0, 0): lambda x: -w**2 * np.sin(w * x[0]),
        (0, 0, 0): lambda x: -w**3 * np.cos(w * x[0]),
    })


def cos_datum(frequency: float = 1.0) -> CoefficientField:
    w = frequency
    return datum("cos", lambda x: np.cos(w * x[0]), {
        (0,): lambda x: -w * np.sin(w * x[0]),
        (0, 0): lambda x: -w**2 * np.cos(w * x[0]),
        (0, 0, 0): lambda x: w**3 * np.sin(w * x[0]),
    })


def polynomial_datum(coefficients: Sequence[float]) -> CoefficientField:
    """f(x) = sum_k coefficients[k] x^k in one dimension."""
    poly = np.polynomial.Polynomial(coefficients)
    derivs = {(0,) * k: (lambda x, p=poly.deriv(k): p(x[0])) for k in (1, 2, 3)}
    return datum("poly", lambda x: poly(x[0]), derivs)


def exponential_datum(theta: float) -> CoefficientField:
    """f(x) = exp(theta x)."""
    return datum("exp", lambda x: np.exp(theta * x[0]), {
        (0,) * k: (lambda x, k=k: theta**k * np.exp(theta * x[0])) for k in (1, 2, 3)
    })


def gaussian_datum(width: float = 1.0, d: int = 1) -> CoefficientField:
    """f(x) = exp(-|x|^2 / (2 width^2))."""
    w2 = width**2

    def g(x):
        return np.exp(-np.sum(x**2, axis=0) / (2 * w2))

    derivatives = {}
    if d == 1:
        derivatives = {
            (0,): lambda x: -x[0] / w2 * g(x),
            (0, 0): lambda x: (x[0] ** 2 / w2 - 1) / w2 * g(x),
            (0, 0, 0): lambda x: (3 * x[0] / w2**2 - x[0] ** 3 / w2**3) * g(x),
        }
    return datum("gaussian", g, derivatives, d)


def constant_datum(value: float = 1.0, d: int = 1) -> CoefficientField:
    return CoefficientField("const", "scalar", d, lambda t, x: value * _ones(x), space_independent=True)


def mollified_step(width: float = 0.01) -> CoefficientField:
    """Smoothed Heaviside 0.5 (1 + tanh(x / width)); bounded, rough above order 0."""
    return datum("step", lambda x: 0.5 * (1.0 + np.tanh(x[0] / width)), {
        (0,): lambda x: 0.5 / width * (1.0 - np.tanh(x[0] / width) ** 2),
    })


def mollified_kink(width: float = 0.01) -> CoefficientField:
    """Smoothed |x|: sqrt(x^2 + width^2); Lipschitz, rough above order 1."""
    return datum("kink", lambda x: np.sqrt(x[0] ** 2 + width**2), {
        (0,): lambda x: x[0] / np.sqrt(x[0] ** 2 + width**2),
    })


# ======================================================================
# catalogue lookup (scenario files)
# ======================================================================

def build_coefficient(entry: Mapping[str, Any], role: str, d: int) -> CoefficientField:
    """
    Build a coefficient from a catalogue entry such as ``{"kind": "linear", "rate": 1.0}``.

    Args:
        entry: Catalogue id under ``kind`` plus numeric parameters
        role: One of "Q", "b", "c", "phi", "f"
        d: Spatial dimension

    Returns:
        The coefficient field
    """
    params = {k: v for k, v in entry.items() if k != "kind"}
    kind = entry.get("kind")
    try:
        builder = CATALOGUE[role][kind]
    except KeyError:
        raise ScenarioError(f"unknown {role} kind {kind!r}") from None
    try:
        return builder(d=d, **params)
    except TypeError as exc:
        raise ScenarioError(f"bad parameters for {role} kind {kind!r}: {exc}") from None


def _one_d(builder: Callable[..., CoefficientField]) -> Callable[..., CoefficientField]:
    def build(d: int = 1, **params):
        if d != 1:
            raise ScenarioError(f"{builder.__name__} is one-dimensional")
        return builder(**params)
    return build


CATALOGUE: Dict[str, Dict[str, Callable[..., CoefficientField]]] = {
    "Q": {
        "constant": lambda d=1, value=1.0: constant_matrix(value, d),
        "time_sin": lambda d=1, q0=1.0, q1=0.0, frequency=1.0: time_sin_diffusion(q0, q1, frequency, d),
        "oscillating": _one_d(oscillating_diffusion),
    },
    "b": {
        "zero": lambda d=1: linear_drift(0.0, d),
        "linear": lambda d=1, rate=None, matrix=None: (
            linear_drift(matrix, d) if matrix is not None else ou_drift(1.0 if rate is None else rate, d)),
        "time_linear": lambda d=1, a0=1.0, a1=0.0, frequency=1.0: time_linear_drift(a0, a1, frequency, d),
        "polynomial": _one_d(polynomial_drift),
        "cubic": _one_d(cubic_drift),
        "log": _one_d(log_drift),
    },
    "c": {
        "constant": lambda d=1, value=0.0: constant_scalar(value, d),
        "time_sin": lambda d=1, value=0.0, amplitude=0.0, frequency=1.0: time_sin_scalar(value, amplitude, frequency, d),
    },
    "phi": {
        "quadratic": lambda d=1: quadratic_lyapunov(d),
    },
    "f": {
        "tanh": _one_d(tanh_datum),
        "sin": _one_d(sin_datum),
        "cos": _one_d(cos_datum),
        "polynomial": _one_d(polynomial_datum),
        "exp": _one_d(exponential_datum),
        "gaussian": lambda d=1, width=1.0: gaussian_datum(width, d),
        "constant": lambda d=1, value=1.0: constant_datum(value, d),
        "step": _one_d(mollified_step),
        "kink": _one_d(mollified_kink),
    },
}
