"""
Closed-form evolution operators: the 1-D nonautonomous Ornstein-Uhlenbeck
operator q(t) D_xx - a(t) x D_x and the heat kernel.

For OU, G(t,s)f(x) = E f(m(t,s) x + sqrt(v(t,s)) Z) with Z ~ N(0,1),
m(t,s) = exp(-int_s^t a) and v(t,s) = 2 int_s^t q(r) m(t,r)^2 dr.
Time integrals use adaptive quadrature, the Gaussian expectation a
fixed-order Gauss-Hermite rule.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from utils.coefficients import CoefficientField
from utils.constants import GAUSS_HERMITE_ORDER, QUAD_TOLERANCE, TIGHT_INTEGRAND_FLOOR, TIGHT_MAX_BACKWARD
from utils.errors import DomainError, KlabError, TightnessError

logger = logging.getLogger(__name__)

Datum = Union[CoefficientField, Callable[[np.ndarray], np.ndarray]]

_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite.hermgauss(GAUSS_HERMITE_ORDER)


@dataclass(frozen=True)
class OUSpec1D:
    """Diffusion q(t) > 0 and drift rate a(t), with b(t, x) = -a(t) x."""
    q: Callable[[float], float]
    a: Callable[[float], float]
    q_min: float = 1.0
    constant: bool = False

    def __post_init__(self):
        if not self.q_min > 0:
            raise DomainError("OU diffusion must be bounded below by a positive q_min")

    @classmethod
    def with_constant_rates(cls, a: float = 1.0, q: float = 1.0) -> "OUSpec1D":
        return cls(lambda t: q, lambda t: a, q_min=q, constant=True)

    @classmethod
    def periodic(cls, a0: float = 1.0, a1: float = 0.5, q: float = 1.0, frequency: float = 1.0) -> "OUSpec1D":
        """a(t) = a0 + a1 sin(frequency t)."""
        return cls(lambda t: q, lambda t: a0 + a1 * np.sin(frequency * t), q_min=q)

    @classmethod
    def from_operator(cls, spec) -> "OUSpec1D":
        """Read q(t) = Q(t, 0) and a(t) = -D_x b(t, 0) from a 1-D operator with linear drift."""
        if spec.d != 1:
            raise DomainError("the OU oracle is one-dimensional")
        origin = np.zeros((1,))

        def q(t):
            return float(spec.Q(t, origin)[0, 0])

        def a(t):
            return float(-spec.b.derivative((0,), t, origin)[0])

        samples = np.linspace(*spec.time_interval, 65)
        q_values = np.array([q(t) for t in samples])
        a_values = np.array([a(t) for t in samples])
        constant = bool(np.ptp(q_values) == 0.0 and np.ptp(a_values) == 0.0)
        return cls(q, a, q_min=float(np.min(q_values)), constant=constant)

    def rate_integral(self, s: float, t: float) -> float:
        """int_s^t a(r) dr."""
        if self.constant:
            return float(self.a(s)) * (t - s)
        value, _ = quad(self.a, s, t, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200)
        return value


def _as_callable(f: Datum) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, CoefficientField):
        return lambda y: f(0.0, np.asarray(y, dtype=float)[None])
    return f


def _check_times(s: float, t: float) -> None:
    if t < s:
        raise DomainError(f"evolution needs t >= s, got s={s}, t={t}")


def ou_mean_factor(spec: OUSpec1D, t: float, s: float) -> float:
    """m(t,s) = exp(-int_s^t a)."""
    _check_times(s, t)
    return float(np.exp(-spec.rate_integral(s, t)))


def ou_variance(spec: OUSpec1D, t: float, s: float) -> float:
    """v(t,s) = 2 int_s^t q(r) m(t,r)^2 dr."""
    _check_times(s, t)
    if t == s:
        return 0.0
    if spec.constant:
        a, q = float(spec.a(s)), float(spec.q(s))
        if a == 0.0:
            return 2.0 * q * (t - s)
        return q * (-np.expm1(-2.0 * a * (t - s))) / a

    def integrand(r):
        return 2.0 * spec.q(r) * np.exp(-2.0 * spec.rate_integral(r, t))

    value, _ = quad(integrand, s, t, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200)
    return value


def gaussian_expectation(f: Callable[[np.ndarray], np.ndarray], mean: np.ndarray, variance: float) -> np.ndarray:
    """E f(mean + sqrt(variance) Z), elementwise in ``mean``."""
    if variance < 0:
        raise KlabError(f"negative variance {variance}")
    mean = np.asarray(mean, dtype=float)
    points = mean[..., None] + np.sqrt(2.0 * variance) * _HERMITE_NODES
    return np.asarray(f(points) @ _HERMITE_WEIGHTS) / np.sqrt(np.pi)


def ou_evolution(spec: OUSpec1D, f: Datum, s: float, t: float, x) -> np.ndarray:
    """G(t,s)f(x) for the OU operator; ``x`` may be an array."""
    func = _as_callable(f)
    x = np.asarray(x, dtype=float)
    if t == s:
        return func(x)
    m = ou_mean_factor(spec, t, s)
    v = ou_variance(spec, t, s)
    if not v > 0:
        raise KlabError(f"non-positive OU variance {v} on ({s}, {t})")
    return gaussian_expectation(func, m * x, v)


def ou_gradient_identity(spec: OUSpec1D, f: Datum, s: float, t: float, x,
                         derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
                         ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Both sides of |D_x G(t,s)f| <= exp(r0 (t-s)) G(t,s)|f'| with r0 = sup(-a) on [s, t].

    The derivative is read from a CoefficientField's registered (0,) entry
    unless supplied explicitly.

    Returns:
        (lhs, rhs) evaluated at x
    """
    if derivative is None:
        if not isinstance(f, CoefficientField):
            raise DomainError("pass the derivative of a plain callable datum")
        field = f
        derivative = lambda y: field.derivative((0,), 0.0, np.asarray(y, dtype=float)[None])
    x = np.asarray(x, dtype=float)
    if spec.constant or t == s:
        r0 = -float(spec.a(s))
    else:
        r0 = float(np.max([-spec.a(r) for r in np.linspace(s, t, 257)]))
    m = ou_mean_factor(spec, t, s)
    lhs = m * np.abs(ou_evolution(spec, derivative, s, t, x))
    rhs = np.exp(r0 * (t - s)) * ou_evolution(spec, lambda y: np.abs(derivative(y)), s, t, x)
    return lhs, rhs


@dataclass(frozen=True)
class GaussianDensity:
    """Centred normal density N(0, variance) at time t."""
    variance: float
    t: float = 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def pdf(self, x) -> np.ndarray:
        return norm.pdf(x, scale=self.std)

    def tail_mass(self, radius: float) -> float:
        """mu(|x| > radius)."""
        return float(2.0 * norm.sf(radius, scale=self.std))

    def expectation(self, f: Datum) -> float:
        return float(gaussian_expectation(_as_callable(f), np.zeros(()), self.variance))


def ou_tight_measure(spec: OUSpec1D, t: float, chunk: float = 1.0) -> GaussianDensity:
    """
    The unique tight evolution system at time t: N(0, V(t)) with
    V(t) = 2 int_{-inf}^t q(r) exp(-2 int_r^t a) dr.

    The improper integral is accumulated backward in chunks until the
    integrand falls below the truncation floor.
    """
    if spec.constant:
        a = float(spec.a(t))
        if a <= 0:
            raise TightnessError("tight system not guaranteed: drift rate is not positive")
        return GaussianDensity(float(spec.q(t)) / a, t)

    total = 0.0
    rate_to_t = 0.0
    upper = t
    while t - upper < TIGHT_MAX_BACKWARD:
        lower = upper - chunk
        offset = rate_to_t

        def integrand(r, upper=upper, offset=offset):
            return 2.0 * spec.q(r) * np.exp(-2.0 * (offset + spec.rate_integral(r, upper)))

        piece, _ = quad(integrand, lower, upper, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200)
        total += piece
        rate_to_t += spec.rate_integral(lower, upper)
        upper = lower
        if integrand(lower) < TIGHT_INTEGRAND_FLOOR:
            return GaussianDensity(total, t)
    raise TightnessError("tight system not guaranteed: drift rate is not eventually positive")


# ======================================================================
# heat kernel
# ======================================================================

def heat_evolution(f: Datum, s: float, t: float, x, q: float = 1.0) -> np.ndarray:
    """G(t,s)f for q D_xx on the line (Gaussian convolution, variance 2q(t-s))."""
    _check_times(s, t)
    func = _as_callable(f)
    x = np.asarray(x, dtype=float)
    if t == s:
        return func(x)
    return gaussian_expectation(func, x, 2.0 * q * (t - s))


def heat_dirichlet_mode(half_width: float, s: float, t: float, x, q: float = 1.0) -> np.ndarray:
    """Dirichlet heat flow on [-R, R] of sin(pi x / R): exp(-q pi^2 (t-s) / R^2) sin(pi x / R)."""
    _check_times(s, t)
    k = np.pi / half_width
    return np.exp(-q * k**2 * (t - s)) * np.sin(k * np.asarray(x, dtype=float))
