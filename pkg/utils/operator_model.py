"""
Kolmogorov operators A = Tr(Q D^2) + <b, grad> + c and sampled hypothesis checks.

Global sup/inf conditions are replaced by sampling on a compact window
(time samples x space samples per axis on |x|_inf <= R). Constants that are
not declared on the OperatorSpec are inferred on a fixed inference box
|x|_inf <= min(R_i, R) and then checked on the whole window, so growth beyond
the box turns into a violation with a witness point. For R <= R_i inferred
constants hold on the whole window, and past R_i the box stops moving, so on
nested windows (SamplingWindow.enlarged) a violation never disappears as R
grows. Every report is labelled "sampled, not proven".
"""

import logging
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from utils.coefficients import CoefficientField
from utils.constants import (
    DEFAULT_GAMMA,
    DEFAULT_INFERENCE_RADIUS,
    DEFAULT_RHO_FLOOR,
    DEFAULT_SAMPLING_RADIUS,
    DEFAULT_SPACE_SAMPLES,
    DEFAULT_TIME_SAMPLES,
    MIN_GRID_POINTS,
    SYMMETRY_TOLERANCE,
)
from utils.errors import DomainError, GridTooCoarse, InsufficientDerivativeData
from utils.explicit_constants import l_constant, l_prime_constant
from utils.grid import GridFunction, first_derivative, multi_indices, second_derivative

logger = logging.getLogger(__name__)

SAMPLED_LABEL = "sampled, not proven"


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients (Q, b, c), optional Lyapunov function and declared constants."""
    d: int
    time_interval: Tuple[float, float]
    Q: CoefficientField
    b: CoefficientField
    c: CoefficientField
    phi: Optional[CoefficientField] = None
    declared_params: Mapping[str, float] = field(default_factory=dict)
    name: str = "operator"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be at least 1")
        t0, t1 = self.time_interval
        if not t0 < t1:
            raise DomainError(f"empty time interval {self.time_interval}")
        for coeff, arity in ((self.Q, "matrix"), (self.b, "vector"), (self.c, "scalar")):
            if coeff.arity != arity or coeff.d != self.d:
                raise DomainError(f"coefficient {coeff.name} must be {arity} in dimension {self.d}")
        if self.phi is not None and (self.phi.arity != "scalar" or self.phi.d != self.d):
            raise DomainError("Lyapunov function must be a scalar field in the same dimension")
        object.__setattr__(self, "declared_params", dict(self.declared_params))

    def param(self, key: str, default: Optional[float] = None) -> Optional[float]:
        return self.declared_params.get(key, default)

    def with_params(self, **params: float) -> "OperatorSpec":
        return replace(self, declared_params={**self.declared_params, **params})


@dataclass(frozen=True)
class SamplingWindow:
    """Compact window replacing sup/inf over I x R^d."""
    radius: float = DEFAULT_SAMPLING_RADIUS
    time_window: Optional[Tuple[float, float]] = None
    time_samples: int = DEFAULT_TIME_SAMPLES
    space_samples: int = DEFAULT_SPACE_SAMPLES
    inference_radius: float = DEFAULT_INFERENCE_RADIUS
    rho_floor: float = DEFAULT_RHO_FLOOR

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise DomainError("window radius must be finite and positive")
        if self.time_samples < 1 or self.space_samples < 2:
            raise DomainError("window needs at least one time and two space samples")
        if not self.inference_radius > 0:
            raise DomainError("inference radius must be positive")

    def times(self, spec: OperatorSpec) -> np.ndarray:
        t0, t1 = self.time_window or spec.time_interval
        return np.linspace(t0, t1, self.time_samples)

    def points(self, spec: OperatorSpec) -> Tuple[np.ndarray, np.ndarray]:
        """Sample times of shape (n_t, n_s, ...) and points of shape (d, n_t, n_s, ...)."""
        axis = np.linspace(-self.radius, self.radius, self.space_samples)
        grids = np.meshgrid(self.times(spec), *([axis] * spec.d), indexing="ij")
        return grids[0], np.stack(grids[1:])

    def inference_mask(self, X: np.ndarray) -> np.ndarray:
        """Sample points on which undeclared constants are inferred."""
        box = min(self.inference_radius, self.radius)
        return np.all(np.abs(X) <= box + 1e-12, axis=0)

    def enlarged(self, factor: int) -> "SamplingWindow":
        """Window with ``factor`` times the radius and the same spacing, so the sample points nest."""
        if factor < 1:
            raise DomainError("enlargement factor must be a positive integer")
        return replace(self, radius=self.radius * factor,
                       space_samples=(self.space_samples - 1) * factor + 1)

    def to_dict(self) -> Dict[str, Any]:
        return {"radius": self.radius, "time_window": list(self.time_window) if self.time_window else None,
                "time_samples": self.time_samples, "space_samples": self.space_samples,
                "inference_radius": self.inference_radius, "rho_floor": self.rho_floor}


@dataclass(frozen=True)
class Verdict:
    status: str
    worst_slack: Optional[float] = None
    witness: Optional[Dict[str, Any]] = None
    note: str = ""

    @property
    def satisfied(self) -> bool:
        return self.status == "satisfied"

    def to_dict(self) -> Dict[str, Any]:
        return {"status": self.status, "worst_slack": self.worst_slack,
                "witness": self.witness, "note": self.note}


@dataclass
class HypothesisReport:
    """Per sub-hypothesis verdicts on a sampling window."""
    profile: str
    verdicts: Dict[str, Verdict]
    window: Dict[str, Any]
    constants: Dict[str, float]
    inferred: List[str] = field(default_factory=list)
    label: str = SAMPLED_LABEL

    @property
    def satisfied(self) -> bool:
        return all(v.satisfied for v in self.verdicts.values())

    @property
    def violations(self) -> Dict[str, Verdict]:
        return {k: v for k, v in self.verdicts.items() if v.status == "violated"}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "profile": self.profile,
            "label": self.label,
            "satisfied": self.satisfied,
            "window": self.window,
            "constants": self.constants,
            "inferred": list(self.inferred),
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
        }


# ======================================================================
# sampled quantities
# ======================================================================

def _sym_eigvals(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of the symmetric part of M (shape (d, d, ...)), last axis ascending."""
    moved = np.moveaxis(M, (0, 1), (-2, -1))
    return np.linalg.eigvalsh(0.5 * (moved + np.swapaxes(moved, -1, -2)))


def _symmetric_basis(d: int) -> List[np.ndarray]:
    """Orthonormal basis of symmetric d x d matrices (Frobenius inner product)."""
    basis = []
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return basis


class _Samples:
    """Coefficient values on the sample points, computed on demand."""

    def __init__(self, spec: OperatorSpec, T: np.ndarray, X: np.ndarray, rho_floor: float):
        self.spec = spec
        self.T = T
        self.X = X
        self.rho_floor = rho_floor
        self.d = spec.d

    @cached_property
    def Q(self) -> np.ndarray:
        return self.spec.Q(self.T, self.X)

    @cached_property
    def b(self) -> np.ndarray:
        return self.spec.b(self.T, self.X)

    @cached_property
    def c(self) -> np.ndarray:
        return self.spec.c(self.T, self.X)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return _sym_eigvals(self.Q)

    @cached_property
    def nu(self) -> np.ndarray:
        return self.eigenvalues[..., 0]

    @cached_property
    def asymmetry(self) -> np.ndarray:
        return np.max(np.abs(self.Q - np.swapaxes(self.Q, 0, 1)), axis=(0, 1))

    def q_deriv(self, index) -> np.ndarray:
        return self.spec.Q.derivative(index, self.T, self.X)

    def b_deriv(self, index) -> np.ndarray:
        return self.spec.b.derivative(index, self.T, self.X)

    def c_deriv(self, index) -> np.ndarray:
        return self.spec.c.derivative(index, self.T, self.X)

    @cached_property
    def jac_b(self) -> np.ndarray:
        """Jac b with entries [i, j] = D_j b_i."""
        return np.stack([self.b_deriv((j,)) for j in range(self.d)], axis=1)

    @cached_property
    def r0(self) -> np.ndarray:
        return _sym_eigvals(self.jac_b)[..., -1]

    def r(self, k: int) -> np.ndarray:
        """max_{2 <= |delta| <= k} |D^delta b|."""
        out = np.zeros(self.T.shape)
        for order in range(2, k + 1):
            for index in multi_indices(order, self.d):
                out = np.maximum(out, np.max(np.abs(self.b_deriv(index)), axis=0))
        return out

    def rho(self, k: int) -> np.ndarray:
        """max_{|eta| <= k} |D^eta c|, floored at the substitute bound."""
        out = np.abs(self.c)
        for order in range(1, k + 1):
            for index in multi_indices(order, self.d):
                out = np.maximum(out, np.abs(self.c_deriv(index)))
        return np.maximum(out, self.rho_floor)

    def q_growth(self, k: int) -> np.ndarray:
        """max over |beta| in {1, 3}, |beta| <= k, of |D^beta q_ij|."""
        out = np.zeros(self.T.shape)
        for order in (1, 3):
            if order > k:
                continue
            for index in multi_indices(order, self.d):
                out = np.maximum(out, np.max(np.abs(self.q_deriv(index)), axis=(0, 1)))
        return out

    def second_order_form(self) -> np.ndarray:
        """Largest eigenvalue of A -> sum D_hk q_ij a_ij a_hk on symmetric matrices."""
        d = self.d
        second = {}
        for h in range(d):
            for k in range(h, d):
                second[(h, k)] = second[(k, h)] = self.q_deriv((h, k))
        basis = _symmetric_basis(d)
        m = len(basis)
        T = np.zeros((m, m) + self.T.shape)
        for a, Ea in enumerate(basis):
            for bidx, Eb in enumerate(basis):
                total = np.zeros(self.T.shape)
                for h in range(d):
                    for k in range(d):
                        if Eb[h, k] == 0.0:
                            continue
                        total = total + Eb[h, k] * np.einsum("ij,ij...->...", Ea, second[(h, k)])
                T[a, bidx] = total
        return _sym_eigvals(T)[..., -1]

    def generator_of(self, phi: CoefficientField) -> np.ndarray:
        """A phi at the sample points from phi's registered derivatives."""
        d = self.d
        value = phi(self.T, self.X)
        out = self.c * value
        for i in range(d):
            out = out + self.b[i] * phi.derivative((i,), self.T, self.X)
            for j in range(d):
                out = out + self.Q[i, j] * phi.derivative((i, j), self.T, self.X)
        return out


# ======================================================================
# individual checks
# ======================================================================

Slacks = Dict[str, np.ndarray]
Check = Callable[[_Samples, Dict[str, float], np.ndarray, int], Slacks]


def _infer(consts: Dict[str, float], inferred: List[str], key: str, values: np.ndarray,
           inner: np.ndarray, floor: Optional[float] = None) -> float:
    """Declared constant, or the sup of ``values`` on the inference box."""
    if key not in consts:
        sup = float(np.max(values[inner])) if np.any(inner) else float(np.max(values))
        if floor is not None:
            sup = max(sup, floor)
        consts[key] = sup
        inferred.append(key)
    return consts[key]


def _gamma(consts: Dict[str, float]) -> float:
    return consts.setdefault("gamma", DEFAULT_GAMMA)


def _check_holder(s: _Samples, consts, inner, k, inferred) -> Slacks:
    if s.X.shape[2] < 2:
        return {}
    step = float(s.X[0, 0, 1].ravel()[0] - s.X[0, 0, 0].ravel()[0])
    ratios = []
    for values in (s.Q.reshape((-1,) + s.T.shape), s.b.reshape((-1,) + s.T.shape), s.c[None]):
        diff = np.abs(np.diff(values, axis=2)) / abs(step) ** s.spec.Q.holder_exponent
        ratios.append(np.max(diff, axis=0))
    ratio = np.maximum.reduce(ratios)
    bound = consts.setdefault("holder_bound", float(np.max(ratio)))
    return {"": bound - ratio}


def _check_ellipticity(s: _Samples, consts, inner, k, inferred) -> Slacks:
    if "nu0" not in consts:
        consts["nu0_sampled"] = float(np.min(s.nu))
    return {
        "symmetry": SYMMETRY_TOLERANCE - s.asymmetry,
        "ellipticity": s.nu - consts.get("nu0", 0.0),
    }


def _check_c_bounded(s: _Samples, consts, inner, k, inferred) -> Slacks:
    c0 = _infer(consts, inferred, "c0", s.c, inner)
    return {"": c0 - s.c}


def _check_lyapunov(s: _Samples, consts, inner, k, inferred) -> Slacks:
    phi = s.spec.phi
    A_phi = s.generator_of(phi)
    phi_val = phi(s.T, s.X)
    lam = _infer(consts, inferred, "lambda", A_phi / phi_val, inner)
    return {"": lam * phi_val - A_phi}


def _check_growth(s: _Samples, consts, inner, k, inferred) -> Slacks:
    x = s.X
    weight = (1.0 + np.sum(x**2, axis=0)) * s.nu
    Qx = np.einsum("ij...,j...->i...", s.Q, x)
    lhs_q = np.sqrt(np.sum(Qx**2, axis=0)) + np.trace(s.Q)
    lhs_b = np.sum(s.b * x, axis=0)
    C1 = _infer(consts, inferred, "C1", lhs_q / weight, inner, floor=0.0)
    C2 = _infer(consts, inferred, "C2", lhs_b / weight, inner, floor=0.0)
    return {"Q": C1 * weight - lhs_q, "b": C2 * weight - lhs_b}


def _nu_power(s: _Samples, consts, exponent_key: Optional[str]) -> np.ndarray:
    return s.nu if exponent_key is None else s.nu ** _gamma(consts)


def _make_structure_check(power: Optional[str]) -> Callable:
    def check(s: _Samples, consts, inner, k, inferred) -> Slacks:
        nu_g = _nu_power(s, consts, power)
        growth = s.q_growth(k)
        C = _infer(consts, inferred, "C", growth / nu_g, inner, floor=0.0)
        r0 = _infer(consts, inferred, "r0", s.r0, inner)
        r = _infer(consts, inferred, "r", s.r(k), inner, floor=0.0)
        return {"q": C * nu_g - growth, "r0": r0 - s.r0, "b": r - s.r(k)}
    return check


def _make_dissipativity_check(power: Optional[str]) -> Callable:
    def check(s: _Samples, consts, inner, k, inferred) -> Slacks:
        nu_g = _nu_power(s, consts, power)
        L = consts.setdefault("L", 1.0)
        lhs = s.r0 + l_constant(k, s.d) * s.r(k) + L * s.rho(k) ** 2
        M = _infer(consts, inferred, "M", lhs / nu_g, inner)
        return {"": M * nu_g - lhs}
    return check


def _make_second_order_check(power: Optional[str]) -> Callable:
    def check(s: _Samples, consts, inner, k, inferred) -> Slacks:
        if k < 2:
            return {}
        nu_g = _nu_power(s, consts, power)
        form = s.second_order_form()
        K = _infer(consts, inferred, "K", form / nu_g, inner, floor=0.0)
        return {"": K * nu_g - form}
    return check


def _check_c_vanishes(s: _Samples, consts, inner, k, inferred) -> Slacks:
    return {"": -np.abs(s.c)}


def _check_reduced_dissipativity(s: _Samples, consts, inner, k, inferred) -> Slacks:
    nu0 = consts.get("nu0", consts.setdefault("nu0_sampled", float(np.min(s.nu))))
    g = _gamma(consts)
    if k == 1:
        p0 = consts.setdefault("p0", 2.0)
        C = _infer(consts, inferred, "C", s.q_growth(1) / s.nu**g, inner, floor=0.0)
        lhs = s.r0 + C**2 * s.d**3 * nu0 ** (g - 1.0) * s.nu**g / (4.0 * (p0 - 1.0))
        bound = _infer(consts, inferred, "phi_bound", lhs, inner)
        return {"": bound - lhs}
    ratio = (s.r0 + l_constant(k, s.d) * s.r(k)) / s.nu**g
    Mk = _infer(consts, inferred, f"M{k}", ratio, inner)
    return {"": Mk - ratio}


def _check_x_independent_q(s: _Samples, consts, inner, k, inferred) -> Slacks:
    origin = np.zeros_like(s.X)
    Q0 = s.spec.Q(s.T, origin)
    return {"": -np.max(np.abs(s.Q - Q0), axis=(0, 1))}


def _check_p_one_bound(s: _Samples, consts, inner, k, inferred) -> Slacks:
    lhs = s.r0 + l_prime_constant(k, s.d) * s.r(k)
    bound = _infer(consts, inferred, "p1_bound", lhs, inner)
    return {"": bound - lhs}


def _check_dissipative_lyapunov(s: _Samples, consts, inner, k, inferred) -> Slacks:
    phi = s.spec.phi
    A_phi = s.generator_of(phi)
    phi_val = phi(s.T, s.X)
    if "a2" not in consts:
        # largest a2 on a ladder for which A phi + a2 phi stays below its maximum on the inference box
        found = False
        for a2 in 2.0 ** np.arange(4, -5, -1):
            g = A_phi + a2 * phi_val
            if np.max(g) <= np.max(g[inner]) + 1e-12 * max(1.0, abs(np.max(g))):
                found = True
                break
        consts["a2"] = float(a2)
        inferred.append("a2")
        if found and "a1" not in consts:
            consts["a1"] = float(np.max(g))
            inferred.append("a1")
    a2 = consts["a2"]
    g = A_phi + a2 * phi_val
    a1 = _infer(consts, inferred, "a1", g, inner)
    return {"": a1 - g}


# ======================================================================
# profiles
# ======================================================================

@dataclass(frozen=True)
class _Item:
    key: str
    check: Callable
    needs: Callable[[OperatorSpec, int], List[str]]
    optional_phi: bool = False


def _needs_nothing(spec: OperatorSpec, k: int) -> List[str]:
    return []


def _needs_phi(spec: OperatorSpec, k: int) -> List[str]:
    if spec.phi is None:
        return []
    d = spec.d
    return spec.phi.missing(multi_indices(1, d) + multi_indices(2, d))


def _needs_structure(spec: OperatorSpec, k: int) -> List[str]:
    d = spec.d
    orders = range(1, k + 1)
    missing = spec.b.missing([i for o in orders for i in multi_indices(o, d)])
    missing += spec.Q.missing([i for o in orders if o != 2 for i in multi_indices(o, d)])
    missing += spec.c.missing([i for o in orders for i in multi_indices(o, d)])
    return missing


def _needs_second_order(spec: OperatorSpec, k: int) -> List[str]:
    return spec.Q.missing(multi_indices(2, spec.d)) if k >= 2 else []


def _needs_drift(spec: OperatorSpec, k: int) -> List[str]:
    d = spec.d
    return spec.b.missing([i for o in range(1, k + 1) for i in multi_indices(o, d)])


def _needs_reduced(spec: OperatorSpec, k: int) -> List[str]:
    missing = _needs_drift(spec, k)
    if k == 1:
        missing += spec.Q.missing(multi_indices(1, spec.d))
    return missing


def _profile_items(name: str, k: int) -> List[_Item]:
    if name == "H1.1":
        return [
            _Item("(i)", _check_holder, _needs_nothing),
            _Item("(ii)", _check_ellipticity, _needs_nothing),
            _Item("(iii)", _check_c_bounded, _needs_nothing),
            _Item("(iv)", _check_lyapunov, _needs_phi, optional_phi=True),
        ]
    if name in ("H3.1", "H4.1"):
        power = None if name == "H3.1" else "gamma"
        return [
            _Item("(ii)", _check_growth, _needs_nothing),
            _Item("(iii)", _make_structure_check(power), _needs_structure),
            _Item("(iv)", _make_dissipativity_check(power), _needs_structure),
            _Item("(v)", _make_second_order_check(power), _needs_second_order),
        ]
    if name == "H4.2":
        return [
            _Item("(c)", _check_c_vanishes, _needs_nothing),
            _Item("(iii)", _make_structure_check("gamma"), _needs_structure),
            _Item(f"({k})", _check_reduced_dissipativity, _needs_reduced),
        ]
    if name == "H4.3":
        return [
            _Item("(q)", _check_x_independent_q, _needs_nothing),
            _Item("(c)", _check_c_vanishes, _needs_nothing),
            _Item(f"({k})", _check_p_one_bound, _needs_drift),
        ]
    if name == "H5.1":
        return [
            _Item("(c)", _check_c_vanishes, _needs_nothing),
            _Item("(phi)", _check_dissipative_lyapunov, _needs_phi, optional_phi=True),
        ]
    raise DomainError(f"unknown hypothesis profile {name!r}")


_PROFILE_RE = re.compile(r"^(H1\.1|H3\.1|H4\.1|H4\.2|H4\.3|H5\.1)((?:\([^)]*\))*)$")
_NEEDS_K = ("H3.1", "H4.1", "H4.2", "H4.3")


def parse_profile(profile: str) -> Tuple[str, int, Optional[str]]:
    """Split e.g. ``"H3.1(2)"`` into (name, k, item) and ``"H1.1(iv)"`` into (name, 0, "(iv)")."""
    match = _PROFILE_RE.match(profile.replace(" ", ""))
    if not match:
        raise DomainError(f"unknown hypothesis profile {profile!r}")
    name, rest = match.groups()
    parts = re.findall(r"\(([^)]*)\)", rest)
    k = 0
    if name in _NEEDS_K:
        if not parts or parts[0] not in ("1", "2", "3"):
            raise DomainError(f"profile {name} needs k in {{1,2,3}}, e.g. {name}(1)")
        k = int(parts.pop(0))
    item = f"({parts[0]})" if parts else None
    return name, k, item


def _evaluate(spec: OperatorSpec, T: np.ndarray, X: np.ndarray, inner: np.ndarray,
              profile: str, consts: Dict[str, float], inferred: List[str],
              rho_floor: float) -> Tuple[Dict[str, Optional[np.ndarray]], Dict[str, str]]:
    name, k, only = parse_profile(profile)
    items = [it for it in _profile_items(name, k) if only is None or it.key == only]
    if not items:
        raise DomainError(f"profile {profile!r} selects no sub-hypothesis")
    missing = [m for it in items for m in it.needs(spec, k)]
    if missing:
        raise InsufficientDerivativeData(missing)
    samples = _Samples(spec, T, X, rho_floor)
    slacks: Dict[str, Optional[np.ndarray]] = {}
    notes: Dict[str, str] = {}
    for it in items:
        label = f"{name}({k}){it.key}" if k else f"{name}{it.key}"
        if it.optional_phi and spec.phi is None:
            slacks[label] = None
            notes[label] = "no Lyapunov function supplied"
            continue
        for part, slack in it.check(samples, consts, inner, k, inferred).items():
            key = f"{label}.{part}" if part else label
            slacks[key] = slack
            if it.check is _check_holder:
                notes[key] = "heuristic: finite-difference ratio on neighbouring samples"
    return slacks, notes


def _verdict(slack: Optional[np.ndarray], T: np.ndarray, X: np.ndarray, note: str) -> Verdict:
    if slack is None:
        return Verdict("not-checkable", note=note)
    flat = int(np.argmin(slack))
    idx = np.unravel_index(flat, slack.shape)
    worst = float(slack[idx])
    if worst >= 0.0:
        return Verdict("satisfied", worst, note=note)
    witness = {"t": float(T[idx]), "x": [float(X[(i,) + idx]) for i in range(X.shape[0])], "slack": worst}
    return Verdict("violated", worst, witness, note)


def check_hypotheses(spec: OperatorSpec, profile: str,
                     window: Optional[SamplingWindow] = None) -> HypothesisReport:
    """
    Evaluate a hypothesis profile on every sample point of ``window``.

    Args:
        spec: Operator under test
        profile: "H1.1", "H3.1(k)", "H4.1(k)", "H4.2(k)", "H4.3(k)", "H5.1",
            optionally followed by a sub-item such as "(iv)"
        window: Sampling window (defaults to 64 x 128^d on |x| <= 10)

    Returns:
        HypothesisReport with worst slack per inequality and the constants used
    """
    window = window or SamplingWindow()
    T, X = window.points(spec)
    inner = window.inference_mask(X)
    consts: Dict[str, float] = dict(spec.declared_params)
    inferred: List[str] = []
    slacks, notes = _evaluate(spec, T, X, inner, profile, consts, inferred, window.rho_floor)
    verdicts = {key: _verdict(slack, T, X, notes.get(key, "")) for key, slack in slacks.items()}
    for key, verdict in verdicts.items():
        if verdict.status == "violated":
            logger.info("%s violated at %s (slack %.3g)", key, verdict.witness, verdict.worst_slack)
    return HypothesisReport(profile, verdicts, window.to_dict(), consts, inferred)


def reevaluate_witness(spec: OperatorSpec, report: HypothesisReport, key: str) -> float:
    """Recompute the slack of ``key`` at its recorded witness point with the report's constants."""
    verdict = report.verdicts[key]
    if verdict.witness is None:
        raise DomainError(f"{key} has no witness")
    T = np.array([[verdict.witness["t"]]])
    X = np.array(verdict.witness["x"], dtype=float).reshape((spec.d, 1, 1))
    consts = dict(report.constants)
    profile = key.split(".")[0]
    if profile.startswith("Lp"):
        slacks = _lp_slacks(spec, T, X, np.ones_like(T, dtype=bool), consts, [])
    else:
        slacks, _ = _evaluate(spec, T, X, np.ones_like(T, dtype=bool), profile, consts, [],
                              report.window.get("rho_floor", DEFAULT_RHO_FLOOR))
    return float(slacks[key].ravel()[0])


# ======================================================================
# L^p(R^d) preservation
# ======================================================================

def _lp_slacks(spec: OperatorSpec, T: np.ndarray, X: np.ndarray, inner: np.ndarray,
               consts: Dict[str, float], inferred: List[str]) -> Dict[str, np.ndarray]:
    d = spec.d
    b = spec.b(T, X)
    beta = np.array(b, dtype=float)
    div = np.zeros(T.shape)
    for i in range(d):
        div = div + spec.b.derivative((i,), T, X)[i]
        for j in range(d):
            beta[i] = beta[i] - spec.Q.derivative((j,), T, X)[i, j]
            div = div - spec.Q.derivative((i, j), T, X)[i, j]
    nu = _sym_eigvals(spec.Q(T, X))[..., 0]
    beta2 = np.sum(beta**2, axis=0)
    K0 = _infer(consts, inferred, "K0", -div, inner, floor=0.0)
    K1 = _infer(consts, inferred, "K1", beta2 / nu, inner, floor=0.0)
    return {"Lp(a)": div + K0, "Lp(b)": K1 * nu - beta2}


def check_lp_preservation(spec: OperatorSpec, window: Optional[SamplingWindow] = None) -> HypothesisReport:
    """
    Conditions for G(t,s) to preserve L^p(R^d): (a) div beta >= -K0 and
    (b) |beta|^2 <= K1 nu, with beta_i = b_i - sum_j D_j q_ij.
    """
    d = spec.d
    missing = spec.Q.missing(multi_indices(1, d) + multi_indices(2, d)) + spec.b.missing(multi_indices(1, d))
    if missing:
        raise InsufficientDerivativeData(missing)
    window = window or SamplingWindow()
    T, X = window.points(spec)
    inner = window.inference_mask(X)
    consts: Dict[str, float] = dict(spec.declared_params)
    inferred: List[str] = []
    slacks = _lp_slacks(spec, T, X, inner, consts, inferred)
    verdicts = {key: _verdict(slack, T, X, "") for key, slack in slacks.items()}
    return HypothesisReport("Lp", verdicts, window.to_dict(), consts, inferred)


# ======================================================================
# the operator on grid functions
# ======================================================================

def apply_operator(spec: OperatorSpec, u: GridFunction, t: float) -> GridFunction:
    """
    Tr(Q D^2 u) + <b, grad u> + c u with second-order central stencils.

    The outer layer of one cell uses one-sided stencils and is flagged.
    """
    if u.n < MIN_GRID_POINTS:
        raise GridTooCoarse(u.n, MIN_GRID_POINTS)
    if u.d != spec.d:
        raise DomainError(f"grid dimension {u.d} does not match operator dimension {spec.d}")
    X = u.coordinates()
    Q, b, c = spec.Q(t, X), spec.b(t, X), spec.c(t, X)
    v, h = u.values, u.h
    out = c * v
    grads = [first_derivative(v, h, i) for i in range(spec.d)]
    for i in range(spec.d):
        out = out + Q[i, i] * second_derivative(v, h, i) + b[i] * grads[i]
        for j in range(i + 1, spec.d):
            out = out + 2.0 * Q[i, j] * first_derivative(grads[i], h, j)
    flagged = np.zeros(v.shape, dtype=bool)
    for axis in range(spec.d):
        edge = [slice(None)] * spec.d
        edge[axis] = [0, -1]
        flagged[tuple(edge)] = True
    return u.with_values(out, flagged=flagged)


def sample_quantities(spec: OperatorSpec, window: Optional[SamplingWindow] = None,
                      k: int = 1) -> Dict[str, np.ndarray]:
    """
    Flattened samples on the window: nu and Lambda (extreme eigenvalues of Q),
    r0 = lambda_max(sym Jac b), r (order <= k) and c.
    """
    window = window or SamplingWindow()
    T, X = window.points(spec)
    s = _Samples(spec, T, X, window.rho_floor)
    out = {"nu": s.nu.ravel(), "Lambda": s.eigenvalues[..., -1].ravel(), "r0": s.r0.ravel(), "c": s.c.ravel()}
    out["r"] = s.r(k).ravel() if k >= 2 else np.zeros_like(out["r0"])
    return out
