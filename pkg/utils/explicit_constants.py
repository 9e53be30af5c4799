"""
Explicit constants of the derivative estimates and functional inequalities.

Every calculator is a pure function of a ConstantInputs record. Each final
value is produced by a formula registered in ``FORMULAS`` from a dictionary
of intermediate quantities, so a ConstantEntry can be re-evaluated from its
recorded intermediates and reproduce the value bit-for-bit.

Naming of the rate functions:
  sigma_kp   rate of |D^k G f|^p <= e^{sigma r} G (sum_{j<=k} |D^j f|^2)^{p/2}
  phi_pk     rate of |D^k G f|^p <= e^{p phi r} G (sum_{1<=j<=k} |D^j f|^2)^{p/2}
  gamma_hk   Gamma^{(2)}_{p,k-1,k}(r) for the one-order-gain estimate
"""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from utils.constants import (
    DEFAULT_ALPHA,
    DEFAULT_GAMMA,
    DEFAULT_K1P,
    DEFAULT_K2P,
    EPS0_UPPER_BOUND,
    GOLDEN_SECTION_TOLERANCE,
    SIGMA_ZERO_THRESHOLD,
)
from utils.errors import DomainError, UnsupportedOperation


# ======================================================================
# inputs and reports
# ======================================================================

@dataclass(frozen=True, eq=False)
class ConstantInputs:
    """Hypothesis constants and sampled quantities feeding the calculators."""
    d: int
    p: float
    k: int = 1
    gamma: float = DEFAULT_GAMMA
    nu0: float = 1.0
    c0: float = 0.0
    M: float = 0.0
    L: float = 1.0
    K: float = 0.0
    C: float = 0.0
    r0: float = 0.0
    Lambda0: Optional[float] = None
    M_k: Optional[float] = None
    p0: Optional[float] = None
    sup_term: Optional[float] = None
    nu_samples: Optional[np.ndarray] = None
    r0_samples: Optional[np.ndarray] = None
    r_samples: Optional[np.ndarray] = None
    alpha: float = DEFAULT_ALPHA
    K1p: float = DEFAULT_K1P
    K2p: float = DEFAULT_K2P
    p_one_pathway: bool = False

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise DomainError(f"k must be 1, 2 or 3 (got {self.k})")
        if self.d < 1:
            raise DomainError("dimension must be at least 1")
        if not self.nu0 > 0:
            raise DomainError("nu0 must be positive")
        if not self.L > 0:
            raise DomainError("L must be positive")
        for name in ("nu_samples", "r0_samples", "r_samples"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(value, dtype=float)).ravel())

    def with_(self, **changes: Any) -> "ConstantInputs":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, np.ndarray):
                out[key] = {"samples": int(value.size), "min": float(value.min()), "max": float(value.max())}
            else:
                out[key] = value
        return out


@dataclass(frozen=True)
class ConstantEntry:
    """One constant with the formula that produced it and its intermediates."""
    name: str
    formula: str
    value: float
    intermediates: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "formula": self.formula, "value": self.value,
                "intermediates": dict(self.intermediates)}


@dataclass
class ConstantReport:
    """Named constants computed from one set of inputs."""
    inputs: Dict[str, Any]
    entries: Dict[str, ConstantEntry] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    def add(self, entry: ConstantEntry) -> None:
        self.entries[entry.name] = entry

    def value(self, name: str) -> float:
        return self.entries[name].value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "inputs": self.inputs,
            "constants": {k: v.to_dict() for k, v in self.entries.items()},
            "errors": dict(self.errors),
        }


def _positive_part(x: float) -> float:
    return x if x > 0.0 else 0.0


def _ratio(sigma: float, r: float) -> float:
    """(e^{sigma r} - 1) / sigma, with the r substitution near sigma = 0."""
    if abs(sigma) < SIGMA_ZERO_THRESHOLD:
        return r
    return math.expm1(sigma * r) / sigma


def _prefactor(sigma: float, r: float) -> float:
    """sigma / (1 - e^{-sigma r}), with the 1/r substitution near sigma = 0."""
    if abs(sigma) < SIGMA_ZERO_THRESHOLD:
        return 1.0 / r
    return -sigma / math.expm1(-sigma * r)


def _gamma_hk_value(i: Dict[str, float]) -> float:
    p = i["p"]
    lower = _ratio(i["sigma_lower"], i["r"])
    bracket = (i["alpha"] / i["K1p"] * (1.0 + i["K2p"] * lower)) ** (p / 2.0) * lower ** (1.0 - p / 2.0)
    return _prefactor(i["sigma_upper"], i["r"]) * (bracket + i["r"])


FORMULAS: Dict[str, Callable[[Dict[str, float]], float]] = {
    "sigma_kp": lambda i: _positive_part(i["p"] * i["sup"] + i["c0"] * (i["p"] - 1.0) + i["p"] * i["c_dk"]),
    "sigma_kp_large_p": lambda i: i["p"] * i["sigma_k2"] / 2.0,
    "phi_p1": lambda i: i["sup"],
    "phi_pk": lambda i: max(v for k, v in i.items() if k.startswith("C_")),
    "phi_1k": lambda i: i["sup"],
    "table": lambda i: i["value"],
    "gamma_hk": _gamma_hk_value,
    "gamma_hk_large_p": lambda i: i["gamma_2"] ** (i["p"] / 2.0),
    "gamma_kk": lambda i: math.exp(i["sigma"] * i["r"]),
    "gamma_composite": lambda i: math.prod(v for k, v in sorted(i.items()) if k.startswith("factor_")),
    "hypercontractivity_threshold": lambda i: i["Lambda0"] * math.log((i["q"] - 1.0) / (i["p"] - 1.0))
    / (2.0 * i["nu0"] * abs(i["r0"])),
    "log_sobolev_constant": lambda i: i["p"] ** 2 * i["Lambda0"] / (2.0 * abs(i["r0"])),
    "poincare_constant": lambda i: i["C2"] / 2.0,
    "lebesgue_bound_constant": lambda i: math.exp(i["K0"] * i["r"] / i["p"]),
    "sobolev_bound_constant": lambda i: i["base"] + i["weight"] * sum(
        v ** (1.0 / i["p"]) for k, v in sorted(i.items()) if k.startswith("gamma_")) + 1.0,
}


def recompute(entry: ConstantEntry) -> float:
    """Re-evaluate a recorded constant from its intermediates."""
    return FORMULAS[entry.formula](dict(entry.intermediates))


def _entry(name: str, formula: str, intermediates: Dict[str, float]) -> ConstantEntry:
    clean = {k: float(v) for k, v in intermediates.items()}
    return ConstantEntry(name, formula, FORMULAS[formula](clean), clean)


# ======================================================================
# tabulated constants
# ======================================================================

def l_constant(k: int, d: int) -> float:
    """L_k of the third-order Bernstein computation (L_1 = 0)."""
    if k == 1:
        return 0.0
    if k == 2:
        return d**1.5 / math.sqrt(8.0)
    if k == 3:
        return 2.0 / math.sqrt(5.0) if d == 1 else math.sqrt(d**3 * (d + 1) / 3.0)
    raise DomainError(f"k must be 1, 2 or 3 (got {k})")


def l_prime_constant(k: int, d: int) -> float:
    """L'_k of the p = 1 pathway; the k = 1 bound uses r0 alone."""
    if k == 1:
        return 0.0
    if k == 2:
        return (d / 2.0) ** 1.5
    if k == 3:
        return d * math.sqrt(3.0 * (d + d**2)) / 3.0
    raise DomainError(f"k must be 1, 2 or 3 (got {k})")


def c_dk(k: int, d: int, L: float) -> float:
    if k == 1:
        return d / (4.0 * L)
    if k == 2:
        return 3.0 * d**2 / (4.0 * L)
    return 7.0 * d**2 * max(5.0, 3.0 * d**2) / (12.0 * L)


def c_k(inputs: ConstantInputs, p: Optional[float] = None) -> float:
    """Coefficient of nu^gamma in the sigma_{k,p} supremum."""
    p = inputs.p if p is None else p
    d, nu0, g, C, K, M = inputs.d, inputs.nu0, inputs.gamma, inputs.C, inputs.K, inputs.M
    base = C**2 * d**3 * nu0 ** (g - 1.0) / (p - 1.0)
    if inputs.k == 1:
        return base / 4.0 + M
    if inputs.k == 2:
        return max(base / 2.0 + M, (p - 1.0) / 2.0 * nu0 ** (1.0 - g) + base + K + 2.0 * M)
    return max(
        3.0 * base / 4.0 + M,
        (p - 1.0) * nu0 ** (1.0 - g) / 3.0 + 3.0 * base * (d + 2) / 4.0 + K + 2.0 * M,
        (d + 2) * (p - 1.0) * nu0 ** (1.0 - g) / 3.0 + 3.0 * base / 4.0 + 3.0 * K + 3.0 * M,
    )


def _nu_window(inputs: ConstantInputs) -> np.ndarray:
    """Sampled nu values, or the degenerate window nu = nu0."""
    return inputs.nu_samples if inputs.nu_samples is not None else np.array([inputs.nu0])


# ======================================================================
# sigma_{k,p}
# ======================================================================

def sigma_entry(inputs: ConstantInputs) -> ConstantEntry:
    p = inputs.p
    if p <= 1.0:
        raise UnsupportedOperation("p <= 1 unsupported for sigma_{k,p}; use the p=1 pathway")
    name = f"sigma_{inputs.k},p"
    if p > 2.0:
        base = sigma_entry(inputs.with_(p=2.0))
        return _entry(name, "sigma_kp_large_p", {"p": p, "sigma_k2": base.value})
    ck = c_k(inputs)
    if inputs.nu_samples is not None:
        nu = inputs.nu_samples
        sup = float(np.max((1.0 - p) * nu + ck * nu**inputs.gamma))
    elif inputs.sup_term is not None:
        sup = inputs.sup_term
    else:
        raise DomainError("missing sup term: supply sup_term or nu_samples")
    return _entry(name, "sigma_kp", {"p": p, "sup": sup, "c0": inputs.c0,
                                      "c_dk": c_dk(inputs.k, inputs.d, inputs.L), "c_k": ck})


def sigma_kp(inputs: ConstantInputs) -> float:
    """Rate sigma_{k,p} of the uniform-in-order estimate Gamma_{p,k,k}(r) = e^{sigma r}."""
    return sigma_entry(inputs).value


# ======================================================================
# phi_{p,k}
# ======================================================================

def _c_functions(inputs: ConstantInputs, eps0: float) -> Dict[str, float]:
    """
    Candidates whose maximum over eps0 is phi_{p,k}.

    For k = 3 the order-four term is absorbed with eps = (p-1) nu0^{1-gamma} / (3 C d),
    which gives 9 base / 4 and (2+d)(p-1) nu0^{1-gamma} / 3 in C_3. The order-two
    coefficient picks up only the 3 base (2+d) / 4 cross term; the (p-1) / 3
    term belongs to c_k of the sigma_{k,p} supremum, not here.
    """
    p, d, g, C, K, nu0 = inputs.p, inputs.d, inputs.gamma, inputs.C, inputs.K, inputs.nu0
    Mk = inputs.M_k
    nu = _nu_window(inputs)
    base = C**2 * d**3 * nu0 ** (g - 1.0) / (p - 1.0)
    out = {"C_1": (C * d**2 / (4.0 * eps0) + Mk) * nu0**g}
    if inputs.k == 2:
        coeff = C * eps0 * d + (p - 1.0) / 2.0 * nu0 ** (1.0 - g) + base + K + 2.0 * Mk
        out["C_2"] = float(np.max((1.0 - p) * nu + coeff * nu**g))
    else:
        coeff2 = C * eps0 * d + 3.0 * base * (2 + d) / 4.0 + K + 2.0 * Mk
        coeff3 = (2 + d) * (p - 1.0) * nu0 ** (1.0 - g) / 3.0 + 9.0 * base / 4.0 + 3.0 * K + 3.0 * Mk
        out["C_2"] = float(np.max((1.0 - p) * nu + coeff2 * nu**g))
        out["C_3"] = float(np.max((1.0 - p) * nu + coeff3 * nu**g))
    return out


def phi_entry(inputs: ConstantInputs) -> ConstantEntry:
    if inputs.p_one_pathway:
        return phi_1k_entry(inputs)
    p, k = inputs.p, inputs.k
    if p <= 1.0:
        raise UnsupportedOperation("p <= 1 unsupported for phi_{p,k}; use the p=1 pathway")
    name = f"phi_p,{k}"
    if k == 1:
        nu = _nu_window(inputs)
        r0 = inputs.r0_samples if inputs.r0_samples is not None else inputs.r0
        coeff = inputs.C**2 * inputs.d**3 * inputs.nu0 ** (inputs.gamma - 1.0) / (4.0 * (p - 1.0))
        sup = float(np.max(r0 + coeff * nu**inputs.gamma))
        return _entry(name, "phi_p1", {"p": p, "sup": sup})
    if p > 2.0:
        base = phi_entry(inputs.with_(p=2.0))
        return _entry(name, base.formula, {**base.intermediates, "p": p})
    if inputs.M_k is None:
        raise DomainError(f"hypothesis constant M_{k} missing")
    C, d, Mk = inputs.C, inputs.d, inputs.M_k
    lower = -C * d**2 / (4.0 * Mk) if (Mk < 0 and C > 0) else 0.0
    if not lower < EPS0_UPPER_BOUND:
        raise DomainError(f"empty admissible interval: eps0 > -C d^2/(4 M_{k}) = {lower:.6g} "
                          f"exceeds the search bound {EPS0_UPPER_BOUND:g}")
    if C == 0.0:
        eps0 = 1.0
    else:
        lo = lower + max(abs(lower), 1.0) * 1e-12
        result = minimize_scalar(lambda e: max(_c_functions(inputs, e).values()),
                                 bounds=(lo, EPS0_UPPER_BOUND), method="bounded",
                                 options={"xatol": GOLDEN_SECTION_TOLERANCE, "maxiter": 2000})
        eps0 = float(result.x)
    return _entry(name, "phi_pk", {"p": p, "eps0": eps0, **_c_functions(inputs, eps0)})


def phi_pk(inputs: ConstantInputs) -> float:
    """Rate phi_{p,k}; the estimate constant is Gamma^{(1)}_{p,k}(r) = e^{p phi r}."""
    return phi_entry(inputs).value


def phi_1k_entry(inputs: ConstantInputs) -> ConstantEntry:
    d, k = inputs.d, inputs.k
    r0 = inputs.r0_samples if inputs.r0_samples is not None else np.array([inputs.r0])
    r = inputs.r_samples if inputs.r_samples is not None else np.zeros_like(r0)
    if k == 1:
        h = r0
    elif k == 2:
        e1 = math.sqrt(d / 2.0)
        h = np.maximum(r0 + r * d**2 / (4.0 * e1), 2.0 * r0 + r * d * e1)
    else:
        e1 = math.sqrt(3.0 * (d + d**2)) / 4.0
        h = np.maximum.reduce([
            r0 + r * (d**3 + d**2) / (4.0 * e1),
            2.0 * r0 + r * d * (e1 + 3.0 * d / (4.0 * e1)),
            3.0 * r0 + 4.0 * r * e1 * d,
        ])
    return _entry(f"phi_1,{k}", "phi_1k", {"sup": float(np.max(h))})


def phi_1k(inputs: ConstantInputs) -> float:
    """Rate of the p = 1 estimate under x-independent diffusion."""
    return phi_1k_entry(inputs).value


# ======================================================================
# Gamma functions
# ======================================================================

def _check_r(r: float) -> None:
    if not r > 0:
        raise DomainError(f"r must be positive (got {r})")


def lower_rate(inputs: ConstantInputs, k: int) -> float:
    """Rate of the order below k: sigma_{k-1,p}, or p max(c0, 0) for k = 1."""
    if k == 1:
        return inputs.p * max(inputs.c0, 0.0)
    return sigma_kp(inputs.with_(k=k - 1))


def gamma_hk_entry(r: float, inputs: ConstantInputs, k: Optional[int] = None,
                   sigma_lower: Optional[float] = None,
                   sigma_upper: Optional[float] = None) -> ConstantEntry:
    _check_r(r)
    k = inputs.k if k is None else k
    name = f"Gamma_p,{k - 1},{k}"
    if inputs.p > 2.0:
        base = gamma_hk_entry(r, inputs.with_(p=2.0), k, sigma_lower, sigma_upper)
        return _entry(name, "gamma_hk_large_p", {"p": inputs.p, "gamma_2": base.value})
    if sigma_upper is None:
        sigma_upper = sigma_kp(inputs.with_(k=k))
    if sigma_lower is None:
        sigma_lower = lower_rate(inputs, k)
    return _entry(name, "gamma_hk", {
        "r": r, "p": inputs.p, "sigma_lower": sigma_lower, "sigma_upper": sigma_upper,
        "alpha": inputs.alpha, "K1p": inputs.K1p, "K2p": inputs.K2p,
    })


def gamma_hk(r: float, inputs: ConstantInputs, k: Optional[int] = None,
             sigma_lower: Optional[float] = None, sigma_upper: Optional[float] = None) -> float:
    """Gamma^{(2)}_{p,k-1,k}(r)."""
    return gamma_hk_entry(r, inputs, k, sigma_lower, sigma_upper).value


def gamma_p23(r: float, inputs: ConstantInputs, sigma_2: Optional[float] = None,
              sigma_3: Optional[float] = None) -> float:
    """
    Gamma^{(2)}_{p,2,3}(r) = sigma_3/(1-e^{-sigma_3 r}) {[alpha/K1 (1 + K2 E_2(r))]^{p/2} E_2(r)^{1-p/2} + r}

    with E_2(r) = (e^{sigma_2 r} - 1)/sigma_2, replaced by r when sigma_2 vanishes.
    """
    return gamma_hk(r, inputs, 3, sigma_2, sigma_3)


def gamma_composite_entry(r: float, inputs: ConstantInputs, h: int, k: int) -> ConstantEntry:
    _check_r(r)
    if not 0 <= h <= k <= 3:
        raise DomainError(f"need 0 <= h <= k <= 3 (got h={h}, k={k})")
    name = f"Gamma_p,{h},{k}"
    if h == k:
        sigma = sigma_kp(inputs.with_(k=k)) if k > 0 else inputs.p * max(inputs.c0, 0.0)
        return _entry(name, "gamma_kk", {"sigma": sigma, "r": r})
    parts = k - h
    factors = {f"factor_{j}": gamma_hk(r / parts, inputs, j) for j in range(h + 1, k + 1)}
    return _entry(name, "gamma_composite", factors)


def gamma_composite(r: float, inputs: ConstantInputs, h: int, k: int) -> float:
    """Gamma^{(2)}_{p,h,k}(r) chained from one-order gains over k-h equal sub-intervals."""
    return gamma_composite_entry(r, inputs, h, k).value


# ======================================================================
# Section-5 constants
# ======================================================================

def hypercontractivity_entry(p: float, q: float, Lambda0: float, nu0: float, r0: float) -> ConstantEntry:
    if not 1.0 < p:
        raise DomainError("p must exceed 1")
    if p >= q:
        raise DomainError(f"need p < q (got p={p}, q={q})")
    if r0 >= 0:
        raise DomainError("gradient estimate of negative type required (r0 < 0)")
    if not nu0 > 0 or Lambda0 < nu0:
        raise DomainError("need Lambda0 >= nu0 > 0")
    return _entry("hypercontractivity_threshold", "hypercontractivity_threshold",
                  {"p": p, "q": q, "Lambda0": Lambda0, "nu0": nu0, "r0": r0})


def hypercontractivity_threshold(p: float, q: float, Lambda0: float, nu0: float, r0: float) -> float:
    """Elapsed time after which G(t,s) maps L^p(mu_s) into L^q(mu_t) contractively."""
    return hypercontractivity_entry(p, q, Lambda0, nu0, r0).value


def log_sobolev_entry(p: float, Lambda0: float, r0: float) -> ConstantEntry:
    if not p > 1.0:
        raise DomainError("p must exceed 1")
    if r0 >= 0:
        raise DomainError("gradient estimate of negative type required (r0 < 0)")
    if not Lambda0 > 0:
        raise DomainError("Lambda0 must be positive")
    return _entry(f"C_{p:g}", "log_sobolev_constant", {"p": p, "Lambda0": Lambda0, "r0": r0})


def log_sobolev_constant(p: float, Lambda0: float, r0: float) -> float:
    return log_sobolev_entry(p, Lambda0, r0).value


def poincare_constant(Lambda0: float, r0: float) -> float:
    """C_2 / 2."""
    c2 = log_sobolev_constant(2.0, Lambda0, r0)
    return _entry("poincare", "poincare_constant", {"C2": c2}).value


def lebesgue_bound_constant(r: float, K0: float, p: float) -> float:
    """||G(t,s)||_{L^p(R^d)} bound e^{K0 r / p} when div beta >= -K0."""
    _check_r(r)
    if p < 1.0:
        raise DomainError("p must be at least 1")
    return _entry("c_00p", "lebesgue_bound_constant", {"K0": K0, "r": r, "p": p}).value


def sobolev_bound_entry(r: float, inputs: ConstantInputs, h: int, k: int) -> ConstantEntry:
    """
    Constant of ||G(t,s) f||_{W^{k,p}(mu_t)} <= C(t-s) ||f||_{W^{h,p}(mu_s)}.

    Built from the pointwise estimates integrated against the evolution
    system of measures; the mixing weight max(2^{1/2-1/p}, 1) comes from
    comparing (sum a_j^2)^{p/2} with sum a_j^p.
    """
    _check_r(r)
    if not 0 <= h <= k <= 3:
        raise DomainError(f"need 0 <= h <= k <= 3 (got h={h}, k={k})")
    p = inputs.p
    mix = max(2.0 ** (0.5 - 1.0 / p), 1.0)
    if h == 0 and k == 0:
        return _entry("C~_0,0", "sobolev_bound_constant", {"p": p, "base": 0.0, "weight": 0.0})
    if h == k:
        gammas = {f"gamma_{j}": gamma_composite(r, inputs, j, j) for j in range(1, h + 1)}
        return _entry(f"C~_{h},{h}", "sobolev_bound_constant",
                      {"p": p, "base": 0.0, "weight": mix, **gammas})
    if h <= 1:
        gammas = {f"gamma_{j}": gamma_composite(r, inputs, h, j) for j in range(h, k + 1)}
        return _entry(f"C~_{h},{k}", "sobolev_bound_constant",
                      {"p": p, "base": 0.0, "weight": mix**h, **gammas})
    below = sobolev_bound_entry(r, inputs, h - 1, h - 1).value
    gammas = {f"gamma_{j}": gamma_composite(r, inputs, h, j) for j in range(h, k + 1)}
    return _entry(f"C~_{h},{k}", "sobolev_bound_constant",
                  {"p": p, "base": below, "weight": mix, **gammas})


def sobolev_bound_constant(r: float, inputs: ConstantInputs, h: int, k: int) -> float:
    return sobolev_bound_entry(r, inputs, h, k).value


# ======================================================================
# full report
# ======================================================================

def build_report(inputs: ConstantInputs, r: Optional[float] = None,
                 q: Optional[float] = None) -> ConstantReport:
    """
    Evaluate every constant computable from ``inputs``.

    Calculators whose preconditions fail are listed under ``errors``
    instead of aborting the report.
    """
    report = ConstantReport(inputs=inputs.to_dict())
    jobs: Sequence[Tuple[str, Callable[[], ConstantEntry]]] = [
        ("sigma_kp", lambda: sigma_entry(inputs)),
        ("phi_pk", lambda: phi_entry(inputs)),
        ("L_k", lambda: _entry("L_k", "table", {"value": l_constant(inputs.k, inputs.d)})),
        ("L'_k", lambda: _entry("L'_k", "table", {"value": l_prime_constant(inputs.k, inputs.d)})),
    ]
    if r is not None:
        jobs = list(jobs) + [
            ("gamma_hk", lambda: gamma_hk_entry(r, inputs)),
            ("gamma_kk", lambda: gamma_composite_entry(r, inputs, inputs.k, inputs.k)),
            ("gamma_0k", lambda: gamma_composite_entry(r, inputs, 0, inputs.k)),
            ("sobolev_bound", lambda: sobolev_bound_entry(r, inputs, 0, inputs.k)),
        ]
    if inputs.Lambda0 is not None:
        jobs = list(jobs) + [("log_sobolev_constant", lambda: log_sobolev_entry(inputs.p, inputs.Lambda0, inputs.r0))]
        if q is not None:
            jobs = list(jobs) + [("hypercontractivity_threshold", lambda: hypercontractivity_entry(
                inputs.p, q, inputs.Lambda0, inputs.nu0, inputs.r0))]
    for key, job in jobs:
        try:
            entry = job()
        except (DomainError, UnsupportedOperation) as exc:
            report.errors[key] = str(exc)
            continue
        report.add(entry)
    return report
