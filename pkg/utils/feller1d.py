"""
Feller's integrability test for one-dimensional operators q D_xx + b D_x.

W(x) = exp(-int_0^x b/q),  Q(x) = (q W)^{-1} int_0^x W,  R(x) = W int_0^x (q W)^{-1}.

Bounded solutions of lambda u - A u = f are unique iff R is not integrable
near +inf and near -inf. Every quantity is tabulated as a logarithm on a
fine grid: log W by cumulative trapezoid, and integrals of exp(g) by a
cell rule that is exact when g is linear on the cell, accumulated with
log-sum-exp so that weights like exp(x^4/4) never overflow.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import logsumexp

from utils.coefficients import CoefficientField
from utils.constants import (
    DEFAULT_FELLER_CUTOFFS,
    FELLER_DECAY_RATIO,
    FELLER_INCREMENT_FLOOR,
    FELLER_TAIL_WINDOW,
    MIN_FELLER_CUTOFFS,
)
from utils.errors import DomainError

logger = logging.getLogger(__name__)

TABLE_SPACING = 1e-3
# integrand power x^a decides: a < -1 - margin integrable, a > -1 + margin not
POWER_MARGIN = 0.5
PROBE_CUTOFFS = (4.0, 8.0, 16.0, 32.0, 64.0)

INTEGRABLE = "integrable"
NON_INTEGRABLE = "non-integrable"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class FellerProblem:
    """Autonomous 1-D coefficients q > 0 and b; lambda is recorded only."""
    q: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    lam: float = 1.0
    name: str = "operator"

    @classmethod
    def from_coefficients(cls, Q: CoefficientField, b: CoefficientField, lam: float = 1.0,
                          t: float = 0.0, name: str = "operator") -> "FellerProblem":
        if Q.d != 1 or b.d != 1:
            raise DomainError("Feller classification is one-dimensional")
        return cls(lambda x: Q(t, np.asarray(x, dtype=float)[None])[0, 0],
                   lambda x: b(t, np.asarray(x, dtype=float)[None])[0], lam, name)

    def reflect(self) -> "FellerProblem":
        """x -> -x: q(-x) and -b(-x)."""
        q, b = self.q, self.b
        return FellerProblem(lambda x: q(-np.asarray(x)), lambda x: -b(-np.asarray(x)), self.lam,
                             f"reflected {self.name}")

    def scaled(self, factor: float) -> "FellerProblem":
        if not factor > 0:
            raise DomainError("scaling factor must be positive")
        q = self.q
        return FellerProblem(lambda x: factor * q(x), self.b, self.lam, f"{factor:g} x {self.name}")


@dataclass
class FellerVerdict:
    r_integrability: Dict[str, str]
    q_integrability: Dict[str, str]
    conclusion: str
    evidence: Dict[str, Any] = field(default_factory=dict)
    lam: float = 1.0
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "R": dict(self.r_integrability),
            "Q": dict(self.q_integrability),
            "conclusion": self.conclusion,
            "lambda": self.lam,
            "evidence": self.evidence,
            "notes": list(self.notes),
        }


# ======================================================================
# log-space tables
# ======================================================================

def _log_cell_integrals(g: np.ndarray, h: float) -> np.ndarray:
    """log int over each cell of exp(g), exact for g linear on the cell."""
    left, right = g[:-1], g[1:]
    delta = right - left
    with np.errstate(divide="ignore", invalid="ignore"):
        # log((e^delta - 1) / delta) relative to the larger endpoint
        shift = np.maximum(left, right)
        mag = np.abs(delta)
        factor = np.where(mag > 1e-12, np.log(-np.expm1(-mag)) - np.log(np.where(mag > 0, mag, 1.0)), 0.0)
    return shift + math.log(h) + factor


def _log_cumulative(g: np.ndarray, h: float) -> np.ndarray:
    """log int_0^{y_i} exp(g) for every node (first entry -inf)."""
    cells = _log_cell_integrals(g, h)
    return np.concatenate([[-np.inf], np.logaddexp.accumulate(cells)])


class _SideTables:
    """Tables on x = sign * y, y in [0, extent]."""

    def __init__(self, problem: FellerProblem, sign: int, extent: float, spacing: float = TABLE_SPACING):
        n = int(math.ceil(extent / spacing)) + 1
        self.y = np.linspace(0.0, extent, n)
        self.h = self.y[1] - self.y[0]
        x = sign * self.y
        with np.errstate(over="ignore", invalid="ignore"):
            q = np.asarray(problem.q(x), dtype=float)
            b = np.asarray(problem.b(x), dtype=float)
            if np.any(q <= 0):
                raise DomainError("q must be positive")
            # int_0^x b/q = sign * int_0^y b(sign y')/q dy'
            self.log_w = -sign * cumulative_trapezoid(b / q, self.y, initial=0.0)
            self.log_q = np.log(q)
            self.log_int_w = _log_cumulative(self.log_w, self.h)
            self.log_int_inv = _log_cumulative(-self.log_q - self.log_w, self.h)
            self.log_Q = self.log_int_w - self.log_q - self.log_w
            self.log_R = self.log_w + self.log_int_inv

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.log_w[1:])) and np.all(np.isfinite(self.log_R[1:]))
                    and np.all(np.isfinite(self.log_Q[1:])))

    def at(self, table: np.ndarray, y: float) -> float:
        return float(np.interp(y, self.y, table))

    def log_tail(self, table: np.ndarray, start: float, stop: float) -> float:
        """log int_start^stop |f| for the tabulated log|f|."""
        mask = (self.y >= start - 1e-12) & (self.y <= stop + 1e-12)
        cells = _log_cell_integrals(table[mask], self.h)
        return float(logsumexp(cells))


def _log_difference(big: float, small: float) -> float:
    if not big > small:
        return -np.inf
    return big + math.log(-math.expm1(small - big))


def _judge_tail(tables: _SideTables, table: np.ndarray, cutoffs: Sequence[float]) -> Dict[str, Any]:
    """Integrability of |f| on [1, inf) from tail integrals at the cutoffs."""
    logs = [tables.log_tail(table, 1.0, X) for X in cutoffs]
    widths = np.diff([1.0] + list(cutoffs))
    # increments per unit length between consecutive cutoffs
    increments = [logs[0] - math.log(widths[0])]
    for j in range(1, len(logs)):
        increments.append(_log_difference(logs[j], logs[j - 1]) - math.log(widths[j]))
    ratios = [math.exp(min(increments[j] - increments[j - 1], 700.0)) if np.isfinite(increments[j - 1]) else np.inf
              for j in range(1, len(increments))]
    last_ratios = ratios[-FELLER_TAIL_WINDOW:]
    tail_points = list(cutoffs[-FELLER_TAIL_WINDOW:])
    values = [tables.at(table, X) for X in tail_points]
    slope = float(np.polyfit(np.log(tail_points), values, 1)[0])
    last_increment = math.exp(increments[-1]) if increments[-1] < 700 else np.inf

    if all(r < FELLER_DECAY_RATIO for r in last_ratios) or slope < -1.0 - POWER_MARGIN:
        verdict = INTEGRABLE
    elif slope > -1.0 + POWER_MARGIN and last_increment > FELLER_INCREMENT_FLOOR:
        verdict = NON_INTEGRABLE
    elif all(r >= 1.0 for r in last_ratios) and last_increment > FELLER_INCREMENT_FLOOR:
        verdict = NON_INTEGRABLE
    else:
        verdict = UNDECIDED
    return {"verdict": verdict, "log_tail_integrals": logs, "increment_ratios": ratios,
            "log_log_slope": slope}


def classify(problem: FellerProblem, cutoffs: Sequence[float] = DEFAULT_FELLER_CUTOFFS,
             spacing: float = TABLE_SPACING) -> FellerVerdict:
    """
    Decide integrability of R (and Q) near +inf and -inf from tail integrals
    over [1, X] for each cutoff X.

    Returns:
        FellerVerdict; "unique bounded solution" needs R non-integrable at
        both ends, "infinitely many bounded solutions" integrable at both
    """
    cutoffs = sorted(float(X) for X in cutoffs)
    if len(cutoffs) < MIN_FELLER_CUTOFFS:
        raise DomainError(f"need at least {MIN_FELLER_CUTOFFS} cutoffs, got {len(cutoffs)}")
    if cutoffs[0] <= 1.0:
        raise DomainError("cutoffs must exceed 1")
    r_verdicts, q_verdicts, evidence, notes = {}, {}, {}, []
    for label, sign in (("+inf", 1), ("-inf", -1)):
        tables = _SideTables(problem, sign, cutoffs[-1], spacing)
        if not tables.finite:
            r_verdicts[label] = q_verdicts[label] = UNDECIDED
            notes.append(f"overflow in log-domain tables near {label}")
            logger.warning("Feller tables overflow near %s for %s", label, problem.name)
            continue
        r_side = _judge_tail(tables, tables.log_R, cutoffs)
        q_side = _judge_tail(tables, tables.log_Q, cutoffs)
        r_verdicts[label] = r_side.pop("verdict")
        q_verdicts[label] = q_side.pop("verdict")
        evidence[label] = {"R": r_side, "Q": q_side}

    if all(v == NON_INTEGRABLE for v in r_verdicts.values()):
        conclusion = "unique bounded solution"
    elif all(v == INTEGRABLE for v in r_verdicts.values()):
        conclusion = "infinitely many bounded solutions"
    else:
        conclusion = "mixed/undecided"
    return FellerVerdict(r_verdicts, q_verdicts, conclusion, evidence, problem.lam, notes)


def feller_functions(problem: FellerProblem, x: Sequence[float], spacing: float = TABLE_SPACING) -> Dict[str, np.ndarray]:
    """W, Q and R at the given points (signed Q and R, as in their definitions)."""
    x = np.asarray(x, dtype=float)
    extent = float(np.max(np.abs(x))) if x.size else 0.0
    out = {"W": np.ones_like(x), "Q": np.zeros_like(x), "R": np.zeros_like(x)}
    for sign in (1, -1):
        side = (x * sign) > 0
        if not np.any(side) or extent == 0.0:
            continue
        tables = _SideTables(problem, sign, extent, spacing)
        y = np.abs(x[side])
        out["W"][side] = np.exp(np.interp(y, tables.y, tables.log_w))
        out["Q"][side] = sign * np.exp(np.interp(y, tables.y, tables.log_Q))
        out["R"][side] = sign * np.exp(np.interp(y, tables.y, tables.log_R))
    return out


def asymptotic_probe(problem: FellerProblem, weight_exponent: float,
                     cutoffs: Sequence[float] = PROBE_CUTOFFS,
                     spacing: float = TABLE_SPACING) -> float:
    """
    Extrapolated limit of x^weight Q(x) as x -> +inf.

    Aitken's delta-squared on the last three cutoffs (exact for
    L + c x^{-beta} on a geometric sequence); +inf when the sequence
    keeps growing without slowing down.
    """
    if not np.isfinite(weight_exponent):
        raise DomainError("weight exponent must be finite")
    cutoffs = sorted(float(X) for X in cutoffs)
    if len(cutoffs) < 3:
        raise DomainError("need at least three cutoffs")
    tables = _SideTables(problem, 1, cutoffs[-1], spacing)
    logs = [weight_exponent * math.log(X) + tables.at(tables.log_Q, X) for X in cutoffs]
    if not all(np.isfinite(logs)) or max(logs) > 700:
        return math.inf
    v1, v2, v3 = (math.exp(v) for v in logs[-3:])
    d1, d2 = v2 - v1, v3 - v2
    if v3 > v2 > v1 and d2 >= d1:
        logger.info("x^%g Q(x) diverges for %s", weight_exponent, problem.name)
        return math.inf
    denominator = d2 - d1
    if abs(denominator) <= 1e-15 * max(abs(v3), 1.0):
        return v3
    return v3 - d2**2 / denominator
