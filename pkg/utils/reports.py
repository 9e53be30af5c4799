"""
Report records shared by the verifiers and their JSON/CSV writers.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.grid import GridFunction

logger = logging.getLogger(__name__)


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class EstimateReport:
    """
    One verified inequality (or identity) on the core region.

    ``worst_margin`` is min(rhs - lhs); identities store -sup|lhs - rhs|.
    The report passes iff worst_margin >= -tolerance.
    """
    estimate: str
    worst_margin: float
    tolerance: float
    lhs: Optional[GridFunction] = None
    rhs: Optional[GridFunction] = None
    constants: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)
    resolution: Dict[str, Any] = field(default_factory=dict)
    tags: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.worst_margin >= -self.tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({
            "estimate": self.estimate,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "constants": self.constants,
            "provenance": self.provenance,
            "resolution": self.resolution,
            "tags": self.tags,
            "notes": self.notes,
            "region": "core region of the computational box",
        })

    def to_frame(self) -> pd.DataFrame:
        """Nodes of the core region with lhs, rhs and margin columns."""
        if self.lhs is None or self.rhs is None:
            return pd.DataFrame(columns=["x", "lhs", "rhs", "margin"])
        coords = self.lhs.coordinates()
        names = ["x", "y"][: self.lhs.d]
        frame = pd.DataFrame({name: coords[i].ravel() for i, name in enumerate(names)})
        frame["lhs"] = self.lhs.values.ravel()
        frame["rhs"] = self.rhs.values.ravel()
        frame["margin"] = frame["rhs"] - frame["lhs"]
        return frame


@dataclass
class RateReport:
    """Fitted log-log slope of a derivative sup-norm against elapsed time."""
    h: int
    m: int
    times: List[float]
    norms: List[float]
    slope: float
    predicted: float
    residual: float
    tags: List[str] = field(default_factory=list)

    @property
    def deviation(self) -> float:
        return abs(self.slope - self.predicted)

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({
            "estimate": f"stimasem({self.h},{self.m})",
            "times": self.times,
            "norms": self.norms,
            "slope": self.slope,
            "predicted": self.predicted,
            "deviation": self.deviation,
            "residual": self.residual,
            "tags": self.tags,
        })

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "norm": self.norms})


def fit_line(xs: Sequence[float], ys: Sequence[float]) -> Dict[str, float]:
    """Least-squares line through (xs, ys): slope, intercept and RMS residual."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return {"slope": float(slope), "intercept": float(intercept), "residual": residual}


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(jsonable(payload), f, indent=2, sort_keys=True)
    logger.info("Wrote %s", path)
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info("Wrote %s", path)
    return path
