"""
Configuration loader.

Loads defaults from utils/defaults.json (or the file named by KLAB_DEFAULTS),
applies environment overrides and parses scenario files for the runner.

Environment variables:
- KLAB_DEFAULTS: path of an alternative defaults file
- KLAB_SEED: random seed for scenario jobs
- KLAB_WORKERS: size of the job worker pool
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from utils.coefficients import build_coefficient
from utils.constants import (
    DEFAULT_DT,
    DEFAULT_H,
    DEFAULT_MAX_LEVELS,
    DEFAULT_R_START,
    DEFAULT_R_STEP,
    DEFAULT_SEED,
    DEFAULT_THETA,
    DEFAULT_SAMPLING_RADIUS,
    STARTUP_HALF_STEPS,
    TOL_EXHAUST,
)
from utils.errors import ScenarioError
from utils.evolution_solver import Exhaustion, SchemeParams
from utils.operator_model import OperatorSpec, SamplingWindow

logger = logging.getLogger(__name__)

# Path to local defaults
DEFAULTS_PATH = Path(__file__).parent / "defaults.json"

_FALLBACK = {
    "scheme": {"theta": DEFAULT_THETA, "dt": DEFAULT_DT, "h": DEFAULT_H, "startup_half_steps": STARTUP_HALF_STEPS},
    "exhaustion": {"R_start": DEFAULT_R_START, "R_step": DEFAULT_R_STEP, "max_levels": DEFAULT_MAX_LEVELS,
                   "tol_exhaust": TOL_EXHAUST},
    "window": {},
    "tolerances": {},
    "seed": DEFAULT_SEED,
    "workers": None,
    "presets": {},
}


def _load_defaults() -> Dict[str, Any]:
    """Load the defaults file, falling back to built-in values."""
    path = Path(os.environ.get("KLAB_DEFAULTS", "") or DEFAULTS_PATH)
    try:
        with open(path, "r") as f:
            return json.load(f)
    except Exception as e:
        logger.warning("Failed to load %s: %s", path, e)
        return copy.deepcopy(_FALLBACK)


def _env_int(name: str) -> Optional[int]:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", name, raw)
        return None


def load_config() -> Dict[str, Any]:
    """
    Defaults merged with environment overrides.

    Returns:
        Dict with keys: scheme, exhaustion, window, tolerances, seed, workers, presets
    """
    config = _load_defaults()
    for key, value in _FALLBACK.items():
        config.setdefault(key, copy.deepcopy(value))
    seed = _env_int("KLAB_SEED")
    if seed is not None:
        config["seed"] = seed
    workers = _env_int("KLAB_WORKERS")
    if workers is not None:
        config["workers"] = workers
    return config


def get_worker_count(config: Optional[Mapping[str, Any]] = None) -> int:
    """KLAB_WORKERS, then the config value, then the number of logical cores."""
    workers = _env_int("KLAB_WORKERS")
    if workers is None and config is not None:
        workers = config.get("workers")
    if workers is None:
        workers = os.cpu_count() or 1
    return max(1, int(workers))


# ======================================================================
# builders
# ======================================================================

def scheme_params(config: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> SchemeParams:
    values = {**config.get("scheme", {}), **(overrides or {})}
    try:
        return SchemeParams(**values)
    except TypeError as exc:
        raise ScenarioError(f"bad scheme parameters: {exc}") from None


def exhaustion_params(config: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> Exhaustion:
    values = {**config.get("exhaustion", {}), **(overrides or {})}
    try:
        return Exhaustion(**values)
    except TypeError as exc:
        raise ScenarioError(f"bad exhaustion parameters: {exc}") from None


def sampling_window(config: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> SamplingWindow:
    values = {**config.get("window", {}), **(overrides or {})}
    if values.get("time_window") is not None:
        values["time_window"] = tuple(values["time_window"])
    try:
        return SamplingWindow(**values)
    except TypeError as exc:
        raise ScenarioError(f"bad window parameters: {exc}") from None


def build_operator(entry: Mapping[str, Any], config: Optional[Mapping[str, Any]] = None) -> OperatorSpec:
    """
    Build an OperatorSpec from ``{"preset": name, ...overrides}`` or an inline
    description with d, time_interval, Q, b, c and optional phi / declared_params.
    """
    config = config if config is not None else load_config()
    entry = dict(entry)
    preset_name = entry.pop("preset", None)
    if preset_name is not None:
        presets = config.get("presets", {})
        if preset_name not in presets:
            raise ScenarioError(f"unknown operator preset {preset_name!r}")
        entry = {**copy.deepcopy(presets[preset_name]), **entry}
        entry.setdefault("name", preset_name)
    missing = [key for key in ("d", "time_interval", "Q", "b", "c") if key not in entry]
    if missing:
        raise ScenarioError(f"operator description lacks {', '.join(missing)}")
    d = int(entry["d"])
    phi = build_coefficient(entry["phi"], "phi", d) if entry.get("phi") else None
    spec = OperatorSpec(
        d=d,
        time_interval=tuple(float(t) for t in entry["time_interval"]),
        Q=build_coefficient(entry["Q"], "Q", d),
        b=build_coefficient(entry["b"], "b", d),
        c=build_coefficient(entry["c"], "c", d),
        phi=phi,
        declared_params=entry.get("declared_params", {}),
        name=entry.get("name", "operator"),
    )
    _check_registrations(spec, config)
    return spec


def _check_registrations(spec: OperatorSpec, config: Mapping[str, Any]) -> None:
    """Central-difference check of every registered derivative on the sampling window."""
    radius = float(config.get("window", {}).get("radius", DEFAULT_SAMPLING_RADIUS))
    fields = [spec.Q, spec.b, spec.c] + ([spec.phi] if spec.phi is not None else [])
    failures = [symbol for coefficient in fields
                for symbol in coefficient.check_derivatives(spec.time_interval, radius)]
    if failures:
        raise ScenarioError(f"operator {spec.name!r}: registered derivatives disagree with "
                            f"central differences: {', '.join(failures)}")
    logger.debug("Derivative registrations of %s agree on |x| <= %g", spec.name, radius)


# ======================================================================
# scenarios
# ======================================================================

@dataclass
class Job:
    id: str
    op: str
    params: Dict[str, Any] = field(default_factory=dict)
    operator: Optional[Dict[str, Any]] = None


@dataclass
class Scenario:
    name: str
    operator: Dict[str, Any]
    jobs: List[Job]
    output_dir: Path
    seed: int = DEFAULT_SEED
    tolerances: Dict[str, float] = field(default_factory=dict)
    scheme: Dict[str, Any] = field(default_factory=dict)
    exhaustion: Dict[str, Any] = field(default_factory=dict)
    window: Dict[str, Any] = field(default_factory=dict)


def _parse_job(raw: Any, index: int) -> Job:
    location = f"jobs[{index}]"
    if not isinstance(raw, dict):
        raise ScenarioError("job must be an object", location)
    if "op" not in raw:
        raise ScenarioError("job lacks 'op'", location)
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError("'params' must be an object", location)
    return Job(str(raw.get("id", f"{index:02d}-{raw['op']}")), str(raw["op"]), params, raw.get("operator"))


def parse_scenario(text: str, base_dir: Optional[Path] = None, config: Optional[Mapping[str, Any]] = None) -> Scenario:
    """Parse scenario JSON text; errors carry a line/column or jobs[i] location."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object", "line 1, column 1")
    config = config if config is not None else load_config()
    jobs_raw = raw.get("jobs", [])
    if not isinstance(jobs_raw, list):
        raise ScenarioError("'jobs' must be a list", "jobs")
    jobs = [_parse_job(job, i) for i, job in enumerate(jobs_raw)]
    ids = [job.id for job in jobs]
    if len(set(ids)) != len(ids):
        raise ScenarioError("job ids must be unique", "jobs")
    name = str(raw.get("name", "scenario"))
    base_dir = base_dir or Path.cwd()
    output_dir = Path(raw.get("output_dir", f"reports/{name}"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    seed = raw.get("seed", config.get("seed", DEFAULT_SEED))
    env_seed = _env_int("KLAB_SEED")
    return Scenario(
        name=name,
        operator=raw.get("operator", {"preset": "ou"}),
        jobs=jobs,
        output_dir=output_dir,
        seed=int(env_seed if env_seed is not None else seed),
        tolerances=raw.get("tolerances", {}),
        scheme=raw.get("scheme", {}),
        exhaustion=raw.get("exhaustion", {}),
        window=raw.get("window", {}),
    )


def load_scenario(path: Path, config: Optional[Mapping[str, Any]] = None) -> Scenario:
    """Read and parse a scenario file; relative output directories resolve against the working directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, Path.cwd(), config)
