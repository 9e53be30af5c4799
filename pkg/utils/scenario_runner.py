"""
Scenario runner: dispatches scenario jobs to the library operations.

Jobs run concurrently in a bounded thread pool. Each job is isolated: an
exception is captured into that job's report (with its traceback) and never
reaches the other jobs. Precondition violations mark a job
"skipped: precondition"; failed checks and unexpected errors are hard
failures.
"""

import logging
import time
import traceback
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from utils.coefficients import CoefficientField, build_coefficient
from utils.config_loader import (
    Job,
    Scenario,
    build_operator,
    exhaustion_params,
    get_worker_count,
    load_config,
    sampling_window,
    scheme_params,
)
from utils.constants import DEFAULT_FELLER_CUTOFFS, EXIT_JOB_FAILURE, EXIT_OK
from utils.errors import (
    DomainError,
    InsufficientDerivativeData,
    ScenarioError,
    TightnessError,
    UnsupportedOperation,
)
from utils.estimate_verifier import (
    constant_inputs,
    verify_composition,
    verify_gradient_estimate,
    verify_pointwise,
    verify_smoothing_rate,
)
from utils.evolution_solver import (
    EvolutionResult,
    Exhaustion,
    SchemeParams,
    check_evolution_law,
    evolution_operator,
    export_binary,
    reality_bound_margin,
    snapshots_frame,
)
from utils.explicit_constants import build_report, hypercontractivity_threshold
from utils.feller1d import FellerProblem, classify
from utils.inequality_lab import (
    check_hypercontractivity,
    check_log_sobolev,
    check_poincare,
    classify_drift_growth,
    estimate_decay,
    functional_constants,
    hypercontractivity_frame,
    hypercontractivity_times,
    supercontractivity_probe,
    ultraboundedness_probe,
)
from utils.measure_flow import MeasureFamily, check_invariance, check_tightness, compute_measures
from utils.operator_model import OperatorSpec, SamplingWindow, check_hypotheses, sample_quantities
from utils.reference_oracles import OUSpec1D, ou_evolution
from utils.reports import jsonable, write_csv, write_json

logger = logging.getLogger(__name__)

PRECONDITION_ERRORS = (DomainError, UnsupportedOperation, InsufficientDerivativeData, TightnessError)

DEFAULT_TOLERANCES = {
    "tol_solver": 1e-6,
    "tol_law": 5e-3,
    "tol_estimate": 1e-6,
    "tol_oracle": 1e-3,
    "tol_forget": 1e-4,
    "tol_decay": 0.05,
    "tol_rate_first": 0.1,
    "tol_rate_second": 0.15,
}


@dataclass
class JobContext:
    """Everything a job handler needs besides its own parameters."""
    spec: OperatorSpec
    scheme: SchemeParams
    exhaustion: Exhaustion
    window: SamplingWindow
    tolerances: Dict[str, float]
    seed: int
    output_dir: Path

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES.get(key, 0.0)))

    def datum(self, params: Mapping[str, Any], key: str = "f",
              default: Optional[Mapping[str, Any]] = None) -> CoefficientField:
        entry = params.get(key, default or {"kind": "tanh"})
        return build_coefficient(entry, "f", self.spec.d)

    @property
    def start(self) -> float:
        return float(self.spec.time_interval[0])


@dataclass
class JobOutcome:
    payload: Dict[str, Any]
    passed: Optional[bool] = None
    artifacts: List[str] = field(default_factory=list)


@dataclass
class JobResult:
    id: str
    op: str
    status: str
    payload: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    traceback: Optional[str] = None
    artifacts: List[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def hard_failure(self) -> bool:
        return self.status in ("failed", "error")

    def to_dict(self, normalize: bool = False) -> Dict[str, Any]:
        out = {"id": self.id, "op": self.op, "status": self.status, "report": self.payload,
               "error": self.error, "traceback": self.traceback, "artifacts": self.artifacts}
        if not normalize:
            out["seconds"] = round(self.seconds, 3)
        return jsonable(out)


# ======================================================================
# job handlers
# ======================================================================

def _measures(ctx: JobContext, params: Mapping[str, Any], times: List[float]) -> MeasureFamily:
    t_grid = sorted(set(float(t) for t in times) | set(float(t) for t in params.get("t_grid", [])))
    return compute_measures(ctx.spec, t_grid, method=params.get("method", "analytic"),
                            tol_forget=ctx.tol("tol_forget"))


def _functional(ctx: JobContext, params: Mapping[str, Any]) -> Dict[str, float]:
    consts = functional_constants(ctx.spec, ctx.window)
    for key in ("Lambda0", "nu0", "r0"):
        if key in params:
            consts[key] = float(params[key])
    return consts


def _oracle(ctx: JobContext, params: Mapping[str, Any]) -> Optional[OUSpec1D]:
    return OUSpec1D.from_operator(ctx.spec) if params.get("oracle") else None


def _job_solve(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params)
    s = float(params.get("s", ctx.start))
    t = float(params.get("t", s + 1.0))
    scheme = replace(ctx.scheme, snapshot_times=tuple(params["snapshot_times"])) if "snapshot_times" in params else ctx.scheme
    result = evolution_operator(ctx.spec, f, s, t, ctx.exhaustion, scheme)
    c0 = float(np.max(sample_quantities(ctx.spec, ctx.window)["c"]))
    margin = reality_bound_margin(result, c0)
    passed = margin >= -ctx.tol("tol_solver")
    payload: Dict[str, Any] = {"metadata": result.metadata(), "reality_margin": margin}
    if params.get("compare_oracle"):
        error = _oracle_error(ctx, f, result, float(params.get("oracle_radius", 3.0)))
        payload["oracle_error"] = error
        passed = passed and error <= ctx.tol("tol_oracle")
    outcome = JobOutcome(payload, passed)
    export = params.get("export", "csv")
    if export == "csv":
        outcome.artifacts.append(str(write_csv(snapshots_frame(result), ctx.output_dir / "solve_snapshots.csv")))
    elif export == "binary":
        outcome.artifacts.append(str(export_binary(result, ctx.output_dir / "solve_snapshots.bin")))
    return outcome


def _oracle_error(ctx: JobContext, f: CoefficientField, result: EvolutionResult, radius: float) -> float:
    oracle = OUSpec1D.from_operator(ctx.spec)
    final = result.final.restrict(radius)
    exact = ou_evolution(oracle, f, result.s, result.t_grid[-1], final.coordinates()[0])
    return float(np.max(np.abs(final.values - exact)))


def _job_law(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params)
    if "triples" in params:
        triples = [tuple(float(v) for v in triple) for triple in params["triples"]]
    else:
        rng = np.random.default_rng(ctx.seed)
        span = float(params.get("span", 2.0))
        triples = [tuple(sorted(ctx.start + rng.uniform(0.0, span, 3))) for _ in range(int(params.get("count", 5)))]
    reports = [check_evolution_law(ctx.spec, f, s, r, t, ctx.exhaustion, ctx.scheme, ctx.tol("tol_law"))
               for s, r, t in triples]
    payload = {"triples": triples, "reports": [rep.to_dict() for rep in reports]}
    return JobOutcome(payload, all(rep.passed for rep in reports))


def _job_hypotheses(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    report = check_hypotheses(ctx.spec, params.get("profile", "H1.1"), ctx.window)
    return JobOutcome(report.to_dict(), report.satisfied)


def _job_constants(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    k = int(params.get("k", 1))
    p = float(params.get("p", 2.0))
    profile = params.get("profile", f"H4.2({k})")
    hyp = check_hypotheses(ctx.spec, profile, ctx.window)
    inputs = constant_inputs(ctx.spec, hyp, p, k, ctx.window)
    r = params.get("r", 1.0)
    report = build_report(inputs, None if r is None else float(r), params.get("q"))
    return JobOutcome({"hypotheses": hyp.to_dict(), "constants": report.to_dict()})


def _job_verify(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    estimate = params.get("estimate", params.get("variant", "aa"))
    if estimate == "stimasem":
        return _job_rates(ctx, {**params, "m": params.get("m", params.get("k", 1))})
    if estimate == "poi-es":
        return _job_gradient(ctx, params)
    if params.get("chain"):
        return _job_composition(ctx, params)
    f = ctx.datum(params)
    s = float(params.get("s", ctx.start))
    report = verify_pointwise(ctx.spec, f, s, float(params.get("t", s + 1.0)), int(params.get("k", 1)),
                              float(params.get("p", 2.0)), estimate, params.get("h"),
                              ctx.window, ctx.exhaustion, ctx.scheme, ctx.tol("tol_estimate"))
    outcome = JobOutcome(report.to_dict(), report.passed)
    outcome.artifacts.append(str(write_csv(report.to_frame(), ctx.output_dir / "verify_margins.csv")))
    return outcome


def _job_gradient(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params)
    s = float(params.get("s", ctx.start))
    rate = params.get("rate")
    report = verify_gradient_estimate(ctx.spec, f, s, float(params.get("t", s + 1.0)), float(params.get("p", 2.0)),
                                      None if rate is None else float(rate), ctx.window, ctx.exhaustion,
                                      ctx.scheme, ctx.tol("tol_estimate"))
    outcome = JobOutcome(report.to_dict(), report.passed)
    outcome.artifacts.append(str(write_csv(report.to_frame(), ctx.output_dir / "verify_margins.csv")))
    return outcome


def _job_composition(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params)
    s = float(params.get("s", ctx.start))
    h = params.get("h")
    report = verify_composition(ctx.spec, f, s, float(params.get("t", s + 1.0)), float(params.get("p", 2.0)),
                                1 if h is None else int(h), int(params.get("k", 3)), window=ctx.window,
                                exhaustion=ctx.exhaustion, params=ctx.scheme, tol=ctx.tol("tol_estimate"))
    return JobOutcome(report.to_dict(), report.implication_holds)


def _job_rates(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "step"})
    h = params.get("h")
    h, m = 0 if h is None else int(h), int(params.get("m", 1))
    report = verify_smoothing_rate(ctx.spec, f, float(params.get("s", ctx.start)), h, m,
                                   params.get("times", [0.025, 0.05, 0.1, 0.2]), ctx.exhaustion, ctx.scheme,
                                   time_change=bool(params.get("oracle")))
    tol = ctx.tol("tol_rate_first") if m - h == 1 else ctx.tol("tol_rate_second")
    return JobOutcome(report.to_dict(), report.deviation <= tol)


def _job_feller(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    t = float(params.get("t", ctx.start))
    Q = build_coefficient(params["q"], "Q", 1) if "q" in params else ctx.spec.Q
    b = build_coefficient(params["b"], "b", 1) if "b" in params else ctx.spec.b
    name = ctx.spec.name if "q" not in params and "b" not in params else "catalogue"
    problem = FellerProblem.from_coefficients(Q, b, float(params.get("lam", 1.0)), t, name)
    verdict = classify(problem, params.get("cutoffs", DEFAULT_FELLER_CUTOFFS))
    expected = params.get("expected")
    return JobOutcome(verdict.to_dict(), None if expected is None else verdict.conclusion == expected)


def _job_measures(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    t_grid = [float(t) for t in params.get("t_grid", [ctx.start, ctx.start + 1.0])]
    measures = _measures(ctx, params, t_grid)
    tightness = check_tightness(measures, params.get("radii", [1.0, 2.0, 4.0]), params.get("epsilon"))
    rows = []
    for t, rho in zip(measures.t_grid, measures.densities):
        coords = rho.coordinates()
        frame = pd.DataFrame({name: coords[i].ravel() for i, name in enumerate(["x", "y"][: rho.d])})
        frame.insert(0, "t", t)
        frame["density"] = rho.values.ravel()
        rows.append(frame)
    path = write_csv(pd.concat(rows, ignore_index=True), ctx.output_dir / "measures.csv")
    return JobOutcome({"measures": measures.to_dict(), "tightness": tightness.to_dict()}, artifacts=[str(path)])


def _job_invariance(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "polynomial", "coefficients": [0.0, 0.0, 1.0]})
    s = float(params.get("s", ctx.start))
    t = float(params.get("t", s + 1.0))
    measures = _measures(ctx, params, [s, t])
    report = check_invariance(ctx.spec, measures, f, s, t, ctx.exhaustion, ctx.scheme, params.get("tol"))
    return JobOutcome(report.to_dict(), report.passed)


def _job_lsi(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "polynomial", "coefficients": [1.0, 0.3]})
    s = float(params.get("s", ctx.start))
    consts = _functional(ctx, params)
    measures = _measures(ctx, params, [s])
    report = check_log_sobolev(measures, f, s, float(params.get("p", 2.0)), consts["Lambda0"], consts["r0"],
                               ctx.tol("tol_estimate"))
    return JobOutcome(report.to_dict(), report.passed)


def _job_poincare(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "polynomial", "coefficients": [0.0, 1.0]})
    s = float(params.get("s", ctx.start))
    consts = _functional(ctx, params)
    measures = _measures(ctx, params, [s])
    report = check_poincare(measures, f, s, consts["Lambda0"], consts["r0"], ctx.tol("tol_estimate"))
    return JobOutcome(report.to_dict(), report.passed)


def _job_hyper(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "polynomial", "coefficients": [1.0, 0.5]})
    s = float(params.get("s", ctx.start))
    p, q = float(params.get("p", 2.0)), float(params.get("q", 4.0))
    consts = _functional(ctx, params)
    threshold = hypercontractivity_threshold(p, q, consts["Lambda0"], consts["nu0"], consts["r0"])
    measures = _measures(ctx, params, hypercontractivity_times(s, threshold))
    report = check_hypercontractivity(ctx.spec, measures, f, s, p, q, consts["Lambda0"], consts["nu0"],
                                      consts["r0"], ctx.exhaustion, ctx.scheme, _oracle(ctx, params),
                                      float(params.get("tol", ctx.tol("tol_estimate"))))
    path = write_csv(hypercontractivity_frame(report), ctx.output_dir / "hyper_curve.csv")
    return JobOutcome(report.to_dict(), report.passed, [str(path)])


def _job_super(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    times = [float(t) for t in params.get("t_grid", [ctx.start])]
    measures = _measures(ctx, params, times)
    report = supercontractivity_probe(measures, params.get("lambdas", [0.1, 0.25, 0.6]))
    return JobOutcome(report.to_dict())


def _job_drift(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    window = SamplingWindow(radius=float(params["radius"])) if "radius" in params else None
    verdict = classify_drift_growth(ctx.spec, window)
    expected = params.get("expected")
    return JobOutcome(verdict.to_dict(), None if expected is None else verdict.conclusion == expected)


def _job_ultra(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    s = float(params.get("s", ctx.start))
    report = ultraboundedness_probe(ctx.spec, float(params.get("lam", 0.1)), s,
                                    params.get("times", [s + 1.0, s + 2.0]), float(params.get("delta", 1.0)),
                                    ctx.exhaustion, ctx.scheme)
    return JobOutcome(report.to_dict())


def _job_decay(ctx: JobContext, params: Mapping[str, Any]) -> JobOutcome:
    f = ctx.datum(params, default={"kind": "polynomial", "coefficients": [0.0, 1.0]})
    s = float(params.get("s", ctx.start))
    times = [float(t) for t in params.get("times", [s + 1.0, s + 2.5, s + 4.0, s + 7.0, s + 10.0])]
    measures = _measures(ctx, params, [s] + times)
    estimate = estimate_decay(ctx.spec, measures, f, s, float(params.get("p", 2.0)), times,
                              ctx.exhaustion, ctx.scheme, _oracle(ctx, params))
    expected = params.get("expected_slope")
    passed = None if expected is None else abs(estimate.slope - float(expected)) <= ctx.tol("tol_decay")
    path = write_csv(estimate.to_frame(), ctx.output_dir / "decay_curve.csv")
    return JobOutcome(estimate.to_dict(), passed, [str(path)])


OPERATIONS: Dict[str, Callable[[JobContext, Mapping[str, Any]], JobOutcome]] = {
    "solve": _job_solve,
    "law": _job_law,
    "hypotheses": _job_hypotheses,
    "constants": _job_constants,
    "verify": _job_verify,
    "gradient": _job_gradient,
    "composition": _job_composition,
    "rates": _job_rates,
    "feller": _job_feller,
    "measures": _job_measures,
    "invariance": _job_invariance,
    "lsi": _job_lsi,
    "poincare": _job_poincare,
    "hyper": _job_hyper,
    "super": _job_super,
    "drift": _job_drift,
    "ultra": _job_ultra,
    "decay": _job_decay,
}


# ======================================================================
# running
# ======================================================================

def validate_jobs(scenario: Scenario) -> None:
    for index, job in enumerate(scenario.jobs):
        if job.op not in OPERATIONS:
            raise ScenarioError(f"unknown operation {job.op!r}", f"jobs[{index}]")


def _context(scenario: Scenario, job: Job, config: Mapping[str, Any]) -> JobContext:
    spec = build_operator(job.operator or scenario.operator, config)
    output_dir = scenario.output_dir / job.id
    return JobContext(
        spec=spec,
        scheme=scheme_params(config, {**scenario.scheme, **job.params.get("scheme", {})}),
        exhaustion=exhaustion_params(config, {**scenario.exhaustion, **job.params.get("exhaustion", {})}),
        window=sampling_window(config, scenario.window),
        tolerances={**config.get("tolerances", {}), **scenario.tolerances},
        seed=scenario.seed,
        output_dir=output_dir,
    )


def run_job(scenario: Scenario, job: Job, config: Mapping[str, Any]) -> JobResult:
    """Run one job; never raises."""
    started = time.perf_counter()
    try:
        ctx = _context(scenario, job, config)
        params = {k: v for k, v in job.params.items() if k not in ("scheme", "exhaustion")}
        outcome = OPERATIONS[job.op](ctx, params)
        status = "completed" if outcome.passed is None else ("passed" if outcome.passed else "failed")
        result = JobResult(job.id, job.op, status, outcome.payload, artifacts=outcome.artifacts)
    except PRECONDITION_ERRORS as exc:
        logger.warning("Job %s skipped: %s", job.id, exc)
        result = JobResult(job.id, job.op, "skipped: precondition", error=str(exc))
    except Exception as exc:
        logger.error("Job %s failed: %s", job.id, exc)
        result = JobResult(job.id, job.op, "error", error=str(exc), traceback=traceback.format_exc())
    result.seconds = time.perf_counter() - started
    return result


def summarize(scenario: Scenario, results: List[JobResult], normalize: bool = False) -> Dict[str, Any]:
    counts: Dict[str, int] = {}
    for res in results:
        counts[res.status] = counts.get(res.status, 0) + 1
    summary = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "jobs": [{"id": r.id, "op": r.op, "status": r.status, "error": r.error} for r in results],
        "counts": counts,
        "passed": counts.get("passed", 0),
        "failed": counts.get("failed", 0) + counts.get("error", 0),
        "skipped": counts.get("skipped: precondition", 0),
        "completed": counts.get("completed", 0),
        "exit_code": EXIT_JOB_FAILURE if any(r.hard_failure for r in results) else EXIT_OK,
    }
    if not normalize:
        summary["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        summary["seconds"] = round(sum(r.seconds for r in results), 3)
    return jsonable(summary)


def run_scenario(scenario: Scenario, config: Optional[Mapping[str, Any]] = None, workers: Optional[int] = None,
                 normalize: bool = False, verbose: bool = True) -> int:
    """
    Execute every job of ``scenario`` and write one JSON report per job plus summary.json.

    Returns:
        Process exit code: 0 iff no job failed hard
    """
    config = config if config is not None else load_config()
    validate_jobs(scenario)
    workers = workers or get_worker_count(config)
    scenario.output_dir.mkdir(parents=True, exist_ok=True)
    if verbose:
        print(f"Running scenario '{scenario.name}': {len(scenario.jobs)} jobs on {workers} workers")

    results: Dict[str, JobResult] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(run_job, scenario, job, config): job for job in scenario.jobs}
        for future in as_completed(futures):
            job = futures[future]
            result = future.result()
            results[job.id] = result
            write_json(result.to_dict(normalize), scenario.output_dir / f"{job.id}.json")
            if verbose:
                print(f"  {job.id:<24} {result.status}")

    ordered = [results[job.id] for job in scenario.jobs]
    summary = summarize(scenario, ordered, normalize)
    write_json(summary, scenario.output_dir / "summary.json")
    if verbose:
        print(f"\nPassed {summary['passed']}, failed {summary['failed']}, skipped {summary['skipped']}, "
              f"completed {summary['completed']}")
    return int(summary["exit_code"])
