#!/usr/bin/env python3
"""
klab - numerical lab for nonautonomous Kolmogorov operators.

Every subcommand except `run` builds a one-job scenario from its flags and
executes it with the scenario runner, so single checks and bundled scenarios
produce the same report files.

Usage:
    python klab.py run scenarios/ou_full.json
    python klab.py solve --operator ou --f '{"kind": "tanh"}' --t 1 --compare-oracle
    python klab.py feller --operator cubic_repulsive
    python klab.py verify --estimate stimasem --k 2 --oracle
    python klab.py feller --q '{"kind": "constant", "value": 1.0}' --b '{"kind": "cubic", "sign": 1.0}'

Environment variables:
- KLAB_WORKERS: size of the job worker pool (default: logical cores)
- KLAB_SEED: random seed for scenario jobs
- KLAB_DEFAULTS: alternative defaults file
"""

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional

from utils.config_loader import Job, Scenario, load_config, load_scenario
from utils.constants import EXIT_JOB_FAILURE, EXIT_PARSE_ERROR
from utils.errors import ScenarioError
from utils.scenario_runner import run_scenario


def _json_arg(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON ({exc.msg})") from None


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# Flags shared by the single-job subcommands: (flag or flags, dest, kwargs)
_COMMON = [
    (("--operator", "--spec"), "operator", {"default": "ou", "help": "preset name or inline operator JSON"}),
    (("--output-dir", "--out"), "output_dir", {"default": None, "help": "report directory (default: reports/<subcommand>)"}),
    ("--s", "s", {"type": float, "help": "initial time"}),
]

# Per-subcommand flags; dest names are the job parameter names, dotted ones nest
_SUBCOMMANDS: Dict[str, Dict[str, Any]] = {
    "solve": {
        "help": "evolve a datum and write snapshots",
        "flags": [("--f", "f", {"type": _json_arg}), ("--t", "t", {"type": float}),
                  ("--snapshot-times", "snapshot_times", {"type": _floats}),
                  ("--export", "export", {"choices": ["csv", "binary", "none"]}),
                  ("--compare-oracle", "compare_oracle", {"action": "store_true", "default": None}),
                  ("--R0", "exhaustion.R_start", {"type": float, "help": "half-width of the first box"}),
                  ("--levels", "exhaustion.max_levels", {"type": int, "help": "number of exhaustion boxes"}),
                  ("--theta", "scheme.theta", {"type": float}), ("--dt", "scheme.dt", {"type": float}),
                  ("--h", "scheme.h", {"type": float, "help": "grid spacing"})],
    },
    "verify": {
        "help": "check a pointwise derivative estimate on the core region",
        "flags": [("--f", "f", {"type": _json_arg}), ("--t", "t", {"type": float}),
                  ("--k", "k", {"type": int}), ("--p", "p", {"type": float}),
                  ("--estimate", "estimate", {"choices": ["aa", "aaaa", "stimasem", "poi-es"]}),
                  ("--h", "h", {"type": int, "help": "lowest order on the right-hand side (aaaa, stimasem)"}),
                  ("--times", "times", {"type": _floats, "help": "sample times tau for stimasem"}),
                  ("--oracle", "oracle", {"action": "store_true", "default": None,
                                          "help": "fit stimasem slopes on the OU heat clock"}),
                  ("--rate", "rate", {"type": float, "help": "sigma for poi-es (default: from the hypotheses)"}),
                  ("--chain", "chain", {"action": "store_true", "default": None,
                                        "help": "chain one-order aaaa gains from h to k"})],
    },
    "constants": {
        "help": "evaluate the explicit constants for a hypothesis profile",
        "flags": [("--k", "k", {"type": int}), ("--p", "p", {"type": float}),
                  ("--r", "r", {"type": float}), ("--q", "q", {"type": float}),
                  ("--profile", "profile", {})],
    },
    "feller": {
        "help": "classify uniqueness of bounded solutions in one dimension",
        "flags": [("--lam", "lam", {"type": float}), ("--t", "t", {"type": float}),
                  ("--q", "q", {"type": _json_arg, "help": "diffusion catalogue entry (default: the operator's)"}),
                  ("--b", "b", {"type": _json_arg, "help": "drift catalogue entry (default: the operator's)"}),
                  ("--cutoffs", "cutoffs", {"type": _floats}), ("--expected", "expected", {})],
    },
    "measures": {
        "help": "compute an evolution system of measures and check tightness",
        "flags": [("--t-grid", "t_grid", {"type": _floats}), ("--method", "method", {"choices": ["analytic", "burnin"]}),
                  ("--radii", "radii", {"type": _floats}), ("--epsilon", "epsilon", {"type": float})],
    },
    "invariance": {
        "help": "compare the integral of G(t,s)f against mu_t with the integral of f against mu_s",
        "flags": [("--f", "f", {"type": _json_arg}), ("--t", "t", {"type": float}),
                  ("--method", "method", {"choices": ["analytic", "burnin"]}), ("--tol", "tol", {"type": float})],
    },
    "lsi": {
        "help": "check the logarithmic Sobolev inequality",
        "flags": [("--f", "f", {"type": _json_arg}), ("--p", "p", {"type": float}),
                  ("--method", "method", {"choices": ["analytic", "burnin"]})],
    },
    "poincare": {
        "help": "check the Poincare inequality",
        "flags": [("--f", "f", {"type": _json_arg}), ("--method", "method", {"choices": ["analytic", "burnin"]})],
    },
    "hyper": {
        "help": "check hypercontractivity around the explicit threshold",
        "flags": [("--f", "f", {"type": _json_arg}), ("--p", "p", {"type": float}), ("--q", "q", {"type": float}),
                  ("--oracle", "oracle", {"action": "store_true", "default": None}),
                  ("--method", "method", {"choices": ["analytic", "burnin"]})],
    },
    "super": {
        "help": "probe supercontractivity with exp(lambda |x|^2) moments",
        "flags": [("--lambdas", "lambdas", {"type": _floats}), ("--t-grid", "t_grid", {"type": _floats}),
                  ("--method", "method", {"choices": ["analytic", "burnin"]})],
    },
    "decay": {
        "help": "estimate the exponential decay rate to the mean",
        "flags": [("--f", "f", {"type": _json_arg}), ("--p", "p", {"type": float}),
                  ("--times", "times", {"type": _floats}), ("--expected-slope", "expected_slope", {"type": float}),
                  ("--oracle", "oracle", {"action": "store_true", "default": None}),
                  ("--method", "method", {"choices": ["analytic", "burnin"]})],
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klab", description="Numerical lab for nonautonomous Kolmogorov operators.")
    parser.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute every job of a scenario file")
    run.add_argument("scenario", type=Path, help="scenario JSON file")
    run.add_argument("--workers", type=int, default=None, help="worker pool size (default: KLAB_WORKERS or cores)")
    run.add_argument("--normalize", action="store_true", help="omit timestamps so reports are byte-identical")

    for name, entry in _SUBCOMMANDS.items():
        cmd = sub.add_parser(name, help=entry["help"])
        for flag, dest, kwargs in _COMMON + entry["flags"]:
            flags = flag if isinstance(flag, tuple) else (flag,)
            cmd.add_argument(*flags, dest=dest, **kwargs)
    return parser


def _operator_entry(text: str) -> Dict[str, Any]:
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    return {"preset": text}


def single_job_scenario(args: argparse.Namespace) -> Scenario:
    """One-job scenario from a subcommand's flags; unset flags fall back to the job defaults."""
    names = [dest for _, dest, _ in _SUBCOMMANDS[args.command]["flags"]] + ["s"]
    params: Dict[str, Any] = {}
    for dest in names:
        value = getattr(args, dest)
        if value is None:
            continue
        group, _, key = dest.rpartition(".")
        (params.setdefault(group, {}) if group else params)[key] = value
    if params.get("export") == "none":
        params["export"] = None
    config = load_config()
    output_dir = Path(args.output_dir or f"reports/{args.command}")
    return Scenario(name=args.command, operator=_operator_entry(args.operator),
                    jobs=[Job(args.command, args.command, params)], output_dir=output_dir,
                    seed=int(config.get("seed", 0)))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE_ERROR if exc.code else 0

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            scenario = load_scenario(args.scenario)
            return run_scenario(scenario, workers=args.workers, normalize=args.normalize)
        return run_scenario(single_job_scenario(args))
    except ScenarioError as exc:
        print(f"Scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except json.JSONDecodeError as exc:
        print(f"Scenario error: invalid operator JSON ({exc.msg})", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except Exception as exc:
        print(f"\nError: {exc}")
        print(traceback.format_exc())
        return EXIT_JOB_FAILURE


if __name__ == "__main__":
    sys.exit(main())
