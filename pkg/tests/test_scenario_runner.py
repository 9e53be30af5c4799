"""
Tests for utils/scenario_runner.py
"""

import json
from dataclasses import replace
from pathlib import Path

import pytest

from utils.config_loader import Job, Scenario, load_scenario
from utils.constants import EXIT_JOB_FAILURE, EXIT_OK
from utils.errors import ScenarioError
from utils.scenario_runner import OPERATIONS, run_job, run_scenario


def _scenario(tmp_path, jobs, operator=None):
    return Scenario(name="test", operator=operator or {"preset": "ou"}, jobs=jobs, output_dir=tmp_path / "out")


def _read(path):
    with open(path) as f:
        return json.load(f)


class TestRunJob:
    """Tests for single-job isolation."""

    def test_precondition_skip(self, tmp_path, config):
        """p < 1 is skipped, not failed."""
        job = Job("v", "verify", {"p": 0.5})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.status == "skipped: precondition"
        assert "p <= 1 unsupported" in result.error
        assert not result.hard_failure

    def test_error_captured(self, tmp_path, config):
        """Unexpected failures keep their traceback."""
        job = Job("v", "verify", {"f": {"kind": "no-such-datum"}})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.status == "error"
        assert "Traceback" in result.traceback
        assert result.hard_failure

    def test_expected_conclusion(self, tmp_path, config):
        """An expected Feller conclusion turns the job into a check."""
        job = Job("f", "feller", {"expected": "unique bounded solution"})
        assert run_job(_scenario(tmp_path, [job]), job, config).status == "passed"

    def test_no_expectation_completes(self, tmp_path, config):
        """Without an expectation the job only records its verdict."""
        job = Job("c", "constants", {"k": 1, "p": 2.0})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.status == "completed"
        assert "L_k" in result.payload["constants"]["constants"]


    def test_ou_second_order_rate(self, tmp_path, config):
        """The default short times keep the OU m = 2 slope inside tolerance."""
        job = Job("r", "verify", {"estimate": "stimasem", "m": 2})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.status == "passed"
        assert result.payload["predicted"] == -1.0

    def test_ou_rate_on_heat_clock(self, tmp_path, config):
        """With the oracle flag longer times are fitted on the heat clock."""
        job = Job("r", "verify", {"estimate": "stimasem", "m": 2, "oracle": True, "times": [0.05, 0.1, 0.2, 0.4]})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.status == "passed"
        assert "heat clock" in result.payload["tags"]

    def test_gradient_estimate_route(self, tmp_path, config):
        """estimate = poi-es runs the gradient estimate."""
        job = Job("g", "verify", {"estimate": "poi-es", "f": {"kind": "tanh"}, "p": 2.0})
        result = run_job(_scenario(tmp_path, [job]), job, config)
        assert result.payload["estimate"] == "poi-es(2)"
        assert result.status == "passed"

    def test_feller_catalogue_coefficients(self, tmp_path, config):
        """q and b from the catalogue replace the scenario operator."""
        job = Job("f", "feller", {"q": {"kind": "constant", "value": 1.0}, "b": {"kind": "cubic", "sign": 1.0},
                                  "expected": "infinitely many bounded solutions"})
        assert run_job(_scenario(tmp_path, [job]), job, config).status == "passed"


class TestRunScenario:
    """Tests for scenario execution and summaries."""

    def test_empty(self, tmp_path, config):
        """No jobs: exit 0 and a summary."""
        scenario = _scenario(tmp_path, [])
        assert run_scenario(scenario, config, workers=1, verbose=False) == EXIT_OK
        summary = _read(scenario.output_dir / "summary.json")
        assert summary["counts"] == {}
        assert summary["exit_code"] == EXIT_OK

    def test_unknown_op(self, tmp_path, config):
        """Unknown operations are rejected before anything runs."""
        with pytest.raises(ScenarioError) as info:
            run_scenario(_scenario(tmp_path, [Job("x", "integrate")]), config, verbose=False)
        assert info.value.location == "jobs[0]"

    def test_failure_sets_exit_code(self, tmp_path, config):
        """A failed check makes the scenario exit 1; skips do not."""
        jobs = [Job("ok", "feller", {"expected": "unique bounded solution"}),
                Job("bad", "feller", {"expected": "infinitely many bounded solutions"}),
                Job("skip", "verify", {"p": 0.5})]
        scenario = _scenario(tmp_path, jobs)
        assert run_scenario(scenario, config, workers=2, verbose=False) == EXIT_JOB_FAILURE
        summary = _read(scenario.output_dir / "summary.json")
        assert (summary["passed"], summary["failed"], summary["skipped"]) == (1, 1, 1)
        assert [job["id"] for job in summary["jobs"]] == ["ok", "bad", "skip"]
        assert (scenario.output_dir / "bad.json").exists()

    def test_normalized_reports_repeat(self, tmp_path, config):
        """Normalized runs are byte-identical."""
        jobs = [Job("drift", "drift", {"expected": "ultracontractive-sufficient"}),
                Job("feller", "feller")]
        outputs = []
        for name in ("a", "b"):
            scenario = Scenario(name="repeat", operator={"preset": "cubic_well"}, jobs=jobs,
                                output_dir=tmp_path / name)
            assert run_scenario(scenario, config, workers=2, normalize=True, verbose=False) == EXIT_OK
            outputs.append([(scenario.output_dir / f).read_bytes() for f in ("summary.json", "drift.json", "feller.json")])
        assert outputs[0] == outputs[1]
        assert "generated_at" not in json.loads(outputs[0][0])

    def test_every_operation_registered(self):
        """The dispatcher covers the command surface."""
        assert {"solve", "law", "verify", "measures", "invariance", "lsi", "poincare", "hyper",
                "super", "decay", "feller", "constants"} <= set(OPERATIONS)

    def test_bundled_ou_scenario(self, tmp_path, config):
        """scenarios/ou_full.json runs clean and reports all twelve jobs."""
        path = Path(__file__).parent.parent / "scenarios" / "ou_full.json"
        scenario = replace(load_scenario(path, config), output_dir=tmp_path / "ou_full")
        assert run_scenario(scenario, config, workers=2, normalize=True, verbose=False) == EXIT_OK
        summary = _read(scenario.output_dir / "summary.json")
        assert summary["failed"] == 0
        assert summary["passed"] + summary["completed"] == 12
        reports = sorted(p.name for p in scenario.output_dir.glob("*.json") if p.name != "summary.json")
        assert reports == sorted(f"{job.id}.json" for job in scenario.jobs)
        assert len(reports) == 12
