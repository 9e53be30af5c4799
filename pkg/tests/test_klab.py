"""
Tests for the klab command line.
"""

import json

from klab import build_parser, main, single_job_scenario
from utils.constants import EXIT_OK, EXIT_PARSE_ERROR


class TestParsing:
    """Tests for argument handling."""

    def test_unknown_subcommand(self):
        """Parse errors exit 2."""
        assert main(["integrate"]) == EXIT_PARSE_ERROR

    def test_bad_json_flag(self):
        """Malformed --f JSON is a parse error."""
        assert main(["solve", "--f", "{kind"]) == EXIT_PARSE_ERROR

    def test_single_job(self, tmp_path):
        """Flags become job parameters; unset flags are left out."""
        args = build_parser().parse_args(["verify", "--k", "2", "--p", "3", "--output-dir", str(tmp_path)])
        scenario = single_job_scenario(args)
        assert scenario.jobs[0].op == "verify"
        assert scenario.jobs[0].params == {"k": 2, "p": 3.0}
        assert scenario.operator == {"preset": "ou"}

    def test_inline_operator(self, tmp_path):
        """--operator accepts inline JSON."""
        args = build_parser().parse_args(["feller", "--operator", '{"preset": "heat"}', "--output-dir", str(tmp_path)])
        assert single_job_scenario(args).operator == {"preset": "heat"}


    def test_estimate_choice(self, tmp_path):
        """--estimate selects the estimate family."""
        args = build_parser().parse_args(["verify", "--estimate", "poi-es", "--rate", "-1", "--out", str(tmp_path)])
        scenario = single_job_scenario(args)
        assert scenario.jobs[0].params == {"estimate": "poi-es", "rate": -1.0}
        assert scenario.output_dir == tmp_path

    def test_unknown_estimate(self):
        """Only the four estimate families parse."""
        assert main(["verify", "--estimate", "bernstein"]) == EXIT_PARSE_ERROR

    def test_solver_flags_nest(self, tmp_path):
        """Box and scheme flags land in the exhaustion and scheme overrides."""
        args = build_parser().parse_args(["solve", "--spec", "heat", "--R0", "6", "--levels", "2", "--theta", "1",
                                          "--dt", "0.01", "--h", "0.05", "--out", str(tmp_path)])
        scenario = single_job_scenario(args)
        assert scenario.operator == {"preset": "heat"}
        assert scenario.jobs[0].params == {"exhaustion": {"R_start": 6.0, "max_levels": 2},
                                           "scheme": {"theta": 1.0, "dt": 0.01, "h": 0.05}}

    def test_feller_coefficients(self, tmp_path):
        """--q and --b take catalogue JSON, --cutoffs a float list."""
        args = build_parser().parse_args(["feller", "--q", '{"kind": "constant", "value": 1.0}',
                                          "--b", '{"kind": "cubic", "sign": 1.0}',
                                          "--cutoffs", "2,4,8,16", "--out", str(tmp_path)])
        params = single_job_scenario(args).jobs[0].params
        assert params["b"] == {"kind": "cubic", "sign": 1.0}
        assert params["q"] == {"kind": "constant", "value": 1.0}
        assert params["cutoffs"] == [2.0, 4.0, 8.0, 16.0]


class TestRun:
    """Tests for end-to-end invocations."""

    def test_missing_scenario(self, tmp_path):
        """An unreadable scenario is a parse error."""
        assert main(["run", str(tmp_path / "absent.json")]) == EXIT_PARSE_ERROR

    def test_feller_subcommand(self, tmp_path):
        """A passing single job exits 0 and writes its report."""
        code = main(["feller", "--operator", "heat", "--expected", "unique bounded solution",
                     "--output-dir", str(tmp_path)])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "feller.json").read_text())
        assert report["status"] == "passed"

    def test_run_scenario_file(self, tmp_path):
        """run executes a scenario file."""
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"name": "t", "output_dir": str(tmp_path / "out"),
                                    "jobs": [{"id": "skip", "op": "verify", "params": {"p": 0.5}}]}))
        assert main(["run", str(path), "--normalize", "--workers", "1"]) == EXIT_OK
        assert json.loads((tmp_path / "out" / "summary.json").read_text())["skipped"] == 1
