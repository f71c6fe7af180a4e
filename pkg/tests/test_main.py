"""
Tests for the command line: subcommand dispatch, output and exit codes.

Expensive subcommands are exercised with their engines replaced through
monkeypatch; the short ``run`` invocation integrates a real flow.
"""

import json
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
import main as cli
from scripts.errors import EarlyExtinction, NestingViolation
from scripts.monitors import MonitorRow, MonitorSeries, Verdict
from scripts.persistence import load_report, save_series_csv
from scripts.utils import logging as log_module

pytestmark = pytest.mark.integration


@pytest.fixture(autouse=True)
def _isolated_outputs(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    # fresh console handler bound to the captured stdout of this test
    monkeypatch.setattr(log_module, "_logger", None)
    monkeypatch.setattr(config, "RESULTS_DIR", str(tmp_path / "results"))
    monkeypatch.setattr(config, "DUMP_DIR", str(tmp_path / "results" / "dumps"))


def _series_csv(path: Path, sup_gradient: float) -> Path:
    series = MonitorSeries(n=2, k=1, M=1.0)
    for t, ups in ((0.0, 1.0), (0.1, sup_gradient)):
        series.append(
            MonitorRow(
                t=t,
                sup_psi_upsilon=ups,
                inf_psi_inv_qk=2.0,
                sup_psi_qk_sq=4.0,
                speed_bound_rhs=80.0,
                sup_psi2_lambda_max=1.0,
                curvature_bound_rhs=5.0,
                sup_psi2_grad_a=0.1,
                running_sup_qm_upsilon4=1.0,
                running_sup_qm_qk_sq=4.0,
                dt_used=1e-3,
            )
        )
    return save_series_csv(series, path)


class TestParser:
    """Argument parsing."""

    def test_version(self, capsys: pytest.CaptureFixture[str]) -> None:
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["--version"])
        assert excinfo.value.code == 0
        assert "qkflow" in capsys.readouterr().out

    def test_subcommand_required(self) -> None:
        with pytest.raises(SystemExit) as excinfo:
            cli.main([])
        assert excinfo.value.code == 2

    def test_unknown_preset_rejected_by_parser(self) -> None:
        with pytest.raises(SystemExit):
            cli.main(["run", "--preset", "torus"])

    def test_t_end_aliases(self) -> None:
        parser = cli.build_parser()
        assert parser.parse_args(["run", "--tEnd", "0.1"]).t_end == 0.1
        assert parser.parse_args(["run", "--t-end", "0.2"]).t_end == 0.2


class TestOracle:
    """Closed-form ball values."""

    def test_radius_at_half_lifetime(self, capsys: pytest.CaptureFixture[str]) -> None:
        code = cli.main(["oracle", "--ball", "R=1", "n=2", "k=2", "--t", "0.5"])
        out = capsys.readouterr().out
        assert code == 0
        assert "extinction time = 1\n" in out
        assert "radius(t=0.5) = 0.70710678118654757" in out

    def test_after_extinction(self, capsys: pytest.CaptureFixture[str]) -> None:
        code = cli.main(["oracle", "--ball", "R=1", "n=2", "k=1", "--t", "1.0"])
        assert code == 0
        assert "extinct" in capsys.readouterr().out

    @pytest.mark.parametrize("ball", [["R"], ["R=1", "m=2"], ["R=x"], ["n=2", "k=3"]])
    def test_bad_ball(self, ball, capsys: pytest.CaptureFixture[str]) -> None:
        code = cli.main(["oracle", "--ball", *ball])
        assert code == 2
        err = capsys.readouterr().err.splitlines()
        assert any(line.startswith("error: ") for line in err)


class TestRun:
    """Graph flow subcommand."""

    def test_short_run_writes_outputs(self, tmp_path: Path) -> None:
        prefix = tmp_path / "p"
        code = cli.main(
            ["run", "--preset", "paraboloid", "--tEnd", "0.002", "--num-nodes", "41",
             "--output", str(prefix), "--no-progress"]
        )
        assert code in (0, 1)
        assert (tmp_path / "p_series.csv").exists()
        assert (tmp_path / "p_final.snap").exists()
        report = load_report(tmp_path / "p_report.json")
        assert report["exit_status"] == code
        assert report["config"]["num_nodes"] == 41
        assert report["config"]["step"]["t_end"] == 0.002
        names = [v["name"] for v in report["verdicts"]]
        assert names[:5] == ["gradient", "speedLower", "speedUpper", "curvature", "derivative"]
        assert "enclosure" in names

    def test_missing_flow_section(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        path = tmp_path / "v.ini"
        path.write_text("[verify]\nsamples = 10\n", encoding="utf-8")
        assert cli.main(["run", "--config", str(path)]) == 2
        assert "no [flow] section" in capsys.readouterr().err

    def test_invalid_override(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert cli.main(["run", "--num-nodes", "8", "--no-progress"]) == 2
        assert "at least 16" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path: Path) -> None:
        assert cli.main(["run", "--config", str(tmp_path / "absent.ini")]) == 2


class TestReport:
    """Verdicts from a saved series."""

    def test_passing_series(self, tmp_path: Path) -> None:
        csv = _series_csv(tmp_path / "good.csv", 0.95)
        out = tmp_path / "good.json"
        code = cli.main(["report", "--series", str(csv), "--n", "2", "--M", "1.0", "--report", str(out)])
        assert code == 0
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["config"]["series"] == str(csv)
        assert all(v["passed"] for v in report["verdicts"])

    def test_failing_series(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        csv = _series_csv(tmp_path / "bad.csv", 1.2)
        code = cli.main(["report", "--series", str(csv), "--n", "2", "--M", "1.0"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_missing_series(self, tmp_path: Path) -> None:
        assert cli.main(["report", "--series", str(tmp_path / "none.csv"), "--n", "2", "--M", "1"]) == 2


class TestVerify:
    """Property sweep subcommand with the sweeps replaced."""

    def test_arguments_forwarded(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        seen = {}

        def fake(**kwargs):
            seen.update(kwargs)
            return [Verdict("inequalities", True, 0.0, "")]

        monkeypatch.setattr(cli, "run_verification", fake)
        out = tmp_path / "verify.json"
        code = cli.main(["verify", "--samples", "50", "--nmax", "3", "--report", str(out)])
        assert code == 0
        assert seen["samples"] == 50
        assert seen["nmax"] == 3
        assert seen["support_nodes"] == 256
        assert load_report(out)["config"]["samples"] == 50

    def test_failed_sweep(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(
            cli,
            "run_verification",
            lambda **kwargs: [Verdict("concavity", False, 1.0, "positive form")],
        )
        assert cli.main(["verify"]) == 1

    def test_config_file(self, monkeypatch: pytest.MonkeyPatch) -> None:
        seen = {}
        monkeypatch.setattr(
            cli, "run_verification", lambda **kwargs: seen.update(kwargs) or []
        )
        assert cli.main(["verify", "--config", str(Path(config.PRESETS_DIR) / "verify.ini")]) == 0
        assert seen["fd_step"] == 1e-6

    def test_invalid_size(self) -> None:
        assert cli.main(["verify", "--nmax", "0"]) == 2


class TestConstruct:
    """Construction failures map to exit code 1."""

    @pytest.mark.parametrize(
        "error", [NestingViolation(2.0, 0.1, 0.5), EarlyExtinction(4.0, 0.01, 0.5)]
    )
    def test_check_failures(
        self, error, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]
    ) -> None:
        def fake(cfg, progress=True):
            raise error

        monkeypatch.setattr(cli, "run_construction", fake)
        assert cli.main(["construct", "--preset", "flat-construction", "--no-progress"]) == 1
        assert "FAIL: " in capsys.readouterr().err

    def test_horizon_override(self, monkeypatch: pytest.MonkeyPatch) -> None:
        seen = {}

        def fake(cfg, progress=True):
            seen["cfg"] = cfg
            raise NestingViolation(2.0, 0.0, 1.0)

        monkeypatch.setattr(cli, "run_construction", fake)
        cli.main(["construct", "--horizon", "0.1", "--workers", "2", "--no-progress"])
        assert seen["cfg"].flow_horizon == 0.1
        assert seen["cfg"].workers == 2
        assert seen["cfg"].label == "paraboloid-construction"

    @pytest.mark.slow
    def test_flat_construction_passes(self, tmp_path: Path) -> None:
        out = tmp_path / "flat.json"
        code = cli.main(
            ["construct", "--preset", "flat-construction", "--no-progress", "--report", str(out)]
        )
        report = load_report(out)
        failed = [v for v in report["verdicts"] if not v["passed"]]
        assert code == 0, failed
        assert report["exit_status"] == 0
        assert [v["name"] for v in report["verdicts"]] == [
            "nesting",
            "cauchy",
            "lowerGraph",
            "symmetry",
            "survival",
        ]
        assert report["config"]["check_nesting"] is True
