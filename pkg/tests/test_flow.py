"""
Tests for the graph flow integrator.

Step policy validation, single steps on the paraboloid, the lower cap of a
shrinking sphere against the ball law, and short driver runs.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import scripts.flow as flow_module
from scripts.errors import ConfigError, NonConvex, StepRejected
from scripts.experiment import ExperimentConfig, get_preset
from scripts.flow import (
    StepControl,
    graph_speed,
    refinement_drift,
    run_graph_flow,
    stable_dt,
    step_graph,
    step_mcf,
)
from scripts.geometry import GraphState, curvature_field
from scripts.monitors import evaluate_all, verdict_gradient, verdict_speed_lower_family
from scripts.persistence import load_snapshot


@pytest.fixture
def paraboloid() -> GraphState:
    return GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 41, 2, 1)


def _small_config(**overrides) -> ExperimentConfig:
    settings = {
        "label": "small",
        "initial_data": "paraboloid",
        "n": 2,
        "k": 1,
        "num_nodes": 41,
        "extent": 2.0,
        "M": 1.0,
        "step": StepControl(t_end=0.005, monitor_dt=0.001),
    }
    settings.update(overrides)
    return ExperimentConfig(**settings)


class TestStepControl:
    """Validation of the step policy."""

    def test_defaults(self) -> None:
        ctrl = StepControl()
        assert ctrl.cfl_safety == 0.2
        assert ctrl.max_halvings == 20
        assert ctrl.monitor_dt is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"cfl_safety": 0.0},
            {"cfl_safety": 1.5},
            {"dt_max": 0.0},
            {"t_end": -1.0},
            {"monitor_every": 0},
            {"monitor_dt": 0.0},
            {"max_halvings": -1},
        ],
    )
    def test_invalid(self, kwargs) -> None:
        with pytest.raises(ConfigError):
            StepControl(**kwargs)


class TestSingleStep:
    """One forward-Euler step."""

    def test_speed_at_pole(self, paraboloid: GraphState) -> None:
        speed, max_d = graph_speed(paraboloid, curvature_field(paraboloid), 1)
        assert speed[0] == pytest.approx(2.0)
        assert max_d == pytest.approx(1.0)
        assert np.isfinite(speed[-1])

    def test_stable_dt_formula(self, paraboloid: GraphState) -> None:
        curv = curvature_field(paraboloid)
        ctrl = StepControl(t_end=10.0)
        ups_max = float(np.nanmax(curv.upsilon))
        expected = 0.2 * paraboloid.spacing**2 / (2.0 * 2 * ups_max**2 * 1.0)
        assert stable_dt(paraboloid, curv, 1.0, ctrl) == pytest.approx(expected)

    def test_dt_caps(self, paraboloid: GraphState) -> None:
        curv = curvature_field(paraboloid)
        assert stable_dt(paraboloid, curv, 1.0, StepControl(t_end=1e-7)) == pytest.approx(1e-7)
        assert stable_dt(paraboloid, curv, 1.0, StepControl(dt_max=1e-8)) == pytest.approx(1e-8)
        assert stable_dt(paraboloid, curv, 1.0, StepControl(), dt_cap=2e-9) == pytest.approx(2e-9)

    def test_graph_moves_up(self, paraboloid: GraphState) -> None:
        after = step_graph(paraboloid, StepControl())
        assert after.t > 0.0
        assert np.all(after.u >= paraboloid.u)
        assert after.u[0] == pytest.approx(2.0 * after.t)

    def test_masked_nodes_stay_masked(self) -> None:
        state = GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 41, 2, 1, clip_ceiling=1.0)
        after = step_graph(state, StepControl())
        assert np.array_equal(np.isnan(after.u), np.isnan(state.u))

    def test_mcf_matches_k1_step(self) -> None:
        state = GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 41, 2, 2)
        a = step_mcf(state, StepControl())
        b = step_graph(state, StepControl(), speed_k=1)
        np.testing.assert_array_equal(a.u, b.u)

    def test_nonconvex_state_rejected(self) -> None:
        state = GraphState.from_radial_function(lambda r: -0.5 * r**2, 1.0, 21, 2, 1)
        with pytest.raises(NonConvex):
            step_graph(state, StepControl())

    def test_step_rejected_dumps_state(
        self, paraboloid: GraphState, monkeypatch: pytest.MonkeyPatch, tmp_path: Path
    ) -> None:
        monkeypatch.setattr(flow_module, "_post_step_ok", lambda candidate, k: False)
        monkeypatch.setattr(flow_module, "DUMP_DIR", str(tmp_path))
        with pytest.raises(StepRejected) as excinfo:
            step_graph(paraboloid, StepControl(max_halvings=2))
        dump = excinfo.value.dump_path
        assert dump is not None and dump.exists()
        restored = load_snapshot(dump)
        np.testing.assert_array_equal(restored.u, paraboloid.u)


class TestSphereCap:
    """Lower cap of a sphere follows the ball law."""

    @pytest.mark.parametrize("k", [1, 2])
    def test_bottom_height(self, k: int) -> None:
        R = 1.0
        state = GraphState.from_radial_function(
            lambda r: R - np.sqrt(R**2 - r**2), 0.8, 81, 2, k
        )
        t_end = 0.01
        ctrl = StepControl(t_end=t_end)
        while state.t < t_end * (1.0 - 1e-12):
            state = step_graph(state, ctrl)
        rho = math.sqrt(R**2 - 2.0 * (2 - k + 1) / k * t_end)
        assert state.t == pytest.approx(t_end)
        assert state.u[0] == pytest.approx(R - rho, rel=1e-2)


class TestRunGraphFlow:
    """The experiment driver."""

    def test_rows_and_times(self) -> None:
        series = run_graph_flow(_small_config(), progress=False)
        times = series.column("t")
        assert times[0] == 0.0
        assert np.all(np.diff(times) > 0.0)
        assert times[-1] == pytest.approx(0.005)
        assert len(series) == 6
        assert series.final_state is not None
        assert series.final_state.t == pytest.approx(0.005)

    def test_gradient_estimate_holds(self) -> None:
        series = run_graph_flow(_small_config(), progress=False)
        assert verdict_gradient(series).passed

    def test_monitor_every(self) -> None:
        cfg = _small_config(step=StepControl(t_end=0.001, monitor_every=5))
        series = run_graph_flow(cfg, progress=False)
        assert len(series) >= 2
        assert series.column("t")[-1] == pytest.approx(0.001)

    def test_tracked_speeds_and_enclosure(self) -> None:
        cfg = _small_config(k=2, mcf=True, track_k=(1, 2), inscribed_radius=1.0)
        series = run_graph_flow(cfg, progress=False)
        assert set(series.extra_columns()) >= {"infPsiInvQk_k1", "infPsiInvQk_k2", "enclosed"}
        assert all(row.extras["enclosed"] for row in series)

    def test_outputs_written(self, tmp_path: Path) -> None:
        cfg = _small_config(output_prefix=tmp_path / "small")
        run_graph_flow(cfg, progress=False)
        assert (tmp_path / "small_series.csv").exists()
        snap = load_snapshot(tmp_path / "small_final.snap")
        assert snap.t == pytest.approx(0.005)

    def test_persist_disabled(self, tmp_path: Path) -> None:
        cfg = _small_config(output_prefix=tmp_path / "small")
        run_graph_flow(cfg, progress=False, persist=False)
        assert not (tmp_path / "small_series.csv").exists()

    def test_deterministic_output(self, tmp_path: Path) -> None:
        run_graph_flow(_small_config(output_prefix=tmp_path / "a"), progress=False)
        run_graph_flow(_small_config(output_prefix=tmp_path / "b"), progress=False)
        assert (tmp_path / "a_series.csv").read_bytes() == (tmp_path / "b_series.csv").read_bytes()
        assert (tmp_path / "a_final.snap").read_bytes() == (tmp_path / "b_final.snap").read_bytes()

    def test_refinement_drift(self) -> None:
        drift = refinement_drift(_small_config(step=StepControl(t_end=0.002)))
        assert "max" in drift
        assert drift["max"] == max(v for key, v in drift.items() if key != "max")
        assert 0.0 <= drift["max"] < 0.2


@pytest.mark.slow
class TestFlowPresets:
    """Shipped flow presets against every estimate."""

    @pytest.mark.parametrize("name", ["paraboloid", "cup-k2"])
    def test_all_verdicts_pass(self, name: str) -> None:
        series = run_graph_flow(get_preset(name), progress=False, persist=False)
        failed = [v for v in evaluate_all(series) if not v.passed]
        assert not failed, [f"{v.name}: {v.detail}" for v in failed]

    def test_tracked_speeds_monotone_under_mcf(self) -> None:
        cfg = get_preset("paraboloid-mcf")
        series = run_graph_flow(cfg, progress=False, persist=False)
        verdicts = verdict_speed_lower_family(series)
        assert [v.name for v in verdicts] == [f"speedLower_k{j}" for j in cfg.track_k]
        assert all(v.passed for v in verdicts), [v.detail for v in verdicts]
