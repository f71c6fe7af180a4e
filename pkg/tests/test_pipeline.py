"""
Tests for the closed-approximant construction.

Sweeps run on a planar curve (n = 1) with a coarse angular grid so each
branch takes a few hundred support-flow steps. The shipped construction
presets run end to end under the slow marker.
"""

import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import scripts.pipeline as pipeline_module
from scripts.errors import (
    ConfigError,
    ConstructionFailed,
    ConvexityLost,
    EarlyExtinction,
    NestingViolation,
)
from scripts.experiment import get_construction_preset
from scripts.flow import StepControl
from scripts.geometry import GraphState
from scripts.pipeline import (
    BranchResult,
    ConstructionConfig,
    ConstructionReport,
    build_approximant,
    run_construction,
    symmetry_defect,
)
from scripts.supportfn import (
    GridKind,
    Mollifier,
    SupportRun,
    SupportState,
    curvature_radii,
    mollify,
    recentered,
    reflect_and_close,
    run_support_flow,
)


@pytest.fixture
def curve() -> GraphState:
    return GraphState.from_radial_function(lambda r: 0.5 * r**2, 3.0, 61, 1, 1)


def _closed_surface(num_nodes: int) -> SupportState:
    """Paraboloid surface closed at level 1 with a 0.5 envelope."""
    graph = GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 81, 2, 1)
    return reflect_and_close(graph, 1.0, eta=0.5, num_angles=num_nodes - 1)


def _branch(
    j: float,
    *,
    extinction: float | None = None,
    min_radius: float = 0.5,
    extrapolated: bool = False,
) -> BranchResult:
    ball = SupportState.ball(GridKind.CIRCLE, 1.0, 16)
    run = SupportRun(
        times=np.array([0.0, 0.1]),
        mean_support=np.array([1.0, 0.9]),
        min_radius=np.array([1.0, min_radius]),
        final=ball,
        extinction_time=extinction,
        extinction_extrapolated=extrapolated,
    )
    return BranchResult(j=j, approximant=ball, run=run)


@pytest.fixture
def small_config(curve: GraphState) -> ConstructionConfig:
    return ConstructionConfig(
        initial_graph=curve,
        j_list=(2.0, 4.0),
        epsilon_list=(0.05,),
        k=1,
        flow_horizon=0.05,
        pre_smooth_time=0.01,
        support_nodes=32,
        num_monitors=2,
        check_nesting=False,
        workers=1,
        label="small",
    )


class TestConstructionConfig:
    """Validation and derived values."""

    @pytest.mark.parametrize(
        "overrides",
        [
            {"j_list": ()},
            {"j_list": (2.0, 2.0)},
            {"j_list": (-1.0, 2.0)},
            {"epsilon_list": (1.5,)},
            {"epsilon_list": ()},
            {"k": 2},
            {"flow_horizon": 0.0},
            {"pre_smooth_time": -0.1},
            {"inscribed_radius": 0.0},
            {"support_nodes": 4},
            {"num_monitors": 0},
            {"cfl_safety": 2.0},
        ],
    )
    def test_invalid(self, small_config: ConstructionConfig, overrides) -> None:
        with pytest.raises(ConfigError):
            replace(small_config, **overrides)

    def test_surface_graph_dimension(self) -> None:
        graph = GraphState.from_radial_function(lambda r: 0.5 * r**2, 1.0, 21, 3, 1)
        with pytest.raises(ConfigError, match="n = 1 or 2"):
            ConstructionConfig(initial_graph=graph)

    def test_derived_values(self, small_config: ConstructionConfig) -> None:
        assert small_config.n == 1
        assert small_config.level == 2.0
        assert replace(small_config, comparison_level=1.5).level == 1.5
        assert small_config.presmooth_time(4.0) == 0.01
        assert replace(small_config, pre_smooth_time=None).presmooth_time(4.0) == 0.25
        assert small_config.monitor_times() == (0.0, 0.025, 0.05)

    def test_echo(self, small_config: ConstructionConfig) -> None:
        echo = small_config.echo()
        assert echo["j_list"] == [2.0, 4.0]
        assert echo["comparison_level"] == 2.0
        json.dumps(echo)


class TestApproximant:
    """Closed, smoothed bodies for one level."""

    def test_strictly_convex(self, small_config: ConstructionConfig) -> None:
        body = build_approximant(small_config, 2.0, 0.05)
        assert body.grid_kind is GridKind.CIRCLE
        assert body.t == 0.0
        assert np.min(curvature_radii(body)) > 0.0
        np.testing.assert_allclose(body.origin, [0.0, 2.0])

    def test_symmetric_across_level(self, small_config: ConstructionConfig) -> None:
        assert symmetry_defect(build_approximant(small_config, 4.0, 0.05)) < 1e-8

    def test_symmetry_defect_of_shifted_ball(self) -> None:
        ball = SupportState.ball(GridKind.CIRCLE, 1.0, 32)
        assert symmetry_defect(ball) < 1e-12
        shifted = SupportState.ball(GridKind.CIRCLE, 1.0, 32, center=[0.0, 0.3])
        assert symmetry_defect(recentered(shifted, [0.0, 0.0])) > 0.1

    @pytest.mark.parametrize("num_nodes", [65, 257])
    def test_mollified_surface_stays_mirror_symmetric(self, num_nodes: int) -> None:
        body = _closed_surface(num_nodes)
        assert symmetry_defect(body) < 1e-12
        smoothed = mollify(body, Mollifier(0.1), num_azimuth=128)
        assert symmetry_defect(smoothed) < 1e-12

    def test_symmetry_persists_through_support_flow(self) -> None:
        body = mollify(_closed_surface(65), Mollifier(0.1), num_azimuth=128)
        run = run_support_flow(body, 2, StepControl(t_end=0.02), monitor_times=(0.01, 0.02))
        assert not run.extinct
        assert sorted(run.snapshots) == [0.01, 0.02]
        for snap in run.snapshots.values():
            assert symmetry_defect(snap) < 1e-10

    def test_failed_stage_is_named(self) -> None:
        graph = GraphState.from_radial_function(lambda r: 0.5 * r**2 - 1.0, 3.0, 61, 1, 1)
        cfg = ConstructionConfig(initial_graph=graph, j_list=(2.0,), support_nodes=32)
        with pytest.raises(ConstructionFailed) as excinfo:
            build_approximant(cfg, 2.0, 0.05)
        assert excinfo.value.stage == "hypotheses"
        assert str(excinfo.value).startswith("[hypotheses]")

    def test_level_below_graph(self, curve: GraphState) -> None:
        lifted = curve.with_heights(curve.u + 5.0)
        cfg = ConstructionConfig(initial_graph=lifted, j_list=(2.0,), support_nodes=32)
        with pytest.raises(ConstructionFailed) as excinfo:
            build_approximant(cfg, 2.0, 0.05)
        assert excinfo.value.stage == "reflect"


class TestRunConstruction:
    """Whole sweeps."""

    def test_small_sweep(self, small_config: ConstructionConfig) -> None:
        report = run_construction(small_config, progress=False)
        assert set(report.branches) == {2.0, 4.0}
        assert sorted(report.limit_profiles) == [0.0, 0.025, 0.05]
        assert all(len(diffs) == 1 for diffs in report.cauchy.values())
        assert report.existence_bound == float("inf")
        names = [v.name for v in report.verdicts()]
        assert names == ["nesting", "cauchy", "lowerGraph", "symmetry", "survival"]
        verdicts = {v.name: v for v in report.verdicts()}
        assert verdicts["survival"].passed
        assert verdicts["symmetry"].passed
        for branch in report.branches.values():
            assert not branch.run.extinct
            assert branch.epsilon_differences == []
        json.dumps(report.summary())

    def test_limit_profile_is_pointwise_max(self, small_config: ConstructionConfig) -> None:
        report = run_construction(small_config, progress=False)
        profile = report.limit_profiles[0.0]
        for branch in report.branches.values():
            about_origin = recentered(branch.approximant, np.zeros(2))
            assert np.all(profile >= about_origin.S - 1e-12)

    def test_two_mollification_scales(self, small_config: ConstructionConfig) -> None:
        cfg = replace(small_config, j_list=(2.0,), epsilon_list=(0.1, 0.05))
        report = run_construction(cfg, progress=False)
        diffs = report.branches[2.0].epsilon_differences
        assert len(diffs) == 1
        assert 0.0 < diffs[0] < 0.5

    def test_early_extinction(
        self, small_config: ConstructionConfig, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        real_flow = pipeline_module.run_support_flow

        def collapsing_flow(state, k, ctrl, **kwargs):
            if kwargs.get("label", "").startswith("presmooth"):
                return real_flow(state, k, ctrl, **kwargs)
            return SupportRun(
                times=np.array([0.0, 0.01]),
                mean_support=np.array([1.0, 0.1]),
                min_radius=np.array([1.0, 0.1]),
                final=state,
                extinction_time=0.01,
            )

        monkeypatch.setattr(pipeline_module, "run_support_flow", collapsing_flow)
        cfg = replace(small_config, j_list=(2.0,), inscribed_radius=1.0)
        with pytest.raises(EarlyExtinction) as excinfo:
            run_construction(cfg, progress=False)
        assert excinfo.value.bound == pytest.approx(0.5)
        assert excinfo.value.t == pytest.approx(0.01)

    def test_short_horizon_fails_survival(self, small_config: ConstructionConfig) -> None:
        cfg = replace(small_config, j_list=(2.0,), inscribed_radius=1.0)
        report = run_construction(cfg, progress=False)
        survival = {v.name: v for v in report.verdicts()}["survival"]
        assert report.existence_bound == pytest.approx(0.5)
        assert not survival.passed
        assert survival.margin == pytest.approx(0.05 - 0.495)
        assert not report.passed

    def test_flow_convexity_loss_names_branch(
        self, small_config: ConstructionConfig, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        real_flow = pipeline_module.run_support_flow

        def buckling_flow(state, k, ctrl, **kwargs):
            if kwargs.get("label", "").startswith("presmooth"):
                return real_flow(state, k, ctrl, **kwargs)
            raise ConvexityLost("non-positive radius -1.000e-03 at t=0.01")

        monkeypatch.setattr(pipeline_module, "run_support_flow", buckling_flow)
        with pytest.raises(ConstructionFailed) as excinfo:
            run_construction(replace(small_config, j_list=(2.0,)), progress=False)
        assert excinfo.value.stage == "flow j=2"
        assert isinstance(excinfo.value.__cause__, ConvexityLost)


class TestSurvival:
    """Lifetime of every branch against the existence bound."""

    def _survival(self, cfg: ConstructionConfig, bound: float, **branch):
        report = ConstructionReport(
            config=cfg, branches={2.0: _branch(2.0, **branch)}, existence_bound=bound
        )
        return {v.name: v for v in report.verdicts()}["survival"]

    def test_whole_space_survivor(self, small_config: ConstructionConfig) -> None:
        verdict = self._survival(small_config, float("inf"))
        assert verdict.passed
        assert verdict.margin == 0.0

    def test_horizon_reaching_bound(self, small_config: ConstructionConfig) -> None:
        verdict = self._survival(replace(small_config, flow_horizon=0.5), 0.5)
        assert verdict.passed
        assert verdict.margin == pytest.approx(0.005)

    def test_horizon_short_of_bound(self, small_config: ConstructionConfig) -> None:
        verdict = self._survival(small_config, 0.5)
        assert not verdict.passed
        assert "horizon 0.05" in verdict.detail

    def test_extinction_after_bound(self, small_config: ConstructionConfig) -> None:
        cfg = replace(small_config, flow_horizon=0.6)
        verdict = self._survival(cfg, 0.5, extinction=0.55, extrapolated=True)
        assert verdict.passed
        assert verdict.margin == pytest.approx(0.055)
        assert "ball tail used for j=2" in verdict.detail

    def test_extinction_before_bound(self, small_config: ConstructionConfig) -> None:
        cfg = replace(small_config, flow_horizon=0.6)
        assert not self._survival(cfg, 0.5, extinction=0.3).passed

    def test_nonpositive_radius(self, small_config: ConstructionConfig) -> None:
        cfg = replace(small_config, flow_horizon=0.5)
        verdict = self._survival(cfg, 0.5, min_radius=0.0)
        assert not verdict.passed
        assert "min radius 0.000e+00" in verdict.detail


class TestBranchComparison:
    """Nesting of consecutive bodies."""

    def _compare(self, cfg: ConstructionConfig) -> ConstructionReport:
        report = ConstructionReport(config=cfg, branches={}, existence_bound=1.0)
        big = SupportState.ball(GridKind.CIRCLE, 2.0, 32)
        small = SupportState.ball(GridKind.CIRCLE, 1.0, 32)
        pipeline_module._compare_branches(cfg, report, 0.0, [(2.0, big), (4.0, small)])
        return report

    def test_violation_raises(self, small_config: ConstructionConfig) -> None:
        with pytest.raises(NestingViolation) as excinfo:
            self._compare(replace(small_config, check_nesting=True))
        assert excinfo.value.j == 2.0
        assert excinfo.value.excess == pytest.approx(0.5)

    def test_violation_recorded_when_not_enforced(self, small_config: ConstructionConfig) -> None:
        report = self._compare(small_config)
        assert report.nesting_excess[0.0] == pytest.approx(0.5)
        assert report.cauchy[0.0] == [pytest.approx(1.0)]
        np.testing.assert_allclose(report.limit_profiles[0.0], 2.0)


@pytest.mark.slow
class TestConstructionPresets:
    """Shipped construction presets, end to end."""

    @pytest.mark.parametrize("name", ["flat-construction", "paraboloid-construction"])
    def test_preset_verdicts(self, name: str) -> None:
        cfg = get_construction_preset(name)
        report = run_construction(cfg, progress=False)
        verdicts = {v.name: v for v in report.verdicts()}
        for key in ("nesting", "cauchy", "symmetry", "survival"):
            assert verdicts[key].passed, verdicts[key].detail
        assert report.nesting_excess
        assert all(b.max_symmetry_defect < 1e-8 for b in report.branches.values())
