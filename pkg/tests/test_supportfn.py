"""
Tests for support functions of closed convex bodies.

Balls give exact radii, the ellipse checks mollification, and the
support-function flow is compared against the ball law on coarse grids.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from scripts.errors import ConvexityLost, Extinct, NotBelowLevel
from scripts.flow import StepControl
from scripts.geometry import GraphState
from scripts.supportfn import (
    GridKind,
    Mollifier,
    SupportState,
    arctan_potential,
    curvature_radii,
    eta_envelope,
    lower_graph_defect,
    mollify,
    perturb_graph,
    recentered,
    reflect_and_close,
    run_support_flow,
    step_support_flow,
    support_points,
    support_stable_dt,
)


def _ellipse(a: float, b: float, num_nodes: int) -> SupportState:
    return SupportState.from_function(
        GridKind.CIRCLE,
        lambda th: np.sqrt(a**2 * np.cos(th) ** 2 + b**2 * np.sin(th) ** 2),
        num_nodes,
    )


class TestSupportState:
    """Grids and validation."""

    def test_circle_grid(self) -> None:
        state = SupportState.ball(GridKind.CIRCLE, 1.0, 16)
        assert state.n == 1
        assert state.spacing == pytest.approx(np.pi / 8.0)
        assert state.angles[-1] < 2.0 * np.pi

    def test_sphere_grid_includes_poles(self) -> None:
        state = SupportState.ball("axisymmetricSphere", 1.0, 9)
        assert state.n == 2
        assert state.angles[0] == 0.0
        assert state.angles[-1] == pytest.approx(np.pi)
        np.testing.assert_allclose(state.directions()[0], [0.0, 1.0])

    def test_too_few_nodes(self) -> None:
        with pytest.raises(ValueError, match="at least 8"):
            SupportState.ball(GridKind.CIRCLE, 1.0, 6)

    def test_origin_dimension(self) -> None:
        with pytest.raises(ValueError, match="R\\^2"):
            SupportState(GridKind.CIRCLE, np.ones(16), np.zeros(3))

    def test_axisymmetric_origin_on_axis(self) -> None:
        with pytest.raises(ValueError, match="symmetry axis"):
            SupportState.ball(GridKind.AXISYMMETRIC_SPHERE, 1.0, 9, center=[0.1, 0.0, 0.0])


class TestRadii:
    """Principal radii from S."""

    @pytest.mark.parametrize("kind", [GridKind.CIRCLE, GridKind.AXISYMMETRIC_SPHERE])
    def test_ball_radii_equal_radius(self, kind: GridKind) -> None:
        state = SupportState.ball(kind, 0.7, 33)
        radii = curvature_radii(state)
        assert radii.shape == (33, state.n)
        np.testing.assert_allclose(radii, 0.7, rtol=1e-12)

    def test_shifted_circle_keeps_radius(self) -> None:
        state = recentered(SupportState.ball(GridKind.CIRCLE, 1.0, 64), [0.5, 0.0])
        np.testing.assert_allclose(state.S[0], 0.5)
        np.testing.assert_allclose(curvature_radii(state), 1.0, atol=1e-3)

    def test_off_axis_recentering_rejected(self) -> None:
        state = SupportState.ball(GridKind.AXISYMMETRIC_SPHERE, 1.0, 9)
        with pytest.raises(ValueError, match="along the axis"):
            recentered(state, [0.2, 0.0, 0.0])

    def test_support_points_of_ball(self) -> None:
        state = SupportState.ball(GridKind.CIRCLE, 2.0, 32, center=[1.0, -1.0])
        pts = support_points(state)
        dist = np.hypot(pts[:, 0] - 1.0, pts[:, 1] + 1.0)
        np.testing.assert_allclose(dist, 2.0, rtol=1e-12)

    @pytest.mark.parametrize("kind", [GridKind.CIRCLE, GridKind.AXISYMMETRIC_SPHERE])
    def test_ball_is_lower_graph(self, kind: GridKind) -> None:
        assert lower_graph_defect(SupportState.ball(kind, 1.0, 33)) == 0.0

    def test_eta_envelope(self) -> None:
        state = eta_envelope(SupportState.ball(GridKind.CIRCLE, 1.0, 16), 0.25)
        np.testing.assert_allclose(state.S, 1.25)
        with pytest.raises(ValueError, match="positive"):
            eta_envelope(state, 0.0)


class TestMollifier:
    """Bump kernel and spherical convolution."""

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.2])
    def test_epsilon_range(self, epsilon: float) -> None:
        with pytest.raises(ValueError, match="epsilon"):
            Mollifier(epsilon)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_unit_mass(self, n: int) -> None:
        assert Mollifier(0.05).total_mass(n) == pytest.approx(1.0)

    def test_profile_support(self) -> None:
        m = Mollifier(0.1)
        vals = m.profile(np.array([1.0, 0.95, 0.9, 0.5]))
        assert vals[0] == pytest.approx(math.exp(-1.0))
        assert vals[1] > 0.0
        assert vals[2] == 0.0 and vals[3] == 0.0

    def test_profile_peak_survives_roundoff(self) -> None:
        vals = Mollifier(0.1).profile(np.array([1.0, 1.0 + 2.2e-16, 1.0 - 1.1e-16]))
        np.testing.assert_allclose(vals, math.exp(-1.0), rtol=1e-12)

    @pytest.mark.parametrize("kind", [GridKind.CIRCLE, GridKind.AXISYMMETRIC_SPHERE])
    def test_ball_is_fixed(self, kind: GridKind) -> None:
        state = SupportState.ball(kind, 1.5, 33)
        smoothed = mollify(state, Mollifier(0.05), num_azimuth=64)
        np.testing.assert_allclose(smoothed.S, 1.5, rtol=1e-12)

    def test_ellipse_converges(self) -> None:
        state = _ellipse(1.2, 1.0, 512)
        coarse = np.max(np.abs(mollify(state, Mollifier(0.01)).S - state.S))
        fine = np.max(np.abs(mollify(state, Mollifier(0.001)).S - state.S))
        assert coarse < 0.02
        assert fine < coarse

    def test_mollified_body_stays_convex(self) -> None:
        smoothed = mollify(_ellipse(1.5, 1.0, 128), Mollifier(0.02))
        assert np.min(curvature_radii(smoothed)) > 0.0


class TestGraphClosure:
    """Reflection of a radial graph across a level."""

    @pytest.fixture
    def curve(self) -> GraphState:
        return GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 41, 1, 1)

    def test_closed_curve_extent(self, curve: GraphState) -> None:
        closed = reflect_and_close(curve, 0.5, num_angles=128)
        assert closed.grid_kind is GridKind.CIRCLE
        np.testing.assert_allclose(closed.origin, [0.0, 0.5])
        assert closed.S[0] == pytest.approx(1.0, abs=1e-3)
        assert closed.S[32] == pytest.approx(0.5)
        assert closed.S[96] == pytest.approx(0.5)

    def test_eta_offset(self, curve: GraphState) -> None:
        plain = reflect_and_close(curve, 0.5, num_angles=64)
        padded = reflect_and_close(curve, 0.5, eta=0.1, num_angles=64)
        np.testing.assert_allclose(padded.S - plain.S, 0.1)

    def test_surface_uses_sphere_grid(self) -> None:
        graph = GraphState.from_radial_function(lambda r: 0.5 * r**2, 2.0, 41, 2, 1)
        closed = reflect_and_close(graph, 1.0, num_angles=32)
        assert closed.grid_kind is GridKind.AXISYMMETRIC_SPHERE
        assert closed.num_nodes == 33
        assert closed.S[0] == pytest.approx(1.0)

    def test_level_below_graph(self, curve: GraphState) -> None:
        with pytest.raises(NotBelowLevel):
            reflect_and_close(curve, -0.1)

    def test_planar_graph_rejected(self) -> None:
        graph = GraphState.from_planar_function(lambda x, y: x**2 + y**2, 1.0, 11, 1)
        with pytest.raises(ValueError, match="radial"):
            reflect_and_close(graph, 0.5)

    def test_perturbation(self, curve: GraphState) -> None:
        bumped = perturb_graph(curve, 2.0)
        r = curve.radius()
        np.testing.assert_allclose(bumped.u - curve.u, arctan_potential(r) / 2.0)
        assert arctan_potential(1.0) == pytest.approx(math.pi / 4.0 - 0.5 * math.log(2.0))
        with pytest.raises(ValueError, match="positive"):
            perturb_graph(curve, 0.0)


class TestSupportFlow:
    """S_t = -Q_k(1/radii) against the ball law."""

    def test_stable_dt_formula(self) -> None:
        state = SupportState.ball(GridKind.CIRCLE, 0.5, 32)
        radii = curvature_radii(state)
        expected = 0.2 * state.spacing**2 / (2.0 * 1 * 4.0)
        assert support_stable_dt(state, radii, 1, 0.2) == pytest.approx(expected)

    def test_step_honours_control(self) -> None:
        state = SupportState.ball(GridKind.CIRCLE, 1.0, 32)
        stepped = step_support_flow(state, 1, StepControl(dt_max=1e-5))
        assert stepped.t == pytest.approx(1e-5)
        clipped = step_support_flow(state, 1, StepControl(t_end=2e-6))
        assert clipped.t == pytest.approx(2e-6)

    @pytest.mark.parametrize(
        ("kind", "k", "coefficient"),
        [(GridKind.CIRCLE, 1, 2.0), (GridKind.AXISYMMETRIC_SPHERE, 1, 4.0), (GridKind.AXISYMMETRIC_SPHERE, 2, 1.0)],
    )
    def test_ball_law(self, kind: GridKind, k: int, coefficient: float) -> None:
        t_end = 0.1
        run = run_support_flow(SupportState.ball(kind, 1.0, 33), k, StepControl(t_end=t_end))
        assert not run.extinct
        assert run.final.t == pytest.approx(t_end)
        assert not run.extinction_extrapolated
        rho = math.sqrt(1.0 - coefficient * t_end)
        np.testing.assert_allclose(run.final.S, rho, rtol=1e-2)
        assert np.all(np.diff(run.mean_support) < 0.0)

    def test_extinction_time(self) -> None:
        run = run_support_flow(SupportState.ball(GridKind.CIRCLE, 1.0, 64), 1, StepControl(t_end=1.0))
        assert run.extinct
        assert run.extinction_time == pytest.approx(0.5, rel=2e-2)
        assert run.extinction_extrapolated

    def test_snapshots_land_on_times(self) -> None:
        run = run_support_flow(
            SupportState.ball(GridKind.CIRCLE, 1.0, 32),
            1,
            StepControl(t_end=0.05),
            monitor_times=(0.0, 0.02, 0.5),
        )
        assert set(run.snapshots) == {0.0, 0.02}
        assert run.snapshots[0.02].t == pytest.approx(0.02)
        assert run.times[0] == 0.0

    def test_k_above_dimension(self) -> None:
        with pytest.raises(ValueError, match="1 <= k <= n"):
            step_support_flow(SupportState.ball(GridKind.CIRCLE, 1.0, 16), 2, StepControl())

    def test_collapsed_body(self) -> None:
        state = SupportState(GridKind.CIRCLE, -np.ones(16), np.zeros(2), t=0.3)
        with pytest.raises(Extinct) as excinfo:
            step_support_flow(state, 1, StepControl())
        assert excinfo.value.t == pytest.approx(0.3)

    def test_nonconvex_body(self) -> None:
        state = SupportState.from_function(GridKind.CIRCLE, lambda th: 1.0 + 0.5 * np.cos(3.0 * th), 64)
        with pytest.raises(ConvexityLost):
            step_support_flow(state, 1, StepControl())
