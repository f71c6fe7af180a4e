#!/usr/bin/env python3
"""
Support Functions of Closed Convex Bodies
=========================================

Closed convex curves and axisymmetric convex surfaces represented by their
support function S(v) = max over the body of <v, Y>, sampled on

- ``circle``: theta_i = 2 pi i / N, i = 0..N-1, unit normals
  (cos theta, sin theta) in the (x, z) plane;
- ``axisymmetricSphere``: polar angles phi_i = pi i / (N - 1), i = 0..N-1,
  unit normals (sin phi, cos phi) in the (r, z) profile plane, poles
  included.

Principal radii are the eigenvalues of the spherical Hessian plus S:
r = S_tt + S on the circle; r1 = S_pp + S and r2 = S_p cot(phi) + S on the
sphere, with r2 = r1 at the poles (even extension across each pole).

Operations
----------
- :func:`eta_envelope` - outward offset by eta (S + eta)
- :func:`mollify` - spherical convolution with a normalized bump kernel
- :func:`curvature_radii` - principal radii per node
- :func:`reflect_and_close` - close a radial graph by reflection at height j
- :func:`perturb_graph` - add phi(|x|)/j, phi(r) = integral of arctan
- :func:`step_support_flow` / :func:`run_support_flow` - S_t = -Q_k(1/r)
"""

from __future__ import annotations

import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from tqdm import tqdm

from config import DEFAULT_SUPPORT_NODES
from scripts.errors import ConvexityLost, Extinct, NotBelowLevel
from scripts.geometry import GraphState, GridMode
from scripts.symfun import grad_qk, qk
from scripts.utils import logging as log

if TYPE_CHECKING:
    from scripts.flow import StepControl

__all__ = [
    "GridKind",
    "SupportState",
    "Mollifier",
    "SupportRun",
    "eta_envelope",
    "mollify",
    "curvature_radii",
    "support_derivative",
    "support_points",
    "recentered",
    "lower_graph_defect",
    "reflect_and_close",
    "perturb_graph",
    "arctan_potential",
    "support_stable_dt",
    "step_support_flow",
    "run_support_flow",
]


class GridKind(str, Enum):
    """Angular grid of a support function."""

    CIRCLE = "circle"
    AXISYMMETRIC_SPHERE = "axisymmetricSphere"


@dataclass(frozen=True)
class SupportState:
    """
    Support function of a closed convex body about ``origin``.

    ``origin`` lives in R^{n+1}; on the sphere grid it must lie on the
    symmetry axis (all but the last coordinate zero).
    """

    grid_kind: GridKind
    S: np.ndarray
    origin: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        kind = GridKind(self.grid_kind)
        object.__setattr__(self, "grid_kind", kind)
        S = np.asarray(self.S, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "S", S)
        origin = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "origin", origin)
        minimum = 8 if kind is GridKind.CIRCLE else 5
        if S.size < minimum:
            raise ValueError(f"{kind.value} grid needs at least {minimum} nodes")
        if origin.size != self.n + 1:
            raise ValueError(f"origin must lie in R^{self.n + 1}")
        if kind is GridKind.AXISYMMETRIC_SPHERE and np.any(origin[:-1] != 0.0):
            raise ValueError("axisymmetric origin must lie on the symmetry axis")

    @property
    def n(self) -> int:
        return 1 if self.grid_kind is GridKind.CIRCLE else 2

    @property
    def num_nodes(self) -> int:
        return int(self.S.size)

    @property
    def spacing(self) -> float:
        if self.grid_kind is GridKind.CIRCLE:
            return 2.0 * np.pi / self.num_nodes
        return np.pi / (self.num_nodes - 1)

    @property
    def angles(self) -> np.ndarray:
        return angle_grid(self.grid_kind, self.num_nodes)

    def directions(self) -> np.ndarray:
        """Unit normals in profile coordinates (lateral, vertical), ``(N, 2)``."""
        a = self.angles
        if self.grid_kind is GridKind.CIRCLE:
            return np.column_stack([np.cos(a), np.sin(a)])
        return np.column_stack([np.sin(a), np.cos(a)])

    def with_values(self, S: np.ndarray, t: float | None = None) -> SupportState:
        return replace(self, S=S, t=self.t if t is None else t)

    @classmethod
    def ball(
        cls,
        grid_kind: GridKind | str,
        R: float,
        num_nodes: int,
        center: Sequence[float] | None = None,
    ) -> SupportState:
        """Ball of radius R, support taken about its own centre."""
        kind = GridKind(grid_kind)
        dim = 2 if kind is GridKind.CIRCLE else 3
        origin = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(kind, np.full(num_nodes, float(R)), origin)

    @classmethod
    def from_function(
        cls,
        grid_kind: GridKind | str,
        func: Callable[[np.ndarray], np.ndarray],
        num_nodes: int,
        origin: Sequence[float] | None = None,
    ) -> SupportState:
        """Sample S = func(angle) on the grid."""
        kind = GridKind(grid_kind)
        dim = 2 if kind is GridKind.CIRCLE else 3
        org = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
        return cls(kind, np.asarray(func(angle_grid(kind, num_nodes)), dtype=float), org)


def angle_grid(kind: GridKind, num_nodes: int) -> np.ndarray:
    if kind is GridKind.CIRCLE:
        return 2.0 * np.pi * np.arange(num_nodes) / num_nodes
    return np.linspace(0.0, np.pi, num_nodes)


def _trapezoid(values: np.ndarray, x: np.ndarray) -> float:
    return float(0.5 * np.sum((values[1:] + values[:-1]) * np.diff(x)))


def _sphere_area(dim: int) -> float:
    """Surface area of S^dim (dim = 0 counts two points)."""
    if dim == 0:
        return 2.0
    if dim == 1:
        return 2.0 * np.pi
    return 2.0 * np.pi * _sphere_area(dim - 2) / (dim - 1)


@dataclass(frozen=True)
class Mollifier:
    """
    Zonal bump kernel phi_eps(v, w) = c * eta(<v, w>) on S^n.

    eta(r) = exp(-1 / (1 - ((1 - r) / eps)^2)) on (1 - eps, 1], zero
    elsewhere; c normalizes the spherical integral to one.
    """

    epsilon: float
    num_quadrature: int = 4001

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def profile(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        # coincident directions may round to r slightly above 1
        s = np.maximum((1.0 - r) / self.epsilon, 0.0)
        inside = r > 1.0 - self.epsilon
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            vals = np.exp(-1.0 / (1.0 - s**2))
        return np.where(inside, vals, 0.0)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.num_quadrature)

    @cached_property
    def values(self) -> np.ndarray:
        return self.profile(self.nodes)

    def _raw_mass(self, n: int) -> float:
        theta_max = float(np.arccos(1.0 - self.epsilon))
        theta = np.linspace(0.0, theta_max, self.num_quadrature)
        integrand = self.profile(np.cos(theta)) * np.sin(theta) ** (n - 1)
        return _sphere_area(n - 1) * _trapezoid(integrand, theta)

    def normalization(self, n: int) -> float:
        """c with c * integral over S^n of eta(<v, w>) dw = 1."""
        return 1.0 / self._raw_mass(n)

    def total_mass(self, n: int) -> float:
        return self.normalization(n) * self._raw_mass(n)

    def kernel(self, cos_angle: np.ndarray, n: int) -> np.ndarray:
        return self.normalization(n) * self.profile(cos_angle)


def support_derivative(state: SupportState) -> np.ndarray:
    """First angular derivative S_theta (circle) or S_phi (sphere, zero at poles)."""
    S, d = state.S, state.spacing
    if state.grid_kind is GridKind.CIRCLE:
        return (np.roll(S, -1) - np.roll(S, 1)) / (2.0 * d)
    out = np.zeros_like(S)
    out[1:-1] = (S[2:] - S[:-2]) / (2.0 * d)
    return out


def _second_derivative(state: SupportState) -> np.ndarray:
    S, d = state.S, state.spacing
    if state.grid_kind is GridKind.CIRCLE:
        return (np.roll(S, -1) - 2.0 * S + np.roll(S, 1)) / d**2
    out = np.empty_like(S)
    out[1:-1] = (S[2:] - 2.0 * S[1:-1] + S[:-2]) / d**2
    out[0] = 2.0 * (S[1] - S[0]) / d**2
    out[-1] = 2.0 * (S[-2] - S[-1]) / d**2
    return out


def curvature_radii(state: SupportState) -> np.ndarray:
    """
    Principal radii per node, shape ``(N, n)``.

    May be negative for invalid data; the convexity checks rely on that.
    """
    S = state.S
    first = _second_derivative(state) + S
    if state.grid_kind is GridKind.CIRCLE:
        return first[:, None]
    phi = state.angles
    second = first.copy()
    interior = slice(1, -1)
    second[interior] = support_derivative(state)[interior] / np.tan(phi[interior]) + S[interior]
    return np.column_stack([first, second])


def eta_envelope(state: SupportState, eta: float) -> SupportState:
    """Outward offset of the body at distance eta: S + eta."""
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    return state.with_values(state.S + eta)


def recentered(state: SupportState, new_origin: Sequence[float]) -> SupportState:
    """Same body, support taken about ``new_origin``."""
    new_origin = np.asarray(new_origin, dtype=np.float64).reshape(-1)
    shift = new_origin - state.origin
    dirs = state.directions()
    if state.grid_kind is GridKind.CIRCLE:
        delta = dirs @ shift
    else:
        if np.any(shift[:-1] != 0.0):
            raise ValueError("axisymmetric bodies can only be recentred along the axis")
        delta = dirs[:, 1] * shift[-1]
    return replace(state, S=state.S - delta, origin=new_origin)


def support_points(state: SupportState) -> np.ndarray:
    """
    Boundary point with each grid normal, in global profile coordinates.

    Returns ``(N, 2)`` rows (lateral, vertical): Y = origin + S v + S' v_perp.
    """
    S = state.S
    dS = support_derivative(state)
    a = state.angles
    if state.grid_kind is GridKind.CIRCLE:
        x = state.origin[0] + S * np.cos(a) - dS * np.sin(a)
        z = state.origin[1] + S * np.sin(a) + dS * np.cos(a)
        return np.column_stack([x, z])
    lateral = S * np.sin(a) + dS * np.cos(a)
    vertical = state.origin[-1] + S * np.cos(a) - dS * np.sin(a)
    return np.column_stack([lateral, vertical])


def lower_graph_defect(state: SupportState) -> float:
    """
    Worst failure of the lower half of the body to be a graph.

    Along the lower half of the normal grid the lateral coordinate of the
    support points must be monotone (decreasing in phi on [pi/2, pi] for the
    sphere, increasing in theta on [pi, 2 pi] for the circle). Returns the
    largest step against that direction relative to max |S|; zero means
    monotone.
    """
    pts = support_points(state)
    a = state.angles
    scale = max(float(np.max(np.abs(state.S))), 1e-300)
    if state.grid_kind is GridKind.CIRCLE:
        lower = (a >= np.pi - 1e-12) & (a <= 2.0 * np.pi)
        x = np.append(pts[lower, 0], state.origin[0] + state.S[0])
        steps = -np.diff(x)
    else:
        lower = a >= np.pi / 2.0 - 1e-12
        steps = np.diff(pts[lower, 0])
    return float(max(np.max(steps), 0.0) / scale) if steps.size else 0.0


def mollify(state: SupportState, m: Mollifier, num_azimuth: int = 512) -> SupportState:
    """
    Spherical convolution S * phi_eps by quadrature on the grid.

    Circle: periodic convolution with weights eta(cos(theta_m)) via FFT.
    Sphere: zonal kernel summed over the azimuth of each source ring,

        K[a, b] = sin(phi_b) * sum_alpha eta(cos phi_a cos phi_b
                                            + sin phi_a sin phi_b cos alpha),

    Rows are normalized to sum to one, so constants are reproduced exactly.

    Raises:
        ConvexityLost: if the result has a non-positive curvature radius
    """
    S = state.S
    N = state.num_nodes
    if state.grid_kind is GridKind.CIRCLE:
        offsets = 2.0 * np.pi * np.arange(N) / N
        w = m.profile(np.cos(offsets))
        w = w / w.sum()
        smoothed = np.fft.irfft(np.fft.rfft(S) * np.fft.rfft(w), n=N)
    else:
        phi = state.angles
        alpha = np.linspace(0.0, np.pi, num_azimuth)
        alpha_w = np.full(num_azimuth, alpha[1] - alpha[0])
        alpha_w[[0, -1]] *= 0.5
        phi_w = np.full(N, state.spacing)
        phi_w[[0, -1]] *= 0.5
        # phi and pi - phi must see mirrored kernels bit for bit
        cos_p = 0.5 * (np.cos(phi) - np.cos(phi[::-1]))
        sin_p = 0.5 * (np.sin(phi) + np.sin(phi[::-1]))
        cos_a = np.cos(alpha)
        K = np.empty((N, N))
        for a in range(N):
            cos_angle = np.clip(
                cos_p[a] * cos_p[:, None] + sin_p[a] * sin_p[:, None] * cos_a, -1.0, 1.0
            )
            ring = m.profile(cos_angle) @ alpha_w
            K[a] = ring * sin_p * phi_w
        sums = K.sum(axis=1)
        empty = sums <= 0.0
        K[empty] = 0.0
        K[empty, np.flatnonzero(empty)] = 1.0
        sums[empty] = 1.0
        smoothed = (K / sums[:, None]) @ S

    result = state.with_values(smoothed)
    radii = curvature_radii(result)
    if np.min(radii) <= 0.0:
        raise ConvexityLost(
            f"mollification at eps={m.epsilon:g} produced radius {np.min(radii):.3e}"
        )
    return result


def arctan_potential(r: np.ndarray) -> np.ndarray:
    """phi(r) = integral_0^r arctan(s) ds = r arctan r - log(1 + r^2) / 2."""
    r = np.asarray(r, dtype=np.float64)
    return r * np.arctan(r) - 0.5 * np.log1p(r**2)


def perturb_graph(graph: GraphState, j: float) -> GraphState:
    """u + phi(|x|)/j; masked nodes stay masked."""
    if not j > 0.0:
        raise ValueError(f"j must be positive, got {j}")
    return graph.with_heights(graph.u + arctan_potential(graph.radius()) / j)


def reflect_and_close(
    graph: GraphState,
    j: float,
    eta: float = 0.0,
    num_angles: int = DEFAULT_SUPPORT_NODES,
) -> SupportState:
    """
    Close the sublevel set {u <= j} by reflection across height j.

    The body is the convex hull of the graph points below j, their mirror
    images 2j - u, and the crossing point at height j when the grid reaches
    it. Its support function about (0, j) is the maximum of <v, Y> over
    those points; ``eta`` is added afterwards. A radial graph with n = 1
    closes to a curve (circle grid, ``num_angles`` nodes); n = 2 closes to
    an axisymmetric surface (sphere grid, ``num_angles + 1`` nodes).

    Raises:
        NotBelowLevel: if min u >= j
    """
    if graph.mode is not GridMode.RADIAL or graph.n not in (1, 2):
        raise ValueError("reflect_and_close needs a radial graph with n = 1 or 2")
    u = graph.u
    r = graph.radius()
    below = np.isfinite(u) & (u <= j)
    if not np.any(below) or float(np.nanmin(u)) >= j:
        raise NotBelowLevel(f"graph does not dip below level j={j:g}")

    last = int(np.flatnonzero(below)[-1])
    lateral = list(r[below])
    vertical = list(u[below] - j)
    if last + 1 < u.size and np.isfinite(u[last + 1]) and u[last + 1] > j:
        frac = (j - u[last]) / (u[last + 1] - u[last])
        lateral.append(r[last] + frac * graph.spacing)
        vertical.append(0.0)

    lat = np.asarray(lateral)
    ver = np.asarray(vertical)
    lat = np.concatenate([lat, lat])
    ver = np.concatenate([ver, -ver])

    if graph.n == 1:
        kind = GridKind.CIRCLE
        lat = np.concatenate([lat, -lat])
        ver = np.concatenate([ver, ver])
        num = num_angles
        origin = np.array([0.0, j])
    else:
        kind = GridKind.AXISYMMETRIC_SPHERE
        num = num_angles + 1
        origin = np.array([0.0, 0.0, j])

    state = SupportState(kind, np.zeros(num), origin)
    dirs = state.directions()
    S = np.max(dirs @ np.vstack([lat, ver]), axis=1) + eta
    log.debug(f"Closed graph at level j={j:g}: {lat.size} hull points, {num} normals")
    return state.with_values(S)


def support_stable_dt(
    state: SupportState,
    radii: np.ndarray,
    k: int,
    cfl_safety: float,
) -> float:
    """cfl_safety * spacing^2 / (2 n max_i D_iQ_k lambda_i^2)."""
    lam = 1.0 / radii
    coef = float(np.max(grad_qk(lam, k) * lam**2))
    return cfl_safety * state.spacing**2 / (2.0 * state.n * coef)


def step_support_flow(
    state: SupportState,
    k: int,
    ctrl: StepControl,
    *,
    dt_cap: float | None = None,
) -> SupportState:
    """
    One forward-Euler step of S_t = -Q_k(1 / radii).

    Args:
        state: strictly convex body (all radii > 0)
        k: speed index, 1 <= k <= n
        ctrl: cfl_safety, dt_max, t_end and max_halvings
        dt_cap: extra upper bound on dt

    Raises:
        Extinct: if the body has collapsed (all radii <= 0, or the support
            about the centre reached zero)
        ConvexityLost: if a radius becomes non-positive and halving dt does
            not help
    """
    if not 1 <= k <= state.n:
        raise ValueError(f"need 1 <= k <= n={state.n}, got k={k}")
    radii = curvature_radii(state)
    if np.all(radii <= 0.0) or np.min(state.S) <= 0.0:
        raise Extinct(f"body collapsed at t={state.t:.6g}", t=state.t)
    if np.min(radii) <= 0.0:
        raise ConvexityLost(f"non-positive radius {np.min(radii):.3e} at t={state.t:.6g}")

    speed = np.asarray(qk(1.0 / radii, k))
    dt = support_stable_dt(state, radii, k, ctrl.cfl_safety)
    dt = min(dt, ctrl.dt_max, max(ctrl.t_end - state.t, 0.0))
    if dt_cap is not None:
        dt = min(dt, dt_cap)

    max_halvings = ctrl.max_halvings
    for _ in range(max_halvings + 1):
        S_new = state.S - dt * speed
        if np.min(S_new) <= 0.0:
            raise Extinct(f"body collapsed at t={state.t + dt:.6g}", t=state.t + dt)
        candidate = state.with_values(S_new, state.t + dt)
        new_radii = curvature_radii(candidate)
        if np.all(new_radii <= 0.0):
            raise Extinct(f"body collapsed at t={candidate.t:.6g}", t=candidate.t)
        if np.min(new_radii) > 0.0:
            return candidate
        log.warning(f"Support step at t={state.t:.6g} lost convexity; halving dt")
        dt *= 0.5
    raise ConvexityLost(f"convexity lost at t={state.t:.6g} after {max_halvings} halvings")


@dataclass
class SupportRun:
    """Result of :func:`run_support_flow`."""

    times: np.ndarray
    mean_support: np.ndarray
    min_radius: np.ndarray
    final: SupportState
    extinction_time: float | None = None
    snapshots: dict[float, SupportState] = field(default_factory=dict)
    # extinction_time includes the closed-form ball lifetime of the last stage
    extinction_extrapolated: bool = False

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None


def run_support_flow(
    state: SupportState,
    k: int,
    ctrl: StepControl,
    *,
    monitor_times: Sequence[float] = (),
    extinction_floor: float = 0.1,
    progress: bool = False,
    label: str = "support flow",
) -> SupportRun:
    """
    Integrate the support-function flow to ``ctrl.t_end`` or to extinction.

    Steps are clipped to land exactly on ``monitor_times``, where snapshots
    are stored. Once the largest support value falls below
    ``extinction_floor`` times its initial value the body is treated as an
    almost round collapsing ball and the remaining lifetime
    k rho^2 / (2 (n - k + 1)) (rho the mean support) is added to give the
    extinction time, and ``extinction_extrapolated`` is set on the result.
    """
    pending = sorted(float(t) for t in monitor_times if 0.0 <= t <= ctrl.t_end)
    snapshots: dict[float, SupportState] = {}
    if pending and pending[0] == 0.0:
        snapshots[0.0] = state
        pending.pop(0)

    scale0 = float(np.max(state.S))
    times = [state.t]
    means = [float(np.mean(state.S))]
    min_r = [float(np.min(curvature_radii(state)))]
    extinction: float | None = None
    extrapolated = False

    with tqdm(
        total=ctrl.t_end,
        desc=label,
        unit="t",
        file=sys.stdout,
        dynamic_ncols=True,
        disable=not progress,
        bar_format="{l_bar}{bar}| {n:.4g}/{total:.4g} [{elapsed}]",
    ) as pbar:
        while state.t < ctrl.t_end * (1.0 - 1e-12):
            cap = pending[0] - state.t if pending else None
            previous = state.t
            try:
                state = step_support_flow(state, k, ctrl, dt_cap=cap)
            except Extinct as exc:
                extinction = exc.t if exc.t is not None else state.t
                break
            pbar.update(state.t - previous)
            times.append(state.t)
            means.append(float(np.mean(state.S)))
            min_r.append(float(np.min(curvature_radii(state))))
            while pending and state.t >= pending[0] * (1.0 - 1e-12):
                snapshots[pending.pop(0)] = state
            if np.max(state.S) <= extinction_floor * scale0:
                rho = float(np.mean(state.S))
                extinction = state.t + k * rho**2 / (2.0 * (state.n - k + 1))
                extrapolated = True
                break

    if extinction is not None:
        tail = f" (ball tail from t={state.t:.6g})" if extrapolated else ""
        log.debug(f"{label}: extinct at t={extinction:.6g}{tail}")
    return SupportRun(
        times=np.asarray(times),
        mean_support=np.asarray(means),
        min_radius=np.asarray(min_r),
        final=state,
        extinction_time=extinction,
        snapshots=snapshots,
        extinction_extrapolated=extrapolated,
    )
