"""
Closed-Form Reference Solutions
===============================

The shrinking sphere is an exact solution of every Q_k flow: a sphere of
radius rho has all principal curvatures 1/rho, hence speed
((n - k + 1) / k) / rho, and

    rho(t)^2 = R0^2 - (2 (n - k + 1) / k) t,

vanishing at t = k R0^2 / (2 (n - k + 1)). The same number is the lower
bound on the existence time of a graph flow whose domain contains a disk of
radius R0.

This module provides the ball law, the existence-time bound, an inscribed
ball builder for graphs and the pointwise clearance check used as a desk
form of the comparison principle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from config import ENCLOSURE_TOL
from scripts.errors import Extinct
from scripts.geometry import GraphState, GridMode, interpolate_height

__all__ = [
    "BallSolution",
    "ball_radius",
    "ball_speed",
    "existence_time_lower_bound",
    "enclosure_check",
    "inscribed_ball",
]


def _check_indices(n: int, k: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")


@dataclass(frozen=True)
class BallSolution:
    """Round sphere evolving by the Q_k flow from radius R0 about ``center``."""

    center: np.ndarray
    R0: float
    n: int
    k: int

    def __post_init__(self) -> None:
        _check_indices(self.n, self.k)
        if not self.R0 > 0.0:
            raise ValueError(f"R0 must be positive, got {self.R0}")
        center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if center.size != self.n + 1:
            raise ValueError(f"center must lie in R^{self.n + 1}, got {center.size} entries")
        object.__setattr__(self, "center", center)

    @property
    def law_coefficient(self) -> float:
        return 2.0 * (self.n - self.k + 1) / self.k

    @property
    def extinction_time(self) -> float:
        return self.R0**2 / self.law_coefficient

    def radius(self, t: float) -> float:
        return ball_radius(self, t)


def ball_radius(sol: BallSolution, t: float) -> float:
    """
    Radius of the shrinking ball at time t.

    Raises:
        Extinct: if t >= extinction time
    """
    if t < 0.0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t >= sol.extinction_time:
        raise Extinct(
            f"ball of radius {sol.R0:g} is extinct at t={sol.extinction_time:.6g}",
            t=sol.extinction_time,
        )
    return float(np.sqrt(sol.R0**2 - sol.law_coefficient * t))


def ball_speed(sol: BallSolution, t: float) -> float:
    """Inward normal speed Q_k of the ball at time t."""
    return (sol.n - sol.k + 1) / sol.k / ball_radius(sol, t)


def existence_time_lower_bound(R: float, n: int, k: int) -> float:
    """k R^2 / (2 (n - k + 1)); infinite for R = inf (whole-space domains)."""
    _check_indices(n, k)
    if not R > 0.0:
        raise ValueError(f"R must be positive, got {R}")
    if np.isinf(R):
        return float("inf")
    return k * R**2 / (2.0 * (n - k + 1))


def _sphere_samples(sol: BallSolution, rho: float, mode: GridMode, num: int):
    phi = np.linspace(0.0, np.pi, num)
    z = sol.center[-1] + rho * np.cos(phi)
    if mode is GridMode.RADIAL:
        return rho * np.sin(phi), z
    alpha = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
    P, A = np.meshgrid(phi, alpha, indexing="ij")
    x = sol.center[0] + rho * np.sin(P) * np.cos(A)
    y = sol.center[1] + rho * np.sin(P) * np.sin(A)
    zz = sol.center[-1] + rho * np.cos(P)
    return np.column_stack([x.ravel(), y.ravel()]), zz.ravel()


def enclosure_check(
    graph: GraphState,
    sol: BallSolution,
    t: float,
    num_samples: int = 361,
    tol: float = ENCLOSURE_TOL,
) -> bool:
    """
    True iff the ball at time t lies on the epigraph side of the graph.

    Every sampled boundary point Y = (x, z) must satisfy
    z - u(x) >= -tol * R0, with u interpolated from the grid. Points over
    masked or off-grid locations count as violations. Radial graphs require
    the ball centre on the axis.
    """
    rho = ball_radius(sol, t)
    if graph.mode is GridMode.RADIAL:
        if np.any(sol.center[:-1] != 0.0):
            raise ValueError("radial enclosure needs a ball centred on the axis")
        r, z = _sphere_samples(sol, rho, GridMode.RADIAL, num_samples)
        heights = interpolate_height(graph, r)
    else:
        pts, z = _sphere_samples(sol, rho, GridMode.FULL2D, max(num_samples // 8, 16))
        heights = interpolate_height(graph, pts)
    clearance = z - heights
    with np.errstate(invalid="ignore"):
        return bool(np.all(clearance >= -tol * sol.R0))


def inscribed_ball(
    graph: GraphState, R0: float, k: int, num_samples: int = 2001
) -> BallSolution:
    """
    Lowest ball of radius R0 over the axis that sits inside the epigraph.

    The centre height is max over |x| <= R0 of u(x) + sqrt(R0^2 - |x|^2).

    Raises:
        ValueError: if the disk of radius R0 leaves the active grid
    """
    if graph.mode is GridMode.RADIAL:
        r = np.linspace(0.0, R0, num_samples)
        heights = interpolate_height(graph, r)
        lift = np.sqrt(np.maximum(R0**2 - r**2, 0.0))
    else:
        m = max(int(np.sqrt(num_samples)), 16)
        radii = np.linspace(0.0, R0, m)
        angles = np.linspace(0.0, 2.0 * np.pi, 2 * m, endpoint=False)
        Rr, Aa = np.meshgrid(radii, angles, indexing="ij")
        pts = np.column_stack([(Rr * np.cos(Aa)).ravel(), (Rr * np.sin(Aa)).ravel()])
        heights = interpolate_height(graph, pts)
        lift = np.sqrt(np.maximum(R0**2 - Rr.ravel() ** 2, 0.0))
    if not np.all(np.isfinite(heights)):
        raise ValueError(f"a ball of radius {R0:g} does not fit over the active grid")
    center = np.zeros(graph.n + 1)
    center[-1] = float(np.max(heights + lift))
    return BallSolution(center=center, R0=R0, n=graph.n, k=k)
