"""
Discrete Graph Geometry
=======================

Metric, second fundamental form, principal curvatures, gradient function
and cutoff of a sampled convex graph u, in either of two grid modes:

- ``radial``: u(r_i) on r_i = i*h, i = 0..N-1, describing a rotationally
  symmetric graph over R^n for any n >= 1. The pole is handled by even
  extension (ghost value u_{-1} = u_1).
- ``full2d``: u on a square N x N grid with lower-left corner ``origin`` and
  step h, n = 2.

Masked nodes (heights above the clip ceiling, or non-finite) are stored as
NaN. A node is *interior* when its whole central-difference stencil is
active and lies on the grid; the remaining active nodes form the boundary
ring, whose motion the flow stepper extrapolates.

Key Features
------------
- **Vectorized fields**: :func:`curvature_field` evaluates upsilon, the
  curvature vectors and the second fundamental form on every node at once
- **Point frames**: :func:`frame_at` assembles g_ij, h_ij, lambda, upsilon
  and psi at one node, with stencil and convexity checks
- **Monitor scan**: :func:`global_monitor_scan` extracts every a priori
  quantity over the cutoff support {psi > 0}
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from config import CLIP_FACTOR, CONVEXITY_EPS
from scripts.errors import (
    BoundaryStencil,
    EmptySupport,
    InadmissibleInitialData,
    NonConvex,
)
from scripts.symfun import CurvatureVector, admissible_mask, elementary_sym, qk
from scripts.utils import logging as log

__all__ = [
    "GridMode",
    "GraphState",
    "PointFrame",
    "CurvatureField",
    "MonitorScan",
    "curvature_field",
    "frame_at",
    "frame_from_derivatives",
    "euler_formula_check",
    "unit_normal",
    "global_monitor_scan",
    "convexity_defect",
    "check_initial_hypotheses",
    "interpolate_height",
    "interior_mask",
    "default_clip_ceiling",
]


class GridMode(str, Enum):
    """Sampling layout of a graph."""

    FULL2D = "full2d"
    RADIAL = "radial"


Node = int | tuple[int, int]


@dataclass(frozen=True)
class GraphState:
    """
    A sampled convex graph with its flow parameters.

    Attributes:
        mode: grid layout
        u: heights, shape ``(N,)`` (radial) or ``(N, N)`` (full2d); NaN marks
            masked nodes
        spacing: grid step h
        n: dimension of the graph hypersurface (full2d forces 2)
        k: speed index of the Q_k flow
        t: current time
        origin: full2d coordinate of node (0, 0) along both axes
    """

    mode: GridMode
    u: np.ndarray
    spacing: float
    n: int
    k: int
    t: float = 0.0
    origin: float = 0.0

    def __post_init__(self) -> None:
        mode = GridMode(self.mode)
        object.__setattr__(self, "mode", mode)
        u = np.asarray(self.u, dtype=np.float64)
        object.__setattr__(self, "u", u)
        if self.spacing <= 0.0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if mode is GridMode.RADIAL and u.ndim != 1:
            raise ValueError("radial GraphState needs a 1-D height array")
        if mode is GridMode.FULL2D:
            if u.ndim != 2 or u.shape[0] != u.shape[1]:
                raise ValueError("full2d GraphState needs a square 2-D height array")
            if self.n != 2:
                raise ValueError("full2d mode forces n = 2")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def active(self) -> np.ndarray:
        return np.isfinite(self.u)

    @property
    def num_nodes(self) -> int:
        return int(self.u.shape[0])

    def coordinates(self) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
        """Node coordinates: r array (radial) or (X, Y) with ``indexing='ij'``."""
        axis = np.arange(self.num_nodes) * self.spacing
        if self.mode is GridMode.RADIAL:
            return axis
        axis = axis + self.origin
        return np.meshgrid(axis, axis, indexing="ij")

    def radius(self) -> np.ndarray:
        """|x| at every node."""
        coords = self.coordinates()
        if self.mode is GridMode.RADIAL:
            return coords
        X, Y = coords
        return np.hypot(X, Y)

    def with_heights(self, u: np.ndarray, t: float | None = None) -> GraphState:
        return replace(self, u=u, t=self.t if t is None else t)

    @classmethod
    def from_radial_function(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        r_max: float,
        num_nodes: int,
        n: int,
        k: int,
        clip_ceiling: float = np.inf,
    ) -> GraphState:
        """Sample u = func(r) on ``num_nodes`` nodes of [0, r_max]."""
        spacing = r_max / (num_nodes - 1)
        r = np.arange(num_nodes) * spacing
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.asarray(func(r), dtype=np.float64)
        return cls(GridMode.RADIAL, _apply_ceiling(u, clip_ceiling), spacing, n, k)

    @classmethod
    def from_planar_function(
        cls,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        half_width: float,
        num_nodes: int,
        k: int,
        clip_ceiling: float = np.inf,
    ) -> GraphState:
        """Sample u = func(x, y) on a ``num_nodes``^2 grid over [-L, L]^2."""
        spacing = 2.0 * half_width / (num_nodes - 1)
        axis = -half_width + np.arange(num_nodes) * spacing
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.asarray(func(X, Y), dtype=np.float64)
        return cls(
            GridMode.FULL2D,
            _apply_ceiling(u, clip_ceiling),
            spacing,
            2,
            k,
            origin=-half_width,
        )


def _apply_ceiling(u: np.ndarray, clip_ceiling: float) -> np.ndarray:
    keep = np.isfinite(u) & (u <= clip_ceiling)
    return np.where(keep, u, np.nan)


@dataclass(frozen=True)
class PointFrame:
    """Local geometry of the graph at one node."""

    du: np.ndarray
    gij: np.ndarray
    hij: np.ndarray
    lam: CurvatureVector
    upsilon: float
    psi: float

    @property
    def lambda_max(self) -> float:
        return self.lam.lambda_max


@dataclass(frozen=True)
class CurvatureField:
    """Whole-grid geometry of a GraphState; NaN outside the interior."""

    interior: np.ndarray
    upsilon: np.ndarray
    lam: np.ndarray
    h_components: np.ndarray
    h_weights: tuple[float, ...]


@dataclass(frozen=True)
class MonitorScan:
    """A priori quantities of one time slice over the cutoff support."""

    sup_psi_upsilon: float
    inf_psi_inv_qk: float
    sup_psi_qk_sq: float
    sup_psi2_lambda_max: float
    sup_qk_sq: float
    sup_upsilon: float
    sup_psi2_grad_a: float
    support_size: int
    inf_psi_inv_qj: dict[int, float] = field(default_factory=dict)


def interior_mask(state: GraphState) -> np.ndarray:
    """Nodes whose full central-difference stencil is active and on-grid."""
    active = state.active
    interior = np.zeros_like(active)
    if state.mode is GridMode.RADIAL:
        if active.size < 3:
            return interior
        interior[1:-1] = active[:-2] & active[1:-1] & active[2:]
        interior[0] = active[0] & active[1]
        return interior
    stencil = np.ones((active.shape[0] - 2, active.shape[1] - 2), dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            stencil &= active[
                1 + di : active.shape[0] - 1 + di, 1 + dj : active.shape[1] - 1 + dj
            ]
    interior[1:-1, 1:-1] = stencil
    return interior


def _radial_derivatives(u: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    ur = np.full_like(u, np.nan)
    urr = np.full_like(u, np.nan)
    ur[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    urr[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    if u.size > 1:
        ur[0] = 0.0
        urr[0] = 2.0 * (u[1] - u[0]) / h**2
    return ur, urr


def _planar_derivatives(u: np.ndarray, h: float) -> tuple[np.ndarray, ...]:
    shape = u.shape
    ux, uy, uxx, uxy, uyy = (np.full(shape, np.nan) for _ in range(5))
    c = u[1:-1, 1:-1]
    ux[1:-1, 1:-1] = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2.0 * h)
    uy[1:-1, 1:-1] = (u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * h)
    uxx[1:-1, 1:-1] = (u[2:, 1:-1] - 2.0 * c + u[:-2, 1:-1]) / h**2
    uyy[1:-1, 1:-1] = (u[1:-1, 2:] - 2.0 * c + u[1:-1, :-2]) / h**2
    uxy[1:-1, 1:-1] = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (
        4.0 * h**2
    )
    return ux, uy, uxx, uxy, uyy


def curvature_field(state: GraphState) -> CurvatureField:
    """
    Evaluate upsilon, principal curvatures and h_ij on every node.

    Radial mode uses lambda_rad = u_rr / upsilon^3 and
    lambda_tan = u_r / (r upsilon) (multiplicity n - 1), with
    lambda_tan(0) = u_rr(0). Full2d mode diagonalizes the symmetrized shape
    operator g^(-1/2) h g^(-1/2) in closed form, using
    g^(-1/2) = I - Du Du^T / (upsilon (upsilon + 1)).

    Returns:
        CurvatureField with ``lam`` of shape ``u.shape + (n,)`` sorted
        ascending; every entry outside the interior is NaN.
    """
    interior = interior_mask(state)
    h = state.spacing
    with np.errstate(invalid="ignore", divide="ignore"):
        if state.mode is GridMode.RADIAL:
            ur, urr = _radial_derivatives(state.u, h)
            r = state.radius()
            upsilon = np.sqrt(1.0 + ur**2)
            lam_rad = urr / upsilon**3
            tangential = np.where(r > 0.0, ur / np.where(r > 0.0, r, 1.0), urr)
            lam_tan = tangential / upsilon
            lam = np.stack([lam_rad] + [lam_tan] * (state.n - 1), axis=-1)
            h_components = np.stack([urr / upsilon, tangential / upsilon], axis=-1)
            weights: tuple[float, ...] = (1.0, float(state.n - 1))
        else:
            ux, uy, uxx, uxy, uyy = _planar_derivatives(state.u, h)
            upsilon = np.sqrt(1.0 + ux**2 + uy**2)
            c = 1.0 / (upsilon * (upsilon + 1.0))
            p00 = 1.0 - c * ux**2
            p01 = -c * ux * uy
            p11 = 1.0 - c * uy**2
            h00, h01, h11 = uxx / upsilon, uxy / upsilon, uyy / upsilon
            # A = P H P for symmetric 2x2 P and H
            t00 = h00 * p00 + h01 * p01
            t01 = h00 * p01 + h01 * p11
            t10 = h01 * p00 + h11 * p01
            t11 = h01 * p01 + h11 * p11
            a00 = p00 * t00 + p01 * t10
            a01 = p00 * t01 + p01 * t11
            a11 = p01 * t01 + p11 * t11
            mean = 0.5 * (a00 + a11)
            disc = np.hypot(0.5 * (a00 - a11), a01)
            lam = np.stack([mean - disc, mean + disc], axis=-1)
            h_components = np.stack([h00, h01, h11], axis=-1)
            weights = (1.0, 2.0, 1.0)
        lam = np.sort(lam, axis=-1)

    lam[~interior] = np.nan
    upsilon = np.where(interior, upsilon, np.nan)
    h_components[~interior] = np.nan
    return CurvatureField(interior, upsilon, lam, h_components, weights)


def _node_derivatives(state: GraphState, node: Node) -> tuple[np.ndarray, np.ndarray]:
    interior = interior_mask(state)
    try:
        inside = bool(interior[node])
    except IndexError as exc:
        raise BoundaryStencil(f"node {node} is outside the grid") from exc
    if not inside:
        raise BoundaryStencil(f"stencil of node {node} leaves the active domain")

    u, h = state.u, state.spacing
    if state.mode is GridMode.RADIAL:
        i = int(node)  # type: ignore[arg-type]
        if i == 0:
            ur, urr, tangential = 0.0, 2.0 * (u[1] - u[0]) / h**2, None
        else:
            ur = (u[i + 1] - u[i - 1]) / (2.0 * h)
            urr = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h**2
            tangential = ur / (i * h)
        du = np.zeros(state.n)
        du[0] = ur
        d2u = np.diag([urr] + [urr if tangential is None else tangential] * (state.n - 1))
        return du, d2u

    i, j = node  # type: ignore[misc]
    ux = (u[i + 1, j] - u[i - 1, j]) / (2.0 * h)
    uy = (u[i, j + 1] - u[i, j - 1]) / (2.0 * h)
    uxx = (u[i + 1, j] - 2.0 * u[i, j] + u[i - 1, j]) / h**2
    uyy = (u[i, j + 1] - 2.0 * u[i, j] + u[i, j - 1]) / h**2
    uxy = (u[i + 1, j + 1] - u[i + 1, j - 1] - u[i - 1, j + 1] + u[i - 1, j - 1]) / (
        4.0 * h**2
    )
    return np.array([ux, uy]), np.array([[uxx, uxy], [uxy, uyy]])


def frame_from_derivatives(
    du: Sequence[float] | np.ndarray,
    d2u: np.ndarray,
    height: float = 0.0,
    M: float = np.inf,
) -> PointFrame:
    """
    Assemble a PointFrame from Du, D^2u and the height at a point.

    g = I + Du Du^T, h = D^2u / upsilon, and lambda are the eigenvalues of
    g^(-1/2) h g^(-1/2) in ascending order.
    """
    du = np.asarray(du, dtype=np.float64).reshape(-1)
    d2u = np.asarray(d2u, dtype=np.float64)
    n = du.size
    upsilon = float(np.sqrt(1.0 + du @ du))
    gij = np.eye(n) + np.outer(du, du)
    hij = d2u / upsilon
    inv_sqrt_g = np.eye(n) - np.outer(du, du) / (upsilon * (upsilon + 1.0))
    shape_op = inv_sqrt_g @ hij @ inv_sqrt_g
    lam = np.linalg.eigvalsh(0.5 * (shape_op + shape_op.T))
    psi = float(max(M - height, 0.0))
    return PointFrame(du, gij, hij, CurvatureVector(lam), upsilon, psi)


def frame_at(state: GraphState, node: Node, M: float) -> PointFrame:
    """
    PointFrame of the graph at an interior node.

    Raises:
        BoundaryStencil: if the stencil leaves the active domain
        NonConvex: if an eigenvalue falls below -eps_conv
    """
    du, d2u = _node_derivatives(state, node)
    frame = frame_from_derivatives(du, d2u, float(state.u[node]), M)
    scale = max(1.0, float(np.max(np.abs(frame.lam.values))))
    if frame.lam.values[0] < -CONVEXITY_EPS * scale:
        raise NonConvex(
            f"node {node}: smallest principal curvature {frame.lam.values[0]:.3e}"
        )
    return frame


def euler_formula_check(frame: PointFrame) -> bool:
    """h_ii / g_ii <= lambda_max for every coordinate index, slack 1e-10."""
    ratios = np.diag(frame.hij) / np.diag(frame.gij)
    return bool(np.all(ratios <= frame.lambda_max + 1e-10))


def unit_normal(frame: PointFrame) -> np.ndarray:
    """Upward unit normal (-Du, 1) / sqrt(1 + |Du|^2) in R^{n+1}."""
    vec = np.append(-frame.du, 1.0)
    return vec / np.linalg.norm(vec)


def convexity_defect(curv: CurvatureField) -> float:
    """Most negative interior eigenvalue relative to the curvature scale."""
    lam = curv.lam[curv.interior]
    if lam.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(lam))))
    return float(min(np.min(lam), 0.0) / scale)


def _central_gradient_sq(
    values: np.ndarray, h: float, mode: GridMode
) -> np.ndarray:
    """Squared gradient of one field by central differences; NaN at edges."""
    if mode is GridMode.RADIAL:
        g = np.full_like(values, np.nan)
        g[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
        if values.size > 1:
            g[0] = 0.0
        return g**2
    gx = np.full_like(values, np.nan)
    gy = np.full_like(values, np.nan)
    gx[1:-1, :] = (values[2:, :] - values[:-2, :]) / (2.0 * h)
    gy[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2.0 * h)
    return gx**2 + gy**2


def global_monitor_scan(
    state: GraphState,
    M: float,
    track_k: Sequence[int] = (),
    curv: CurvatureField | None = None,
) -> MonitorScan:
    """
    Scan every interior node with psi = (M - u)_+ > 0.

    Args:
        state: convex graph, admissible on the support of psi
        M: cutoff level
        track_k: extra speed indices j for which inf psi^-1 Q_j is recorded
        curv: precomputed field of ``state`` (computed when omitted)

    Raises:
        EmptySupport: if no interior node has psi > 0
        NonAdmissible: if Q_k is undefined somewhere on the support
    """
    curv = curv if curv is not None else curvature_field(state)
    interior = curv.interior
    with np.errstate(invalid="ignore"):
        psi = np.where(interior, np.maximum(M - state.u, 0.0), 0.0)
        support = interior & (psi > 0.0)
        region = interior & (state.u <= M)
    if not np.any(support):
        raise EmptySupport(f"no interior node below the cutoff level M={M:g}")

    q_region = np.asarray(qk(curv.lam[region], state.k))
    q_full = np.full(state.u.shape, np.nan)
    q_full[region] = q_region

    psi_s = psi[support]
    ups_s = curv.upsilon[support]
    q_s = q_full[support]
    lam_max_s = curv.lam[support][..., -1]

    grad_sq = np.zeros(state.u.shape)
    with np.errstate(invalid="ignore"):
        for comp, weight in zip(
            np.moveaxis(curv.h_components, -1, 0), curv.h_weights, strict=True
        ):
            grad_sq = grad_sq + weight * _central_gradient_sq(
                comp, state.spacing, state.mode
            )
    grad_a = psi_s**2 * grad_sq[support]
    grad_a = grad_a[np.isfinite(grad_a)]

    tracked: dict[int, float] = {}
    for j in track_k:
        q_j = np.asarray(qk(curv.lam[support], j))
        tracked[int(j)] = float(np.min(q_j / psi_s))

    return MonitorScan(
        sup_psi_upsilon=float(np.max(psi_s * ups_s)),
        inf_psi_inv_qk=float(np.min(q_s / psi_s)),
        sup_psi_qk_sq=float(np.max((psi_s * q_s) ** 2)),
        sup_psi2_lambda_max=float(np.max(psi_s**2 * lam_max_s)),
        sup_qk_sq=float(np.max(q_region**2)),
        sup_upsilon=float(np.max(curv.upsilon[region])),
        sup_psi2_grad_a=float(np.max(grad_a)) if grad_a.size else 0.0,
        support_size=int(np.count_nonzero(support)),
        inf_psi_inv_qj=tracked,
    )


def check_initial_hypotheses(state: GraphState, k: int | None = None) -> None:
    """
    Discrete check of the hypotheses on initial data.

    u attains its minimum at an interior node, inf u >= 0, the graph is
    convex, and Q_k > 0 on every interior node.

    Raises:
        InadmissibleInitialData: naming the first failed hypothesis
    """
    k = state.k if k is None else k
    curv = curvature_field(state)
    interior = curv.interior
    if not np.any(interior):
        raise InadmissibleInitialData("graph has no interior nodes")

    u_min = float(np.nanmin(state.u))
    if float(np.min(state.u[interior])) > u_min:
        raise InadmissibleInitialData(
            "minimum of u is attained only on the boundary ring"
        )
    if u_min < -1e-12:
        raise InadmissibleInitialData(f"inf u = {u_min:.6g} is negative")

    defect = convexity_defect(curv)
    if defect < -CONVEXITY_EPS:
        raise InadmissibleInitialData(
            f"graph is not convex (relative eigenvalue defect {defect:.3e})"
        )

    lam = curv.lam[interior]
    if not np.all(admissible_mask(lam, k)):
        raise InadmissibleInitialData(f"S_{k - 1} vanishes on the initial support")
    s = elementary_sym(lam)
    if np.any(s[..., k] <= 0.0):
        count = int(np.count_nonzero(s[..., k] <= 0.0))
        raise InadmissibleInitialData(f"Q_{k} <= 0 at {count} interior node(s)")
    log.debug(f"Initial data admissible for k={k} ({int(interior.sum())} nodes)")


def interpolate_height(state: GraphState, points: np.ndarray) -> np.ndarray:
    """
    Heights of the graph at arbitrary horizontal points.

    Args:
        points: radial distances ``(m,)`` in radial mode, or planar
            coordinates ``(m, 2)`` in full2d mode

    Returns:
        Linearly (radial) or bilinearly (full2d) interpolated heights; NaN for
        points off the grid or touching a masked node.
    """
    h = state.spacing
    N = state.num_nodes
    if state.mode is GridMode.RADIAL:
        r = np.abs(np.asarray(points, dtype=np.float64))
        s = r / h
        i0 = np.floor(s).astype(int)
        inside = i0 < N - 1
        i0c = np.clip(i0, 0, N - 2)
        w = s - i0c
        vals = (1.0 - w) * state.u[i0c] + w * state.u[i0c + 1]
        exact_end = np.isclose(s, N - 1)
        vals = np.where(exact_end, state.u[-1], vals)
        return np.where(inside | exact_end, vals, np.nan)

    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    s = (pts - state.origin) / h
    i0 = np.floor(s).astype(int)
    inside = np.all((i0 >= 0) & (i0 < N - 1), axis=1)
    i0c = np.clip(i0, 0, N - 2)
    w = s - i0c
    u = state.u
    a = u[i0c[:, 0], i0c[:, 1]]
    b = u[i0c[:, 0] + 1, i0c[:, 1]]
    c = u[i0c[:, 0], i0c[:, 1] + 1]
    d = u[i0c[:, 0] + 1, i0c[:, 1] + 1]
    wx, wy = w[:, 0], w[:, 1]
    vals = (1 - wx) * (1 - wy) * a + wx * (1 - wy) * b + (1 - wx) * wy * c + wx * wy * d
    return np.where(inside, vals, np.nan)


def default_clip_ceiling(M: float) -> float:
    """Default height above which nodes are masked."""
    return CLIP_FACTOR * M
