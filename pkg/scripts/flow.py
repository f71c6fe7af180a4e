#!/usr/bin/env python3
"""
Graph Flow Integrator
=====================

Explicit time integration of the Q_k flow written for graphs,

    u_t = upsilon * Q_k(lambda(u)),

together with the k = 1 (mean curvature flow) special case and the
experiment driver that records a :class:`~scripts.monitors.MonitorSeries`.

Stepping
--------
Each step evaluates the curvature field, takes

    dt <= cfl_safety * h^2 / (2 n upsilon_max^2 maxD)

(maxD the largest D_iQ_k on the interior), advances interior nodes by
forward Euler and moves the boundary ring with the speed extrapolated
linearly from its two inward neighbours. Masked nodes never move. A step
whose result loses discrete convexity (or admissibility) is retried with
half the dt; after ``max_halvings`` failures the state is dumped and
:class:`~scripts.errors.StepRejected` is raised.

Usage
-----
    >>> from scripts.flow import StepControl, step_graph
    >>> ctrl = StepControl(t_end=0.01)
    >>> state = step_graph(state, ctrl)
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from tqdm import tqdm

from config import CFL_SAFETY, CONVEXITY_EPS, DUMP_DIR, MAX_HALVINGS
from scripts.errors import ConfigError, NonAdmissible, NonConvex, StepRejected
from scripts.geometry import (
    CurvatureField,
    GraphState,
    GridMode,
    MonitorScan,
    check_initial_hypotheses,
    convexity_defect,
    curvature_field,
    global_monitor_scan,
)
from scripts.monitors import MonitorRow, MonitorSeries
from scripts.oracle import BallSolution, enclosure_check, inscribed_ball
from scripts.symfun import admissible_mask, grad_qk, qk
from scripts.utils import logging as log

if TYPE_CHECKING:
    from scripts.experiment import ExperimentConfig

__all__ = [
    "StepControl",
    "graph_speed",
    "stable_dt",
    "step_graph",
    "step_mcf",
    "run_graph_flow",
    "refinement_drift",
]

vlog = log.get_verbose_logger()

_RADIAL_DIRECTIONS: tuple[tuple[int, ...], ...] = ((-1,), (1,))
_PLANAR_DIRECTIONS: tuple[tuple[int, ...], ...] = (
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
)


@dataclass(frozen=True)
class StepControl:
    """
    Time-step policy shared by graph and support-function flows.

    Attributes:
        cfl_safety: fraction of the explicit stability limit, in (0, 1]
        dt_max: hard cap on dt
        t_end: final time of a run
        monitor_every: record a monitor row every this many steps
        monitor_dt: when set, record at multiples of this time instead, with
            steps clipped to land on them
        max_halvings: retries of a rejected step before aborting
    """

    cfl_safety: float = CFL_SAFETY
    dt_max: float = float("inf")
    t_end: float = 1.0
    monitor_every: int = 1
    monitor_dt: float | None = None
    max_halvings: int = MAX_HALVINGS

    def __post_init__(self) -> None:
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.dt_max > 0.0:
            raise ConfigError(f"dt_max must be positive, got {self.dt_max}")
        if not self.t_end > 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.monitor_every < 1:
            raise ConfigError(f"monitor_every must be >= 1, got {self.monitor_every}")
        if self.monitor_dt is not None and not self.monitor_dt > 0.0:
            raise ConfigError(f"monitor_dt must be positive, got {self.monitor_dt}")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be non-negative")


def _shift(a: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    """b[p] = a[p + offset], NaN where p + offset leaves the grid."""
    out = np.full_like(a, np.nan)
    src, dst = [], []
    for o, size in zip(offset, a.shape, strict=True):
        if o >= 0:
            src.append(slice(o, size))
            dst.append(slice(0, max(size - o, 0)))
        else:
            src.append(slice(0, max(size + o, 0)))
            dst.append(slice(-o, size))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _extrapolate_ring(
    speed: np.ndarray, interior: np.ndarray, active: np.ndarray, mode: GridMode
) -> np.ndarray:
    """Fill ring-node speeds from interior neighbours along grid directions."""
    directions = _RADIAL_DIRECTIONS if mode is GridMode.RADIAL else _PLANAR_DIRECTIONS
    inner = np.where(interior, speed, np.nan)
    linear_sum = np.zeros_like(inner)
    linear_count = np.zeros(inner.shape)
    near_sum = np.zeros_like(inner)
    near_count = np.zeros(inner.shape)
    for d in directions:
        s1 = _shift(inner, d)
        s2 = _shift(inner, tuple(2 * o for o in d))
        estimate = 2.0 * s1 - s2
        ok = np.isfinite(estimate)
        linear_sum += np.where(ok, estimate, 0.0)
        linear_count += ok
        ok1 = np.isfinite(s1)
        near_sum += np.where(ok1, s1, 0.0)
        near_count += ok1

    with np.errstate(invalid="ignore", divide="ignore"):
        ring_speed = np.where(
            linear_count > 0,
            linear_sum / np.maximum(linear_count, 1),
            np.where(near_count > 0, near_sum / np.maximum(near_count, 1), 0.0),
        )
    ring = active & ~interior
    out = np.where(interior, speed, 0.0)
    out[ring] = ring_speed[ring]
    return out


def graph_speed(
    state: GraphState, curv: CurvatureField, k: int
) -> tuple[np.ndarray, float]:
    """
    Normal-to-vertical speed upsilon * Q_k on every active node.

    Returns:
        (speed, maxD): speed is zero on masked nodes, extrapolated on the
        boundary ring; maxD is the largest D_iQ_k over the interior.

    Raises:
        NonAdmissible: if Q_k is undefined at an interior node
    """
    interior = curv.interior
    lam = curv.lam[interior]
    q = np.asarray(qk(lam, k))
    max_d = float(np.max(grad_qk(lam, k))) if lam.size else 1.0
    speed = np.zeros(state.u.shape)
    speed[interior] = curv.upsilon[interior] * q
    return _extrapolate_ring(speed, interior, state.active, state.mode), max_d


def stable_dt(
    state: GraphState,
    curv: CurvatureField,
    max_d: float,
    ctrl: StepControl,
    dt_cap: float | None = None,
) -> float:
    """Largest dt allowed by the CFL bound, ``dt_max``, ``t_end`` and ``dt_cap``."""
    ups = curv.upsilon[curv.interior]
    ups_max = float(np.max(ups)) if ups.size else 1.0
    dt = ctrl.cfl_safety * state.spacing**2 / (2.0 * state.n * ups_max**2 * max_d)
    dt = min(dt, ctrl.dt_max, max(ctrl.t_end - state.t, 0.0))
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    return dt


def _post_step_ok(candidate: GraphState, k: int) -> bool:
    curv = curvature_field(candidate)
    if convexity_defect(curv) < -CONVEXITY_EPS:
        return False
    lam = curv.lam[curv.interior]
    return bool(np.all(admissible_mask(lam, k))) if lam.size else True


def _dump_state(state: GraphState) -> Path:
    from scripts.persistence import save_snapshot

    dump_dir = Path(DUMP_DIR)
    dump_dir.mkdir(parents=True, exist_ok=True)
    path = dump_dir / f"rejected_{state.mode.value}_k{state.k}_t{state.t:.9f}.snap"
    save_snapshot(state, path)
    return path


def step_graph(
    state: GraphState,
    ctrl: StepControl,
    *,
    speed_k: int | None = None,
    dt_cap: float | None = None,
    curv: CurvatureField | None = None,
) -> GraphState:
    """
    Advance the graph by one forward-Euler step of u_t = upsilon * Q_k.

    Args:
        state: convex graph, admissible on its interior
        ctrl: step policy
        speed_k: speed index to evolve with; defaults to ``state.k``
        dt_cap: extra upper bound on dt (used to land on monitor times)
        curv: precomputed curvature field of ``state``

    Raises:
        NonConvex: if ``state`` itself is not convex
        NonAdmissible: if Q_k is undefined on the interior
        StepRejected: if every halved retry loses convexity
    """
    k = state.k if speed_k is None else speed_k
    curv = curv if curv is not None else curvature_field(state)
    defect = convexity_defect(curv)
    if defect < -CONVEXITY_EPS:
        raise NonConvex(f"graph at t={state.t:.6g} is not convex ({defect:.3e})")

    speed, max_d = graph_speed(state, curv, k)
    dt = stable_dt(state, curv, max_d, ctrl, dt_cap)
    active = state.active

    for attempt in range(ctrl.max_halvings + 1):
        u_new = np.where(active, state.u + dt * speed, np.nan)
        candidate = state.with_heights(u_new, state.t + dt)
        if _post_step_ok(candidate, k):
            return candidate
        log.warning(
            f"Step at t={state.t:.6g} lost convexity; halving dt to {dt / 2:.3e} "
            f"(attempt {attempt + 1}/{ctrl.max_halvings})"
        )
        dt *= 0.5

    path = _dump_state(state)
    log.error(f"Step rejected at t={state.t:.6g}; state dumped to {path}")
    raise StepRejected(
        f"convexity lost after {ctrl.max_halvings} dt halvings at t={state.t:.6g}",
        dump_path=path,
    )


def step_mcf(
    state: GraphState,
    ctrl: StepControl,
    *,
    dt_cap: float | None = None,
) -> GraphState:
    """One step of mean curvature flow (``step_graph`` with Q_1)."""
    return step_graph(state, ctrl, speed_k=1, dt_cap=dt_cap)


def _build_row(
    scan: MonitorScan,
    scan0: MonitorScan,
    t: float,
    dt_used: float,
    n: int,
    M: float,
    running: dict[str, float],
    extras: dict[str, float | bool],
) -> MonitorRow:
    running["upsilon4"] = max(running.get("upsilon4", 0.0), scan.sup_upsilon**4)
    running["qk_sq"] = max(running.get("qk_sq", 0.0), scan.sup_qk_sq)
    speed_rhs = max(
        10.0 * n**2 * running["upsilon4"],
        2.0 * np.sqrt(running["upsilon4"]) * scan0.sup_psi_qk_sq,
    )
    curvature_rhs = np.exp(2.0 * n * t * running["qk_sq"]) * max(
        5.0 * M, scan0.sup_psi2_lambda_max
    )
    return MonitorRow(
        t=t,
        sup_psi_upsilon=scan.sup_psi_upsilon,
        inf_psi_inv_qk=scan.inf_psi_inv_qk,
        sup_psi_qk_sq=scan.sup_psi_qk_sq,
        speed_bound_rhs=float(speed_rhs),
        sup_psi2_lambda_max=scan.sup_psi2_lambda_max,
        curvature_bound_rhs=float(curvature_rhs),
        sup_psi2_grad_a=scan.sup_psi2_grad_a,
        running_sup_qm_upsilon4=running["upsilon4"],
        running_sup_qm_qk_sq=running["qk_sq"],
        dt_used=dt_used,
        extras=extras,
    )


def run_graph_flow(
    config: ExperimentConfig, *, progress: bool = True, persist: bool = True
) -> MonitorSeries:
    """
    Integrate a graph flow experiment and record its monitor series.

    The initial graph is built from ``config``, checked against the
    initial-data hypotheses, then integrated to ``config.step.t_end``. A row
    is appended at t = 0, at every monitor event and at the final time. With
    ``config.track_k`` the row also carries ``infPsiInvQk_k{j}`` for each
    tracked j, and with ``config.inscribed_radius`` an ``enclosed`` flag for
    the inscribed shrinking ball.

    Args:
        config: experiment description
        progress: show a tqdm bar over simulated time
        persist: write series CSV and final snapshot when
            ``config.output_prefix`` is set

    Raises:
        InadmissibleInitialData: if the initial graph fails the hypotheses
        EmptySupport: if M does not exceed min u
        StepRejected: propagated from the stepper
    """
    state = config.build_graph()
    ctrl = config.step
    M = config.M
    flow_k = 1 if config.mcf else state.k
    check_initial_hypotheses(state, flow_k)
    log.info(
        f"Graph flow '{config.label}': mode={state.mode.value}, n={state.n}, "
        f"k={state.k}, flow k={flow_k}, N={state.num_nodes}, M={M:g}, "
        f"t_end={ctrl.t_end:g}"
    )

    ball: BallSolution | None = None
    if config.inscribed_radius is not None:
        ball = inscribed_ball(state, config.inscribed_radius, flow_k)
        vlog.metric("Inscribed ball", f"R0={ball.R0:g}, center={ball.center}")

    track_k = tuple(config.track_k)
    series = MonitorSeries(n=state.n, k=state.k, M=M)
    running: dict[str, float] = {}

    def extras_for(current: GraphState, scan: MonitorScan) -> dict[str, float | bool]:
        extras: dict[str, float | bool] = {
            f"infPsiInvQk_k{j}": value for j, value in scan.inf_psi_inv_qj.items()
        }
        if ball is not None:
            extras["enclosed"] = (
                current.t < ball.extinction_time
                and enclosure_check(current, ball, current.t)
            )
        return extras

    scan0 = global_monitor_scan(state, M, track_k)
    series.append(_build_row(scan0, scan0, 0.0, 0.0, state.n, M, running, extras_for(state, scan0)))

    start = time.perf_counter()
    steps = 0
    last_dt = 0.0
    next_monitor = ctrl.monitor_dt if ctrl.monitor_dt is not None else None
    with vlog.run_block(f"graph flow {config.label}"), tqdm(
        total=ctrl.t_end,
        desc=f"flow {config.label}",
        unit="t",
        file=sys.stdout,
        dynamic_ncols=True,
        disable=not progress,
        bar_format="{l_bar}{bar}| {n:.4g}/{total:.4g} [{elapsed}<{remaining}]",
    ) as pbar:
        while state.t < ctrl.t_end * (1.0 - 1e-12):
            cap = None if next_monitor is None else max(next_monitor - state.t, 0.0)
            if cap is not None and cap <= 1e-15 * max(ctrl.t_end, 1.0):
                cap = None
            previous_t = state.t
            try:
                state = step_graph(state, ctrl, speed_k=flow_k, dt_cap=cap)
            except NonAdmissible as exc:
                raise NonAdmissible(f"t={previous_t:.6g}: {exc}") from exc
            last_dt = state.t - previous_t
            steps += 1
            pbar.update(last_dt)

            if next_monitor is not None:
                due = state.t >= next_monitor * (1.0 - 1e-12)
                if due:
                    next_monitor += ctrl.monitor_dt  # type: ignore[operator]
            else:
                due = steps % ctrl.monitor_every == 0
            final = state.t >= ctrl.t_end * (1.0 - 1e-12)
            if due or final:
                scan = global_monitor_scan(state, M, track_k)
                row = _build_row(
                    scan, scan0, state.t, last_dt, state.n, M, running,
                    extras_for(state, scan),
                )
                series.append(row)
                vlog.monitor_row(
                    state.t,
                    last_dt,
                    supPsiUpsilon=row.sup_psi_upsilon,
                    infPsiInvQk=row.inf_psi_inv_qk,
                    supPsiQkSq=row.sup_psi_qk_sq,
                )
        vlog.metric("Steps", steps)
        vlog.timing("Integration", time.perf_counter() - start)

    log.info(f"Graph flow '{config.label}' finished: {steps} steps, {len(series)} rows")

    if persist and config.output_prefix is not None:
        from scripts.persistence import save_series_csv, save_snapshot

        prefix = Path(config.output_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        save_series_csv(series, prefix.with_name(prefix.name + "_series.csv"))
        save_snapshot(state, prefix.with_name(prefix.name + "_final.snap"))
    series.final_state = state
    return series


def refinement_drift(
    config: ExperimentConfig, *, progress: bool = False
) -> dict[str, float]:
    """
    Relative change of every monitored column under dt and spacing halving.

    Both runs record at the same monitor times (``monitor_dt`` defaults to a
    tenth of the horizon) so rows are compared index by index.

    Returns:
        Mapping column name -> max relative drift, plus ``"max"``.
    """
    monitor_dt = config.step.monitor_dt or config.step.t_end / 10.0
    coarse_cfg = config.with_step(replace(config.step, monitor_dt=monitor_dt))
    fine_cfg = coarse_cfg.refined()
    coarse = run_graph_flow(coarse_cfg, progress=progress, persist=False)
    fine = run_graph_flow(fine_cfg, progress=progress, persist=False)

    rows = min(len(coarse), len(fine))
    drift: dict[str, float] = {}
    for name in MonitorSeries.monitored_columns():
        a = coarse.column(name)[:rows]
        b = fine.column(name)[:rows]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
        drift[name] = float(np.max(np.abs(a - b) / scale))
    drift["max"] = max(drift.values())
    log.info(f"Refinement drift for '{config.label}': {drift['max']:.3e}")
    return drift
