#!/usr/bin/env python3
"""
Approximation by Closed Hypersurfaces
=====================================

Desk-scale realization of the existence construction for graph initial
data. For every level j of a finite sweep:

1. perturb: u_j = u + phi(|x|)/j with phi(r) = integral of arctan
2. hypotheses: the perturbed graph must satisfy the initial-data checks
3. reflect: close {u_j <= j} by reflection across height j
4. envelope: offset the closed body by 1/j
5. mollify: spherical convolution at each scale of ``epsilon_list``
6. presmooth: mean curvature flow of the support function for 1/j

The resulting approximants are then evolved by the Q_k support flow and
compared at common monitor times: bodies must nest in j, stay graphs over
their lower half, survive past the existence-time bound of the domain and
stay symmetric across their reflection level. The pointwise maximum of the
recentred support functions is emitted as the limit candidate.

Usage
-----
    >>> from scripts.pipeline import ConstructionConfig, run_construction
    >>> report = run_construction(cfg)
    >>> report.passed
    True
"""

from __future__ import annotations

import sys
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from tqdm import tqdm

from config import (
    BOUND_TOL,
    CFL_SAFETY,
    DEFAULT_SUPPORT_NODES,
    MONOTONE_TOL,
    NESTING_TOL,
    THREADS,
)
from scripts.errors import (
    ConfigError,
    ConstructionFailed,
    EarlyExtinction,
    NestingViolation,
    QkFlowError,
)
from scripts.flow import StepControl
from scripts.geometry import GraphState, check_initial_hypotheses
from scripts.monitors import Verdict
from scripts.oracle import existence_time_lower_bound
from scripts.supportfn import (
    GridKind,
    Mollifier,
    SupportRun,
    SupportState,
    eta_envelope,
    lower_graph_defect,
    mollify,
    perturb_graph,
    recentered,
    reflect_and_close,
    run_support_flow,
    support_points,
)
from scripts.utils import logging as log

__all__ = [
    "ConstructionConfig",
    "BranchResult",
    "ConstructionReport",
    "build_approximant",
    "run_construction",
    "symmetry_defect",
]

vlog = log.get_verbose_logger()

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class ConstructionConfig:
    """
    Parameters of one construction sweep.

    Attributes:
        initial_graph: radial graph (n = 1 or 2) of the initial data
        j_list: strictly increasing reflection levels
        epsilon_list: mollification scales; the last one feeds the flow
        k: speed index of the Q_k flow after presmoothing
        flow_horizon: time the approximants are evolved for
        pre_smooth_time: MCF presmoothing time; None means 1/j per branch
        inscribed_radius: radius of the largest disk in the domain (inf for
            whole-space domains)
        support_nodes: angular resolution of the closed bodies
        num_monitors: monitored times are flow_horizon * i / num_monitors
        comparison_level: height below which branches are compared; None
            means min(j_list)
        check_nesting: raise on nesting failures
        cfl_safety: fraction of the support-flow stability limit
        workers: concurrent branches; None reads QKFLOW_THREADS
        label: run name used in logs and reports
    """

    initial_graph: GraphState
    j_list: tuple[float, ...] = (2.0, 4.0, 8.0)
    epsilon_list: tuple[float, ...] = (0.03,)
    k: int = 1
    flow_horizon: float = 0.5
    pre_smooth_time: float | None = None
    inscribed_radius: float = float("inf")
    support_nodes: int = DEFAULT_SUPPORT_NODES // 2
    num_monitors: int = 5
    comparison_level: float | None = None
    check_nesting: bool = True
    cfl_safety: float = CFL_SAFETY
    workers: int | None = None
    label: str = "construction"

    def __post_init__(self) -> None:
        object.__setattr__(self, "j_list", tuple(float(j) for j in self.j_list))
        object.__setattr__(self, "epsilon_list", tuple(float(e) for e in self.epsilon_list))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigError: on an inconsistent configuration
        """
        if not self.j_list:
            raise ConfigError("j_list must not be empty")
        if any(j <= 0.0 for j in self.j_list):
            raise ConfigError("every level in j_list must be positive")
        if any(b <= a for a, b in zip(self.j_list, self.j_list[1:])):
            raise ConfigError(f"j_list must be strictly increasing, got {self.j_list}")
        if not self.epsilon_list or any(not 0.0 < e < 1.0 for e in self.epsilon_list):
            raise ConfigError("epsilon_list entries must lie in (0, 1)")
        if self.initial_graph.n not in (1, 2):
            raise ConfigError("construction needs a radial graph with n = 1 or 2")
        if not 1 <= self.k <= self.initial_graph.n:
            raise ConfigError(f"need 1 <= k <= n, got k={self.k}")
        if not self.flow_horizon > 0.0:
            raise ConfigError("flow_horizon must be positive")
        if self.pre_smooth_time is not None and not self.pre_smooth_time > 0.0:
            raise ConfigError("pre_smooth_time must be positive")
        if not self.inscribed_radius > 0.0:
            raise ConfigError("inscribed_radius must be positive")
        if self.support_nodes < 8:
            raise ConfigError("support_nodes must be at least 8")
        if self.num_monitors < 1:
            raise ConfigError("num_monitors must be at least 1")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigError("cfl_safety must lie in (0, 1]")

    @property
    def n(self) -> int:
        return self.initial_graph.n

    @property
    def level(self) -> float:
        return min(self.j_list) if self.comparison_level is None else self.comparison_level

    def presmooth_time(self, j: float) -> float:
        return 1.0 / j if self.pre_smooth_time is None else self.pre_smooth_time

    def monitor_times(self) -> tuple[float, ...]:
        return tuple(
            float(self.flow_horizon * i / self.num_monitors)
            for i in range(self.num_monitors + 1)
        )

    def echo(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "n": self.n,
            "k": self.k,
            "j_list": list(self.j_list),
            "epsilon_list": list(self.epsilon_list),
            "flow_horizon": self.flow_horizon,
            "pre_smooth_time": self.pre_smooth_time,
            "inscribed_radius": self.inscribed_radius,
            "support_nodes": self.support_nodes,
            "num_monitors": self.num_monitors,
            "comparison_level": self.level,
            "check_nesting": self.check_nesting,
        }


def _stage(name: str, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except (QkFlowError, ValueError) as exc:
        if isinstance(exc, ConstructionFailed):
            raise
        raise ConstructionFailed(name, str(exc)) from exc


def _closed_body(cfg: ConstructionConfig, j: float) -> SupportState:
    perturbed = _stage("perturb", perturb_graph, cfg.initial_graph, j)
    _stage("hypotheses", check_initial_hypotheses, perturbed, cfg.k)
    closed = _stage("reflect", reflect_and_close, perturbed, j, 0.0, cfg.support_nodes)
    return _stage("envelope", eta_envelope, closed, 1.0 / j)


def _presmooth(cfg: ConstructionConfig, body: SupportState, j: float) -> SupportState:
    duration = cfg.presmooth_time(j)
    ctrl = StepControl(cfl_safety=cfg.cfl_safety, t_end=duration)
    run = _stage(
        "presmooth", run_support_flow, body, 1, ctrl, label=f"presmooth j={j:g}"
    )
    if run.extinct:
        raise ConstructionFailed(
            "presmooth", f"body j={j:g} collapsed at t={run.extinction_time:.6g}"
        )
    return replace(run.final, t=0.0)


def build_approximant(cfg: ConstructionConfig, j: float, eps: float) -> SupportState:
    """
    Strictly convex closed approximant for level j at mollification scale eps.

    Raises:
        ConstructionFailed: tagged with the stage that failed
    """
    body = _closed_body(cfg, j)
    smoothed = _stage("mollify", mollify, body, Mollifier(eps))
    return _presmooth(cfg, smoothed, j)


def symmetry_defect(state: SupportState) -> float:
    """Relative asymmetry of S across the body's own horizontal level."""
    S = state.S
    if state.grid_kind is GridKind.CIRCLE:
        mirrored = np.roll(S[::-1], 1)
    else:
        mirrored = S[::-1]
    scale = max(float(np.max(np.abs(S))), 1e-300)
    return float(np.max(np.abs(S - mirrored)) / scale)


@dataclass
class BranchResult:
    """One j-branch of the sweep."""

    j: float
    approximant: SupportState
    run: SupportRun
    epsilon_differences: list[float] = field(default_factory=list)
    max_graph_defect: float = 0.0
    max_symmetry_defect: float = 0.0

    @property
    def extinction_time(self) -> float | None:
        return self.run.extinction_time

    @property
    def min_radius(self) -> float:
        return float(np.min(self.run.min_radius))


@dataclass
class ConstructionReport:
    """
    Outcome of :func:`run_construction`.

    ``limit_profiles`` maps each monitored time to the pointwise maximum of
    the support functions about the global origin; ``cauchy`` maps it to
    sup |S_{j+1} - S_j| over the compared normals, one entry per
    consecutive pair.
    """

    config: ConstructionConfig
    branches: dict[float, BranchResult]
    existence_bound: float
    nesting_excess: dict[float, float] = field(default_factory=dict)
    cauchy: dict[float, list[float]] = field(default_factory=dict)
    limit_profiles: dict[float, np.ndarray] = field(default_factory=dict)

    def verdicts(self) -> list[Verdict]:
        verdicts: list[Verdict] = []
        worst_nest = max(self.nesting_excess.values(), default=0.0)
        verdicts.append(
            Verdict(
                "nesting",
                worst_nest <= NESTING_TOL or not self.config.check_nesting,
                worst_nest,
                "S_j <= S_{j+1} on the compared normals"
                + ("" if self.config.check_nesting else " (not enforced)"),
            )
        )
        decreasing = all(
            all(b < a for a, b in zip(diffs, diffs[1:])) for diffs in self.cauchy.values()
        )
        final_t = max(self.cauchy, default=None)
        last = self.cauchy.get(final_t, []) if final_t is not None else []
        verdicts.append(
            Verdict(
                "cauchy",
                decreasing,
                float(last[-1]) if last else 0.0,
                f"successive sup differences at t={final_t}: {last}",
            )
        )
        graph = max(b.max_graph_defect for b in self.branches.values())
        verdicts.append(Verdict("lowerGraph", graph <= MONOTONE_TOL, graph, "lower halves are graphs"))
        sym = max(b.max_symmetry_defect for b in self.branches.values())
        verdicts.append(Verdict("symmetry", sym <= SYMMETRY_TOL, sym, "symmetric across level j"))
        verdicts.append(self._survival())
        return verdicts

    def _survival(self) -> Verdict:
        """
        Every branch lives to the existence bound with positive radii.

        The flow horizon has to reach (1 - BOUND_TOL) times a finite bound;
        for whole-space domains the horizon itself is the target. The margin
        is the shortest lifetime minus that target.
        """
        target = self.required_lifetime
        horizon = self.config.flow_horizon
        shortest = min(
            horizon if b.extinction_time is None else float(b.extinction_time)
            for b in self.branches.values()
        )
        radius = min(b.min_radius for b in self.branches.values())
        margin = shortest - target
        extrapolated = [
            f"{j:g}" for j, b in self.branches.items() if b.run.extinction_extrapolated
        ]
        detail = (
            f"existence bound {self.existence_bound:.6g}, horizon {horizon:g}, "
            f"shortest lifetime {shortest:.6g}, "
            f"min radius {radius:.3e}"
        )
        if extrapolated:
            detail += f"; ball tail used for j={','.join(extrapolated)}"
        return Verdict("survival", margin >= 0.0 and radius > 0.0, margin, detail)

    @property
    def required_lifetime(self) -> float:
        if np.isfinite(self.existence_bound):
            return self.existence_bound * (1.0 - BOUND_TOL)
        return self.config.flow_horizon

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts())

    def summary(self) -> dict[str, Any]:
        return {
            "config": self.config.echo(),
            "existence_bound": self.existence_bound,
            "extinction_times": {
                f"{j:g}": b.extinction_time for j, b in self.branches.items()
            },
            "extinction_extrapolated": {
                f"{j:g}": b.run.extinction_extrapolated for j, b in self.branches.items()
            },
            "epsilon_differences": {
                f"{j:g}": b.epsilon_differences for j, b in self.branches.items()
            },
            "nesting_excess": {f"{t:.6g}": v for t, v in self.nesting_excess.items()},
            "cauchy": {f"{t:.6g}": v for t, v in self.cauchy.items()},
            "limit_profiles": {
                f"{t:.6g}": p.tolist() for t, p in self.limit_profiles.items()
            },
        }


def _run_branch(cfg: ConstructionConfig, j: float, bound: float) -> BranchResult:
    body = _closed_body(cfg, j)
    approximants = []
    for eps in cfg.epsilon_list:
        smoothed = _stage("mollify", mollify, body, Mollifier(eps))
        approximants.append(_presmooth(cfg, smoothed, j))
    diffs = [
        float(np.max(np.abs(b.S - a.S))) for a, b in zip(approximants, approximants[1:])
    ]
    approximant = approximants[-1]

    ctrl = StepControl(cfl_safety=cfg.cfl_safety, t_end=cfg.flow_horizon)
    run = _stage(
        f"flow j={j:g}",
        run_support_flow,
        approximant,
        cfg.k,
        ctrl,
        monitor_times=cfg.monitor_times(),
        label=f"Q_{cfg.k} j={j:g}",
    )
    if run.extinct and run.extinction_time < bound * (1.0 - BOUND_TOL):  # type: ignore[operator]
        raise EarlyExtinction(j, float(run.extinction_time), bound)  # type: ignore[arg-type]

    result = BranchResult(j=j, approximant=approximant, run=run, epsilon_differences=diffs)
    snaps = [approximant, *run.snapshots.values()]
    result.max_graph_defect = max(lower_graph_defect(s) for s in snaps)
    result.max_symmetry_defect = max(symmetry_defect(s) for s in snaps)
    log.debug(
        f"Branch j={j:g}: extinction={run.extinction_time}, "
        f"graph defect={result.max_graph_defect:.3e}"
    )
    return result


def _compare_branches(
    cfg: ConstructionConfig, report: ConstructionReport, t: float, states: Sequence[tuple[float, SupportState]]
) -> None:
    dim = states[0][1].n + 1
    common = [(j, recentered(s, np.zeros(dim))) for j, s in states]
    heights = np.stack([support_points(s)[:, 1] for _, s in common])
    window = np.all(heights <= cfg.level + 1e-12, axis=0)
    if not np.any(window):
        log.warning(f"No common normals below level {cfg.level:g} at t={t:.6g}")
        return
    values = np.stack([s.S for _, s in common])
    scale = max(float(np.max(np.abs(values))), 1e-300)

    worst = 0.0
    diffs: list[float] = []
    for (j_lo, lo), (_, hi) in zip(common, common[1:]):
        excess = float(np.max(lo.S[window] - hi.S[window])) / scale
        worst = max(worst, excess)
        if cfg.check_nesting and excess > NESTING_TOL:
            raise NestingViolation(j_lo, t, excess)
        diffs.append(float(np.max(np.abs(hi.S[window] - lo.S[window]))))
    report.nesting_excess[t] = worst
    report.cauchy[t] = diffs
    report.limit_profiles[t] = np.max(values, axis=0)


def run_construction(cfg: ConstructionConfig, *, progress: bool = True) -> ConstructionReport:
    """
    Build and evolve every approximant of the sweep and check them.

    Raises:
        ConstructionFailed: if an approximant cannot be built
        EarlyExtinction: if a branch collapses before the existence bound
        NestingViolation: if a lower-j body pokes out of a higher-j one
    """
    bound = existence_time_lower_bound(cfg.inscribed_radius, cfg.n, cfg.k)
    workers = cfg.workers or THREADS
    log.info(
        f"Construction '{cfg.label}': n={cfg.n}, k={cfg.k}, j={list(cfg.j_list)}, "
        f"eps={list(cfg.epsilon_list)}, horizon={cfg.flow_horizon:g}, bound={bound:.6g}"
    )
    if cfg.flow_horizon < bound * (1.0 - BOUND_TOL):
        log.warning(
            f"Flow horizon {cfg.flow_horizon:g} ends before the existence bound "
            f"{bound:.6g}; the survival verdict will fail"
        )

    start = time.perf_counter()
    branches: dict[float, BranchResult] = {}
    with vlog.run_block(f"construction {cfg.label}", total_steps=len(cfg.j_list)):
        with ThreadPoolExecutor(max_workers=workers) as pool, tqdm(
            total=len(cfg.j_list),
            desc="j-branches",
            unit="branch",
            file=sys.stdout,
            dynamic_ncols=True,
            disable=not progress,
        ) as pbar:
            futures = {j: pool.submit(_run_branch, cfg, j, bound) for j in cfg.j_list}
            for j, future in futures.items():
                branches[j] = future.result()
                pbar.update(1)
                with vlog.step(f"j={j:g}"):
                    vlog.metric("Extinction", branches[j].extinction_time)
                    vlog.metric("Graph defect", branches[j].max_graph_defect)

        report = ConstructionReport(config=cfg, branches=branches, existence_bound=bound)
        for t in cfg.monitor_times():
            states = []
            for j in cfg.j_list:
                snap = branches[j].run.snapshots.get(t)
                if snap is None and t == 0.0:
                    snap = branches[j].approximant
                if snap is not None:
                    states.append((j, snap))
            if len(states) == len(cfg.j_list):
                _compare_branches(cfg, report, t, states)
        vlog.timing("Construction", time.perf_counter() - start)

    log.info(f"Construction '{cfg.label}' finished with {len(report.nesting_excess)} compared times")
    return report
