"""
Monitor Series and Verdicts
===========================

A :class:`MonitorSeries` is the time record of one graph flow run: the left
side of every a priori estimate together with the right side it is held
against. Right sides use running maxima over the recorded rows, so they can
only grow with time.

Verdicts are pure functions of a series. Each reports whether the estimate
held and a signed worst margin (positive means the bound was exceeded by
that relative amount).

Series columns, in CSV order::

    t, supPsiUpsilon, infPsiInvQk, supPsiQkSq, speedBoundRHS,
    supPsi2LambdaMax, curvatureBoundRHS, supPsi2GradA,
    runningSupQM_upsilon4, runningSupQM_QkSq, dtUsed
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from config import BOUND_TOL, DERIVATIVE_FACTOR, MONOTONE_TOL
from scripts.utils import logging as log

__all__ = [
    "SERIES_COLUMNS",
    "MonitorRow",
    "MonitorSeries",
    "Verdict",
    "verdict_gradient",
    "verdict_speed_lower",
    "verdict_speed_upper",
    "verdict_curvature",
    "verdict_derivative",
    "verdict_speed_lower_family",
    "verdict_enclosure",
    "evaluate_all",
]

SERIES_COLUMNS: tuple[str, ...] = (
    "t",
    "supPsiUpsilon",
    "infPsiInvQk",
    "supPsiQkSq",
    "speedBoundRHS",
    "supPsi2LambdaMax",
    "curvatureBoundRHS",
    "supPsi2GradA",
    "runningSupQM_upsilon4",
    "runningSupQM_QkSq",
    "dtUsed",
)

_FIELD_FOR_COLUMN: dict[str, str] = {
    "t": "t",
    "supPsiUpsilon": "sup_psi_upsilon",
    "infPsiInvQk": "inf_psi_inv_qk",
    "supPsiQkSq": "sup_psi_qk_sq",
    "speedBoundRHS": "speed_bound_rhs",
    "supPsi2LambdaMax": "sup_psi2_lambda_max",
    "curvatureBoundRHS": "curvature_bound_rhs",
    "supPsi2GradA": "sup_psi2_grad_a",
    "runningSupQM_upsilon4": "running_sup_qm_upsilon4",
    "runningSupQM_QkSq": "running_sup_qm_qk_sq",
    "dtUsed": "dt_used",
}


@dataclass(frozen=True)
class MonitorRow:
    """One monitor event."""

    t: float
    sup_psi_upsilon: float
    inf_psi_inv_qk: float
    sup_psi_qk_sq: float
    speed_bound_rhs: float
    sup_psi2_lambda_max: float
    curvature_bound_rhs: float
    sup_psi2_grad_a: float
    running_sup_qm_upsilon4: float
    running_sup_qm_qk_sq: float
    dt_used: float
    extras: dict[str, Any] = field(default_factory=dict)

    def as_record(self) -> dict[str, Any]:
        record = {col: getattr(self, attr) for col, attr in _FIELD_FOR_COLUMN.items()}
        record.update(self.extras)
        return record


@dataclass
class MonitorSeries:
    """
    Ordered monitor rows of one run, with the run's n, k and M.

    ``final_state`` is filled in by the flow driver and is not persisted.
    """

    n: int
    k: int
    M: float
    rows: list[MonitorRow] = field(default_factory=list)
    final_state: Any = None

    def append(self, row: MonitorRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if not row.t > last.t:
                raise ValueError(f"monitor times must increase: {row.t} after {last.t}")
            if (
                row.running_sup_qm_upsilon4 < last.running_sup_qm_upsilon4
                or row.running_sup_qm_qk_sq < last.running_sup_qm_qk_sq
            ):
                raise ValueError(f"running suprema decreased at t={row.t}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @classmethod
    def monitored_columns(cls) -> tuple[str, ...]:
        """Columns that carry estimate values (everything but t and dtUsed)."""
        return tuple(c for c in SERIES_COLUMNS if c not in ("t", "dtUsed"))

    def extra_columns(self) -> list[str]:
        names: list[str] = []
        for row in self.rows:
            for key in row.extras:
                if key not in names:
                    names.append(key)
        return names

    def column(self, name: str) -> np.ndarray:
        if name in _FIELD_FOR_COLUMN:
            attr = _FIELD_FOR_COLUMN[name]
            return np.array([getattr(r, attr) for r in self.rows], dtype=np.float64)
        if name in self.extra_columns():
            return np.array(
                [float(r.extras.get(name, np.nan)) for r in self.rows], dtype=np.float64
            )
        raise KeyError(f"unknown series column '{name}'")

    def to_frame(self) -> pd.DataFrame:
        columns = list(SERIES_COLUMNS) + self.extra_columns()
        return pd.DataFrame([r.as_record() for r in self.rows], columns=columns)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, n: int, k: int, M: float) -> MonitorSeries:
        missing = [c for c in SERIES_COLUMNS if c not in df.columns]
        if missing:
            raise ValueError(f"series table lacks columns: {', '.join(missing)}")
        extra = [c for c in df.columns if c not in SERIES_COLUMNS]
        series = cls(n=n, k=k, M=M)
        for record in df.to_dict(orient="records"):
            extras: dict[str, Any] = {}
            for name in extra:
                value = record[name]
                if name == "enclosed":
                    value = str(value).strip().lower() in ("true", "1", "1.0")
                extras[name] = value
            series.append(
                MonitorRow(
                    **{attr: float(record[col]) for col, attr in _FIELD_FOR_COLUMN.items()},
                    extras=extras,
                )
            )
        return series


@dataclass(frozen=True)
class Verdict:
    """Outcome of one estimate check."""

    name: str
    passed: bool
    margin: float
    detail: str = ""

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "detail": self.detail,
        }


def _require_rows(series: MonitorSeries, name: str) -> None:
    if len(series) < 2:
        raise ValueError(f"{name} needs at least two monitor rows, got {len(series)}")


def _ratio_verdict(name: str, lhs: np.ndarray, rhs: np.ndarray, tol: float, times) -> Verdict:
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(rhs > 0.0, lhs / rhs - 1.0, np.where(lhs > 0.0, np.inf, 0.0))
    worst = int(np.argmax(excess))
    margin = float(excess[worst])
    return Verdict(
        name=name,
        passed=bool(margin <= tol),
        margin=margin,
        detail=f"worst at t={times[worst]:.6g}: {lhs[worst]:.6g} vs bound {rhs[worst]:.6g}",
    )


def verdict_gradient(series: MonitorSeries, tol: float = MONOTONE_TOL) -> Verdict:
    """sup psi*upsilon never exceeds its initial value by more than tol."""
    _require_rows(series, "verdict_gradient")
    values = series.column("supPsiUpsilon")
    initial = values[0]
    margin = float(np.max(values) / initial - 1.0)
    worst = int(np.argmax(values))
    return Verdict(
        name="gradient",
        passed=bool(margin <= tol),
        margin=margin,
        detail=f"max {values[worst]:.6g} at t={series.rows[worst].t:.6g}, initial {initial:.6g}",
    )


def verdict_speed_lower(series: MonitorSeries, tol: float = MONOTONE_TOL) -> Verdict:
    """inf psi^-1 Q_k never drops below its initial value by more than tol."""
    _require_rows(series, "verdict_speed_lower")
    values = series.column("infPsiInvQk")
    return _lower_verdict("speedLower", values, series, tol)


def _lower_verdict(name: str, values: np.ndarray, series: MonitorSeries, tol: float) -> Verdict:
    initial = values[0]
    margin = float(1.0 - np.min(values) / initial)
    worst = int(np.argmin(values))
    return Verdict(
        name=name,
        passed=bool(margin <= tol),
        margin=margin,
        detail=f"min {values[worst]:.6g} at t={series.rows[worst].t:.6g}, initial {initial:.6g}",
    )


def verdict_speed_upper(series: MonitorSeries, tol: float = BOUND_TOL) -> Verdict:
    """Every row satisfies supPsiQkSq <= (1 + tol) speedBoundRHS."""
    _require_rows(series, "verdict_speed_upper")
    return _ratio_verdict(
        "speedUpper",
        series.column("supPsiQkSq"),
        series.column("speedBoundRHS"),
        tol,
        series.column("t"),
    )


def verdict_curvature(
    series: MonitorSeries, M: float | None = None, tol: float = BOUND_TOL
) -> Verdict:
    """
    Every row satisfies

        supPsi2LambdaMax <= (1 + tol) exp(2 n t runningSupQM_QkSq)
                            * max(5 M, supPsi2LambdaMax(0)).

    The bound is rebuilt from the series columns and ``M`` (defaults to the
    series' own M), so a saved series can be re-judged at another level.
    """
    _require_rows(series, "verdict_curvature")
    level = series.M if M is None else M
    t = series.column("t")
    lhs = series.column("supPsi2LambdaMax")
    rhs = np.exp(2.0 * series.n * t * series.column("runningSupQM_QkSq")) * max(
        5.0 * level, lhs[0]
    )
    return _ratio_verdict("curvature", lhs, rhs, tol, t)


def verdict_derivative(series: MonitorSeries, factor: float = DERIVATIVE_FACTOR) -> Verdict:
    """
    Boundedness witness for psi^2 |grad A|^2: PASS iff it stays within
    ``factor`` times its initial value.
    """
    _require_rows(series, "verdict_derivative")
    values = series.column("supPsi2GradA")
    reference = max(values[0], 1e-8)
    peak = float(np.max(values))
    return Verdict(
        name="derivative",
        passed=bool(peak <= factor * reference),
        margin=float(peak / reference),
        detail=f"max {peak:.6g}, initial {values[0]:.6g}, allowed factor {factor:g}",
    )


def verdict_speed_lower_family(
    series: MonitorSeries, tol: float = MONOTONE_TOL
) -> list[Verdict]:
    """One speed-lower verdict per tracked ``infPsiInvQk_k{j}`` column."""
    _require_rows(series, "verdict_speed_lower_family")
    verdicts = []
    for name in series.extra_columns():
        if name.startswith("infPsiInvQk_k"):
            j = name.removeprefix("infPsiInvQk_k")
            verdicts.append(_lower_verdict(f"speedLower_k{j}", series.column(name), series, tol))
    return verdicts


def verdict_enclosure(series: MonitorSeries) -> Verdict | None:
    """PASS iff the inscribed ball stayed enclosed at every recorded row; None if untracked."""
    if "enclosed" not in series.extra_columns():
        return None
    flags = [bool(r.extras.get("enclosed", True)) for r in series.rows]
    failures = [r.t for r, ok in zip(series.rows, flags) if not ok]
    return Verdict(
        name="enclosure",
        passed=not failures,
        margin=float(len(failures)),
        detail="enclosed at every monitor time"
        if not failures
        else f"escaped at t={failures[0]:.6g} ({len(failures)} rows)",
    )


def evaluate_all(
    series: MonitorSeries,
    *,
    monotone_tol: float = MONOTONE_TOL,
    bound_tol: float = BOUND_TOL,
    include_derivative: bool = True,
) -> list[Verdict]:
    """Every verdict applicable to ``series``, logged at SUCCESS or ERROR."""
    verdicts: list[Verdict] = [
        verdict_gradient(series, monotone_tol),
        verdict_speed_lower(series, monotone_tol),
        verdict_speed_upper(series, bound_tol),
        verdict_curvature(series, series.M, bound_tol),
    ]
    if include_derivative:
        verdicts.append(verdict_derivative(series))
    verdicts.extend(verdict_speed_lower_family(series, monotone_tol))
    enclosure = verdict_enclosure(series)
    if enclosure is not None:
        verdicts.append(enclosure)
    _log_verdicts(verdicts)
    return verdicts


def _log_verdicts(verdicts: Iterable[Verdict]) -> None:
    for v in verdicts:
        log.verdict(v.name, v.passed, v.margin, v.detail)
