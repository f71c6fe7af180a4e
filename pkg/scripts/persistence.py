"""
Run Output Persistence
======================

Text formats written by the experiment runner. All files are UTF-8.

- Monitor series: CSV with the series columns in fixed order, extra tracker
  columns appended, floats with 17 significant digits.
- Snapshot: ``# key = value`` header lines, then one value per line in
  ``%.17g``. Loading and saving again reproduces the file byte for byte.
- Report: JSON with the configuration echo, verdicts and exit status.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from scripts.geometry import GraphState, GridMode
from scripts.monitors import MonitorSeries, Verdict
from scripts.supportfn import GridKind, SupportState
from scripts.utils import logging as log

__all__ = [
    "save_series_csv",
    "load_series_csv",
    "save_snapshot",
    "load_snapshot",
    "save_report",
    "load_report",
]

_FLOAT_FORMAT = "%.17g"


def _fmt(value: float) -> str:
    return _FLOAT_FORMAT % value


def save_series_csv(series: MonitorSeries, path: str | Path) -> Path:
    """Write ``series`` as CSV; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(
        path,
        index=False,
        float_format=_FLOAT_FORMAT,
        lineterminator="\n",
        encoding="utf-8",
    )
    log.debug(f"Saved monitor series ({len(series)} rows) to {path}")
    return path


def load_series_csv(path: str | Path, n: int, k: int, M: float) -> MonitorSeries:
    """Read a series CSV written by :func:`save_series_csv`."""
    df = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    return MonitorSeries.from_frame(df, n=n, k=k, M=M)


def _header(pairs: Iterable[tuple[str, Any]]) -> str:
    return "".join(f"# {key} = {value}\n" for key, value in pairs)


def save_snapshot(state: GraphState | SupportState, path: str | Path) -> Path:
    """
    Write a graph or support state as a text snapshot.

    Raises:
        TypeError: for any other object
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(state, GraphState):
        shape = "x".join(str(d) for d in state.u.shape)
        header = _header(
            [
                ("kind", "graph"),
                ("mode", state.mode.value),
                ("n", state.n),
                ("k", state.k),
                ("t", _fmt(state.t)),
                ("shape", shape),
                ("spacing", _fmt(state.spacing)),
                ("origin", _fmt(state.origin)),
            ]
        )
        values = state.u.ravel()
    elif isinstance(state, SupportState):
        header = _header(
            [
                ("kind", "support"),
                ("gridKind", state.grid_kind.value),
                ("n", state.n),
                ("t", _fmt(state.t)),
                ("shape", state.num_nodes),
                ("spacing", _fmt(state.spacing)),
                ("origin", ",".join(_fmt(x) for x in state.origin)),
            ]
        )
        values = state.S
    else:
        raise TypeError(f"cannot snapshot object of type {type(state).__name__}")

    body = "".join(_fmt(v) + "\n" for v in values)
    path.write_text(header + body, encoding="utf-8")
    return path


def load_snapshot(path: str | Path) -> GraphState | SupportState:
    """
    Read a snapshot written by :func:`save_snapshot`.

    Raises:
        ValueError: on a malformed header or a value count not matching shape
    """
    meta: dict[str, str] = {}
    values: list[float] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, sep, value = line[2:].partition(" = ")
            if not sep:
                raise ValueError(f"malformed snapshot header line: {line!r}")
            meta[key.strip()] = value.strip()
        elif line.strip():
            values.append(float(line))

    try:
        kind = meta["kind"]
        shape = tuple(int(d) for d in meta["shape"].split("x"))
        data = np.asarray(values, dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"snapshot has {data.size} values, header says {meta['shape']}")
        if kind == "graph":
            return GraphState(
                mode=GridMode(meta["mode"]),
                u=data.reshape(shape),
                spacing=float(meta["spacing"]),
                n=int(meta["n"]),
                k=int(meta["k"]),
                t=float(meta["t"]),
                origin=float(meta["origin"]),
            )
        if kind == "support":
            origin = np.array([float(x) for x in meta["origin"].split(",")])
            return SupportState(
                grid_kind=GridKind(meta["gridKind"]),
                S=data,
                origin=origin,
                t=float(meta["t"]),
            )
    except KeyError as exc:
        raise ValueError(f"snapshot header lacks {exc}") from exc
    raise ValueError(f"unknown snapshot kind '{kind}'")


def save_report(
    path: str | Path,
    config_echo: Mapping[str, Any],
    verdicts: Iterable[Verdict],
    exit_status: int,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """Write the JSON run report."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document: dict[str, Any] = {
        "config": dict(config_echo),
        "verdicts": [v.to_dict() for v in verdicts],
        "exit_status": exit_status,
    }
    if extra:
        document.update(extra)
    path.write_text(
        json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
    )
    log.info(f"Report written to {path}")
    return path


def load_report(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")
