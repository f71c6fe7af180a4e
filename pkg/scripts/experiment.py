"""
Experiment Configuration
========================

Frozen descriptions of the three kinds of runs (graph flows, constructions,
verification sweeps), the library of initial data they draw from, the
built-in presets, and the parser for experiment files.

Experiment files are flat ``key = value`` text with bracketed sections::

    [flow]
    preset = cup-k2
    num_nodes = 121

    [step]
    t_end = 0.05

    [output]
    prefix = results/cup

Recognized sections: ``[flow]``, ``[step]``, ``[construction]``,
``[verify]`` and ``[output]``. A ``[flow]`` or ``[construction]`` section
may start from a preset and override individual keys. Flow parameters of
the initial data go in as ``param.<name> = value``.
"""

from __future__ import annotations

import configparser
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from config import CLIP_FACTOR, DEFAULT_SEED, DEFAULT_SUPPORT_NODES, RESULTS_DIR
from scripts.errors import ConfigError
from scripts.flow import StepControl
from scripts.geometry import GraphState, GridMode
from scripts.pipeline import ConstructionConfig
from scripts.utils import logging as log

__all__ = [
    "InitialData",
    "INITIAL_DATA",
    "inscribed_radius",
    "ExperimentConfig",
    "VerifyConfig",
    "ExperimentFile",
    "PRESETS",
    "CONSTRUCTION_PRESETS",
    "get_preset",
    "get_construction_preset",
    "load_experiment_file",
]


@dataclass(frozen=True)
class InitialData:
    """
    A named family of convex initial graphs.

    ``profile(r, params)`` gives u as a function of |x|; ``planar`` (when
    set) gives u(x, y) for anisotropic data on the full2d grid.
    """

    name: str
    profile: Callable[[np.ndarray, Mapping[str, float]], np.ndarray]
    domain: str
    defaults: Mapping[str, float] = field(default_factory=dict)
    planar: Callable[[np.ndarray, np.ndarray, Mapping[str, float]], np.ndarray] | None = None

    def radial(self, r: np.ndarray, params: Mapping[str, float]) -> np.ndarray:
        return self.profile(r, {**self.defaults, **params})

    def surface(self, x: np.ndarray, y: np.ndarray, params: Mapping[str, float]) -> np.ndarray:
        merged = {**self.defaults, **params}
        if self.planar is not None:
            return self.planar(x, y, merged)
        return self.profile(np.hypot(x, y), merged)

    def domain_radius(self, params: Mapping[str, float]) -> float:
        return inscribed_radius(self.domain, {**self.defaults, **params}.get("radius", 1.0))


def _paraboloid(r, p):
    return 0.5 * p["a"] * r**2


def _cup(r, p):
    R = p["radius"]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r < R, -np.log1p(-(r / R) ** 2), np.nan)


def _hemisphere(r, p):
    R = p["radius"]
    with np.errstate(invalid="ignore"):
        return np.where(r <= R, R - np.sqrt(R**2 - r**2), np.nan)


def _flat(r, p):
    return np.where(r <= p["radius"] + 1e-12, 0.0, np.nan)


def _elliptic(x, y, p):
    return 0.5 * (p["a"] * x**2 + p["b"] * y**2)


INITIAL_DATA: dict[str, InitialData] = {
    "paraboloid": InitialData("paraboloid", _paraboloid, "plane", {"a": 1.0}),
    "cup": InitialData("cup", _cup, "disk", {"radius": 1.0}),
    "hemisphere": InitialData("hemisphere", _hemisphere, "disk", {"radius": 1.0}),
    "flat": InitialData("flat", _flat, "disk", {"radius": 1.0}),
    "elliptic-paraboloid": InitialData(
        "elliptic-paraboloid", _paraboloid, "plane", {"a": 1.0, "b": 2.0}, _elliptic
    ),
}


def inscribed_radius(domain: str, radius: float = 1.0) -> float:
    """
    Radius of the largest ball inside a shipped domain.

    ``disk`` of the given radius; ``plane`` and ``halfplane`` are unbounded.

    Raises:
        ConfigError: for an unknown domain
    """
    if domain == "disk":
        return float(radius)
    if domain in ("plane", "halfplane"):
        return float("inf")
    raise ConfigError(f"unknown domain '{domain}' (expected disk, plane or halfplane)")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One graph flow experiment.

    Attributes:
        label: run name (logs, report, output files)
        initial_data: key into :data:`INITIAL_DATA`
        params: overrides of the initial data defaults
        n: graph dimension (radial mode); full2d forces 2
        k: speed index
        mode: grid layout
        num_nodes: nodes per axis
        extent: r_max (radial) or half width L (full2d)
        M: cutoff level of the estimates
        clip_ceiling: mask nodes above this height; None means CLIP_FACTOR * M
        step: time-step policy
        seed: recorded for reproducibility of derived sweeps
        mcf: evolve by Q_1 while monitoring Q_k
        track_k: extra speed indices whose inf psi^-1 Q_j is recorded
        inscribed_radius: radius of the comparison ball; None disables it
        output_prefix: stem for CSV and snapshot outputs
    """

    label: str = "run"
    initial_data: str = "paraboloid"
    params: Mapping[str, float] = field(default_factory=dict)
    n: int = 2
    k: int = 1
    mode: GridMode = GridMode.RADIAL
    num_nodes: int = 101
    extent: float = 2.0
    M: float = 1.0
    clip_ceiling: float | None = None
    step: StepControl = field(default_factory=StepControl)
    seed: int = DEFAULT_SEED
    mcf: bool = False
    track_k: tuple[int, ...] = ()
    inscribed_radius: float | None = None
    output_prefix: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", GridMode(self.mode))
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "track_k", tuple(int(j) for j in self.track_k))
        if self.output_prefix is not None:
            object.__setattr__(self, "output_prefix", Path(self.output_prefix))

    @property
    def data(self) -> InitialData:
        try:
            return INITIAL_DATA[self.initial_data]
        except KeyError:
            raise ConfigError(
                f"unknown initial data '{self.initial_data}' "
                f"(available: {', '.join(sorted(INITIAL_DATA))})"
            ) from None

    @property
    def ceiling(self) -> float:
        return CLIP_FACTOR * self.M if self.clip_ceiling is None else self.clip_ceiling

    def build_graph(self) -> GraphState:
        """Sample the initial data on the configured grid."""
        data = self.data
        if self.mode is GridMode.RADIAL:
            return GraphState.from_radial_function(
                lambda r: data.radial(r, self.params),
                self.extent,
                self.num_nodes,
                self.n,
                self.k,
                clip_ceiling=self.ceiling,
            )
        return GraphState.from_planar_function(
            lambda x, y: data.surface(x, y, self.params),
            self.extent,
            self.num_nodes,
            self.k,
            clip_ceiling=self.ceiling,
        )

    def validate(self) -> None:
        """
        Raises:
            ConfigError: on inconsistent parameters
        """
        n = 2 if self.mode is GridMode.FULL2D else self.n
        if not 1 <= self.k <= n:
            raise ConfigError(f"need 1 <= k <= n, got k={self.k}, n={n}")
        if self.num_nodes < 16:
            raise ConfigError(f"grid size must be at least 16, got {self.num_nodes}")
        if not self.extent > 0.0:
            raise ConfigError(f"extent must be positive, got {self.extent}")
        if any(not 1 <= j <= n for j in self.track_k):
            raise ConfigError(f"tracked speed indices must lie in 1..{n}")
        if self.inscribed_radius is not None and not self.inscribed_radius > 0.0:
            raise ConfigError("inscribed_radius must be positive")
        try:
            graph = self.build_graph()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not np.any(graph.active):
            raise ConfigError("initial data is masked everywhere on the grid")
        u_min = float(np.nanmin(graph.u))
        if not self.M > u_min:
            raise ConfigError(f"M={self.M:g} must exceed min u = {u_min:.6g}")
        if not self.ceiling > self.M:
            raise ConfigError(f"clip ceiling {self.ceiling:g} must exceed M={self.M:g}")

    def with_step(self, step: StepControl) -> ExperimentConfig:
        return replace(self, step=step)

    def refined(self) -> ExperimentConfig:
        """Same run with halved spacing and halved dt cap."""
        return replace(
            self,
            num_nodes=2 * self.num_nodes - 1,
            step=replace(self.step, dt_max=self.step.dt_max / 2.0),
            label=f"{self.label}-refined",
            output_prefix=None,
        )

    def echo(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "initial_data": self.initial_data,
            "params": dict(self.params),
            "n": 2 if self.mode is GridMode.FULL2D else self.n,
            "k": self.k,
            "mode": self.mode.value,
            "num_nodes": self.num_nodes,
            "extent": self.extent,
            "M": self.M,
            "clip_ceiling": self.ceiling,
            "seed": self.seed,
            "mcf": self.mcf,
            "track_k": list(self.track_k),
            "inscribed_radius": self.inscribed_radius,
            "step": {
                "cfl_safety": self.step.cfl_safety,
                "dt_max": self.step.dt_max,
                "t_end": self.step.t_end,
                "monitor_every": self.step.monitor_every,
                "monitor_dt": self.step.monitor_dt,
                "max_halvings": self.step.max_halvings,
            },
            "output_prefix": None if self.output_prefix is None else str(self.output_prefix),
        }


@dataclass(frozen=True)
class VerifyConfig:
    """Sizes of the property sweeps run by ``verify``."""

    samples: int = 10_000
    nmax: int = 6
    seed: int = DEFAULT_SEED
    gradient_samples: int = 1_000
    fd_step: float = 1e-6
    support_nodes: int = 2 * DEFAULT_SUPPORT_NODES

    def __post_init__(self) -> None:
        if self.samples < 1 or self.gradient_samples < 1:
            raise ConfigError("sample counts must be positive")
        if self.nmax < 1:
            raise ConfigError(f"nmax must be at least 1, got {self.nmax}")
        if not self.fd_step > 0.0:
            raise ConfigError("fd_step must be positive")
        if self.support_nodes < 8:
            raise ConfigError("support_nodes must be at least 8")


PRESETS: dict[str, ExperimentConfig] = {
    "paraboloid": ExperimentConfig(
        label="paraboloid",
        initial_data="paraboloid",
        n=2,
        k=1,
        num_nodes=81,
        extent=2.0,
        M=1.0,
        step=StepControl(t_end=0.05, monitor_dt=0.005),
        inscribed_radius=1.0,
    ),
    "cup-k2": ExperimentConfig(
        label="cup-k2",
        initial_data="cup",
        n=2,
        k=2,
        num_nodes=36,
        extent=0.7,
        M=0.4,
        step=StepControl(t_end=0.05, monitor_dt=0.005),
        inscribed_radius=0.5,
    ),
    "hemisphere": ExperimentConfig(
        label="hemisphere",
        initial_data="hemisphere",
        n=2,
        k=2,
        num_nodes=81,
        extent=0.8,
        M=0.25,
        step=StepControl(t_end=0.02, monitor_dt=0.002),
        inscribed_radius=0.5,
    ),
    "paraboloid-mcf": ExperimentConfig(
        label="paraboloid-mcf",
        initial_data="paraboloid",
        n=2,
        k=2,
        num_nodes=81,
        extent=2.0,
        M=1.0,
        step=StepControl(t_end=0.05, monitor_dt=0.005),
        mcf=True,
        track_k=(1, 2),
    ),
}


def get_preset(name: str) -> ExperimentConfig:
    """
    Raises:
        ConfigError: for an unknown preset name
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})"
        ) from None


def _radial_graph(name: str, extent: float, num_nodes: int, n: int, k: int, **params) -> GraphState:
    data = INITIAL_DATA[name]
    return GraphState.from_radial_function(
        lambda r: data.radial(r, params), extent, num_nodes, n, k
    )


def _construction_presets() -> dict[str, ConstructionConfig]:
    return {
        "flat-construction": ConstructionConfig(
            initial_graph=_radial_graph("flat", 1.0, 101, 2, 2),
            j_list=(2.0, 4.0, 8.0),
            k=2,
            flow_horizon=1.0,
            inscribed_radius=inscribed_radius("disk", 1.0),
            label="flat-construction",
        ),
        "paraboloid-construction": ConstructionConfig(
            initial_graph=_radial_graph("paraboloid", 4.5, 451, 2, 1),
            j_list=(2.0, 4.0, 8.0),
            k=1,
            flow_horizon=0.25,
            inscribed_radius=inscribed_radius("plane"),
            label="paraboloid-construction",
        ),
        "hemisphere-construction": ConstructionConfig(
            initial_graph=_radial_graph("hemisphere", 1.0, 201, 2, 2),
            j_list=(2.0, 4.0, 8.0),
            epsilon_list=(0.3, 0.1, 0.03),
            k=2,
            flow_horizon=1.0,
            inscribed_radius=inscribed_radius("disk", 1.0),
            label="hemisphere-construction",
        ),
    }


CONSTRUCTION_PRESETS: dict[str, ConstructionConfig] = _construction_presets()


def get_construction_preset(name: str) -> ConstructionConfig:
    """
    Raises:
        ConfigError: for an unknown preset name
    """
    try:
        return CONSTRUCTION_PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown construction preset '{name}' "
            f"(available: {', '.join(sorted(CONSTRUCTION_PRESETS))})"
        ) from None


# ---------------------------------------------------------------------------
# Experiment files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentFile:
    """Parsed contents of an experiment file; absent sections stay None."""

    flow: ExperimentConfig | None = None
    construction: ConstructionConfig | None = None
    verify: VerifyConfig | None = None
    output_prefix: Path | None = None


_SECTIONS = {"flow", "step", "construction", "verify", "output"}


def _convert(section: str, key: str, raw: str, kind: type) -> Any:
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(part) for part in text.replace(",", " ").split())
        return text
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


_STEP_KEYS: dict[str, type] = {
    "cfl_safety": float,
    "dt_max": float,
    "t_end": float,
    "monitor_every": int,
    "monitor_dt": float,
    "max_halvings": int,
}

_FLOW_KEYS: dict[str, type] = {
    "label": str,
    "initial_data": str,
    "n": int,
    "k": int,
    "mode": str,
    "num_nodes": int,
    "extent": float,
    "M": float,
    "clip_ceiling": float,
    "seed": int,
    "mcf": bool,
    "track_k": tuple,
    "inscribed_radius": float,
}

_CONSTRUCTION_KEYS: dict[str, type] = {
    "label": str,
    "initial_data": str,
    "n": int,
    "extent": float,
    "num_nodes": int,
    "j_list": tuple,
    "epsilon_list": tuple,
    "k": int,
    "flow_horizon": float,
    "pre_smooth_time": float,
    "inscribed_radius": float,
    "support_nodes": int,
    "num_monitors": int,
    "comparison_level": float,
    "check_nesting": bool,
    "cfl_safety": float,
    "workers": int,
}

_VERIFY_KEYS: dict[str, type] = {
    "samples": int,
    "nmax": int,
    "seed": int,
    "gradient_samples": int,
    "fd_step": float,
    "support_nodes": int,
}


def _read_section(
    parser: configparser.ConfigParser,
    section: str,
    schema: Mapping[str, type],
    allow_prefix: str | None = None,
) -> tuple[dict[str, Any], dict[str, float]]:
    values: dict[str, Any] = {}
    extras: dict[str, float] = {}
    for key, raw in parser.items(section):
        if key == "preset":
            continue
        if allow_prefix and key.startswith(allow_prefix):
            extras[key[len(allow_prefix):]] = _convert(section, key, raw, float)
        elif key in schema:
            values[key] = _convert(section, key, raw, schema[key])
        else:
            raise ConfigError(f"[{section}] unknown key '{key}'")
    return values, extras


def _build_step(base: StepControl, values: Mapping[str, Any]) -> StepControl:
    return replace(base, **values)


def load_experiment_file(path: str | Path) -> ExperimentFile:
    """
    Parse an experiment file.

    Raises:
        ConfigError: for unreadable files, unknown sections or keys, values
            of the wrong type, and inconsistent configurations
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read experiment file {path}: {exc}") from exc

    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s) in {path}: {', '.join(sorted(unknown))}")

    prefix: Path | None = None
    if parser.has_section("output"):
        out, _ = _read_section(parser, "output", {"prefix": str})
        if "prefix" in out:
            prefix = Path(out["prefix"])
            if not prefix.is_absolute():
                prefix = Path(RESULTS_DIR).parent / prefix

    flow: ExperimentConfig | None = None
    if parser.has_section("flow") or parser.has_section("step"):
        base = (
            get_preset(parser.get("flow", "preset"))
            if parser.has_option("flow", "preset")
            else ExperimentConfig()
        )
        values, params = (
            _read_section(parser, "flow", _FLOW_KEYS, allow_prefix="param.")
            if parser.has_section("flow")
            else ({}, {})
        )
        step = base.step
        if parser.has_section("step"):
            step_values, _ = _read_section(parser, "step", _STEP_KEYS)
            step = _build_step(base.step, step_values)
        if "track_k" in values:
            values["track_k"] = tuple(int(j) for j in values["track_k"])
        flow = replace(
            base,
            **values,
            params={**base.params, **params},
            step=step,
            output_prefix=prefix if prefix is not None else base.output_prefix,
        )
        flow.validate()

    construction: ConstructionConfig | None = None
    if parser.has_section("construction"):
        construction = _parse_construction(parser)

    verify: VerifyConfig | None = None
    if parser.has_section("verify"):
        values, _ = _read_section(parser, "verify", _VERIFY_KEYS)
        verify = VerifyConfig(**values)

    log.debug(f"Loaded experiment file {path}")
    return ExperimentFile(flow=flow, construction=construction, verify=verify, output_prefix=prefix)


def _parse_construction(parser: configparser.ConfigParser) -> ConstructionConfig:
    values, params = _read_section(
        parser, "construction", _CONSTRUCTION_KEYS, allow_prefix="param."
    )
    base = (
        get_construction_preset(parser.get("construction", "preset"))
        if parser.has_option("construction", "preset")
        else None
    )
    graph_keys = {"initial_data", "n", "extent", "num_nodes"}
    graph_values = {key: values.pop(key) for key in list(values) if key in graph_keys}
    if base is None or graph_values or params:
        name = graph_values.get("initial_data", "paraboloid")
        if name not in INITIAL_DATA:
            raise ConfigError(f"unknown initial data '{name}'")
        data = INITIAL_DATA[name]
        n = graph_values.get("n", base.n if base else 2)
        k = values.get("k", base.k if base else 1)
        try:
            graph = _radial_graph(
                name,
                graph_values.get("extent", 2.0),
                graph_values.get("num_nodes", 201),
                n,
                min(k, n),
                **params,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        values["initial_graph"] = graph
        values.setdefault("inscribed_radius", data.domain_radius(params))
    allowed = {f.name for f in fields(ConstructionConfig)}
    values = {key: value for key, value in values.items() if key in allowed}
    if base is not None:
        return replace(base, **values)
    return ConstructionConfig(**values)
