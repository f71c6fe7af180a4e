"""
Error Types
===========

Exception hierarchy shared by every module of the laboratory.

Library code raises these; only ``main.py`` turns them into exit codes
(2 for configuration/runtime errors). Each class corresponds to one failure
mode named by an operation: loss of admissibility of the curvature vector,
stencils leaving the grid, loss of convexity, empty cutoff support, and the
construction-level failures of the closed approximants.
"""

from __future__ import annotations

from pathlib import Path

__all__ = [
    "QkFlowError",
    "NonAdmissible",
    "BoundaryStencil",
    "NonConvex",
    "EmptySupport",
    "StepRejected",
    "InadmissibleInitialData",
    "ConvexityLost",
    "Extinct",
    "NotBelowLevel",
    "ConstructionFailed",
    "NestingViolation",
    "EarlyExtinction",
    "ConfigError",
]


class QkFlowError(Exception):
    """Base class for all laboratory errors."""


class NonAdmissible(QkFlowError):
    """S_{k-1} of a curvature vector is not positive, so Q_k is undefined."""


class BoundaryStencil(QkFlowError):
    """A finite-difference stencil leaves the active domain mask."""


class NonConvex(QkFlowError):
    """Discrete second fundamental form has an eigenvalue below -eps_conv."""


class EmptySupport(QkFlowError):
    """No interior node has a positive cutoff value psi = (M - u)_+."""


class StepRejected(QkFlowError):
    """Post-step convexity failed after every allowed dt halving."""

    def __init__(self, message: str, dump_path: Path | None = None) -> None:
        super().__init__(message)
        self.dump_path = dump_path


class InadmissibleInitialData(QkFlowError):
    """Initial graph violates a hypothesis needed for long-time existence."""


class ConvexityLost(QkFlowError):
    """A support function acquired a non-positive curvature radius."""


class Extinct(QkFlowError):
    """The evolving closed body (or a ball solution) has collapsed."""

    def __init__(self, message: str, t: float | None = None) -> None:
        super().__init__(message)
        self.t = t


class NotBelowLevel(QkFlowError):
    """The graph never dips below the reflection level j."""


class ConstructionFailed(QkFlowError):
    """A stage of the closed-approximant construction failed."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class NestingViolation(QkFlowError):
    """Approximant j is not enclosed by approximant j+1 at time t."""

    def __init__(self, j: float, t: float, excess: float) -> None:
        super().__init__(
            f"approximant j={j:g} escapes its successor at t={t:.6g} "
            f"(excess {excess:.3e})"
        )
        self.j = j
        self.t = t
        self.excess = excess


class EarlyExtinction(QkFlowError):
    """Approximant j collapsed before the guaranteed existence time."""

    def __init__(self, j: float, t: float, bound: float) -> None:
        super().__init__(
            f"approximant j={j:g} went extinct at t={t:.6g}, "
            f"before the lower bound {bound:.6g}"
        )
        self.j = j
        self.t = t
        self.bound = bound


class ConfigError(QkFlowError):
    """Invalid experiment configuration or configuration file."""
