"""
Q_k Flow Laboratory Scripts Package.

Numerical kernels and drivers for the Q_k curvature flow of convex
hypersurfaces.

Modules:
    - ``symfun``: elementary symmetric functions, Q_k and its derivatives
    - ``geometry``: graph grids, curvature operators and monitor quantities
    - ``flow``: explicit graph flow with step control and monitor series
    - ``supportfn``: support-function flow of closed convex bodies
    - ``oracle``: closed-form shrinking-ball solution
    - ``monitors``: monitor rows, series and verdicts
    - ``pipeline``: approximation of a graph by closed convex bodies
    - ``experiment``: initial data, presets and experiment files
    - ``persistence``: CSV, snapshot and JSON report formats
    - ``verify``: randomized property sweeps
    - ``utils/``: logging

Usage:
    Run a preset graph flow and judge it::

        from scripts import evaluate_all, get_preset, run_graph_flow

        series = run_graph_flow(get_preset("paraboloid"))
        for verdict in evaluate_all(series):
            print(verdict.status, verdict.name)
"""

from __version__ import __version__

from .experiment import get_construction_preset, get_preset
from .flow import run_graph_flow
from .monitors import evaluate_all
from .pipeline import run_construction
from .verify import run_verification

__all__ = [
    "evaluate_all",
    "get_construction_preset",
    "get_preset",
    "run_construction",
    "run_graph_flow",
    "run_verification",
]
