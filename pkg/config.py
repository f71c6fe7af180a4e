# config.py
"""
Q_k Flow Laboratory Configuration Module.

Centralized numerical defaults, path resolution and environment overrides
shared by the flow, construction and verification code.

Module:
    config - Configuration management for the qkflow laboratory
"""

import logging
import os

try:
    from __version__ import __version__
except ImportError:
    __version__ = "unknown"

__all__ = [
    # Path constants
    "ROOT_DIR",
    "RESULTS_DIR",
    "DUMP_DIR",
    "PRESETS_DIR",
    # Numerical defaults
    "CFL_SAFETY",
    "MAX_HALVINGS",
    "CONVEXITY_EPS",
    "ADMISSIBLE_FLOOR",
    "CLIP_FACTOR",
    "BOUND_TOL",
    "MONOTONE_TOL",
    "ENCLOSURE_TOL",
    "NESTING_TOL",
    "DERIVATIVE_FACTOR",
    "DEFAULT_SEED",
    "DEFAULT_SUPPORT_NODES",
    "THREADS",
    # Logging configuration
    "LOG_LEVEL",
    "LOG_NAME",
    "LOG_DIR",
    # Public functions
    "ensure_directories",
    "validate_config",
    "get_thread_count",
]

# Project paths
ROOT_DIR = (
    os.path.dirname(os.path.abspath(__file__))
    if "__file__" in globals()
    else os.getcwd()
)
RESULTS_DIR = os.path.join(ROOT_DIR, "results")
DUMP_DIR = os.path.join(RESULTS_DIR, "dumps")
PRESETS_DIR = os.path.join(ROOT_DIR, "presets")

# Time stepping
CFL_SAFETY = 0.2
MAX_HALVINGS = 20

# Geometry tolerances
CONVEXITY_EPS = 1e-8
ADMISSIBLE_FLOOR = 1e-14
CLIP_FACTOR = 10.0

# Verdict tolerances
BOUND_TOL = 1e-2
MONOTONE_TOL = 1e-3
ENCLOSURE_TOL = 1e-3
NESTING_TOL = 1e-3
DERIVATIVE_FACTOR = 10.0

DEFAULT_SEED = 20240101
DEFAULT_SUPPORT_NODES = 128


# Logging configuration
LOG_LEVEL = logging.INFO
LOG_NAME = "qkflow"
LOG_DIR = os.path.join(ROOT_DIR, ".logs")


def get_thread_count() -> int:
    """
    Worker count for concurrent construction branches.

    Reads ``QKFLOW_THREADS``; falls back to 1 when unset, and logs a warning
    when it is set to anything but a positive integer.
    """
    raw = os.environ.get("QKFLOW_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        logging.getLogger(LOG_NAME).warning(
            f"Ignoring invalid QKFLOW_THREADS={raw!r}; using 1 thread"
        )
        return 1
    return value


THREADS = get_thread_count()


def ensure_directories() -> None:
    """Create output directories if they don't exist."""
    for directory in (RESULTS_DIR, DUMP_DIR):
        os.makedirs(directory, exist_ok=True)


def validate_config() -> list[str]:
    """
    Validate configuration and return list of warnings.

    Returns:
        List of warning messages for out-of-range defaults or missing paths
    """
    warnings = []

    if not 0.0 < CFL_SAFETY <= 1.0:
        warnings.append(f"CFL_SAFETY outside (0, 1]: {CFL_SAFETY}")
    if MAX_HALVINGS < 1:
        warnings.append(f"MAX_HALVINGS must be positive: {MAX_HALVINGS}")
    if CLIP_FACTOR <= 1.0:
        warnings.append(f"CLIP_FACTOR should exceed 1: {CLIP_FACTOR}")

    raw_threads = os.environ.get("QKFLOW_THREADS")
    if raw_threads is not None and str(THREADS) != raw_threads.strip():
        warnings.append(f"Ignoring invalid QKFLOW_THREADS={raw_threads!r}")

    try:
        if not os.path.exists(PRESETS_DIR):
            warnings.append(f"Presets directory not found: {PRESETS_DIR}")
    except (OSError, PermissionError) as e:
        warnings.append(f"Error validating configuration: {e}")

    return warnings
