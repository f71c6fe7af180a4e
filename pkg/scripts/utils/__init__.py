"""
Q_k Flow Laboratory Utilities Package.

Logging shared by the numerical modules and the command line.

Modules:
    - ``logging``: Centralized logging with custom SUCCESS level and the
      verbose tree logger

Usage:
    ::

        from scripts.utils import get_logger, success
        logger = get_logger()
        success("Verification complete!")
"""

from __version__ import __version__

from .logging import (
    critical,
    debug,
    error,
    get_log_file_path,
    get_logger,
    get_verbose_logger,
    info,
    setup_logger,
    success,
    verdict,
    warning,
)

__all__ = [
    "critical",
    "debug",
    "error",
    "get_log_file_path",
    "get_logger",
    "get_verbose_logger",
    "info",
    "setup_logger",
    "success",
    "verdict",
    "warning",
]
