"""
Laboratory Logging
==================

One shared ``qkflow`` logger for the numerical modules and the command line.

- A ``SUCCESS`` level (25) sits between INFO and WARNING and carries PASS
  verdicts and finished runs.
- Every run writes a timestamped file under ``config.LOG_DIR``. The file
  receives INFO, or DEBUG with ``--verbose``.
- The console stays quiet while tqdm bars are drawing. It shows SUCCESS,
  ERROR and CRITICAL, and in ``--simple`` mode WARNING too (dt halvings,
  convexity repairs).

Levels as used by the laboratory
--------------------------------
- DEBUG: monitor rows, per-stage metrics and timings (tree view)
- INFO: run start, configuration echo, output paths
- SUCCESS: PASS verdicts, completed subcommands
- WARNING: step rejections and dt halving, ignored environment settings
- ERROR: FAIL verdicts, aborted runs (with the dump or log path)
- CRITICAL: unexpected exceptions reaching the command line

Tree view
---------
``VerboseLogger`` indents DEBUG records by nesting depth::

    >>> vlog = get_verbose_logger()
    >>> with vlog.run_block("graph flow cup-k2"):
    ...     vlog.monitor_row(0.005, 1.2e-5, supPsiUpsilon=0.47)
    ...     vlog.timing("Integration", 3.2)

renders in the log file as::

    ├─ Running: graph flow cup-k2
      │  t=0.005 dt=1.200e-05 supPsiUpsilon=0.47
      ├─ ⏱ Integration: 3.20s
      └─ ✓ Complete
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any

from config import LOG_DIR, LOG_NAME

SUCCESS = 25
logging.addLevelName(SUCCESS, "SUCCESS")

_FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_DEBUG_FILE_FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s"
)

_logger: logging.Logger | None = None
_log_file_path: str | None = None


class ConsoleFilter(logging.Filter):
    """Pass SUCCESS records and anything at or above ``threshold``."""

    def __init__(self, threshold: int) -> None:
        super().__init__()
        self.threshold = threshold

    def filter(self, record: logging.LogRecord) -> bool:
        return record.levelno == SUCCESS or record.levelno >= self.threshold


def setup_logger(
    name: str = LOG_NAME,
    log_level: int = logging.INFO,
    simple_mode: bool = False,
) -> logging.Logger:
    """
    Configure the shared logger once and return it.

    Later calls return the existing logger unchanged, so library modules may
    log before the command line has parsed ``--verbose``.

    Args:
        name: logger name and log file prefix
        log_level: file handler level (INFO, or DEBUG for the tree view)
        simple_mode: also show warnings on the console
    """
    global _logger, _log_file_path

    if _logger is not None:
        if _logger.level != log_level:
            _logger.debug(f"Logger already at level {_logger.level}; ignoring {log_level}")
        return _logger

    _logger = logging.getLogger(name)
    _logger.setLevel(log_level)
    _logger.handlers.clear()

    logs_dir = Path(LOG_DIR)
    logs_dir.mkdir(parents=True, exist_ok=True)
    log_file = logs_dir / f"{name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
    _log_file_path = str(log_file)

    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(log_level)
    file_handler.setFormatter(
        logging.Formatter(_DEBUG_FILE_FORMAT if log_level == logging.DEBUG else _FILE_FORMAT)
    )

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(SUCCESS)
    console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    console_handler.addFilter(ConsoleFilter(logging.WARNING if simple_mode else logging.ERROR))

    _logger.addHandler(file_handler)
    _logger.addHandler(console_handler)
    _logger.info(f"Logging to {log_file}")
    return _logger


def get_logger() -> logging.Logger:
    """Shared logger, set up with defaults on first use."""
    return _logger if _logger else setup_logger()


def get_log_file_path() -> str | None:
    return _log_file_path


def _with_log_path(msg: str, include_log_path: bool) -> str:
    if include_log_path and _log_file_path:
        return f"{msg}\nFull trace in {_log_file_path}"
    return msg


def debug(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().debug(msg, *args, **kwargs)


def info(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().info(msg, *args, **kwargs)


def warning(msg: str, *args: Any, include_log_path: bool = False, **kwargs: Any) -> None:
    get_logger().warning(_with_log_path(msg, include_log_path), *args, **kwargs)


def error(msg: str, *args: Any, include_log_path: bool = True, **kwargs: Any) -> None:
    """ERROR record; by default points at the log file for the full trace."""
    get_logger().error(_with_log_path(msg, include_log_path), *args, **kwargs)


def critical(msg: str, *args: Any, include_log_path: bool = True, **kwargs: Any) -> None:
    get_logger().critical(_with_log_path(msg, include_log_path), *args, **kwargs)


def success(msg: str, *args: Any, **kwargs: Any) -> None:
    get_logger().log(SUCCESS, msg, *args, **kwargs)


def verdict(name: str, passed: bool, margin: float, detail: str = "") -> None:
    """Record one verdict: PASS at SUCCESS, FAIL at ERROR."""
    text = f"{name}: margin={margin:.3e}" + (f" ({detail})" if detail else "")
    if passed:
        success(f"PASS {text}")
    else:
        error(f"FAIL {text}", include_log_path=False)


class VerboseLogger:
    """
    Tree-view DEBUG records for long-running drivers.

    Every call is a no-op unless the shared logger is at DEBUG, so drivers
    can trace each stage without guarding the calls.
    """

    def __init__(self) -> None:
        self._depth = 0

    def _enabled(self) -> bool:
        return get_logger().level == logging.DEBUG

    def _emit(self, prefix: str, message: str) -> None:
        if self._enabled():
            debug(f"{'  ' * self._depth}{prefix}{message}")

    class _Block:
        def __init__(self, vlog: "VerboseLogger", header: str, footer: str | None) -> None:
            self.vlog = vlog
            self.header = header
            self.footer = footer

        def __enter__(self) -> "VerboseLogger._Block":
            self.vlog._emit("├─ ", self.header)
            self.vlog._depth += 1
            return self

        def __exit__(self, exc_type, exc, tb) -> None:
            if self.footer:
                self.vlog._emit("└─ ", self.footer if exc_type is None else "✗ Aborted")
            self.vlog._depth -= 1

    def run_block(self, label: str, total_steps: int | None = None) -> _Block:
        """Whole run: graph flow, construction or sweep."""
        header = f"Running: {label}"
        if total_steps is not None:
            header += f" ({total_steps} stages)"
        return self._Block(self, header, "✓ Complete")

    def step(self, name: str) -> _Block:
        return self._Block(self, name, None)

    def detail(self, message: str) -> None:
        self._emit("│  ", message)

    def metric(self, label: str, value: Any) -> None:
        self._emit("├─ ", f"{label}: {value}")

    def timing(self, operation: str, seconds: float) -> None:
        self._emit("├─ ", f"⏱ {operation}: {seconds:.2f}s")

    def monitor_row(self, t: float, dt: float, **values: float) -> None:
        """One monitor event of a flow run."""
        columns = " ".join(f"{key}={val:.6g}" for key, val in values.items())
        self.detail(f"t={t:.6g} dt={dt:.3e} {columns}")


_verbose_logger: VerboseLogger | None = None


def get_verbose_logger() -> VerboseLogger:
    global _verbose_logger
    if _verbose_logger is None:
        _verbose_logger = VerboseLogger()
    return _verbose_logger
