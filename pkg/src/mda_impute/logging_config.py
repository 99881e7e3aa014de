"""Loguru setup for the command line and for library use.

Numerical libraries report through the standard ``logging`` module and through
``warnings``; both are routed into loguru so a run has a single log stream.
"""

import inspect
import logging
import sys
from typing import Any

from loguru import logger

from mda_impute.config import Config

HUMAN_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{extra[name]}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)

# Libraries whose records bypass the root logger
ROUTED_LOGGERS = ("py.warnings", "numpy", "scipy", "pandas", "statsmodels", "joblib")


class InterceptHandler(logging.Handler):
    """Forward standard ``logging`` records to loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        """Emit a record at its loguru level, attributed to the original caller."""
        try:
            level: str | int = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = inspect.currentframe(), 0
        while frame is not None and (depth == 0 or frame.f_code.co_filename == logging.__file__):
            frame = frame.f_back
            depth += 1

        logger.bind(name=record.name).opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def _sink_options(level: str, fmt: str, json_logs: bool) -> dict[str, Any]:
    return {
        "level": level,
        "format": fmt,
        # serialize=True wraps the whole record as one JSON object per line
        "serialize": json_logs,
        "backtrace": True,
        "diagnose": False,
        "enqueue": True,
    }


def configure_logging(
    log_level: str | None = None,
    log_format: str | None = None,
    log_file: str | None = None,
    json_logs: bool = False,
) -> None:
    """Replace loguru's sinks with a stderr sink and an optional rotating file.

    Args:
        log_level: Minimum level; ``Config.LOG_LEVEL`` when omitted.
        log_format: Loguru format string for human-readable output.
        log_file: Path of an additional file sink.
        json_logs: Write serialized JSON records instead of formatted lines.
    """
    logger.remove()
    logger.configure(extra={"name": "mda_impute"})

    level = (log_level or Config.LOG_LEVEL).upper()
    fmt = "{message}" if json_logs else (log_format or HUMAN_FORMAT)

    # stdout carries reports and tables
    logger.add(sys.stderr, colorize=not json_logs, **_sink_options(level, fmt, json_logs))
    if log_file:
        logger.add(
            log_file,
            rotation="100 MB",
            retention="1 week",
            compression="zip",
            **_sink_options(level, fmt, json_logs),
        )

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    logging.captureWarnings(True)
    for name in ROUTED_LOGGERS:
        routed = logging.getLogger(name)
        routed.handlers = [InterceptHandler()]
        routed.propagate = False

    logger.debug(f"Logging configured: level={level}, json={json_logs}, file={log_file}")


def get_logger(name: str):
    """Return the shared logger bound to a module name."""
    return logger.bind(name=name)
