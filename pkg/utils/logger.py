"""Console logging with timestamps, shared by every module."""
from __future__ import annotations

import logging
import sys

_FORMAT = "[%(asctime)s] [%(levelname)s] %(name)s: %(message)s"
_DATE_FORMAT = "%H:%M:%S"
_ROOT_NAME = "doubletake"
_configured = False


def configure_logging(level: str | int = "INFO") -> None:
    """Attach a single stderr handler to the project logger and set *level*."""
    global _configured
    root = logging.getLogger(_ROOT_NAME)
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT, datefmt=_DATE_FORMAT))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    root.setLevel(level.upper() if isinstance(level, str) else level)


def get_logger(name: str) -> logging.Logger:
    """Return a child of the project logger for module *name*."""
    if name.startswith(_ROOT_NAME):
        return logging.getLogger(name)
    return logging.getLogger(f"{_ROOT_NAME}.{name}")


def console_log(message: str, level: str = "INFO") -> None:
    """Console logging with timestamps"""
    get_logger("console").log(logging.getLevelName(level.upper()), message)
