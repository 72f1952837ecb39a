"""
Logging Setup for the CACRL scheduler.

Provides configured logging with colored console output and an optional
file handler that keeps DEBUG-level training diagnostics.
"""

from __future__ import annotations

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional


class ColoredFormatter(logging.Formatter):
    """Formatter with colored level names for console output."""

    COLORS = {
        logging.DEBUG: "\033[36m",     # Cyan
        logging.INFO: "\033[32m",      # Green
        logging.WARNING: "\033[33m",   # Yellow
        logging.ERROR: "\033[31m",     # Red
        logging.CRITICAL: "\033[41m",  # Red background
    }
    RESET = "\033[0m"

    def format(self, record):
        # Work on a copy so the file handler sees the plain level name.
        record = logging.makeLogRecord(record.__dict__)
        color = self.COLORS.get(record.levelno, "")
        record.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(record)


def setup_logger(
    name: str = "cacrl",
    level: int = logging.INFO,
    log_to_file: bool = False,
    log_dir: Optional[Path] = None,
) -> logging.Logger:
    """
    Set up the package logger with console and optional file handlers.

    Library modules log through ``logging.getLogger(__name__)``; since the
    package lives under ``src``, handlers are attached to both ``name`` and
    ``src`` so module records reach the same sinks.

    Args:
        name: Logger name
        level: Console logging level
        log_to_file: Whether to also log to a file
        log_dir: Directory for log files (uses ``./logs`` if None)

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    logger.handlers.clear()
    logger.propagate = False

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(
        ColoredFormatter("%(asctime)s | %(levelname)s | %(message)s", datefmt="%H:%M:%S")
    )
    logger.addHandler(console_handler)

    if log_to_file:
        if log_dir is None:
            log_dir = Path("logs")
        log_dir.mkdir(parents=True, exist_ok=True)

        log_file = log_dir / f"cacrl_{datetime.now():%Y%m%d_%H%M%S}.log"
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s | %(levelname)-8s | %(name)s:%(lineno)d | %(message)s")
        )
        logger.addHandler(file_handler)

    package_logger = logging.getLogger("src")
    package_logger.setLevel(logging.DEBUG)
    package_logger.handlers = list(logger.handlers)
    package_logger.propagate = False

    return logger
