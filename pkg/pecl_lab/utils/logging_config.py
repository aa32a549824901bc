"""Logging configuration for pecl-lab."""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional


def setup_logging(log_level=logging.INFO, log_dir: Optional[Path] = None):
    """Set up logging for the application.

    Returns the path of the log file that was opened.
    """
    if log_dir is None:
        from ..config.app_dirs import app_dirs

        log_dir = app_dirs.logs_dir
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = log_dir / f"pecl_lab_{timestamp}.log"

    file_formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    console_formatter = logging.Formatter("%(levelname)s - %(message)s")

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(log_level)
    file_handler.setFormatter(file_formatter)

    # stdout carries command output, so diagnostics go to stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(console_formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    # repeated setup (one per CLI invocation) replaces our earlier handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, "_pecl_lab", False):
            root_logger.removeHandler(handler)
            handler.close()
    file_handler._pecl_lab = True
    console_handler._pecl_lab = True
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging initialized. Log file: {log_file}")
    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Current working directory: {os.getcwd()}")

    return log_file


def setup_exception_logging():
    """Set up global exception handling."""

    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return

        logger = logging.getLogger(__name__)
        logger.critical(
            "Uncaught exception", exc_info=(exc_type, exc_value, exc_traceback)
        )

    sys.excepthook = handle_exception


def resolve_log_level(debug: bool = False) -> int:
    """Pick the log level from the flag or the PECL_LAB_DEBUG variable."""
    env_debug = os.getenv("PECL_LAB_DEBUG", "").lower() in ("1", "true", "yes")
    return logging.DEBUG if (debug or env_debug) else logging.INFO
