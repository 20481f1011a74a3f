"""
advkern Logging Utilities.

This module provides unified logging configuration and utilities for advkern.
All modules should use this centralized logging system to maintain consistency.
"""

import json
import logging
import logging.handlers
import os
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

_FORMAT = '[%(asctime)s] %(levelname)-8s - %(message)s'
_DATEFMT = '%m/%d/%y %H:%M:%S'


def get_advkern_logger(name: str) -> logging.Logger:
    """
    Get a configured advkern logger instance.

    Creates and configures a logger with the standard advkern format. The level
    comes from ADVKERN_LOG_LEVEL (default INFO). Console output goes to stderr so
    that command output on stdout stays machine readable. When ADVKERN_LOG_DIR is
    set, a rotating file handler is attached as well.

    Args:
        name (str): The name for the logger, typically __name__ from the calling module

    Returns:
        logging.Logger: A configured logger instance with advkern formatting

    Example:
        >>> from advkern.utils.logging import get_advkern_logger
        >>> logger = get_advkern_logger(__name__)
        >>> logger.info("This is a log message")
    """
    logger = logging.getLogger(name)
    logger.setLevel(os.getenv("ADVKERN_LOG_LEVEL", "INFO").strip().upper() or "INFO")

    if not logger.handlers:
        formatter = logging.Formatter(_FORMAT, datefmt=_DATEFMT)

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        log_dir = os.getenv("ADVKERN_LOG_DIR")
        if log_dir:
            try:
                Path(log_dir).mkdir(parents=True, exist_ok=True)
                # 10MB max, keep 5 backups
                file_handler = logging.handlers.RotatingFileHandler(
                    Path(log_dir) / "advkern.log",
                    maxBytes=10 * 1024 * 1024,
                    backupCount=5,
                    encoding='utf-8'
                )
                file_handler.setFormatter(formatter)
                logger.addHandler(file_handler)
            except (PermissionError, OSError):
                # console only
                pass

        logger.propagate = False

    return logger


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def log_json(logger: logging.Logger, data: Union[Dict, List], title: str = "", level: str = "debug") -> None:
    """
    Log JSON data with pretty formatting.

    numpy arrays and scalars are converted to plain lists and numbers.

    Args:
        logger (logging.Logger): The logger instance to use
        data (Union[Dict, List]): The data to format as JSON
        title (str): Optional title to prepend to the output
        level (str): Log level, defaults to "debug"

    Example:
        >>> logger = get_advkern_logger(__name__)
        >>> log_json(logger, {"iterations": 12, "converged": True}, "Fit summary", level="info")
    """
    log_func = getattr(logger, level.lower(), logger.debug)
    if not logger.isEnabledFor(logging.getLevelName(level.upper())):
        return

    json_str = json.dumps(data, indent=2, ensure_ascii=False, default=_to_jsonable)
    message = f"{title}:\n{json_str}" if title else json_str
    log_func(message)
