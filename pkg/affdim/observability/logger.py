"""Logging setup for affdim."""
import logging
import sys
from pathlib import Path
from typing import Optional

import affdim.config as config


def setup_logger(name: str, log_level: Optional[str] = None) -> logging.Logger:
    """
    Setup logger with console and optional file handlers.

    Console output goes to stderr so that command summaries on stdout stay
    parseable. A file handler is attached only when ``config.LOG_DIR`` is set.

    Args:
        name: Logger name
        log_level: Logging level (defaults to config.LOG_LEVEL)

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, (log_level or config.LOG_LEVEL).upper(), logging.INFO))

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    logger.addHandler(console_handler)

    if config.LOG_DIR:
        log_dir = Path(config.LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "affdim.log")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """Get or create a logger."""
    return logging.getLogger(name)
