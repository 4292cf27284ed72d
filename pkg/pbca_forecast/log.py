"""Console logging for the command line."""
from __future__ import annotations

import logging

import colorlog

from .const import DOMAIN

LOG_FORMAT = "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s"
LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


def setup_logging(verbose: bool = False) -> logging.Logger:
    """
    Attach a colored stream handler to the package logger.

    Calling it again replaces the handler instead of adding a second one.

    Args:
        verbose: Log at DEBUG instead of INFO

    Returns:
        The package logger

    """
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT, datefmt="%H:%M:%S", log_colors=LOG_COLORS))
    logger = logging.getLogger(DOMAIN)
    for existing in list(logger.handlers):
        if isinstance(existing, colorlog.StreamHandler):
            logger.removeHandler(existing)
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return logger
