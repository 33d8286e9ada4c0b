"""Console logging for entry points."""

import logging
import os
from typing import Optional

import colorlog

_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_handler: Optional[logging.Handler] = None


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install a coloured console handler on the root logger.

    Calling again replaces the handler installed by the previous call.

    Args:
        level: Level name; falls back to ``PULASKI_LOG_LEVEL`` and then INFO
    """
    global _handler
    level_name = (level or os.getenv("PULASKI_LOG_LEVEL", "INFO")).upper()

    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(_FORMAT))

    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.INFO))
    _handler = handler
