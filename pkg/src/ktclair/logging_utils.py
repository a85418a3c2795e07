"""Centralized logging configuration for ktclair commands and library code."""
import json
import os
import sys

import numpy as np
from loguru import logger


def _render_extra(value) -> str:
    """Render one structured field for the console format, braces escaped."""
    if isinstance(value, np.generic):
        value = value.item()
    elif isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (dict, list, tuple)):
        text = json.dumps(value, default=str)
    else:
        text = str(value)
    return text.replace("{", "{{").replace("}", "}}")


def _console_format(record) -> str:
    """Format a record with extras shown only at DEBUG level."""
    time_str = "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green>"
    level_str = "<level>{level: <8}</level>"

    if "context" in record["extra"]:
        base = f"{time_str} | {level_str} | <cyan>{{extra[role]}}</cyan> | <cyan>{{extra[context]}}</cyan> | <level>{{message}}</level>"
    else:
        base = f"{time_str} | {level_str} | <cyan>{{extra[role]}}</cyan> | <level>{{message}}</level>"

    if record["level"].name == "DEBUG":
        extras = [
            f"{k}={_render_extra(v)}"
            for k, v in record["extra"].items()
            if k not in ("role", "context")
        ]
        if extras:
            return base + " | " + " | ".join(extras) + "\n"

    return base + "\n"


def configure_logger(role: str, context: str | None = None, serialize: bool = False):
    """Configure the loguru sink and return a logger bound to ``role``.

    Args:
        role: Subsystem identifier (e.g. "recon", "calib", "bench", "cli")
        context: Optional context identifier (e.g. "R=4", "cell:minus-kt")
        serialize: If True, emit JSON lines; otherwise a colored console format

    Logging behavior:
        - INFO level: role/context/message only
        - DEBUG level: structured keyword extras appended as key=value pairs
        - JSON mode (serialize or LOG_FORMAT=json): every field at every level
    """
    logger.remove()

    if serialize or os.getenv("LOG_FORMAT") == "json":
        logger.add(
            sys.stderr,
            format="{message}",
            level=os.getenv("LOGURU_LEVEL", "INFO"),
            serialize=True,
        )
    else:
        logger.add(
            sys.stderr,
            format=_console_format,
            level=os.getenv("LOGURU_LEVEL", "INFO"),
            colorize=True,
        )

    if context:
        return logger.bind(role=role, context=context)
    return logger.bind(role=role)


def get_logger(role: str, context: str | None = None):
    """Bind a module logger without touching the configured sinks."""
    if context:
        return logger.bind(role=role, context=context)
    return logger.bind(role=role)
