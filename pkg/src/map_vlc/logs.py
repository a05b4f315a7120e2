import os
import sys
import logging
import traceback
from typing import Optional

from colorama import Fore, Style

ROOT = "map_vlc"

_COLORS = {
    logging.DEBUG: Style.DIM,
    logging.INFO: "",
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


def debug_enabled() -> bool:
    return os.getenv("MAPVLC_DEBUG", "0") == "1"


class ColorFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        color = _COLORS.get(record.levelno, "")
        return color + text + Style.RESET_ALL if color else text


def get_logger(name: str) -> logging.Logger:
    if not name.startswith(ROOT):
        name = f"{ROOT}.{name}"
    return logging.getLogger(name)


def setup_logging(quiet: bool = False, stream=None) -> logging.Logger:
    """Attach one coloured stderr handler to the package root logger."""
    root = logging.getLogger(ROOT)
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(ColorFormatter("[%(levelname)s] %(message)s"))
    root.addHandler(handler)
    root.propagate = False
    if debug_enabled():
        root.setLevel(logging.DEBUG)
    elif quiet:
        root.setLevel(logging.WARNING)
    else:
        root.setLevel(logging.INFO)
    return root


def critical(message: str, exc: Optional[BaseException] = None):
    """Internal simulator bug: always logged, exits in debug mode."""
    tb = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__)) if exc else ""
    full = f"{message}\n{tb}" if tb else message
    get_logger(ROOT).critical(full)
    if debug_enabled():
        sys.exit(f"\n[MAPVLC DEBUG] Critical internal error:\n{message}\n")
