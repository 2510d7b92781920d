"""
Process-wide logging: a rotating file under <project>/logs plus a stderr console.

STYLIZER_LOG_DIR moves the log directory and STYLIZER_LOG_LEVEL sets the
console level. stdout is reserved for command output.
"""
import logging
import os
from datetime import datetime
from logging.handlers import RotatingFileHandler
from typing import Optional, Union

from from_root import from_root

LOG_DIR_ENV_KEY = "STYLIZER_LOG_DIR"
CONSOLE_LEVEL_ENV_KEY = "STYLIZER_LOG_LEVEL"
LOG_FORMAT = "[ %(asctime)s ] %(name)s - %(levelname)s - %(message)s"
MAX_LOG_BYTES = 5 * 1024 * 1024
LOG_BACKUPS = 3
QUIET_LIBRARIES = ("matplotlib", "PIL")


def log_file_path(now: Optional[datetime] = None) -> str:
    directory = os.getenv(LOG_DIR_ENV_KEY) or os.path.join(from_root(), "logs")
    os.makedirs(directory, exist_ok=True)
    stamp = (now or datetime.now()).strftime("%Y%m%d_%H%M%S")
    return os.path.join(directory, f"ir_stylize_{stamp}_{os.getpid()}.log")


def _owned(handler: logging.Handler, level: Union[int, str]) -> logging.Handler:
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(level)
    handler._stylizer_handler = True
    return handler


def configure_logger() -> logging.Logger:
    """Attaches the file and console handlers once per process."""
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    if not any(getattr(handler, "_stylizer_handler", False) for handler in root.handlers):
        file_handler = RotatingFileHandler(log_file_path(), maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS)
        root.addHandler(_owned(file_handler, logging.DEBUG))
        root.addHandler(_owned(logging.StreamHandler(), os.getenv(CONSOLE_LEVEL_ENV_KEY, "INFO").upper()))
    for name in QUIET_LIBRARIES:
        logging.getLogger(name).setLevel(logging.WARNING)
    return root


configure_logger()
