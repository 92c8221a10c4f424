"""
Loguru setup for dfms.

Console output goes through ``tqdm.write`` so log lines do not tear the progress
bars of training loops. Records from the standard ``logging`` module (uvicorn,
httpx, torchvision downloads) are routed into loguru.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

from loguru import logger
from tqdm import tqdm

from dfms.core.config import settings

LOG_FILE = "dfms.log"
CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} | {message}"

# stdlib loggers handed to loguru, and the level below which they stay silent
ROUTED_LOGGERS = {
    "uvicorn": logging.INFO,
    "uvicorn.access": logging.WARNING,
    "uvicorn.error": logging.INFO,
    "fastapi": logging.INFO,
    "httpx": logging.WARNING,
    "matplotlib": logging.WARNING,
    "PIL": logging.WARNING,
}


class InterceptHandler(logging.Handler):
    """Forwards ``logging`` records to loguru, keeping the original caller."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        # skip logging's own frames
        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def _console_sink(message: str) -> None:
    tqdm.write(message, file=sys.stderr, end="")


def setup_logging(log_level: Optional[str] = None, log_dir: Optional[Path] = None) -> Path:
    """Send logs to the console and to a rotating file.

    Args:
        log_level: Level name; ``settings.LOG_LEVEL`` when None
        log_dir: Directory of ``dfms.log``; ``<OUTPUT_ROOT>/logs`` when None

    Returns:
        Path of the log file
    """
    level = (log_level or settings.LOG_LEVEL).upper()
    log_dir = Path(log_dir) if log_dir is not None else settings.OUTPUT_ROOT / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / LOG_FILE

    logger.configure(
        handlers=[
            {"sink": _console_sink, "format": CONSOLE_FORMAT, "level": level, "colorize": True},
            {
                "sink": log_file,
                "format": FILE_FORMAT,
                "level": level,
                "rotation": "100 MB",
                "retention": "1 week",
                "compression": "zip",
            },
        ],
        extra={"app_name": "dfms"},
    )

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    for name, floor in ROUTED_LOGGERS.items():
        routed = logging.getLogger(name)
        routed.handlers = [InterceptHandler()]
        routed.setLevel(floor)
        routed.propagate = False

    logger.debug(f"Logging to {log_file} at {level}")
    return log_file
