"""Logging configuration for the sampler and its command-line tools."""

import logging
import sys
import time
from contextlib import contextmanager
from typing import Iterator, Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Configure the root logger for a CLI run.

    Args:
        level: Logging level name; unknown names fall back to INFO
        log_file: Optional file that receives the same records as stdout
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    # Repeated main() calls in one process must not stack handlers
    root_logger.handlers.clear()

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setLevel(log_level)
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    logging.getLogger("langgraph").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Logger for a module; pass __name__."""
    return logging.getLogger(name)


@contextmanager
def log_duration(logger: logging.Logger, label: str, level: int = logging.INFO) -> Iterator[None]:
    """
    Log how long the enclosed block took.

    Nothing is logged when the block raises; callers report failures themselves.

    Args:
        logger: Logger to write to
        label: What ran, e.g. "Stage 'sample_prior'"
        level: Log level of the timing record
    """
    started = time.perf_counter()
    yield
    logger.log(level, f"{label} finished in {time.perf_counter() - started:.2f}s")
