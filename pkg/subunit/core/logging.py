# subunit/core/logging.py
"""Log setup for the subunit CLI.

Records from every ``subunit.*`` module go to a rich console handler. Per-start
fit traces and per-length sampling summaries are DEBUG and show only with
``-v``. With ``SUBUNIT_LOG_FILE`` set, every record, DEBUG included, is also
appended to that file, so a long batch run can be inspected afterwards.
"""

import logging
from pathlib import Path
from typing import Optional

from rich.logging import RichHandler

from subunit.core.config import settings

PACKAGE_LOGGER = "subunit"
FILE_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def _file_handler(path: Path) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter(FILE_FORMAT))
    handler.setLevel(logging.DEBUG)
    return handler


def setup_logging(verbose: bool = False, log_file: Optional[str] = None) -> logging.Logger:
    """Attach console and optional file handlers to the package logger.

    Handlers from an earlier call are closed and replaced, so invoking the CLI
    repeatedly in one process never duplicates output.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # markup stays off: messages routinely print lists such as [0.9, 0.5]
    console = RichHandler(
        show_time=False,
        show_path=verbose,
        markup=False,
        rich_tracebacks=settings.environment == "development",
    )
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.addHandler(console)

    target = log_file if log_file is not None else settings.log_file
    if target:
        logger.addHandler(_file_handler(Path(target)))

    logger.setLevel(logging.DEBUG if verbose or target else logging.INFO)
    logger.propagate = False
    return logger
