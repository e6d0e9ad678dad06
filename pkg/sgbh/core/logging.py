"""
Logging setup shared by the command-line entry points.
"""
import logging

from sgbh.config import settings


def setup_logging(level: str = None) -> None:
    """Configure the root logger once."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
