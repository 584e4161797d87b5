"""
Observation file ingestion

Reads one observation per line. Blank lines and anything after a '#' are
ignored; every other line must hold a single finite number.
"""

import hashlib
import logging
import math
from pathlib import Path

from hlikelihood.exceptions import ConfigError
from hlikelihood.items import ObservedData

logger = logging.getLogger(__name__)


def new_stats() -> dict:
    return {
        "lines_read": 0,
        "comments_skipped": 0,
        "blank_skipped": 0,
        "observations": 0,
    }


def parse_line(line: str):
    """The number on a line, or None for blank and comment-only lines."""
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


def read_observations(path, stats: dict = None) -> ObservedData:
    path = Path(path)
    stats = stats if stats is not None else new_stats()
    if not path.is_file():
        raise ConfigError(f"data file {path} does not exist")

    values = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stats["lines_read"] += 1
            try:
                value = parse_line(line)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: cannot read an observation ({exc})") from None
            if value is None:
                if line.strip().startswith("#"):
                    stats["comments_skipped"] += 1
                else:
                    stats["blank_skipped"] += 1
                continue
            values.append(value)
            stats["observations"] += 1

    if not values:
        raise ConfigError(f"data file {path} holds no observations")
    logger.info(f"read {stats['observations']} observations from {path} ({stats['lines_read']} lines)")
    return ObservedData.of(values)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            digest.update(block)
    return f"sha256:{digest.hexdigest()}"
