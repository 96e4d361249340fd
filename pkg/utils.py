"""
Utility functions for the QND Leggett-Garg simulator.
"""

import math
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from errors import ConfigError

THREADS_ENV_VAR = "QND_LG_THREADS"

_PI_MULTIPLE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi|π)$")


def parse_angle(text):
    """
    Parse an angle given in radians or as a multiple of pi.

    Accepts "1.2", "0.5pi", "2*pi", "-pi", "π".

    Args:
        text (str): angle text

    Returns:
        float: angle in radians
    """
    if isinstance(text, (int, float)):
        return float(text)
    cleaned = text.strip().lower()
    match = _PI_MULTIPLE.match(cleaned)
    if match:
        factor = match.group(1) or "1"
        return float(factor) * math.pi
    if cleaned.startswith("-") and _PI_MULTIPLE.match(cleaned[1:]):
        return -parse_angle(cleaned[1:])
    try:
        value = float(cleaned)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"angle must be finite, got {text!r}")
    return value


def parse_theta_grid(text):
    """
    Parse a START:STOP:POINTS grid spec into (start, stop, points).

    START and STOP accept the same forms as parse_angle.
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"theta grid must look like START:STOP:POINTS, got {text!r}")
    start, stop = parse_angle(parts[0]), parse_angle(parts[1])
    try:
        points = int(parts[2])
    except ValueError:
        raise ConfigError(f"grid point count must be an integer, got {parts[2]!r}") from None
    if points < 1:
        raise ConfigError(f"theta grid needs at least one point, got {points}")
    if points > 1 and not stop > start:
        raise ConfigError(f"theta grid needs STOP > START, got {text!r}")
    return start, stop, points


def format_float(value):
    """Locale-free decimal with 17 significant digits."""
    return f"{float(value):.17g}"


def atomic_write(path, text):
    """
    Write text to path in one step: write a sibling temp file, then rename.

    Args:
        path (str or Path): destination file
        text (str): file contents
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(str(path)))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        # mkstemp creates 0600; give the file the mode open() would have
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp_path, 0o666 & ~umask)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def worker_count(requested=None):
    """
    Number of workers to use, capped by the QND_LG_THREADS environment variable.

    Args:
        requested (int, optional): desired worker count; defaults to the CPU count

    Returns:
        int: at least 1
    """
    count = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV_VAR)
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {cap!r}") from None
    return max(1, count)


def parallel_map(func, items, workers=1):
    """
    Apply func to every item, preserving input order in the result.

    Runs serially for workers <= 1, otherwise on a thread pool.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def spawn_generators(seed, n_streams):
    """
    Independent reproducible random streams derived from one seed.

    Each stream is a counter-based Philox generator keyed by a child of
    SeedSequence(seed), so stream k is the same regardless of worker count.
    """
    children = np.random.SeedSequence(seed).spawn(n_streams)
    return [np.random.Generator(np.random.Philox(child)) for child in children]
