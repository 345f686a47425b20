"""Worker-count policy for internal grid sweeps.

PATH_TRANSPORT_THREADS caps parallelism: unset or empty means serial,
0 means one worker per CPU, any positive integer is used as given.
"""

from __future__ import annotations

import os

from .errors import ConfigError


def worker_count() -> int:
    raw = os.environ.get("PATH_TRANSPORT_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(
            f"PATH_TRANSPORT_THREADS must be an integer, got {raw!r}"
        ) from None
    if value < 0:
        raise ConfigError("PATH_TRANSPORT_THREADS must be >= 0")
    if value == 0:
        return os.cpu_count() or 1
    return value
