"""Backend selection for the per-pixel kernels.

Two interchangeable implementations exist: compiled kernels (numba) and a
vectorized pure-numpy fallback. Both follow the same arithmetic, operation
for operation, so masks and serialized state are bit-identical across
backends; tests enforce that.

Selection order: explicit argument > COGBG_BACKEND env var > numba when
importable > numpy.
"""

from __future__ import annotations

import os

from .errors import ConfigError

try:
    import numba  # noqa: F401
    _HAS_NUMBA = True
except ImportError:
    _HAS_NUMBA = False

_ENV_VAR = "COGBG_BACKEND"
_VALID = ("numba", "numpy")


def numba_available() -> bool:
    return _HAS_NUMBA


def resolve_backend(name: str = "") -> str:
    """Return 'numba' or 'numpy' for a requested backend name.

    Empty string means "pick for me": the env var wins if set, otherwise
    numba when available.
    """
    if not name:
        name = os.environ.get(_ENV_VAR, "").strip().lower()
    if not name:
        return "numba" if _HAS_NUMBA else "numpy"
    if name not in _VALID:
        raise ConfigError(
            f"unknown backend {name!r} (expected one of {_VALID})")
    if name == "numba" and not _HAS_NUMBA:
        raise ConfigError("numba backend requested but numba is not installed")
    return name


def set_workers(workers: int) -> int:
    """Pin the numba thread pool size; returns the effective count.

    Kernels write per-pixel results independently, so the worker count never
    changes output. 0 means "leave the default". Requests above the pool
    size are clamped.
    """
    if workers <= 0 or not _HAS_NUMBA:
        return 0
    import numba as nb

    limit = nb.config.NUMBA_NUM_THREADS
    effective = min(workers, limit)
    nb.set_num_threads(effective)
    return effective
