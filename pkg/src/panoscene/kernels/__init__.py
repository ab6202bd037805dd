"""Hot per-pixel kernels with two interchangeable backends.

``numba``: explicit loops compiled with ``@njit`` (default when numba imports).
``numpy``: vectorized pure-numpy implementations.

The backend is chosen from ``PANOSCENE_BACKEND`` at import time and can be
switched at runtime with :func:`set_backend` / :func:`use_backend`.  Both
backends share signatures and are tested against each other.

``PANOSCENE_NUM_THREADS`` caps numba's thread pool.
"""

from __future__ import annotations

import contextlib
import os

from . import numpy_impl

# numba probes an outdated system TBB and warns; the workqueue layer is enough
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    from . import numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

KERNELS = (
    "sample_bilinear",
    "cast_floorplan",
    "cast_boxes",
    "march_heightfield",
    "accumulate_normal",
    "splat_nearest",
)

_BACKENDS = {"numpy": numpy_impl}
if numba_impl is not None:
    _BACKENDS["numba"] = numba_impl

_active = None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def get_backend() -> str:
    return _active


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _default_backend() -> str:
    requested = os.environ.get("PANOSCENE_BACKEND", "").strip().lower()
    if requested:
        return requested
    return "numba" if "numba" in _BACKENDS else "numpy"


def _apply_thread_limit() -> None:
    raw = os.environ.get("PANOSCENE_NUM_THREADS")
    if not raw or numba_impl is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS)))


def _dispatch(name):
    def call(*args, **kwargs):
        return getattr(_BACKENDS[_active], name)(*args, **kwargs)

    call.__name__ = name
    call.__doc__ = getattr(numpy_impl, name).__doc__
    return call


set_backend(_default_backend())
_apply_thread_limit()

sample_bilinear = _dispatch("sample_bilinear")
cast_floorplan = _dispatch("cast_floorplan")
cast_boxes = _dispatch("cast_boxes")
march_heightfield = _dispatch("march_heightfield")
accumulate_normal = _dispatch("accumulate_normal")
splat_nearest = _dispatch("splat_nearest")
