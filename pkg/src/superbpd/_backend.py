"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy kernels.
``SUPERBPD_BACKEND=python`` (or ``compiled``) forces a choice at import time.
"""
import os
from contextlib import contextmanager

from . import _pykernels

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _pykernels}
if _core is not None:
    BACKENDS["compiled"] = _core


def _initial():
    name = os.environ.get("SUPERBPD_BACKEND", "").strip().lower()
    if name:
        if name not in BACKENDS:
            raise ImportError(f"SUPERBPD_BACKEND={name!r} is not available; have {sorted(BACKENDS)}")
        return name
    return "compiled" if _core is not None else "python"


_active = _initial()


def kernels():
    return BACKENDS[_active]


def backend_name():
    return _active


def available_backends():
    return sorted(BACKENDS)


def set_backend(name):
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}")
    _active = name


@contextmanager
def use_backend(name):
    """Temporarily switch kernels, e.g. to compare both on one input."""
    previous = _active
    set_backend(name)
    try:
        yield BACKENDS[name]
    finally:
        set_backend(previous)


def default_threads():
    """Thread count for parallel kernels, from ``SUPERBPD_NUM_THREADS``."""
    try:
        return max(1, int(os.environ.get("SUPERBPD_NUM_THREADS", "1")))
    except ValueError:
        return 1
