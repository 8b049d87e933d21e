"""Kernel backend selection.

The hot kernels exist twice: a Cython extension (``_kernels``) and a
pure-numpy fallback (``kernels_py``).  The compiled one is picked at
import when available; ``NEXTPP_BACKEND=python|compiled`` forces a
choice, and :func:`use` swaps at runtime (used by the benchmark).
"""

import os

from . import kernels_py

try:
    from . import _kernels
except ImportError:
    _kernels = None

kernels = kernels_py if _kernels is None else _kernels

_forced = os.environ.get("NEXTPP_BACKEND")
if _forced == "python":
    kernels = kernels_py
elif _forced == "compiled":
    if _kernels is None:
        raise ImportError("NEXTPP_BACKEND=compiled but the extension is not built")
    kernels = _kernels
elif _forced:
    raise ImportError(f"unknown NEXTPP_BACKEND value: {_forced!r}")


def available():
    names = ["python"]
    if _kernels is not None:
        names.append("compiled")
    return names


def name():
    return kernels.NAME


def use(which):
    """Switch the active kernel implementation ('python' or 'compiled')."""
    global kernels
    if which == "python":
        kernels = kernels_py
    elif which == "compiled":
        if _kernels is None:
            raise ValueError("compiled backend is not built")
        kernels = _kernels
    else:
        raise ValueError(f"unknown backend: {which!r}")
    return kernels
