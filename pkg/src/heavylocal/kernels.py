"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``HEAVYLOCAL_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.  Both produce identical
results.
"""
import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


class _Backend:
    def __init__(self, mod):
        self._mod = mod
        self.name = mod.NAME

    def panjer_geometric(self, g, p):
        return np.asarray(self._mod.panjer_geometric(np.ascontiguousarray(g, dtype=float), float(p)))

    def ladder_backward(self, f, hm, hp):
        hp = np.ascontiguousarray(hp, dtype=float)
        self._mod.ladder_backward(np.ascontiguousarray(f, dtype=float), np.ascontiguousarray(hm, dtype=float), hp)
        return hp

    def walk_sup_chunk(self, inc, S, M, alive, barrier):
        """Update ``S``, ``M`` and the boolean ``alive`` array in place."""
        inc = np.ascontiguousarray(inc, dtype=float)
        if self._mod is _kernels_py:
            self._mod.walk_sup_chunk(inc, S, M, alive, float(barrier))
        else:
            self._mod.walk_sup_chunk(inc, S, M, alive.view(np.uint8), float(barrier))

    def first_exit_chunk(self, inc, S, state, lower, upper):
        """Update ``S`` and the uint8 ``state`` array (0 running, 1 up, 2 down) in place."""
        inc = np.ascontiguousarray(inc, dtype=float)
        self._mod.first_exit_chunk(inc, S, state, float(lower), float(upper))


PURE = _Backend(_kernels_py)
COMPILED = _Backend(_compiled) if _compiled is not None else None


def backend(name=None):
    """Return the active backend, or a named one (``'python'`` / ``'cython'``)."""
    if name == "python":
        return PURE
    if name == "cython":
        if COMPILED is None:
            raise ImportError("compiled kernels are not built")
        return COMPILED
    if os.environ.get("HEAVYLOCAL_PURE_PYTHON", "") not in ("", "0") or COMPILED is None:
        return PURE
    return COMPILED
