"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` module. Set ``KSTM_PURE_PYTHON=1`` to force the
fallback.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("KSTM_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"


def cooccurrence_matrix(ids, n_nodes: int, window: int, backend=None) -> np.ndarray:
    """Symmetric co-occurrence counts for a sequence of node indices."""
    impl = _pick(backend)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    return impl.cooccurrence_matrix(ids, int(n_nodes), int(window))


def textrank_iterate(weights, damping: float, tol: float, max_iter: int, backend=None):
    """Run the weighted TextRank recurrence from all-ones.

    Returns ``(scores, iterations, last_l1_change)``.
    """
    impl = _pick(backend)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return impl.textrank_iterate(weights, float(damping), float(tol), int(max_iter))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")
