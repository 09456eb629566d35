"""Hot loops of the evaluator: AP sweep, IoU matrix, greedy matching.

The Cython build is used when it was compiled; otherwise the numpy fallback
is selected at import. :func:`use_backend` switches explicitly (benchmarks,
equivalence tests).
"""

from __future__ import annotations

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = ("cython", "python") if _ckernels is not None else ("python",)
_impl = _ckernels if _ckernels is not None else _pykernels
BACKEND = BACKENDS[0]


def use_backend(name: str) -> None:
    global _impl, BACKEND
    if name not in ("cython", "python"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "cython" and _ckernels is None:
        raise RuntimeError("compiled kernels are not available; rebuild the package")
    _impl = _ckernels if name == "cython" else _pykernels
    BACKEND = name


def ap_sorted(scores: np.ndarray, labels: np.ndarray, n_ghost: int) -> float:
    """AP of entries already sorted by descending score (labels 1 = positive)."""
    return _impl.ap_sorted(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int8),
        int(n_ghost),
    )


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``(n, 4)`` and ``(m, 4)`` xywh box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    return _impl.iou_matrix(a, b)


def greedy_match(iou: np.ndarray, order: np.ndarray, thresh: float) -> tuple[np.ndarray, np.ndarray]:
    """Visit predictions (rows) in ``order``; each claims the best unclaimed column."""
    return _impl.greedy_match(
        np.ascontiguousarray(iou, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        float(thresh),
    )
