"""Pure numpy implementations of the compiled kernels.

Each function performs the same floating-point operations in the same order
as its counterpart in ``_ckernels.pyx`` so both backends agree bit for bit.
"""

from __future__ import annotations

import numpy as np


def ap_sorted(scores: np.ndarray, labels: np.ndarray, n_ghost: int) -> float:
    pos = labels == 1
    npos = int(n_ghost) + int(pos.sum())
    if npos == 0:
        return float("nan")
    n = len(scores)
    if n == 0:
        return 0.0
    last = np.ones(n, dtype=bool)
    last[:-1] = scores[1:] != scores[:-1]
    tp = np.cumsum(pos)[last]
    fp = np.cumsum(~pos)[last]
    rec = tp / npos
    prec = tp / (tp + fp)
    env = np.maximum.accumulate(prec[::-1])[::-1]
    steps = np.diff(rec, prepend=0.0)
    # cumsum adds strictly left to right, unlike np.sum's pairwise reduction
    return float(np.cumsum(steps * env)[-1])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, 0, None], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, 1, None], b[None, :, 1])
    overlap = (iw > 0) & (ih > 0)
    inter = np.where(overlap, iw * ih, 0.0)
    # areas from corner differences, so a box against itself gives exactly 1
    area_a = (ax2 - a[:, 0]) * (ay2 - a[:, 1])
    area_b = (bx2 - b[:, 0]) * (by2 - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros(inter.shape)
    np.divide(inter, union, out=out, where=overlap)
    return out


def greedy_match(iou: np.ndarray, order: np.ndarray, thresh: float) -> tuple[np.ndarray, np.ndarray]:
    p, ng = iou.shape
    tp = np.zeros(p, dtype=np.int8)
    assigned = np.full(p, -1, dtype=np.int64)
    if ng == 0:
        return tp, assigned
    claimed = np.zeros(ng, dtype=bool)
    for k in order:
        cand = np.where(claimed, -1.0, iou[k])
        g = int(np.argmax(cand))
        if cand[g] >= thresh:
            claimed[g] = True
            tp[k] = 1
            assigned[k] = g
    return tp, assigned
