"""Box overlap and the two matching protocols used by the evaluator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .types import AnnotatedInstance, BoundingBox, ImagePredictions


@dataclass(frozen=True)
class MatchResult:
    """For each ground truth, the matched prediction index (``-1`` if none) and its IoU."""

    pred_index: np.ndarray
    iou: np.ndarray

    def __len__(self) -> int:
        return len(self.pred_index)

    @property
    def matched(self) -> np.ndarray:
        return self.pred_index >= 0

    def __getitem__(self, i: int) -> tuple[int, float] | None:
        j = int(self.pred_index[i])
        return None if j < 0 else (j, float(self.iou[i]))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    return float(_kernels.iou_matrix(np.array([a.as_list()]), np.array([b.as_list()]))[0, 0])


def _boxes(items: Sequence[AnnotatedInstance] | np.ndarray) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items.reshape(-1, 4)
    return np.array([inst.box.as_list() for inst in items], dtype=np.float64).reshape(-1, 4)


def match_for_attributes(
    gts: Sequence[AnnotatedInstance] | np.ndarray,
    preds: ImagePredictions | np.ndarray,
    iou_thresh: float = 0.5,
) -> MatchResult:
    """Per ground truth, pick the max-IoU prediction regardless of class.

    Ground truths are matched independently, so one prediction may serve
    several of them. Ties go to the lowest prediction index.
    """
    if not 0 < iou_thresh <= 1:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    gt_boxes = _boxes(gts)
    pred_boxes = preds.boxes if isinstance(preds, ImagePredictions) else np.asarray(preds).reshape(-1, 4)
    n = len(gt_boxes)
    if n == 0 or len(pred_boxes) == 0:
        return MatchResult(np.full(n, -1, dtype=np.int64), np.zeros(n))
    ious = _kernels.iou_matrix(gt_boxes, pred_boxes)
    best = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best]
    ok = best_iou >= iou_thresh
    return MatchResult(np.where(ok, best, -1).astype(np.int64), np.where(ok, best_iou, 0.0))


def detection_flags(ious: np.ndarray, pred_scores: np.ndarray, iou_thresh: float = 0.5) -> np.ndarray:
    """Greedy TP/FP flags from a ``(predictions, ground truths)`` IoU matrix.

    Predictions are visited by descending score, ties in input order; each
    claims the unclaimed ground truth of highest IoU at or above the
    threshold (ties: lowest ground-truth index). Returns int8 flags in input
    order.
    """
    order = np.argsort(-np.asarray(pred_scores, dtype=np.float64), kind="stable")
    tp, _ = _kernels.greedy_match(ious, order, iou_thresh)
    return tp


def match_for_detection(
    gts: Sequence[AnnotatedInstance],
    preds: ImagePredictions,
    category_id: int,
    score_column: int,
    iou_thresh: float = 0.5,
) -> np.ndarray:
    """TP/FP flag per prediction for one category of one image.

    Only ground truths of ``category_id`` can be claimed; predictions are
    ranked by their score in column ``score_column`` of ``object_scores``.
    """
    same = [g for g in gts if g.category == category_id]
    ious = _kernels.iou_matrix(preds.boxes, _boxes(same))
    return detection_flags(ious, preds.object_scores[:, score_column], iou_thresh)
