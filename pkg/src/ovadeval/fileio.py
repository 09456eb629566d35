"""Prediction files, run configuration and report rendering."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .annotation import InfeasiblePolicy
from .metrics import DatasetStats, EvalReport
from .types import DataError, Dataset, ImagePredictions, _read_json


@dataclass(frozen=True)
class RunConfig:
    iou_threshold: float = 0.5
    tau: float = 50.0
    ap_mode: str = "all-point"
    infeasible_policy: str = InfeasiblePolicy.NEGATIVE.value
    seed: int = 0
    worker_count: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou threshold must be in (0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.worker_count < 1:
            raise ValueError("worker count must be >= 1")


def parse_workers(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise ValueError("workers must be >= 1")
    return n


# --------------------------------------------------------------------------
# prediction files


def _scores(values: Any, length: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (length,):
        raise DataError(f"{what}: expected {length} scores, got shape {arr.shape}")
    return arr


def load_predictions(source: str | Path | list, num_categories: int, num_attributes: int) -> dict[Any, ImagePredictions]:
    """Detection predictions: ``[{image_id, predictions: [{bbox, object_scores, attribute_scores}]}]``."""
    raw = _read_json(source)
    if not isinstance(raw, list):
        raise DataError("prediction file must be a JSON list of per-image records")
    out: dict[Any, ImagePredictions] = {}
    for rec in raw:
        if "instance_index" in rec:
            raise DataError("this looks like a box-oracle score file; use eval-box")
        try:
            image_id = rec["image_id"]
            preds = rec["predictions"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed prediction record ({exc})") from exc
        if image_id in out:
            raise DataError(f"duplicate prediction record for image {image_id!r}")
        if not preds:
            out[image_id] = ImagePredictions.empty(num_categories, num_attributes)
            continue
        try:
            boxes = np.array([p["bbox"] for p in preds], dtype=np.float64).reshape(len(preds), 4)
            obj = np.array([p["object_scores"] for p in preds], dtype=np.float64)
            att = np.array([p["attribute_scores"] for p in preds], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"image {image_id!r}: malformed predictions ({exc})") from exc
        if obj.shape != (len(preds), num_categories):
            raise DataError(f"image {image_id!r}: object_scores must have {num_categories} entries")
        if att.shape != (len(preds), num_attributes):
            raise DataError(f"image {image_id!r}: attribute_scores must have {num_attributes} entries")
        if not (np.isfinite(boxes).all() and np.isfinite(obj).all() and np.isfinite(att).all()):
            raise DataError(f"image {image_id!r}: non-finite values in predictions")
        if (boxes[:, 2] <= 0).any() or (boxes[:, 3] <= 0).any():
            raise DataError(f"image {image_id!r}: predicted box with non-positive size")
        out[image_id] = ImagePredictions(boxes, obj, att)
    return out


def load_box_oracle(source: str | Path | list, dataset: Dataset) -> dict[Any, np.ndarray]:
    """Box-oracle scores: ``[{image_id, instance_index, attribute_scores}]``, one per ground truth."""
    raw = _read_json(source)
    if not isinstance(raw, list):
        raise DataError("box-oracle file must be a JSON list")
    if raw and "predictions" in raw[0]:
        raise DataError("this looks like a detection prediction file; use eval-ovad")
    n_attr = len(dataset.taxonomy)
    try:
        scores = np.array([r["attribute_scores"] for r in raw], dtype=np.float64)
        keys = [(r["image_id"], int(r["instance_index"])) for r in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed box-oracle record ({exc})") from exc
    if raw and scores.shape != (len(raw), n_attr):
        raise DataError(f"attribute_scores must all have {n_attr} entries")
    if not np.isfinite(scores).all():
        raise DataError("non-finite box-oracle scores")
    where = {k: i for i, k in enumerate(keys)}
    if len(where) != len(keys):
        raise DataError("duplicate (image_id, instance_index) in box-oracle file")
    out: dict[Any, np.ndarray] = {}
    missing = 0
    for im in dataset.images:
        rows = []
        for j in range(len(im.instances)):
            r = where.pop((im.image_id, j), None)
            if r is None:
                missing += 1
            rows.append(r)
        if missing:
            continue
        out[im.image_id] = scores[rows] if rows else np.zeros((0, n_attr))
    if missing:
        raise DataError(f"{missing} ground-truth instance(s) have no box-oracle scores")
    if where:
        raise DataError(f"{len(where)} box-oracle record(s) do not match any ground-truth instance")
    return out


def predictions_to_json(preds: Mapping[Any, ImagePredictions]) -> list[dict]:
    return [
        {
            "image_id": image_id,
            "predictions": [
                {
                    "bbox": [float(v) for v in p.boxes[i]],
                    "object_scores": [float(v) for v in p.object_scores[i]],
                    "attribute_scores": [float(v) for v in p.attribute_scores[i]],
                }
                for i in range(len(p))
            ],
        }
        for image_id, p in preds.items()
    ]


def box_oracle_to_json(scores: Mapping[Any, np.ndarray]) -> list[dict]:
    return [
        {"image_id": image_id, "instance_index": j, "attribute_scores": [float(v) for v in row]}
        for image_id, arr in scores.items()
        for j, row in enumerate(arr)
    ]


def write_json(obj: Any, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# rendering


def pct(v: float | None) -> str:
    return "-" if v is None else f"{100 * v:.1f}"


def render_report(report: EvalReport, title: str | None = None) -> str:
    """Table in the order All, Head, Medium, Tail | Novel, Base, All."""
    cols = ["All", "Head", "Medium", "Tail"]
    vals = [pct(v) for v in report.split_maps.values()]
    if report.ovd80 is not None:
        cols += ["| Novel", "Base", "All"]
        o = report.ovd80
        vals += ["| " + pct(o.ap50_novel), pct(o.ap50_base), pct(o.ap50_all)]
    widths = [max(len(c), len(v)) + 2 for c, v in zip(cols, vals)]
    label = title or report.mode
    left = max(len(label), 10)
    header = " " * left + "".join(c.rjust(w) for c, w in zip(cols, widths))
    row = label.ljust(left) + "".join(v.rjust(w) for v, w in zip(vals, widths))
    h, m, t = report.splits.sizes
    lines = []
    if report.ovd80 is not None:
        span = sum(widths[:4])
        lines.append(" " * left + "OVAD mAP".center(span) + "  Generalized OVD-80 AP50".center(sum(widths[4:])))
    lines += [header, row, f"splits: head={h} medium={m} tail={t}"]
    lines += [f"note: {n}" for n in report.notes]
    return "\n".join(lines)


def render_stats(stats: DatasetStats) -> str:
    lines = [f"{'quantity':<22}{'computed':>14}{'published':>14}"]
    for key, val, ref, ok in stats.comparison():
        shown = "-" if val is None else (f"{val:,}" if isinstance(val, int) else f"{val:.2f}")
        lines.append(f"{key:<22}{shown:>14}{ref:>14,}{'' if ok else '  FLAG'}")
    extra = ["positives_per_box", "negatives_per_box", "positives_per_image", "negatives_per_image"]
    for key in extra:
        val = getattr(stats, key)
        lines.append(f"{key:<22}{'-' if val is None else f'{val:.2f}':>14}")
    lines.append(f"{'annotations':<22}{stats.annotations:>14,}")
    lines += [f"note: {n}" for n in stats.notes()]
    return "\n".join(lines)


def report_csv(report: EvalReport, taxonomy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "name", "type", "split", "positives", "negatives", "ap"])
    for i, ap in enumerate(report.per_attribute_ap):
        a = taxonomy.attributes[i]
        w.writerow([
            i, a.label, a.attr_type, report.splits.of(i),
            report.positives[i] if report.positives else "",
            report.negatives[i] if report.negatives else "",
            "" if ap is None else repr(ap),
        ])
    return buf.getvalue()


def config_json(config: RunConfig) -> dict:
    return asdict(config)
