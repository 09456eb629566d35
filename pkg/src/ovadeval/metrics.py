"""Average precision and the aggregate reports built on it.

AP is the all-point (precision-envelope) area under the precision/recall
curve. Entries sharing a score form a single operating point, which makes a
constant scorer's AP equal to the positive prevalence exactly.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from . import _kernels
from .geometry import detection_flags, match_for_attributes
from .types import DataError, Dataset, ImagePredictions, Split, TriState

SCHEMA_VERSION = 1

# Figures published with the benchmark release, used for side-by-side notes.
PUBLISHED_STATS = {
    "images": 2000,
    "instances": 14300,
    "positives": 122998,
    "negatives": 1278486,
    "unknowns": 172760,
    "instances_per_image": 7.2,
    "attributes_per_image": 700.7,
    "attributes_per_box": 96.8,
}
PUBLISHED_CHANCE = {"all": 8.6, "head": 36.0, "medium": 7.3, "tail": 0.6}
PUBLISHED_SPLIT_SIZES = {"first report": (16, 55, 46), "second report": (15, 53, 49)}


class UndefinedMetric(ValueError):
    """AP is undefined because the sample set contains no positives."""


class EvalMode(str, enum.Enum):
    DETECTION = "Detection"
    BOX_ORACLE = "BoxOracle"


@dataclass(frozen=True, eq=False)
class RankedSamples:
    scores: np.ndarray
    labels: np.ndarray  # 1 = positive, 0 = negative
    ghost_positives: int = 0

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels, dtype=np.int8).ravel()
        if scores.shape != labels.shape:
            raise ValueError("scores and labels differ in length")
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        if self.ghost_positives < 0:
            raise ValueError("ghost_positives must be >= 0")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, bool | int]], ghost_positives: int = 0) -> RankedSamples:
        scores = [float(s) for s, _ in pairs]
        labels = [1 if y else 0 for _, y in pairs]
        return cls(np.array(scores, dtype=np.float64), np.array(labels, dtype=np.int8), ghost_positives)

    @property
    def num_positives(self) -> int:
        return int((self.labels == 1).sum()) + self.ghost_positives


def _ap(scores: np.ndarray, labels: np.ndarray, ghosts: int) -> float:
    order = np.argsort(-scores, kind="stable")
    return _kernels.ap_sorted(scores[order], labels[order], ghosts)


def average_precision(s: RankedSamples) -> float:
    if s.num_positives == 0:
        raise UndefinedMetric("no positives: AP is undefined")
    return _ap(s.scores, s.labels, s.ghost_positives)


# --------------------------------------------------------------------------
# frequency splits


@dataclass(frozen=True)
class FrequencySplits:
    head: frozenset[int]
    medium: frozenset[int]
    tail: frozenset[int]
    t_high: float = math.nan
    t_low: float = math.nan

    def __post_init__(self) -> None:
        if self.head & self.medium or self.head & self.tail or self.medium & self.tail:
            raise ValueError("splits must be disjoint")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.head), len(self.medium), len(self.tail)

    def of(self, attr: int) -> str:
        if attr in self.head:
            return "head"
        if attr in self.tail:
            return "tail"
        return "medium"


def frequency_splits(freq: Sequence[float] | np.ndarray) -> FrequencySplits:
    """Head/medium/tail by ``median + std`` and ``median - std/10`` thresholds.

    ``std`` is the population standard deviation. Membership is decided with
    exact rational arithmetic, so values sitting on a threshold land in
    medium and scaling all counts never moves an attribute across a boundary
    through rounding.
    """
    f = np.asarray(freq, dtype=np.float64).ravel()
    if (f < 0).any() or not np.isfinite(f).all():
        raise ValueError("frequencies must be finite and non-negative")
    n = len(f)
    if n == 0:
        return FrequencySplits(frozenset(), frozenset(), frozenset())
    exact = [Fraction(float(v)) for v in f]
    ordered = sorted(exact)
    mid = n // 2
    med = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    mean = sum(exact, Fraction(0)) / n
    var = sum(((v - mean) ** 2 for v in exact), Fraction(0)) / n

    head, tail, medium = set(), set(), set()
    for i, v in enumerate(exact):
        above = v - med
        below = med - v
        if above > 0 and above * above > var:
            head.add(i)
        elif below > 0 and 100 * below * below > var:
            tail.add(i)
        else:
            medium.add(i)
    std = math.sqrt(float(var))
    return FrequencySplits(
        frozenset(head), frozenset(medium), frozenset(tail),
        t_high=float(med) + std, t_low=float(med) - std / 10,
    )


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Ovd80Result:
    ap50_novel: float | None
    ap50_base: float | None
    ap50_all: float | None
    per_category: tuple[float | None, ...] = ()


@dataclass(frozen=True, eq=False)
class EvalReport:
    per_attribute_ap: tuple[float | None, ...]
    map_all: float | None
    map_head: float | None
    map_medium: float | None
    map_tail: float | None
    splits: FrequencySplits
    mode: str = EvalMode.DETECTION.value
    positives: tuple[int, ...] = ()
    negatives: tuple[int, ...] = ()
    ovd80: Ovd80Result | None = None
    notes: tuple[str, ...] = ()

    @property
    def split_maps(self) -> dict[str, float | None]:
        return {"all": self.map_all, "head": self.map_head, "medium": self.map_medium, "tail": self.map_tail}

    def to_json(self, taxonomy=None, categories=None) -> dict[str, Any]:
        attrs = []
        for i, ap in enumerate(self.per_attribute_ap):
            rec: dict[str, Any] = {"id": i, "ap": ap, "split": self.splits.of(i)}
            if taxonomy is not None:
                rec["name"] = taxonomy.attributes[i].label
                rec["type"] = taxonomy.attributes[i].attr_type
            if self.positives:
                rec["positives"] = self.positives[i]
                rec["negatives"] = self.negatives[i]
            attrs.append(rec)
        out: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "map": self.split_maps,
            "split_sizes": dict(zip(("head", "medium", "tail"), self.splits.sizes)),
            "thresholds": {"t_high": _finite_or_none(self.splits.t_high), "t_low": _finite_or_none(self.splits.t_low)},
            "attributes": attrs,
            "notes": list(self.notes),
        }
        if taxonomy is not None:
            out["type_map"] = per_type_means(self, taxonomy)
        if self.ovd80 is not None:
            out["ovd80"] = {
                "ap50_novel": self.ovd80.ap50_novel,
                "ap50_base": self.ovd80.ap50_base,
                "ap50_all": self.ovd80.ap50_all,
            }
            if categories is not None and self.ovd80.per_category:
                out["ovd80"]["categories"] = [
                    {"id": c.id, "name": c.name, "split": c.split.value, "ap50": ap}
                    for c, ap in zip(categories, self.ovd80.per_category)
                ]
        return out


def _finite_or_none(v: float) -> float | None:
    return v if math.isfinite(v) else None


def _mean_defined(values: Sequence[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    # fixed left-to-right order for reproducibility
    return math.fsum(vals) / len(vals)


def per_type_means(report: EvalReport, taxonomy) -> dict[str, float | None]:
    out = {}
    for t in taxonomy.types:
        out[t] = _mean_defined([report.per_attribute_ap[a.id] for a in taxonomy.attributes if a.attr_type == t])
    return out


def _assemble(
    aps: Sequence[float | None],
    splits: FrequencySplits,
    labels: np.ndarray,
    mode: str,
    notes: Sequence[str] = (),
) -> EvalReport:
    n_attr = len(aps)
    pos = (labels == TriState.POSITIVE).sum(axis=0) if labels.size else np.zeros(n_attr, dtype=int)
    neg = (labels == TriState.NEGATIVE).sum(axis=0) if labels.size else np.zeros(n_attr, dtype=int)
    notes = list(notes)
    skipped = [i for i, ap in enumerate(aps) if ap is None]
    if skipped:
        notes.append(f"{len(skipped)} attribute(s) without positives skipped from mAP: ids {skipped}")
    return EvalReport(
        per_attribute_ap=tuple(aps),
        map_all=_mean_defined(aps),
        map_head=_mean_defined([aps[i] for i in sorted(splits.head)]),
        map_medium=_mean_defined([aps[i] for i in sorted(splits.medium)]),
        map_tail=_mean_defined([aps[i] for i in sorted(splits.tail)]),
        splits=splits,
        mode=mode,
        positives=tuple(int(v) for v in pos),
        negatives=tuple(int(v) for v in neg),
        notes=tuple(notes),
    )


@dataclass(frozen=True, eq=False)
class InstanceTable:
    """Per ground-truth instance: its labels, its matched scores, and whether it matched."""

    labels: np.ndarray  # (N, A) int8
    scores: np.ndarray  # (N, A) float64, zeros where unmatched
    matched: np.ndarray  # (N,) bool
    image_index: np.ndarray  # (N,) owning image position

    def select_images(self, image_positions: np.ndarray) -> InstanceTable:
        keep = np.isin(self.image_index, image_positions)
        return InstanceTable(self.labels[keep], self.scores[keep], self.matched[keep], self.image_index[keep])


def build_instance_table(
    d: Dataset,
    preds: Mapping[Any, ImagePredictions | np.ndarray],
    mode: EvalMode | str,
    iou_thresh: float = 0.5,
) -> InstanceTable:
    mode = EvalMode(mode)
    n_attr = len(d.taxonomy)
    labels = d.label_matrix
    n = len(labels)
    scores = np.zeros((n, n_attr), dtype=np.float64)
    matched = np.zeros(n, dtype=bool)
    image_index = np.empty(n, dtype=np.int64)
    row = 0
    for pos, im in enumerate(d.images):
        k = len(im.instances)
        image_index[row:row + k] = pos
        p = preds.get(im.image_id)
        if mode is EvalMode.BOX_ORACLE:
            if isinstance(p, ImagePredictions):
                raise DataError("box-oracle evaluation needs per-instance score vectors, got detections")
            if k and p is None:
                raise DataError(f"image {im.image_id!r}: no box-oracle scores")
            if k:
                p = np.asarray(p, dtype=np.float64)
                if p.shape != (k, n_attr):
                    raise DataError(
                        f"image {im.image_id!r}: box-oracle scores have shape {p.shape}, expected {(k, n_attr)}"
                    )
                scores[row:row + k] = p
                matched[row:row + k] = True
        else:
            if p is not None and not isinstance(p, ImagePredictions):
                raise DataError("detection evaluation needs box predictions, got box-oracle scores")
            if k and p is not None and len(p):
                if p.attribute_scores.shape[1] != n_attr:
                    raise DataError(f"image {im.image_id!r}: attribute score vectors must have length {n_attr}")
                m = match_for_attributes(list(im.instances), p, iou_thresh)
                ok = m.matched
                scores[row:row + k][ok] = p.attribute_scores[m.pred_index[ok]]
                matched[row:row + k] = ok
        row += k
    return InstanceTable(labels, scores, matched, image_index)


def attribute_aps(table: InstanceTable, workers: int = 1) -> list[float | None]:
    """AP per attribute; unknown labels excluded, unmatched positives counted as misses."""
    labels_t = np.ascontiguousarray(table.labels.T)
    scores_t = np.ascontiguousarray(table.scores.T)
    matched = table.matched

    def one(a: int) -> float | None:
        lab = labels_t[a]
        use = matched & (lab != TriState.UNKNOWN)
        ghosts = int(((lab == TriState.POSITIVE) & ~matched).sum())
        lab_used = lab[use]
        if ghosts == 0 and not (lab_used == TriState.POSITIVE).any():
            return None
        return _ap(scores_t[a][use], lab_used, ghosts)

    n_attr = labels_t.shape[0]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(n_attr)))
    return [one(a) for a in range(n_attr)]


def attribute_eval(
    d: Dataset,
    preds: Mapping[Any, ImagePredictions | np.ndarray],
    mode: EvalMode | str = EvalMode.DETECTION,
    iou_thresh: float = 0.5,
    splits: FrequencySplits | None = None,
    workers: int = 1,
) -> EvalReport:
    """Attribute AP/mAP in detection or box-oracle mode.

    ``preds`` maps image id to :class:`ImagePredictions` (detection) or to an
    ``(instances, attributes)`` score array aligned with the image's ground
    truths (box oracle). Images absent from ``preds`` have no detections.
    """
    mode = EvalMode(mode)
    if splits is None:
        splits = frequency_splits(d.positive_counts())
    table = build_instance_table(d, preds, mode, iou_thresh)
    aps = attribute_aps(table, workers)
    return _assemble(aps, splits, table.labels, mode.value)


def chance_report(d: Dataset, splits: FrequencySplits | None = None) -> EvalReport:
    """AP of a constant scorer: each attribute's positive prevalence."""
    if splits is None:
        splits = frequency_splits(d.positive_counts())
    labels = d.label_matrix
    pos = (labels == TriState.POSITIVE).sum(axis=0)
    neg = (labels == TriState.NEGATIVE).sum(axis=0)
    aps = [None if p == 0 else p / (p + q) for p, q in zip(pos.tolist(), neg.tolist())]
    return _assemble(aps, splits, labels, "Chance")


def ovd80_eval(d: Dataset, preds: Mapping[Any, ImagePredictions], iou_thresh: float = 0.5) -> Ovd80Result:
    """AP at the IoU threshold per object category, every box scored for every class.

    Categories without ground truth are left out of the means.
    """
    cats = d.categories
    n_cat = len(cats)
    cat_pos = d.category_index
    all_scores, all_tp = [], []
    npos = np.zeros(n_cat, dtype=np.int64)
    for im in d.images:
        gt_cols = np.array([cat_pos[inst.category] for inst in im.instances], dtype=np.int64)
        np.add.at(npos, gt_cols, 1)
        p = preds.get(im.image_id)
        if p is None or not len(p):
            continue
        if not isinstance(p, ImagePredictions):
            raise DataError("OVD-80 evaluation needs box predictions")
        if p.object_scores.shape[1] != n_cat:
            raise DataError(
                f"image {im.image_id!r}: object score vectors have length {p.object_scores.shape[1]}, expected {n_cat}"
            )
        tp = np.zeros((len(p), n_cat), dtype=np.int8)
        if len(gt_cols):
            gt_boxes = np.array([inst.box.as_list() for inst in im.instances])
            ious = _kernels.iou_matrix(p.boxes, gt_boxes)
            for c in np.unique(gt_cols):
                tp[:, c] = detection_flags(ious[:, gt_cols == c], p.object_scores[:, c], iou_thresh)
        all_scores.append(p.object_scores)
        all_tp.append(tp)

    if all_scores:
        scores = np.ascontiguousarray(np.concatenate(all_scores).T)
        tps = np.ascontiguousarray(np.concatenate(all_tp).T)
    else:
        scores = np.zeros((n_cat, 0))
        tps = np.zeros((n_cat, 0), dtype=np.int8)

    per_cat: list[float | None] = []
    for c in range(n_cat):
        if npos[c] == 0:
            per_cat.append(None)
            continue
        # unclaimed ground truths can never be retrieved: count them as misses
        ghosts = int(npos[c] - tps[c].sum())
        per_cat.append(_ap(scores[c], tps[c], ghosts))

    def mean_of(split: Split | None) -> float | None:
        return _mean_defined([ap for ap, cat in zip(per_cat, cats) if split is None or cat.split is split])

    return Ovd80Result(mean_of(Split.NOVEL), mean_of(Split.BASE), mean_of(None), tuple(per_cat))


# --------------------------------------------------------------------------
# dataset statistics


@dataclass(frozen=True)
class DatasetStats:
    images: int
    instances: int
    positives: int
    negatives: int
    unknowns: int
    instances_per_image: float | None
    attributes_per_image: float | None
    positives_per_image: float | None
    negatives_per_image: float | None
    attributes_per_box: float | None
    positives_per_box: float | None
    negatives_per_box: float | None

    @property
    def annotations(self) -> int:
        """Labelled (positive or negative) attribute annotations."""
        return self.positives + self.negatives

    def comparison(self) -> list[tuple[str, float | None, float, bool]]:
        """``(name, computed, published, matches)`` rows.

        Counts must match exactly; means match when they agree at the
        published one-decimal precision.
        """
        rows = []
        for key, ref in PUBLISHED_STATS.items():
            val = getattr(self, key)
            if isinstance(ref, int):
                ok = val == ref
            else:
                ok = val is not None and round(val, 1) == ref
            rows.append((key, val, ref, ok))
        return rows

    def notes(self) -> list[str]:
        out = []
        for key, val, ref, ok in self.comparison():
            if not ok and val is not None and self.images:
                out.append(f"FLAG {key}: computed {val:.4g} vs published {ref}")
        return out

    def to_json(self) -> dict[str, Any]:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["annotations"] = self.annotations
        out["schema_version"] = SCHEMA_VERSION
        out["published"] = dict(PUBLISHED_STATS)
        out["notes"] = self.notes()
        return out


def dataset_stats(d: Dataset) -> DatasetStats:
    labels = d.label_matrix
    n_img = len(d.images)
    n_inst = len(labels)
    pos = int((labels == TriState.POSITIVE).sum())
    neg = int((labels == TriState.NEGATIVE).sum())
    unk = int((labels == TriState.UNKNOWN).sum())

    def per(x: int, n: int) -> float | None:
        return x / n if n else None

    return DatasetStats(
        images=n_img,
        instances=n_inst,
        positives=pos,
        negatives=neg,
        unknowns=unk,
        instances_per_image=per(n_inst, n_img),
        attributes_per_image=per(pos + neg, n_img),
        positives_per_image=per(pos, n_img),
        negatives_per_image=per(neg, n_img),
        attributes_per_box=per(pos + neg, n_inst),
        positives_per_box=per(pos, n_inst),
        negatives_per_box=per(neg, n_inst),
    )


# --------------------------------------------------------------------------
# subset stability


@dataclass(frozen=True)
class StabilityResult:
    fraction: float
    subset_size: int
    num_subsets: int
    std: dict[str, float | None] = field(default_factory=dict)


def subset_stability(
    d: Dataset,
    preds: Mapping[Any, ImagePredictions | np.ndarray],
    fractions: Sequence[float],
    trials: int = 6,
    seed: int = 0,
    mode: EvalMode | str = EvalMode.BOX_ORACLE,
    max_subsets: int = 6,
    iou_thresh: float = 0.5,
) -> list[StabilityResult]:
    """Spread of mAP across disjoint image subsets of each size.

    Per trial the images are shuffled (numpy PCG64 seeded with ``seed``) and
    cut into up to ``max_subsets`` disjoint subsets of
    ``floor(fraction * n_images)`` images; the sample standard deviation of
    each split's mAP over those subsets is averaged across trials. Head /
    medium / tail membership is fixed from the full dataset.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_img = len(d.images)
    plans = []
    for frac in fractions:
        if not 0 < frac <= 1 / 3 + 1e-12:
            raise ValueError(f"fraction {frac} outside (0, 1/3]: cannot form three disjoint subsets")
        size = max(1, int(math.floor(frac * n_img + 1e-9)))
        k = min(max_subsets, n_img // size)
        if k < 3:
            raise ValueError(f"fraction {frac} of {n_img} images gives fewer than three disjoint subsets")
        plans.append((frac, size, k))

    splits = frequency_splits(d.positive_counts())
    table = build_instance_table(d, preds, mode, iou_thresh)
    rng = np.random.Generator(np.random.PCG64(seed))
    names = ("all", "head", "medium", "tail")
    results = []
    for frac, size, k in plans:
        per_trial: dict[str, list[float]] = {s: [] for s in names}
        for _ in range(trials):
            perm = rng.permutation(n_img)
            maps: dict[str, list[float]] = {s: [] for s in names}
            for j in range(k):
                sub = table.select_images(perm[j * size:(j + 1) * size])
                rep = _assemble(attribute_aps(sub), splits, sub.labels, EvalMode(mode).value)
                for s, v in rep.split_maps.items():
                    if v is not None:
                        maps[s].append(v)
            for s in names:
                if len(maps[s]) >= 2:
                    per_trial[s].append(float(np.std(maps[s], ddof=1)))
        std = {s: (math.fsum(v) / len(v) if v else None) for s, v in per_trial.items()}
        results.append(StabilityResult(frac, size, k, std))
    return results
