"""Benchmark data model: taxonomy, categories, annotated images and predictions.

Boxes are ``(x, y, w, h)`` with a top-left origin. Attribute ids follow the
order of the taxonomy file and index every label and score vector.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUM_ATTRIBUTES = 117
NUM_TYPES = 19
NUM_CATEGORIES = 80
NUM_BASE = 48
NUM_NOVEL = 32
CATEGORY_GROUPS = ("human", "animal", "food", "object")


class DataError(ValueError):
    """Input data is malformed or violates a benchmark invariant."""


class TriState(enum.IntEnum):
    POSITIVE = 1
    NEGATIVE = 0
    UNKNOWN = -1


class Exclusivity(str, enum.Enum):
    EXCLUSIVE = "Exclusive"
    COLOR_MULTI_SELECT = "ColorMultiSelect"
    ANTONYM_PAIRS = "AntonymPairs"


class Split(str, enum.Enum):
    BASE = "Base"
    NOVEL = "Novel"


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @classmethod
    def from_list(cls, bbox: Sequence[float]) -> BoundingBox:
        if len(bbox) != 4:
            raise DataError(f"bbox must have 4 numbers, got {len(bbox)}")
        return cls(*(float(v) for v in bbox))

    def is_valid(self) -> bool:
        finite = all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h))
        return finite and self.w > 0 and self.h > 0

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def clamped(self, width: float, height: float) -> BoundingBox:
        x0 = min(max(self.x, 0.0), width)
        y0 = min(max(self.y, 0.0), height)
        x1 = min(max(self.x + self.w, 0.0), width)
        y1 = min(max(self.y + self.h, 0.0), height)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def within(self, width: float, height: float) -> bool:
        return (
            self.x >= 0 and self.y >= 0
            and self.x + self.w <= width and self.y + self.h <= height
        )


@dataclass(frozen=True)
class AttributeDef:
    id: int
    name: str
    synonyms: tuple[str, ...]
    attr_type: str
    exclusivity: Exclusivity
    antonym_of: int | None = None
    # Human-specific variants of a type ("hair" color, "clothes" pattern).
    facet: str | None = None
    # Only set on color-quantity attributes that cap the number of colors.
    max_colors: int | None = None

    @property
    def slot(self) -> str:
        """Name of the annotation slot, e.g. ``"hair color"``."""
        return f"{self.facet} {self.attr_type}" if self.facet else self.attr_type

    @property
    def label(self) -> str:
        return f"{self.slot}:{self.name}"


@dataclass(frozen=True)
class AttributeTaxonomy:
    attributes: tuple[AttributeDef, ...]
    types: tuple[str, ...]
    feasibility: dict[str, frozenset[str]]

    def __len__(self) -> int:
        return len(self.attributes)

    @cached_property
    def slots(self) -> dict[str, tuple[int, ...]]:
        """Annotation slot name -> member attribute ids, in taxonomy order."""
        out: dict[str, list[int]] = {}
        for a in self.attributes:
            out.setdefault(a.slot, []).append(a.id)
        return {k: tuple(v) for k, v in out.items()}

    def slot_exclusivity(self, slot: str) -> Exclusivity:
        return self.attributes[self.slots[slot][0]].exclusivity

    def find(self, slot: str, name: str) -> int:
        """Resolve an attribute by name or synonym within one slot."""
        if slot not in self.slots:
            raise KeyError(f"unknown attribute type {slot!r}")
        for i in self.slots[slot]:
            a = self.attributes[i]
            if name == a.name or name in a.synonyms:
                return i
        raise KeyError(f"no attribute {name!r} in type {slot!r}")

    def to_json(self) -> dict[str, Any]:
        attrs = []
        for a in self.attributes:
            rec: dict[str, Any] = {
                "id": a.id,
                "name": a.name,
                "synonyms": list(a.synonyms),
                "type": a.attr_type,
                "exclusivity": a.exclusivity.value,
            }
            if a.facet is not None:
                rec["facet"] = a.facet
            if a.antonym_of is not None:
                rec["antonym_of"] = a.antonym_of
            if a.max_colors is not None:
                rec["max_colors"] = a.max_colors
            attrs.append(rec)
        return {
            "types": list(self.types),
            "attributes": attrs,
            "feasibility": {g: sorted(v) for g, v in self.feasibility.items()},
        }


@dataclass(frozen=True)
class ObjectCategory:
    id: int
    name: str
    synonyms: tuple[str, ...]
    split: Split
    group: str


@dataclass(frozen=True, eq=False)
class AnnotatedInstance:
    box: BoundingBox
    category: int
    # int8 vector of TriState values, one per attribute.
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class AnnotatedImage:
    image_id: int | str
    width: float
    height: float
    instances: tuple[AnnotatedInstance, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    taxonomy: AttributeTaxonomy
    categories: tuple[ObjectCategory, ...]
    images: tuple[AnnotatedImage, ...]

    @property
    def num_instances(self) -> int:
        return sum(len(im.instances) for im in self.images)

    @cached_property
    def category_index(self) -> dict[int, int]:
        """Category id -> position in ``categories`` (and in score vectors)."""
        return {c.id: i for i, c in enumerate(self.categories)}

    @cached_property
    def label_matrix(self) -> np.ndarray:
        """All instance labels stacked in image order, shape ``(N, A)``."""
        rows = [inst.labels for im in self.images for inst in im.instances]
        if not rows:
            return np.zeros((0, len(self.taxonomy)), dtype=np.int8)
        return np.stack(rows).astype(np.int8, copy=False)

    def positive_counts(self) -> np.ndarray:
        return (self.label_matrix == TriState.POSITIVE).sum(axis=0)

    def subset(self, image_indices: Iterable[int]) -> Dataset:
        return Dataset(self.taxonomy, self.categories, tuple(self.images[i] for i in image_indices))


@dataclass(frozen=True, eq=False)
class PredictedInstance:
    box: BoundingBox
    object_scores: np.ndarray
    attribute_scores: np.ndarray


@dataclass(frozen=True, eq=False)
class ImagePredictions:
    """Columnar predictions for one image."""

    boxes: np.ndarray  # (m, 4) xywh
    object_scores: np.ndarray  # (m, C)
    attribute_scores: np.ndarray  # (m, A)

    def __len__(self) -> int:
        return len(self.boxes)

    @classmethod
    def empty(cls, num_categories: int = NUM_CATEGORIES, num_attributes: int = NUM_ATTRIBUTES) -> ImagePredictions:
        return cls(
            np.zeros((0, 4)), np.zeros((0, num_categories)), np.zeros((0, num_attributes))
        )

    @classmethod
    def from_instances(
        cls,
        instances: Sequence[PredictedInstance],
        num_categories: int = NUM_CATEGORIES,
        num_attributes: int = NUM_ATTRIBUTES,
    ) -> ImagePredictions:
        if not instances:
            return cls.empty(num_categories, num_attributes)
        return cls(
            np.array([p.box.as_list() for p in instances], dtype=np.float64),
            np.stack([np.asarray(p.object_scores, dtype=np.float64) for p in instances]),
            np.stack([np.asarray(p.attribute_scores, dtype=np.float64) for p in instances]),
        )

    def __iter__(self) -> Iterator[PredictedInstance]:
        for i in range(len(self)):
            yield PredictedInstance(
                BoundingBox.from_list(self.boxes[i]), self.object_scores[i], self.attribute_scores[i]
            )


@dataclass(frozen=True)
class Violation:
    locus: str
    message: str

    def __str__(self) -> str:
        return f"{self.locus}: {self.message}"


# --------------------------------------------------------------------------
# loading


def _read_json(source: str | Path | dict | list) -> Any:
    if isinstance(source, (dict, list)):
        return source
    try:
        with open(source, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}: not valid JSON ({exc})") from exc


def reference_taxonomy_path() -> Path:
    return Path(str(resources.files("ovadeval") / "data" / "taxonomy.json"))


def reference_categories_path() -> Path:
    return Path(str(resources.files("ovadeval") / "data" / "categories.json"))


def parse_taxonomy(raw: dict, expected_attributes: int | None = NUM_ATTRIBUTES) -> AttributeTaxonomy:
    """Build a taxonomy from its JSON object form and check its invariants.

    ``expected_attributes`` and the type count are only enforced for the full
    benchmark; pass ``None`` to load small toy taxonomies.
    """
    if not isinstance(raw, dict):
        raise DataError("taxonomy must be a JSON object")
    try:
        types = tuple(raw["types"])
        raw_attrs = raw["attributes"]
        raw_feas = raw["feasibility"]
    except KeyError as exc:
        raise DataError(f"taxonomy missing key {exc}") from exc

    if expected_attributes is not None:
        if len(raw_attrs) != expected_attributes:
            raise DataError(
                f"taxonomy has {len(raw_attrs)} attributes, expected {expected_attributes}"
            )
        if len(types) != NUM_TYPES:
            raise DataError(f"taxonomy has {len(types)} types, expected {NUM_TYPES}")
    if len(set(types)) != len(types):
        raise DataError("duplicate attribute type names")

    attrs: list[AttributeDef] = []
    for pos, rec in enumerate(raw_attrs):
        try:
            a = AttributeDef(
                id=int(rec["id"]),
                name=str(rec["name"]),
                synonyms=tuple(rec["synonyms"]),
                attr_type=str(rec["type"]),
                exclusivity=Exclusivity(rec["exclusivity"]),
                antonym_of=None if rec.get("antonym_of") is None else int(rec["antonym_of"]),
                facet=rec.get("facet"),
                max_colors=None if rec.get("max_colors") is None else int(rec["max_colors"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"attribute #{pos}: malformed ({exc})") from exc
        if a.id != pos:
            raise DataError(f"attribute #{pos} has id {a.id}; ids must follow file order")
        if not a.synonyms:
            raise DataError(f"attribute {a.name!r} has no synonyms")
        if a.attr_type not in types:
            raise DataError(f"attribute {a.name!r} has unknown type {a.attr_type!r}")
        attrs.append(a)

    for a in attrs:
        if a.antonym_of is None:
            continue
        if a.exclusivity is not Exclusivity.ANTONYM_PAIRS:
            raise DataError(f"attribute {a.label!r} declares an antonym but is not AntonymPairs")
        if not 0 <= a.antonym_of < len(attrs):
            raise DataError(f"attribute {a.label!r}: dangling antonym reference {a.antonym_of}")
        other = attrs[a.antonym_of]
        if other.antonym_of != a.id:
            raise DataError(
                f"dangling antonym: {a.label!r} lists {other.label!r}, which does not list it back"
            )

    if set(raw_feas) != set(CATEGORY_GROUPS):
        raise DataError(f"feasibility keys must be exactly {sorted(CATEGORY_GROUPS)}")
    taxonomy = AttributeTaxonomy(
        tuple(attrs), types, {g: frozenset(raw_feas[g]) for g in CATEGORY_GROUPS}
    )
    for g, slots in taxonomy.feasibility.items():
        unknown = slots - set(taxonomy.slots)
        if unknown:
            raise DataError(f"feasibility[{g!r}] names unknown types {sorted(unknown)}")
    return taxonomy


def load_taxonomy(source: str | Path | dict | None = None, expected_attributes: int | None = NUM_ATTRIBUTES) -> AttributeTaxonomy:
    if source is None:
        source = reference_taxonomy_path()
    return parse_taxonomy(_read_json(source), expected_attributes)


def save_taxonomy(taxonomy: AttributeTaxonomy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(taxonomy.to_json(), fh, indent=1)


def load_categories(source: str | Path | list | None = None, full: bool = True) -> tuple[ObjectCategory, ...]:
    """Load the object-category file; ``full`` enforces the 48/32 split."""
    if source is None:
        source = reference_categories_path()
    raw = _read_json(source)
    if not isinstance(raw, list):
        raise DataError("category file must be a JSON list")
    cats = []
    for rec in raw:
        try:
            cat = ObjectCategory(
                id=int(rec["id"]),
                name=str(rec["name"]),
                synonyms=tuple(rec.get("synonyms") or [rec["name"]]),
                split=Split(rec["split"]),
                group=str(rec["group"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed category record {rec!r} ({exc})") from exc
        if cat.group not in CATEGORY_GROUPS:
            raise DataError(f"category {cat.name!r} has unknown group {cat.group!r}")
        cats.append(cat)
    if len({c.id for c in cats}) != len(cats):
        raise DataError("duplicate category ids")
    if full:
        n_base = sum(c.split is Split.BASE for c in cats)
        if len(cats) != NUM_CATEGORIES or n_base != NUM_BASE:
            raise DataError(
                f"expected {NUM_CATEGORIES} categories ({NUM_BASE} Base / {NUM_NOVEL} Novel), "
                f"got {len(cats)} ({n_base} Base)"
            )
    return tuple(cats)


def load_annotations(
    source: str | Path | dict,
    taxonomy: AttributeTaxonomy,
    categories: Sequence[ObjectCategory],
    strict: bool = True,
) -> Dataset:
    """Parse an annotation file into a :class:`Dataset`.

    Boxes crossing the image border are clamped with a warning. With
    ``strict`` any remaining invariant violation raises :class:`DataError`;
    otherwise the dataset is returned as-is for :func:`validate_dataset`.
    """
    raw = _read_json(source)
    if not isinstance(raw, dict) or "images" not in raw:
        raise DataError("annotation file must be an object with an 'images' list")
    raw_instances = raw.get("instances", raw.get("annotations"))
    if raw_instances is None:
        raise DataError("annotation file has neither 'instances' nor 'annotations'")

    per_image: dict[Any, list[AnnotatedInstance]] = {}
    meta: dict[Any, tuple[float, float]] = {}
    for im in raw["images"]:
        try:
            image_id = im["id"]
            meta[image_id] = (float(im["width"]), float(im["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed image record {im!r}") from exc
        if image_id in per_image:
            raise DataError(f"duplicate image id {image_id!r}")
        per_image[image_id] = []

    n_clamped = 0
    for k, rec in enumerate(raw_instances):
        try:
            image_id = rec["image_id"]
            box = BoundingBox.from_list(rec["bbox"])
            category = int(rec["category_id"])
            raw_labels = np.asarray(rec["att_vec"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"instance #{k}: malformed ({exc})") from exc
        if not (np.isfinite(raw_labels).all() and (raw_labels == np.round(raw_labels)).all()):
            raise DataError(f"instance #{k}: att_vec must hold integers")
        # out-of-range values survive the cast so validation can report them
        labels = np.clip(raw_labels, -128, 127).astype(np.int8)
        if image_id not in per_image:
            raise DataError(f"instance #{k} references unknown image {image_id!r}")
        width, height = meta[image_id]
        if box.is_valid() and not box.within(width, height):
            box = box.clamped(width, height)
            n_clamped += 1
        labels.setflags(write=False)
        per_image[image_id].append(AnnotatedInstance(box, category, labels))
    if n_clamped:
        logger.warning("clamped %d boxes extending past their image bounds", n_clamped)

    images = tuple(
        AnnotatedImage(i, meta[i][0], meta[i][1], tuple(insts)) for i, insts in per_image.items()
    )
    dataset = Dataset(taxonomy, tuple(categories), images)
    if strict:
        violations = validate_dataset(dataset)
        if violations:
            shown = "\n  ".join(str(v) for v in violations[:10])
            more = f"\n  ... and {len(violations) - 10} more" if len(violations) > 10 else ""
            raise DataError(f"{len(violations)} invariant violation(s):\n  {shown}{more}")
    return dataset


def dataset_to_json(dataset: Dataset) -> dict[str, Any]:
    images, instances = [], []
    for im in dataset.images:
        images.append({"id": im.image_id, "width": im.width, "height": im.height})
        for inst in im.instances:
            instances.append({
                "image_id": im.image_id,
                "bbox": inst.box.as_list(),
                "category_id": inst.category,
                "att_vec": [int(v) for v in inst.labels],
            })
    return {"images": images, "instances": instances}


def validate_dataset(d: Dataset) -> list[Violation]:
    """Report every structural invariant violation; never raises."""
    out: list[Violation] = []
    n_attr = len(d.taxonomy)
    known = {c.id for c in d.categories}
    seen: set[Any] = set()
    for im in d.images:
        where = f"image {im.image_id!r}"
        if im.image_id in seen:
            out.append(Violation(where, "duplicate image id"))
        seen.add(im.image_id)
        if not (im.width > 0 and im.height > 0):
            out.append(Violation(where, f"non-positive size {im.width}x{im.height}"))
        for j, inst in enumerate(im.instances):
            locus = f"{where} instance {j}"
            if not inst.box.is_valid():
                out.append(Violation(locus, f"degenerate box {inst.box.as_list()}"))
            elif not inst.box.within(im.width, im.height):
                out.append(Violation(locus, "box outside image bounds"))
            if inst.category not in known:
                out.append(Violation(locus, f"unknown category id {inst.category}"))
            labels = np.asarray(inst.labels)
            if labels.ndim != 1 or len(labels) != n_attr:
                out.append(Violation(locus, f"label vector has length {labels.size}, expected {n_attr}"))
            elif labels.min(initial=0) < -1 or labels.max(initial=0) > 1:
                out.append(Violation(locus, "label values must be 1, 0 or -1"))
    return out
