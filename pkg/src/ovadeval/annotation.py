"""Annotation-time label semantics.

Annotators pick one attribute per feasible type (several for colors); the
rest of each type is filled in from the type's exclusivity rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .types import AttributeTaxonomy, Exclusivity, ObjectCategory, TriState

UNKNOWN = "unknown"
COLOR_QUANTITY = "color quantity"


class InfeasiblePolicy(str, enum.Enum):
    NEGATIVE = "neg"
    UNKNOWN = "unk"

    @property
    def state(self) -> TriState:
        return TriState.NEGATIVE if self is InfeasiblePolicy.NEGATIVE else TriState.UNKNOWN


@dataclass(frozen=True)
class TypeSelection:
    """What the annotator picked for one attribute type (slot).

    ``chosen`` is a set of attribute ids, or ``None`` when the type was
    marked unknown.
    """

    attr_type: str
    chosen: frozenset[int] | None

    @classmethod
    def unknown(cls, attr_type: str) -> TypeSelection:
        return cls(attr_type, None)

    @classmethod
    def of(cls, attr_type: str, *ids: int) -> TypeSelection:
        return cls(attr_type, frozenset(ids))


def feasible_types(category: ObjectCategory, taxonomy: AttributeTaxonomy) -> frozenset[str]:
    try:
        return taxonomy.feasibility[category.group]
    except KeyError:
        raise ValueError(f"category {category.name!r} has unknown group {category.group!r}") from None


def _check(selections: Sequence[TypeSelection], taxonomy: AttributeTaxonomy, feasible: frozenset[str]) -> None:
    seen = set()
    for sel in selections:
        if sel.attr_type not in taxonomy.slots:
            raise ValueError(f"unknown attribute type {sel.attr_type!r}")
        if sel.attr_type in seen:
            raise ValueError(f"two selections for type {sel.attr_type!r}")
        seen.add(sel.attr_type)
        if sel.attr_type not in feasible:
            raise ValueError(f"type {sel.attr_type!r} is not feasible for this category")
        if sel.chosen is None:
            continue
        members = set(taxonomy.slots[sel.attr_type])
        stray = set(sel.chosen) - members
        if stray:
            raise ValueError(f"attribute ids {sorted(stray)} are not in type {sel.attr_type!r}")
        rule = taxonomy.slot_exclusivity(sel.attr_type)
        if rule is Exclusivity.EXCLUSIVE and len(sel.chosen) > 1:
            raise ValueError(f"type {sel.attr_type!r} allows a single selection")
        if rule is Exclusivity.ANTONYM_PAIRS:
            for i in sel.chosen:
                if taxonomy.attributes[i].antonym_of in sel.chosen:
                    raise ValueError(f"{taxonomy.attributes[i].name!r} and its antonym both selected")


def _color_cap(selections: Sequence[TypeSelection], taxonomy: AttributeTaxonomy) -> int | None:
    for sel in selections:
        if sel.attr_type == COLOR_QUANTITY and sel.chosen:
            (chosen,) = sel.chosen
            return taxonomy.attributes[chosen].max_colors
    return None


def propagate_labels(
    selections: Sequence[TypeSelection],
    category: ObjectCategory,
    taxonomy: AttributeTaxonomy,
    infeasible_policy: InfeasiblePolicy | str = InfeasiblePolicy.NEGATIVE,
) -> np.ndarray:
    """Expand per-type selections into a full tri-state label vector.

    * exclusive type: chosen positive, the other members negative;
    * state (antonym pairs): chosen positive, its antonym negative, rest unknown;
    * colors: chosen positive; the others negative only when the selected
      color quantity caps the count at exactly the number chosen, else unknown;
    * type marked unknown, or never selected: all members unknown;
    * infeasible type for the category: ``infeasible_policy``.
    """
    policy = InfeasiblePolicy(infeasible_policy)
    feasible = feasible_types(category, taxonomy)
    _check(selections, taxonomy, feasible)

    out = np.full(len(taxonomy), TriState.UNKNOWN, dtype=np.int8)
    for slot, members in taxonomy.slots.items():
        if slot not in feasible:
            out[list(members)] = policy.state

    cap = _color_cap(selections, taxonomy)
    for sel in selections:
        if sel.chosen is None:
            continue
        members = taxonomy.slots[sel.attr_type]
        rule = taxonomy.slot_exclusivity(sel.attr_type)
        if rule is Exclusivity.EXCLUSIVE:
            out[list(members)] = TriState.NEGATIVE
        elif rule is Exclusivity.COLOR_MULTI_SELECT:
            fill = TriState.NEGATIVE if cap is not None and cap == len(sel.chosen) else TriState.UNKNOWN
            out[list(members)] = fill
        else:
            for i in sel.chosen:
                other = taxonomy.attributes[i].antonym_of
                if other is not None:
                    out[other] = TriState.NEGATIVE
        out[sorted(sel.chosen)] = TriState.POSITIVE
    return out


def selections_from_names(
    raw: dict[str, Iterable[str] | str], taxonomy: AttributeTaxonomy
) -> list[TypeSelection]:
    """``{"pose": ["vertical"], "gender": "unknown"}`` -> selections (names or synonyms)."""
    out = []
    for slot, names in raw.items():
        if isinstance(names, str):
            if names.lower() == UNKNOWN:
                out.append(TypeSelection.unknown(slot))
                continue
            names = [names]
        out.append(TypeSelection(slot, frozenset(taxonomy.find(slot, n) for n in names)))
    return out


def annotation_consistency(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    """Percentage of (instance, attribute) positions labelled identically.

    Unknown agreeing with unknown counts as agreement.
    """
    if len(a) != len(b):
        raise ValueError(f"annotation sets differ in size: {len(a)} vs {len(b)}")
    same = total = 0
    for k, (x, y) in enumerate(zip(a, b)):
        x = np.asarray(x)
        y = np.asarray(y)
        if x.shape != y.shape:
            raise ValueError(f"instance {k}: label vectors differ in length")
        same += int((x == y).sum())
        total += x.size
    if total == 0:
        raise ValueError("no label positions to compare")
    return 100.0 * same / total
