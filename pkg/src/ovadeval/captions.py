"""Caption decomposition into nouns, noun phrases and noun complements.

Input captions are already part-of-speech tagged. Noun phrases follow the
chunk grammar ``DET? (ADJ|NUM)* NOUN+`` (PROPN counts as a noun); a chunk is
kept when it has a modifier or at least two nouns, and the leading
determiner is dropped.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

TAG_SEP = "_"


class Tag(str, enum.Enum):
    NOUN = "NOUN"
    PROPN = "PROPN"
    ADJ = "ADJ"
    DET = "DET"
    NUM = "NUM"
    ADP = "ADP"
    VERB = "VERB"
    OTHER = "OTHER"


_NOUNS = (Tag.NOUN, Tag.PROPN)
_MODIFIERS = (Tag.ADJ, Tag.NUM)


@dataclass(frozen=True)
class TaggedToken:
    text: str
    tag: Tag

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("empty token")
        object.__setattr__(self, "text", self.text.lower())
        object.__setattr__(self, "tag", _coerce_tag(self.tag))

    @property
    def is_noun(self) -> bool:
        return self.tag in _NOUNS


def _coerce_tag(tag: str | Tag) -> Tag:
    try:
        return Tag(tag)
    except ValueError:
        # other universal POS tags (PRON, AUX, PUNCT, ...) carry no chunk role
        return Tag.OTHER


@dataclass(frozen=True)
class CaptionParts:
    nouns: list[str] = field(default_factory=list)
    noun_phrases: list[tuple[str, ...]] = field(default_factory=list)
    noun_complements: list[tuple[str, ...]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "nouns": self.nouns,
            "noun_phrases": [" ".join(p) for p in self.noun_phrases],
            "noun_complements": [" ".join(c) for c in self.noun_complements],
        }


def parse_tagged(line: str) -> list[TaggedToken]:
    """``"a_DET red_ADJ helmet_NOUN"`` -> tokens."""
    tokens = []
    for item in line.split():
        text, sep, tag = item.rpartition(TAG_SEP)
        if not sep or not text:
            raise ValueError(f"token {item!r} is not of the form text_TAG")
        tokens.append(TaggedToken(text, tag))
    return tokens


def read_tagged_captions(path: str | Path) -> Iterator[list[TaggedToken]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_tagged(line)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc


def _chunks(caption: list[TaggedToken]) -> Iterator[list[TaggedToken]]:
    i, n = 0, len(caption)
    while i < n:
        j = i
        if caption[j].tag is Tag.DET:
            j += 1
        start = j
        while j < n and caption[j].tag in _MODIFIERS:
            j += 1
        k = j
        while k < n and caption[k].is_noun:
            k += 1
        if k > j:
            yield caption[start:k]
            i = k
        else:
            i = max(i + 1, j)


def extract_parts(caption: list[TaggedToken]) -> CaptionParts:
    nouns = [t.text for t in caption if t.is_noun]
    phrases, complements = [], []
    for chunk in _chunks(caption):
        n_nouns = sum(t.is_noun for t in chunk)
        if n_nouns == len(chunk) and n_nouns < 2:
            continue
        phrases.append(tuple(t.text for t in chunk))
        comp = tuple(t.text for t in chunk if not t.is_noun)
        if comp:
            complements.append(comp)
    return CaptionParts(nouns, phrases, complements)


def count_adjectives(corpus: Iterable[list[TaggedToken]]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for caption in corpus:
        counts.update(t.text.casefold() for t in caption if t.tag is Tag.ADJ)
    return counts


@dataclass(frozen=True)
class SynonymGroup:
    members: tuple[str, ...]
    total: int


def select_attribute_vocabulary(
    adjective_counts: Mapping[str, int],
    synonym_lexicon: Mapping[str, str],
    blocklist: Iterable[str] = (),
    min_count: int = 10,
) -> list[SynonymGroup]:
    """Frequent, non-blocked adjectives merged into synonym groups.

    Adjectives missing from ``synonym_lexicon`` form their own group. Groups
    are ordered by total count (descending), ties by first member.
    """
    blocked = set(blocklist)
    groups: dict[str, list[str]] = {}
    for word, count in adjective_counts.items():
        if count < 0:
            raise ValueError(f"negative count for {word!r}")
        if count < min_count or word in blocked:
            continue
        groups.setdefault(synonym_lexicon.get(word, f"\0{word}"), []).append(word)
    out = [
        SynonymGroup(tuple(sorted(words)), sum(adjective_counts[w] for w in words))
        for words in groups.values()
    ]
    out.sort(key=lambda g: (-g.total, g.members))
    return out
