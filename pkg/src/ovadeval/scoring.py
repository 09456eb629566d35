"""Region/text similarity scoring and the binary cross-entropy losses built on it.

Text embeddings come from an external frozen encoder and are read from
embedding files; nothing here encodes text.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_TAU = 50.0
LOSS_EPS = 1e-7


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    dimension: int
    entries: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        for name, v in self.entries.items():
            if v.shape != (self.dimension,):
                raise ValueError(f"embedding {name!r} has shape {v.shape}, expected ({self.dimension},)")
            if not np.isfinite(v).all():
                raise ValueError(f"embedding {name!r} is not finite")

    @classmethod
    def from_dict(cls, entries: Mapping[str, Sequence[float]]) -> EmbeddingTable:
        arrays = {k: np.asarray(v, dtype=np.float64) for k, v in entries.items()}
        dims = {a.shape[0] for a in arrays.values()}
        if len(dims) > 1:
            raise ValueError(f"mixed embedding dimensions {sorted(dims)}")
        return cls(dims.pop() if dims else 0, arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"no embedding for {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)


# Binary layout: uint32 dimension, uint32 count, then per record a uint16 name
# length, the UTF-8 name, and `dimension` little-endian float32 values.
_HEADER = struct.Struct("<II")
_NAME_LEN = struct.Struct("<H")


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"dimension": table.dimension, "entries": {k: v.tolist() for k, v in table.entries.items()}}, fh)
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(table.dimension, len(table)))
        for name, vec in table.entries.items():
            raw = name.encode("utf-8")
            fh.write(_NAME_LEN.pack(len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def load_embeddings(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        table = EmbeddingTable.from_dict(raw["entries"])
        if table.entries and table.dimension != raw["dimension"]:
            raise ValueError(f"{path}: declared dimension {raw['dimension']} != {table.dimension}")
        return EmbeddingTable(int(raw["dimension"]), table.entries)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    dim, count = _HEADER.unpack_from(data, 0)
    off = _HEADER.size
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if off + _NAME_LEN.size > len(data):
            raise ValueError(f"{path}: truncated record")
        (n,) = _NAME_LEN.unpack_from(data, off)
        off += _NAME_LEN.size
        name = data[off:off + n].decode("utf-8")
        off += n
        if off + 4 * dim > len(data):
            raise ValueError(f"{path}: truncated vector for {name!r}")
        entries[name] = np.frombuffer(data, dtype="<f4", count=dim, offset=off).astype(np.float64)
        off += 4 * dim
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return EmbeddingTable(dim, entries)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def _norm(v: np.ndarray, what: str) -> float:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError(f"{what} has zero norm")
    return n


def cosine(f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ValueError(f"dimension mismatch: {f.shape} vs {g.shape}")
    return float(g @ f) / (_norm(g, "text embedding") * _norm(f, "region embedding"))


def match_score(f: np.ndarray, g: np.ndarray, tau: float = DEFAULT_TAU) -> float:
    """Sigmoid of the temperature-scaled cosine between region ``f`` and text ``g``."""
    _check_tau(tau)
    return float(sigmoid(cosine(f, g) * tau))


def class_embedding(synonyms: Iterable[str], table: EmbeddingTable) -> np.ndarray:
    """Mean of the synonym embeddings, left unnormalised."""
    names = sorted(set(synonyms))
    if not names:
        raise ValueError("empty synonym set")
    vecs = np.stack([table[n] for n in names])
    return vecs.mean(axis=0)


def score_all(
    boxes: Sequence[np.ndarray] | np.ndarray,
    classes: Sequence[tuple[str, np.ndarray]],
    tau: float = DEFAULT_TAU,
) -> np.ndarray:
    """Independent per-class scores, rows = boxes, columns = classes (no softmax)."""
    _check_tau(tau)
    b = np.asarray(boxes, dtype=np.float64)
    if b.ndim == 1:
        b = b[None, :]
    if not classes:
        return np.zeros((len(b), 0))
    c = np.stack([np.asarray(v, dtype=np.float64) for _, v in classes])
    if b.size and b.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: boxes {b.shape[1]} vs classes {c.shape[1]}")
    bn = np.linalg.norm(b, axis=1)
    cn = np.linalg.norm(c, axis=1)
    if (bn == 0).any():
        raise ValueError("region embedding has zero norm")
    if (cn == 0).any():
        bad = [classes[i][0] for i in np.flatnonzero(cn == 0)]
        raise ValueError(f"text embedding has zero norm: {bad}")
    cos = (b @ c.T) / bn[:, None] / cn[None, :]
    return sigmoid(cos * tau)


def itc_loss(s: float, y: int) -> float:
    """Binary cross-entropy of score ``s`` against label ``y``.

    The argument of the logarithm is floored at ``LOSS_EPS``, so a saturated
    wrong score costs ``-log(1e-7)`` instead of infinity while a saturated
    right score still costs (almost exactly) nothing.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"score must lie in [0, 1], got {s}")
    p = s if y == 1 else 1.0 - s
    return -math.log(max(p, LOSS_EPS))


def _mean_bce(region: np.ndarray, texts: Sequence[np.ndarray], labels: Sequence[int], tau: float) -> float:
    losses = [itc_loss(match_score(region, g, tau), y) for g, y in zip(texts, labels)]
    return math.fsum(losses) / len(losses)


def caption_batch_loss(
    image_emb: np.ndarray,
    pos_caption: str,
    neg_captions: Sequence[str],
    table: EmbeddingTable,
    tau: float = DEFAULT_TAU,
) -> float:
    """Mean BCE of one positive and the negative captions against the whole-image region."""
    texts = [table[pos_caption]] + [table[c] for c in neg_captions]
    labels = [1] + [0] * len(neg_captions)
    return _mean_bce(image_emb, texts, labels, tau)


def proxy_parts_loss(
    max_area_box_emb: np.ndarray,
    pos_parts: Sequence[str],
    neg_parts: Sequence[str],
    table: EmbeddingTable,
    tau: float = DEFAULT_TAU,
) -> float:
    """Mean BCE of caption parts against the largest predicted box's embedding."""
    if not pos_parts:
        raise ValueError("proxy loss needs at least one positive part")
    texts = [table[p] for p in pos_parts] + [table[p] for p in neg_parts]
    labels = [1] * len(pos_parts) + [0] * len(neg_parts)
    return _mean_bce(max_area_box_emb, texts, labels, tau)


def bce_logit_loss(f: np.ndarray, texts: np.ndarray, labels: np.ndarray, tau: float = DEFAULT_TAU) -> float:
    """Unclamped mean BCE over text rows, evaluated stably in logit space."""
    f = np.asarray(f, dtype=np.float64)
    texts = np.atleast_2d(np.asarray(texts, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    z = tau * (texts @ f) / (np.linalg.norm(texts, axis=1) * _norm(f, "region embedding"))
    # softplus(z) - y*z
    losses = np.logaddexp(0.0, z) - labels * z
    return float(losses.mean())


def bce_logit_grad(f: np.ndarray, texts: np.ndarray, labels: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Closed-form gradient of :func:`bce_logit_loss` w.r.t. the region embedding."""
    f = np.asarray(f, dtype=np.float64)
    texts = np.atleast_2d(np.asarray(texts, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    fn = _norm(f, "region embedding")
    gn = np.linalg.norm(texts, axis=1)
    cos = (texts @ f) / (gn * fn)
    s = sigmoid(tau * cos)
    # d cos / d f = g / (|g||f|) - cos * f / |f|^2
    dcos = texts / (gn * fn)[:, None] - cos[:, None] * f[None, :] / fn**2
    return ((s - labels) * tau) @ dcos / len(labels)


def grad_check(
    f: np.ndarray,
    texts: np.ndarray,
    labels: np.ndarray,
    tau: float = DEFAULT_TAU,
    epsilon: float = 1e-5,
) -> float:
    """Relative error between the analytic gradient and central differences.

    Works for any of the losses above, all of which are a mean BCE of one
    region against a list of texts. The error is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``, or the
    absolute error when both gradients vanish.
    """
    if not 1e-8 < epsilon < 1e-2:
        raise ValueError("epsilon must lie in (1e-8, 1e-2)")
    f = np.asarray(f, dtype=np.float64)
    analytic = bce_logit_grad(f, texts, labels, tau)
    numeric = np.empty_like(f)
    for i in range(len(f)):
        step = np.zeros_like(f)
        step[i] = epsilon
        numeric[i] = (bce_logit_loss(f + step, texts, labels, tau) - bce_logit_loss(f - step, texts, labels, tau)) / (2 * epsilon)
    err = float(np.abs(analytic - numeric).max())
    scale = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()))
    return err / scale if scale > 1e-6 else err
