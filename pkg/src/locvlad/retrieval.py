"""Exhaustive nearest-neighbour search over id-tagged embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .embedding import VladVector
from .errors import DomainError, ValidationError

METRICS = ("l2", "cosine")


@dataclass
class RankedList:
    hits: list[tuple[str, float]] = field(default_factory=list)

    @property
    def ids(self) -> list[str]:
        return [h[0] for h in self.hits]

    @property
    def distances(self) -> list[float]:
        return [h[1] for h in self.hits]

    def __len__(self) -> int:
        return len(self.hits)

    def without(self, image_id: str) -> RankedList:
        return RankedList([h for h in self.hits if h[0] != image_id])


@dataclass(eq=False)
class RetrievalIndex:
    ids: list[str]
    matrix: np.ndarray

    @property
    def vector_length(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


def _values(v: VladVector | np.ndarray) -> np.ndarray:
    return v.values if isinstance(v, VladVector) else np.asarray(v, dtype=np.float64).reshape(-1)


def build_index(embeddings: Iterable[tuple[str, VladVector | np.ndarray]]) -> RetrievalIndex:
    entries = list(embeddings)
    if not entries:
        raise DomainError("cannot build an index from zero embeddings")
    ids = [image_id for image_id, _ in entries]
    seen: set[str] = set()
    for image_id in ids:
        if image_id in seen:
            raise ValidationError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
    vectors = [_values(v) for _, v in entries]
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        raise DomainError(f"embeddings have mixed lengths: {sorted(lengths)}")
    return RetrievalIndex(ids, np.vstack(vectors))


def distances(index: RetrievalIndex, q: np.ndarray, metric: str = "l2") -> np.ndarray:
    if metric == "l2":
        diff = index.matrix - q
        return np.sqrt(np.einsum("nd,nd->n", diff, diff))
    if metric == "cosine":
        norms = np.linalg.norm(index.matrix, axis=1) * np.linalg.norm(q)
        dots = index.matrix @ q
        sim = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
        return np.maximum(1.0 - sim, 0.0)
    raise DomainError(f"metric must be one of {METRICS}, got {metric!r}")


def query_index(index: RetrievalIndex, q: VladVector | np.ndarray, top_n: int, metric: str = "l2") -> RankedList:
    """The ``top_n`` nearest entries, ascending by distance.

    Cosine results are reported as 1 - similarity. Equal distances keep
    insertion order.
    """
    if top_n < 1:
        raise DomainError(f"top_n must be >= 1, got {top_n}")
    qv = _values(q)
    if len(qv) != index.vector_length:
        raise DomainError(f"query length {len(qv)} != index vector length {index.vector_length}")
    dist = distances(index, qv, metric)
    order = np.argsort(dist, kind="stable")[:top_n]
    return RankedList([(index.ids[i], float(dist[i])) for i in order])
