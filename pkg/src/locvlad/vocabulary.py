"""Visual vocabulary: descriptor subsampling, k-means++ training and hard assignment."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, FormatError, TruncationError, ValidationError
from .features import FeatureSet

VLVC_MAGIC = b"VLVC"
VLVC_VERSION = 1
_VLVC_HEADER = struct.Struct("<4sIIIQQI")

# Upper bound on the number of float64 temporaries in one distance block.
_BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class KMeansParams:
    seed: int = 0
    max_iterations: int = 100
    rel_tolerance: float = 1e-4

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if self.rel_tolerance < 0:
            raise DomainError("rel_tolerance must be >= 0")


@dataclass(eq=False)
class Vocabulary:
    centroids: np.ndarray
    seed: int = 0
    train_size: int = 0
    iterations_run: int = 0

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValidationError(f"centroids must be a non-empty k x d array, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("centroids must be finite")
        self.centroids = c

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.centroids.shape == other.centroids.shape
            and self.centroids.tobytes() == other.centroids.tobytes()
            and (self.seed, self.train_size, self.iterations_run)
            == (other.seed, other.train_size, other.iterations_run)
        )


@dataclass
class KMeansResult:
    """Everything a k-means++ run produced, including its cost trace.

    ``cost_history[0]`` is the within-cluster cost right after seeding and each
    later entry is the cost after one Lloyd iteration.
    """

    centroids: np.ndarray
    labels: np.ndarray
    seed_indices: np.ndarray
    cost_history: list[float] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return self.cost_history[-1]

    @property
    def iterations(self) -> int:
        return len(self.cost_history) - 1


def _pool_dimension(sets: Sequence[FeatureSet]) -> int:
    dims = {fs.d for fs in sets}
    if len(dims) > 1:
        raise DomainError(f"feature sets disagree on descriptor dimension: {sorted(dims)}")
    return dims.pop()


def subsample_descriptors(sets: Sequence[FeatureSet], fraction: float, seed: int) -> np.ndarray:
    """Uniformly pick floor(fraction * total) pooled descriptors (at least one) without replacement."""
    if not (0 < fraction <= 1):
        raise DomainError(f"subsample fraction must lie in (0, 1], got {fraction}")
    if not sets:
        raise DomainError("no feature sets to pool")
    d = _pool_dimension(sets)
    pool = np.concatenate([fs.descriptors for fs in sets]).reshape(-1, d)
    total = len(pool)
    if total == 0:
        raise DomainError("descriptor pool is empty")
    count = max(1, int(np.floor(fraction * total)))
    if count == total:
        return pool.copy()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(total, size=count, replace=False))
    return pool[idx]


def squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact (difference-based) squared L2 distances, shape (n, k)."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    n, k = len(x), len(c)
    out = np.empty((n, k), dtype=np.float64)
    step = max(1, _BLOCK_ELEMENTS // max(1, k * c.shape[1]))
    for start in range(0, n, step):
        diff = x[start : start + step, None, :] - c[None, :, :]
        out[start : start + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def nearest_centroids(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid per row (lowest index on ties) and its squared distance."""
    dist = squared_distances(x, centroids)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(len(dist)), labels]


def assign(desc: np.ndarray, vocab: Vocabulary) -> int:
    """Nearest visual word of one descriptor; ties go to the lowest index."""
    x = np.asarray(desc, dtype=np.float64).reshape(-1)
    if x.shape[0] != vocab.d:
        raise DomainError(f"descriptor has dimension {x.shape[0]}, vocabulary expects {vocab.d}")
    labels, _ = nearest_centroids(x[None, :], vocab.centroids)
    return int(labels[0])


def _kmeans_pp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = squared_distances(x, x[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            # inverse-CDF draw; the guard skips zero-weight points at the boundary
            cdf = np.cumsum(closest)
            u = rng.random() * cdf[-1]
            idx = int(np.searchsorted(cdf, u, side="right"))
            idx = min(idx, n - 1)
            while closest[idx] == 0:
                idx -= 1
        else:
            # every point already coincides with a center
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(len(remaining))])
        chosen.append(idx)
        closest = np.minimum(closest, squared_distances(x, x[idx][None, :])[:, 0])
    return np.asarray(chosen, dtype=np.int64)


def _repair_empty(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray, mind: np.ndarray) -> bool:
    counts = np.bincount(labels, minlength=len(centroids))
    empty = np.flatnonzero(counts == 0)
    if len(empty) == 0:
        return False
    mind = mind.copy()
    for j in empty:
        far = int(np.argmax(mind))
        centroids[j] = x[far]
        mind[far] = -1.0
    return True


def kmeans_pp(pool: np.ndarray, k: int, params: KMeansParams = KMeansParams()) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations.

    Iteration stops when the relative cost decrease drops below
    ``params.rel_tolerance``, after ``params.max_iterations`` updates, or as
    soon as an update would raise the cost (that update is discarded, which
    keeps the cost trace non-increasing under floating-point rounding).
    Empty clusters are moved onto the point farthest from its centroid.
    """
    x = np.asarray(pool, dtype=np.float64)
    if x.ndim != 2:
        raise DomainError(f"descriptor pool must be 2-D, got shape {x.shape}")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if len(x) < k:
        raise DomainError(f"pool holds {len(x)} descriptors, fewer than k={k}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("descriptor pool contains non-finite values")

    rng = np.random.default_rng(params.seed)
    seeds = _kmeans_pp_seed(x, k, rng)
    centroids = x[seeds].copy()
    labels, mind = nearest_centroids(x, centroids)
    if _repair_empty(x, centroids, labels, mind):
        labels, mind = nearest_centroids(x, centroids)
    history = [float(mind.sum())]

    for _ in range(params.max_iterations):
        prev = history[-1]
        if prev == 0:
            break
        updated = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]
        new_labels, new_mind = nearest_centroids(x, updated)
        if _repair_empty(x, updated, new_labels, new_mind):
            new_labels, new_mind = nearest_centroids(x, updated)
        cost = float(new_mind.sum())
        if cost > prev:
            break
        centroids, labels, mind = updated, new_labels, new_mind
        history.append(cost)
        if (prev - cost) / prev < params.rel_tolerance:
            break

    return KMeansResult(centroids=centroids, labels=labels, seed_indices=seeds, cost_history=history)


def train_kmeans_pp(pool: np.ndarray, k: int, params: KMeansParams = KMeansParams()) -> Vocabulary:
    res = kmeans_pp(pool, k, params)
    return Vocabulary(res.centroids, seed=params.seed, train_size=len(pool), iterations_run=res.iterations)


def vocabulary_to_bytes(vocab: Vocabulary) -> bytes:
    header = _VLVC_HEADER.pack(
        VLVC_MAGIC, VLVC_VERSION, vocab.k, vocab.d, vocab.seed, vocab.train_size, vocab.iterations_run
    )
    return header + vocab.centroids.astype("<f4", copy=False).tobytes()


def vocabulary_from_bytes(buf: bytes) -> Vocabulary:
    if len(buf) < 8 or buf[:4] != VLVC_MAGIC:
        raise FormatError("not a VLVC file (bad magic)")
    if len(buf) < _VLVC_HEADER.size:
        raise TruncationError("VLVC header truncated")
    _, version, k, d, seed, train_size, iterations = _VLVC_HEADER.unpack_from(buf)
    if version != VLVC_VERSION:
        raise FormatError(f"unsupported VLVC version {version}")
    expected = _VLVC_HEADER.size + 4 * k * d
    if len(buf) < expected:
        raise TruncationError(f"VLVC payload declares k={k}, d={d} but is too short")
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after VLVC payload")
    c = np.frombuffer(buf, dtype="<f4", count=k * d, offset=_VLVC_HEADER.size).reshape(k, d)
    return Vocabulary(c.astype(np.float32), seed=seed, train_size=train_size, iterations_run=iterations)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_bytes(vocabulary_to_bytes(vocab))


def load_vocabulary(path: str | Path) -> Vocabulary:
    return vocabulary_from_bytes(Path(path).read_bytes())
