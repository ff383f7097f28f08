"""VLAD aggregation, normalization variants and the location-aware average of two encodings."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, FormatError, TruncationError, ValidationError
from .features import FeatureSet
from .vocabulary import Vocabulary, nearest_centroids

AGGREGATIONS = ("sum", "mean")
FINAL_NORMS = ("l2", "intra_then_l2", "ssr_then_l2", "powerlaw_then_l2")
NORM_STATES = ("unnormalized", "residual_normalized", "final_normalized")

VLEM_MAGIC = b"VLEM"
VLEM_VERSION = 1


@dataclass(frozen=True)
class EncodingConfig:
    """How residuals are pooled and normalized.

    ``loc_normalize_operands`` only affects :func:`loc_vlad`: when set, each
    of the two encodings is L2-normalized before they are averaged.
    """

    aggregation: str = "sum"
    residual_normalization: bool = True
    final_norm: str = "l2"
    powerlaw_alpha: float = 0.5
    loc_normalize_operands: bool = False

    def __post_init__(self) -> None:
        if self.aggregation not in AGGREGATIONS:
            raise DomainError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.final_norm not in FINAL_NORMS:
            raise DomainError(f"final_norm must be one of {FINAL_NORMS}, got {self.final_norm!r}")
        if not (0 < self.powerlaw_alpha <= 1):
            raise DomainError(f"powerlaw_alpha must lie in (0, 1], got {self.powerlaw_alpha}")


@dataclass(eq=False)
class VladVector:
    """A k*d embedding laid out cluster-major: block i is ``values[i*d:(i+1)*d]``."""

    values: np.ndarray
    k: int
    d: int
    norm_state: str = "final_normalized"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.values) != self.k * self.d:
            raise ValidationError(f"vector length {len(self.values)} != k*d = {self.k}*{self.d}")
        if self.norm_state not in NORM_STATES:
            raise ValidationError(f"unknown norm state {self.norm_state!r}")

    @property
    def blocks(self) -> np.ndarray:
        return self.values.reshape(self.k, self.d)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VladVector):
            return NotImplemented
        return (
            (self.k, self.d, self.norm_state) == (other.k, other.d, other.norm_state)
            and self.values.tobytes() == other.values.tobytes()
        )


def _check_dims(fs: FeatureSet, vocab: Vocabulary) -> None:
    if fs.d != vocab.d:
        raise DomainError(f"{fs.image_id}: descriptor dimension {fs.d} does not match vocabulary d={vocab.d}")


def aggregate_residuals(fs: FeatureSet, vocab: Vocabulary, cfg: EncodingConfig = EncodingConfig()) -> VladVector:
    """Per-cluster pooled residuals before any vector-level normalization."""
    _check_dims(fs, vocab)
    k, d = vocab.k, vocab.d
    blocks = np.zeros((k, d), dtype=np.float64)
    state = "residual_normalized" if cfg.residual_normalization else "unnormalized"
    if fs.m == 0:
        return VladVector(blocks, k, d, state)

    x = fs.descriptors.astype(np.float64)
    # canonical row order makes the accumulation independent of input order
    x = x[np.lexsort(x.T[::-1])]
    centroids = vocab.centroids.astype(np.float64)
    labels, _ = nearest_centroids(x, centroids)
    residuals = x - centroids[labels]
    if cfg.residual_normalization:
        norms = np.sqrt(np.einsum("md,md->m", residuals, residuals))[:, None]
        residuals = np.divide(residuals, norms, out=np.zeros_like(residuals), where=norms > 0)
    np.add.at(blocks, labels, residuals)
    if cfg.aggregation == "mean":
        counts = np.bincount(labels, minlength=k)
        filled = counts > 0
        blocks[filled] /= counts[filled, None]
    return VladVector(blocks, k, d, state)


def _blockwise_norm(blocks: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    if cfg.final_norm == "intra_then_l2":
        norms = np.linalg.norm(blocks, axis=1, keepdims=True)
        return np.divide(blocks, norms, out=blocks.copy(), where=norms > 0)
    if cfg.final_norm == "ssr_then_l2":
        return np.sign(blocks) * np.sqrt(np.abs(blocks))
    if cfg.final_norm == "powerlaw_then_l2":
        return np.sign(blocks) * np.abs(blocks) ** cfg.powerlaw_alpha
    return blocks


def l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def _pre_global(fs: FeatureSet, vocab: Vocabulary, cfg: EncodingConfig) -> np.ndarray:
    return _blockwise_norm(aggregate_residuals(fs, vocab, cfg).blocks, cfg).reshape(-1)


def encode_vlad(fs: FeatureSet, vocab: Vocabulary, cfg: EncodingConfig = EncodingConfig()) -> VladVector:
    """VLAD embedding of one image, normalized according to ``cfg``.

    An image without features encodes to the zero vector.
    """
    v = l2_normalize(_pre_global(fs, vocab, cfg))
    return VladVector(v, vocab.k, vocab.d, "final_normalized")


def loc_vlad(
    full: FeatureSet, cropped: FeatureSet, vocab: Vocabulary, cfg: EncodingConfig = EncodingConfig()
) -> VladVector:
    """Equal-weight average of the full-image and cropped-image encodings.

    Both encodings are taken after pooling and blockwise normalization but
    before the global L2 step, which is applied once to the average.
    """
    _check_dims(cropped, vocab)
    a = _pre_global(full, vocab, cfg)
    b = _pre_global(cropped, vocab, cfg)
    if cfg.loc_normalize_operands:
        a, b = l2_normalize(a), l2_normalize(b)
    v = l2_normalize(0.5 * (a + b))
    return VladVector(v, vocab.k, vocab.d, "final_normalized")


def _as_vector(v: VladVector | np.ndarray) -> np.ndarray:
    return v.values if isinstance(v, VladVector) else np.asarray(v, dtype=np.float64).reshape(-1)


def embeddings_to_bytes(entries: Sequence[tuple[str, VladVector | np.ndarray]]) -> bytes:
    vectors = [_as_vector(v) for _, v in entries]
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        raise DomainError(f"embeddings have mixed lengths: {sorted(lengths)}")
    length = lengths.pop() if lengths else 0
    parts = [VLEM_MAGIC, struct.pack("<III", VLEM_VERSION, len(entries), length)]
    for (image_id, _), vec in zip(entries, vectors):
        name = image_id.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(vec.astype("<f4").tobytes())
    return b"".join(parts)


def _infer_state(values: np.ndarray) -> str:
    norm = float(np.linalg.norm(values))
    return "final_normalized" if norm == 0 or abs(norm - 1) <= 1e-5 else "unnormalized"


def embeddings_from_bytes(buf: bytes, d: int | None = None) -> list[tuple[str, VladVector]]:
    """Parse a VLEM payload.

    VLEM stores only the flat length, so ``d`` (the vocabulary's descriptor
    dimension) is needed to recover the block layout; without it each vector
    is treated as a single block.
    """
    if len(buf) < 16 or buf[:4] != VLEM_MAGIC:
        raise FormatError("not a VLEM file (bad magic)")
    version, count, length = struct.unpack_from("<III", buf, 4)
    if version != VLEM_VERSION:
        raise FormatError(f"unsupported VLEM version {version}")
    if d is not None and (d < 1 or length % d):
        raise DomainError(f"vector length {length} is not a multiple of d={d}")
    k, dim = (length // d, d) if d else (1, length)
    off = 16
    out: list[tuple[str, VladVector]] = []
    for i in range(count):
        if len(buf) < off + 4:
            raise TruncationError(f"VLEM truncated at entry {i} of {count}")
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) < off + name_len + 4 * length:
            raise TruncationError(f"VLEM truncated at entry {i} of {count}")
        try:
            image_id = buf[off : off + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry {i}: id is not valid UTF-8: {exc}") from None
        off += name_len
        values = np.frombuffer(buf, dtype="<f4", count=length, offset=off).astype(np.float64)
        off += 4 * length
        out.append((image_id, VladVector(values, k, dim, _infer_state(values))))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after VLEM payload")
    return out


def save_embeddings(entries: Iterable[tuple[str, VladVector | np.ndarray]], path: str | Path) -> None:
    Path(path).write_bytes(embeddings_to_bytes(list(entries)))


def load_embeddings(path: str | Path, d: int | None = None) -> list[tuple[str, VladVector]]:
    return embeddings_from_bytes(Path(path).read_bytes(), d)
