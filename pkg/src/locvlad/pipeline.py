"""End-to-end orchestration: vocabulary, database/query embedding, retrieval and scoring."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .embedding import EncodingConfig, VladVector, encode_vlad, loc_vlad
from .errors import DomainError
from .evaluation import GroundTruth, MetricsReport, evaluate
from .features import FeatureSet, central_crop_filter
from .manifest import Manifest
from .retrieval import RankedList, RetrievalIndex, build_index, query_index
from .vocabulary import KMeansParams, Vocabulary, subsample_descriptors, train_kmeans_pp

ROLES = ("database", "query")

# Crop ratios that worked best per dataset family.
CROP_RATIO_ZUBUD = 0.9
CROP_RATIO_HOLIDAYS = 0.7


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 64
    subsample_fraction: float = 0.2
    seed: int = 0
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    locvlad_enabled: bool = False
    crop_ratio: float = CROP_RATIO_ZUBUD
    locvlad_on_database: bool = False
    metric: str = "l2"

    def __post_init__(self) -> None:
        if not (0 < self.subsample_fraction <= 1):
            raise DomainError(f"subsample fraction must lie in (0, 1], got {self.subsample_fraction}")
        if not (0 < self.crop_ratio <= 1):
            raise DomainError(f"crop ratio must lie in (0, 1], got {self.crop_ratio}")

    def uses_locvlad(self, role: str) -> bool:
        if role not in ROLES:
            raise DomainError(f"role must be one of {ROLES}, got {role!r}")
        if not self.locvlad_enabled:
            return False
        return role == "query" or self.locvlad_on_database


def build_vocabulary(
    sets: Sequence[FeatureSet], k: int, fraction: float = 0.2, seed: int = 0, params: KMeansParams | None = None
) -> tuple[Vocabulary, float]:
    """Train a vocabulary on a random subsample of the pooled descriptors; returns it with the elapsed seconds."""
    start = time.perf_counter()
    pool = subsample_descriptors(sets, fraction, seed)
    if len(pool) < k:
        raise DomainError(f"only {len(pool)} descriptors after subsampling, need at least k={k}")
    params = params or KMeansParams(seed=seed)
    vocab = train_kmeans_pp(pool, k, params)
    return vocab, time.perf_counter() - start


def encode_image(
    fs: FeatureSet,
    vocab: Vocabulary,
    cfg: PipelineConfig,
    role: str,
    cropped: FeatureSet | None = None,
) -> VladVector:
    """Plain VLAD, or locVLAD when the config enables it for ``role``.

    ``cropped`` is a separately extracted feature set of the cropped image;
    without one the full set is filtered geometrically at ``cfg.crop_ratio``.
    """
    if not cfg.uses_locvlad(role):
        return encode_vlad(fs, vocab, cfg.encoding)
    if cropped is None:
        cropped = central_crop_filter(fs, cfg.crop_ratio)
    return loc_vlad(fs, cropped, vocab, cfg.encoding)


def embed_manifest(manifest: Manifest, vocab: Vocabulary, role: str, cfg: PipelineConfig) -> list[tuple[str, VladVector]]:
    out = []
    if role == "database":
        for e in manifest.images:
            out.append((e.id, encode_image(manifest.load(e), vocab, cfg, role)))
    elif role == "query":
        for q in manifest.queries:
            out.append((q.id, encode_image(manifest.load(q), vocab, cfg, role, manifest.load_cropped(q))))
    else:
        raise DomainError(f"role must be one of {ROLES}, got {role!r}")
    return out


def rank_all(
    index: RetrievalIndex, queries: Sequence[tuple[str, VladVector]], metric: str = "l2"
) -> dict[str, RankedList]:
    """Full ranking of the index for every query, with the query's own id removed."""
    return {qid: query_index(index, v, len(index), metric).without(qid) for qid, v in queries}


def manifest_ground_truth(manifest: Manifest) -> GroundTruth:
    return GroundTruth.from_classes({q.id: q.cls for q in manifest.queries}, {e.id: e.cls for e in manifest.images})


def evaluate_manifest(
    manifest: Manifest, index: RetrievalIndex, vocab: Vocabulary, cfg: PipelineConfig
) -> MetricsReport:
    gt = manifest_ground_truth(manifest)
    queries = embed_manifest(manifest, vocab, "query", cfg)
    return evaluate(rank_all(index, queries, cfg.metric), gt)


def run_pipeline(manifest: Manifest, cfg: PipelineConfig) -> tuple[MetricsReport, Vocabulary]:
    """Vocabulary from the database images, then embed, index, query and score."""
    db_sets = [manifest.load(e) for e in manifest.images]
    vocab, _ = build_vocabulary(db_sets, cfg.k, cfg.subsample_fraction, cfg.seed)
    db = [(e.id, encode_image(fs, vocab, cfg, "database")) for e, fs in zip(manifest.images, db_sets)]
    return evaluate_manifest(manifest, build_index(db), vocab, cfg), vocab
