"""Synthetic landmark datasets with border distractors, and the VLAD vs locVLAD ablation run on them.

Every image of a class shows the same landmark: a fixed set of prototype
descriptors, jittered by Gaussian noise, with keypoints inside the central
region. Distractor descriptors come from one mixture shared by all classes
and sit in the outer border band, so they carry no class information.
Optionally some database images are zoomed views whose landmark features
fill the whole frame.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .embedding import EncodingConfig, VladVector, encode_vlad, loc_vlad
from .errors import DomainError
from .evaluation import GroundTruth, MetricsReport, evaluate
from .features import FeatureSet, central_crop_filter, central_crop_mask, save_features
from .manifest import ImageEntry, Manifest, QueryEntry
from .pipeline import build_vocabulary, rank_all
from .retrieval import build_index


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 20
    db_images_per_class: int = 5
    queries_per_class: int = 2
    signature_size: int = 30
    landmark_noise_sigma: float = 0.8
    border_distractor_count_db: int = 15
    border_distractor_count_query: int = 60
    d: int = 32
    image_size: tuple[int, int] = (640, 480)
    seed: int = 2024
    central_fraction: float = 0.6
    border_fraction: float = 0.15
    distractor_modes: int = 8
    distractor_sigma: float = 0.6
    db_zoomed_per_class: int = 0

    def __post_init__(self) -> None:
        counts = (self.num_classes, self.db_images_per_class, self.queries_per_class, self.signature_size, self.d)
        if min(counts) < 1:
            raise DomainError("class, image, signature and dimension counts must all be >= 1")
        if self.border_distractor_count_db < 0 or self.border_distractor_count_query < self.border_distractor_count_db:
            raise DomainError("need 0 <= border_distractor_count_db <= border_distractor_count_query")
        if self.landmark_noise_sigma < 0 or self.distractor_sigma < 0:
            raise DomainError("noise sigmas must be >= 0")
        if self.distractor_modes < 1:
            raise DomainError("distractor_modes must be >= 1")
        if not (0 < self.central_fraction <= 1 - 2 * self.border_fraction) or self.border_fraction <= 0:
            raise DomainError("central region and border band must not overlap")
        if not (0 <= self.db_zoomed_per_class <= self.db_images_per_class):
            raise DomainError("db_zoomed_per_class must lie in [0, db_images_per_class]")
        if min(self.image_size) < 1:
            raise DomainError("image size must be positive")

    @property
    def separating_crop_ratio(self) -> float:
        """Crop ratio whose rectangle is exactly the inner edge of the border band."""
        return 1 - 2 * self.border_fraction


@dataclass
class SynthImage:
    features: FeatureSet
    cls: str
    is_distractor: np.ndarray


@dataclass
class SynthDataset:
    database: list[SynthImage]
    queries: list[SynthImage]


def class_label(i: int) -> str:
    return f"c{i:03d}"


def _positions_central(rng, n, w, h, frac):
    lo = (1 - frac) / 2
    out = np.empty((0, 2), dtype=np.float32)
    while len(out) < n:
        pts = np.column_stack([rng.uniform(lo * w, (1 - lo) * w, n), rng.uniform(lo * h, (1 - lo) * h, n)])
        pts = pts.astype(np.float32)
        ok = (pts[:, 0] < (1 - lo) * w) & (pts[:, 1] < (1 - lo) * h)
        out = np.concatenate([out, pts[ok]])
    return out[:n]


def _positions_border(rng, n, w, h, band):
    out = np.empty((0, 2), dtype=np.float32)
    probe = FeatureSet("probe", w, h, np.zeros((0, 4)), np.zeros((0, 1)))
    while len(out) < n:
        m = 2 * n + 8
        pts = np.column_stack([rng.uniform(0, w, m), rng.uniform(0, h, m)]).astype(np.float32)
        pts = pts[(pts[:, 0] < w) & (pts[:, 1] < h)]
        probe.keypoints = np.column_stack([pts, np.ones((len(pts), 2), np.float32)])
        inside = central_crop_mask(probe, 1 - 2 * band)
        out = np.concatenate([out, pts[~inside]])
    return out[:n]


def _make_image(rng, cfg, image_id, prototypes, modes, n_distractors, zoomed=False) -> SynthImage:
    w, h = cfg.image_size
    n_land = len(prototypes)
    land = prototypes + rng.normal(0.0, cfg.landmark_noise_sigma, prototypes.shape)
    pick = rng.integers(len(modes), size=n_distractors)
    dist = modes[pick] + rng.normal(0.0, cfg.distractor_sigma, (n_distractors, cfg.d))
    # a zoomed view spreads the landmark over the whole frame and has no border clutter
    land_xy = _positions_central(rng, n_land, w, h, 1.0 if zoomed else cfg.central_fraction)
    if zoomed:
        dist = dist[:0]
        n_distractors = 0
    xy = np.concatenate([land_xy, _positions_border(rng, n_distractors, w, h, cfg.border_fraction)])
    scale = rng.uniform(1.0, 8.0, n_land + n_distractors)
    orient = rng.uniform(-np.pi, np.pi, n_land + n_distractors)
    keypoints = np.column_stack([xy, scale, orient]).astype(np.float32)
    descriptors = np.concatenate([land, dist]).astype(np.float32)
    is_distractor = np.r_[np.zeros(n_land, bool), np.ones(n_distractors, bool)]
    order = rng.permutation(n_land + n_distractors)
    fs = FeatureSet(image_id, w, h, keypoints[order], descriptors[order])
    return SynthImage(fs, "", is_distractor[order])


def generate_images(cfg: SynthConfig) -> SynthDataset:
    """Build the dataset in memory; deterministic for a given config."""
    rng = np.random.default_rng(cfg.seed)
    modes = rng.normal(0.0, 1.0, (cfg.distractor_modes, cfg.d))
    database, queries = [], []
    for c in range(cfg.num_classes):
        label = class_label(c)
        prototypes = rng.normal(0.0, 1.0, (cfg.signature_size, cfg.d))
        for j in range(cfg.db_images_per_class):
            zoomed = j < cfg.db_zoomed_per_class
            img = _make_image(rng, cfg, f"db_{label}_{j}", prototypes, modes, cfg.border_distractor_count_db, zoomed)
            img.cls = label
            database.append(img)
        for j in range(cfg.queries_per_class):
            img = _make_image(rng, cfg, f"q_{label}_{j}", prototypes, modes, cfg.border_distractor_count_query)
            img.cls = label
            queries.append(img)
    return SynthDataset(database, queries)


def generate_dataset(cfg: SynthConfig, out_dir: str | Path, name: str = "synthetic") -> Path:
    """Write VLFD files plus ``manifest.json`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "database").mkdir(parents=True, exist_ok=True)
    (out / "queries").mkdir(parents=True, exist_ok=True)
    data = generate_images(cfg)
    images, queries = [], []
    for img in data.database:
        rel = f"database/{img.features.image_id}.vlfd"
        save_features(img.features, out / rel)
        images.append(ImageEntry(img.features.image_id, rel, img.cls, img.features.width, img.features.height))
    for img in data.queries:
        rel = f"queries/{img.features.image_id}.vlfd"
        save_features(img.features, out / rel)
        queries.append(QueryEntry(img.features.image_id, rel, img.cls))
    manifest = Manifest(name, images, queries, root=out)
    path = out / "manifest.json"
    manifest.save(path)
    (out / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n", encoding="utf-8")
    return path


@dataclass
class AblationReport:
    k: int
    crop_ratio: float
    vlad: MetricsReport
    locvlad: MetricsReport
    locvlad_both: MetricsReport | None = None
    vocab_seconds: float = 0.0
    train_size: int = 0
    distractors_removed: float = 0.0
    mean_class_distance_vlad: float = 0.0
    mean_class_distance_locvlad: float = 0.0

    @property
    def difference(self) -> dict[str, float]:
        """locVLAD minus VLAD for each aggregate metric."""
        return {
            "map": self.locvlad.map_score - self.vlad.map_score,
            "top1": self.locvlad.top1 - self.vlad.top1,
            "recall5x": self.locvlad.recall5x - self.vlad.recall5x,
        }

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "crop_ratio": self.crop_ratio,
            "train_size": self.train_size,
            "vocab_seconds": self.vocab_seconds,
            "distractors_removed": self.distractors_removed,
            "mean_class_distance": {
                "vlad": self.mean_class_distance_vlad,
                "locvlad": self.mean_class_distance_locvlad,
            },
            "vlad": self.vlad.to_dict(),
            "locvlad": self.locvlad.to_dict(),
            "difference": self.difference,
        }
        if self.locvlad_both is not None:
            out["locvlad_both"] = self.locvlad_both.to_dict()
        return out


def _mean_class_distance(queries, database, qvecs, dbvecs) -> float:
    db_matrix = np.vstack([v.values for v in dbvecs])
    db_cls = np.array([img.cls for img in database])
    per_query = []
    for img, v in zip(queries, qvecs):
        same = db_matrix[db_cls == img.cls]
        per_query.append(np.linalg.norm(same - v.values, axis=1).mean())
    return float(np.mean(per_query))


def _score(data: SynthDataset, qvecs: list[VladVector], dbvecs: list[VladVector], gt: GroundTruth) -> MetricsReport:
    index = build_index([(img.features.image_id, v) for img, v in zip(data.database, dbvecs)])
    return evaluate(rank_all(index, [(img.features.image_id, v) for img, v in zip(data.queries, qvecs)]), gt)


def run_ablation(
    cfg: SynthConfig,
    k: int,
    crop_ratio: float = 0.7,
    subsample_fraction: float = 0.2,
    vocab_seed: int = 0,
    encoding: EncodingConfig = EncodingConfig(),
    include_database_locvlad: bool = True,
    data: SynthDataset | None = None,
) -> AblationReport:
    """Compare plain VLAD queries with locVLAD queries against a plain-VLAD database.

    With ``include_database_locvlad`` a third run applies locVLAD to the
    database images as well.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    data = data or generate_images(cfg)
    db_sets = [img.features for img in data.database]
    vocab, seconds = build_vocabulary(db_sets, k, subsample_fraction, vocab_seed)
    gt = GroundTruth.from_classes(
        {img.features.image_id: img.cls for img in data.queries},
        {img.features.image_id: img.cls for img in data.database},
    )

    db_plain = [encode_vlad(fs, vocab, encoding) for fs in db_sets]
    q_plain = [encode_vlad(img.features, vocab, encoding) for img in data.queries]
    q_crops = [central_crop_filter(img.features, crop_ratio) for img in data.queries]
    q_loc = [loc_vlad(img.features, c, vocab, encoding) for img, c in zip(data.queries, q_crops)]

    total_distractors = sum(int(img.is_distractor.sum()) for img in data.queries)
    removed = sum(
        int((img.is_distractor & ~central_crop_mask(img.features, crop_ratio)).sum()) for img in data.queries
    )

    report = AblationReport(
        k=k,
        crop_ratio=crop_ratio,
        vlad=_score(data, q_plain, db_plain, gt),
        locvlad=_score(data, q_loc, db_plain, gt),
        vocab_seconds=seconds,
        train_size=vocab.train_size,
        distractors_removed=removed / total_distractors if total_distractors else 1.0,
        mean_class_distance_vlad=_mean_class_distance(data.queries, data.database, q_plain, db_plain),
        mean_class_distance_locvlad=_mean_class_distance(data.queries, data.database, q_loc, db_plain),
    )
    if include_database_locvlad:
        db_loc = [loc_vlad(fs, central_crop_filter(fs, crop_ratio), vocab, encoding) for fs in db_sets]
        report.locvlad_both = _score(data, q_loc, db_loc, gt)
    return report


def run_sweep(cfg: SynthConfig, ks: list[int], crop_ratio: float = 0.7, **kwargs) -> list[AblationReport]:
    data = generate_images(cfg)
    return [run_ablation(cfg, k, crop_ratio, data=data, **kwargs) for k in ks]


# Reference configuration for the locVLAD vs VLAD comparison; see README.
REFERENCE_CONFIG = SynthConfig()
REFERENCE_K = 32
REFERENCE_CROP = 0.7
