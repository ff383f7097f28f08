"""Per-image local features: VLFD file I/O, RootSIFT and the central crop filter.

A VLFD file is little-endian::

    b"VLFD" | version u32 | id_len u32 | id utf-8 | width u32 | height u32 | m u32 | d u32
    m x (x, y, scale, orientation) f32
    m x d descriptor f32, row-major
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DomainError, FormatError, TruncationError, ValidationError

VLFD_MAGIC = b"VLFD"
VLFD_VERSION = 1
KEYPOINT_FIELDS = 4


class Keypoint(NamedTuple):
    x: float
    y: float
    scale: float
    orientation: float


@dataclass(eq=False)
class FeatureSet:
    """Keypoints (m x 4: x, y, scale, orientation) and descriptors (m x d) of one image."""

    image_id: str
    width: int
    height: int
    keypoints: np.ndarray
    descriptors: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.keypoints = np.ascontiguousarray(self.keypoints, dtype=np.float32).reshape(-1, KEYPOINT_FIELDS)
        desc = np.asarray(self.descriptors, dtype=np.float32)
        if desc.ndim != 2:
            raise ValidationError(f"descriptors must be 2-D, got shape {desc.shape}")
        self.descriptors = np.ascontiguousarray(desc)
        if len(self.keypoints) != len(self.descriptors):
            raise ValidationError(
                f"{self.image_id}: {len(self.keypoints)} keypoints but {len(self.descriptors)} descriptors"
            )
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"{self.image_id}: image size must be positive, got {self.width}x{self.height}")
        if self.d < 1:
            raise ValidationError(f"{self.image_id}: descriptor dimension must be >= 1")

    @property
    def m(self) -> int:
        return len(self.descriptors)

    @property
    def d(self) -> int:
        return self.descriptors.shape[1]

    def keypoint(self, i: int) -> Keypoint:
        return Keypoint(*(float(v) for v in self.keypoints[i]))

    def validate(self) -> None:
        """Check keypoint bounds, scales and finiteness; raise ValidationError on failure."""
        kp = self.keypoints
        if not np.all(np.isfinite(kp)) or not np.all(np.isfinite(self.descriptors)):
            raise ValidationError(f"{self.image_id}: non-finite keypoint or descriptor value")
        x, y, scale = kp[:, 0], kp[:, 1], kp[:, 2]
        bad = (x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"{self.image_id}: keypoint {i} at ({x[i]}, {y[i]}) outside {self.width}x{self.height} image"
            )
        if np.any(scale <= 0):
            raise ValidationError(f"{self.image_id}: keypoint scale must be > 0")

    def subset(self, mask: np.ndarray) -> FeatureSet:
        return FeatureSet(self.image_id, self.width, self.height, self.keypoints[mask], self.descriptors[mask])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.width == other.width
            and self.height == other.height
            and self.keypoints.shape == other.keypoints.shape
            and self.descriptors.shape == other.descriptors.shape
            and self.keypoints.tobytes() == other.keypoints.tobytes()
            and self.descriptors.tobytes() == other.descriptors.tobytes()
        )


def features_to_bytes(fs: FeatureSet) -> bytes:
    name = fs.image_id.encode("utf-8")
    header = VLFD_MAGIC + struct.pack("<II", VLFD_VERSION, len(name)) + name
    header += struct.pack("<IIII", fs.width, fs.height, fs.m, fs.d)
    return (
        header
        + fs.keypoints.astype("<f4", copy=False).tobytes()
        + fs.descriptors.astype("<f4", copy=False).tobytes()
    )


def features_from_bytes(buf: bytes) -> FeatureSet:
    if len(buf) < 12 or buf[:4] != VLFD_MAGIC:
        raise FormatError("not a VLFD file (bad magic)")
    version, name_len = struct.unpack_from("<II", buf, 4)
    if version != VLFD_VERSION:
        raise FormatError(f"unsupported VLFD version {version}")
    off = 12
    if len(buf) < off + name_len + 16:
        raise TruncationError("VLFD header truncated")
    try:
        image_id = buf[off : off + name_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"image id is not valid UTF-8: {exc}") from None
    off += name_len
    width, height, m, d = struct.unpack_from("<IIII", buf, off)
    off += 16
    expected = off + 4 * KEYPOINT_FIELDS * m + 4 * m * d
    if len(buf) < expected:
        raise TruncationError(f"VLFD payload declares m={m}, d={d} but holds {len(buf) - off} bytes")
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after VLFD payload")
    kp = np.frombuffer(buf, dtype="<f4", count=KEYPOINT_FIELDS * m, offset=off).reshape(m, KEYPOINT_FIELDS)
    off += 4 * KEYPOINT_FIELDS * m
    desc = np.frombuffer(buf, dtype="<f4", count=m * d, offset=off).reshape(m, d)
    fs = FeatureSet(image_id, width, height, kp.astype(np.float32), desc.astype(np.float32))
    fs.validate()
    return fs


def save_features(fs: FeatureSet, path: str | Path) -> None:
    Path(path).write_bytes(features_to_bytes(fs))


def load_features(path: str | Path) -> FeatureSet:
    return features_from_bytes(Path(path).read_bytes())


def root_sift(desc: np.ndarray) -> np.ndarray:
    """Elementwise square root followed by L2 normalization.

    Accepts one descriptor or an (m, d) batch. Zero descriptors map to zero.
    """
    x = np.asarray(desc, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError("RootSIFT requires non-negative descriptor components")
    r = np.sqrt(x)
    norm = np.linalg.norm(r, axis=-1, keepdims=True)
    return np.divide(r, norm, out=np.zeros_like(r), where=norm > 0)


def root_sift_features(fs: FeatureSet) -> FeatureSet:
    return FeatureSet(fs.image_id, fs.width, fs.height, fs.keypoints, root_sift(fs.descriptors))


def _float_at_or_above(q: Fraction) -> float:
    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f


def crop_bounds(size: int, ratio: float) -> tuple[float, float]:
    """Half-open [lo, hi) interval of the centered crop along one axis.

    The bounds are computed exactly from the decimal value of ``ratio`` and
    rounded up to the nearest float, so ``x >= lo`` and ``x < hi`` are exact.
    """
    r = Fraction(repr(float(ratio)))
    lo = Fraction(size) * (1 - r) / 2
    hi = Fraction(size) * (1 + r) / 2
    return _float_at_or_above(lo), _float_at_or_above(hi)


def central_crop_mask(fs: FeatureSet, ratio: float) -> np.ndarray:
    if not (0 < ratio <= 1):
        raise DomainError(f"crop ratio must lie in (0, 1], got {ratio}")
    x_lo, x_hi = crop_bounds(fs.width, ratio)
    y_lo, y_hi = crop_bounds(fs.height, ratio)
    x = fs.keypoints[:, 0].astype(np.float64)
    y = fs.keypoints[:, 1].astype(np.float64)
    return (x >= x_lo) & (x < x_hi) & (y >= y_lo) & (y < y_hi)


def central_crop_filter(fs: FeatureSet, ratio: float) -> FeatureSet:
    """Keep the features whose keypoint centers fall in the centered crop of ``ratio``."""
    return fs.subset(central_crop_mask(fs, ratio))
