"""JSON dataset manifest: database and query images with class labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import FormatError, ValidationError
from .features import FeatureSet, load_features


@dataclass
class ImageEntry:
    id: str
    features_path: str
    cls: str
    width: int = 0
    height: int = 0


@dataclass
class QueryEntry:
    id: str
    features_path: str
    cls: str
    cropped_features_path: Optional[str] = None


@dataclass
class Manifest:
    dataset_name: str
    images: list[ImageEntry] = field(default_factory=list)
    queries: list[QueryEntry] = field(default_factory=list)
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in [*self.images, *self.queries]:
            if e.id in seen:
                raise ValidationError(f"duplicate image id {e.id!r} in manifest")
            seen.add(e.id)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load(self, entry: ImageEntry | QueryEntry) -> FeatureSet:
        path = self.resolve(entry.features_path)
        if not path.is_file():
            raise FileNotFoundError(f"features for {entry.id!r} not found: {path}")
        return load_features(path)

    def load_cropped(self, entry: QueryEntry) -> FeatureSet | None:
        if not entry.cropped_features_path:
            return None
        path = self.resolve(entry.cropped_features_path)
        if not path.is_file():
            raise FileNotFoundError(f"cropped features for {entry.id!r} not found: {path}")
        return load_features(path)

    def to_dict(self) -> dict:
        images = [
            {"id": e.id, "features_path": e.features_path, "class": e.cls, "width": e.width, "height": e.height}
            for e in self.images
        ]
        queries = []
        for q in self.queries:
            row = {"id": q.id, "features_path": q.features_path, "class": q.cls}
            if q.cropped_features_path:
                row["cropped_features_path"] = q.cropped_features_path
            queries.append(row)
        return {"dataset_name": self.dataset_name, "images": images, "queries": queries}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        images = [
            ImageEntry(str(r["id"]), r["features_path"], str(r["class"]), int(r.get("width", 0)), int(r.get("height", 0)))
            for r in data["images"]
        ]
        queries = [
            QueryEntry(str(r["id"]), r["features_path"], str(r["class"]), r.get("cropped_features_path"))
            for r in data.get("queries", [])
        ]
        name = str(data.get("dataset_name", path.stem))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: manifest is not valid JSON: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed manifest entry: {exc}") from None
    return Manifest(name, images, queries, root=path.parent)
