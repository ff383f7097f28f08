"""Retrieval metrics: mAP, Top1 and 5xRecall@Top5."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DomainError, FormatError, ValidationError
from .retrieval import RankedList


@dataclass
class GroundTruth:
    relevant: dict[str, frozenset[str]]
    class_of: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for qid, rel in self.relevant.items():
            if not rel:
                raise ValidationError(f"query {qid!r} has no relevant database images")
            if qid in rel:
                raise ValidationError(f"query {qid!r} lists itself as relevant")

    @classmethod
    def from_classes(cls, queries: Mapping[str, str], database: Mapping[str, str]) -> GroundTruth:
        """Relevant set of a query = database images sharing its class, minus the query itself."""
        by_class: dict[str, set[str]] = {}
        for image_id, label in database.items():
            by_class.setdefault(label, set()).add(image_id)
        relevant = {}
        for qid, label in queries.items():
            if label not in by_class:
                raise ValidationError(f"query {qid!r}: class {label!r} has no database images")
            rel = frozenset(by_class[label] - {qid})
            if not rel:
                raise ValidationError(f"query {qid!r}: class {label!r} has no other database images")
            relevant[qid] = rel
        return cls(relevant, {**database, **queries})


@dataclass
class QueryResult:
    query_id: str
    average_precision: float
    top1_hit: bool
    top5_relevant_count: int


@dataclass
class MetricsReport:
    map_score: float
    top1: float
    recall5x: float
    per_query: list[QueryResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "map": self.map_score,
            "top1": self.top1,
            "recall5x": self.recall5x,
            "per_query": [asdict(r) for r in self.per_query],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> MetricsReport:
        try:
            rows = [
                QueryResult(
                    str(r["query_id"]),
                    float(r["average_precision"]),
                    bool(r["top1_hit"]),
                    int(r["top5_relevant_count"]),
                )
                for r in data["per_query"]
            ]
            return cls(float(data["map"]), float(data["top1"]), float(data["recall5x"]), rows)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed metrics report: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"metrics report is not JSON: {exc}") from None
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> MetricsReport:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def table(self, verbose: bool = False) -> str:
        lines = [
            f"{'metric':<16}{'value':>10}",
            f"{'mAP':<16}{self.map_score:>10.4f}",
            f"{'Top1':<16}{self.top1:>10.4f}",
            f"{'5xRecall@Top5':<16}{self.recall5x:>10.4f}",
        ]
        if verbose:
            lines.append("")
            lines.append(f"{'query':<24}{'AP':>10}{'top1':>6}{'top5':>6}")
            for r in self.per_query:
                lines.append(
                    f"{r.query_id:<24}{r.average_precision:>10.4f}{int(r.top1_hit):>6d}{r.top5_relevant_count:>6d}"
                )
        return "\n".join(lines)


def _ids(ranking: RankedList | Sequence[str]) -> list[str]:
    return ranking.ids if isinstance(ranking, RankedList) else list(ranking)


def average_precision(ranking: RankedList | Sequence[str], relevant: frozenset[str] | set[str]) -> float:
    """Mean over relevant items of precision at the rank each is retrieved (0 if never retrieved)."""
    if not relevant:
        raise DomainError("average precision needs a non-empty relevant set")
    hits = 0
    total = 0.0
    for rank, image_id in enumerate(_ids(ranking), start=1):
        if image_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def top5_relevant_count(ranking: RankedList | Sequence[str], relevant: frozenset[str] | set[str]) -> int:
    return sum(1 for image_id in _ids(ranking)[:5] if image_id in relevant)


def _per_query(rankings: Mapping[str, RankedList | Sequence[str]], gt: GroundTruth) -> list[QueryResult]:
    if not gt.relevant:
        raise ValidationError("ground truth holds no queries")
    rows = []
    for qid, rel in gt.relevant.items():
        if qid not in rankings:
            raise ValidationError(f"no ranking for query {qid!r}")
        ids = [i for i in _ids(rankings[qid]) if i != qid]
        rows.append(
            QueryResult(qid, average_precision(ids, rel), bool(ids) and ids[0] in rel, top5_relevant_count(ids, rel))
        )
    return rows


def mean_average_precision(rankings: Mapping[str, RankedList | Sequence[str]], gt: GroundTruth) -> float:
    rows = _per_query(rankings, gt)
    return sum(r.average_precision for r in rows) / len(rows)


def top1_accuracy(rankings: Mapping[str, RankedList | Sequence[str]], gt: GroundTruth) -> float:
    rows = _per_query(rankings, gt)
    return sum(r.top1_hit for r in rows) / len(rows)


def recall5_at_top5(rankings: Mapping[str, RankedList | Sequence[str]], gt: GroundTruth) -> float:
    rows = _per_query(rankings, gt)
    return sum(r.top5_relevant_count for r in rows) / len(rows)


def evaluate(rankings: Mapping[str, RankedList | Sequence[str]], gt: GroundTruth) -> MetricsReport:
    rows = _per_query(rankings, gt)
    n = len(rows)
    return MetricsReport(
        map_score=sum(r.average_precision for r in rows) / n,
        top1=sum(r.top1_hit for r in rows) / n,
        recall5x=sum(r.top5_relevant_count for r in rows) / n,
        per_query=rows,
    )
