"""Soft/Hard precision-at-N against ground-truth relevance annotations.

Soft counts reviewers with relevance >= 2 in the top N, Hard counts exact 3s.
Per-paper precisions are macro-averaged over the paper set and reported as
percentages. The divisor is always N, even when a paper's annotated pool is
smaller; small pools surface a warning instead of renormalizing so numbers
stay comparable across runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Dataset
from .errors import MissingTable

logger = logging.getLogger(__name__)

SOFT = "soft"
HARD = "hard"

_CONDITIONS = {
    SOFT: lambda label: label >= 2,
    HARD: lambda label: label == 3,
}


@dataclass(frozen=True)
class RankingEntry:
    reviewer_id: str
    s_tf: float | None = None
    s_emb: float | None = None
    s_rrf: float | None = None
    s_llm: float | None = None
    s_final: float | None = None


@dataclass(frozen=True)
class RankingTable:
    """One paper's reviewers in final rank order, with score provenance."""

    paper_id: str
    entries: tuple[RankingEntry, ...]

    def reviewer_ids(self) -> tuple[str, ...]:
        return tuple(e.reviewer_id for e in self.entries)


@dataclass(frozen=True)
class MetricConfig:
    ns: tuple[int, ...] = (5, 10)
    modes: tuple[str, ...] = (SOFT, HARD)

    def metric_names(self) -> tuple[str, ...]:
        return tuple(f"{mode}_p{n}" for mode in self.modes for n in self.ns)

    @classmethod
    def for_dataset(cls, name: str) -> "MetricConfig":
        # Pools with fewer than ten annotated reviewers per paper only
        # support P@5; the NeurIPS benchmark is the canonical case.
        if name.strip().lower().startswith("neurips"):
            return cls(ns=(5,))
        return cls()


@dataclass
class MetricsReport:
    dataset: str
    label: str
    metrics: dict[str, float]
    avg: float
    per_paper: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "dataset": self.dataset,
            "label": self.label,
            "metrics": self.metrics,
            "avg": self.avg,
            "per_paper": self.per_paper,
        }


def precision_at_n(
    table: RankingTable,
    labels: Mapping[str, int],
    n: int,
    mode: str,
) -> float:
    """Fraction of the top-n ranks holding a qualifying reviewer.

    Positions beyond the pool contribute zero; the divisor stays n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in _CONDITIONS:
        raise ValueError(f"mode must be one of {sorted(_CONDITIONS)}, got {mode!r}")
    condition = _CONDITIONS[mode]

    pool = table.reviewer_ids()
    unknown = [rid for rid in pool if rid not in labels]
    if unknown:
        raise ValueError(f"ranking for {table.paper_id!r} contains unlabeled reviewers: {unknown[:3]}")
    if len(pool) < n:
        logger.warning(
            "paper %s has only %d annotated reviewers for P@%d", table.paper_id, len(pool), n
        )
    hits = sum(1 for rid in pool[:n] if condition(labels[rid]))
    return hits / n


def evaluate_dataset(
    tables: Sequence[RankingTable],
    ds: Dataset,
    config: MetricConfig | None = None,
    label: str = "run",
) -> MetricsReport:
    """Macro-average per-paper precisions over every annotated paper."""
    if config is None:
        config = MetricConfig.for_dataset(ds.name)

    annotated_papers = sorted({a.paper_id for a in ds.annotations})
    by_paper = {t.paper_id: t for t in tables}
    missing = [pid for pid in annotated_papers if pid not in by_paper]
    if missing:
        raise MissingTable(f"no ranking table for annotated papers: {missing[:5]}")

    per_paper: dict[str, dict[str, float]] = {}
    for paper_id in annotated_papers:
        labels = ds.annotated_pool(paper_id)
        table = by_paper[paper_id]
        per_paper[paper_id] = {
            f"{mode}_p{n}": 100.0 * precision_at_n(table, labels, n, mode)
            for mode in config.modes
            for n in config.ns
        }

    metrics: dict[str, float] = {}
    for name in config.metric_names():
        values = [per_paper[pid][name] for pid in annotated_papers]
        metrics[name] = sum(values) / len(values) if values else 0.0
    avg = sum(metrics.values()) / len(metrics) if metrics else 0.0

    return MetricsReport(dataset=ds.name, label=label, metrics=metrics, avg=avg, per_paper=per_paper)


def compare_runs(reports: Sequence[MetricsReport], fmt: str = "text") -> str:
    """Render reports side by side, flagging the best value per metric.

    All reports must share a dataset. ``fmt`` is "text" (aligned columns,
    best flagged with '*') or "csv" (best flagged in a trailing column).
    """
    if not reports:
        return ""
    datasets = {r.dataset for r in reports}
    if len(datasets) > 1:
        raise ValueError(f"reports span multiple datasets: {sorted(datasets)}")

    columns = list(dict.fromkeys(name for r in reports for name in r.metrics)) + ["avg"]

    def value(report: MetricsReport, column: str) -> float | None:
        if column == "avg":
            return report.avg
        return report.metrics.get(column)

    best: dict[str, float] = {}
    for column in columns:
        values = [v for r in reports if (v := value(r, column)) is not None]
        if values:
            best[column] = max(values)

    def cell(report: MetricsReport, column: str) -> str:
        v = value(report, column)
        if v is None:
            return "-"
        flag = "*" if column in best and v == best[column] else ""
        return f"{v:.2f}{flag}"

    if fmt == "csv":
        lines = ["variant," + ",".join(columns)]
        for report in reports:
            lines.append(report.label + "," + ",".join(cell(report, c) for c in columns))
        return "\n".join(lines) + "\n"

    header = ["variant"] + columns
    rows = [[report.label] + [cell(report, c) for c in columns] for report in reports]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    out_lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    out_lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        out_lines.append("  ".join(cell_.ljust(widths[i]) for i, cell_ in enumerate(row)))
    return "\n".join(out_lines) + "\n"
