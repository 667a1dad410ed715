"""Benchmark dataset loading, validation, and reviewer digests.

A dataset directory holds three line-delimited JSON files (UTF-8, one object
per line):

    papers.jsonl       {"id": str, "title": str, "abstract": str}
    reviewers.jsonl    {"id": str, "publications": [{"title": str, "abstract": str}, ...]}
    annotations.jsonl  {"paper_id": str, "reviewer_id": str, "relevance": int}

Unknown keys are ignored; missing required keys raise ``MalformedRecord``.
All types here are immutable value data after construction and safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DanglingReference, DuplicateId, EmptyHistory, MalformedRecord

PAPERS_FILE = "papers.jsonl"
REVIEWERS_FILE = "reviewers.jsonl"
ANNOTATIONS_FILE = "annotations.jsonl"

RELEVANCE_LABELS = (0, 1, 2, 3)

# Joiner conventions used everywhere a paper or publication becomes one string.
PUBLICATION_SEPARATOR = "\n"
TITLE_ABSTRACT_SEPARATOR = ". "


@dataclass(frozen=True)
class Paper:
    id: str
    title: str
    abstract: str


@dataclass(frozen=True)
class Publication:
    title: str
    abstract: str


@dataclass(frozen=True)
class ReviewerRecord:
    id: str
    publications: tuple[Publication, ...]


@dataclass(frozen=True)
class Annotation:
    paper_id: str
    reviewer_id: str
    relevance: int


@dataclass(frozen=True)
class Dataset:
    name: str
    papers: tuple[Paper, ...]
    reviewers: tuple[ReviewerRecord, ...]
    annotations: tuple[Annotation, ...]

    def paper_by_id(self) -> dict[str, Paper]:
        return {p.id: p for p in self.papers}

    def reviewer_by_id(self) -> dict[str, ReviewerRecord]:
        return {r.id: r for r in self.reviewers}

    def annotated_pool(self, paper_id: str) -> dict[str, int]:
        """Relevance labels for every reviewer annotated against one paper."""
        return {
            a.reviewer_id: a.relevance
            for a in self.annotations
            if a.paper_id == paper_id
        }


@dataclass(frozen=True)
class Digest:
    """Concatenated publication text standing in for one reviewer."""

    reviewer_id: str
    text: str
    truncated: bool
    source_count: int


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    subject_id: str
    message: str


@dataclass
class ValidationReport:
    dataset: str
    n_papers: int
    n_reviewers: int
    n_annotations: int
    errors: list[str] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def paper_text(paper: Paper) -> str:
    """Single-string form of a submission, used for profiling and embedding."""
    return publication_text(paper.title, paper.abstract)


def publication_text(title: str, abstract: str) -> str:
    return f"{title}{TITLE_ABSTRACT_SEPARATOR}{abstract}"


def _read_json_lines(path: Path) -> list[tuple[int, dict]]:
    if not path.is_file():
        raise MalformedRecord(str(path), 0, "file not found")
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(str(path), line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise MalformedRecord(str(path), line_no, "record is not a JSON object")
            records.append((line_no, raw))
    return records


def _require(raw: dict, key: str, path: Path, line: int):
    if key not in raw:
        raise MalformedRecord(str(path), line, f"missing required key {key!r}")
    return raw[key]


def _require_str(raw: dict, key: str, path: Path, line: int, allow_empty: bool = True) -> str:
    value = _require(raw, key, path, line)
    if not isinstance(value, str):
        raise MalformedRecord(str(path), line, f"key {key!r} must be a string")
    if not allow_empty and not value.strip():
        raise MalformedRecord(str(path), line, f"key {key!r} must be non-empty")
    return value


def _load_papers(path: Path) -> list[Paper]:
    papers = []
    seen: set[str] = set()
    for line_no, raw in _read_json_lines(path):
        paper = Paper(
            id=_require_str(raw, "id", path, line_no, allow_empty=False),
            title=_require_str(raw, "title", path, line_no, allow_empty=False),
            abstract=_require_str(raw, "abstract", path, line_no),
        )
        if paper.id in seen:
            raise DuplicateId(f"{path}:{line_no}: duplicate paper id {paper.id!r}")
        seen.add(paper.id)
        papers.append(paper)
    return papers


def _load_reviewers(path: Path) -> list[ReviewerRecord]:
    reviewers = []
    seen: set[str] = set()
    for line_no, raw in _read_json_lines(path):
        reviewer_id = _require_str(raw, "id", path, line_no, allow_empty=False)
        raw_pubs = _require(raw, "publications", path, line_no)
        if not isinstance(raw_pubs, list):
            raise MalformedRecord(str(path), line_no, "key 'publications' must be a list")
        publications = []
        for pub in raw_pubs:
            if not isinstance(pub, dict):
                raise MalformedRecord(str(path), line_no, "publication entries must be objects")
            publications.append(
                Publication(
                    title=_require_str(pub, "title", path, line_no),
                    abstract=_require_str(pub, "abstract", path, line_no),
                )
            )
        if reviewer_id in seen:
            raise DuplicateId(f"{path}:{line_no}: duplicate reviewer id {reviewer_id!r}")
        seen.add(reviewer_id)
        reviewers.append(ReviewerRecord(id=reviewer_id, publications=tuple(publications)))
    return reviewers


def _load_annotations(path: Path) -> list[Annotation]:
    annotations = []
    seen: set[tuple[str, str]] = set()
    for line_no, raw in _read_json_lines(path):
        paper_id = _require_str(raw, "paper_id", path, line_no, allow_empty=False)
        reviewer_id = _require_str(raw, "reviewer_id", path, line_no, allow_empty=False)
        relevance = _require(raw, "relevance", path, line_no)
        if isinstance(relevance, bool) or not isinstance(relevance, int):
            raise MalformedRecord(str(path), line_no, "key 'relevance' must be an integer")
        if relevance not in RELEVANCE_LABELS:
            raise MalformedRecord(
                str(path), line_no, f"relevance {relevance} outside {list(RELEVANCE_LABELS)}"
            )
        pair = (paper_id, reviewer_id)
        if pair in seen:
            raise DuplicateId(f"{path}:{line_no}: duplicate annotation for {pair}")
        seen.add(pair)
        annotations.append(Annotation(paper_id, reviewer_id, relevance))
    return annotations


def load_dataset(path: str | Path, name: str) -> Dataset:
    """Load a dataset directory and verify referential integrity."""
    root = Path(path)
    papers = _load_papers(root / PAPERS_FILE)
    reviewers = _load_reviewers(root / REVIEWERS_FILE)
    annotations = _load_annotations(root / ANNOTATIONS_FILE)

    paper_ids = {p.id for p in papers}
    reviewer_ids = {r.id for r in reviewers}
    for ann in annotations:
        if ann.paper_id not in paper_ids:
            raise DanglingReference(f"annotation references unknown paper {ann.paper_id!r}")
        if ann.reviewer_id not in reviewer_ids:
            raise DanglingReference(f"annotation references unknown reviewer {ann.reviewer_id!r}")

    return Dataset(
        name=name,
        papers=tuple(papers),
        reviewers=tuple(reviewers),
        annotations=tuple(annotations),
    )


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write a dataset back out in the line-delimited input format."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with (root / PAPERS_FILE).open("w", encoding="utf-8") as handle:
        for p in ds.papers:
            handle.write(json.dumps({"id": p.id, "title": p.title, "abstract": p.abstract}) + "\n")
    with (root / REVIEWERS_FILE).open("w", encoding="utf-8") as handle:
        for r in ds.reviewers:
            record = {
                "id": r.id,
                "publications": [{"title": p.title, "abstract": p.abstract} for p in r.publications],
            }
            handle.write(json.dumps(record) + "\n")
    with (root / ANNOTATIONS_FILE).open("w", encoding="utf-8") as handle:
        for a in ds.annotations:
            record = {"paper_id": a.paper_id, "reviewer_id": a.reviewer_id, "relevance": a.relevance}
            handle.write(json.dumps(record) + "\n")


def build_reviewer_digest(reviewer: ReviewerRecord, char_budget: int) -> Digest:
    """Concatenate a reviewer's publications into one digest string.

    Publications are rendered as "title. abstract" and joined by a newline, in
    list order. When the character budget cannot hold the full history, whole
    publications are kept greedily from the most recent (last in the list)
    backward; if even the most recent one does not fit on its own, its text is
    hard-truncated to the budget so the digest is never empty.
    """
    if char_budget <= 0:
        raise ValueError(f"char_budget must be positive, got {char_budget}")
    if not reviewer.publications:
        raise EmptyHistory(f"reviewer {reviewer.id!r} has no publications")

    entries = [publication_text(p.title, p.abstract) for p in reviewer.publications]
    kept: list[str] = []
    used = 0
    for entry in reversed(entries):
        cost = len(entry) if not kept else len(entry) + len(PUBLICATION_SEPARATOR)
        if used + cost > char_budget:
            break
        kept.append(entry)
        used += cost
    kept.reverse()

    budget_cut = False
    if not kept:
        # Even the newest publication alone exceeds the budget.
        kept = [entries[-1][:char_budget]]
        budget_cut = True

    source_count = len(kept)
    truncated = budget_cut or source_count < len(entries)
    return Digest(
        reviewer_id=reviewer.id,
        text=PUBLICATION_SEPARATOR.join(kept),
        truncated=truncated,
        source_count=source_count,
    )


# Minimum annotated reviewers per paper below which evaluation gets noisy.
SPARSE_ANNOTATION_FLOOR = 5


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Collect warnings and integrity errors without mutating the dataset."""
    report = ValidationReport(
        dataset=ds.name,
        n_papers=len(ds.papers),
        n_reviewers=len(ds.reviewers),
        n_annotations=len(ds.annotations),
    )

    paper_ids = set()
    for paper in ds.papers:
        if paper.id in paper_ids:
            report.errors.append(f"duplicate paper id {paper.id!r}")
        paper_ids.add(paper.id)
        if not paper.abstract.strip():
            report.warnings.append(
                ValidationIssue("EmptyAbstract", paper.id, f"paper {paper.id!r} has an empty abstract")
            )

    reviewer_ids = set()
    for reviewer in ds.reviewers:
        if reviewer.id in reviewer_ids:
            report.errors.append(f"duplicate reviewer id {reviewer.id!r}")
        reviewer_ids.add(reviewer.id)
        if not reviewer.publications:
            report.warnings.append(
                ValidationIssue("EmptyHistory", reviewer.id, f"reviewer {reviewer.id!r} has no publications")
            )

    per_paper_count: dict[str, int] = {p.id: 0 for p in ds.papers}
    seen_pairs: set[tuple[str, str]] = set()
    for ann in ds.annotations:
        if ann.paper_id not in paper_ids:
            report.errors.append(f"annotation references unknown paper {ann.paper_id!r}")
        if ann.reviewer_id not in reviewer_ids:
            report.errors.append(f"annotation references unknown reviewer {ann.reviewer_id!r}")
        if ann.relevance not in RELEVANCE_LABELS:
            report.errors.append(
                f"annotation ({ann.paper_id!r}, {ann.reviewer_id!r}) has relevance {ann.relevance}"
            )
        pair = (ann.paper_id, ann.reviewer_id)
        if pair in seen_pairs:
            report.errors.append(f"duplicate annotation for {pair}")
        seen_pairs.add(pair)
        if ann.paper_id in per_paper_count:
            per_paper_count[ann.paper_id] += 1

    for paper_id, count in per_paper_count.items():
        if 0 < count < SPARSE_ANNOTATION_FLOOR:
            report.warnings.append(
                ValidationIssue(
                    "SparseAnnotations",
                    paper_id,
                    f"paper {paper_id!r} has only {count} annotated reviewers",
                )
            )

    return report
