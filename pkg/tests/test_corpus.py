from __future__ import annotations

import copy

import pytest

from revmatch import corpus
from revmatch.errors import DanglingReference, DuplicateId, EmptyHistory, MalformedRecord

from conftest import make_dataset_dir


def test_load_counts(tiny_dataset_dir):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    assert (len(ds.papers), len(ds.reviewers), len(ds.annotations)) == (2, 3, 4)
    assert ds.name == "tiny"


def test_dangling_reviewer_reference(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t", "abstract": "a"}],
        [{"id": "r1", "publications": []}],
        [{"paper_id": "p1", "reviewer_id": "r99", "relevance": 2}],
    )
    with pytest.raises(DanglingReference):
        corpus.load_dataset(root, "ds")


def test_relevance_out_of_range(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t", "abstract": "a"}],
        [{"id": "r1", "publications": []}],
        [{"paper_id": "p1", "reviewer_id": "r1", "relevance": 5}],
    )
    with pytest.raises(MalformedRecord) as excinfo:
        corpus.load_dataset(root, "ds")
    assert excinfo.value.line == 1


def test_missing_required_key(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t"}],
        [{"id": "r1", "publications": []}],
        [],
    )
    with pytest.raises(MalformedRecord):
        corpus.load_dataset(root, "ds")


def test_unknown_keys_ignored(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t", "abstract": "a", "venue": "X"}],
        [{"id": "r1", "publications": [], "homepage": "y"}],
        [],
    )
    ds = corpus.load_dataset(root, "ds")
    assert ds.papers[0].id == "p1"


def test_duplicate_paper_id(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t", "abstract": "a"}, {"id": "p1", "title": "u", "abstract": "b"}],
        [{"id": "r1", "publications": []}],
        [],
    )
    with pytest.raises(DuplicateId):
        corpus.load_dataset(root, "ds")


def test_duplicate_annotation_pair(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": "p1", "title": "t", "abstract": "a"}],
        [{"id": "r1", "publications": []}],
        [
            {"paper_id": "p1", "reviewer_id": "r1", "relevance": 1},
            {"paper_id": "p1", "reviewer_id": "r1", "relevance": 2},
        ],
    )
    with pytest.raises(DuplicateId):
        corpus.load_dataset(root, "ds")


def _reviewer(*pubs):
    return corpus.ReviewerRecord(
        id="r1", publications=tuple(corpus.Publication(t, a) for t, a in pubs)
    )


def test_digest_full_budget():
    digest = corpus.build_reviewer_digest(_reviewer(("T1", "A1"), ("T2", "A2")), 10000)
    assert digest.text == "T1. A1\nT2. A2"
    assert not digest.truncated
    assert digest.source_count == 2


def test_digest_budget_keeps_most_recent():
    # Budget exactly fits the newest publication; the older one is dropped.
    budget = len("T2. A2")
    digest = corpus.build_reviewer_digest(_reviewer(("T1", "A1"), ("T2", "A2")), budget)
    assert digest.text == "T2. A2"
    assert digest.truncated
    assert digest.source_count == 1


def test_digest_budget_cuts_single_publication():
    digest = corpus.build_reviewer_digest(_reviewer(("Long title here", "and abstract")), 6)
    assert digest.text == "Long t"
    assert digest.truncated
    assert digest.source_count == 1


def test_digest_empty_history():
    with pytest.raises(EmptyHistory):
        corpus.build_reviewer_digest(_reviewer(), 100)


def test_digest_rejects_nonpositive_budget():
    with pytest.raises(ValueError):
        corpus.build_reviewer_digest(_reviewer(("T", "A")), 0)


def test_digest_unbounded_contains_each_title_once_in_order():
    pubs = [(f"Title-{i}", f"Abstract {i}") for i in range(7)]
    digest = corpus.build_reviewer_digest(_reviewer(*pubs), 10**6)
    positions = [digest.text.find(title) for title, _ in pubs]
    assert all(p >= 0 for p in positions)
    assert positions == sorted(positions)
    for title, _ in pubs:
        assert digest.text.count(title) == 1


def test_round_trip(tiny_dataset_dir, tmp_path):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    out = tmp_path / "copy"
    corpus.save_dataset(ds, out)
    again = corpus.load_dataset(out, "tiny")
    assert again == ds


def test_validate_clean_dataset(tmp_path):
    root = make_dataset_dir(
        tmp_path / "ds",
        [{"id": f"p{i}", "title": "t", "abstract": "a"} for i in range(2)],
        [{"id": f"r{j}", "publications": [{"title": "x", "abstract": "y"}]} for j in range(5)],
        [
            {"paper_id": f"p{i}", "reviewer_id": f"r{j}", "relevance": 1}
            for i in range(2)
            for j in range(5)
        ],
    )
    report = corpus.validate_dataset(corpus.load_dataset(root, "ds"))
    assert report.ok
    assert report.errors == []
    assert report.warnings == []


def test_validate_warnings(tiny_dataset_dir):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    report = corpus.validate_dataset(ds)
    kinds = {(w.kind, w.subject_id) for w in report.warnings}
    assert ("EmptyHistory", "r3") in kinds
    assert any(kind == "SparseAnnotations" for kind, _ in kinds)
    assert report.ok  # warnings are not errors


def test_validate_counts_echoed():
    # Shape of the smallest public benchmark: 34 papers, 190 reviewers,
    # 393 annotated pairs.
    papers = tuple(corpus.Paper(f"p{i}", "t", "a") for i in range(34))
    reviewers = tuple(
        corpus.ReviewerRecord(f"r{j}", (corpus.Publication("x", "y"),)) for j in range(190)
    )
    annotations = []
    i = 0
    for n in range(393):
        annotations.append(corpus.Annotation(f"p{n % 34}", f"r{(n * 7) % 190}", n % 4))
        i += 1
    # Deduplicate pairs while preserving the 393 count by construction.
    assert len({(a.paper_id, a.reviewer_id) for a in annotations}) == 393
    ds = corpus.Dataset("neurips-shaped", papers, reviewers, tuple(annotations))
    report = corpus.validate_dataset(ds)
    assert (report.n_papers, report.n_reviewers, report.n_annotations) == (34, 190, 393)


def test_validate_is_pure(tiny_dataset_dir):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    before = copy.deepcopy(ds)
    corpus.validate_dataset(ds)
    assert ds == before


def test_validate_reports_integrity_errors():
    ds = corpus.Dataset(
        "broken",
        (corpus.Paper("p1", "t", "a"),),
        (corpus.ReviewerRecord("r1", ()),),
        (corpus.Annotation("p1", "ghost", 1),),
    )
    report = corpus.validate_dataset(ds)
    assert not report.ok
    assert any("ghost" in e for e in report.errors)
