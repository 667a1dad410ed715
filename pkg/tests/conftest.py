from __future__ import annotations

import json

import pytest

from revmatch.fixtures import generate_planted_fixture


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def make_dataset_dir(root, papers, reviewers, annotations):
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl(root / "papers.jsonl", papers)
    write_jsonl(root / "reviewers.jsonl", reviewers)
    write_jsonl(root / "annotations.jsonl", annotations)
    return root


@pytest.fixture()
def tiny_dataset_dir(tmp_path):
    """Two papers, three reviewers, four annotations."""
    papers = [
        {"id": "p1", "title": "Graph retrieval", "abstract": "Matching graphs."},
        {"id": "p2", "title": "Dense ranking", "abstract": "Vectors for ranking."},
    ]
    reviewers = [
        {
            "id": "r1",
            "publications": [
                {"title": "Graphs at scale", "abstract": "Graph systems."},
                {"title": "Graph matching", "abstract": "Matching things."},
            ],
        },
        {"id": "r2", "publications": [{"title": "Ranking survey", "abstract": "All about ranks."}]},
        {"id": "r3", "publications": []},
    ]
    annotations = [
        {"paper_id": "p1", "reviewer_id": "r1", "relevance": 3},
        {"paper_id": "p1", "reviewer_id": "r2", "relevance": 1},
        {"paper_id": "p2", "reviewer_id": "r2", "relevance": 2},
        {"paper_id": "p2", "reviewer_id": "r3", "relevance": 0},
    ]
    return make_dataset_dir(tmp_path / "tiny", papers, reviewers, annotations)


@pytest.fixture(scope="session")
def planted(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    return generate_planted_fixture(root)
