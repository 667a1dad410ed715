"""Synthetic planted-instance dataset for offline end-to-end checks.

Generates a small benchmark (default 10 papers, 50 reviewers, 20 annotated
reviewers per paper) in which each paper has exactly one relevance-3
"planted" reviewer whose fixture profile covers the paper's tags and whose
history contains the paper's own text (hence its exact hash embedding).
Distractors are shaped to separate the pipeline modes:

* fillers: disjoint vocabulary, pseudo-orthogonal embeddings; pure noise.
* decoys (paper p00 only): profiles that repeat the paper's topic and
  method words inside a single dimension, so lexical cosine loves them
  while the per-dimension rubric does not, and histories holding two
  copies of the paper text, so the semantic stream loves them too. Both
  retrieval streams rank all five decoys above the planted reviewer; the
  committee stage is what corrects the inversion.
* mimics (papers p01-p03): profiles tag-equivalent to the planted
  reviewer's (the committee cannot tell them apart) with noise histories
  (retrieval can). With five mimics on p02/p03 the committee-only mode
  drops the planted reviewer out of the top five there.

Score gaps rely only on exact scale ties (identical texts, identical tag
multisets) and coarse similarity bands, never on the ordering of hash-noise
cosines, so the construction holds for any embedding seed; the generator
still verifies the intended orderings numerically before writing anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import corpus, retrieval
from .config import RunConfig
from .profiling import source_hash
from .providers import HashEmbed

PLANTED_DATASET_NAME = "planted"

_PAD_TOKENS_PLANTED = 3  # lexical cosine 9/(3*sqrt(18)) ~= 0.707
_PAD_TOKENS_MIMIC = 4  # lexical cosine 9/(3*sqrt(21)) ~= 0.655, below planted


@dataclass(frozen=True)
class PlantedFixture:
    dataset_dir: Path
    profile_fixture_path: Path
    config_path: Path
    planted_by_paper: dict[str, str]


def _paper(index: int) -> corpus.Paper:
    return corpus.Paper(
        id=f"p{index:02d}",
        title=f"Planted study {index:02d}",
        abstract=f"Synthetic subject matter for benchmark paper {index:02d}.",
    )


def _paper_tags(index: int) -> dict[str, list[str]]:
    return {
        "topics": [f"top{index}a", f"top{index}b", f"top{index}c"],
        "methodologies": [f"met{index}a", f"met{index}b", f"met{index}c"],
        "applications": [f"app{index}a", f"app{index}b", f"app{index}c"],
    }


def _padded_tags(index: int, prefix: str, pad_tokens: int) -> dict[str, list[str]]:
    """Paper tags plus one multi-token pad tag per dimension.

    The pad tag keeps per-dimension coverage perfect (soft-Jaccard 3/4) while
    its extra tokens dilute the lexical cosine by a controlled amount.
    """
    tags = _paper_tags(index)
    for dim_letter, dim in (("t", "topics"), ("m", "methodologies"), ("a", "applications")):
        pad = " ".join(f"{prefix}{index}{dim_letter}{chr(ord('u') + j)}" for j in range(pad_tokens))
        tags[dim] = tags[dim] + [pad]
    return tags


def _decoy_tags(index: int) -> dict[str, list[str]]:
    """All the right words crammed into the wrong dimension."""
    base = _paper_tags(index)
    return {
        "topics": base["topics"] + base["methodologies"][:2],
        "methodologies": [],
        "applications": [],
    }


def _filler_tags(filler_index: int) -> dict[str, list[str]]:
    return {
        "topics": [f"fil{filler_index}a", f"fil{filler_index}b", f"fil{filler_index}c"],
        "methodologies": [f"fil{filler_index}d"],
        "applications": [f"fil{filler_index}e"],
    }


def _junk_pub(tag: str) -> corpus.Publication:
    return corpus.Publication(
        title=f"Background note {tag}",
        abstract=f"Unrelated filler content {tag}.",
    )


def _paper_pub(paper: corpus.Paper) -> corpus.Publication:
    return corpus.Publication(title=paper.title, abstract=paper.abstract)


def build_planted_dataset(n_papers: int = 10) -> tuple[corpus.Dataset, dict[str, dict[str, list[str]]], dict[str, str]]:
    """Assemble the dataset plus per-subject profile tags.

    Returns (dataset, tags by subject id, planted reviewer by paper id).
    """
    if n_papers < 5:
        raise ValueError("the planted construction needs at least 5 papers")

    papers = [_paper(i) for i in range(n_papers)]
    tags: dict[str, dict[str, list[str]]] = {p.id: _paper_tags(i) for i, p in enumerate(papers)}

    reviewers: list[corpus.ReviewerRecord] = []
    annotations: list[corpus.Annotation] = []
    planted_by_paper: dict[str, str] = {}

    # Decoys exist only for paper 0; two per semantic band share junk text so
    # within-band order falls back to the id tie-break, never to noise.
    decoy_histories = {
        "r_dec_a": [_paper_pub(papers[0]), _paper_pub(papers[0])],
        "r_dec_b": [_paper_pub(papers[0]), _paper_pub(papers[0])],
        "r_dec_c": [_paper_pub(papers[0]), _paper_pub(papers[0]), _junk_pub("decoy-band")],
        "r_dec_d": [_paper_pub(papers[0]), _paper_pub(papers[0]), _junk_pub("decoy-band")],
        "r_dec_e": [_paper_pub(papers[0]), _junk_pub("decoy-tail")],
    }
    for rid, history in decoy_histories.items():
        reviewers.append(corpus.ReviewerRecord(id=rid, publications=tuple(history)))
        tags[rid] = _decoy_tags(0)

    n_fillers = 24
    for f in range(n_fillers):
        rid = f"r_fil_{f:02d}"
        reviewers.append(
            corpus.ReviewerRecord(
                id=rid,
                publications=tuple(_junk_pub(f"{rid}-{slot}") for slot in range(3)),
            )
        )
        tags[rid] = _filler_tags(f)

    mimic_counts = {1: 1, 2: 5, 3: 5}
    mimics_by_paper: dict[int, list[str]] = {}
    for paper_index, count in mimic_counts.items():
        if paper_index >= n_papers:
            continue
        mimics = []
        for j in range(count):
            rid = f"r_mim_p{paper_index}_{j}"
            reviewers.append(
                corpus.ReviewerRecord(
                    id=rid,
                    publications=tuple(_junk_pub(f"{rid}-{slot}") for slot in range(3)),
                )
            )
            tags[rid] = _padded_tags(paper_index, "mim", _PAD_TOKENS_MIMIC)
            mimics.append(rid)
        mimics_by_paper[paper_index] = mimics

    for i, paper in enumerate(papers):
        rid = f"r_tru_{i:02d}"
        reviewers.append(
            corpus.ReviewerRecord(
                id=rid,
                publications=(
                    _junk_pub(f"{rid}-0"),
                    _junk_pub(f"{rid}-1"),
                    _paper_pub(paper),
                ),
            )
        )
        tags[rid] = _padded_tags(i, "pad", _PAD_TOKENS_PLANTED)
        planted_by_paper[paper.id] = rid

    pool_size = 20
    for i, paper in enumerate(papers):
        pool: list[tuple[str, int]] = [(planted_by_paper[paper.id], 3)]
        if i == 0:
            pool += [(rid, 1) for rid in decoy_histories]
        pool += [(rid, 0) for rid in mimics_by_paper.get(i, [])]
        fillers_needed = pool_size - len(pool)
        pool += [(f"r_fil_{f:02d}", 0) for f in range(fillers_needed)]
        for rid, relevance in pool:
            annotations.append(corpus.Annotation(paper.id, rid, relevance))

    dataset = corpus.Dataset(
        name=PLANTED_DATASET_NAME,
        papers=tuple(papers),
        reviewers=tuple(reviewers),
        annotations=tuple(annotations),
    )
    return dataset, tags, planted_by_paper


def _verify_bands(ds: corpus.Dataset, planted_by_paper: dict[str, str], dim: int, seed: int, m: int) -> None:
    """Check the semantic bands the construction relies on, for this seed."""
    embedder = HashEmbed(dim=dim, seed=seed)
    model = "verify"

    def embed_one(text: str) -> retrieval.Embedding:
        return retrieval.Embedding.normalized("", embedder.embed_batch([text], model)[0])

    reviewer_by_id = ds.reviewer_by_id()
    for paper in ds.papers:
        paper_emb = embed_one(corpus.paper_text(paper))
        pool = sorted(ds.annotated_pool(paper.id))
        scores = {}
        for rid in pool:
            history = [
                embed_one(corpus.publication_text(p.title, p.abstract))
                for p in reviewer_by_id[rid].publications
            ]
            scores[rid] = retrieval.semantic_score(paper_emb, history, m)
        planted = planted_by_paper[paper.id]
        decoys = [rid for rid in pool if rid.startswith("r_dec_")]
        others = [rid for rid in pool if rid != planted and rid not in decoys]
        if any(scores[rid] <= scores[planted] for rid in decoys):
            raise AssertionError(f"decoy semantic band collapsed for {paper.id}")
        if any(scores[rid] >= scores[planted] for rid in others):
            raise AssertionError(f"noise overtook the planted reviewer on {paper.id}")


def generate_planted_fixture(
    out_dir: str | Path,
    n_papers: int = 10,
    embed_dim: int = 256,
    seed: int = 0,
    digest_char_budget: int = 20000,
    verify: bool = True,
) -> PlantedFixture:
    """Write the planted dataset, its profiler fixture, and a ready config."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    dataset_dir = root / "dataset"

    ds, tags, planted_by_paper = build_planted_dataset(n_papers)
    if verify:
        _verify_bands(ds, planted_by_paper, dim=embed_dim, seed=seed, m=3)
    corpus.save_dataset(ds, dataset_dir)

    # Canned profiler responses keyed by the profiled text's hash: papers are
    # profiled from "title. abstract", reviewers from their digest.
    fixture_path = root / "profile_fixture.jsonl"
    with fixture_path.open("w", encoding="utf-8") as handle:
        for paper in ds.papers:
            handle.write(
                json.dumps(
                    {
                        "source_hash": source_hash(corpus.paper_text(paper)),
                        "response": json.dumps(tags[paper.id]),
                    }
                )
                + "\n"
            )
        for reviewer in ds.reviewers:
            digest = corpus.build_reviewer_digest(reviewer, digest_char_budget)
            handle.write(
                json.dumps(
                    {
                        "source_hash": source_hash(digest.text),
                        "response": json.dumps(tags[reviewer.id]),
                    }
                )
                + "\n"
            )

    config = RunConfig(
        dataset_path=str(dataset_dir),
        dataset_name=PLANTED_DATASET_NAME,
        out_dir=str(root / "out"),
        mode="full",
        profiler="fixture",
        profile_fixture=str(fixture_path),
        embedder="hash",
        embed_dim=embed_dim,
        judge="deterministic",
        seed=seed,
        digest_char_budget=digest_char_budget,
    )
    config.validate()
    config_path = root / "planted_config.json"
    config_path.write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")

    return PlantedFixture(
        dataset_dir=dataset_dir,
        profile_fixture_path=fixture_path,
        config_path=config_path,
        planted_by_paper=planted_by_paper,
    )


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Generate the planted benchmark fixture.")
    parser.add_argument("out_dir", help="directory to write the fixture into")
    parser.add_argument("--papers", type=int, default=10)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    fixture = generate_planted_fixture(args.out_dir, n_papers=args.papers, embed_dim=args.dim, seed=args.seed)
    print(f"dataset: {fixture.dataset_dir}")
    print(f"profiler fixture: {fixture.profile_fixture_path}")
    print(f"config: {fixture.config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
