"""Coarse candidate retrieval: lexical and semantic streams fused by rank.

Stream A scores linearized profiles with cosine similarity over raw,
l2-normalized term frequencies. Stream B scores a submission embedding
against a reviewer's publication embeddings, averaging the top-m cosines.
Both streams are converted to ranks and combined with weighted reciprocal
rank fusion; the top-M reviewers form the candidate set handed to the
committee stage.

Everything here is a pure function over immutable inputs; per-paper scoring
can run fully in parallel with no shared state.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DimensionMismatch, PoolMismatch

_TOKEN = re.compile(r"[^\W_]+")

#: Floor semantic score for reviewers with no publication history.
EMPTY_HISTORY_SCORE = -1.0


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; duplicates preserved."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class TermVector:
    """Sparse l2-normalized term-frequency vector (empty means all-zero)."""

    entries: Mapping[str, float]

    @property
    def norm(self) -> float:
        return math.sqrt(math.fsum(w * w for w in self.entries.values()))

    def is_zero(self) -> bool:
        return not self.entries


def tf_vector(tokens: Sequence[str]) -> TermVector:
    counts: dict[str, int] = {}
    for token in tokens:
        counts[token] = counts.get(token, 0) + 1
    if not counts:
        return TermVector({})
    norm = math.sqrt(math.fsum(c * c for c in counts.values()))
    return TermVector({term: count / norm for term, count in counts.items()})


def tf_cosine(u: TermVector, v: TermVector) -> float:
    """Dot product of two unit term vectors; 0 when either is all-zero."""
    if u.is_zero() or v.is_zero():
        return 0.0
    small, large = (u.entries, v.entries) if len(u.entries) <= len(v.entries) else (v.entries, u.entries)
    return math.fsum(weight * large[term] for term, weight in small.items() if term in large)


@dataclass(frozen=True)
class Embedding:
    subject_id: str
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    @classmethod
    def normalized(cls, subject_id: str, values: Sequence[float]) -> "Embedding":
        norm = math.sqrt(math.fsum(v * v for v in values))
        if norm == 0.0:
            return cls(subject_id, tuple(float(v) for v in values))
        return cls(subject_id, tuple(float(v) / norm for v in values))


def dot(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    return math.fsum(x * y for x, y in zip(a.values, b.values))


def semantic_score(e_p: Embedding, history: Sequence[Embedding], m: int) -> float:
    """Mean cosine over the top-m most similar history embeddings.

    m is clamped to the history size; an empty history scores the floor
    value so the reviewer stays rankable.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not history:
        return EMPTY_HISTORY_SCORE
    sims = sorted((dot(e_p, e) for e in history), reverse=True)
    take = min(m, len(sims))
    return math.fsum(sims[:take]) / take


def rank_by_score(scores: Mapping[str, float]) -> dict[str, int]:
    """1-based ranks, highest score first, exact ties broken by id ascending."""
    ordered = sorted(scores, key=lambda rid: (-scores[rid], rid))
    return {rid: position for position, rid in enumerate(ordered, start=1)}


def rrf_fuse(
    rank_a: Mapping[str, int],
    rank_b: Mapping[str, int],
    k: float,
    w1: float,
    w2: float,
) -> dict[str, float]:
    """Weighted reciprocal rank fusion of two rank maps over the same pool."""
    if k <= 0:
        raise ValueError(f"rank fusion constant must be positive, got {k}")
    for name, w in (("w1", w1), ("w2", w2)):
        if not 0.0 <= w <= 2.0:
            raise ValueError(f"{name} must lie in [0, 2], got {w}")
    if rank_a.keys() != rank_b.keys():
        only_a = sorted(rank_a.keys() - rank_b.keys())
        only_b = sorted(rank_b.keys() - rank_a.keys())
        raise PoolMismatch(f"rank maps cover different pools (only A: {only_a}, only B: {only_b})")
    return {rid: w1 / (k + rank_a[rid]) + w2 / (k + rank_b[rid]) for rid in rank_a}


@dataclass(frozen=True)
class ScoredCandidate:
    reviewer_id: str
    s_rrf: float
    s_tf: float = 0.0
    s_emb: float = 0.0
    rank_a: int = 0
    rank_b: int = 0


@dataclass(frozen=True)
class CandidateSet:
    paper_id: str
    candidates: tuple[ScoredCandidate, ...]

    def ids(self) -> tuple[str, ...]:
        return tuple(c.reviewer_id for c in self.candidates)


def select_candidates(
    paper_id: str,
    fused: Mapping[str, float],
    top_m: int,
    details: Mapping[str, ScoredCandidate] | None = None,
) -> CandidateSet:
    """Top reviewers by fused score (descending, id tie-break).

    ``details`` optionally supplies fully populated per-reviewer score
    records; otherwise the candidates carry only the fused score.
    """
    if top_m < 1:
        raise ValueError("candidate set size must be >= 1")
    ordered = sorted(fused, key=lambda rid: (-fused[rid], rid))[:top_m]
    candidates = []
    for rid in ordered:
        if details is not None and rid in details:
            candidates.append(details[rid])
        else:
            candidates.append(ScoredCandidate(reviewer_id=rid, s_rrf=fused[rid]))
    return CandidateSet(paper_id=paper_id, candidates=tuple(candidates))


@dataclass(frozen=True)
class PaperScores:
    """All per-reviewer retrieval components for one paper's pool."""

    paper_id: str
    s_tf: dict[str, float] = field(default_factory=dict)
    s_emb: dict[str, float] = field(default_factory=dict)
    rank_a: dict[str, int] = field(default_factory=dict)
    rank_b: dict[str, int] = field(default_factory=dict)
    s_rrf: dict[str, float] = field(default_factory=dict)

    def candidate_details(self) -> dict[str, ScoredCandidate]:
        return {
            rid: ScoredCandidate(
                reviewer_id=rid,
                s_rrf=self.s_rrf[rid],
                s_tf=self.s_tf[rid],
                s_emb=self.s_emb[rid],
                rank_a=self.rank_a[rid],
                rank_b=self.rank_b[rid],
            )
            for rid in self.s_rrf
        }


def rank_stream_a(s_tf: Mapping[str, float], empty_profiles: frozenset[str] = frozenset()) -> dict[str, int]:
    """Rank the lexical stream; reviewers with no profile share the tail.

    Profile-less reviewers sort after every profiled reviewer (even those
    with zero overlap), then ids break ties as usual.
    """
    ordered = sorted(
        s_tf, key=lambda rid: (-s_tf[rid], rid in empty_profiles, rid)
    )
    return {rid: position for position, rid in enumerate(ordered, start=1)}


def stream_a_scores(
    paper_profile_vec: TermVector,
    reviewer_profile_vecs: Mapping[str, TermVector],
    pool: Sequence[str],
) -> tuple[dict[str, float], frozenset[str]]:
    """Lexical scores over a pool, plus the set of profile-less reviewers."""
    s_tf: dict[str, float] = {}
    empty: set[str] = set()
    for rid in pool:
        vec = reviewer_profile_vecs.get(rid, TermVector({}))
        if vec.is_zero():
            empty.add(rid)
        s_tf[rid] = tf_cosine(paper_profile_vec, vec)
    return s_tf, frozenset(empty)


def stream_b_scores(
    paper_embedding: Embedding | None,
    reviewer_histories: Mapping[str, Sequence[Embedding]],
    pool: Sequence[str],
    m: int,
) -> dict[str, float]:
    """Semantic scores over a pool; history-less reviewers get the floor."""
    s_emb: dict[str, float] = {}
    for rid in pool:
        history = reviewer_histories.get(rid, ())
        if paper_embedding is None or not history:
            s_emb[rid] = EMPTY_HISTORY_SCORE
        else:
            s_emb[rid] = semantic_score(paper_embedding, history, m)
    return s_emb


def score_pool(
    paper_id: str,
    pool: Sequence[str],
    paper_profile_vec: TermVector,
    reviewer_profile_vecs: Mapping[str, TermVector],
    paper_embedding: Embedding | None,
    reviewer_histories: Mapping[str, Sequence[Embedding]],
    m: int,
    k: float,
    w1: float,
    w2: float,
) -> PaperScores:
    """Compute both streams and their fusion for one paper's reviewer pool."""
    s_tf, empty = stream_a_scores(paper_profile_vec, reviewer_profile_vecs, pool)
    s_emb = stream_b_scores(paper_embedding, reviewer_histories, pool, m)
    rank_a = rank_stream_a(s_tf, empty)
    rank_b = rank_by_score(s_emb)
    fused = rrf_fuse(rank_a, rank_b, k, w1, w2)
    return PaperScores(paper_id=paper_id, s_tf=s_tf, s_emb=s_emb, rank_a=rank_a, rank_b=rank_b, s_rrf=fused)
