"""Rubric-driven committee evaluation of candidate reviewers.

For each persona, every profile dimension is matched one-to-one between
paper tags and reviewer tags, scored into a 0-3 band from coverage and
soft-Jaccard ratios, combined into a weighted continuous score, and
discretized. The committee's mean label feeds a final reciprocal-rank term
added on top of the retrieval fusion score.

Tag matching is pluggable: the deterministic matcher keeps the whole rubric
reproducible offline, while an LLM judge can take over matching behind the
same shapes (falling back to the deterministic rules when it misbehaves).
"""

from __future__ import annotations

import json
import logging
import statistics
from bisect import bisect_right
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .errors import (
    InvalidThresholds,
    JudgeUnavailable,
    ProviderError,
    UnparseableOutput,
    VerdictOutsideCandidates,
)
from .profiling import DIMENSIONS, Profile, template_body
from .retrieval import tokenize

logger = logging.getLogger(__name__)

STRONG_WEIGHT = 1.0
RELATED_WEIGHT = 0.5

DEFAULT_THRESHOLDS = (0.35, 1.35, 2.35)


@dataclass(frozen=True)
class Persona:
    name: str
    weights: tuple[float, float, float]  # (topics, methodologies, applications)
    prompt_template_id: str

    def __post_init__(self):
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"persona weights must be non-negative and sum to 1: {self.weights}")

    def weight_for(self, dimension: str) -> float:
        return self.weights[DIMENSIONS.index(dimension)]


#: Weight presets that differentiate personas when matching is deterministic.
PERSONA_PRESETS = (
    ("AreaChair", (0.5, 0.3, 0.2), "rubric_area_chair_v1"),
    ("TheoreticalExpert", (0.2, 0.6, 0.2), "rubric_theoretical_v1"),
    ("ApplicationExpert", (0.2, 0.2, 0.6), "rubric_application_v1"),
    ("SystemsExpert", (0.3, 0.4, 0.3), "rubric_systems_v1"),
)


def default_committee(uniform_weights: tuple[float, float, float] | None = None) -> tuple[Persona, ...]:
    """The four standard personas.

    With ``uniform_weights`` every persona shares one weight triple and
    differs only by prompt (the live-judging configuration); otherwise each
    persona gets its preset triple so the committee stays diverse offline.
    """
    return tuple(
        Persona(name, uniform_weights or weights, template)
        for name, weights, template in PERSONA_PRESETS
    )


@dataclass(frozen=True)
class TagMatch:
    paper_tag: str
    reviewer_tag: str
    weight: float


@dataclass(frozen=True)
class DimensionResult:
    dimension: str
    overlap: float
    coverage: float
    soft_jaccard: float
    s_d: int
    matches: tuple[TagMatch, ...]
    absent: bool = False


@dataclass(frozen=True)
class PersonaVerdict:
    persona: str
    s_cont: float
    label: int
    dimensions: tuple[DimensionResult, ...]


@dataclass(frozen=True)
class CommitteeVerdict:
    paper_id: str
    reviewer_id: str
    per_persona: tuple[PersonaVerdict, ...]
    s_llm: float
    fallback_used: bool = False


@dataclass(frozen=True)
class FinalScore:
    paper_id: str
    reviewer_id: str
    s_rrf: float
    s_final: float
    rank_llm: int | None = None
    s_llm: float | None = None


class TagMatcher(Protocol):
    def score(self, paper_tag: str, reviewer_tag: str) -> float: ...


class DeterministicTagMatcher:
    """Reproducible pairwise tag scoring.

    Strong (1.0) when the tags are equal after per-token trailing-"s"
    stripping; related (0.5) when their token sets have Jaccard >= 0.5 after
    the same normalization, or the pair appears in the synonym table.
    """

    def __init__(self, synonyms: Sequence[tuple[str, str]] = ()):
        self._synonyms = {frozenset(pair) for pair in synonyms}

    @staticmethod
    def _token_set(tag: str) -> frozenset[str]:
        return frozenset(
            token[:-1] if token.endswith("s") and len(token) > 1 else token
            for token in tokenize(tag)
        )

    def score(self, paper_tag: str, reviewer_tag: str) -> float:
        a = self._token_set(paper_tag)
        b = self._token_set(reviewer_tag)
        if a and a == b:
            return STRONG_WEIGHT
        if frozenset((paper_tag, reviewer_tag)) in self._synonyms:
            return RELATED_WEIGHT
        if a and b:
            jaccard = len(a & b) / len(a | b)
            if jaccard >= 0.5:
                return RELATED_WEIGHT
        return 0.0


def match_tags(
    paper_tags: Sequence[str],
    reviewer_tags: Sequence[str],
    matcher: TagMatcher,
) -> tuple[tuple[TagMatch, ...], float]:
    """Greedy one-to-one assignment of paper tags to reviewer tags.

    All pairs are scored, sorted by weight descending then lexicographically,
    and accepted while both endpoints are unused and the weight is positive.
    Matcher failures degrade that pair to weight 0. Returns the accepted
    matches and their summed weight (the dimension overlap).
    """
    scored: list[tuple[float, str, str]] = []
    for pt in paper_tags:
        for rt in reviewer_tags:
            try:
                weight = matcher.score(pt, rt)
            except Exception as exc:  # noqa: BLE001 - degrade, never abort the rubric
                logger.warning("tag matcher failed on (%r, %r): %s", pt, rt, exc)
                weight = 0.0
            scored.append((weight, pt, rt))
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))

    used_paper: set[str] = set()
    used_reviewer: set[str] = set()
    matches: list[TagMatch] = []
    for weight, pt, rt in scored:
        if weight <= 0.0:
            break
        if pt in used_paper or rt in used_reviewer:
            continue
        used_paper.add(pt)
        used_reviewer.add(rt)
        matches.append(TagMatch(pt, rt, weight))
    overlap = sum(m.weight for m in matches)
    return tuple(matches), overlap


@dataclass(frozen=True)
class DimensionScores:
    coverage: float
    soft_jaccard: float
    s_d: int
    absent: bool


def dimension_score(overlap: float, n_paper: int, n_reviewer: int) -> DimensionScores:
    """Banded 0-3 score from the coverage and soft-Jaccard ratios.

    Bands (checked top-down): 3 when both ratios reach 2/3; 2 when coverage
    reaches 1/2 and soft-Jaccard 1/3; 1 for any positive overlap; else 0.
    Threshold checks cross-multiply so half-weight overlaps stay exact. A
    paper side with no tags marks the dimension absent.
    """
    if overlap < 0 or overlap > min(n_paper, n_reviewer):
        raise ValueError(
            f"overlap {overlap} violates one-to-one bound for sizes ({n_paper}, {n_reviewer})"
        )
    if n_paper == 0:
        return DimensionScores(coverage=0.0, soft_jaccard=0.0, s_d=0, absent=True)

    coverage = overlap / n_paper
    union = n_paper + n_reviewer - overlap
    soft_jaccard = overlap / union if union > 0 else 0.0

    if 3 * overlap >= 2 * n_paper and 5 * overlap >= 2 * (n_paper + n_reviewer):
        s_d = 3
    elif 2 * overlap >= n_paper and 4 * overlap >= n_paper + n_reviewer:
        s_d = 2
    elif overlap > 0:
        s_d = 1
    else:
        s_d = 0
    return DimensionScores(coverage=coverage, soft_jaccard=soft_jaccard, s_d=s_d, absent=False)


def evaluate_dimension(
    dimension: str,
    paper_tags: Sequence[str],
    reviewer_tags: Sequence[str],
    matcher: TagMatcher,
    matches: tuple[TagMatch, ...] | None = None,
) -> DimensionResult:
    """Match one dimension's tag lists and band the result.

    ``matches`` short-circuits the pairwise matcher with a pre-computed
    one-to-one assignment (the LLM judge path).
    """
    if matches is None:
        matches, overlap = match_tags(paper_tags, reviewer_tags, matcher)
    else:
        overlap = sum(m.weight for m in matches)
    scores = dimension_score(overlap, len(paper_tags), len(reviewer_tags))
    return DimensionResult(
        dimension=dimension,
        overlap=overlap,
        coverage=scores.coverage,
        soft_jaccard=scores.soft_jaccard,
        s_d=scores.s_d,
        matches=matches,
        absent=scores.absent,
    )


def continuous_score(results: Sequence[DimensionResult], persona: Persona) -> float:
    """Persona-weighted sum of dimension scores.

    Absent dimensions are dropped and the remaining weights renormalized; a
    fully absent profile scores 0.
    """
    present = [r for r in results if not r.absent]
    if not present:
        return 0.0
    total_weight = sum(persona.weight_for(r.dimension) for r in present)
    if total_weight <= 0.0:
        return 0.0
    value = sum(persona.weight_for(r.dimension) * r.s_d for r in present) / total_weight
    # Renormalization can overshoot the label range by an ulp.
    return min(3.0, max(0.0, value))


def discretize(s_cont: float, thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS) -> int:
    """Map a continuous score to {0,1,2,3}; lower interval bounds inclusive."""
    t1, t2, t3 = thresholds
    if not t1 < t2 < t3:
        raise InvalidThresholds(f"thresholds must be strictly increasing, got {thresholds}")
    return bisect_right([t1, t2, t3], s_cont)


def aggregate_labels(labels: Sequence[int]) -> int:
    """Majority label over repeat runs; ties resolve to the (low) median."""
    counts: dict[int, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    best, best_count = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    if best_count * 2 > len(labels):
        return best
    return int(statistics.median_low(sorted(labels)))


def llm_match_tags(
    paper_tags: Sequence[str],
    reviewer_tags: Sequence[str],
    persona: Persona,
    judge,
    model_id: str,
    dimension: str,
    temperature: float = 0.1,
    repeat_index: int = 0,
) -> tuple[TagMatch, ...]:
    """Ask an LLM judge for a one-to-one match list for one dimension.

    The response must contain a JSON array of {paper_tag, reviewer_tag,
    weight} objects. Unknown tags and out-of-range weights are dropped;
    reuses of a tag keep the higher-weight match, then the earlier one.
    Raises ``JudgeUnavailable`` or ``UnparseableOutput``; callers fall back
    to the deterministic matcher.
    """
    from .profiling import template_version
    from .providers import ChatRequest, make_idempotency_key

    body = template_body(persona.prompt_template_id)
    prompt = (
        body.replace("{dimension}", dimension)
        .replace("{paper_tags}", json.dumps(list(paper_tags)))
        .replace("{reviewer_tags}", json.dumps(list(reviewer_tags)))
    )
    key = make_idempotency_key(
        model_id, prompt, temperature, template_version(persona.prompt_template_id), repeat_index
    )
    request = ChatRequest(
        model_id=model_id, prompt=prompt, temperature=temperature, idempotency_key=key
    )
    try:
        raw = judge.complete(request)
    except ProviderError as exc:
        raise JudgeUnavailable(f"judge call failed: {exc}") from exc

    matches = _parse_match_array(raw, set(paper_tags), set(reviewer_tags))
    return _enforce_one_to_one(matches)


def _parse_match_array(raw: str, paper_tags: set[str], reviewer_tags: set[str]) -> list[TagMatch]:
    start = raw.find("[")
    if start == -1:
        raise UnparseableOutput("no JSON array in judge output")
    decoder = json.JSONDecoder()
    payload = None
    index = start
    while index != -1:
        try:
            payload, _ = decoder.raw_decode(raw, index)
            break
        except json.JSONDecodeError:
            index = raw.find("[", index + 1)
    if not isinstance(payload, list):
        raise UnparseableOutput("judge output is not a JSON array")

    matches: list[TagMatch] = []
    for entry in payload:
        if not isinstance(entry, dict):
            continue
        pt = entry.get("paper_tag")
        rt = entry.get("reviewer_tag")
        weight = entry.get("weight")
        if pt not in paper_tags or rt not in reviewer_tags:
            logger.warning("judge proposed unknown tag pair (%r, %r); dropped", pt, rt)
            continue
        if weight not in (0, 0.0, RELATED_WEIGHT, STRONG_WEIGHT):
            logger.warning("judge proposed out-of-range weight %r; dropped", weight)
            continue
        matches.append(TagMatch(pt, rt, float(weight)))
    return matches


def _enforce_one_to_one(matches: Sequence[TagMatch]) -> tuple[TagMatch, ...]:
    ordered = sorted(enumerate(matches), key=lambda item: (-item[1].weight, item[0]))
    used_paper: set[str] = set()
    used_reviewer: set[str] = set()
    kept: list[tuple[int, TagMatch]] = []
    for index, match in ordered:
        if match.weight <= 0.0:
            continue
        if match.paper_tag in used_paper or match.reviewer_tag in used_reviewer:
            continue
        used_paper.add(match.paper_tag)
        used_reviewer.add(match.reviewer_tag)
        kept.append((index, match))
    kept.sort(key=lambda item: item[0])
    return tuple(match for _, match in kept)


def committee_evaluate(
    paper_profile: Profile,
    reviewer_profile: Profile,
    personas: Sequence[Persona],
    matcher: TagMatcher,
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS,
    judge=None,
    judge_model_id: str = "",
    repeats: int = 1,
    temperature: float = 0.1,
) -> CommitteeVerdict:
    """Score one (paper, reviewer) pair under every persona.

    With a judge configured, each persona's matching runs ``repeats`` times
    through the LLM and the labels are majority-aggregated; any judge failure
    silently falls back to the deterministic matcher and flags the verdict.
    Without a judge the rubric is fully deterministic and one run suffices.
    """
    if not personas:
        raise ValueError("committee needs at least one persona")

    fallback_used = False
    per_persona: list[PersonaVerdict] = []
    for persona in personas:
        runs: list[PersonaVerdict] = []
        run_count = repeats if judge is not None else 1
        for repeat_index in range(run_count):
            results = []
            for dimension in DIMENSIONS:
                paper_tags = paper_profile.tags(dimension)
                reviewer_tags = reviewer_profile.tags(dimension)
                matches = None
                if judge is not None and paper_tags and reviewer_tags:
                    try:
                        matches = llm_match_tags(
                            paper_tags,
                            reviewer_tags,
                            persona,
                            judge,
                            judge_model_id,
                            dimension,
                            temperature=temperature,
                            repeat_index=repeat_index,
                        )
                    except (JudgeUnavailable, UnparseableOutput) as exc:
                        logger.warning(
                            "judge failed for %s/%s on %s: %s; using deterministic matcher",
                            paper_profile.subject_id,
                            reviewer_profile.subject_id,
                            dimension,
                            exc,
                        )
                        fallback_used = True
                        matches = None
                results.append(
                    evaluate_dimension(dimension, paper_tags, reviewer_tags, matcher, matches)
                )
            s_cont = continuous_score(results, persona)
            label = discretize(s_cont, thresholds)
            runs.append(PersonaVerdict(persona.name, s_cont, label, tuple(results)))

        if len(runs) == 1:
            per_persona.append(runs[0])
        else:
            label = aggregate_labels([r.label for r in runs])
            representative = next((r for r in runs if r.label == label), runs[0])
            per_persona.append(
                PersonaVerdict(persona.name, representative.s_cont, label, representative.dimensions)
            )

    s_llm = sum(v.label for v in per_persona) / len(per_persona)
    return CommitteeVerdict(
        paper_id=paper_profile.subject_id,
        reviewer_id=reviewer_profile.subject_id,
        per_persona=tuple(per_persona),
        s_llm=s_llm,
        fallback_used=fallback_used,
    )


def final_fusion(
    fused: Mapping[str, float],
    verdicts: Sequence[CommitteeVerdict],
    k: float,
    w3: float,
) -> dict[str, FinalScore]:
    """Add the committee ranking as one more reciprocal-rank stream.

    Candidates are the verdict holders; they are ranked by committee score
    (ties: fused score descending, then id) and receive w3 / (k + rank) on
    top of their fusion score. Reviewers outside the candidate set keep their
    fusion score unchanged.
    """
    if k <= 0:
        raise ValueError(f"rank fusion constant must be positive, got {k}")
    if not 0.0 <= w3 <= 2.0:
        raise ValueError(f"w3 must lie in [0, 2], got {w3}")

    by_reviewer: dict[str, CommitteeVerdict] = {}
    for verdict in verdicts:
        if verdict.reviewer_id not in fused:
            raise VerdictOutsideCandidates(
                f"verdict for {verdict.reviewer_id!r} has no fused retrieval score"
            )
        by_reviewer[verdict.reviewer_id] = verdict

    ranked = sorted(
        by_reviewer.values(), key=lambda v: (-v.s_llm, -fused[v.reviewer_id], v.reviewer_id)
    )
    rank_llm = {v.reviewer_id: position for position, v in enumerate(ranked, start=1)}

    paper_id = verdicts[0].paper_id if verdicts else ""
    out: dict[str, FinalScore] = {}
    for rid, s_rrf in fused.items():
        if rid in rank_llm:
            out[rid] = FinalScore(
                paper_id=paper_id,
                reviewer_id=rid,
                s_rrf=s_rrf,
                s_final=s_rrf + w3 / (k + rank_llm[rid]),
                rank_llm=rank_llm[rid],
                s_llm=by_reviewer[rid].s_llm,
            )
        else:
            out[rid] = FinalScore(paper_id=paper_id, reviewer_id=rid, s_rrf=s_rrf, s_final=s_rrf)
    return out


# ---------------------------------------------------------------------------
# Verdict persistence (verdicts.jsonl)

def verdict_to_record(verdict: CommitteeVerdict) -> dict:
    return {
        "paper_id": verdict.paper_id,
        "reviewer_id": verdict.reviewer_id,
        "s_llm": verdict.s_llm,
        "per_persona": [
            {
                "persona": pv.persona,
                "s_cont": pv.s_cont,
                "label": pv.label,
                "dimensions": [
                    {
                        "dimension": d.dimension,
                        "overlap": d.overlap,
                        "coverage": d.coverage,
                        "soft_jaccard": d.soft_jaccard,
                        "s_d": d.s_d,
                    }
                    for d in pv.dimensions
                ],
            }
            for pv in verdict.per_persona
        ],
        "fallback_used": verdict.fallback_used,
    }
