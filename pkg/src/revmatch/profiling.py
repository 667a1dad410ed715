"""Structured expertise profiles for submissions and reviewer digests.

A profile describes a subject along three fixed dimensions (topics,
methodologies, applications), each a short list of normalized phrases. The
profile is produced by a pluggable ``Profiler`` that returns raw model text;
``parse_profile_json`` turns that text into a ``Profile`` and
``linearize_profile`` flattens it into the string used for lexical matching.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Protocol

from .errors import ProfilerUnavailable, ProviderError, SchemaViolation, UnknownTemplate, UnparseableOutput

logger = logging.getLogger(__name__)

DIMENSIONS = ("topics", "methodologies", "applications")

MAX_PHRASES_PER_DIMENSION = 5
MAX_PHRASE_LENGTH = 80

_WHITESPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class Profile:
    subject_id: str
    source_hash: str
    topics: tuple[str, ...] = ()
    methodologies: tuple[str, ...] = ()
    applications: tuple[str, ...] = ()

    def tags(self, dimension: str) -> tuple[str, ...]:
        if dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dimension!r}")
        return getattr(self, dimension)

    def is_empty(self) -> bool:
        return not (self.topics or self.methodologies or self.applications)


@dataclass(frozen=True)
class ProfileString:
    text: str


@dataclass(frozen=True)
class ProfilerRequest:
    subject_id: str
    subject_kind: str  # "submission" | "reviewer"
    text: str
    prompt_template_id: str
    repeats: int = 1
    temperature: float = 0.1


class Profiler(Protocol):
    """Anything that can answer a profiling request with raw model text."""

    def run(self, req: ProfilerRequest, repeat_index: int) -> str: ...


def source_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def normalize_phrases(
    phrases,
    max_len: int = MAX_PHRASE_LENGTH,
    clip: int = MAX_PHRASES_PER_DIMENSION,
) -> tuple[str, ...]:
    """Lowercase, trim, collapse whitespace, dedup, drop overlong, clip."""
    seen: set[str] = set()
    out: list[str] = []
    for raw in phrases:
        if not isinstance(raw, str):
            continue
        phrase = _WHITESPACE.sub(" ", raw.strip().lower())
        if not phrase:
            continue
        if len(phrase) > max_len:
            logger.warning("dropping over-length phrase (%d chars): %.40s...", len(phrase), phrase)
            continue
        if phrase in seen:
            continue
        seen.add(phrase)
        out.append(phrase)
        if len(out) >= clip:
            break
    return tuple(out)


def _extract_json_objects(raw: str):
    """Yield parseable top-level JSON objects embedded in free-form text."""
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(raw):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                candidate = raw[start : i + 1]
                try:
                    value = json.loads(candidate)
                except json.JSONDecodeError:
                    continue
                if isinstance(value, dict):
                    yield value


def parse_profile_json(raw: str, subject_id: str = "", src_hash: str = "") -> Profile:
    """Parse the first JSON object in ``raw`` into a normalized Profile.

    Tolerates code fences and surrounding prose. Missing or null dimension
    keys become empty lists; non-string list entries are dropped. A present
    dimension key whose value is neither a list nor null fails the shape
    check and raises ``UnparseableOutput``.
    """
    obj = next(_extract_json_objects(raw), None)
    if obj is None:
        raise UnparseableOutput("no JSON object found in profiler output")

    lowered = {str(k).strip().lower(): v for k, v in obj.items()}
    values: dict[str, tuple[str, ...]] = {}
    for dim in DIMENSIONS:
        value = lowered.get(dim)
        if value is None:
            values[dim] = ()
            continue
        if not isinstance(value, list):
            raise UnparseableOutput(f"dimension {dim!r} is not a list")
        values[dim] = normalize_phrases(value)
    return Profile(subject_id=subject_id, source_hash=src_hash, **values)


def normalize_profile(profile: Profile) -> Profile:
    """Re-apply phrase normalization; idempotent on already-normal profiles."""
    return replace(
        profile,
        topics=normalize_phrases(profile.topics),
        methodologies=normalize_phrases(profile.methodologies),
        applications=normalize_phrases(profile.applications),
    )


def profile_text(req: ProfilerRequest, profiler: Profiler) -> Profile:
    """Run the profiler ``req.repeats`` times and merge runs by majority vote.

    A phrase survives if it appears in more than ``repeats / 2`` of the
    requested runs, so a single run is returned verbatim and unparseable runs
    simply contribute nothing. Raises ``ProfilerUnavailable`` when every
    attempt failed at the provider level and ``SchemaViolation`` when no run
    yielded parseable output.
    """
    if not req.text:
        raise ValueError("cannot profile empty text")
    if req.repeats < 1:
        raise ValueError("repeats must be >= 1")

    hash_ = source_hash(req.text)
    runs: list[Profile] = []
    provider_failures = 0
    last_provider_error: Exception | None = None
    for repeat_index in range(req.repeats):
        try:
            raw = profiler.run(req, repeat_index)
        except ProviderError as exc:
            provider_failures += 1
            last_provider_error = exc
            logger.warning("profiler attempt %d/%d failed: %s", repeat_index + 1, req.repeats, exc)
            continue
        try:
            runs.append(parse_profile_json(raw, subject_id=req.subject_id, src_hash=hash_))
        except UnparseableOutput as exc:
            logger.warning("profiler run %d produced unparseable output: %s", repeat_index + 1, exc)

    if provider_failures == req.repeats:
        raise ProfilerUnavailable(
            f"all {req.repeats} profiling attempts for {req.subject_id!r} failed"
        ) from last_provider_error
    if not runs:
        raise SchemaViolation(
            f"no profiling run for {req.subject_id!r} produced parseable output"
        )

    threshold = req.repeats / 2.0
    merged: dict[str, tuple[str, ...]] = {}
    for dim in DIMENSIONS:
        counts: dict[str, int] = {}
        order: list[str] = []
        for run in runs:
            for phrase in run.tags(dim):
                if phrase not in counts:
                    counts[phrase] = 0
                    order.append(phrase)
                counts[phrase] += 1
        kept = [p for p in order if counts[p] > threshold]
        merged[dim] = tuple(kept[:MAX_PHRASES_PER_DIMENSION])

    return Profile(subject_id=req.subject_id, source_hash=hash_, **merged)


def linearize_profile(profile: Profile) -> ProfileString:
    """Space-join all phrases in fixed dimension order."""
    phrases = list(profile.topics) + list(profile.methodologies) + list(profile.applications)
    return ProfileString(" ".join(phrases))


# ---------------------------------------------------------------------------
# Prompt template registry

def template_body(template_id: str) -> str:
    resource = resources.files("revmatch").joinpath("prompts", f"{template_id}.txt")
    try:
        return resource.read_text(encoding="utf-8")
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise UnknownTemplate(f"no prompt template {template_id!r}") from exc


def render_prompt(template_id: str, subject_kind: str, text: str) -> str:
    """Deterministically substitute ``text`` into a registered template."""
    body = template_body(template_id)
    return body.replace("{text}", text)


def template_version(template_id: str) -> str:
    """Content hash of a template, used to invalidate caches on prompt edits."""
    return f"{template_id}:{hashlib.sha256(template_body(template_id).encode('utf-8')).hexdigest()[:12]}"


def default_template_id(subject_kind: str) -> str:
    return "submission_v1" if subject_kind == "submission" else "reviewer_v1"


# ---------------------------------------------------------------------------
# Offline profilers

class FixtureProfiler:
    """Serves canned profiler responses keyed by the subject's source hash.

    The fixture file is line-delimited JSON: {"source_hash": str, "response": str}
    or {"source_hash": str, "responses": [str, ...]} for per-repeat variation.
    """

    def __init__(self, entries: dict[str, list[str]]):
        self._entries = entries

    @classmethod
    def from_file(cls, path) -> "FixtureProfiler":
        entries: dict[str, list[str]] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                key = record["source_hash"]
                if "responses" in record:
                    entries[key] = list(record["responses"])
                else:
                    entries[key] = [record["response"]]
        return cls(entries)

    def run(self, req: ProfilerRequest, repeat_index: int) -> str:
        key = source_hash(req.text)
        responses = self._entries.get(key)
        if not responses:
            raise ProfilerUnavailable(f"no fixture response for subject {req.subject_id!r}")
        return responses[min(repeat_index, len(responses) - 1)]


_STOPWORDS = frozenset(
    "a an and are as at be by for from has have in is it its of on or our that the "
    "this to via we with which were was will can using based new results paper "
    "propose proposed show study approach method".split()
)


class KeywordProfiler:
    """No-network fallback: frequent non-stopword bigrams, spread round-robin.

    The most frequent bigrams are dealt to topics, methodologies, and
    applications in turn, so every dimension gets some signal. Purely lexical,
    deterministic, and obviously crude; useful for smoke tests and as a last
    resort when no model backend is configured.
    """

    def __init__(self, top_k: int = 3 * MAX_PHRASES_PER_DIMENSION):
        self.top_k = top_k

    def run(self, req: ProfilerRequest, repeat_index: int) -> str:
        words = [w for w in re.findall(r"[^\W_]+", req.text.lower()) if w not in _STOPWORDS]
        counts: dict[str, int] = {}
        for first, second in zip(words, words[1:]):
            bigram = f"{first} {second}"
            counts[bigram] = counts.get(bigram, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        buckets: list[list[str]] = [[], [], []]
        for index, (bigram, _) in enumerate(ranked[: self.top_k]):
            buckets[index % 3].append(bigram)
        return json.dumps(
            {"topics": buckets[0], "methodologies": buckets[1], "applications": buckets[2]}
        )


class ChatProfiler:
    """Profiler backed by a chat completion client (live or fixture)."""

    def __init__(self, chat_client, model_id: str, max_output: int = 1024):
        self.chat_client = chat_client
        self.model_id = model_id
        self.max_output = max_output

    def run(self, req: ProfilerRequest, repeat_index: int) -> str:
        from .providers import ChatRequest, make_idempotency_key

        prompt = render_prompt(req.prompt_template_id, req.subject_kind, req.text)
        key = make_idempotency_key(
            self.model_id,
            prompt,
            req.temperature,
            template_version(req.prompt_template_id),
            repeat_index,
        )
        request = ChatRequest(
            model_id=self.model_id,
            prompt=prompt,
            temperature=req.temperature,
            max_output=self.max_output,
            idempotency_key=key,
        )
        return self.chat_client.complete(request)


# ---------------------------------------------------------------------------
# Profile persistence (profiles.jsonl)

def profile_to_record(profile: Profile, subject_kind: str) -> dict:
    return {
        "subject_id": profile.subject_id,
        "subject_kind": subject_kind,
        "source_hash": profile.source_hash,
        "topics": list(profile.topics),
        "methodologies": list(profile.methodologies),
        "applications": list(profile.applications),
    }


def profile_from_record(record: dict) -> Profile:
    return Profile(
        subject_id=record["subject_id"],
        source_hash=record.get("source_hash", ""),
        topics=tuple(record.get("topics", ())),
        methodologies=tuple(record.get("methodologies", ())),
        applications=tuple(record.get("applications", ())),
    )
