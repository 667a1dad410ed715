"""Coarse-to-fine pipeline orchestration and its file-based stages.

Every stage writes its output as a file under the run's output directory so
stages can be re-run and inspected independently:

    profiles.jsonl    structured profiles for papers and reviewer digests
    embeddings.jsonl  raw vectors for papers and each reviewer publication
    candidates.jsonl  fused retrieval scores and the per-paper candidate set
    verdicts.jsonl    committee verdicts
    rankings.jsonl    final per-paper reviewer orderings with score provenance
    metrics.json      Soft/Hard P@N report
    manifest.json     config snapshot, input hashes, artifacts, timings, cache stats

Pipeline modes: "discrete" ranks by lexical profile match alone, "semantic"
by embedding similarity alone, "committee" runs the rubric committee over
the whole pool, "hybrid" fuses the two retrieval streams, and "full" adds
the committee on top of the fused candidate set.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import committee as committee_mod
from . import corpus, evaluation, profiling, retrieval
from .config import RunConfig
from .errors import ConfigError, EmptyHistory, ProfilerUnavailable, ProviderError, SchemaViolation
from .providers import (
    ChatClient,
    EmbedClient,
    FixtureChat,
    HashEmbed,
    HttpChatProvider,
    HttpEmbedProvider,
    ResponseCache,
    combined_stats,
)

logger = logging.getLogger(__name__)

PROFILES_FILE = "profiles.jsonl"
EMBEDDINGS_FILE = "embeddings.jsonl"
CANDIDATES_FILE = "candidates.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
RANKINGS_FILE = "rankings.jsonl"
METRICS_FILE = "metrics.json"
MANIFEST_FILE = "manifest.json"

_NEEDS_PROFILES = {"discrete", "committee", "hybrid", "full"}
_NEEDS_EMBEDDINGS = {"semantic", "hybrid", "full"}
_NEEDS_RETRIEVAL = {"hybrid", "full"}
_NEEDS_COMMITTEE = {"committee", "full"}


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path: Path, records) -> None:
    write_atomic(path, "".join(json.dumps(record) + "\n" for record in records))


def read_jsonl(path: Path) -> list[dict]:
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunResult:
    out_dir: Path
    mode: str
    report: evaluation.MetricsReport | None
    manifest: dict
    rankings_path: Path | None = None
    metrics_path: Path | None = None
    manifest_path: Path | None = None


@dataclass
class _Manifest:
    config: dict
    mode: str
    input_hashes: dict = field(default_factory=dict)
    stages_completed: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    provider_calls: dict = field(default_factory=dict)
    deterministic_providers: bool = True
    error: str | None = None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


class Pipeline:
    """One configured run over one dataset."""

    def __init__(self, cfg: RunConfig, dataset: corpus.Dataset | None = None):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.ds = dataset if dataset is not None else corpus.load_dataset(cfg.dataset_path, cfg.dataset_name)
        self.cache = ResponseCache(cfg.effective_cache_dir)
        self._chat_client: ChatClient | None = None
        self._embed_client: EmbedClient | None = None
        self.manifest = _Manifest(
            config=cfg.to_dict(),
            mode=cfg.mode,
            deterministic_providers=(cfg.profiler != "chat" and cfg.judge != "chat" and cfg.embedder == "hash"),
        )
        if cfg.dataset_path:
            root = Path(cfg.dataset_path)
            for name in (corpus.PAPERS_FILE, corpus.REVIEWERS_FILE, corpus.ANNOTATIONS_FILE):
                path = root / name
                if path.is_file():
                    self.manifest.input_hashes[name] = file_sha256(path)

    # -- providers -----------------------------------------------------

    def chat_client(self) -> ChatClient:
        if self._chat_client is None:
            if self.cfg.chat_fixture:
                provider = FixtureChat.from_file(self.cfg.chat_fixture)
            else:
                provider = HttpChatProvider()
            self._chat_client = ChatClient(
                provider,
                self.cache,
                call_ceiling=self.cfg.call_ceiling,
                offline=self.cfg.offline,
            )
        return self._chat_client

    def use_chat_client(self, client: ChatClient) -> None:
        """Inject a chat client (tests plug a FixtureChat-backed one here)."""
        self._chat_client = client

    def profiler(self) -> profiling.Profiler:
        kind = self.cfg.profiler
        if kind == "fixture":
            return profiling.FixtureProfiler.from_file(self.cfg.profile_fixture)
        if kind == "keyword":
            return profiling.KeywordProfiler()
        return profiling.ChatProfiler(self.chat_client(), self.cfg.chat_model)

    def embed_client(self) -> EmbedClient:
        if self._embed_client is None:
            if self.cfg.embedder == "hash":
                provider = HashEmbed(dim=self.cfg.embed_dim, seed=self.cfg.seed)
            else:
                provider = HttpEmbedProvider()
            self._embed_client = EmbedClient(
                provider,
                self.cache,
                call_ceiling=self.cfg.call_ceiling,
                offline=self.cfg.offline,
            )
        return self._embed_client

    def judge_client(self) -> ChatClient | None:
        return self.chat_client() if self.cfg.judge == "chat" else None

    def matcher(self) -> committee_mod.DeterministicTagMatcher:
        return committee_mod.DeterministicTagMatcher(self.cfg.synonyms)

    def personas(self) -> tuple[committee_mod.Persona, ...]:
        if self.cfg.judge == "chat":
            return committee_mod.default_committee(self.cfg.weight_triple())
        return committee_mod.default_committee()

    # -- shared lookups --------------------------------------------------

    def pools(self) -> dict[str, list[str]]:
        """Reviewer pool per paper: annotated-only in benchmark mode."""
        if self.cfg.pool == "open":
            everyone = sorted(r.id for r in self.ds.reviewers)
            return {p.id: list(everyone) for p in self.ds.papers}
        pools = {}
        for paper in self.ds.papers:
            annotated = sorted(self.ds.annotated_pool(paper.id))
            if annotated:
                pools[paper.id] = annotated
        return pools

    def _timed(self, stage: str, fn):
        start = time.perf_counter()
        result = fn()
        self.manifest.timings[stage] = round(time.perf_counter() - start, 6)
        self.manifest.stages_completed.append(stage)
        return result

    def _record_artifact(self, name: str) -> None:
        if name not in self.manifest.artifacts:
            self.manifest.artifacts.append(name)

    # -- stages ----------------------------------------------------------

    def profile_stage(self) -> dict[str, profiling.Profile]:
        """Profile every paper and reviewer digest; resumable by source hash."""
        profiles_path = self.out / PROFILES_FILE
        existing: dict[str, dict] = {}
        if profiles_path.is_file():
            for record in read_jsonl(profiles_path):
                existing[record["subject_id"]] = record

        subjects: list[tuple[str, str, str]] = []
        for paper in self.ds.papers:
            subjects.append((paper.id, "submission", corpus.paper_text(paper)))
        for reviewer in self.ds.reviewers:
            try:
                digest = corpus.build_reviewer_digest(reviewer, self.cfg.digest_char_budget)
            except EmptyHistory:
                message = f"reviewer {reviewer.id!r} has no publications; skipped by profiler"
                logger.warning(message)
                self.manifest.warnings.append(message)
                continue
            if digest.truncated:
                self.manifest.warnings.append(
                    f"digest for reviewer {reviewer.id!r} truncated to {digest.source_count} publications"
                )
            subjects.append((reviewer.id, "reviewer", digest.text))

        profiler = self.profiler()
        reused: dict[str, profiling.Profile] = {}
        todo: list[tuple[str, str, str]] = []
        for subject_id, kind, text in subjects:
            record = existing.get(subject_id)
            if record is not None and record.get("source_hash") == profiling.source_hash(text):
                reused[subject_id] = profiling.profile_from_record(record)
            else:
                todo.append((subject_id, kind, text))

        def profile_one(item):
            subject_id, kind, text = item
            req = profiling.ProfilerRequest(
                subject_id=subject_id,
                subject_kind=kind,
                text=text,
                prompt_template_id=profiling.default_template_id(kind),
                repeats=self.cfg.repeats,
                temperature=self.cfg.temperature,
            )
            return profiling.profile_text(req, profiler)

        fresh: dict[str, profiling.Profile] = {}
        failures: list[tuple[str, Exception]] = []
        if todo:
            def guarded(item):
                try:
                    return profile_one(item)
                except (ProviderError, SchemaViolation) as exc:
                    return exc

            with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as pool:
                for item, outcome in zip(todo, pool.map(guarded, todo)):
                    if isinstance(outcome, Exception):
                        failures.append((item[0], outcome))
                    else:
                        fresh[item[0]] = outcome

        # Persist whatever finished so an aborted run resumes where it stopped.
        profiles = {**reused, **fresh}
        kinds = {subject_id: kind for subject_id, kind, _ in subjects}
        write_jsonl(
            profiles_path,
            (
                profiling.profile_to_record(profiles[subject_id], kinds[subject_id])
                for subject_id, _, _ in subjects
                if subject_id in profiles
            ),
        )
        self._record_artifact(PROFILES_FILE)
        if failures:
            subject_id, cause = failures[0]
            detail = (
                f"profiling failed for {len(failures)} subjects (first: {subject_id!r}) "
                f"after {len(fresh)} of {len(todo)} completed: {cause}"
            )
            if all(isinstance(exc, SchemaViolation) for _, exc in failures):
                raise SchemaViolation(detail) from cause
            raise ProfilerUnavailable(detail) from cause
        return profiles

    def embed_stage(self) -> tuple[dict[str, retrieval.Embedding], dict[str, list[retrieval.Embedding]]]:
        """Embed paper texts and every reviewer publication."""
        texts: list[str] = []
        subject_ids: list[str] = []
        for paper in self.ds.papers:
            subject_ids.append(paper.id)
            texts.append(corpus.paper_text(paper))
        for reviewer in self.ds.reviewers:
            for index, pub in enumerate(reviewer.publications):
                subject_ids.append(f"{reviewer.id}::pub{index}")
                texts.append(corpus.publication_text(pub.title, pub.abstract))

        client = self.embed_client()
        raw = client.embed_raw(texts, self.cfg.embed_model)
        write_jsonl(
            self.out / EMBEDDINGS_FILE,
            (
                {"subject_id": sid, "dim": len(vec), "values": vec}
                for sid, vec in zip(subject_ids, raw)
            ),
        )
        self._record_artifact(EMBEDDINGS_FILE)

        paper_embeddings: dict[str, retrieval.Embedding] = {}
        histories: dict[str, list[retrieval.Embedding]] = {r.id: [] for r in self.ds.reviewers}
        for sid, vec in zip(subject_ids, raw):
            emb = retrieval.Embedding.normalized(sid, vec)
            if "::pub" in sid:
                histories[sid.split("::pub", 1)[0]].append(emb)
            else:
                paper_embeddings[sid] = emb
        return paper_embeddings, histories

    def _profile_vectors(self, profiles) -> dict[str, retrieval.TermVector]:
        return {
            subject_id: retrieval.tf_vector(
                retrieval.tokenize(profiling.linearize_profile(profile).text)
            )
            for subject_id, profile in profiles.items()
        }

    def retrieval_stage(
        self,
        profiles: dict[str, profiling.Profile],
        paper_embeddings: dict[str, retrieval.Embedding],
        histories: dict[str, list[retrieval.Embedding]],
    ) -> tuple[dict[str, retrieval.PaperScores], dict[str, retrieval.CandidateSet]]:
        """Score both streams, fuse, and cut the per-paper candidate set."""
        cfg = self.cfg
        vectors = self._profile_vectors(profiles)
        scores: dict[str, retrieval.PaperScores] = {}
        candidates: dict[str, retrieval.CandidateSet] = {}
        records = []
        for paper_id, pool in self.pools().items():
            paper_scores = retrieval.score_pool(
                paper_id,
                pool,
                vectors.get(paper_id, retrieval.TermVector({})),
                vectors,
                paper_embeddings.get(paper_id),
                histories,
                m=cfg.m,
                k=cfg.k,
                w1=cfg.w1,
                w2=cfg.w2,
            )
            scores[paper_id] = paper_scores
            candidate_set = retrieval.select_candidates(
                paper_id, paper_scores.s_rrf, cfg.M, details=paper_scores.candidate_details()
            )
            candidates[paper_id] = candidate_set
            for cand in candidate_set.candidates:
                records.append(
                    {
                        "paper_id": paper_id,
                        "reviewer_id": cand.reviewer_id,
                        "s_tf": cand.s_tf,
                        "s_emb": cand.s_emb,
                        "rank_a": cand.rank_a,
                        "rank_b": cand.rank_b,
                        "s_rrf": cand.s_rrf,
                    }
                )
        write_jsonl(self.out / CANDIDATES_FILE, records)
        self._record_artifact(CANDIDATES_FILE)
        return scores, candidates

    def judge_stage(
        self,
        profiles: dict[str, profiling.Profile],
        targets: dict[str, list[str]],
    ) -> dict[str, dict[str, committee_mod.CommitteeVerdict]]:
        """Run the committee over ``targets`` (paper id -> reviewer ids)."""
        cfg = self.cfg
        matcher = self.matcher()
        personas = self.personas()
        judge = self.judge_client()

        pairs = [
            (paper_id, reviewer_id)
            for paper_id in sorted(targets)
            for reviewer_id in targets[paper_id]
        ]

        def judge_one(pair):
            paper_id, reviewer_id = pair
            paper_profile = profiles.get(paper_id)
            reviewer_profile = profiles.get(reviewer_id)
            if paper_profile is None:
                paper_profile = profiling.Profile(subject_id=paper_id, source_hash="")
            if reviewer_profile is None:
                reviewer_profile = profiling.Profile(subject_id=reviewer_id, source_hash="")
            return committee_mod.committee_evaluate(
                paper_profile,
                reviewer_profile,
                personas,
                matcher,
                thresholds=cfg.tau,
                judge=judge,
                judge_model_id=cfg.chat_model,
                repeats=cfg.repeats,
                temperature=cfg.temperature,
            )

        verdicts: dict[str, dict[str, committee_mod.CommitteeVerdict]] = {}
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            for (paper_id, reviewer_id), verdict in zip(pairs, pool.map(judge_one, pairs)):
                verdicts.setdefault(paper_id, {})[reviewer_id] = verdict

        write_jsonl(
            self.out / VERDICTS_FILE,
            (
                committee_mod.verdict_to_record(verdicts[paper_id][reviewer_id])
                for paper_id, reviewer_id in pairs
            ),
        )
        self._record_artifact(VERDICTS_FILE)
        return verdicts

    # -- ranking ---------------------------------------------------------

    def build_tables(
        self,
        profiles: dict[str, profiling.Profile] | None = None,
        paper_embeddings: dict[str, retrieval.Embedding] | None = None,
        histories: dict[str, list[retrieval.Embedding]] | None = None,
        scores: dict[str, retrieval.PaperScores] | None = None,
        verdicts: dict[str, dict[str, committee_mod.CommitteeVerdict]] | None = None,
        finals: dict[str, dict[str, committee_mod.FinalScore]] | None = None,
    ) -> list[evaluation.RankingTable]:
        """Assemble per-paper ranking tables for the configured mode."""
        mode = self.cfg.mode
        tables = []
        vectors = self._profile_vectors(profiles) if profiles is not None else {}
        for paper_id, pool in self.pools().items():
            if mode == "discrete":
                s_tf, empty = retrieval.stream_a_scores(
                    vectors.get(paper_id, retrieval.TermVector({})), vectors, pool
                )
                ranks = retrieval.rank_stream_a(s_tf, empty)
                ordered = sorted(pool, key=lambda rid: ranks[rid])
                entries = [evaluation.RankingEntry(rid, s_tf=s_tf[rid]) for rid in ordered]
            elif mode == "semantic":
                s_emb = retrieval.stream_b_scores(
                    paper_embeddings.get(paper_id), histories, pool, self.cfg.m
                )
                ranks = retrieval.rank_by_score(s_emb)
                ordered = sorted(pool, key=lambda rid: ranks[rid])
                entries = [evaluation.RankingEntry(rid, s_emb=s_emb[rid]) for rid in ordered]
            elif mode == "committee":
                paper_verdicts = verdicts[paper_id]
                ordered = sorted(pool, key=lambda rid: (-paper_verdicts[rid].s_llm, rid))
                entries = [
                    evaluation.RankingEntry(rid, s_llm=paper_verdicts[rid].s_llm) for rid in ordered
                ]
            elif mode == "hybrid":
                paper_scores = scores[paper_id]
                ordered = sorted(pool, key=lambda rid: (-paper_scores.s_rrf[rid], rid))
                entries = [
                    evaluation.RankingEntry(
                        rid,
                        s_tf=paper_scores.s_tf[rid],
                        s_emb=paper_scores.s_emb[rid],
                        s_rrf=paper_scores.s_rrf[rid],
                    )
                    for rid in ordered
                ]
            elif mode == "full":
                paper_scores = scores[paper_id]
                paper_finals = finals[paper_id]
                ordered = sorted(pool, key=lambda rid: (-paper_finals[rid].s_final, rid))
                entries = [
                    evaluation.RankingEntry(
                        rid,
                        s_tf=paper_scores.s_tf[rid],
                        s_emb=paper_scores.s_emb[rid],
                        s_rrf=paper_scores.s_rrf[rid],
                        s_llm=paper_finals[rid].s_llm,
                        s_final=paper_finals[rid].s_final,
                    )
                    for rid in ordered
                ]
            else:
                raise ConfigError(f"unknown pipeline mode {mode!r}")
            tables.append(evaluation.RankingTable(paper_id=paper_id, entries=tuple(entries)))
        return tables

    def write_rankings(self, tables: list[evaluation.RankingTable]) -> Path:
        path = self.out / RANKINGS_FILE
        write_jsonl(
            path,
            (
                {
                    "paper_id": table.paper_id,
                    "mode": self.cfg.mode,
                    "ranking": [
                        {
                            "reviewer_id": entry.reviewer_id,
                            "s_tf": entry.s_tf,
                            "s_emb": entry.s_emb,
                            "s_rrf": entry.s_rrf,
                            "s_llm": entry.s_llm,
                            "s_final": entry.s_final,
                        }
                        for entry in table.entries
                    ],
                }
                for table in tables
            ),
        )
        self._record_artifact(RANKINGS_FILE)
        return path

    def evaluate_stage(self, tables: list[evaluation.RankingTable]) -> evaluation.MetricsReport:
        config = (
            evaluation.MetricConfig(ns=self.cfg.metric_ns)
            if self.cfg.metric_ns
            else evaluation.MetricConfig.for_dataset(self.ds.name)
        )
        report = evaluation.evaluate_dataset(tables, self.ds, config, label=self.cfg.mode)
        write_atomic(self.out / METRICS_FILE, json.dumps(report.to_payload(), indent=2) + "\n")
        self._record_artifact(METRICS_FILE)
        return report

    # -- manifest ----------------------------------------------------------

    def _finalize_manifest(self) -> Path:
        self.manifest.cache = combined_stats(self.cache).as_dict()
        calls = {}
        if self._chat_client is not None:
            calls["chat"] = self._chat_client.calls_made
        if self._embed_client is not None:
            calls["embed"] = self._embed_client.calls_made
        self.manifest.provider_calls = calls
        path = self.out / MANIFEST_FILE
        write_atomic(path, json.dumps(self.manifest.as_dict(), indent=2) + "\n")
        return path

    # -- entry points -------------------------------------------------------

    def run(self) -> RunResult:
        """Run the configured mode end to end and write all artifacts."""
        mode = self.cfg.mode
        try:
            profiles = (
                self._timed("profile", self.profile_stage) if mode in _NEEDS_PROFILES else {}
            )
            if mode in _NEEDS_EMBEDDINGS:
                paper_embeddings, histories = self._timed("embed", self.embed_stage)
            else:
                paper_embeddings, histories = {}, {}

            scores: dict[str, retrieval.PaperScores] = {}
            candidates: dict[str, retrieval.CandidateSet] = {}
            if mode in _NEEDS_RETRIEVAL:
                scores, candidates = self._timed(
                    "retrieve", lambda: self.retrieval_stage(profiles, paper_embeddings, histories)
                )

            verdicts: dict[str, dict[str, committee_mod.CommitteeVerdict]] = {}
            finals: dict[str, dict[str, committee_mod.FinalScore]] = {}
            if mode in _NEEDS_COMMITTEE:
                if mode == "committee":
                    targets = {pid: pool for pid, pool in self.pools().items()}
                else:
                    targets = {pid: list(cs.ids()) for pid, cs in candidates.items()}
                verdicts = self._timed("judge", lambda: self.judge_stage(profiles, targets))
                if mode == "full":
                    for paper_id, paper_scores in scores.items():
                        finals[paper_id] = committee_mod.final_fusion(
                            paper_scores.s_rrf,
                            list(verdicts.get(paper_id, {}).values()),
                            k=self.cfg.k,
                            w3=self.cfg.w3,
                        )

            tables = self._timed(
                "rank",
                lambda: self.build_tables(
                    profiles=profiles,
                    paper_embeddings=paper_embeddings,
                    histories=histories,
                    scores=scores,
                    verdicts=verdicts,
                    finals=finals,
                ),
            )
            rankings_path = self.write_rankings(tables)

            report = None
            metrics_path = None
            if self.cfg.pool == "benchmark":
                report = self._timed("evaluate", lambda: self.evaluate_stage(tables))
                metrics_path = self.out / METRICS_FILE
            else:
                self.manifest.warnings.append("open pool mode: metrics skipped (no per-paper label pools)")
        except Exception as exc:
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            self._finalize_manifest()
            raise

        manifest_path = self._finalize_manifest()
        return RunResult(
            out_dir=self.out,
            mode=mode,
            report=report,
            manifest=self.manifest.as_dict(),
            rankings_path=rankings_path,
            metrics_path=metrics_path,
            manifest_path=manifest_path,
        )


# ---------------------------------------------------------------------------
# Stage loaders used by the single-stage CLI subcommands

def load_profiles(path: Path) -> dict[str, profiling.Profile]:
    return {
        record["subject_id"]: profiling.profile_from_record(record) for record in read_jsonl(path)
    }


def load_embeddings(path: Path) -> tuple[dict[str, retrieval.Embedding], dict[str, list[retrieval.Embedding]]]:
    """Load the embeddings store, normalizing vectors and splitting histories."""
    paper_embeddings: dict[str, retrieval.Embedding] = {}
    histories: dict[str, list[retrieval.Embedding]] = {}
    for record in read_jsonl(path):
        sid = record["subject_id"]
        emb = retrieval.Embedding.normalized(sid, record["values"])
        if "::pub" in sid:
            histories.setdefault(sid.split("::pub", 1)[0], []).append(emb)
        else:
            paper_embeddings[sid] = emb
    return paper_embeddings, histories


def load_candidate_ids(path: Path) -> dict[str, list[str]]:
    targets: dict[str, list[str]] = {}
    for record in read_jsonl(path):
        targets.setdefault(record["paper_id"], []).append(record["reviewer_id"])
    return targets


def load_ranking_tables(path: Path) -> list[evaluation.RankingTable]:
    tables = []
    for record in read_jsonl(path):
        entries = tuple(
            evaluation.RankingEntry(
                reviewer_id=item["reviewer_id"],
                s_tf=item.get("s_tf"),
                s_emb=item.get("s_emb"),
                s_rrf=item.get("s_rrf"),
                s_llm=item.get("s_llm"),
                s_final=item.get("s_final"),
            )
            for item in record["ranking"]
        )
        tables.append(evaluation.RankingTable(paper_id=record["paper_id"], entries=entries))
    return tables


# ---------------------------------------------------------------------------
# Commands

def cmd_profile(cfg: RunConfig, dataset: corpus.Dataset | None = None) -> Path:
    """Profile stage alone; returns the profiles.jsonl path."""
    pipeline = Pipeline(cfg, dataset)
    pipeline._timed("profile", pipeline.profile_stage)
    pipeline._finalize_manifest()
    return pipeline.out / PROFILES_FILE


def cmd_pipeline(cfg: RunConfig, dataset: corpus.Dataset | None = None) -> RunResult:
    """Full pipeline for the configured mode."""
    return Pipeline(cfg, dataset).run()


def cmd_ablate(
    cfg: RunConfig,
    modes: list[str],
    m_sweep: list[int] | None = None,
    fmt: str = "text",
    dataset: corpus.Dataset | None = None,
) -> tuple[str, list[evaluation.MetricsReport], dict[str, str]]:
    """Run several pipeline variants and render a comparison table.

    ``modes`` maps one-to-one to pipeline modes; ``m_sweep`` additionally
    runs full mode at each candidate-set size. Per-variant failures are
    recorded and the remaining variants still run.
    """
    if not modes and not m_sweep:
        raise ConfigError("ablation needs at least one mode or a candidate-size sweep")

    variants: list[tuple[str, RunConfig]] = []
    for mode in modes:
        sub = dataclasses.replace(cfg, mode=mode, out_dir=str(Path(cfg.out_dir) / "ablate" / mode))
        variants.append((mode, sub))
    for m_value in m_sweep or []:
        label = f"full_M{m_value}"
        sub = dataclasses.replace(
            cfg, mode="full", M=m_value, out_dir=str(Path(cfg.out_dir) / "ablate" / label)
        )
        variants.append((label, sub))

    reports: list[evaluation.MetricsReport] = []
    failures: dict[str, str] = {}
    for label, sub_cfg in variants:
        sub_cfg.cache_dir = cfg.effective_cache_dir  # share one cache across variants
        try:
            result = cmd_pipeline(sub_cfg, dataset)
        except Exception as exc:  # noqa: BLE001 - record and continue with other variants
            logger.error("ablation variant %s failed: %s", label, exc)
            failures[label] = f"{type(exc).__name__}: {exc}"
            continue
        if result.report is not None:
            result.report.label = label
            reports.append(result.report)

    table = evaluation.compare_runs(reports, fmt=fmt)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "csv" if fmt == "csv" else "txt"
    write_atomic(out / f"comparison.{suffix}", table if table else "")
    if failures:
        write_atomic(out / "ablation_failures.json", json.dumps(failures, indent=2) + "\n")
    return table, reports, failures
