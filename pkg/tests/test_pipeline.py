from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest

from revmatch import cli, corpus
from revmatch import pipeline as pl
from revmatch.config import RunConfig, load_config
from revmatch.fixtures import generate_planted_fixture
from revmatch.profiling import FixtureProfiler, source_hash


def _planted_cfg(planted, tmp_path, **overrides) -> RunConfig:
    cfg = load_config(planted.config_path)
    values = cfg.to_dict()
    values["out_dir"] = str(tmp_path / "out")
    values["cache_dir"] = str(tmp_path / "cache")
    values.update(overrides)
    from revmatch.config import config_from_dict

    return config_from_dict(values)


# -- profile stage ------------------------------------------------------------

class CountingProfiler:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def run(self, req, repeat_index):
        self.calls += 1
        return self.inner.run(req, repeat_index)


def _tiny_fixture_profiler(tiny_dataset_dir, budget):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    entries = {}
    payload = json.dumps({"topics": ["t"], "methodologies": [], "applications": []})
    for paper in ds.papers:
        entries[source_hash(corpus.paper_text(paper))] = [payload]
    for reviewer in ds.reviewers:
        if reviewer.publications:
            digest = corpus.build_reviewer_digest(reviewer, budget)
            entries[source_hash(digest.text)] = [payload]
    return FixtureProfiler(entries)


def test_profile_stage_cardinality_and_resume(tiny_dataset_dir, tmp_path, monkeypatch):
    cfg = RunConfig(
        dataset_path=str(tiny_dataset_dir),
        dataset_name="tiny",
        out_dir=str(tmp_path / "out"),
        profiler="keyword",
    )
    pipeline = pl.Pipeline(cfg)
    counting = CountingProfiler(pipeline.profiler())
    monkeypatch.setattr(pl.Pipeline, "profiler", lambda self: counting)

    profiles = pipeline.profile_stage()
    # 2 papers + 2 reviewers with publications; the empty-history reviewer is skipped
    assert set(profiles) == {"p1", "p2", "r1", "r2"}
    assert counting.calls == 4 * cfg.repeats
    assert any("r3" in w for w in pipeline.manifest.warnings)

    records = pl.read_jsonl(Path(cfg.out_dir) / pl.PROFILES_FILE)
    assert len(records) == 4
    kinds = {r["subject_id"]: r["subject_kind"] for r in records}
    assert kinds["p1"] == "submission" and kinds["r1"] == "reviewer"

    # Re-running with unchanged inputs consults the profiler zero times.
    pipeline2 = pl.Pipeline(cfg)
    counting2 = CountingProfiler(pipeline2.profiler())
    monkeypatch.setattr(pl.Pipeline, "profiler", lambda self: counting2)
    again = pipeline2.profile_stage()
    assert counting2.calls == 0
    assert again == profiles


def test_cmd_profile_fixture_provider(tiny_dataset_dir, tmp_path):
    # cmd_profile with a fixture profiler produces one record per profiled subject.
    budget = RunConfig().digest_char_budget
    profiler = _tiny_fixture_profiler(tiny_dataset_dir, budget)
    fixture_path = tmp_path / "fixture.jsonl"
    with fixture_path.open("w") as handle:
        for key, responses in profiler._entries.items():
            handle.write(json.dumps({"source_hash": key, "response": responses[0]}) + "\n")

    cfg = RunConfig(
        dataset_path=str(tiny_dataset_dir),
        dataset_name="tiny",
        out_dir=str(tmp_path / "out"),
        profiler="fixture",
        profile_fixture=str(fixture_path),
    )
    path = pl.cmd_profile(cfg)
    assert len(pl.read_jsonl(path)) == 4
    manifest = json.loads((Path(cfg.out_dir) / pl.MANIFEST_FILE).read_text())
    assert manifest["stages_completed"] == ["profile"]
    assert any("r3" in w for w in manifest["warnings"])


# -- mode isolation -----------------------------------------------------------

def test_discrete_mode_ignores_embeddings(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="discrete")
    result = pl.cmd_pipeline(cfg)
    rankings_before = result.rankings_path.read_bytes()
    assert not (Path(cfg.out_dir) / pl.EMBEDDINGS_FILE).exists()

    # Plant a poisoned embeddings store; discrete output must not change.
    (Path(cfg.out_dir) / pl.EMBEDDINGS_FILE).write_text(
        json.dumps({"subject_id": "p00", "dim": 2, "values": [9.0, 9.0]}) + "\n"
    )
    result2 = pl.cmd_pipeline(cfg)
    assert result2.rankings_path.read_bytes() == rankings_before


def test_semantic_mode_ignores_profiles(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="semantic")
    result = pl.cmd_pipeline(cfg)
    rankings = result.rankings_path.read_bytes()
    assert not (Path(cfg.out_dir) / pl.PROFILES_FILE).exists()
    entries = json.loads(rankings.splitlines()[0])["ranking"]
    assert all(e["s_tf"] is None and e["s_rrf"] is None for e in entries)


def test_full_beats_hybrid_on_planted(planted, tmp_path):
    full = pl.cmd_pipeline(_planted_cfg(planted, tmp_path / "f", mode="full"))
    hybrid = pl.cmd_pipeline(_planted_cfg(planted, tmp_path / "h", mode="hybrid"))
    for name in full.report.metrics:
        assert full.report.metrics[name] >= hybrid.report.metrics[name]
    assert full.report.metrics["hard_p5"] > hybrid.report.metrics["hard_p5"]


def test_manifest_lists_all_artifacts(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="full")
    result = pl.cmd_pipeline(cfg)
    manifest = result.manifest
    expected = {
        pl.PROFILES_FILE,
        pl.EMBEDDINGS_FILE,
        pl.CANDIDATES_FILE,
        pl.VERDICTS_FILE,
        pl.RANKINGS_FILE,
        pl.METRICS_FILE,
    }
    assert set(manifest["artifacts"]) == expected
    for name in expected:
        assert (result.out_dir / name).is_file()
    assert set(manifest["timings"]) == {"profile", "embed", "retrieve", "judge", "rank", "evaluate"}
    assert manifest["input_hashes"].keys() == {
        "papers.jsonl",
        "reviewers.jsonl",
        "annotations.jsonl",
    }
    assert manifest["deterministic_providers"] is True
    assert manifest["error"] is None


def test_candidate_sets_respect_m(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="full")
    pl.cmd_pipeline(cfg)
    by_paper = pl.load_candidate_ids(Path(cfg.out_dir) / pl.CANDIDATES_FILE)
    assert all(len(ids) == cfg.M for ids in by_paper.values())  # pools of 20, M=15


def test_open_pool_skips_metrics(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="hybrid", pool="open")
    result = pl.cmd_pipeline(cfg)
    assert result.report is None
    assert result.metrics_path is None
    tables = pl.load_ranking_tables(result.rankings_path)
    assert all(len(t.entries) == 50 for t in tables)  # whole reviewer pool ranked


def test_failed_stage_still_writes_manifest(tiny_dataset_dir, tmp_path):
    cfg = RunConfig(
        dataset_path=str(tiny_dataset_dir),
        dataset_name="tiny",
        out_dir=str(tmp_path / "out"),
        profiler="fixture",
        profile_fixture=str(tmp_path / "nope.jsonl"),
        mode="full",
    )
    (tmp_path / "nope.jsonl").write_text("")
    with pytest.raises(Exception):
        pl.cmd_pipeline(cfg)
    manifest = json.loads((Path(cfg.out_dir) / pl.MANIFEST_FILE).read_text())
    assert manifest["error"]
    assert "profile" not in manifest["stages_completed"]


# -- determinism --------------------------------------------------------------

def test_warm_cache_reruns_are_byte_identical(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path, mode="full")
    first = pl.cmd_pipeline(cfg)
    rankings1 = first.rankings_path.read_bytes()
    metrics1 = first.metrics_path.read_bytes()

    second = pl.cmd_pipeline(cfg)
    assert second.rankings_path.read_bytes() == rankings1
    assert second.metrics_path.read_bytes() == metrics1
    assert second.manifest["cache"]["misses"] == 0


# -- ablation -----------------------------------------------------------------

def test_ablate_runs_all_modes(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path)
    table, reports, failures = pl.cmd_ablate(
        cfg, ["discrete", "semantic", "committee", "hybrid", "full"]
    )
    assert failures == {}
    assert len(reports) == 5
    rows = [line for line in table.splitlines() if line and not line.startswith(("variant", "-"))]
    assert len(rows) == 5
    full_row = next(row for row in rows if row.startswith("full"))
    assert "*" in full_row


def test_ablate_m_sweep(planted, tmp_path):
    cfg = _planted_cfg(planted, tmp_path)
    table, reports, failures = pl.cmd_ablate(cfg, [], m_sweep=[5, 15])
    assert failures == {}
    assert [r.label for r in reports] == ["full_M5", "full_M15"]


def test_ablate_records_per_mode_failures(planted, tmp_path):
    # An empty profiler fixture breaks profile-dependent variants only;
    # the semantic variant must still run and the failure must be recorded.
    cfg = _planted_cfg(planted, tmp_path)
    bad_cfg = dataclasses.replace(cfg, profile_fixture=str(tmp_path / "missing.jsonl"))
    (tmp_path / "missing.jsonl").write_text("")
    table, reports, failures = pl.cmd_ablate(bad_cfg, ["semantic", "full"])
    assert "full" in failures
    assert [r.label for r in reports] == ["semantic"]
    assert "semantic" in table


# -- CLI ----------------------------------------------------------------------

def test_cli_validate_ok(planted, capsys):
    code = cli.main(["--dataset", str(planted.dataset_dir), "--name", "planted", "validate"])
    assert code == 0
    out = capsys.readouterr().out
    assert "10 papers" in out and "50 reviewers" in out and "200 annotated pairs" in out


def test_cli_usage_error_exit_code():
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE


def test_cli_missing_dataset_is_usage_error(tmp_path):
    assert cli.main(["pipeline"]) == cli.EXIT_USAGE


def test_cli_data_error_exit_code(tmp_path):
    (tmp_path / "papers.jsonl").write_text('{"id": "p1", "title": "t", "abstract": "a"}\n')
    (tmp_path / "reviewers.jsonl").write_text('{"id": "r1", "publications": []}\n')
    (tmp_path / "annotations.jsonl").write_text(
        '{"paper_id": "p1", "reviewer_id": "ghost", "relevance": 2}\n'
    )
    code = cli.main(["--dataset", str(tmp_path), "validate"])
    assert code == cli.EXIT_DATA


def test_cli_pipeline_and_evaluate(planted, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = cli.main(
        [
            "--config",
            str(planted.config_path),
            "--out",
            str(out_dir),
            "--mode",
            "hybrid",
            "pipeline",
        ]
    )
    assert code == 0
    assert "hard_p5" in capsys.readouterr().out

    code = cli.main(
        ["--config", str(planted.config_path), "--out", str(out_dir), "evaluate"]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dataset"] == "planted"


def test_cli_stagewise_run_matches_pipeline(planted, tmp_path, capsys):
    out_dir = tmp_path / "stagewise"
    base = ["--config", str(planted.config_path), "--out", str(out_dir), "--mode", "full"]
    for stage in ("profile", "embed", "retrieve", "judge"):
        assert cli.main(base + [stage]) == 0
    capsys.readouterr()
    for name in (pl.PROFILES_FILE, pl.EMBEDDINGS_FILE, pl.CANDIDATES_FILE, pl.VERDICTS_FILE):
        assert (out_dir / name).is_file()

    # Stage outputs must agree with a one-shot pipeline run on the same config.
    oneshot_dir = tmp_path / "oneshot"
    assert cli.main(["--config", str(planted.config_path), "--out", str(oneshot_dir), "--mode", "full", "pipeline"]) == 0
    capsys.readouterr()
    for name in (pl.PROFILES_FILE, pl.CANDIDATES_FILE, pl.VERDICTS_FILE):
        assert (out_dir / name).read_bytes() == (oneshot_dir / name).read_bytes()


def test_cli_ablate(planted, tmp_path, capsys):
    out_dir = tmp_path / "ablate"
    code = cli.main(
        [
            "--config",
            str(planted.config_path),
            "--out",
            str(out_dir),
            "ablate",
            "--modes",
            "hybrid,full",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("variant")
    assert (out_dir / "comparison.txt").is_file()


def test_cli_judge_committee_mode_covers_full_pool(planted, tmp_path, capsys):
    out_dir = tmp_path / "committee"
    base = ["--config", str(planted.config_path), "--out", str(out_dir), "--mode", "committee"]
    assert cli.main(base + ["profile"]) == 0
    assert cli.main(base + ["judge"]) == 0
    capsys.readouterr()
    verdicts = pl.read_jsonl(out_dir / pl.VERDICTS_FILE)
    assert len(verdicts) == 200  # 10 papers x 20 annotated reviewers


def test_cli_judge_requires_candidates(planted, tmp_path, capsys):
    code = cli.main(
        [
            "--config",
            str(planted.config_path),
            "--out",
            str(tmp_path / "empty"),
            "--mode",
            "full",
            "judge",
        ]
    )
    assert code == cli.EXIT_DATA


def test_empty_history_reviewer_gets_floor_scores(tiny_dataset_dir, tmp_path):
    # r3 has no publications: unprofiled, unembedded, but still rankable.
    cfg = RunConfig(
        dataset_path=str(tiny_dataset_dir),
        dataset_name="tiny",
        out_dir=str(tmp_path / "out"),
        profiler="keyword",
        mode="full",
        metric_ns=(2,),
    )
    result = pl.cmd_pipeline(cfg)
    tables = {t.paper_id: t for t in pl.load_ranking_tables(result.rankings_path)}
    p2 = tables["p2"]  # pool is {r2, r3}
    assert p2.reviewer_ids() == ("r2", "r3")
    r3 = p2.entries[1]
    assert r3.s_emb == -1.0
    assert r3.s_tf == 0.0


def test_profile_stage_partial_failure_persists_and_counts(tiny_dataset_dir, tmp_path):
    ds = corpus.load_dataset(tiny_dataset_dir, "tiny")
    budget = RunConfig().digest_char_budget
    # Fixture covers the papers and r1 but not r2, so r2's profiling fails.
    full = _tiny_fixture_profiler(tiny_dataset_dir, budget)
    r1 = ds.reviewer_by_id()["r1"]
    keep = {
        source_hash(corpus.paper_text(p)) for p in ds.papers
    } | {source_hash(corpus.build_reviewer_digest(r1, budget).text)}
    partial = FixtureProfiler({k: v for k, v in full._entries.items() if k in keep})

    cfg = RunConfig(
        dataset_path=str(tiny_dataset_dir),
        dataset_name="tiny",
        out_dir=str(tmp_path / "out"),
        profiler="fixture",
        profile_fixture="unused.jsonl",
    )
    pipeline = pl.Pipeline(cfg, ds)
    pipeline.profiler = lambda: partial
    from revmatch.errors import ProfilerUnavailable

    with pytest.raises(ProfilerUnavailable) as excinfo:
        pipeline.profile_stage()
    assert "3 of 4 completed" in str(excinfo.value)
    # Completed subjects were persisted for resume.
    records = pl.read_jsonl(Path(cfg.out_dir) / pl.PROFILES_FILE)
    assert {r["subject_id"] for r in records} == {"p1", "p2", "r1"}


def test_cli_provider_error_exit_code(tiny_dataset_dir, tmp_path):
    empty_fixture = tmp_path / "empty.jsonl"
    empty_fixture.write_text("")
    config = tmp_path / "cfg.json"
    config.write_text(
        json.dumps(
            {
                "dataset_path": str(tiny_dataset_dir),
                "dataset_name": "tiny",
                "out_dir": str(tmp_path / "out"),
                "profiler": "fixture",
                "profile_fixture": str(empty_fixture),
                "mode": "discrete",
            }
        )
    )
    assert cli.main(["--config", str(config), "pipeline"]) == cli.EXIT_PROVIDER


class IdentityChatJudge:
    """Chat provider that echoes an exact-match list for rubric prompts."""

    name = "identity-judge"
    requires_network = False

    def send(self, request):
        import re

        paper = json.loads(re.search(r"Paper tags: (\[.*?\])", request.prompt).group(1))
        reviewer = json.loads(re.search(r"Reviewer tags: (\[.*?\])", request.prompt).group(1))
        return json.dumps(
            [{"paper_tag": t, "reviewer_tag": t, "weight": 1.0} for t in paper if t in reviewer]
        )


def test_chat_judge_path_matches_deterministic_on_planted(planted, tmp_path):
    from revmatch.providers import ChatClient, MemoryCache

    cfg = _planted_cfg(planted, tmp_path / "judge", mode="full", judge="chat")
    pipeline = pl.Pipeline(cfg)
    pipeline.use_chat_client(ChatClient(IdentityChatJudge(), MemoryCache()))
    judged = pipeline.run()

    baseline = pl.cmd_pipeline(_planted_cfg(planted, tmp_path / "det", mode="full"))
    assert judged.report.metrics == baseline.report.metrics

    verdicts = pl.read_jsonl(Path(cfg.out_dir) / pl.VERDICTS_FILE)
    assert all(not v["fallback_used"] for v in verdicts)


def test_offline_mode_allows_local_providers(planted, tmp_path):
    # Fixture profiler and hash embeddings are not network providers, so a
    # cold-cache offline run must still succeed end to end.
    cfg = _planted_cfg(planted, tmp_path, mode="full", offline=True)
    result = pl.cmd_pipeline(cfg)
    assert result.report is not None


def test_fixture_generator_is_deterministic(tmp_path):
    a = generate_planted_fixture(tmp_path / "a")
    b = generate_planted_fixture(tmp_path / "b")
    for name in ("papers.jsonl", "reviewers.jsonl", "annotations.jsonl"):
        assert (a.dataset_dir / name).read_bytes() == (b.dataset_dir / name).read_bytes()
    assert a.profile_fixture_path.read_bytes() == b.profile_fixture_path.read_bytes()
