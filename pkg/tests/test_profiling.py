from __future__ import annotations

import json
import random

import pytest

from revmatch import profiling
from revmatch.errors import ProfilerUnavailable, SchemaViolation, UnknownTemplate, UnparseableOutput
from revmatch.profiling import (
    FixtureProfiler,
    KeywordProfiler,
    Profile,
    ProfilerRequest,
    linearize_profile,
    normalize_profile,
    parse_profile_json,
    profile_text,
    render_prompt,
    source_hash,
)


class ScriptedProfiler:
    """Returns a fixed list of responses, one per repeat."""

    def __init__(self, responses):
        self.responses = responses
        self.calls = 0

    def run(self, req, repeat_index):
        self.calls += 1
        response = self.responses[repeat_index]
        if isinstance(response, Exception):
            raise response
        return response


# -- parse_profile_json ------------------------------------------------------

def test_parse_direct():
    profile = parse_profile_json(
        '{"topics":["GNNs"],"methodologies":[],"applications":["drug discovery"]}'
    )
    assert profile.topics == ("gnns",)
    assert profile.methodologies == ()
    assert profile.applications == ("drug discovery",)


def test_parse_with_fence_and_prose():
    profile = parse_profile_json('Sure! ```json {"topics":["IR"]} ```')
    assert profile.topics == ("ir",)
    assert profile.methodologies == ()
    assert profile.applications == ()


def test_parse_no_json():
    with pytest.raises(UnparseableOutput):
        parse_profile_json("no json here")


def test_parse_non_list_dimension():
    with pytest.raises(UnparseableOutput):
        parse_profile_json('{"topics": "just a string"}')


def test_parse_null_and_missing_keys_and_non_strings():
    profile = parse_profile_json('{"topics": null, "methodologies": ["a", 3, null, "b"]}')
    assert profile.topics == ()
    assert profile.methodologies == ("a", "b")
    assert profile.applications == ()


def test_parse_normalization_dedup_clip():
    raw = json.dumps(
        {"topics": ["  Graph   Mining ", "graph mining", "a", "b", "c", "d", "e"]}
    )
    profile = parse_profile_json(raw)
    assert profile.topics == ("graph mining", "a", "b", "c", "d")  # deduped then clipped at 5


def test_parse_drops_overlong_phrase():
    raw = json.dumps({"topics": ["x" * 81, "ok"]})
    profile = parse_profile_json(raw)
    assert profile.topics == ("ok",)


def test_parse_skips_unparseable_brace_runs():
    profile = parse_profile_json('{not json} and then {"topics": ["t"]}')
    assert profile.topics == ("t",)


def test_normalization_idempotent():
    rng = random.Random(7)
    for _ in range(50):
        phrases = tuple(
            " ".join(rng.choice(["alpha", "Beta", "g  g", "x"]) for _ in range(rng.randint(1, 3)))
            for _ in range(rng.randint(0, 6))
        )
        once = normalize_profile(Profile("s", "h", topics=phrases))
        twice = normalize_profile(once)
        assert once == twice


# -- profile_text ------------------------------------------------------------

def _valid(topics):
    return json.dumps({"topics": topics, "methodologies": ["m"], "applications": []})


def test_profile_text_unanimous_identity():
    response = _valid(["a", "b"])
    profiler = ScriptedProfiler([response] * 3)
    req = ProfilerRequest("s1", "reviewer", "some text", "reviewer_v1", repeats=3)
    profile = profile_text(req, profiler)
    assert profile.topics == ("a", "b")
    assert profile.methodologies == ("m",)
    assert profile.subject_id == "s1"
    assert profile.source_hash == source_hash("some text")
    assert profiler.calls == 3


def test_profile_text_majority_vote():
    # topics per run: {a,b}, {a,c}, {a} -> only "a" appears in more than 1.5 runs
    profiler = ScriptedProfiler([_valid(["a", "b"]), _valid(["a", "c"]), _valid(["a"])])
    req = ProfilerRequest("s1", "reviewer", "t", "reviewer_v1", repeats=3)
    assert profile_text(req, profiler).topics == ("a",)


def test_profile_text_all_malformed():
    profiler = ScriptedProfiler(["garbage"] * 3)
    req = ProfilerRequest("s1", "reviewer", "t", "reviewer_v1", repeats=3)
    with pytest.raises(SchemaViolation):
        profile_text(req, profiler)
    assert profiler.calls == 3


def test_profile_text_provider_down():
    profiler = ScriptedProfiler([ProfilerUnavailable("down")] * 3)
    req = ProfilerRequest("s1", "reviewer", "t", "reviewer_v1", repeats=3)
    with pytest.raises(ProfilerUnavailable):
        profile_text(req, profiler)


def test_profile_text_single_repeat_equals_parse():
    response = _valid(["solo"])
    profiler = ScriptedProfiler([response])
    req = ProfilerRequest("s1", "reviewer", "t", "reviewer_v1", repeats=1)
    via_vote = profile_text(req, profiler)
    direct = parse_profile_json(response, subject_id="s1", src_hash=source_hash("t"))
    assert via_vote == direct


def test_profile_text_majority_over_requested_repeats():
    # One good run out of three cannot reach the >1.5 threshold.
    profiler = ScriptedProfiler(["junk", _valid(["a"]), "junk"])
    req = ProfilerRequest("s1", "reviewer", "t", "reviewer_v1", repeats=3)
    assert profile_text(req, profiler).topics == ()


def test_profile_text_rejects_empty_text():
    with pytest.raises(ValueError):
        profile_text(ProfilerRequest("s", "reviewer", "", "reviewer_v1"), ScriptedProfiler([]))


# -- linearize ---------------------------------------------------------------

def test_linearize_fixed_dimension_order():
    profile = Profile(
        "s", "h", topics=("t1", "t2"), methodologies=("m1",), applications=("a1",)
    )
    assert linearize_profile(profile).text == "t1 t2 m1 a1"


def test_linearize_empty():
    assert linearize_profile(Profile("s", "h")).text == ""


def test_linearize_single_dimension():
    assert linearize_profile(Profile("s", "h", topics=("graph mining",))).text == "graph mining"


def test_linearize_token_multiset():
    rng = random.Random(3)
    vocab = ["alpha", "beta gamma", "delta", "eps zed"]
    for _ in range(30):
        profile = normalize_profile(
            Profile(
                "s",
                "h",
                topics=tuple(rng.sample(vocab, rng.randint(0, 3))),
                methodologies=tuple(rng.sample(vocab, rng.randint(0, 3))),
                applications=tuple(rng.sample(vocab, rng.randint(0, 3))),
            )
        )
        text = linearize_profile(profile).text
        expected = []
        for dim in profiling.DIMENSIONS:
            for phrase in profile.tags(dim):
                expected.extend(phrase.split(" "))
        assert sorted(text.split()) == sorted(expected) if expected else text == ""


# -- prompt registry ---------------------------------------------------------

def test_render_prompt_reviewer_template():
    prompt = render_prompt("reviewer_v1", "reviewer", "HISTORY GOES HERE")
    assert prompt.startswith("Analyze the following publication history")
    assert "HISTORY GOES HERE" in prompt
    assert "{text}" not in prompt


def test_render_prompt_unknown_template():
    with pytest.raises(UnknownTemplate):
        render_prompt("nope_v9", "reviewer", "x")


def test_render_prompt_deterministic():
    a = render_prompt("submission_v1", "submission", "same text")
    b = render_prompt("submission_v1", "submission", "same text")
    assert a == b


def test_template_version_changes_with_id():
    assert profiling.template_version("reviewer_v1") != profiling.template_version("submission_v1")


# -- offline profilers -------------------------------------------------------

def test_fixture_profiler_keyed_by_hash(tmp_path):
    text = "subject text"
    path = tmp_path / "fixture.jsonl"
    path.write_text(
        json.dumps({"source_hash": source_hash(text), "response": _valid(["from fixture"])}) + "\n"
    )
    profiler = FixtureProfiler.from_file(path)
    req = ProfilerRequest("s1", "reviewer", text, "reviewer_v1", repeats=3)
    assert profile_text(req, profiler).topics == ("from fixture",)


def test_fixture_profiler_missing_subject():
    profiler = FixtureProfiler({})
    req = ProfilerRequest("s1", "reviewer", "unknown", "reviewer_v1", repeats=1)
    with pytest.raises(ProfilerUnavailable):
        profile_text(req, profiler)


def test_keyword_profiler_produces_valid_profile():
    text = (
        "graph neural networks for link prediction. graph neural networks learn "
        "node embeddings. link prediction improves recommendation quality."
    )
    profiler = KeywordProfiler()
    req = ProfilerRequest("s1", "reviewer", text, "reviewer_v1", repeats=1)
    profile = profile_text(req, profiler)
    assert profile.topics  # the most frequent bigram lands in topics
    assert profile.topics[0] == "graph neural"
    again = profile_text(req, profiler)
    assert again == profile
