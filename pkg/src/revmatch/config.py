"""Run configuration: hyperparameters, provider selection, and IO paths.

The built-in hyperparameter defaults are the reference operating point of
the method (rank-fusion constant 60, top-3 history aggregation, 15-candidate
pool, rubric weights 0.5/0.3/0.2, thresholds 0.35/1.35/2.35) and a config
self-test asserts they stay put. Precedence when assembling a run:
command-line flag > config file > built-in default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

PIPELINE_MODES = ("discrete", "semantic", "committee", "hybrid", "full")
POOL_MODES = ("benchmark", "open")
PROFILER_KINDS = ("fixture", "keyword", "chat")
EMBEDDER_KINDS = ("hash", "http")
JUDGE_KINDS = ("deterministic", "chat")

#: Reference hyperparameter defaults; the config self-test pins these.
REFERENCE_DEFAULTS = {
    "k": 60.0,
    "m": 3,
    "M": 15,
    "w1": 1.0,
    "w2": 1.0,
    "w3": 1.0,
    "alpha": 0.5,
    "beta": 0.3,
    "gamma": 0.2,
    "tau": (0.35, 1.35, 2.35),
    "repeats": 3,
    "temperature": 0.1,
}


@dataclass
class RunConfig:
    # Dataset and IO
    dataset_path: str = ""
    dataset_name: str = ""
    out_dir: str = "out"
    cache_dir: str = ""  # defaults to <out_dir>/cache

    # Pipeline selection
    mode: str = "full"
    pool: str = "benchmark"

    # Hyperparameters
    k: float = 60.0
    m: int = 3
    M: int = 15
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    tau: tuple[float, float, float] = (0.35, 1.35, 2.35)
    repeats: int = 3
    temperature: float = 0.1

    # Evaluation
    metric_ns: tuple[int, ...] = ()  # empty = pick by dataset name

    # Providers
    profiler: str = "keyword"
    profile_fixture: str = ""
    embedder: str = "hash"
    embed_dim: int = 256
    judge: str = "deterministic"
    chat_model: str = "chat-default"
    chat_fixture: str = ""  # canned chat responses keyed by idempotency key
    embed_model: str = "embed-default"
    call_ceiling: int | None = None
    offline: bool = False
    seed: int = 0

    # Plumbing
    digest_char_budget: int = 20000
    concurrency: int = 4
    synonyms: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.mode not in PIPELINE_MODES:
            raise ConfigError(f"mode must be one of {PIPELINE_MODES}, got {self.mode!r}")
        if self.pool not in POOL_MODES:
            raise ConfigError(f"pool must be one of {POOL_MODES}, got {self.pool!r}")
        if self.profiler not in PROFILER_KINDS:
            raise ConfigError(f"profiler must be one of {PROFILER_KINDS}, got {self.profiler!r}")
        if self.embedder not in EMBEDDER_KINDS:
            raise ConfigError(f"embedder must be one of {EMBEDDER_KINDS}, got {self.embedder!r}")
        if self.judge not in JUDGE_KINDS:
            raise ConfigError(f"judge must be one of {JUDGE_KINDS}, got {self.judge!r}")
        if self.k <= 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        for name in ("m", "M", "repeats", "concurrency", "digest_char_budget", "embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("w1", "w2", "w3"):
            value = getattr(self, name)
            if not 0.0 <= value <= 2.0:
                raise ConfigError(f"{name} must lie in [0, 2], got {value}")
        if len(self.tau) != 3 or not self.tau[0] < self.tau[1] < self.tau[2]:
            raise ConfigError(f"tau must be three strictly increasing thresholds, got {self.tau}")
        if min(self.alpha, self.beta, self.gamma) < 0 or abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError(
                f"alpha+beta+gamma must be non-negative and sum to 1, got "
                f"({self.alpha}, {self.beta}, {self.gamma})"
            )
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.profiler == "fixture" and not self.profile_fixture:
            raise ConfigError("profiler 'fixture' requires profile_fixture to point at a fixture file")

    @property
    def effective_cache_dir(self) -> str:
        return self.cache_dir or str(Path(self.out_dir) / "cache")

    def weight_triple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def to_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["tau"] = list(self.tau)
        payload["metric_ns"] = list(self.metric_ns)
        payload["synonyms"] = [list(pair) for pair in self.synonyms]
        return payload


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(values: dict) -> RunConfig:
    unknown = sorted(set(values) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    coerced = dict(values)
    if "tau" in coerced:
        coerced["tau"] = tuple(float(t) for t in coerced["tau"])
    if "metric_ns" in coerced:
        coerced["metric_ns"] = tuple(int(n) for n in coerced["metric_ns"])
    if "synonyms" in coerced:
        coerced["synonyms"] = tuple((str(a), str(b)) for a, b in coerced["synonyms"])
    config = RunConfig(**coerced)
    config.validate()
    return config


def load_config(path: str | Path) -> RunConfig:
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(values)


def merge_config(base: RunConfig, overrides: dict) -> RunConfig:
    """Apply non-None overrides (e.g. CLI flags) on top of a config."""
    values = {k: v for k, v in base.to_dict().items()}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown config override: {key}")
        values[key] = value
    return config_from_dict(values)


def config_self_test(config: RunConfig | None = None) -> None:
    """Assert invariants and that built-in defaults match the reference."""
    defaults = RunConfig()
    for name, expected in REFERENCE_DEFAULTS.items():
        actual = getattr(defaults, name)
        if actual != expected:
            raise ConfigError(f"built-in default {name}={actual!r} drifted from reference {expected!r}")
    (config or defaults).validate()
