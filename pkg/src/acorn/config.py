"""Experiment configuration: one JSON document, every default overridable."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .detector import BOT_PROFILES, HUMAN_PROFILE, ActivityProfile, ForestParams
from .embedding import WalkParams
from .env import EnvConfig
from .graph import GraphProfile
from .policy import TrainConfig

METHODS = ("ACORN", "AgentI+C", "AgentI+H", "AgentI*+C", "AgentI*+H")


class ConfigError(ValueError):
    pass


def _profile_dict(p: ActivityProfile) -> dict:
    return {"rates": list(p.rates), "mention_diversity": p.mention_diversity, "concentration": p.concentration}


@dataclass
class DetectorSpec:
    """Either a trained forest file or parameters for training one on scripted accounts."""

    path: str | None = None
    humans: list[dict] = field(default_factory=lambda: [_profile_dict(HUMAN_PROFILE)])
    bots: list[dict] = field(default_factory=lambda: [_profile_dict(b) for b in BOT_PROFILES])
    n_per_class: int = 1500
    max_length: int = 1000
    min_length: int = 20
    test_fraction: float = 0.2
    forest: ForestParams = field(default_factory=ForestParams)
    rng_seed: int = 0


@dataclass
class SuiteSpec:
    """Held-out evaluation graphs: synthetic, or every edge list in a directory."""

    n_graphs: int = 20
    profile: GraphProfile = field(default_factory=lambda: GraphProfile(n_nodes=(100, 300)))
    edge_list_dir: str | None = None
    rng_seed: int = 10_000


@dataclass
class BenchSpec:
    n_nodes: int = 200
    budget_fractions: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5, 0.75, 1.0])
    p_values: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    celf_sims: int = 200
    repeats: int = 3
    rng_seed: int = 0


@dataclass
class MultibotSpec:
    n_graphs: int = 10
    profile: GraphProfile = field(default_factory=lambda: GraphProfile(n_nodes=(100, 100)))
    method: str = "ACORN"
    p: float = 0.5
    rng_seed: int = 20_000


@dataclass
class ExperimentConfig:
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    p_values: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    episodes_per_cell: int = 20
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    budget_fractions: list[float] = field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 1.0])
    embed_dim: int = 16
    walk: WalkParams = field(default_factory=lambda: WalkParams(iterations=100))
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_profile: GraphProfile = field(default_factory=GraphProfile)
    train_per_seed: bool = True
    train_graph_pool: int = 32
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    suite: SuiteSpec = field(default_factory=SuiteSpec)
    eval_horizon_factor: int = 50
    eval_sims: int = 10_000
    celf_sims: int = 1000
    greedy_eval: bool = False
    bundle: str | None = None
    independent_bundle: str | None = None
    bench: BenchSpec = field(default_factory=BenchSpec)
    multibot: MultibotSpec = field(default_factory=MultibotSpec)
    out_dir: str = "runs/default"

    def validate(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ConfigError("seeds list must be nonempty")
        for p in list(self.p_values) + list(self.bench.p_values) + [self.multibot.p]:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p value {p} outside [0, 1]")
        for f in list(self.budget_fractions) + list(self.bench.budget_fractions):
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"budget fraction {f} outside (0, 1]")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or self.multibot.method not in METHODS:
            raise ConfigError(f"unknown method(s) {bad or [self.multibot.method]}; choose from {METHODS}")
        if self.train_graph_pool < 0:
            raise ConfigError("train_graph_pool must be >= 0")
        if self.episodes_per_cell < 0:
            raise ConfigError("episodes_per_cell must be >= 0")
        return self

    def to_dict(self) -> dict:
        return _plain(self)


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def _build(cls, data: dict, where: str):
    """Overlay ``data`` on ``cls()`` defaults, recursing into nested dataclasses."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    base = cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        if key not in fields:
            raise ConfigError(f"{where}: unknown key {key!r}")
        cur = getattr(base, key)
        if dataclasses.is_dataclass(cur):
            kwargs[key] = _build(type(cur), val, f"{where}.{key}")
        elif isinstance(cur, tuple):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config").validate()


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(data)
