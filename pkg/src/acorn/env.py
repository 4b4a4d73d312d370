"""Socialbot MDP: two-phase hierarchical stepping under an interval detector.

One activity is one timestep. AgentI picks an activity kind; a TWEET is
appended directly, while RETWEET/REPLY/MENTION hand control to AgentII, whose
chosen target costs ``g`` consecutive interactions. The detector runs on the
full activity prefix whenever its length reaches a multiple of ``K``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .detector import Activity, ActivityKind, ActivitySequence, RandomForest, features_from_counts, predict
from .diffusion import LiveEdgeWorlds, exact_spread
from .graph import SocialGraph


class EnvProtocolError(RuntimeError):
    pass


class InvalidActionError(ValueError):
    pass


class TerminalReason(str, Enum):
    RUNNING = "RUNNING"
    DETECTED = "DETECTED"
    HORIZON = "HORIZON"
    ALL_ACQUIRED = "ALL_ACQUIRED"


@dataclass
class EnvConfig:
    K: int = 20
    Q: int = 3
    T: int = 60
    p: float = 0.8
    n_sims_reward: int = 200
    rng_seed: int = 0
    exact_reward: bool = False
    # False keeps the bot running after every node follows it (evaluation of
    # long-run survival); interactions then target an existing follower
    stop_when_all_acquired: bool = True

    def __post_init__(self):
        if self.K < 1 or self.Q < 1 or self.T < 1:
            raise ValueError("K, Q and T must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.n_sims_reward < 1:
            raise ValueError("n_sims_reward must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ObservationII:
    embeddings: np.ndarray      # (n, k)
    snapshot: np.ndarray        # (4,) activity-kind frequencies
    membership: np.ndarray      # (n,)
    mask: np.ndarray            # (n,) True where the node can still be chosen


@dataclass
class FollowerPhaseRequest:
    kind: ActivityKind
    obs2: ObservationII


@dataclass
class StepOutcome:
    reward: float
    terminated: bool
    terminal_reason: TerminalReason
    obs1: np.ndarray
    obs2: ObservationII | None
    info: dict = field(default_factory=dict)


@dataclass
class EpisodeRecord:
    n_nodes: int
    followers: list[int]
    acquired_at: list[int]          # activity count when each follower joined
    selected_degrees: list[int]
    step_rewards: list[float]
    delayed_reward: float
    final_spread: float
    T_star: int
    n_activities: int
    kind_counts: list[int]
    terminal_reason: TerminalReason
    K: int

    @property
    def survival_steps(self) -> int:
        return self.n_activities

    @property
    def influence_ratio(self) -> float:
        return self.final_spread / self.n_nodes if self.n_nodes else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["terminal_reason"] = self.terminal_reason.value
        return d


Detector = Callable[[np.ndarray], int]


def as_detector(detector) -> Detector:
    if isinstance(detector, RandomForest):
        return lambda fv: predict(detector, fv).label
    if callable(detector):
        return detector
    raise TypeError("detector must be a RandomForest or a callable feature-vector -> {0,1}")


class SocialBotEnv:
    def __init__(self, graph: SocialGraph, detector, cfg: EnvConfig, embeddings: np.ndarray):
        if graph.n_nodes < 1:
            raise ValueError("graph has no nodes")
        if embeddings.ndim != 2 or embeddings.shape[0] != graph.n_nodes:
            raise ValueError(f"embeddings have {embeddings.shape[0]} rows for {graph.n_nodes} nodes")
        self.g = graph
        self.detect = as_detector(detector)
        self.cfg = cfg
        self.embeddings = embeddings
        self.n_neighbors = graph.out_degree
        self.trace: list[dict] = []
        self.reset()

    # -- lifecycle -------------------------------------------------------

    def reset(self, seed: int | None = None) -> tuple[np.ndarray, ObservationII]:
        seed = self.cfg.rng_seed if seed is None else seed
        ss = np.random.SeedSequence(seed)
        cost_ss, reward_ss = ss.spawn(2)
        self.rng = np.random.default_rng(cost_ss)
        self._reward_rng = np.random.default_rng(reward_ss)
        self._worlds: LiveEdgeWorlds | None = None
        self._single: dict[int, float] = {}
        self.seq = ActivitySequence()
        self.t = 0
        self.in_S = np.zeros(self.g.n_nodes, dtype=bool)
        self.followers: list[int] = []
        self.acquired_at: list[int] = []
        self.step_rewards: list[float] = []
        self.pending: ActivityKind | None = None
        self.detected = False
        self.reason = TerminalReason.RUNNING
        self.delayed_reward = 0.0
        self.detector_checks = 0
        self.trace = []
        return self.observation1(), self.observation2()

    @property
    def running(self) -> bool:
        return self.reason == TerminalReason.RUNNING

    # -- observations ----------------------------------------------------

    def _frequencies(self) -> np.ndarray:
        return self.seq.counts / max(1, len(self.seq))

    def observation1(self) -> np.ndarray:
        return np.append(self._frequencies(), float(len(self.followers)))

    def encode_membership(self) -> np.ndarray:
        val = (1.0 + len(self.followers)) / (1.0 + self.n_neighbors)
        return np.where(self.in_S, 0.0, val)

    def observation2(self) -> ObservationII:
        return ObservationII(self.embeddings, self._frequencies(), self.encode_membership(), ~self.in_S)

    # -- mechanics -------------------------------------------------------

    def acquisition_cost(self, u: int) -> int:
        """Draw ``g = max(1, Q * f)`` with ``f ~ Bernoulli(theta)``, theta clamped to [0, 1]."""
        if self.in_S[u]:
            raise InvalidActionError(f"node {u} is already a follower")
        theta = 1.0 - (1.0 + len(self.followers)) / (1.0 + self.n_neighbors[u])
        theta = min(1.0, max(0.0, theta))
        f = 1 if self.rng.random() < theta else 0
        return max(1, self.cfg.Q * f)

    def _sigma(self, seeds: list[int]) -> float:
        if not seeds:
            return 0.0
        if len(seeds) == self.g.n_nodes:
            return float(self.g.n_nodes)
        if self.cfg.exact_reward:
            return exact_spread(self.g, seeds, self.cfg.p)
        if self._worlds is None:
            self._worlds = LiveEdgeWorlds(self.g, self.cfg.p, self.cfg.n_sims_reward, self._reward_rng)
        return float(self._worlds.counts(seeds).mean())

    def single_spread(self, u: int) -> float:
        if u not in self._single:
            self._single[u] = self._sigma([u])
        return self._single[u]

    def _append(self, kind: ActivityKind, target: int | None) -> bool:
        """Append one activity; returns True if the detector fired."""
        self.t += 1
        self.seq.append(Activity(kind, target, self.t))
        if len(self.seq) % self.cfg.K == 0:
            self.detector_checks += 1
            fv = features_from_counts(self.seq.counts, self.seq.n_unique_mentions, self.t)
            if int(self.detect(fv)) == 1:
                self.detected = True
                return True
        return False

    def _terminate(self, reason: TerminalReason) -> float:
        self.reason = reason
        self.delayed_reward = self._sigma(self.followers)
        return self.delayed_reward

    def _outcome(self, reward: float, info: dict) -> StepOutcome:
        done = not self.running
        return StepOutcome(reward, done, self.reason, self.observation1(),
                           None if done else self.observation2(), info)

    def _check_running(self):
        if not self.running:
            raise EnvProtocolError(f"episode already terminated ({self.reason.value})")

    def step_activity(self, kind) -> StepOutcome | FollowerPhaseRequest:
        self._check_running()
        if self.pending is not None:
            raise EnvProtocolError("follower phase pending: call step_follower first")
        kind = ActivityKind(kind)
        target = None
        if kind != ActivityKind.TWEET:
            if len(self.followers) < self.g.n_nodes:
                self.pending = kind
                return FollowerPhaseRequest(kind, self.observation2())
            target = self.followers[int(self.rng.integers(len(self.followers)))]
        fired = self._append(kind, target)
        reward = 0.0
        if fired:
            reward = self._terminate(TerminalReason.DETECTED)
        elif self.t >= self.cfg.T:
            reward = self._terminate(TerminalReason.HORIZON)
        info = {"acquired": None, "g": 0, "detector_fired": fired, "activities": 1, "target": target}
        self._log("I", int(kind), 0, reward, fired)
        return self._outcome(reward, info)

    def step_follower(self, u: int) -> StepOutcome:
        self._check_running()
        if self.pending is None:
            raise EnvProtocolError("no follower phase outstanding")
        u = int(u)
        if not 0 <= u < self.g.n_nodes or self.in_S[u]:
            raise InvalidActionError(f"node {u} is masked or out of range")
        kind, self.pending = self.pending, None
        g = self.acquisition_cost(u)
        fired = False
        done_acts = 0
        for _ in range(g):
            done_acts += 1
            if self._append(kind, u):
                fired = True
                break
        reward = 0.0
        acquired = None
        if fired:
            reward = self._terminate(TerminalReason.DETECTED)
        else:
            self.in_S[u] = True
            self.followers.append(u)
            self.acquired_at.append(len(self.seq))
            acquired = u
            reward = self.single_spread(u)
            self.step_rewards.append(reward)
            if len(self.followers) == self.g.n_nodes and self.cfg.stop_when_all_acquired:
                reward += self._terminate(TerminalReason.ALL_ACQUIRED)
            elif self.t >= self.cfg.T:
                reward += self._terminate(TerminalReason.HORIZON)
        info = {"acquired": acquired, "g": g, "detector_fired": fired, "activities": done_acts}
        self._log("II", u, g, reward, fired)
        return self._outcome(reward, info)

    # -- bookkeeping -----------------------------------------------------

    def _log(self, phase: str, action: int, g: int, reward: float, fired: bool) -> None:
        self.trace.append({"t": self.t, "phase": phase, "action": action, "g": g,
                           "reward": reward, "detector_fired": fired, "n_followers": len(self.followers)})

    @property
    def T_star(self) -> int:
        return len(self.seq) // self.cfg.K

    def record(self) -> EpisodeRecord:
        if self.running:
            raise EnvProtocolError("episode still running")
        deg = self.g.out_degree
        return EpisodeRecord(
            n_nodes=self.g.n_nodes, followers=list(self.followers), acquired_at=list(self.acquired_at),
            selected_degrees=[int(deg[u]) for u in self.followers], step_rewards=list(self.step_rewards),
            delayed_reward=self.delayed_reward, final_spread=self.delayed_reward, T_star=self.T_star,
            n_activities=len(self.seq), kind_counts=self.seq.counts.tolist(),
            terminal_reason=self.reason, K=self.cfg.K)

    def write_trace(self, fh) -> None:
        for row in self.trace:
            fh.write(json.dumps(row) + "\n")


def episode_objective(record: EpisodeRecord) -> float:
    """Final spread times one plus the number of completed detection intervals."""
    if record.terminal_reason == TerminalReason.RUNNING:
        raise EnvProtocolError("objective undefined for a running episode")
    return record.final_spread * (1 + record.T_star)
