"""Seed-selection baselines and episode runners.

Selectors pick the next follower on a FollowerPhaseRequest; activity agents
pick the activity kind. Any selector can be paired with any activity agent,
which gives the AgentI+C / AgentI+H style combinations.

Ties are always broken toward the smallest node id. Gains within ``tol`` of
the round maximum count as tied, so Greedy and CELF agree even when the exact
oracle returns values that differ only by rounding.
"""

from __future__ import annotations

import heapq
from enum import Enum
from typing import Callable

import numpy as np

from .detector import ActivityKind
from .diffusion import LiveEdgeWorlds, exact_spread
from .env import EpisodeRecord, FollowerPhaseRequest, ObservationII, SocialBotEnv
from .graph import SocialGraph

TIE_TOL = 1e-9


class Strategy(str, Enum):
    GREEDY = "GREEDY"
    CELF = "CELF"
    DEGREE = "DEGREE"
    LEARNED = "LEARNED"
    RANDOM = "RANDOM"


class EmptyCandidateSet(ValueError):
    pass


# ---------------------------------------------------------------------------
# marginal-gain oracles


class ExactGain:
    """Marginal gains from the exact oracle; counts spread evaluations."""

    def __init__(self, g: SocialGraph, p: float):
        self.g, self.p = g, p
        self.evaluations = 0
        self._base_key: tuple | None = None
        self._base = 0.0

    def gain(self, chosen: list[int], u: int) -> float:
        key = tuple(sorted(chosen))
        if key != self._base_key:
            self._base_key, self._base = key, exact_spread(self.g, key, self.p)
        self.evaluations += 1
        return exact_spread(self.g, list(key) + [u], self.p) - self._base


class MonteCarloGain:
    """Common-random-number gains on one fixed batch of live-edge worlds."""

    def __init__(self, g: SocialGraph, p: float, n_sims: int = 1000, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.worlds = LiveEdgeWorlds(g, p, n_sims, rng)
        self.evaluations = 0
        self._base_key: tuple | None = None
        self._reach: np.ndarray | None = None

    def gain(self, chosen: list[int], u: int) -> float:
        key = tuple(sorted(chosen))
        if key != self._base_key:
            self._base_key, self._reach = key, self.worlds.reach(key)
        self.evaluations += 1
        return float(self.worlds.gain_counts(self._reach, u).mean())


def make_oracle(g: SocialGraph, p: float, exact: bool | None = None, n_sims: int = 1000,
                rng: np.random.Generator | None = None):
    """Exact oracle when requested (or, by default, when the graph is tiny)."""
    if exact is None:
        exact = g.n_edges <= 16 and g.n_nodes <= 16
    return ExactGain(g, p) if exact else MonteCarloGain(g, p, n_sims, rng)


def _pick(scores: dict[int, float], tol: float) -> int:
    best = max(scores.values())
    return min(u for u, s in scores.items() if s >= best - tol)


# ---------------------------------------------------------------------------
# Greedy and CELF


def greedy_select(g: SocialGraph, p: float, budget: int, oracle=None, tol: float = TIE_TOL) -> list[int]:
    """Plain greedy: every round evaluates every remaining node."""
    if budget < 0 or budget > g.n_nodes:
        raise ValueError(f"budget {budget} outside [0, {g.n_nodes}]")
    oracle = oracle or make_oracle(g, p)
    chosen: list[int] = []
    remaining = set(range(g.n_nodes))
    for _ in range(budget):
        scores = {u: oracle.gain(chosen, u) for u in sorted(remaining)}
        u = _pick(scores, tol)
        chosen.append(u)
        remaining.discard(u)
    return chosen


class CelfSelector:
    """Lazy-forward greedy over a max-heap of stale marginal-gain bounds.

    Per round, entries are popped while their bound could still reach the
    best fresh gain (minus ``tol``); stale ones are re-evaluated. Every node
    that might tie for the maximum is therefore fresh before the smallest-id
    rule is applied.
    """

    def __init__(self, g: SocialGraph, p: float, oracle=None, tol: float = TIE_TOL):
        self.g, self.p = g, p
        self.oracle = oracle or make_oracle(g, p)
        self.tol = tol
        self.chosen: list[int] = []
        self.round = 0
        self._heap: list[tuple[float, int, int]] = []
        for u in range(g.n_nodes):
            self._heap.append((-self.oracle.gain([], u), u, 0))
        heapq.heapify(self._heap)

    @property
    def evaluations(self) -> int:
        return self.oracle.evaluations

    def _sync(self, mask: np.ndarray | None) -> None:
        # nodes that left the candidate set without being chosen here
        if mask is not None:
            self._heap = [e for e in self._heap if mask[e[1]]]
            heapq.heapify(self._heap)

    def next_node(self, mask: np.ndarray | None = None) -> int:
        self._sync(mask)
        if not self._heap:
            raise EmptyCandidateSet("no candidate nodes left")
        fresh: dict[int, float] = {}
        best = -np.inf
        while self._heap:
            bound = -self._heap[0][0]
            if fresh and bound < best - self.tol:
                break
            _, u, last = heapq.heappop(self._heap)
            val = bound if last == self.round else self.oracle.gain(self.chosen, u)
            fresh[u] = val
            best = max(best, val)
        pick = _pick(fresh, self.tol)
        for u, val in fresh.items():
            if u != pick:
                heapq.heappush(self._heap, (-val, u, self.round))
        self.chosen.append(pick)
        self.round += 1
        return pick


def celf_select(g: SocialGraph, p: float, budget: int, oracle=None, tol: float = TIE_TOL):
    """Returns ``(chosen, evaluations)``."""
    if budget < 0 or budget > g.n_nodes:
        raise ValueError(f"budget {budget} outside [0, {g.n_nodes}]")
    sel = CelfSelector(g, p, oracle, tol)
    if budget == 0:
        return [], 0
    return [sel.next_node() for _ in range(budget)], sel.evaluations


def next_node_degree(g: SocialGraph, mask: np.ndarray) -> int:
    if not mask.any():
        raise EmptyCandidateSet("no candidate nodes left")
    deg = np.where(mask, g.out_degree, -1)
    return int(np.argmax(deg))


# ---------------------------------------------------------------------------
# selectors used inside episodes


class Selector:
    strategy: Strategy

    def reset(self, env: SocialBotEnv) -> None:
        pass

    def select(self, env: SocialBotEnv, obs2: ObservationII) -> int:
        raise NotImplementedError


class DegreeSelector(Selector):
    strategy = Strategy.DEGREE

    def select(self, env, obs2):
        return next_node_degree(env.g, obs2.mask)


class CelfEpisodeSelector(Selector):
    strategy = Strategy.CELF

    def __init__(self, p: float | None = None, n_sims: int = 1000, exact: bool | None = None, seed: int = 0):
        self.p, self.n_sims, self.exact, self.seed = p, n_sims, exact, seed
        self._sel: CelfSelector | None = None

    def reset(self, env):
        p = env.cfg.p if self.p is None else self.p
        oracle = make_oracle(env.g, p, self.exact, self.n_sims, np.random.default_rng(self.seed))
        self._sel = CelfSelector(env.g, p, oracle)

    def select(self, env, obs2):
        if self._sel is None:
            self.reset(env)
        return self._sel.next_node(obs2.mask)

    @property
    def evaluations(self) -> int:
        return 0 if self._sel is None else self._sel.evaluations


class RandomSelector(Selector):
    strategy = Strategy.RANDOM

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def select(self, env, obs2):
        valid = np.flatnonzero(obs2.mask)
        if valid.size == 0:
            raise EmptyCandidateSet("no candidate nodes left")
        return int(valid[int(self.rng.random() * valid.size)])


class LearnedSelector(Selector):
    strategy = Strategy.LEARNED

    def __init__(self, bundle, seed: int = 0, greedy: bool = False):
        self.bundle, self.greedy = bundle, greedy
        self.rng = np.random.default_rng(seed)

    def select(self, env, obs2):
        return self.bundle.act2(obs2, self.rng, greedy=self.greedy)[0]


# ---------------------------------------------------------------------------
# activity agents


class LearnedActivityAgent:
    def __init__(self, bundle, seed: int = 0, greedy: bool = False):
        self.bundle, self.greedy = bundle, greedy
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs1: np.ndarray) -> int:
        return self.bundle.act1(obs1, self.rng, greedy=self.greedy)[0]


class ScriptedActivityAgent:
    """Cycles through a fixed pattern of activity kinds."""

    def __init__(self, pattern=(ActivityKind.RETWEET,)):
        self.pattern = [ActivityKind(k) for k in pattern]
        self.i = 0

    def __call__(self, obs1: np.ndarray) -> int:
        k = self.pattern[self.i % len(self.pattern)]
        self.i += 1
        return int(k)


def run_baseline_episode(env: SocialBotEnv, activity_agent: Callable, selector: Selector,
                         seed: int | None = None, on_acquire: Callable | None = None) -> EpisodeRecord:
    """Drive one episode to termination and return its record."""
    obs1, _ = env.reset(seed)
    selector.reset(env)
    while True:
        out = env.step_activity(activity_agent(obs1))
        if isinstance(out, FollowerPhaseRequest):
            u = selector.select(env, out.obs2)
            if not out.obs2.mask[u]:
                raise RuntimeError(f"selector picked masked node {u}")
            out = env.step_follower(u)
            if on_acquire is not None and out.info["acquired"] is not None:
                on_acquire(env)
        if out.terminated:
            return env.record()
        obs1 = out.obs1
