"""Independent Cascade diffusion: cascade sampling, spread estimation, exact oracle.

Spread counts the seeds themselves as activated, so ``sigma({u}) >= 1``.

Monte-Carlo estimates use the live-edge formulation: each world keeps every
edge independently with probability ``p`` and a seed set activates exactly
the nodes reachable over kept edges. This has the same distribution as
running the cascade step by step, lets many worlds be simulated at once with
numpy, and gives common random numbers for free when two seed sets are
evaluated on the same worlds.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .graph import SocialGraph

MAX_EXACT_EDGES = 25


class GraphTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class CascadeResult:
    activated: frozenset
    count: int


@dataclass(frozen=True)
class SpreadEstimate:
    mean: float
    n_sims: int
    std_err: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "n_sims": self.n_sims, "std_err": self.std_err}


def _check(g: SocialGraph, seeds: Iterable[int], p: float) -> list[int]:
    s = sorted({int(x) for x in seeds})
    if s and (s[0] < 0 or s[-1] >= g.n_nodes):
        raise ValueError(f"seed id out of range [0, {g.n_nodes})")
    if not 0.0 <= p <= 1.0:
        raise ValueError("activation probability must lie in [0, 1]")
    return s


def simulate_cascade(g: SocialGraph, seeds: Iterable[int], p: float,
                     rng: np.random.Generator) -> CascadeResult:
    """One cascade, round by round; attempts go in ascending node-id order."""
    frontier = _check(g, seeds, p)
    active = set(frontier)
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.out_adj[u].tolist():
                if v not in active and rng.random() < p:
                    active.add(v)
                    nxt.append(v)
        frontier = sorted(nxt)
    return CascadeResult(frozenset(active), len(active))


class LiveEdgeWorlds:
    """A fixed batch of sampled live-edge worlds for one graph and ``p``."""

    def __init__(self, g: SocialGraph, p: float, n_worlds: int, rng: np.random.Generator):
        if n_worlds < 1:
            raise ValueError("need at least one world")
        if not 0.0 <= p <= 1.0:
            raise ValueError("activation probability must lie in [0, 1]")
        self.g, self.p, self.n_worlds = g, p, n_worlds
        self.live = rng.random((n_worlds, g.n_edges)) < p
        self._offsets = np.concatenate([[0], np.cumsum(g.out_degree)[:-1]]).astype(np.int64)

    def reach(self, seeds: Iterable[int], blocked: np.ndarray | None = None) -> np.ndarray:
        """Boolean ``(n_worlds, n_nodes)`` activation matrix.

        Nodes flagged in ``blocked`` (same shape) are never entered; a seed
        that is blocked in a world does not start a cascade there. The search
        expands (world, node) frontier pairs over their out-edges, so the work
        is proportional to the live edges actually leaving reached nodes.
        """
        g = self.g
        seeds = _check(g, seeds, self.p)
        n, W = g.n_nodes, self.n_worlds
        reached = np.zeros((W, n), dtype=bool)
        if not seeds:
            return reached
        fw = np.repeat(np.arange(W), len(seeds))
        fu = np.tile(np.asarray(seeds, dtype=np.int64), W)
        if blocked is not None:
            keep = ~blocked[fw, fu]
            fw, fu = fw[keep], fu[keep]
        reached[fw, fu] = True
        offsets = self._offsets
        while fw.size:
            deg = g.out_degree[fu]
            total = int(deg.sum())
            if total == 0:
                break
            ew = np.repeat(fw, deg)
            first = np.repeat(offsets[fu] - (np.cumsum(deg) - deg), deg)
            eid = first + np.arange(total)
            ok = self.live[ew, eid]
            ew, v = ew[ok], g.dst[eid[ok]]
            fresh = ~reached[ew, v]
            if blocked is not None:
                fresh &= ~blocked[ew, v]
            key = np.unique(ew[fresh] * n + v[fresh])
            fw, fu = key // n, key % n
            reached[fw, fu] = True
        return reached

    def counts(self, seeds: Iterable[int]) -> np.ndarray:
        return self.reach(seeds).sum(axis=1)

    def estimate(self, seeds: Iterable[int]) -> SpreadEstimate:
        return _summarize(self.counts(seeds))

    def gain_counts(self, base_reach: np.ndarray, candidate: int) -> np.ndarray:
        """Per-world count of nodes ``candidate`` adds on top of ``base_reach``."""
        return self.reach([candidate], blocked=base_reach).sum(axis=1)


def _summarize(counts: np.ndarray) -> SpreadEstimate:
    n = counts.size
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return SpreadEstimate(mean, n, se)


def spread(g: SocialGraph, seeds: Iterable[int], p: float, n_sims: int,
           rng: np.random.Generator) -> SpreadEstimate:
    """Monte-Carlo estimate of the expected number of activated nodes."""
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    seeds = _check(g, seeds, p)
    if not seeds:
        return SpreadEstimate(0.0, n_sims, 0.0)
    return LiveEdgeWorlds(g, p, n_sims, rng).estimate(seeds)


def marginal_gain(g: SocialGraph, base: Iterable[int], candidate: int, p: float,
                  n_sims: int = 1000, rng: np.random.Generator | None = None,
                  exact: bool = False) -> float:
    """``sigma(base + {candidate}) - sigma(base)``.

    The Monte-Carlo version evaluates both sets on the same worlds.
    """
    base = _check(g, base, p)
    _check(g, [candidate], p)
    if candidate in base:
        raise ValueError("candidate already in base set")
    if exact:
        return exact_spread(g, base + [candidate], p) - exact_spread(g, base, p)
    if rng is None:
        raise ValueError("Monte-Carlo marginal gain needs an rng")
    worlds = LiveEdgeWorlds(g, p, n_sims, rng)
    return float(worlds.gain_counts(worlds.reach(base), candidate).mean())


# ---------------------------------------------------------------------------
# exact oracle


def exact_spread(g: SocialGraph, seeds: Iterable[int], p: float,
                 method: str = "cascade", max_edges: int = MAX_EXACT_EDGES) -> float:
    """Exact expected spread for tiny graphs.

    ``method="worlds"`` sums over all ``2^|E|`` live-edge subsets literally.
    ``method="cascade"`` (default) computes the same expectation by recursing
    over cascade states (active set, newest frontier): from a state, each
    inactive node hit by ``c`` frontier edges activates independently with
    probability ``1 - (1-p)^c``. The two agree to rounding; the recursion is
    far cheaper because it never branches on edges that cannot matter.
    """
    seeds = _check(g, seeds, p)
    if g.n_edges > max_edges:
        raise GraphTooLargeError(f"{g.n_edges} edges exceeds exact-enumeration limit {max_edges}")
    if not seeds:
        return 0.0
    if method == "worlds":
        return _exact_worlds(g, seeds, p)
    if method != "cascade":
        raise ValueError(f"unknown method {method!r}")
    if p == 0.0:
        return float(len(seeds))
    return _cascade_solver(_graph_key(g), float(p))(_mask(seeds))


def _mask(nodes) -> int:
    m = 0
    for v in nodes:
        m |= 1 << int(v)
    return m


def _graph_key(g: SocialGraph) -> tuple:
    return tuple(_mask(g.out_adj[u].tolist()) for u in range(g.n_nodes))


@lru_cache(maxsize=32)
def _cascade_solver(out_masks: tuple, p: float):
    """Expected final active count from a seed mask; memo shared across calls."""
    q = 1.0 - p
    memo: dict[tuple[int, int], float] = {}

    def expect(active: int, frontier: int) -> float:
        key = (active, frontier)
        hit = memo.get(key)
        if hit is not None:
            return hit
        hits: dict[int, int] = {}
        f = frontier
        while f:
            low = f & -f
            u = low.bit_length() - 1
            f ^= low
            targets = out_masks[u] & ~active
            while targets:
                t = targets & -targets
                v = t.bit_length() - 1
                targets ^= t
                hits[v] = hits.get(v, 0) + 1
        base = bin(active).count("1")
        if not hits:
            memo[key] = float(base)
            return float(base)
        cand = list(hits.items())
        probs = [1.0 - q ** c for _, c in cand]
        total = 0.0
        # enumerate which candidates fire this round
        m = len(cand)
        for sub in range(1 << m):
            w = 1.0
            new = 0
            for i in range(m):
                if sub >> i & 1:
                    w *= probs[i]
                    new |= 1 << cand[i][0]
                else:
                    w *= 1.0 - probs[i]
            if w == 0.0:
                continue
            total += w * (float(base) if new == 0 else expect(active | new, new))
        memo[key] = total
        return total

    return lambda seed_mask: expect(seed_mask, seed_mask)


def _exact_worlds(g: SocialGraph, seeds: list[int], p: float) -> float:
    m = g.n_edges
    if m > 22:
        raise GraphTooLargeError("literal world enumeration limited to 22 edges")
    total = 0.0
    src, dst = g.src.tolist(), g.dst.tolist()
    seed_mask = _mask(seeds)
    for world in range(1 << m):
        k = bin(world).count("1")
        prob = (p ** k) * ((1.0 - p) ** (m - k))
        if prob == 0.0:
            continue
        reach = seed_mask
        changed = True
        while changed:
            changed = False
            for e in range(m):
                if world >> e & 1 and reach >> src[e] & 1 and not reach >> dst[e] & 1:
                    reach |= 1 << dst[e]
                    changed = True
        total += prob * bin(reach).count("1")
    return total
