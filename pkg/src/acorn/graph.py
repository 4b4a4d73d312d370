"""Directed social graphs: representation, synthetic generation, edge-list I/O.

Edge ``(u, v)`` means ``u`` influences ``v`` (``v`` follows ``u``), so the
out-degree of a node is its follower count.
"""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class EdgeListParseError(ValueError):
    def __init__(self, line_no: int, line: str, reason: str):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no


@dataclass(frozen=True, eq=False)
class SocialGraph:
    """Immutable directed graph with dense integer node ids.

    ``src``/``dst`` hold the edge list sorted by (src, dst); ``out_adj[u]`` is
    the ascending array of nodes ``u`` influences.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    out_adj: tuple = field(repr=False)
    out_degree: np.ndarray = field(repr=False)
    in_degree: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    n_self_loops_dropped: int = 0

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]] | np.ndarray,
                   labels: Sequence[int] | None = None) -> "SocialGraph":
        """Build a graph; duplicates are collapsed and self-loops dropped."""
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n_nodes):
            raise ValueError("edge endpoint outside [0, n_nodes)")
        loops = arr[:, 0] == arr[:, 1]
        n_loops = int(loops.sum())
        arr = arr[~loops]
        if arr.size:
            arr = np.unique(arr, axis=0)  # sorted lexicographically
        src = np.ascontiguousarray(arr[:, 0])
        dst = np.ascontiguousarray(arr[:, 1])
        out_degree = np.bincount(src, minlength=n_nodes).astype(np.int64)
        in_degree = np.bincount(dst, minlength=n_nodes).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(out_degree)])
        out_adj = tuple(dst[offsets[u]:offsets[u + 1]] for u in range(n_nodes))
        lab = None if labels is None else np.asarray(labels, dtype=np.int64)
        for a in (src, dst, out_degree, in_degree):
            a.setflags(write=False)
        return cls(n_nodes, src, dst, out_adj, out_degree, in_degree, lab, n_loops)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def reachable(self, seeds: Iterable[int]) -> set[int]:
        seen = set(int(s) for s in seeds)
        stack = list(seen)
        while stack:
            u = stack.pop()
            for v in self.out_adj[u].tolist():
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def undirected_neighbors(self) -> list[np.ndarray]:
        """Sorted union of in- and out-neighbors per node."""
        nbrs: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for u, v in zip(self.src.tolist(), self.dst.tolist()):
            nbrs[u].add(v)
            nbrs[v].add(u)
        return [np.array(sorted(s), dtype=np.int64) for s in nbrs]


# ---------------------------------------------------------------------------
# synthetic star-community graphs


@dataclass
class CommunityConfig:
    community_sizes: list[int]
    p_intra: float
    p_inter: float
    rng_seed: int = 0

    def __post_init__(self):
        self.community_sizes = [int(s) for s in self.community_sizes]
        if any(s < 0 for s in self.community_sizes):
            raise ValueError("community sizes must be non-negative")
        if not 0.0 <= self.p_inter <= self.p_intra <= 1.0:
            raise ValueError("need 0 <= p_inter <= p_intra <= 1")

    @property
    def n_communities(self) -> int:
        return len(self.community_sizes)

    @property
    def n_nodes(self) -> int:
        return sum(self.community_sizes)


def community_blocks(sizes: Sequence[int]) -> list[np.ndarray]:
    """Node ids per community; the first id of each block is its hub."""
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return [np.arange(offsets[i], offsets[i + 1]) for i in range(len(sizes))]


def generate_synthetic(config: CommunityConfig) -> SocialGraph:
    """Star-community generator.

    Inside a community the hub influences each member with probability
    ``p_intra`` and each ordered member pair is linked with ``p_intra / 10``.
    Ordered pairs in different communities are linked with ``p_inter``.
    """
    n = config.n_nodes
    if n == 0:
        raise ValueError("community sizes sum to zero")
    rng = np.random.default_rng(config.rng_seed)
    comm = np.repeat(np.arange(config.n_communities), config.community_sizes)
    u = rng.random((n, n))
    same = comm[:, None] == comm[None, :]
    hubs = np.zeros(n, dtype=bool)
    for block in community_blocks(config.community_sizes):
        if block.size:
            hubs[block[0]] = True
    prob = np.where(same, config.p_intra / 10.0, config.p_inter)
    # hub -> member edges
    hub_rows = same & hubs[:, None]
    prob = np.where(hub_rows, config.p_intra, prob)
    # members never point back at their hub through the member-member rule
    prob = np.where(same & hubs[None, :], 0.0, prob)
    np.fill_diagonal(prob, 0.0)
    src, dst = np.nonzero(u < prob)
    return SocialGraph.from_edges(n, np.stack([src, dst], axis=1))


def expected_edge_count(config: CommunityConfig) -> tuple[float, float]:
    """Mean and variance of the generator's edge count (sum of Bernoullis)."""
    mean = var = 0.0
    n = config.n_nodes
    for s in config.community_sizes:
        if s == 0:
            continue
        members = s - 1
        q_hub, q_mem = config.p_intra, config.p_intra / 10.0
        pairs = members * (members - 1)
        mean += members * q_hub + pairs * q_mem
        var += members * q_hub * (1 - q_hub) + pairs * q_mem * (1 - q_mem)
        cross = s * (n - s)
        mean += cross * config.p_inter
        var += cross * config.p_inter * (1 - config.p_inter)
    return mean, var


@dataclass
class GraphProfile:
    """Distribution over :class:`CommunityConfig` used to draw training graphs.

    Community sizes are drawn from a Dirichlet split of ``n_nodes`` with a
    floor of ``min_community`` nodes each.
    """

    n_nodes: tuple[int, int] = (200, 200)
    n_communities: tuple[int, int] = (6, 10)
    min_community: int = 5
    size_concentration: float = 1.0
    p_intra: tuple[float, float] = (0.7, 0.9)
    p_inter: tuple[float, float] = (0.001, 0.003)

    def sample(self, rng: np.random.Generator) -> CommunityConfig:
        n = int(rng.integers(self.n_nodes[0], self.n_nodes[1] + 1))
        c = int(rng.integers(self.n_communities[0], self.n_communities[1] + 1))
        c = max(1, min(c, n // max(1, self.min_community)))
        spare = n - c * self.min_community
        w = rng.dirichlet(np.full(c, self.size_concentration))
        extra = np.floor(w * spare).astype(int)
        extra[: spare - extra.sum()] += 1
        sizes = (extra + self.min_community).tolist()
        p_intra = float(rng.uniform(*self.p_intra))
        p_inter = float(min(p_intra, rng.uniform(*self.p_inter)))
        return CommunityConfig(sizes, p_intra, p_inter, int(rng.integers(2**31 - 1)))

    @classmethod
    def from_dict(cls, d: dict) -> "GraphProfile":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


# ---------------------------------------------------------------------------
# edge-list I/O


def _as_text_stream(source) -> io.TextIOBase:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def load_edge_list(source) -> SocialGraph:
    """Parse ``u v`` lines (``#`` starts a comment) into a re-indexed graph.

    Original ids are kept in ``graph.labels`` (sorted ascending, so dense id
    ``i`` corresponds to ``labels[i]``).
    """
    stream = _as_text_stream(source)
    raw: list[tuple[int, int]] = []
    try:
        for line_no, line in enumerate(stream, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise EdgeListParseError(line_no, line.rstrip("\n"), "expected two fields")
            try:
                raw.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise EdgeListParseError(line_no, line.rstrip("\n"), "non-integer node id") from None
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    if not raw:
        return SocialGraph.from_edges(0, [], labels=[])
    arr = np.array(raw, dtype=np.int64)
    labels, inverse = np.unique(arr, return_inverse=True)
    g = SocialGraph.from_edges(len(labels), inverse.reshape(-1, 2), labels=labels)
    if g.n_self_loops_dropped:
        log.warning("dropped %d self-loop(s) while loading edge list", g.n_self_loops_dropped)
    return g


def save_edge_list(g: SocialGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={g.n_nodes} edges={g.n_edges}\n")
        for u, v in zip(g.src.tolist(), g.dst.tolist()):
            fh.write(f"{u} {v}\n")


def save_graph_npz(g: SocialGraph, path) -> None:
    """Lossless binary form (keeps isolated nodes and original labels)."""
    arrays = {"n_nodes": np.array([g.n_nodes]), "src": g.src, "dst": g.dst}
    if g.labels is not None:
        arrays["labels"] = np.asarray(g.labels)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_graph_npz(path) -> SocialGraph:
    with np.load(path) as z:
        labels = z["labels"] if "labels" in z.files else None
        edges = np.stack([z["src"], z["dst"]], axis=1)
        return SocialGraph.from_edges(int(z["n_nodes"][0]), edges, labels=labels)
