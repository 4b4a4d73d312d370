"""node2vec embeddings: biased second-order walks + skip-gram with negative sampling.

Walks run on the undirected view of the graph; most members of a star
community have no out-edges, so out-edge-only walks would leave them with
untrained vectors.

Determinism holds for a fixed seed (everything is single-threaded numpy).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .graph import SocialGraph

DEFAULT_DIM = 16


@dataclass
class WalkParams:
    walks_per_node: int = 10
    walk_length: int = 40
    return_p: float = 1.0
    inout_q: float = 1.0
    window: int = 5
    negatives: int = 5
    iterations: int = 300
    lr: float = 0.05
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "WalkParams":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return asdict(self)


def _csr(nbrs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    deg = np.array([len(a) for a in nbrs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(deg)])
    flat = np.concatenate(nbrs) if len(nbrs) and deg.sum() else np.zeros(0, np.int64)
    return offsets, flat


def random_walks(g: SocialGraph, params: WalkParams, rng: np.random.Generator) -> list[np.ndarray]:
    """Generate ``walks_per_node`` walks from every node, in shuffled start order."""
    nbrs = g.undirected_neighbors()
    offsets, flat = _csr(nbrs)
    deg = np.diff(offsets)
    walks: list[np.ndarray] = []
    unbiased = params.return_p == 1.0 and params.inout_q == 1.0
    nbr_sets = None if unbiased else [set(a.tolist()) for a in nbrs]
    for _ in range(params.walks_per_node):
        starts = rng.permutation(g.n_nodes)
        if unbiased:
            # first-order uniform walks, advanced for all walkers at once
            paths = np.full((starts.size, params.walk_length), -1, dtype=np.int64)
            paths[:, 0] = starts
            cur = starts.copy()
            alive = deg[cur] > 0
            for step in range(1, params.walk_length):
                if not alive.any():
                    break
                idx = np.flatnonzero(alive)
                pick = (rng.random(idx.size) * deg[cur[idx]]).astype(np.int64)
                cur[idx] = flat[offsets[cur[idx]] + pick]
                paths[idx, step] = cur[idx]
            for row in paths:
                walks.append(row[row >= 0])
        else:
            for s in starts.tolist():
                walk = [s]
                while len(walk) < params.walk_length:
                    cur_n = walk[-1]
                    cand = nbrs[cur_n]
                    if cand.size == 0:
                        break
                    if len(walk) == 1:
                        walk.append(int(cand[int(rng.random() * cand.size)]))
                        continue
                    prev = walk[-2]
                    w = np.where(cand == prev, 1.0 / params.return_p,
                                 np.where([c in nbr_sets[prev] for c in cand.tolist()],
                                          1.0, 1.0 / params.inout_q))
                    w = w / w.sum()
                    walk.append(int(cand[np.searchsorted(np.cumsum(w), rng.random(), side="right").clip(max=cand.size - 1)]))
                walks.append(np.array(walk, dtype=np.int64))
    return walks


def _context_pairs(walks: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for w in walks:
        L = w.size
        for off in range(1, window + 1):
            if L <= off:
                break
            centers.append(w[:-off]); contexts.append(w[off:])
            centers.append(w[off:]); contexts.append(w[:-off])
    if not centers:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def cooccurrence(walks: list[np.ndarray], window: int, n: int) -> np.ndarray:
    """Symmetric center/context counts within ``window`` steps along each walk."""
    centers, contexts = _context_pairs(walks, window)
    return np.bincount(centers * n + contexts, minlength=n * n).reshape(n, n).astype(float)


def sgns_objective(w_in: np.ndarray, w_out: np.ndarray, pos: np.ndarray, neg_w: np.ndarray) -> float:
    s = w_in @ w_out.T
    return float((pos * _log_sigmoid(s)).sum() + (neg_w * _log_sigmoid(-s)).sum())


def node2vec_embed(g: SocialGraph, k: int = DEFAULT_DIM, walk_params: WalkParams | None = None) -> np.ndarray:
    """Return an ``(n_nodes, k)`` float64 embedding matrix.

    The skip-gram negative-sampling objective is optimized with the negative
    draws taken in expectation: every observed (center, context) pair
    contributes ``log sigma(v_c . u_o)`` and each center additionally
    contributes ``negatives * P_noise(o) * log sigma(-v_c . u_o)`` for every
    node ``o``, with the usual unigram^0.75 noise distribution. Optimization is
    full-batch Adam for ``iterations`` steps. Nodes that appear in no
    co-occurrence pair keep their initial vectors.
    """
    if k <= 0:
        raise ValueError("embedding dimension must be positive")
    if g.n_nodes < 1:
        raise ValueError("graph has no nodes")
    params = walk_params or WalkParams()
    rng = np.random.default_rng(params.rng_seed)
    n = g.n_nodes
    w_in = (rng.random((n, k)) - 0.5) / k
    w_out = (rng.random((n, k)) - 0.5) / k
    walks = random_walks(g, params, rng)
    pos = cooccurrence(walks, params.window, n)
    total = pos.sum()
    if total == 0:
        return w_in
    pos /= total
    noise = np.bincount(np.concatenate(walks), minlength=n).astype(float) ** 0.75
    noise /= noise.sum()
    neg_w = params.negatives * pos.sum(axis=1)[:, None] * noise[None, :]
    active = pos.sum(axis=1) > 0

    m = [np.zeros_like(w_in), np.zeros_like(w_out)]
    v = [np.zeros_like(w_in), np.zeros_like(w_out)]
    b1, b2, eps = 0.9, 0.999, 1e-8
    for it in range(1, params.iterations + 1):
        s = w_in @ w_out.T
        sig = 0.5 * (1.0 + np.tanh(0.5 * s))
        grad_s = pos * (1.0 - sig) - neg_w * sig        # ascent direction
        grads = [grad_s @ w_out, grad_s.T @ w_in]
        for i, (w, gr) in enumerate(zip((w_in, w_out), grads)):
            m[i] = b1 * m[i] + (1 - b1) * gr
            v[i] = b2 * v[i] + (1 - b2) * gr * gr
            step = params.lr * (m[i] / (1 - b1 ** it)) / (np.sqrt(v[i] / (1 - b2 ** it)) + eps)
            if i == 0:
                step[~active] = 0.0
            w += step
    return w_in


# ---------------------------------------------------------------------------
# serialization

def save_embeddings_bin(emb: np.ndarray, path) -> None:
    """Header: n_nodes, k as little-endian int64; body: row-major float64."""
    emb = np.ascontiguousarray(emb, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", emb.shape[0], emb.shape[1]))
        fh.write(emb.tobytes(order="C"))


def load_embeddings_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, k = struct.unpack("<qq", fh.read(16))
        body = fh.read()
    if len(body) != n * k * 8:
        raise ValueError(f"embedding file truncated: expected {n * k * 8} bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, k).copy()


def save_embeddings_csv(emb: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + [f"d{i}" for i in range(emb.shape[1])])
        for i, row in enumerate(emb):
            w.writerow([i] + [repr(float(x)) for x in row])
