import numpy as np
import pytest

from acorn.embedding import (WalkParams, load_embeddings_bin, node2vec_embed, random_walks,
                             save_embeddings_bin, save_embeddings_csv)
from acorn.graph import CommunityConfig, SocialGraph, generate_synthetic


def _cos(a):
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    return a @ a.T


def _two_cliques(n=10):
    edges = [(u, v) for u in range(n) for v in range(n) if u != v]
    edges += [(u + n, v + n) for u, v in edges]
    return SocialGraph.from_edges(2 * n, edges)


def test_single_node_graph():
    emb = node2vec_embed(SocialGraph.from_edges(1, []), k=8)
    assert emb.shape == (1, 8) and np.all(np.isfinite(emb))


def test_zero_dimension_rejected():
    with pytest.raises(ValueError):
        node2vec_embed(SocialGraph.from_edges(2, [(0, 1)]), k=0)


def test_disjoint_cliques_separate():
    emb = node2vec_embed(_two_cliques(), k=16, walk_params=WalkParams(rng_seed=3))
    c = _cos(emb)
    side = np.repeat([0, 1], 10)
    same = side[:, None] == side[None, :]
    np.fill_diagonal(same, False)
    assert c[same].mean() > c[side[:, None] != side[None, :]].mean()


def test_community_separation_on_block_graph():
    cfg = CommunityConfig([25, 25], 0.6, 0.03, rng_seed=5)
    g = generate_synthetic(cfg)
    emb = node2vec_embed(g, k=16, walk_params=WalkParams(rng_seed=1, iterations=150))
    c = _cos(emb)
    side = np.repeat([0, 1], 25)
    same = side[:, None] == side[None, :]
    np.fill_diagonal(same, False)
    assert c[same].mean() > c[side[:, None] != side[None, :]].mean()


def test_embedding_is_deterministic():
    g = generate_synthetic(CommunityConfig([8, 8], 0.8, 0.05, rng_seed=2))
    wp = WalkParams(rng_seed=9, iterations=40)
    assert np.array_equal(node2vec_embed(g, 8, wp), node2vec_embed(g, 8, wp))


def test_isolated_node_keeps_initial_vector():
    g = SocialGraph.from_edges(4, [(0, 1), (1, 2)])
    wp = WalkParams(rng_seed=4, iterations=30)
    rng = np.random.default_rng(4)
    init = (rng.random((4, 6)) - 0.5) / 6
    emb = node2vec_embed(g, 6, wp)
    assert np.array_equal(emb[3], init[3])
    assert not np.array_equal(emb[0], init[0])


def test_walks_stay_on_edges():
    g = generate_synthetic(CommunityConfig([10, 10], 0.7, 0.05, rng_seed=0))
    und = {(u, v) for u, v in g.edges()} | {(v, u) for u, v in g.edges()}
    wp = WalkParams(walks_per_node=2, walk_length=12, return_p=0.5, inout_q=2.0)
    for w in random_walks(g, wp, np.random.default_rng(0)):
        assert all((int(a), int(b)) in und for a, b in zip(w[:-1], w[1:]))


def test_serialization_roundtrip(tmp_path):
    emb = np.random.default_rng(0).normal(size=(5, 3))
    save_embeddings_bin(emb, tmp_path / "e.bin")
    assert np.array_equal(load_embeddings_bin(tmp_path / "e.bin"), emb)
    save_embeddings_csv(emb, tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "node,d0,d1,d2" and len(rows) == 6
    back = np.array([[float(x) for x in r.split(",")[1:]] for r in rows[1:]])
    assert np.array_equal(back, emb)


def test_truncated_binary_rejected(tmp_path):
    save_embeddings_bin(np.ones((3, 2)), tmp_path / "e.bin")
    data = (tmp_path / "e.bin").read_bytes()
    (tmp_path / "e.bin").write_bytes(data[:-4])
    with pytest.raises(ValueError):
        load_embeddings_bin(tmp_path / "e.bin")
