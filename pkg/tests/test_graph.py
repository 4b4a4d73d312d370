import io
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acorn.graph import (CommunityConfig, EdgeListParseError, GraphProfile, SocialGraph,
                         community_blocks, expected_edge_count, generate_synthetic, load_edge_list,
                         load_graph_npz, save_edge_list, save_graph_npz)


def test_single_community_is_a_star():
    g = generate_synthetic(CommunityConfig([5], 1.0, 0.0, rng_seed=3))
    # p_intra=1 also turns on member pairs at 0.1, so only check the hub shape
    assert g.out_degree[0] == 4
    assert set(g.out_adj[0].tolist()) == {1, 2, 3, 4}
    assert g.in_degree[0] == 0


def test_zero_probabilities_give_edgeless_graph():
    g = generate_synthetic(CommunityConfig([4, 6], 0.0, 0.0))
    assert g.n_nodes == 10 and g.n_edges == 0


def test_zero_total_size_rejected():
    with pytest.raises(ValueError):
        generate_synthetic(CommunityConfig([0, 0], 0.5, 0.1))


def test_bad_probabilities_rejected():
    with pytest.raises(ValueError):
        CommunityConfig([3], 0.1, 0.5)


def _binomial_moments(sizes, p_in, p_out):
    # independent oracle: enumerate every ordered pair and its edge probability
    n = sum(sizes)
    comm = np.repeat(np.arange(len(sizes)), sizes)
    hubs = {int(b[0]) for b in community_blocks(sizes)}
    mean = var = 0.0
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            if comm[u] != comm[v]:
                q = p_out
            elif u in hubs:
                q = p_in
            elif v in hubs:
                q = 0.0
            else:
                q = p_in / 10
            mean += q
            var += q * (1 - q)
    return mean, var


def test_seeded_edge_count_against_binomial_model():
    cfg = CommunityConfig([50, 50, 50], 0.9, 0.01, rng_seed=7)
    mean, var = _binomial_moments(cfg.community_sizes, 0.9, 0.01)
    assert mean == pytest.approx(917.34, abs=1e-9)
    assert expected_edge_count(cfg) == pytest.approx((mean, var))
    g = generate_synthetic(cfg)
    assert abs(g.n_edges - mean) <= 3 * np.sqrt(var)
    assert g.n_edges == 885  # regression value for seed 7


def test_generator_is_bitwise_reproducible():
    cfg = CommunityConfig([20, 30], 0.8, 0.02, rng_seed=11)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert np.array_equal(a.src, b.src) and np.array_equal(a.dst, b.dst)


def test_intra_density_exceeds_inter_density_over_seeds():
    sizes = [15, 15, 20]
    comm = np.repeat(np.arange(3), sizes)
    same = comm[:, None] == comm[None, :]
    np.fill_diagonal(same, False)
    diff = comm[:, None] != comm[None, :]
    intra, inter = [], []
    for seed in range(30):
        g = generate_synthetic(CommunityConfig(sizes, 0.5, 0.05, rng_seed=seed))
        adj = np.zeros((g.n_nodes, g.n_nodes), dtype=bool)
        adj[g.src, g.dst] = True
        intra.append(adj[same].mean())
        inter.append(adj[diff].mean())
    assert np.mean(intra) >= np.mean(inter)


@given(st.integers(0, 10_000))
@settings(max_examples=15)
def test_profile_samples_respect_bounds(seed):
    prof = GraphProfile(n_nodes=(50, 80), n_communities=(2, 6), min_community=5)
    cfg = prof.sample(np.random.default_rng(seed))
    assert 50 <= cfg.n_nodes <= 80
    assert min(cfg.community_sizes) >= 5
    assert 0 <= cfg.p_inter <= cfg.p_intra


def test_edge_list_basic():
    g = load_edge_list(io.StringIO("0 1\n1 2\n"))
    assert (g.n_nodes, g.n_edges) == (3, 2)


def test_edge_list_empty_stream():
    g = load_edge_list(io.StringIO(""))
    assert g.n_nodes == 0 and g.n_edges == 0


def test_edge_list_duplicates_collapse():
    g = load_edge_list(io.StringIO("0 1\n0 1\n"))
    assert g.n_edges == 1


def test_edge_list_reindexes_and_keeps_labels():
    g = load_edge_list(io.StringIO("# comment\n100 7\n7 42  # trailing\n"))
    assert g.labels.tolist() == [7, 42, 100]
    assert set(g.edges()) == {(2, 0), (0, 1)}


def test_edge_list_malformed_line_reports_line_number():
    with pytest.raises(EdgeListParseError) as err:
        load_edge_list(io.StringIO("0 1\n\n1 x\n"))
    assert err.value.line_no == 3


def test_edge_list_self_loop_dropped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        g = load_edge_list(io.StringIO("0 0\n0 1\n"))
    assert g.n_edges == 1 and g.n_self_loops_dropped == 1
    assert "self-loop" in caplog.text


def test_edge_list_accepts_bytes_and_paths(tmp_path):
    g = generate_synthetic(CommunityConfig([6, 6], 0.9, 0.1, rng_seed=1))
    path = tmp_path / "g.txt"
    save_edge_list(g, path)
    h = load_edge_list(str(path))
    assert h.n_edges == g.n_edges
    assert load_edge_list(path.read_bytes()).n_edges == g.n_edges


def test_npz_roundtrip_keeps_isolated_nodes(tmp_path):
    g = SocialGraph.from_edges(5, [(0, 1)])
    save_graph_npz(g, tmp_path / "g.npz")
    h = load_graph_npz(tmp_path / "g.npz")
    assert h.n_nodes == 5 and h.edges() == [(0, 1)]


def test_from_edges_rejects_out_of_range():
    with pytest.raises(ValueError):
        SocialGraph.from_edges(2, [(0, 2)])


def test_reachable_follows_direction(chain):
    assert chain.reachable([1]) == {1, 2}
    assert chain.reachable([0]) == {0, 1, 2}
