import math

import numpy as np
import pytest

from graphose.graph import PoseGraph, validate
from graphose.rng import STREAM_GRAPHS, substream
from graphose.synth import (
    SynthConfig,
    er_edge_probability,
    gen_barabasi_albert,
    gen_erdos_renyi,
    layout_kamada_kawai,
    sample_pretrain_graph,
    shortest_path_lengths,
    _stress,
)


def test_ba_two_nodes_single_edge():
    edges = gen_barabasi_albert(2, substream(0, 1))
    assert edges.tolist() == [[0, 1]]


def test_ba_large_graphs_are_trees():
    for seed in range(10):
        edges = gen_barabasi_albert(15, substream(seed, 2))
        assert edges.shape[0] == 14


def test_ba_m1_gives_connected_tree():
    for seed in range(20):
        n = 12
        edges = gen_barabasi_albert(n, substream(seed, 3))
        assert edges.shape[0] == n - 1
        d = shortest_path_lengths(n, edges)
        assert np.isfinite(d).all() and d.max() <= n  # connected


def test_ba_forced_m2_edge_count():
    class ForceM2:
        def __init__(self):
            self.inner = substream(7, 4)

        def random(self):
            return 0.95  # selects the m=2 branch

        def choice(self, *a, **kw):
            return self.inner.choice(*a, **kw)

    edges = gen_barabasi_albert(8, ForceM2())
    assert edges.shape[0] == 2 * (8 - 2)


def test_ba_rejects_tiny():
    with pytest.raises(ValueError):
        gen_barabasi_albert(1, substream(0, 5))


def test_er_probability_formula():
    assert er_edge_probability(5) == pytest.approx(math.exp(0.2) - 0.95, abs=1e-15)
    assert er_edge_probability(5) == pytest.approx(0.27140, abs=1e-5)
    assert er_edge_probability(30) == pytest.approx(0.08390, abs=1e-5)


def test_er_two_nodes_forced_include():
    class AlwaysInclude:
        def random(self, size=None):
            return np.zeros(size) if size is not None else 0.0

    edges = gen_erdos_renyi(2, AlwaysInclude())
    assert edges.tolist() == [[0, 1]]


def test_er_keeps_isolated_nodes():
    # small p at n=30 regularly leaves isolated nodes; the graph is still valid
    edges = gen_erdos_renyi(30, substream(1, 6))
    g = PoseGraph.create(np.zeros((30, 2)), edges=edges)
    assert validate(g) == []


def test_shortest_paths_disconnected_convention():
    d = shortest_path_lengths(4, np.array([[0, 1], [2, 3]]))
    assert d[0, 1] == 1.0
    assert d[0, 2] == 2.0  # max finite (1) + 1


def test_layout_single_node_center():
    pos = layout_kamada_kawai(np.zeros((0, 2), dtype=np.int64), 1, substream(0, 7))
    np.testing.assert_allclose(pos, [[0.5, 0.5]])


def test_layout_two_nodes_unit_apart():
    pos = layout_kamada_kawai(np.array([[0, 1]]), 2, substream(3, 8), iters=400, tol=1e-9)
    assert np.linalg.norm(pos[0] - pos[1]) == pytest.approx(1.0, abs=1e-3)
    assert pos.min() >= 0.0 and pos.max() <= 1.0


def test_layout_path_equal_spacing_and_stress_reduction():
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    rng = substream(5, 9)
    pos = layout_kamada_kawai(edges, 4, rng, iters=600, tol=1e-10)
    gaps = [np.linalg.norm(pos[i + 1] - pos[i]) for i in range(3)]
    assert max(gaps) / min(gaps) < 1.05
    # final stress beats the circle initialization
    d = shortest_path_lengths(4, edges)
    w = 1.0 / np.maximum(d, 1e-12) ** 2
    np.fill_diagonal(w, 0.0)
    ang = 2.0 * np.pi * np.arange(4) / 4
    circle = (d.max() / 2.0) * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    assert _stress(pos * d.max(), d, w) < _stress(circle, d, w)


def test_sample_determinism():
    cfg = SynthConfig(seed=42)
    g1 = sample_pretrain_graph(cfg, substream(42, STREAM_GRAPHS, 0))
    g2 = sample_pretrain_graph(cfg, substream(42, STREAM_GRAPHS, 0))
    assert np.array_equal(g1.positions, g2.positions)
    assert np.array_equal(g1.edges, g2.edges)


def test_sample_fixed_size_ba_tree():
    cfg = SynthConfig(n_min=5, n_max=5, ba_fraction=1.0)
    for seed in range(10):
        g = sample_pretrain_graph(cfg, substream(seed, STREAM_GRAPHS, 1))
        assert g.n_nodes == 5
        assert g.n_edges in (4, 2 * (5 - 2))  # m=1 tree, or the 10% m=2 branch
        assert g.attr_arity == 0 and g.noise_arity == 0


def test_sample_positions_in_unit_square():
    cfg = SynthConfig()
    for seed in range(15):
        g = sample_pretrain_graph(cfg, substream(seed, STREAM_GRAPHS, 2))
        assert g.positions.min() >= -1e-12
        assert g.positions.max() <= 1.0 + 1e-12


def test_node_count_coverage_uniform():
    cfg = SynthConfig()
    counts = np.zeros(31, dtype=int)
    total = 1000
    for i in range(total):
        rng = substream(99, STREAM_GRAPHS, i)
        n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
        counts[n] += 1
    p = 1.0 / 26.0
    expect = total * p
    sigma = math.sqrt(total * p * (1 - p))
    for n in range(5, 31):
        assert abs(counts[n] - expect) <= 3 * sigma
