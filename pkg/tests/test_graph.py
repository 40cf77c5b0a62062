import io

import numpy as np
import pytest

from graphose.graph import (
    MISSING,
    GraphFormatError,
    PoseGraph,
    canonical_edges,
    directed_pairs,
    neighbor_index,
    normalize_positions,
    read_graphs,
    to_record,
    validate,
    write_graphs,
)


def test_validate_minimal_ok():
    g = PoseGraph.create([[0.1, 0.1], [0.9, 0.9]], edges=[[0, 1]])
    assert validate(g) == []


def test_validate_self_loop():
    g = PoseGraph.create([[0.5, 0.5]], edges=[[0, 0]])
    assert any("self-loop at 0" in v for v in validate(g))


def test_validate_non_finite_position():
    g = PoseGraph.create([[np.nan, 0.2]])
    assert any("non-finite position" in v for v in validate(g))


def test_validate_duplicate_and_out_of_range():
    g = PoseGraph.create([[0, 0], [1, 1]], edges=[[0, 1], [1, 0], [0, 5]])
    msgs = validate(g)
    assert any("duplicate edge" in v for v in msgs)
    assert any("invalid node index" in v for v in msgs)


def test_normalize_axis_aligned_pair():
    g = PoseGraph.create([[0, 0], [2, 0]])
    out = normalize_positions(g).positions
    np.testing.assert_allclose(out, [[0, 0.5], [1, 0.5]])


def test_normalize_single_node_degenerate():
    g = PoseGraph.create([[7, -3]])
    out = normalize_positions(g).positions
    np.testing.assert_allclose(out, [[0.5, 0.5]])


def test_normalize_triangle_uniform_scale():
    g = PoseGraph.create([[0, 0], [4, 0], [0, 2]])
    out = normalize_positions(g).positions
    np.testing.assert_allclose(out, [[0, 0.25], [1, 0.25], [0, 0.75]])


def test_normalize_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = PoseGraph.create(rng.normal(size=(6, 2)) * 5)
        once = normalize_positions(g)
        twice = normalize_positions(once)
        np.testing.assert_allclose(twice.positions, once.positions, atol=1e-12)


def test_normalize_empty_graph_errors():
    g = PoseGraph.create(np.zeros((0, 2)))
    with pytest.raises(ValueError, match="empty graph"):
        normalize_positions(g)


def test_neighbor_index_basic():
    g = PoseGraph.create(np.zeros((2, 2)), edges=[[0, 1]])
    nbrs = neighbor_index(g)
    assert nbrs[0].tolist() == [1]
    assert nbrs[1].tolist() == [0]


def test_neighbor_index_no_edges():
    g = PoseGraph.create(np.zeros((3, 2)))
    assert all(len(v) == 0 for v in neighbor_index(g))


def test_neighbor_index_path():
    g = PoseGraph.create(np.zeros((3, 2)), edges=[[0, 1], [1, 2]])
    assert neighbor_index(g)[1].tolist() == [0, 2]


def test_neighbor_index_endpoint_order_invariant():
    g1 = PoseGraph.create(np.zeros((3, 2)), edges=[[0, 1], [1, 2]])
    g2 = PoseGraph.create(np.zeros((3, 2)), edges=[[1, 0], [2, 1]])
    for a, b in zip(neighbor_index(g1), neighbor_index(g2)):
        assert a.tolist() == b.tolist()


def test_canonical_edges_sorts_and_orients():
    out = canonical_edges(np.array([[3, 1], [0, 2], [2, 0]]))
    assert out.tolist() == [[0, 2], [0, 2], [1, 3]]


def test_directed_pairs_symmetric():
    g = PoseGraph.create(np.zeros((3, 2)), edges=[[0, 1], [1, 2]])
    src, dst = directed_pairs(g)
    pairs = set(zip(src.tolist(), dst.tolist()))
    assert pairs == {(0, 1), (1, 0), (1, 2), (2, 1)}


def test_round_trip_bit_exact():
    rng = np.random.default_rng(11)
    for trial in range(25):
        n = int(rng.integers(1, 8))
        g = PoseGraph.create(
            rng.random((n, 2)),
            attrs=rng.integers(-1, 5, size=(n, 2)),
            noise=rng.normal(size=(n, 1)),
            edges=[[i, i + 1] for i in range(n - 1)],
            object_id=rng.integers(0, 3, size=n),
        )
        buf = io.StringIO()
        write_graphs([g], buf)
        buf.seek(0)
        (back,) = read_graphs(buf)
        assert np.array_equal(back.positions, g.positions)  # bit-exact floats
        assert np.array_equal(back.attrs, g.attrs)
        assert np.array_equal(back.noise, g.noise)
        assert np.array_equal(back.edges, g.edges)
        assert np.array_equal(back.object_id, g.object_id)


def test_missing_serialized_as_null():
    g = PoseGraph.create([[0.5, 0.5]], attrs=[[MISSING, 3]])
    rec = to_record(g)
    assert rec["nodes"][0]["attrs"] == [None, 3]


def test_parse_error_carries_line_number():
    buf = io.StringIO('{"nodes":[],"edges":[]}\nnot json\n')
    with pytest.raises(GraphFormatError) as exc:
        read_graphs(buf)
    assert exc.value.line == 2
