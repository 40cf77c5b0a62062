"""Attributed pose graphs: data model, validation, and line-delimited serialization.

A pose graph holds per-node 2D positions in normalized image space, optional
discrete semantic attributes (with a MISSING sentinel), optional per-node noise
channels, an undirected edge list, and a per-node object id. All operations are
pure: they return new graphs and never mutate their input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

# Sentinel id for a masked semantic attribute. Serialized as JSON null.
MISSING = -1


class GraphFormatError(ValueError):
    """A graph record could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class PoseGraph:
    """Attributed pose graph.

    positions: (n, 2) float64, node coordinates (x, y).
    attrs:     (n, k) int64, discrete attribute ids; MISSING marks masked slots.
    noise:     (n, z) float64, per-node noise channels (z may be 0).
    edges:     (m, 2) int64, undirected edges as index pairs.
    object_id: (n,) int64, which scene object each node belongs to.
    """

    positions: np.ndarray
    attrs: np.ndarray
    noise: np.ndarray
    edges: np.ndarray
    object_id: np.ndarray

    @classmethod
    def create(
        cls,
        positions,
        attrs=None,
        noise=None,
        edges=None,
        object_id=None,
    ) -> "PoseGraph":
        """Build a graph from array-likes, coercing shapes and dtypes."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        n = pos.shape[0]
        if attrs is None:
            att = np.zeros((n, 0), dtype=np.int64)
        else:
            att = np.asarray(attrs, dtype=np.int64)
            att = att.reshape(n, -1) if att.size else att.reshape(n, 0)
        if noise is None:
            noi = np.zeros((n, 0), dtype=np.float64)
        else:
            noi = np.asarray(noise, dtype=np.float64)
            noi = noi.reshape(n, -1) if noi.size else noi.reshape(n, 0)
        if edges is None:
            edg = np.zeros((0, 2), dtype=np.int64)
        else:
            edg = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if object_id is None:
            obj = np.zeros(n, dtype=np.int64)
        else:
            obj = np.asarray(object_id, dtype=np.int64).reshape(n)
        return cls(pos, att, noi, edg, obj)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def attr_arity(self) -> int:
        return self.attrs.shape[1]

    @property
    def noise_arity(self) -> int:
        return self.noise.shape[1]

    def copy(self) -> "PoseGraph":
        return PoseGraph(
            self.positions.copy(),
            self.attrs.copy(),
            self.noise.copy(),
            self.edges.copy(),
            self.object_id.copy(),
        )

    def with_positions(self, positions: np.ndarray) -> "PoseGraph":
        return PoseGraph(
            np.asarray(positions, dtype=np.float64).reshape(-1, 2),
            self.attrs.copy(),
            self.noise.copy(),
            self.edges.copy(),
            self.object_id.copy(),
        )

    def with_attrs(self, attrs: np.ndarray) -> "PoseGraph":
        att = np.asarray(attrs, dtype=np.int64).reshape(self.n_nodes, -1)
        return PoseGraph(
            self.positions.copy(), att, self.noise.copy(), self.edges.copy(), self.object_id.copy()
        )

    def with_noise(self, noise: np.ndarray) -> "PoseGraph":
        noi = np.asarray(noise, dtype=np.float64).reshape(self.n_nodes, -1)
        return PoseGraph(
            self.positions.copy(), self.attrs.copy(), noi, self.edges.copy(), self.object_id.copy()
        )


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Return edges with each pair ordered low-high and rows lexicographically sorted."""
    edg = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edg.shape[0] == 0:
        return edg
    lo = np.minimum(edg[:, 0], edg[:, 1])
    hi = np.maximum(edg[:, 0], edg[:, 1])
    order = np.lexsort((hi, lo))
    return np.stack([lo[order], hi[order]], axis=1)


def validate(g: PoseGraph) -> list[str]:
    """Check every invariant; return a list of violation messages (empty means ok)."""
    out: list[str] = []
    n = g.n_nodes
    if not np.all(np.isfinite(g.positions)):
        for i in np.nonzero(~np.isfinite(g.positions).all(axis=1))[0]:
            out.append(f"non-finite position at node {i}")
    if g.noise.size and not np.all(np.isfinite(g.noise)):
        out.append("non-finite noise values")
    if g.attrs.shape[0] != n:
        out.append("attribute rows do not match node count")
    if g.object_id.shape[0] != n:
        out.append("object_id length does not match node count")
    seen: set[tuple[int, int]] = set()
    for idx, (a, b) in enumerate(g.edges):
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n):
            out.append(f"edge {idx} references invalid node index ({a},{b})")
            continue
        if a == b:
            out.append(f"self-loop at {a}")
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            out.append(f"duplicate edge ({key[0]},{key[1]})")
        seen.add(key)
    return out


def normalize_positions(g: PoseGraph) -> PoseGraph:
    """Min-max rescale positions into [0,1]^2 with a single uniform scale.

    The shorter axis is centered; a fully degenerate graph (all nodes at one
    point) maps every node to (0.5, 0.5).
    """
    if g.n_nodes == 0:
        raise ValueError("empty graph")
    pos = g.positions
    if not np.all(np.isfinite(pos)):
        raise ValueError("non-finite positions")
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    span = hi - lo
    scale = float(span.max())
    if scale == 0.0:
        return g.with_positions(np.full_like(pos, 0.5))
    scaled = (pos - lo) / scale
    # center each axis inside the unit square
    offset = (1.0 - span / scale) / 2.0
    return g.with_positions(scaled + offset)


def neighbor_index(g: PoseGraph) -> list[np.ndarray]:
    """Per-node sorted arrays of adjacent node indices (symmetric)."""
    nbrs: list[list[int]] = [[] for _ in range(g.n_nodes)]
    for a, b in g.edges:
        nbrs[int(a)].append(int(b))
        nbrs[int(b)].append(int(a))
    return [np.array(sorted(v), dtype=np.int64) for v in nbrs]


def directed_pairs(g: PoseGraph) -> tuple[np.ndarray, np.ndarray]:
    """Both directions of every edge as (src, dst) arrays, sorted by (dst, src).

    The fixed ordering makes message aggregation reproducible bit for bit.
    """
    if g.n_edges == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    a = g.edges[:, 0]
    b = g.edges[:, 1]
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def degrees(g: PoseGraph) -> np.ndarray:
    """Node degrees as float64 (undirected)."""
    deg = np.zeros(g.n_nodes, dtype=np.float64)
    for a, b in g.edges:
        deg[int(a)] += 1.0
        deg[int(b)] += 1.0
    return deg


def to_record(g: PoseGraph) -> dict:
    """Graph as a serializable record. Field names are part of the format contract."""
    nodes = []
    for i in range(g.n_nodes):
        node = {
            "pos": [float(g.positions[i, 0]), float(g.positions[i, 1])],
            "attrs": [None if int(a) == MISSING else int(a) for a in g.attrs[i]],
            "obj": int(g.object_id[i]),
        }
        if g.noise_arity:
            node["noise"] = [float(z) for z in g.noise[i]]
        nodes.append(node)
    return {"nodes": nodes, "edges": [[int(a), int(b)] for a, b in g.edges]}


def from_record(rec: dict) -> PoseGraph:
    nodes = rec["nodes"]
    pos = [nd["pos"] for nd in nodes]
    attrs = [[MISSING if a is None else int(a) for a in nd["attrs"]] for nd in nodes]
    arity = {len(a) for a in attrs}
    if len(arity) > 1:
        raise GraphFormatError("inconsistent attribute arity across nodes")
    obj = [nd.get("obj", 0) for nd in nodes]
    noise = [nd["noise"] for nd in nodes] if nodes and "noise" in nodes[0] else None
    return PoseGraph.create(pos, attrs=attrs, noise=noise, edges=rec.get("edges"), object_id=obj)


def write_graphs(graphs: Iterable[PoseGraph], fp: IO[str]) -> int:
    """Write graphs one record per line; returns the record count."""
    count = 0
    for g in graphs:
        fp.write(json.dumps(to_record(g), separators=(",", ":")) + "\n")
        count += 1
    return count


def save_graphs(graphs: Iterable[PoseGraph], path) -> int:
    with open(path, "w", encoding="utf-8") as fp:
        return write_graphs(graphs, fp)


def read_graphs(fp: IO[str]) -> list[PoseGraph]:
    """Parse a line-delimited graph file; errors carry the failing line number."""
    graphs = []
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            graphs.append(from_record(rec))
        except GraphFormatError as exc:
            raise GraphFormatError(str(exc), line=lineno) from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise GraphFormatError(f"bad graph record: {exc}", line=lineno) from exc
    return graphs


def load_graphs(path) -> list[PoseGraph]:
    with open(path, "r", encoding="utf-8") as fp:
        return read_graphs(fp)
