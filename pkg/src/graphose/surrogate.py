"""Analytic rasterization of surrogate masks from pose graphs.

A graph's mask is the clipped pixel-wise sum of an isotropic Gaussian per node
and an anisotropic Gaussian per edge, the latter centered on the edge midpoint
and stretched along the edge direction. Fixed per-node masks (node Gaussian
plus the Gaussians of incident edges) provide the non-learnable baseline.

Contributions are accumulated sequentially in a canonical geometric order, so
the floating-point result is invariant under any permutation of the input node
or edge lists, and adding a node or edge can never decrease a pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import PoseGraph, neighbor_index


@dataclass(frozen=True)
class RasterSpec:
    height: int = 64
    width: int = 64
    sigma: float = 0.02
    aspect: float = 10.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("raster must be at least 1x1")
        if self.sigma <= 0 or self.aspect <= 0:
            raise ValueError("sigma and aspect must be positive")

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Grids (X, Y) of pixel-center coordinates in normalized units."""
        xs = (np.arange(self.width, dtype=np.float64) + 0.5) / self.width
        ys = (np.arange(self.height, dtype=np.float64) + 0.5) / self.height
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class EdgeTransform:
    """Symmetric 2x2 scaling/rotation matrix [[t_a, t_c], [t_c, t_b]]."""

    t_a: float
    t_b: float
    t_c: float

    @property
    def det(self) -> float:
        return self.t_a * self.t_b - self.t_c * self.t_c


def node_mask_value(p: np.ndarray, c: np.ndarray, sigma: float):
    """Isotropic Gaussian centered at p, evaluated at c (scalar or grid)."""
    p = np.asarray(p, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d2 = ((p - c) ** 2).sum(axis=-1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def edge_transform(p_i, p_j, aspect: float) -> EdgeTransform:
    """Transform for the edge Gaussian; undefined for coincident endpoints."""
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    delta = p_j - p_i
    if float((delta * delta).sum()) == 0.0:
        raise ValueError("degenerate edge")
    d = float((delta * delta).sum()) / 4.0
    alpha = math.atan2(delta[1], delta[0])
    ca, sa = math.cos(alpha), math.sin(alpha)
    a2 = aspect * aspect
    t_a = d * ca * ca + (d / a2) * sa * sa
    t_b = d * sa * sa + (d / a2) * ca * ca
    t_c = (d - d / a2) * sa * ca
    return EdgeTransform(t_a, t_b, t_c)


def _edge_field(p_i, p_j, cx, cy, aspect: float):
    """Edge Gaussian evaluated on pixel-center grids (cx, cy)."""
    t = edge_transform(p_i, p_j, aspect)
    det = max(t.det, 1e-300)  # underflow guard for near-degenerate edges
    mx = (p_i[0] + p_j[0]) / 2.0
    my = (p_i[1] + p_j[1]) / 2.0
    vx = cx - mx
    vy = cy - my
    # closed-form inverse of the symmetric 2x2 transform
    q = (t.t_b * vx * vx - 2.0 * t.t_c * vx * vy + t.t_a * vy * vy) / det
    return np.exp(-q / 2.0) / (2.0 * math.pi * math.sqrt(det))


def edge_mask_value(p_i, p_j, c, aspect: float):
    """Edge Gaussian at point(s) c; sqrt-scaled density with midpoint centering."""
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return _edge_field(p_i, p_j, c[..., 0], c[..., 1], aspect)


def _canonical_node_order(positions: np.ndarray) -> np.ndarray:
    return np.lexsort((positions[:, 1], positions[:, 0]))


def _canonical_edge_order(positions: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if edges.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    pa = positions[edges[:, 0]]
    pb = positions[edges[:, 1]]
    swap = (pa[:, 0] > pb[:, 0]) | ((pa[:, 0] == pb[:, 0]) & (pa[:, 1] > pb[:, 1]))
    lo = np.where(swap[:, None], pb, pa)
    hi = np.where(swap[:, None], pa, pb)
    return np.lexsort((hi[:, 1], hi[:, 0], lo[:, 1], lo[:, 0]))


def render_surrogate(g: PoseGraph, spec: RasterSpec) -> np.ndarray:
    """Aggregate surrogate mask: clipped sum of all node and edge Gaussians."""
    cx, cy = spec.pixel_centers()
    acc = np.zeros((spec.height, spec.width), dtype=np.float64)
    pos = g.positions
    for i in _canonical_node_order(pos):
        acc += node_mask_value(pos[i], np.stack([cx, cy], axis=-1), spec.sigma)
    for k in _canonical_edge_order(pos, g.edges):
        a, b = g.edges[k]
        if np.all(pos[a] == pos[b]):
            continue  # zero-length edges contribute nothing
        acc += _edge_field(pos[a], pos[b], cx, cy, spec.aspect)
    return np.clip(acc, 0.0, 1.0)


def render_fixed_node_masks(g: PoseGraph, spec: RasterSpec) -> np.ndarray:
    """Non-learnable per-node masks: own Gaussian plus incident edge Gaussians.

    Returns an (n, H, W) stack ordered by node index, each channel clipped.
    """
    cx, cy = spec.pixel_centers()
    grid = np.stack([cx, cy], axis=-1)
    pos = g.positions
    nbrs = neighbor_index(g)
    out = np.zeros((g.n_nodes, spec.height, spec.width), dtype=np.float64)
    for i in range(g.n_nodes):
        acc = node_mask_value(pos[i], grid, spec.sigma)
        others = nbrs[i]
        if others.size:
            order = _canonical_node_order(pos[others])
            for j in others[order]:
                if np.all(pos[i] == pos[j]):
                    continue
                acc = acc + _edge_field(pos[i], pos[j], cx, cy, spec.aspect)
        out[i] = np.clip(acc, 0.0, 1.0)
    return out


def mask_to_u8(mask: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] mask to 8-bit gray (value = round(255 * v))."""
    return np.round(255.0 * np.clip(mask, 0.0, 1.0)).astype(np.uint8)


def save_mask_png(mask: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(mask_to_u8(mask), mode="L").save(path)
