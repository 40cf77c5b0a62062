"""Procedural generation of pretraining pose graphs.

Two topology families (preferential attachment and independent-pair sampling)
plus a stress-minimizing force-directed layout. Everything is a pure function
of the generator passed in, so identical seeds give bit-identical graphs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graph import PoseGraph, canonical_edges, normalize_positions


@dataclass
class SynthConfig:
    n_min: int = 5
    n_max: int = 30
    ba_fraction: float = 0.5
    seed: int = 0
    layout_iters: int = 100
    layout_tol: float = 2e-3

    def __post_init__(self):
        if not (1 <= self.n_min <= self.n_max):
            raise ValueError("require 1 <= n_min <= n_max")
        if not (0.0 <= self.ba_fraction <= 1.0):
            raise ValueError("ba_fraction must be in [0,1]")


def gen_barabasi_albert(n: int, rng: np.random.Generator) -> np.ndarray:
    """Preferential-attachment edge set on n nodes.

    The attachment count m is drawn once per graph: below 10 nodes it is 1 with
    probability 0.9 and 2 otherwise; from 10 nodes up it is always 1. The seed
    graph is m isolated nodes; each later node attaches to m distinct existing
    nodes with probability proportional to degree + 1 (so degree-0 seeds stay
    reachable).
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if n < 10:
        m = 1 if rng.random() < 0.9 else 2
    else:
        m = 1
    m = min(m, n - 1)
    degree = np.zeros(n, dtype=np.float64)
    edges = []
    for v in range(m, n):
        weights = degree[:v] + 1.0
        targets = rng.choice(v, size=min(m, v), replace=False, p=weights / weights.sum())
        for t in np.sort(targets):
            edges.append((int(t), v))
            degree[int(t)] += 1.0
            degree[v] += 1.0
    return canonical_edges(np.array(edges, dtype=np.int64).reshape(-1, 2))


def er_edge_probability(n: int) -> float:
    """Edge probability exp(1/n) - 0.95, clamped to [0,1]."""
    return min(1.0, max(0.0, math.exp(1.0 / n) - 0.95))


def gen_erdos_renyi(n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent-pair edge set; isolated nodes are kept."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    p = er_edge_probability(n)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return canonical_edges(np.stack([iu[keep], ju[keep]], axis=1))


def shortest_path_lengths(n: int, edges: np.ndarray) -> np.ndarray:
    """All-pairs unweighted shortest paths; disconnected pairs get max finite + 1."""
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[int(a)].append(int(b))
        nbrs[int(b)].append(int(a))
    rows = []
    dmax = 0
    for s in range(n):
        row = [-1] * n
        row[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            du = row[u]
            for v in nbrs[u]:
                if row[v] < 0:
                    row[v] = du + 1
                    if du + 1 > dmax:
                        dmax = du + 1
                    q.append(v)
        rows.append(row)
    dist = np.array(rows, dtype=np.float64)
    dist[dist < 0] = dmax + 1.0
    return dist


def _stress(pos: np.ndarray, dists: np.ndarray, weights: np.ndarray) -> float:
    # weights carry a zero diagonal, so the full-matrix sum double-counts
    # every pair exactly once after halving
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    r = d - dists
    return 0.5 * float((weights * r * r).sum())


def _stress_grad(pos: np.ndarray, dists: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(d, 1.0)  # avoid 0/0; the diagonal weight is zero anyway
    coef = 2.0 * weights * (d - dists) / d
    return (coef[:, :, None] * diff).sum(axis=1)


def layout_kamada_kawai(
    edges: np.ndarray,
    n: int,
    rng: np.random.Generator,
    iters: int = 150,
    tol: float = 1e-3,
) -> np.ndarray:
    """Stress-minimizing 2D layout, normalized into [0,1]^2.

    Minimizes sum over pairs of (1/d_ij^2) * (|p_i - p_j| - d_ij)^2 where d_ij
    is the shortest-path distance, by gradient descent with backtracking from a
    perturbed circle. Accepted steps never increase the stress.
    """
    if n < 1:
        raise ValueError("need at least 1 node")
    if n == 1:
        return np.array([[0.5, 0.5]])
    dists = shortest_path_lengths(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    weights = 1.0 / np.maximum(dists, 1e-12) ** 2
    np.fill_diagonal(weights, 0.0)

    radius = dists.max() / 2.0
    ang = 2.0 * np.pi * np.arange(n) / n
    pos = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pos = pos + rng.normal(0.0, 0.01 * radius, size=(n, 2))

    cur = _stress(pos, dists, weights)
    step = 0.1
    for _ in range(iters):
        grad = _stress_grad(pos, dists, weights)
        gnorm = float(np.sqrt((grad * grad).sum()))
        if gnorm < tol:
            break
        t = step
        accepted = False
        for retry in range(30):
            cand = pos - t * grad
            val = _stress(cand, dists, weights)
            if val < cur:
                pos, cur = cand, val
                # grow cautiously only when the first try succeeded, so most
                # iterations cost a single stress evaluation
                step = min(t * 1.3, 1.0) if retry == 0 else t
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    g = PoseGraph.create(pos, edges=np.zeros((0, 2), dtype=np.int64))
    return normalize_positions(g).positions


def sample_pretrain_graph(cfg: SynthConfig, rng: np.random.Generator) -> PoseGraph:
    """Draw one random pretraining graph (no attributes, no noise)."""
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    if n < 2:
        edges = np.zeros((0, 2), dtype=np.int64)
    elif rng.random() < cfg.ba_fraction:
        edges = gen_barabasi_albert(n, rng)
    else:
        edges = gen_erdos_renyi(n, rng)
    pos = layout_kamada_kawai(edges, n, rng, iters=cfg.layout_iters, tol=cfg.layout_tol)
    return PoseGraph.create(pos, edges=edges)
