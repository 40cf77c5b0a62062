"""Learnable graph-to-mask operators and model assemblies.

Two message-passing layers are provided: PoseConv mixes node features with
absolute positions on the skip path and relative offsets on the message path;
PoseConv2d exchanges whole 2D feature maps between neighbors with upsampling
and a self-gated aggregate. The mask generator maps positions (plus noise) to
per-node masks through a PoseConv stack and a ladder of PoseConv2d /
ConvBlock2d stages; the encoder maps attributes (plus positions) to per-node
channel weights; their tensor product averaged over nodes is the layout mask.

Per-edge message blocks are evaluated in a factored form: convolutions are
linear in input channels, so the convolution of a concatenated (source ‖
destination) map splits into two per-node convolutions gathered per edge, with
batch-norm statistics weighted by node degree to match the edge-gathered
batch exactly. The loop oracles in the test suite check this equivalence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import BatchNorm, Conv2d, Embedding, Linear, Module, Tensor
from .graph import PoseGraph, degrees, directed_pairs
from .surrogate import RasterSpec, render_fixed_node_masks


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-node graph ids and directed edges."""

    positions: np.ndarray  # (N, 2)
    attrs: np.ndarray  # (N, k)
    noise: np.ndarray  # (N, z)
    src: np.ndarray  # (E,) directed
    dst: np.ndarray  # (E,)
    deg: np.ndarray  # (N,)
    graph_ids: np.ndarray  # (N,) non-decreasing
    n_graphs: int

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_graphs(cls, graphs: list[PoseGraph]) -> "GraphBatch":
        pos, att, noi, srcs, dsts, degs, gids = [], [], [], [], [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            pos.append(g.positions)
            att.append(g.attrs)
            noi.append(g.noise)
            s, d = directed_pairs(g)
            srcs.append(s + offset)
            dsts.append(d + offset)
            degs.append(degrees(g))
            gids.append(np.full(g.n_nodes, gi, dtype=np.int64))
            offset += g.n_nodes
        return cls(
            positions=np.concatenate(pos, axis=0),
            attrs=np.concatenate(att, axis=0),
            noise=np.concatenate(noi, axis=0),
            src=np.concatenate(srcs),
            dst=np.concatenate(dsts),
            deg=np.concatenate(degs),
            graph_ids=np.concatenate(gids),
            n_graphs=len(graphs),
        )


def batch_of(g: PoseGraph) -> GraphBatch:
    return GraphBatch.from_graphs([g])


# ---------------------------------------------------------------------------
# message-passing layers
# ---------------------------------------------------------------------------


class PoseConv(Module):
    """Node-feature message passing with a position-aware parametrized skip.

    out_i = out( skip(h_i ‖ p_i) + sum_{j in N(i)} msg(h_j ‖ (p_j - p_i)) ‖ h_i )
    """

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim = in_dim
        self.skip = Linear(in_dim + 2, hidden, rng)
        self.msg = Linear(in_dim + 2, hidden, rng)
        self.out = Linear(hidden + in_dim, out_dim, rng)

    def __call__(self, h: Tensor, batch: GraphBatch) -> Tensor:
        if h.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} input features, got {h.shape[1]}")
        pos = E.constant(batch.positions)
        s = self.skip(E.concat([h, pos], axis=1))
        if batch.src.size:
            h_src = E.gather_rows(h, batch.src)
            offsets = E.sub(E.gather_rows(pos, batch.src), E.gather_rows(pos, batch.dst))
            messages = self.msg(E.concat([h_src, offsets], axis=1))
            s = E.add(s, E.segment_sum(messages, batch.dst, batch.n_nodes))
        return self.out(E.concat([s, h], axis=1))


class FnnPoseConv(Module):
    """Per-node variant with no neighbor access: skip(h) + mix(h ‖ p)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim = in_dim
        self.skip = Linear(in_dim, out_dim, rng)
        self.mix = Linear(in_dim + 2, out_dim, rng)

    def __call__(self, h: Tensor, batch: GraphBatch) -> Tensor:
        if h.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} input features, got {h.shape[1]}")
        pos = E.constant(batch.positions)
        return E.add(self.skip(h), self.mix(E.concat([h, pos], axis=1)))


class ConvBlock2d(Module):
    """Residual conv block: conv(up(relu(bn(x)))) + conv(up(x))."""

    def __init__(self, in_ch: int, out_ch: int, up: int, rng: np.random.Generator):
        super().__init__()
        self.up = up
        self.norm = BatchNorm(in_ch)
        self.conv_body = Conv2d(in_ch, out_ch, 3, rng)
        self.conv_skip = Conv2d(in_ch, out_ch, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        body = self.conv_body(E.upsample_bilinear(self.norm(x, fuse_relu=True), self.up))
        skip = self.conv_skip(E.upsample_bilinear(x, self.up))
        return E.add(body, skip)


class PairMessageBlock(Module):
    """Per-edge ConvBlock2d over (source ‖ destination) maps, then self-gating.

    Factored: each conv of the concatenated block splits into a source half
    and a destination half applied per node and gathered per edge. Batch-norm
    statistics are degree-weighted so they equal the statistics of the
    explicitly gathered edge batch.
    """

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, up: int = 2):
        super().__init__()
        self.up = up
        self.norm_src = BatchNorm(in_ch)
        self.norm_dst = BatchNorm(in_ch)
        self.body_src = Conv2d(in_ch, out_ch, 3, rng)
        self.body_dst = Conv2d(in_ch, out_ch, 3, rng)
        self.skip_src = Conv2d(in_ch, out_ch, 3, rng)
        self.skip_dst = Conv2d(in_ch, out_ch, 3, rng)

    def __call__(self, maps: Tensor, batch: GraphBatch, up_raw: Tensor | None = None) -> Tensor:
        deg = batch.deg
        if up_raw is None:
            up_raw = E.upsample_bilinear(maps, self.up)
        a = E.add(
            self.body_src(
                E.upsample_bilinear(self.norm_src(maps, weights=deg, fuse_relu=True), self.up)
            ),
            self.skip_src(up_raw),
        )
        b = E.add(
            self.body_dst(
                E.upsample_bilinear(self.norm_dst(maps, weights=deg, fuse_relu=True), self.up)
            ),
            self.skip_dst(up_raw),
        )
        pre = E.add(E.gather_rows(a, batch.src), E.gather_rows(b, batch.dst))
        return E.selfgate(pre)


class PoseConv2d(Module):
    """Feature-map message passing with x2 upsampling and gated aggregation.

    out_i = skip(H_i) + sigmoid(O_i) * gate(O_i),  O_i = sum_j pair(H_i, H_j)
    """

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.pair = PairMessageBlock(in_ch, out_ch, rng, up=2)
        self.skip_conv = Conv2d(in_ch, out_ch, 1, rng, padding=0)
        self.gate_conv = Conv2d(out_ch, out_ch, 1, rng, padding=0)

    def __call__(self, maps: Tensor, batch: GraphBatch) -> Tensor:
        n, h, w, c = maps.shape
        if c != self.in_ch:
            raise ValueError(f"expected {self.in_ch} channels, got {c}")
        up_raw = E.upsample_bilinear(maps, 2)  # shared by the skip and message paths
        s = self.skip_conv(up_raw)
        if batch.src.size:
            agg = E.segment_sum(self.pair(maps, batch, up_raw), batch.dst, n)
        else:
            agg = E.constant(np.zeros((n, 2 * h, 2 * w, self.out_ch)))
        return E.add(s, E.mul(E.sigmoid(agg), self.gate_conv(agg)))


class MultiEmbedding(Module):
    """One embedding table per attribute slot, concatenated; missing ids map
    to each table's reserved row."""

    def __init__(self, vocab_sizes: list[int], dim: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.vocab_sizes = list(vocab_sizes)
        for i, v in enumerate(self.vocab_sizes):
            setattr(self, f"table{i}", Embedding(v, dim, rng))

    @property
    def out_dim(self) -> int:
        return self.dim * len(self.vocab_sizes)

    def __call__(self, attrs: np.ndarray) -> Tensor:
        if attrs.shape[1] != len(self.vocab_sizes):
            raise ValueError(
                f"expected {len(self.vocab_sizes)} attribute slots, got {attrs.shape[1]}"
            )
        if not self.vocab_sizes:
            return E.constant(np.zeros((attrs.shape[0], 0)))
        parts = [getattr(self, f"table{i}")(attrs[:, i]) for i in range(len(self.vocab_sizes))]
        return E.concat(parts, axis=1) if len(parts) > 1 else parts[0]


# ---------------------------------------------------------------------------
# model configs and assemblies
# ---------------------------------------------------------------------------


def _pose_block(layer: PoseConv, norm: BatchNorm, h: Tensor, batch: GraphBatch) -> Tensor:
    # block wrapper: normalization applied to the rectified layer output
    return norm(E.relu(layer(h, batch)))


@dataclass
class EncoderConfig:
    vocab_sizes: list[int] = field(default_factory=lambda: [4])
    embed_dim: int = 8
    noise_dim: int = 0
    widths: tuple = ((8, 8), (16, 16), (32, 32))  # (hidden, out) per stage

    @property
    def out_dim(self) -> int:
        return self.widths[-1][1]


class Encoder(Module):
    """Attributes + positions (+ noise) to per-node channel weights in [0,1]."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embed = MultiEmbedding(cfg.vocab_sizes, cfg.embed_dim, rng)
        in_dim = self.embed.out_dim + cfg.noise_dim
        dims = []
        for hidden, out in cfg.widths:
            dims.append((in_dim, hidden, out))
            in_dim = out
        for i, (i_dim, hidden, out) in enumerate(dims):
            setattr(self, f"conv{i}", PoseConv(i_dim, hidden, out, rng))
            setattr(self, f"norm{i}", BatchNorm(out))
        self.n_stages = len(dims)

    def __call__(self, batch: GraphBatch) -> Tensor:
        x = self.embed(batch.attrs)
        if self.cfg.noise_dim:
            if batch.noise.shape[1] < self.cfg.noise_dim:
                raise ValueError("graph noise arity below encoder noise_dim")
            x = E.concat([x, E.constant(batch.noise[:, : self.cfg.noise_dim])], axis=1)
        for i in range(self.n_stages):
            x = _pose_block(getattr(self, f"conv{i}"), getattr(self, f"norm{i}"), x, batch)
        return E.sigmoid(x)


class FnnEncoder(Module):
    """Structure-blind encoder: same widths as Encoder, no neighbor access."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embed = MultiEmbedding(cfg.vocab_sizes, cfg.embed_dim, rng)
        in_dim = self.embed.out_dim + cfg.noise_dim
        for i, (_, out) in enumerate(cfg.widths):
            setattr(self, f"fnn{i}", FnnPoseConv(in_dim, out, rng))
            setattr(self, f"norm{i}", BatchNorm(out))
            in_dim = out
        self.n_stages = len(cfg.widths)

    def __call__(self, batch: GraphBatch) -> Tensor:
        x = self.embed(batch.attrs)
        if self.cfg.noise_dim:
            if batch.noise.shape[1] < self.cfg.noise_dim:
                raise ValueError("graph noise arity below encoder noise_dim")
            x = E.concat([x, E.constant(batch.noise[:, : self.cfg.noise_dim])], axis=1)
        for i in range(self.n_stages):
            x = getattr(self, f"norm{i}")(E.relu(getattr(self, f"fnn{i}")(x, batch)))
        return E.sigmoid(x)


def ladder_for(target_size: int) -> list[tuple[str, int, int]]:
    """Default upsampling ladder from a 4x4 seed map to target_size.

    The 32x32 plan keeps message passing at the coarse scales and finishes
    with a shared per-node conv stage, which fits desk-scale CPU budgets; the
    64/128 plans interleave one shared conv stage mid-ladder.
    """
    stages = int(round(math.log2(target_size / 4)))
    if 2**stages * 4 != target_size or stages < 1:
        raise ValueError("target size must be 4 * 2^k with k >= 1")
    plans = {
        1: [("pose2d", 8, 8)],
        2: [("pose2d", 8, 16), ("pose2d", 16, 8)],
        3: [("pose2d", 8, 12), ("pose2d", 12, 6), ("conv", 6, 4)],
        4: [("pose2d", 8, 16), ("conv", 16, 32), ("pose2d", 32, 16), ("pose2d", 16, 8)],
        5: [
            ("pose2d", 8, 16),
            ("conv", 16, 32),
            ("pose2d", 32, 16),
            ("pose2d", 16, 16),
            ("pose2d", 16, 8),
        ],
    }
    if stages not in plans:
        raise ValueError(f"no default ladder for {target_size}; pass one explicitly")
    return plans[stages]


@dataclass
class MaskGeneratorConfig:
    target_size: int = 32
    noise_dim: int = 1
    node_widths: tuple = ((8, 8), (32, 32), (128, 128))  # (hidden, out) per stage
    seed_channels: int = 8
    seed_size: int = 4
    ladder: list | None = None  # [(kind, in_ch, out_ch)], kind in {pose2d, conv}

    def resolved_ladder(self) -> list[tuple[str, int, int]]:
        return list(self.ladder) if self.ladder is not None else ladder_for(self.target_size)


class MaskGenerator(Module):
    """Positions (+ noise) to one localized mask per node, never attributes."""

    def __init__(self, cfg: MaskGeneratorConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        node_out = cfg.node_widths[-1][1]
        if node_out != cfg.seed_channels * cfg.seed_size**2:
            raise ValueError("node feature width must equal seed_channels * seed_size^2")
        in_dim = 2 + cfg.noise_dim
        for i, (hidden, out) in enumerate(cfg.node_widths):
            setattr(self, f"conv{i}", PoseConv(in_dim, hidden, out, rng))
            setattr(self, f"norm{i}", BatchNorm(out))
            in_dim = out
        self.n_node_stages = len(cfg.node_widths)
        self.ladder_plan = cfg.resolved_ladder()
        if self.ladder_plan[0][1] != cfg.seed_channels:
            raise ValueError("first ladder stage must consume the seed channels")
        size = cfg.seed_size
        for i, (kind, c_in, c_out) in enumerate(self.ladder_plan):
            if kind == "pose2d":
                setattr(self, f"stage{i}", PoseConv2d(c_in, c_out, rng))
            elif kind == "conv":
                setattr(self, f"stage{i}", ConvBlock2d(c_in, c_out, 2, rng))
            else:
                raise ValueError(f"unknown ladder stage kind {kind!r}")
            size *= 2
        if size != cfg.target_size:
            raise ValueError("ladder stages do not reach the target size")
        head_ch = self.ladder_plan[-1][2]
        self.head_norm = BatchNorm(head_ch)
        self.head_conv = Conv2d(head_ch, 1, 1, rng, padding=0)

    def __call__(self, batch: GraphBatch) -> Tensor:
        pos = batch.positions
        if pos.size and (pos.min() < -1e-9 or pos.max() > 1.0 + 1e-9):
            raise ValueError("unnormalized positions")
        if batch.noise.shape[1] != self.cfg.noise_dim:
            raise ValueError(
                f"expected noise arity {self.cfg.noise_dim}, got {batch.noise.shape[1]}"
            )
        feats = [E.constant(pos)]
        if self.cfg.noise_dim:
            feats.append(E.constant(batch.noise))
        x = E.concat(feats, axis=1) if len(feats) > 1 else feats[0]
        for i in range(self.n_node_stages):
            x = _pose_block(getattr(self, f"conv{i}"), getattr(self, f"norm{i}"), x, batch)
        # node vector interpreted as a (size, size, channels) seed map
        maps = E.reshape(
            x, (batch.n_nodes, self.cfg.seed_size, self.cfg.seed_size, self.cfg.seed_channels)
        )
        for i, (kind, _, _) in enumerate(self.ladder_plan):
            stage = getattr(self, f"stage{i}")
            maps = stage(maps, batch) if kind == "pose2d" else stage(maps)
        out = E.sigmoid(self.head_conv(E.relu(self.head_norm(maps))))
        t = self.cfg.target_size
        return E.reshape(out, (batch.n_nodes, t, t))


class DownstreamGenerator(Module):
    """Layout mask to RGB in [-1, 1]; all stages keep the spatial size."""

    def __init__(self, rng: np.random.Generator, in_ch: int = 32):
        super().__init__()
        widths = [(in_ch, 32), (32, 32), (32, 16), (16, 16), (16, 8)]
        for i, (a, b) in enumerate(widths):
            setattr(self, f"block{i}", ConvBlock2d(a, b, 1, rng))
        self.n_blocks = len(widths)
        self.head_norm = BatchNorm(8)
        self.head_conv = Conv2d(8, 3, 3, rng)

    def __call__(self, layout: Tensor) -> Tensor:
        # layouts are (C, H, W) or (B, C, H, W); conv stages run channels-last
        x = layout if layout.ndim == 4 else E.reshape(layout, (1,) + layout.shape)
        if x.shape[1] != getattr(self, "block0").norm.channels:
            raise ValueError("layout channel count does not match the generator")
        x = E.permute(x, (0, 2, 3, 1))
        for i in range(self.n_blocks):
            x = getattr(self, f"block{i}")(x)
        out = E.tanh(self.head_conv(E.relu(self.head_norm(x))))
        out = E.permute(out, (0, 3, 1, 2))
        return out if layout.ndim == 4 else E.reshape(out, out.shape[1:])


# ---------------------------------------------------------------------------
# layout assembly and conditioner variants
# ---------------------------------------------------------------------------


def assemble_layout(features: Tensor, masks: Tensor) -> Tensor:
    """Mean over nodes of feature ⊗ mask: (N,C) x (N,H,W) -> (C,H,W)."""
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty graph")
    if masks.shape[0] != n:
        raise ValueError("feature/mask node counts differ")
    c = features.shape[1]
    h, w = masks.shape[1], masks.shape[2]
    flat = E.reshape(masks, (n, h * w))
    return E.reshape(E.scale(E.matmul(E.transpose2d(features), flat), 1.0 / n), (c, h, w))


@dataclass
class ConditionerModels:
    encoder: Encoder | None = None
    mask_generator: MaskGenerator | None = None
    fnn_encoder: FnnEncoder | None = None


def conditioner_forward(
    variant: str,
    g: PoseGraph,
    models: ConditionerModels,
    spec: RasterSpec,
) -> Tensor:
    """Layout mask for one graph under a named conditioning variant.

    graphose: learned features x learned masks; gnn-baseline: learned features
    x fixed analytic masks; fnn-baseline: structure-blind features x fixed
    analytic masks.
    """
    batch = batch_of(g)
    if variant == "graphose":
        feats = models.encoder(batch)
        masks = models.mask_generator(batch)
    elif variant == "gnn-baseline":
        feats = models.encoder(batch)
        masks = E.constant(render_fixed_node_masks(g, spec))
    elif variant == "fnn-baseline":
        feats = models.fnn_encoder(batch)
        masks = E.constant(render_fixed_node_masks(g, spec))
    else:
        raise ValueError(f"unknown conditioner variant {variant!r}")
    if variant == "graphose" and models.mask_generator.cfg.target_size != spec.height:
        raise ValueError("mask generator target size does not match the raster spec")
    return assemble_layout(feats, masks)


# convenience single-graph wrappers -----------------------------------------


def mask_generator_forward(model: MaskGenerator, g: PoseGraph) -> Tensor:
    """Per-node masks for one graph; consumes positions and noise only."""
    return model(batch_of(g))


def encoder_forward(model: Encoder, g: PoseGraph) -> Tensor:
    return model(batch_of(g))
