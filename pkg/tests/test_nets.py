import numpy as np
import pytest

import graphose.engine as E
from graphose.engine import Tensor, grad_check
from graphose.graph import MISSING, PoseGraph, neighbor_index
from graphose.nets import (
    ConditionerModels,
    ConvBlock2d,
    Encoder,
    EncoderConfig,
    FnnEncoder,
    FnnPoseConv,
    GraphBatch,
    MaskGenerator,
    MaskGeneratorConfig,
    DownstreamGenerator,
    PoseConv,
    PoseConv2d,
    assemble_layout,
    batch_of,
    conditioner_forward,
    encoder_forward,
    ladder_for,
    mask_generator_forward,
)
from graphose.rng import STREAM_INIT, substream
from graphose.surrogate import RasterSpec, render_fixed_node_masks
from graphose.synth import SynthConfig, sample_pretrain_graph

from oracles import (
    assemble_layout_oracle,
    fnn_pose_conv_oracle,
    pose_conv2d_oracle,
    pose_conv_oracle,
)


def random_graph(seed, n_min=3, n_max=6, attrs=None, noise_dim=0):
    g = sample_pretrain_graph(SynthConfig(n_min=n_min, n_max=n_max), substream(seed, 21))
    rng = substream(seed, 22)
    if attrs is not None:
        g = g.with_attrs(rng.integers(0, attrs, size=(g.n_nodes, len(attrs) if isinstance(attrs, list) else 1)))
    if noise_dim:
        g = g.with_noise(rng.normal(size=(g.n_nodes, noise_dim)))
    return g


def permute_graph(g: PoseGraph, perm: np.ndarray) -> PoseGraph:
    inv = np.argsort(perm)
    edges = np.array([[inv[a], inv[b]] for a, b in g.edges]).reshape(-1, 2)
    return PoseGraph.create(
        g.positions[perm],
        attrs=g.attrs[perm],
        noise=g.noise[perm],
        edges=edges,
        object_id=g.object_id[perm],
    )


# ---------------------------------------------------------------------------
# PoseConv
# ---------------------------------------------------------------------------


def test_pose_conv_matches_loop_oracle():
    for seed in range(5):
        g = random_graph(seed)
        rng = substream(seed, STREAM_INIT)
        layer = PoseConv(3, 4, 5, rng)
        h = substream(seed, 23).normal(size=(g.n_nodes, 3))
        out = layer(Tensor(h), batch_of(g)).data
        want = pose_conv_oracle(layer, h, g.positions, neighbor_index(g))
        np.testing.assert_allclose(out, want, atol=1e-12)


def test_pose_conv_isolated_node_empty_sum():
    rng = substream(0, STREAM_INIT)
    layer = PoseConv(2, 3, 3, rng)
    g = PoseGraph.create([[0.3, 0.4]])
    h = np.array([[0.5, -0.2]])
    out = layer(Tensor(h), batch_of(g)).data
    want = pose_conv_oracle(layer, h, g.positions, [np.array([], dtype=int)])
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_pose_conv_zero_weights_zero_output():
    layer = PoseConv(2, 3, 3, substream(1, STREAM_INIT))
    for p in layer.parameters():
        p.data = np.zeros_like(p.data)
    g = random_graph(2)
    h = np.ones((g.n_nodes, 2))
    assert not layer(Tensor(h), batch_of(g)).data.any()


def test_pose_conv_arity_mismatch():
    layer = PoseConv(2, 3, 3, substream(1, STREAM_INIT))
    g = random_graph(3)
    with pytest.raises(ValueError, match="input features"):
        layer(Tensor(np.zeros((g.n_nodes, 5))), batch_of(g))


def test_pose_conv_translation_invariant_when_skip_positions_zeroed():
    # dyadic positions and shift keep offsets exactly representable
    layer = PoseConv(2, 4, 3, substream(4, STREAM_INIT))
    layer.skip.weight.data[2:, :] = 0.0  # rows acting on the position slots
    pos = np.array([[8.0, 4.0], [16.0, 12.0], [24.0, 4.0]]) / 64.0
    g1 = PoseGraph.create(pos, edges=[[0, 1], [1, 2]])
    g2 = PoseGraph.create(pos + np.array([16.0, 8.0]) / 64.0, edges=[[0, 1], [1, 2]])
    h = substream(5, 24).normal(size=(3, 2))
    out1 = layer(Tensor(h), batch_of(g1)).data
    out2 = layer(Tensor(h), batch_of(g2)).data
    assert np.array_equal(out1, out2)


def test_pose_conv_gradients():
    for seed in range(3):
        g = random_graph(seed, 3, 4)
        layer = PoseConv(2, 3, 2, substream(seed, STREAM_INIT))
        h = Tensor(substream(seed, 25).normal(size=(g.n_nodes, 2)), requires_grad=True)
        batch = batch_of(g)
        params = [layer.skip.weight, layer.msg.weight, layer.out.weight, layer.out.bias]
        err = grad_check(lambda *_: E.tsum(E.sigmoid(layer(h, batch))), [h] + params)
        assert err < 1e-6


# ---------------------------------------------------------------------------
# FnnPoseConv
# ---------------------------------------------------------------------------


def test_fnn_pose_conv_matches_hand_evaluation():
    layer = FnnPoseConv(2, 3, substream(6, STREAM_INIT))
    g = PoseGraph.create([[0.25, 0.75]])
    h = np.array([[0.3, -0.6]])
    out = layer(Tensor(h), batch_of(g)).data
    want = fnn_pose_conv_oracle(layer, h, g.positions)
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_fnn_pose_conv_ignores_edges():
    layer = FnnPoseConv(2, 3, substream(7, STREAM_INIT))
    g = random_graph(8)
    h = substream(8, 26).normal(size=(g.n_nodes, 2))
    stripped = PoseGraph.create(g.positions)
    out_full = layer(Tensor(h), batch_of(g)).data
    out_none = layer(Tensor(h), batch_of(stripped)).data
    assert np.array_equal(out_full, out_none)


def test_fnn_pose_conv_zero_weights():
    layer = FnnPoseConv(2, 3, substream(9, STREAM_INIT))
    for p in layer.parameters():
        p.data = np.zeros_like(p.data)
    g = random_graph(10)
    assert not layer(Tensor(np.ones((g.n_nodes, 2))), batch_of(g)).data.any()


# ---------------------------------------------------------------------------
# PoseConv2d
# ---------------------------------------------------------------------------


def test_pose_conv2d_matches_edge_batch_oracle_train_and_eval():
    for seed in range(3):
        g = random_graph(seed, 3, 5)
        layer = PoseConv2d(2, 3, substream(seed, STREAM_INIT, 1))
        maps = substream(seed, 27).normal(size=(g.n_nodes, 3, 3, 2))
        batch = batch_of(g)
        out = layer(Tensor(maps), batch).data
        want = pose_conv2d_oracle(layer, maps, batch.src, batch.dst, training=True)
        np.testing.assert_allclose(out, want, atol=1e-12)
        layer.eval()
        out_e = layer(Tensor(maps), batch).data
        want_e = pose_conv2d_oracle(layer, maps, batch.src, batch.dst, training=False)
        np.testing.assert_allclose(out_e, want_e, atol=1e-12)


def test_pose_conv2d_three_node_path_oracle():
    g = PoseGraph.create([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]], edges=[[0, 1], [1, 2]])
    layer = PoseConv2d(2, 2, substream(11, STREAM_INIT))
    maps = substream(11, 28).normal(size=(3, 4, 4, 2))
    batch = batch_of(g)
    out = layer(Tensor(maps), batch).data
    want = pose_conv2d_oracle(layer, maps, batch.src, batch.dst)
    np.testing.assert_allclose(out, want, atol=1e-12)
    assert out.shape == (3, 8, 8, 2)  # spatial size doubled


def test_pose_conv2d_isolated_node_zero_gate_bias():
    layer = PoseConv2d(2, 3, substream(12, STREAM_INIT))
    layer.gate_conv.bias.data[:] = 0.0
    g = PoseGraph.create([[0.5, 0.5]])
    maps = substream(12, 29).normal(size=(1, 4, 4, 2))
    out = layer(Tensor(maps), batch_of(g)).data
    want = pose_conv2d_oracle(layer, maps, np.array([], dtype=int), np.array([], dtype=int))
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_pose_conv2d_permutation_equivariant():
    g = random_graph(13, 4, 6)
    layer = PoseConv2d(2, 2, substream(13, STREAM_INIT))
    maps = substream(13, 30).normal(size=(g.n_nodes, 3, 3, 2))
    out = layer(Tensor(maps), batch_of(g)).data
    perm = substream(13, 31).permutation(g.n_nodes)
    out_p = layer(Tensor(maps[perm]), batch_of(permute_graph(g, perm))).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-9)


def test_pose_conv2d_gradients():
    g = PoseGraph.create([[0.2, 0.2], [0.8, 0.6]], edges=[[0, 1]])
    layer = PoseConv2d(1, 2, substream(14, STREAM_INIT))
    maps = Tensor(substream(14, 32).normal(size=(2, 2, 2, 1)), requires_grad=True)
    batch = batch_of(g)
    params = [layer.pair.body_src.weight, layer.pair.norm_dst.gamma, layer.gate_conv.weight]
    err = grad_check(lambda *_: E.tsum(E.sigmoid(layer(maps, batch))), [maps] + params)
    assert err < 1e-6


# ---------------------------------------------------------------------------
# assemble_layout
# ---------------------------------------------------------------------------


def test_assemble_layout_unit_feature():
    feats = np.zeros((1, 4))
    feats[0, 2] = 1.0
    masks = np.ones((1, 5, 5))
    out = assemble_layout(Tensor(feats), Tensor(masks)).data
    assert out.shape == (4, 5, 5)
    np.testing.assert_allclose(out[2], 1.0)
    assert not out[[0, 1, 3]].any()


def test_assemble_layout_duplication_invariant():
    rng = substream(15, 33)
    feats = rng.random((3, 4))
    masks = rng.random((3, 6, 6))
    once = assemble_layout(Tensor(feats), Tensor(masks)).data
    twice = assemble_layout(
        Tensor(np.concatenate([feats, feats])), Tensor(np.concatenate([masks, masks]))
    ).data
    np.testing.assert_allclose(once, twice, atol=1e-12)


def test_assemble_layout_matches_triple_loop():
    rng = substream(16, 34)
    feats = rng.random((3, 2))
    masks = rng.random((3, 4, 4))
    out = assemble_layout(Tensor(feats), Tensor(masks)).data
    np.testing.assert_allclose(out, assemble_layout_oracle(feats, masks), atol=1e-12)


def test_assemble_layout_empty_errors():
    with pytest.raises(ValueError, match="empty graph"):
        assemble_layout(Tensor(np.zeros((0, 2))), Tensor(np.zeros((0, 3, 3))))


# ---------------------------------------------------------------------------
# encoder / mask generator / conditioners
# ---------------------------------------------------------------------------


def tiny_mask_cfg(target=8):
    return MaskGeneratorConfig(
        target_size=target,
        noise_dim=1,
        node_widths=((4, 4), (8, 16)),
        seed_channels=1,
        seed_size=4,
        ladder=[("pose2d", 1, 3)],
    )


def test_ladder_for_sizes():
    assert [k for k, _, _ in ladder_for(64)] == ["pose2d", "conv", "pose2d", "pose2d"]
    assert len(ladder_for(32)) == 3
    assert len(ladder_for(128)) == 5
    with pytest.raises(ValueError):
        ladder_for(48)


def test_mask_generator_outputs_bounded_and_sized():
    cfg = tiny_mask_cfg()
    model = MaskGenerator(cfg, substream(17, STREAM_INIT))
    g = random_graph(17, 3, 5, noise_dim=1)
    out = mask_generator_forward(model, g).data
    assert out.shape == (g.n_nodes, 8, 8)
    assert (out > 0).all() and (out < 1).all()


def test_mask_generator_rejects_unnormalized_positions():
    model = MaskGenerator(tiny_mask_cfg(), substream(18, STREAM_INIT))
    g = PoseGraph.create([[1.5, 0.2]], noise=[[0.1]])
    with pytest.raises(ValueError, match="unnormalized positions"):
        mask_generator_forward(model, g)


def test_mask_generator_noise_arity_checked():
    model = MaskGenerator(tiny_mask_cfg(), substream(19, STREAM_INIT))
    g = PoseGraph.create([[0.5, 0.5]])
    with pytest.raises(ValueError, match="noise arity"):
        mask_generator_forward(model, g)


def test_mask_generator_deterministic_given_seed():
    g = random_graph(20, 4, 6, noise_dim=1)
    out1 = mask_generator_forward(MaskGenerator(tiny_mask_cfg(), substream(7, STREAM_INIT)), g).data
    out2 = mask_generator_forward(MaskGenerator(tiny_mask_cfg(), substream(7, STREAM_INIT)), g).data
    assert np.array_equal(out1, out2)


def test_mask_generator_permutation_equivariant():
    model = MaskGenerator(tiny_mask_cfg(), substream(21, STREAM_INIT))
    g = random_graph(21, 4, 7, noise_dim=1)
    out = mask_generator_forward(model, g).data
    perm = substream(21, 35).permutation(g.n_nodes)
    out_p = mask_generator_forward(model, permute_graph(g, perm)).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-9)


def test_mask_generator_ignores_attributes_bitwise():
    model = MaskGenerator(tiny_mask_cfg(), substream(22, STREAM_INIT))
    g = random_graph(22, 4, 6, noise_dim=1)
    g = g.with_attrs(np.zeros((g.n_nodes, 2), dtype=np.int64))
    out1 = mask_generator_forward(model, g).data
    g2 = g.with_attrs(np.full_like(g.attrs, MISSING))
    out2 = mask_generator_forward(model, g2).data
    assert np.array_equal(out1, out2)


def test_encoder_shapes_and_missing_attr():
    cfg = EncoderConfig(vocab_sizes=[5, 3])
    enc = Encoder(cfg, substream(23, STREAM_INIT))
    g = random_graph(23, 4, 6)
    attrs = substream(23, 36).integers(0, 3, size=(g.n_nodes, 2))
    attrs[0] = MISSING
    g = g.with_attrs(attrs)
    out = encoder_forward(enc, g).data
    assert out.shape == (g.n_nodes, 32)
    assert (out > 0).all() and (out < 1).all()


def test_encoder_unknown_attribute_raises():
    enc = Encoder(EncoderConfig(vocab_sizes=[3]), substream(24, STREAM_INIT))
    g = random_graph(24, 3, 4).with_attrs(np.full((random_graph(24, 3, 4).n_nodes, 1), 9))
    with pytest.raises(ValueError, match="outside vocabulary"):
        encoder_forward(enc, g)


def test_encoder_identical_nodes_identical_features():
    enc = Encoder(EncoderConfig(vocab_sizes=[4]), substream(25, STREAM_INIT))
    pos = np.array([[0.25, 0.5], [0.75, 0.5], [0.25, 0.5], [0.75, 0.5]])
    g = PoseGraph.create(pos, attrs=[[1], [2], [1], [2]], edges=[[0, 1], [2, 3]])
    out = encoder_forward(enc, g).data
    np.testing.assert_allclose(out[0], out[2], atol=1e-12)
    np.testing.assert_allclose(out[1], out[3], atol=1e-12)


def test_encoder_permutation_equivariant():
    enc = Encoder(EncoderConfig(vocab_sizes=[4]), substream(26, STREAM_INIT))
    g = random_graph(26, 4, 7).with_attrs(
        substream(26, 37).integers(0, 4, size=(random_graph(26, 4, 7).n_nodes, 1))
    )
    out = encoder_forward(enc, g).data
    perm = substream(26, 38).permutation(g.n_nodes)
    out_p = encoder_forward(enc, permute_graph(g, perm)).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-9)


def test_fnn_encoder_matches_encoder_shape():
    cfg = EncoderConfig(vocab_sizes=[4])
    g = random_graph(27, 3, 5).with_attrs(
        substream(27, 39).integers(0, 4, size=(random_graph(27, 3, 5).n_nodes, 1))
    )
    enc = Encoder(cfg, substream(27, STREAM_INIT))
    fnn = FnnEncoder(cfg, substream(27, STREAM_INIT, 1))
    assert fnn(batch_of(g)).shape == enc(batch_of(g)).shape


def test_conditioner_variants_same_shape():
    cfg = EncoderConfig(vocab_sizes=[4])
    rng = substream(28, STREAM_INIT)
    models = ConditionerModels(
        encoder=Encoder(cfg, rng),
        mask_generator=MaskGenerator(tiny_mask_cfg(8), substream(28, STREAM_INIT, 1)),
        fnn_encoder=FnnEncoder(cfg, substream(28, STREAM_INIT, 2)),
    )
    g = random_graph(28, 3, 5, noise_dim=1).with_attrs(
        substream(28, 40).integers(0, 4, size=(random_graph(28, 3, 5).n_nodes, 1))
    )
    spec = RasterSpec(8, 8)
    shapes = {
        v: conditioner_forward(v, g, models, spec).shape
        for v in ("graphose", "gnn-baseline", "fnn-baseline")
    }
    assert len(set(shapes.values())) == 1


def test_conditioner_gnn_baseline_zero_encoder_closed_form():
    cfg = EncoderConfig(vocab_sizes=[4])
    enc = Encoder(cfg, substream(29, STREAM_INIT))
    for p in enc.parameters():
        p.data = np.zeros_like(p.data)
    models = ConditionerModels(encoder=enc)
    g = random_graph(29, 3, 5).with_attrs(
        substream(29, 41).integers(0, 4, size=(random_graph(29, 3, 5).n_nodes, 1))
    )
    spec = RasterSpec(8, 8)
    out = conditioner_forward("gnn-baseline", g, models, spec).data
    fixed = render_fixed_node_masks(g, spec)
    want = np.broadcast_to(0.5 * fixed.mean(axis=0), out.shape)  # sigmoid(0) = 0.5 features
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_fnn_baseline_feature_edge_independence():
    cfg = EncoderConfig(vocab_sizes=[4])
    fnn = FnnEncoder(cfg, substream(30, STREAM_INIT))
    g = random_graph(30, 4, 6).with_attrs(
        substream(30, 42).integers(0, 4, size=(random_graph(30, 4, 6).n_nodes, 1))
    )
    no_edges = PoseGraph.create(g.positions, attrs=g.attrs)
    f1 = fnn(batch_of(g)).data
    f2 = fnn(batch_of(no_edges)).data
    assert np.array_equal(f1, f2)
    # but the fixed masks do depend on edges
    spec = RasterSpec(8, 8)
    m1 = render_fixed_node_masks(g, spec)
    m2 = render_fixed_node_masks(no_edges, spec)
    assert not np.array_equal(m1, m2)


def test_downstream_generator_contract():
    rng = substream(31, STREAM_INIT)
    gen = DownstreamGenerator(rng)
    layout = Tensor(substream(31, 43).random((32, 8, 8)))
    out = gen(layout).data
    assert out.shape == (3, 8, 8)
    assert (out >= -1).all() and (out <= 1).all()


def test_downstream_generator_zero_layout_zero_biases():
    gen = DownstreamGenerator(substream(32, STREAM_INIT))
    for name, p in gen.named_parameters():
        if "bias" in name or "beta" in name:
            p.data = np.zeros_like(p.data)
    out = gen(Tensor(np.zeros((32, 8, 8)))).data
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_downstream_generator_channel_mismatch():
    gen = DownstreamGenerator(substream(33, STREAM_INIT))
    with pytest.raises(ValueError, match="channel count"):
        gen(Tensor(np.zeros((16, 8, 8))))


def test_mask_generator_loss_gradient():
    cfg = MaskGeneratorConfig(
        target_size=8,
        noise_dim=1,
        node_widths=((3, 4), (4, 16)),
        seed_channels=1,
        seed_size=4,
        ladder=[("pose2d", 1, 2)],
    )
    model = MaskGenerator(cfg, substream(34, STREAM_INIT))
    g = random_graph(34, 3, 3, noise_dim=1)
    batch = batch_of(g)
    target = E.constant(substream(34, 44).random((g.n_nodes, 8, 8)))

    def loss(*_):
        pred = model(batch)
        diff = E.sub(pred, target)
        return E.tmean(E.mul(diff, diff))

    params = model.parameters()
    subset = [p for p in params if p.size <= 40][:6]
    err = grad_check(loss, subset)
    assert err < 1e-5
