"""Surrogate pretraining of the mask generator and its optimization machinery.

Each step draws a fresh batch of random pose graphs, renders their analytic
masks as targets, and fits the per-graph pixel-wise maximum of the predicted
node masks with binary cross entropy under Adam and a cosine learning-rate
schedule. All randomness is keyed by (seed, stream, epoch, batch, sample), so
an interrupted run resumed from a checkpoint retraces the original run bit for
bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine as E
from .engine import Tensor, load_arrays, save_arrays
from .graph import PoseGraph
from .nets import GraphBatch, MaskGenerator
from .rng import (
    STREAM_GRAPHS,
    STREAM_NOISE,
    STREAM_VAL_GRAPHS,
    STREAM_VAL_NOISE,
    substream,
)
from .surrogate import RasterSpec, render_surrogate
from .synth import SynthConfig, sample_pretrain_graph


class DivergenceError(RuntimeError):
    """Raised when a non-finite gradient or loss aborts training."""


# ---------------------------------------------------------------------------
# loss, schedule, optimizer
# ---------------------------------------------------------------------------


def bce_loss(pred: Tensor, target) -> Tensor:
    """Mean binary cross entropy; predictions are clamped away from {0, 1}."""
    t = target if isinstance(target, Tensor) else E.constant(np.asarray(target, dtype=np.float64))
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {t.shape}")
    eps = 1e-12
    pos = E.mul(t, E.log(E.clamp_min(pred, eps)))
    neg = E.mul(E.sub(1.0, t), E.log(E.clamp_min(E.sub(1.0, pred), eps)))
    return E.scale(E.tmean(E.add(pos, neg)), -1.0)


@dataclass
class Schedule:
    lr_max: float = 0.002
    lr_min: float = 0.00002
    period: int = 300


def cosine_lr(t: float, sched: Schedule, multiplier: float = 1.0) -> float:
    """Cosine annealing from lr_max at t=0 to lr_min at t=period."""
    t = min(max(float(t), 0.0), float(sched.period))
    lr = sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (
        1.0 + math.cos(math.pi * t / sched.period)
    )
    return lr * multiplier


@dataclass
class ParamGroup:
    params: list  # list[(name, Parameter)]
    multiplier: float = 1.0


class Adam:
    """Bias-corrected Adam over named parameter groups with lr multipliers."""

    def __init__(self, groups: list[ParamGroup], beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for g in groups for name, p in g.params}
        self._v = {name: np.zeros_like(p.data) for g in groups for name, p in g.params}

    def zero_grad(self) -> None:
        for g in self.groups:
            for _, p in g.params:
                p.grad = None

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for group in self.groups:
            eff = lr * group.multiplier
            for name, p in group.params:
                grad = p.grad
                if grad is None:
                    continue
                if not np.all(np.isfinite(grad)):
                    raise DivergenceError(f"non-finite gradient in {name}")
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                p.data = p.data - eff * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"step_count": np.array(float(self.step_count))}
        for name in self._m:
            out[f"m/{name}"] = self._m[name].copy()
            out[f"v/{name}"] = self._v[name].copy()
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["step_count"])
        for name in self._m:
            self._m[name][...] = arrays[f"m/{name}"]
            self._v[name][...] = arrays[f"v/{name}"]


# ---------------------------------------------------------------------------
# training configuration and data assembly
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 20
    batches_per_epoch: int = 100
    batch_size: int = 64
    raster: RasterSpec = field(default_factory=lambda: RasterSpec(32, 32))
    val_size: int = 256
    patience: int = 50
    seed: int = 0
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


def config_digest(cfg: TrainConfig, synth: SynthConfig, model_cfg) -> str:
    """Identity of everything that shapes the sample streams and the model.

    Stopping criteria (epochs, patience) are excluded: resuming a checkpoint
    with a longer horizon is a valid continuation of the same run.
    """
    train = asdict(cfg)
    train.pop("epochs")
    train.pop("patience")
    blob = json.dumps(
        {"train": train, "synth": asdict(synth), "model": asdict(model_cfg)},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _sample_with_noise(synth: SynthConfig, noise_dim: int, g_rng, z_rng) -> PoseGraph:
    g = sample_pretrain_graph(synth, g_rng)
    if noise_dim:
        g = g.with_noise(z_rng.standard_normal((g.n_nodes, noise_dim)))
    return g


def training_batch(
    cfg: TrainConfig, synth: SynthConfig, noise_dim: int, epoch: int, batch_idx: int
) -> tuple[list[PoseGraph], np.ndarray]:
    """Graphs and stacked surrogate targets for one (epoch, batch) step."""
    graphs, targets = [], []
    for i in range(cfg.batch_size):
        g = _sample_with_noise(
            synth,
            noise_dim,
            substream(cfg.seed, STREAM_GRAPHS, epoch, batch_idx, i),
            substream(cfg.seed, STREAM_NOISE, epoch, batch_idx, i),
        )
        graphs.append(g)
        targets.append(render_surrogate(g, cfg.raster))
    return graphs, np.stack(targets)


def validation_set(
    cfg: TrainConfig, synth: SynthConfig, noise_dim: int
) -> tuple[list[PoseGraph], np.ndarray]:
    """Held-out graphs from a seed stream disjoint from every training batch."""
    graphs, targets = [], []
    for i in range(cfg.val_size):
        g = _sample_with_noise(
            synth,
            noise_dim,
            substream(cfg.seed, STREAM_VAL_GRAPHS, i),
            substream(cfg.seed, STREAM_VAL_NOISE, i),
        )
        graphs.append(g)
        targets.append(render_surrogate(g, cfg.raster))
    return graphs, np.stack(targets)


def graph_max_masks(model: MaskGenerator, graphs: list[PoseGraph]) -> Tensor:
    """Per-graph aggregate prediction: pixel-wise max over each graph's nodes."""
    batch = GraphBatch.from_graphs(graphs)
    node_masks = model(batch)
    return E.segment_max(node_masks, batch.graph_ids, batch.n_graphs)


def evaluate_bce(model: MaskGenerator, graphs: list[PoseGraph], targets: np.ndarray,
                 batch_size: int = 32) -> float:
    """Mean validation loss under eval-mode normalization."""
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    for lo in range(0, len(graphs), batch_size):
        chunk = graphs[lo : lo + batch_size]
        pred = graph_max_masks(model, chunk)
        loss = bce_loss(pred, targets[lo : lo + len(chunk)])
        total += loss.item() * len(chunk)
        count += len(chunk)
    if was_training:
        model.train()
    return total / count


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def save_training_checkpoint(path, model: MaskGenerator, optimizer: Adam, meta: dict) -> None:
    arrays = {f"model/{k}": v for k, v in model.state_dict().items()}
    arrays.update({f"optim/{k}": v for k, v in optimizer.state_arrays().items()})
    save_arrays(path, arrays, meta=meta)


def load_training_checkpoint(path, model: MaskGenerator, optimizer: Adam | None = None) -> dict:
    arrays, meta = load_arrays(path)
    model.load_state_dict(
        {k[len("model/") :]: v for k, v in arrays.items() if k.startswith("model/")}
    )
    if optimizer is not None:
        optimizer.load_state_arrays(
            {k[len("optim/") :]: v for k, v in arrays.items() if k.startswith("optim/")}
        )
    return meta


# ---------------------------------------------------------------------------
# the pretraining loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    records: list[dict]
    best_val: float
    best_epoch: int
    best_state: dict
    stopped_early: bool


def pretrain_mask_generator(
    cfg: TrainConfig,
    synth: SynthConfig,
    model: MaskGenerator,
    out_dir=None,
    log_cb=None,
    resume_from=None,
    inject_nan_at: int | None = None,
) -> TrainResult:
    """Fit the mask generator to analytic surrogate masks.

    Writes checkpoint-last/checkpoint-best containers and appends one metric
    record per epoch. On a divergence the current state is saved as
    checkpoint-failure before the error propagates.
    """
    import pathlib

    out = pathlib.Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    noise_dim = model.cfg.noise_dim
    optimizer = Adam([ParamGroup(list(model.named_parameters()), 1.0)])
    digest = config_digest(cfg, synth, model.cfg)

    start_epoch = 0
    best_val = math.inf
    best_epoch = -1
    since_best = 0
    records: list[dict] = []
    if resume_from is not None:
        meta = load_training_checkpoint(resume_from, model, optimizer)
        if meta.get("config_digest") not in (None, digest):
            raise ValueError("checkpoint was produced under a different configuration")
        start_epoch = int(meta["next_epoch"])
        best_val = float(meta["best_val"])
        best_epoch = int(meta["best_epoch"])
        since_best = int(meta["since_best"])

    val_graphs, val_targets = validation_set(cfg, synth, noise_dim)
    stopped_early = False
    best_state = model.state_dict()
    global_step = start_epoch * cfg.batches_per_epoch

    for epoch in range(start_epoch, cfg.epochs):
        lr = cosine_lr(epoch, cfg.schedule)
        model.train()
        t0 = time.time()
        epoch_loss = 0.0
        for b in range(cfg.batches_per_epoch):
            graphs, targets = training_batch(cfg, synth, noise_dim, epoch, b)
            pred = graph_max_masks(model, graphs)
            loss = bce_loss(pred, targets)
            if not np.isfinite(loss.item()):
                if out is not None:
                    save_training_checkpoint(
                        out / "checkpoint-failure.bin",
                        model,
                        optimizer,
                        _meta(epoch, best_val, best_epoch, since_best, cfg, digest),
                    )
                raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
            model.zero_grad()
            loss.backward()
            if inject_nan_at is not None and global_step == inject_nan_at:
                p0 = model.parameters()[0]
                p0.grad = np.full_like(p0.data, np.nan)
            try:
                optimizer.step(lr)
            except DivergenceError:
                if out is not None:
                    save_training_checkpoint(
                        out / "checkpoint-failure.bin",
                        model,
                        optimizer,
                        _meta(epoch, best_val, best_epoch, since_best, cfg, digest),
                    )
                raise
            epoch_loss += loss.item()
            global_step += 1
        train_bce = epoch_loss / cfg.batches_per_epoch
        val_bce = evaluate_bce(model, val_graphs, val_targets)
        record = {
            "epoch": epoch,
            "train_bce": train_bce,
            "val_bce": val_bce,
            "lr": lr,
            "wall_time": time.time() - t0,
        }
        records.append(record)
        if log_cb is not None:
            log_cb(record)
        if val_bce < best_val:
            best_val = val_bce
            best_epoch = epoch
            since_best = 0
            best_state = model.state_dict()
            if out is not None:
                save_training_checkpoint(
                    out / "checkpoint-best.bin",
                    model,
                    optimizer,
                    _meta(epoch + 1, best_val, best_epoch, since_best, cfg, digest),
                )
        else:
            since_best += 1
        if out is not None:
            save_training_checkpoint(
                out / "checkpoint-last.bin",
                model,
                optimizer,
                _meta(epoch + 1, best_val, best_epoch, since_best, cfg, digest),
            )
        if since_best > cfg.patience:
            stopped_early = True
            break

    return TrainResult(records, best_val, best_epoch, best_state, stopped_early)


def _meta(next_epoch, best_val, best_epoch, since_best, cfg, digest) -> dict:
    return {
        "next_epoch": int(next_epoch),
        "best_val": float(best_val),
        "best_epoch": int(best_epoch),
        "since_best": int(since_best),
        "seed": int(cfg.seed),
        "config_digest": digest,
    }
