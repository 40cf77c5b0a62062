"""Small module system: parameter registration, train/eval mode, state dicts."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class. Assigning a Parameter or Module attribute registers it."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = np.asarray(value, dtype=np.float64)
        object.__setattr__(self, name, self._buffers[name])

    def _set_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name][...] = value

    # -- traversal -------------------------------------------------------
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield (prefix + name, self._buffers[name])
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for m in self._modules.values():
            yield from m.modules()

    # -- modes and state ---------------------------------------------------
    def train(self) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", True)
        return self

    def eval(self) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", False)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[name] = b.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = {name: p for name, p in self.named_parameters()}
        bufs = dict(self.named_buffers())
        for name, value in state.items():
            if name in own:
                if own[name].data.shape != value.shape:
                    raise ValueError(f"shape mismatch for {name}")
                own[name].data = np.asarray(value, dtype=np.float64).copy()
            elif name in bufs:
                bufs[name][...] = value
            else:
                raise KeyError(f"unexpected state entry {name}")
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"missing state entries: {sorted(missing)}")


class Linear(Module):
    """Affine map y = x W + b with fan-in scaled uniform init and zero bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(kaiming_uniform((in_dim, out_dim), in_dim, rng))
        self.bias = Parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)


class Conv2d(Module):
    """Stride-1 2D convolution; kernel (out, in, k, k)."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: np.random.Generator,
        padding: int | None = None,
    ):
        super().__init__()
        self.padding = (kernel - 1) // 2 if padding is None else padding
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(kaiming_uniform((out_ch, in_ch, kernel, kernel), fan_in, rng))
        self.bias = Parameter(np.zeros(out_ch))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, padding=self.padding)


class Embedding(Module):
    """Lookup table with one reserved trailing row for the MISSING sentinel."""

    def __init__(self, vocab: int, dim: int, rng: np.random.Generator):
        super().__init__()
        bound = math.sqrt(3.0 / dim)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(vocab + 1, dim)))
        self.vocab = vocab

    def __call__(self, ids: np.ndarray) -> Tensor:
        return T.embedding_lookup(self.weight, ids)


class BatchNorm(Module):
    """Batch normalization over nodes (N, C) or feature maps (N, H, W, C).

    Training mode normalizes by batch statistics, optionally weighted by
    per-sample multiplicities (used when a batch entry logically stands for
    several gathered copies). Running stats store the biased variance so a
    momentum-1 update followed by eval mode reproduces the training output.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.channels = channels
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    @staticmethod
    def _axes_and_shape(x: Tensor):
        if x.ndim == 2:
            return (0,), (1, -1)
        if x.ndim == 4:
            return (0, 1, 2), (1, 1, 1, -1)  # channels last
        raise ValueError("expected (N, C) or (N, H, W, C) input")

    def __call__(
        self, x: Tensor, weights: np.ndarray | None = None, fuse_relu: bool = False
    ) -> Tensor:
        if x.shape[-1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[-1]}")
        self._axes_and_shape(x)  # validates rank
        if self.training:
            out, mean, var = T.batchnorm_train(
                x, self.gamma, self.beta, self.eps, weights, fuse_relu=fuse_relu
            )
            m = self.momentum
            self._set_buffer("running_mean", (1 - m) * self.running_mean + m * mean)
            self._set_buffer("running_var", (1 - m) * self.running_var + m * var)
            return out
        # eval mode folds the running stats into one per-channel affine map;
        # gradients flow to the input only (no training happens in eval mode)
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = self.gamma.data * inv
        shift = self.beta.data - self.running_mean * scale
        out = T.affine_channels(x, scale, shift)
        return T.relu(out) if fuse_relu else out
