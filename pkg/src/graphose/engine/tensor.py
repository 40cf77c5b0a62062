"""Reverse-mode autodiff over dense float64 numpy arrays.

A Tensor wraps an ndarray plus an optional tape node (parents and a backward
function computing exact vector-Jacobian products). Backprop walks the tape in
reverse topological order. Tensors on a tape are treated as immutable: no op
mutates its inputs' data.

Image tensors are stored channels-last, (N, H, W, C). Keeping channels in the
contiguous axis lets convolutions run as plain GEMMs over flat padded frames
with no strided gathers, which is what this op set is bandwidth-bound on.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg.blas import dgemm

Array = np.ndarray


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> Array:
        return self.data

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- autodiff ------------------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Array | None = None) -> None:
        """Accumulate gradients of self w.r.t. every reachable tensor."""
        if grad is None:
            if self.size != 1:
                raise ValueError("implicit backward requires a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.shape).copy()
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


class Parameter(Tensor):
    """Trainable tensor with a stable name assigned at module registration."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def _make(data: Array, parents: Sequence[Tensor], backward: Callable[[Array], None]) -> Tensor:
    """Create a tape node; the tape is only built when some parent needs grads."""
    out = Tensor(data)
    tracked = tuple(p for p in parents if p.requires_grad or p._parents)
    if tracked:
        out.requires_grad = True
        out._parents = tracked
        out._backward = backward
    return out


def _accum(t: Tensor, g: Array) -> None:
    # aliasing the incoming array is safe: accumulation always reallocates
    # (t.grad + g) and no op mutates gradient arrays it has handed out
    if t.grad is None:
        t.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# pointwise and arithmetic primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g: Array):
        if a.requires_grad or a._parents:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad or b._parents:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g: Array):
        if a.requires_grad or a._parents:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad or b._parents:
            _accum(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Hadamard product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g: Array):
        if a.requires_grad or a._parents:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad or b._parents:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g: Array):
        if a.requires_grad or a._parents:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad or b._parents:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)

    def backward(g: Array):
        _accum(a, g * s)

    return _make(a.data * s, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g: Array):
        _accum(a, g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # exp overflow saturates to inf and the quotient lands on exactly 0/1,
    # so the plain formula is value-safe; only the warning is suppressed
    with np.errstate(over="ignore"):
        out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g: Array):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def selfgate(a) -> Tensor:
    """x * sigmoid(x) in one pass (the gating used after message blocks)."""
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        sig = 1.0 / (1.0 + np.exp(-a.data))
    out_data = a.data * sig

    def backward(g: Array):
        _accum(a, g * (sig + out_data * (1.0 - sig)))

    return _make(out_data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g: Array):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g: Array):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g: Array):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g: Array):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def clamp_min(a, low: float) -> Tensor:
    """max(a, low); gradient passes only where a > low."""
    a = as_tensor(a)
    mask = a.data > low

    def backward(g: Array):
        _accum(a, g * mask)

    return _make(np.maximum(a.data, low), (a,), backward)


def batchnorm_train(x, gamma, beta, eps: float, weights: Array | None = None,
                    fuse_relu: bool = False):
    """Fused training-mode batch normalization, optionally with a trailing relu.

    Normalizes per channel over all non-channel axes of (N, C) or
    (N, H, W, C) input; `weights` are optional per-sample multiplicities for
    batches whose entries stand for several gathered copies. Returns the
    output tensor plus the batch mean/variance arrays (for running stats).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0,) if x.ndim == 2 else (0, 1, 2)
    cshape = (1, -1) if x.ndim == 2 else (1, 1, 1, -1)
    spatial = x.size // (x.shape[0] * x.shape[-1])
    if weights is None:
        count = x.size // x.shape[-1]
        mean = x.data.mean(axis=axes)
        var = (x.data * x.data).mean(axis=axes) - mean * mean
        w = None
    else:
        w = np.asarray(weights, dtype=np.float64).reshape((-1,) + (1,) * (x.ndim - 1))
        count = float(w.sum()) * spatial
        if count <= 0:
            raise ValueError("batch norm needs positive total weight")
        xw = x.data * w
        mean = xw.sum(axis=axes) / count
        var = (xw * x.data).sum(axis=axes) / count - mean * mean
    var = np.maximum(var, 0.0)  # guard tiny negative from the moment form
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv.reshape(cshape)
    out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)
    if fuse_relu:
        pos = out_data > 0
        out_data = np.where(pos, out_data, 0.0)

    def backward(g: Array):
        if fuse_relu:
            g = g * pos
        if beta.requires_grad or beta._parents:
            _accum(beta, g.sum(axis=axes))
        if gamma.requires_grad or gamma._parents:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if x.requires_grad or x._parents:
            dxhat = g * gamma.data.reshape(cshape)
            s1 = dxhat.sum(axis=axes).reshape(cshape)
            s2 = (dxhat * xhat).sum(axis=axes).reshape(cshape)
            frac = (1.0 / count) if w is None else (w / count)
            gx = inv.reshape(cshape) * (dxhat - frac * s1 - xhat * (frac * s2))
            _accum(x, gx)

    out = _make(out_data, (x, gamma, beta), backward)
    return out, mean, var


def affine_channels(x, scale_c: Array, shift_c: Array) -> Tensor:
    """Per-channel y = x * a + b with constant a, b (eval-mode normalization)."""
    x = as_tensor(x)
    cshape = (1, -1) if x.ndim == 2 else (1, 1, 1, -1)
    a = np.asarray(scale_c, dtype=np.float64).reshape(cshape)
    out_data = x.data * a + np.asarray(shift_c, dtype=np.float64).reshape(cshape)

    def backward(g: Array):
        _accum(x, g * a)

    return _make(out_data, (x,), backward)


# ---------------------------------------------------------------------------
# shape and reduction primitives
# ---------------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape

    def backward(g: Array):
        _accum(a, g.reshape(orig))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose2d(a) -> Tensor:
    a = as_tensor(a)

    def backward(g: Array):
        _accum(a, g.T)

    return _make(a.data.T.copy(), (a,), backward)


def permute(a, axes: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def backward(g: Array):
        _accum(a, np.ascontiguousarray(g.transpose(inverse)))

    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.shape))

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def backward(g: Array):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _make(out_data, ts, backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = as_tensor(a)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g: Array):
        gx = np.zeros(a.shape)
        gx[sl] = g
        _accum(a, gx)

    return _make(a.data[sl].copy(), (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra, gather/scatter
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g: Array):
        if a.requires_grad or a._parents:
            _accum(a, g @ b.data.T)
        if b.requires_grad or b._parents:
            _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def _scatter_sum(idx: Array, g: Array, n: int) -> Array:
    """Sum rows of g into n buckets; sort + reduceat beats np.add.at here."""
    out = np.zeros((n,) + g.shape[1:])
    if idx.size == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    gs = g[order]
    # reduceat over first-occurrence offsets handles empty buckets exactly:
    # present buckets get full contiguous runs, absent ones stay zero
    present, first = np.unique(sorted_idx, return_index=True)
    out[present] = np.add.reduceat(gs, first, axis=0)
    return out


def gather_rows(a, index: Array) -> Tensor:
    """Select rows along axis 0; duplicated indices accumulate in the backward."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)

    def backward(g: Array):
        _accum(a, _scatter_sum(idx, g, a.shape[0]))

    return _make(a.data[idx], (a,), backward)


def embedding_lookup(table, ids: Array, missing_id: int = -1) -> Tensor:
    """Row lookup with a sentinel: missing ids map to the table's last row."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64).copy()
    idx[idx == missing_id] = table.shape[0] - 1
    if (idx < 0).any() or (idx >= table.shape[0]).any():
        raise ValueError("attribute id outside vocabulary")
    return gather_rows(table, idx)


def segment_sum(values, targets: Array, n: int) -> Tensor:
    """Sum rows of `values` into `n` buckets given by `targets` (axis 0)."""
    values = as_tensor(values)
    idx = np.asarray(targets, dtype=np.int64)
    out_data = _scatter_sum(idx, values.data, n)

    def backward(g: Array):
        _accum(values, g[idx])

    return _make(out_data, (values,), backward)


def segment_max(values, targets: Array, n: int) -> Tensor:
    """Per-bucket elementwise max. `targets` must be sorted non-decreasing.

    The gradient routes to the first attaining row in each bucket, matching
    the usual subgradient convention. Empty buckets yield zeros.
    """
    values = as_tensor(values)
    idx = np.asarray(targets, dtype=np.int64)
    if idx.size and (np.diff(idx) < 0).any():
        raise ValueError("segment_max expects sorted targets")
    out_data = np.zeros((n,) + values.shape[1:])
    bounds = np.searchsorted(idx, np.arange(n + 1))
    argmax = np.zeros((n,) + values.shape[1:], dtype=np.int64)
    for s in range(n):
        lo, hi = bounds[s], bounds[s + 1]
        if hi > lo:
            block = values.data[lo:hi]
            am = block.argmax(axis=0)
            out_data[s] = np.take_along_axis(block, am[None], axis=0)[0]
            argmax[s] = lo + am

    def backward(g: Array):
        gx = np.zeros(values.shape)
        for s in range(n):
            if bounds[s + 1] > bounds[s]:
                np.put_along_axis(
                    gx.reshape(values.shape[0], -1),
                    argmax[s].reshape(1, -1),
                    g[s].reshape(1, -1),
                    axis=0,
                )
        _accum(values, gx)

    return _make(out_data, (values,), backward)


# ---------------------------------------------------------------------------
# 2D image primitives, channels-last (N, H, W, C)
# ---------------------------------------------------------------------------

_CONV_BLOCK_ROWS = 4096


def _gemm_acc(dst: Array, a: Array, mat: Array) -> None:
    """dst += a @ mat for C-contiguous 2D arrays, without a temporary."""
    # In Fortran terms (A @ B)^T = B^T A^T, and .T of a C-contiguous array is
    # F-contiguous, so BLAS accumulates straight into dst.
    dgemm(1.0, mat.T, a.T, beta=1.0, c=dst.T, overwrite_c=True)


def _gemm_acc_tn(dst: Array, a: Array, b: Array) -> None:
    """dst += a.T @ b for C-contiguous a (r, m), b (r, n), dst (m, n)."""
    dgemm(1.0, b.T, a.T, beta=1.0, c=dst.T, trans_b=1, overwrite_c=True)


def _tap_gemm(dst: Array, src: Array, taps, wp: int, kh: int, kw: int, reverse: bool) -> None:
    """Accumulate all kernel-tap GEMMs between flat frame views.

    Row blocks are sized to keep the operands cache-resident across the 9 (or
    k*k) taps; `reverse` shifts the destination instead of the source, which
    is the adjoint data flow.
    """
    lim = dst.shape[0] - (kh - 1) * wp - (kw - 1)
    for r0 in range(0, lim, _CONV_BLOCK_ROWS):
        r1 = min(r0 + _CONV_BLOCK_ROWS, lim)
        for u in range(kh):
            for v in range(kw):
                delta = u * wp + v
                if reverse:
                    _gemm_acc(dst[r0 + delta : r1 + delta], src[r0:r1], taps[u, v])
                else:
                    _gemm_acc(dst[r0:r1], src[r0 + delta : r1 + delta], taps[u, v])


def conv2d(x, kernel, bias=None, padding: int = 1) -> Tensor:
    """Cross-correlation with stride 1 on (N, H, W, C) input; kernel (O, C, k, k).

    Runs as blocked GEMMs per kernel tap over a zero-padded flat frame: a tap
    shifts the flat index by u*width + v, so every operand is a contiguous
    slice and nothing is gathered element by element. Valid output rows never
    cross image-frame boundaries; the frame border rows absorb the spill and
    are cropped afterwards.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    b = as_tensor(bias) if bias is not None else None
    n, h, w, c = x.shape
    o, ck, kh, kw = kernel.shape
    if ck != c:
        raise ValueError(f"kernel expects {ck} input channels, got {c}")
    hp, wp = h + 2 * padding, w + 2 * padding
    oh, ow = hp - kh + 1, wp - kw + 1
    frame = hp * wp
    total = n * frame
    taps = np.ascontiguousarray(kernel.data.transpose(2, 3, 1, 0))  # (kh, kw, C, O)

    if padding == 0 and kh == 1 and kw == 1:
        x2 = x.data.reshape(total, c)
        xl = None
    else:
        xl = np.zeros((n, hp, wp, c))
        xl[:, padding : padding + h, padding : padding + w, :] = x.data
        x2 = xl.reshape(total, c)
    flat = np.zeros((total, o))
    _tap_gemm(flat, x2, taps, wp, kh, kw, reverse=False)
    out_data = np.ascontiguousarray(flat.reshape(n, hp, wp, o)[:, :oh, :ow, :])
    if b is not None:
        out_data += b.data

    def backward(g: Array):
        need_k = kernel.requires_grad or kernel._parents
        need_x = x.requires_grad or x._parents
        if b is not None and (b.requires_grad or b._parents):
            _accum(b, g.sum(axis=(0, 1, 2)))
        if not (need_k or need_x):
            return
        if oh == hp and ow == wp:
            g2 = g.reshape(total, o)
        else:
            gframe = np.zeros((n, hp, wp, o))
            gframe[:, :oh, :ow, :] = g
            g2 = gframe.reshape(total, o)
        lim = total - (kh - 1) * wp - (kw - 1)
        # one blocked sweep shares each block of x2/g2 across all taps and
        # both adjoint products
        gk = np.zeros((kh, kw, c, o)) if need_k else None
        gxp = np.zeros((total, c)) if need_x else None
        rtaps = np.ascontiguousarray(np.swapaxes(taps, 2, 3)) if need_x else None
        for r0 in range(0, lim, _CONV_BLOCK_ROWS):
            r1 = min(r0 + _CONV_BLOCK_ROWS, lim)
            gb = g2[r0:r1]
            for u in range(kh):
                for v in range(kw):
                    delta = u * wp + v
                    if need_k:
                        _gemm_acc_tn(gk[u, v], x2[r0 + delta : r1 + delta], gb)
                    if need_x:
                        _gemm_acc(gxp[r0 + delta : r1 + delta], gb, rtaps[u, v])
        if need_k:
            _accum(kernel, gk.transpose(3, 2, 0, 1))
        if need_x:
            gxl = gxp.reshape(n, hp, wp, c)
            if padding or kh > 1 or kw > 1:
                gxl = np.ascontiguousarray(
                    gxl[:, padding : padding + h, padding : padding + w, :]
                )
            _accum(x, gxl)

    parents = (x, kernel) if b is None else (x, kernel, b)
    return _make(out_data, parents, backward)


_UPSAMPLE_CACHE: dict[tuple[int, int], Array] = {}


def _upsample_matrix(n_in: int, factor: int) -> Array:
    """Row-interpolation matrix for half-pixel bilinear resize (edges clamped)."""
    key = (n_in, factor)
    if key not in _UPSAMPLE_CACHE:
        n_out = n_in * factor
        m = np.zeros((n_out, n_in))
        for o in range(n_out):
            src = (o + 0.5) / factor - 0.5
            src = min(max(src, 0.0), n_in - 1.0)
            i0 = int(np.floor(src))
            i1 = min(i0 + 1, n_in - 1)
            t = src - i0
            m[o, i0] += 1.0 - t
            m[o, i1] += t
        _UPSAMPLE_CACHE[key] = m
    return _UPSAMPLE_CACHE[key]


def _up2(data: Array, axis: int) -> Array:
    """Double one spatial axis with half-pixel bilinear weights (edge clamped).

    The factor-2 stencil is fixed: out[0] = x[0], out[2m+1] = .75 x[m] +
    .25 x[m+1], out[2m] = .25 x[m-1] + .75 x[m]. Written with ufunc `out=`
    into strided views to avoid temporaries.
    """
    sl = lambda s: tuple(s if i == axis else slice(None) for i in range(data.ndim))
    shape = list(data.shape)
    shape[axis] *= 2
    out = np.empty(shape)
    odd = out[sl(slice(1, None, 2))]
    np.multiply(data, 0.75, out=odd)
    odd[sl(slice(None, -1))] += 0.25 * data[sl(slice(1, None))]
    odd[sl(-1)] += 0.25 * data[sl(-1)]
    even = out[sl(slice(2, None, 2))]
    np.multiply(data[sl(slice(1, None))], 0.75, out=even)
    even += 0.25 * data[sl(slice(None, -1))]
    out[sl(0)] = data[sl(0)]
    return out


def _up2_adjoint(g: Array, axis: int) -> Array:
    sl = lambda s: tuple(s if i == axis else slice(None) for i in range(g.ndim))
    godd = g[sl(slice(1, None, 2))]
    geven = g[sl(slice(2, None, 2))]
    dx = 0.75 * godd
    dx[sl(slice(1, None))] += 0.75 * geven + 0.25 * godd[sl(slice(None, -1))]
    dx[sl(slice(None, -1))] += 0.25 * geven
    dx[sl(-1)] += 0.25 * godd[sl(-1)]
    dx[sl(0)] += g[sl(0)]
    return dx


def upsample_bilinear(x, factor: int) -> Tensor:
    """Bilinear upsampling of (N, H, W, C) by an integer factor (half-pixel)."""
    x = as_tensor(x)
    if factor == 1:
        return x
    n, h, w, c = x.shape
    if factor == 2:
        out_data = _up2(_up2(x.data, 1), 2)

        def backward2(g: Array):
            _accum(x, _up2_adjoint(_up2_adjoint(g, 2), 1))

        return _make(out_data, (x,), backward2)
    rmat = _upsample_matrix(h, factor)
    cmat = _upsample_matrix(w, factor)

    def resize(data: Array, rm: Array, cm: Array) -> Array:
        n_, h_, w_, c_ = data.shape
        rows = np.matmul(rm, data.reshape(n_, h_, w_ * c_))  # (n, h', w*c)
        h2 = rm.shape[0]
        swapped = np.ascontiguousarray(rows.reshape(n_, h2, w_, c_).swapaxes(1, 2))
        cols = np.matmul(cm, swapped.reshape(n_, w_, h2 * c_))  # (n, w', h'*c)
        w2 = cm.shape[0]
        return np.ascontiguousarray(cols.reshape(n_, w2, h2, c_).swapaxes(1, 2))

    out_data = resize(x.data, rmat, cmat)

    def backward(g: Array):
        _accum(x, resize(g, rmat.T, cmat.T))

    return _make(out_data, (x,), backward)


def avg_pool2d(x, factor: int) -> Tensor:
    """Non-overlapping mean pooling of (N, H, W, C) by an integer factor."""
    x = as_tensor(x)
    if factor == 1:
        return x
    n, h, w, c = x.shape
    if h % factor or w % factor:
        raise ValueError("spatial size must be divisible by the pooling factor")
    pooled = reshape(x, (n, h // factor, factor, w // factor, factor, c))
    return tmean(pooled, axis=(2, 4))
