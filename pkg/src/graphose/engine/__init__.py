"""Dense float64 tensors with reverse-mode autodiff and a small module system."""

from .checkpoint import load_arrays, save_arrays
from .gradcheck import grad_check
from .module import BatchNorm, Conv2d, Embedding, Linear, Module, kaiming_uniform
from .tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    avg_pool2d,
    clamp_min,
    concat,
    constant,
    conv2d,
    div,
    embedding_lookup,
    exp,
    gather_rows,
    log,
    matmul,
    mul,
    narrow,
    relu,
    reshape,
    permute,
    scale,
    segment_max,
    selfgate,
    segment_sum,
    sigmoid,
    sqrt,
    sub,
    tanh,
    tmean,
    transpose2d,
    tsum,
    upsample_bilinear,
)

__all__ = [
    "BatchNorm",
    "Conv2d",
    "Embedding",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "add",
    "as_tensor",
    "avg_pool2d",
    "clamp_min",
    "concat",
    "constant",
    "conv2d",
    "div",
    "embedding_lookup",
    "exp",
    "gather_rows",
    "grad_check",
    "kaiming_uniform",
    "load_arrays",
    "log",
    "matmul",
    "mul",
    "narrow",
    "relu",
    "reshape",
    "save_arrays",
    "permute",
    "scale",
    "segment_max",
    "selfgate",
    "segment_sum",
    "sigmoid",
    "sqrt",
    "sub",
    "tanh",
    "tmean",
    "transpose2d",
    "tsum",
    "upsample_bilinear",
]
