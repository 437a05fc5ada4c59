from stgn.numerics.functional import (
    STD_FLOOR,
    EmptyRegionError,
    adain,
    adain_to,
    area_downsample,
    attention,
    conv2d,
    gram_matrix,
    masked_moments,
    moments,
    nearest_upsample,
    patchify,
    unpatchify,
)
from stgn.numerics.gradcheck import grad_check
from stgn.numerics.rng import Rng
from stgn.numerics.tensor import (
    DimensionError,
    NumericError,
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    exp,
    gelu,
    getitem,
    grad_enabled,
    layer_norm,
    linear,
    log,
    matmul,
    maximum,
    mean,
    mse,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    silu,
    softmax,
    sqrt,
    stack,
    sub,
    transpose,
    tsum,
)

__all__ = [
    "STD_FLOOR",
    "DimensionError",
    "EmptyRegionError",
    "NumericError",
    "Rng",
    "Tensor",
    "adain",
    "adain_to",
    "add",
    "as_tensor",
    "area_downsample",
    "attention",
    "concat",
    "conv2d",
    "div",
    "exp",
    "gelu",
    "getitem",
    "grad_check",
    "grad_enabled",
    "gram_matrix",
    "layer_norm",
    "linear",
    "log",
    "masked_moments",
    "matmul",
    "maximum",
    "mean",
    "moments",
    "mse",
    "mul",
    "nearest_upsample",
    "no_grad",
    "patchify",
    "power",
    "relu",
    "reshape",
    "silu",
    "softmax",
    "sqrt",
    "stack",
    "sub",
    "transpose",
    "tsum",
    "unpatchify",
]
