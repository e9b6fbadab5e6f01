from specsar.autodiff.tensor import (
    Tensor,
    concat,
    count_macs,
    matmul,
    mean,
    no_grad,
    split,
    tensor,
)
from specsar.autodiff.functional import (
    bilinear_upsample,
    conv2d,
    gelu,
    layer_norm,
    log_softmax,
    sigmoid,
    softmax,
    softplus,
)
from specsar.autodiff.optim import AdamW, adamw_step, cosine_lr

__all__ = [
    "AdamW",
    "Tensor",
    "adamw_step",
    "bilinear_upsample",
    "concat",
    "conv2d",
    "cosine_lr",
    "count_macs",
    "gelu",
    "layer_norm",
    "log_softmax",
    "matmul",
    "mean",
    "no_grad",
    "sigmoid",
    "softmax",
    "softplus",
    "split",
    "tensor",
]
