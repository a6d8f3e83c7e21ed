from .layers import (
    Cache, CacheError, ConvSpec, ShapeError, bilstm_forward, conv2d_forward,
    conv_out_len, conv_transpose2d_forward, conv_transpose_out_len, layer_backward,
    leaky_relu, same_pad,
)
from .init import init_bilstm, init_params
from .optim import AdamState, adam_step
from .gradcheck import grad_check, layer_fragment

__all__ = [
    "AdamState", "Cache", "CacheError", "ConvSpec", "ShapeError", "adam_step",
    "bilstm_forward", "conv2d_forward", "conv_out_len", "conv_transpose2d_forward",
    "conv_transpose_out_len", "grad_check", "init_bilstm", "init_params",
    "layer_backward", "layer_fragment", "leaky_relu", "same_pad",
]
