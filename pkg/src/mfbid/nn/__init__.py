from mfbid.nn import autodiff
from mfbid.nn.autodiff import Tensor, backward, no_grad
from mfbid.nn.checkpoint import load_params, save_params
from mfbid.nn.layers import (
    attention_block,
    attention_weights,
    dense,
    init_attention,
    init_dense,
    init_mlp,
    mlp,
)
from mfbid.nn.optim import Adam, OptimizerConfig, step
from mfbid.nn.params import ParamSet, glorot_uniform

__all__ = [
    "Adam",
    "OptimizerConfig",
    "ParamSet",
    "Tensor",
    "attention_block",
    "attention_weights",
    "autodiff",
    "backward",
    "dense",
    "glorot_uniform",
    "init_attention",
    "init_dense",
    "init_mlp",
    "load_params",
    "mlp",
    "no_grad",
    "save_params",
    "step",
]
