"""Dense layers, MLP stacks and a single-head self-attention encoder block."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from mfbid.errors import ConfigurationError, TrainingError
from mfbid.nn import autodiff as ad
from mfbid.nn.autodiff import Tensor
from mfbid.nn.params import ParamSet, glorot_uniform


def init_dense(params: ParamSet, prefix: str, fan_in: int, fan_out: int,
               rng: np.random.Generator) -> None:
    params.add(f"{prefix}.W", glorot_uniform(rng, fan_in, fan_out))
    params.add(f"{prefix}.b", np.zeros(fan_out))


def dense(x: Tensor, params: ParamSet, prefix: str, activation: str = "linear") -> Tensor:
    """activation(x @ W + b) applied over the last axis."""
    W, b = params[f"{prefix}.W"], params[f"{prefix}.b"]
    if x.shape[-1] != W.shape[0]:
        raise ConfigurationError(
            f"{prefix}: input width {x.shape[-1]} does not match fan-in {W.shape[0]}")
    try:
        act = ad.ACTIVATIONS[activation]
    except KeyError:
        raise ConfigurationError(f"unknown activation {activation!r}") from None
    return act(ad.add(ad.matmul(x, W), b))


def init_mlp(params: ParamSet, prefix: str, sizes: Sequence[int], rng: np.random.Generator) -> None:
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        init_dense(params, f"{prefix}.l{i}", fan_in, fan_out, rng)


def mlp(x: Tensor, params: ParamSet, prefix: str, n_layers: int,
        hidden: str = "relu", output: str = "linear") -> Tensor:
    h = x
    for i in range(n_layers):
        h = dense(h, params, f"{prefix}.l{i}", hidden if i < n_layers - 1 else output)
    return h


_NUMPY_ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": lambda x: x * (x > 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)),
}


def mlp_numpy(x: np.ndarray, params: ParamSet, prefix: str, n_layers: int,
              hidden: str = "relu", output: str = "linear") -> np.ndarray:
    """Same arithmetic as :func:`mlp` on raw arrays, without recording a tape."""
    h = x
    for i in range(n_layers):
        act = _NUMPY_ACTIVATIONS[hidden if i < n_layers - 1 else output]
        h = act(h @ params[f"{prefix}.l{i}.W"].data + params[f"{prefix}.l{i}.b"].data)
    return h


def init_layer_norm(params: ParamSet, prefix: str, width: int) -> None:
    params.add(f"{prefix}.gain", np.ones(width))
    params.add(f"{prefix}.bias", np.zeros(width))


def layer_norm(x: Tensor, params: ParamSet, prefix: str, eps: float = 1e-5) -> Tensor:
    mu = ad.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = ad.mean(xc * xc, axis=-1, keepdims=True)
    y = xc * ad.pow_const(var + eps, -0.5)
    return y * params[f"{prefix}.gain"] + params[f"{prefix}.bias"]


def init_attention(params: ParamSet, prefix: str, width: int, ff_width: int,
                   rng: np.random.Generator) -> None:
    for name in ("q", "k", "v", "o"):
        init_dense(params, f"{prefix}.{name}", width, width, rng)
    init_layer_norm(params, f"{prefix}.ln1", width)
    init_dense(params, f"{prefix}.ff1", width, ff_width, rng)
    init_dense(params, f"{prefix}.ff2", ff_width, width, rng)
    init_layer_norm(params, f"{prefix}.ln2", width)


def attention_weights(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    """Row-stochastic single-head attention matrix for [tokens x d] or [B x tokens x d]."""
    width = params[f"{prefix}.q.W"].shape[0]
    if x.shape[-1] != width:
        raise ConfigurationError(f"{prefix}: token width {x.shape[-1]} != model width {width}")
    q = dense(x, params, f"{prefix}.q")
    k = dense(x, params, f"{prefix}.k")
    scores = ad.matmul(q, ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(width))
    if not np.all(np.isfinite(scores.data)):
        raise TrainingError(f"non-finite attention logits in {prefix}.q/{prefix}.k")
    return ad.softmax(scores, axis=-1)


def attention_block(x: Tensor, params: ParamSet, prefix: str,
                    return_weights: bool = False):
    """One encoder stack: self-attention + residual + norm, then FFN + residual + norm."""
    weights = attention_weights(x, params, prefix)
    v = dense(x, params, f"{prefix}.v")
    attended = dense(ad.matmul(weights, v), params, f"{prefix}.o")
    h = layer_norm(x + attended, params, f"{prefix}.ln1")
    ff = dense(dense(h, params, f"{prefix}.ff1", "relu"), params, f"{prefix}.ff2")
    out = layer_norm(h + ff, params, f"{prefix}.ln2")
    if return_weights:
        return out, weights
    return out
