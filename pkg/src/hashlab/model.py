"""A model couples a feature network with a hashing head.

The network's (flattened) output length must equal the head's input width;
everything downstream treats "run the model" as: network forward, flatten,
head forward, yielding one approximate code row per input item.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .head import head_backward, head_forward
from .nn.layers import backward as net_backward, forward as net_forward, infer_shapes, layer_param_shapes
from .nn.params import init_params


@dataclass(frozen=True)
class ModelSpec:
    net: NetworkSpec
    head: HashHeadSpec

    def __post_init__(self):
        out = infer_shapes(self.net)[-1]
        d = int(np.prod(out))
        if d != self.head.in_features:
            raise ShapeError(f"network emits {d} features but head expects {self.head.in_features}")


def model_param_shapes(model):
    shapes = layer_param_shapes(model.net)
    shapes["head.w"] = model.head.weight_shape
    return shapes


def init_model_params(model, seed, dtype=np.float64):
    fan_in = {}
    if model.head.mode == "slice":
        # flat weight vector: fan-in is one slice, not the whole feature width
        fan_in["head.w"] = model.head.in_features // model.head.bits
    return init_params(model_param_shapes(model), seed, dtype=dtype, fan_in=fan_in)


def model_forward(model, params, x, eps=None, check_finite=True):
    """Inputs (n, *input_shape) -> (approximate codes (n, q), cache)."""
    feats, net_cache = net_forward(model.net, params, x, eps=eps, check_finite=check_finite)
    shape = feats.shape
    flat = feats.reshape(shape[0], -1)
    codes, head_cache = head_forward(model.head, params, flat, eps=eps)
    return codes, (net_cache, head_cache, shape)


def model_backward(model, params, cache, g_codes):
    """Code gradients -> (input gradient, {name: parameter gradient})."""
    net_cache, head_cache, feat_shape = cache
    gf, gw = head_backward(model.head, params, head_cache, g_codes)
    gx, grads = net_backward(model.net, params, net_cache, gf.reshape(feat_shape))
    grads["head.w"] = gw
    return gx, grads


def encode(model, params, items, eps, batch=256):
    """Approximate codes for a whole dataset, processed in mini-batches."""
    chunks = []
    for lo in range(0, items.shape[0], batch):
        codes, _ = model_forward(model, params, items[lo : lo + batch], eps=eps)
        chunks.append(codes)
    return np.concatenate(chunks, axis=0)
