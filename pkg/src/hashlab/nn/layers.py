"""Layer specs, shape inference, and forward/backward over the kernel backend.

A network is a flat sequence of layers applied to an ``(n, c, h, w)`` batch
(or ``(n, f)`` once a fully-connected layer has collapsed the spatial axes).
Convolution extents round down by default, pooling extents round up; both can
be overridden per layer.  Padding is geometric: convolution zero-pads, pooling
clips windows to the valid region (average pooling still divides by the full
window area).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import ConfigError, DomainError, NumericError, ShapeError

KINDS = (
    "conv",
    "maxpool",
    "avgpool",
    "fully-connected",
    "relu",
    "sigmoid",
    "piecewise-threshold",
)

_ALIASES = {"fc": "fully-connected", "threshold": "piecewise-threshold"}

_WINDOWED = ("conv", "maxpool", "avgpool")


@dataclass(frozen=True)
class LayerSpec:
    """One layer. Which fields apply depends on ``kind``."""

    kind: str
    out_channels: int = 0  # conv
    kernel: int = 0  # conv / pooling
    stride: int = 1
    pad: int = 0
    rounding: str = ""  # extent rounding: "floor" | "ceil"
    out_features: int = 0  # fully-connected
    bias: bool = True  # conv / fully-connected
    beta: float = 1.0  # sigmoid steepness

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if not self.rounding:
            # conv truncates partial windows, pooling keeps them
            object.__setattr__(self, "rounding", "ceil" if kind in ("maxpool", "avgpool") else "floor")
        if self.rounding not in ("floor", "ceil"):
            raise ConfigError(f"rounding must be floor or ceil, got {self.rounding!r}")
        if kind in _WINDOWED:
            if self.kernel < 1:
                raise ConfigError(f"{kind} layer needs kernel >= 1")
            if self.stride < 1 or self.pad < 0:
                raise ConfigError(f"bad stride/pad for {kind} layer")
            if kind != "conv" and self.pad >= self.kernel:
                raise ConfigError("pooling pad must be smaller than the window")
        if kind == "conv" and self.out_channels < 1:
            raise ConfigError("conv layer needs out_channels >= 1")
        if kind == "fully-connected" and self.out_features < 1:
            raise ConfigError("fully-connected layer needs out_features >= 1")
        if kind == "sigmoid" and self.beta <= 0:
            raise ConfigError("sigmoid beta must be positive")


@dataclass(frozen=True)
class NetworkSpec:
    """An input shape plus an ordered tuple of layers."""

    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) not in (1, 3):
            raise ConfigError("input shape must be (features,) or (channels, height, width)")
        if any(d < 1 for d in self.input_shape):
            raise ConfigError("input dimensions must be positive")
        if not self.layers:
            raise ConfigError("network needs at least one layer")

    @property
    def output_shape(self):
        return infer_shapes(self)[-1]


def _out_extent(size, kernel, stride, pad, rounding):
    span = size + 2 * pad - kernel
    if span < 0:
        raise ShapeError(f"window {kernel} exceeds padded extent {size + 2 * pad}")
    if rounding == "ceil":
        return -(-span // stride) + 1
    return span // stride + 1


def infer_shapes(net):
    """Per-layer output shapes; raises ShapeError on mismatches."""
    shapes = []
    shape = net.input_shape
    for pos, ly in enumerate(net.layers):
        if ly.kind in _WINDOWED:
            if len(shape) != 3:
                raise ShapeError(f"layer {pos}: {ly.kind} needs a (c, h, w) input, got {shape}")
            c, h, w = shape
            oh = _out_extent(h, ly.kernel, ly.stride, ly.pad, ly.rounding)
            ow = _out_extent(w, ly.kernel, ly.stride, ly.pad, ly.rounding)
            if ly.kind != "conv":
                # with ceil rounding the last window must still touch real input
                if (oh - 1) * ly.stride - ly.pad >= h or (ow - 1) * ly.stride - ly.pad >= w:
                    raise ShapeError(f"layer {pos}: pooling window falls entirely in padding")
                shape = (c, oh, ow)
            else:
                shape = (ly.out_channels, oh, ow)
        elif ly.kind == "fully-connected":
            shape = (ly.out_features,)
        else:
            pass  # elementwise
        shapes.append(shape)
    return shapes


def layer_param_shapes(net):
    """Mapping of parameter name -> shape for every learnable layer."""
    shapes = {}
    prev = net.input_shape
    for pos, (ly, out) in enumerate(zip(net.layers, infer_shapes(net))):
        if ly.kind == "conv":
            shapes[f"{pos}.w"] = (ly.out_channels, prev[0], ly.kernel, ly.kernel)
            if ly.bias:
                shapes[f"{pos}.b"] = (ly.out_channels,)
        elif ly.kind == "fully-connected":
            shapes[f"{pos}.w"] = (ly.out_features, int(np.prod(prev)))
            if ly.bias:
                shapes[f"{pos}.b"] = (ly.out_features,)
        prev = out
    return shapes


def sigmoid_beta(c, beta=1.0):
    """1 / (1 + exp(-beta * c)), computed without overflow."""
    z = np.multiply(c, beta)
    a = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + a), a / (1.0 + a))


def piecewise_threshold(s, eps):
    """Ramp toward binary: 0 below 0.5-eps, identity inside the band, 1 above."""
    s = np.asarray(s)
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise DomainError("threshold input must lie in [0, 1]")
    lo, hi = 0.5 - eps, 0.5 + eps
    return np.where(s < lo, 0.0, np.where(s > hi, 1.0, s)).astype(s.dtype, copy=False)


def _conv_pad(x, ly, oh, ow):
    h, w = x.shape[2], x.shape[3]
    # ceil rounding implies extra zeros on the bottom/right so windows fit
    eh = max(0, (oh - 1) * ly.stride + ly.kernel - (h + 2 * ly.pad))
    ew = max(0, (ow - 1) * ly.stride + ly.kernel - (w + 2 * ly.pad))
    if ly.pad or eh or ew:
        x = np.pad(x, ((0, 0), (0, 0), (ly.pad, ly.pad + eh), (ly.pad, ly.pad + ew)))
    return x


def forward(net, params, x, eps=None, check_finite=True):
    """Run the network; returns (output, caches) with caches fed to backward()."""
    x = np.asarray(x)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} != network input {net.input_shape}")
    shapes = infer_shapes(net)
    caches = []
    for pos, ly in enumerate(net.layers):
        if ly.kind == "conv":
            _, oh, ow = shapes[pos]
            xp = _conv_pad(x, ly, oh, ow)
            w = params[f"{pos}.w"]
            b = params[f"{pos}.b"] if ly.bias else np.zeros(ly.out_channels, dtype=w.dtype)
            y = _kernels.conv2d_forward(xp, w, b, ly.stride)
            caches.append((xp, x.shape))
            x = y
        elif ly.kind == "maxpool":
            _, oh, ow = shapes[pos]
            h, w_ = x.shape[2], x.shape[3]
            y, arg = _kernels.maxpool_forward(x, ly.kernel, ly.stride, ly.pad, oh, ow)
            caches.append((arg, h, w_))
            x = y
        elif ly.kind == "avgpool":
            _, oh, ow = shapes[pos]
            caches.append((x.shape[2], x.shape[3]))
            x = _kernels.avgpool_forward(x, ly.kernel, ly.stride, ly.pad, oh, ow)
        elif ly.kind == "fully-connected":
            flat = x.reshape(x.shape[0], -1)
            w = params[f"{pos}.w"]
            y = flat @ w.T
            if ly.bias:
                y = y + params[f"{pos}.b"]
            caches.append((flat, x.shape))
            x = y
        elif ly.kind == "relu":
            caches.append(x > 0)
            x = np.maximum(x, 0)
        elif ly.kind == "sigmoid":
            x = sigmoid_beta(x, ly.beta)
            caches.append(x)
        else:  # piecewise-threshold
            if eps is None:
                raise ConfigError("network has a piecewise-threshold layer but no eps was given")
            lo, hi = 0.5 - eps, 0.5 + eps
            caches.append((x >= lo) & (x <= hi))
            x = piecewise_threshold(x, eps)
    if check_finite and not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in network output")
    return x, caches


def backward(net, params, caches, gy):
    """Backpropagate gy through cached activations; returns (gx, grads)."""
    grads = {}
    g = np.asarray(gy)
    for pos in range(len(net.layers) - 1, -1, -1):
        ly = net.layers[pos]
        cache = caches[pos]
        if ly.kind == "conv":
            xp, xshape = cache
            gxp, gw, gb = _kernels.conv2d_backward(xp, params[f"{pos}.w"], g, ly.stride)
            grads[f"{pos}.w"] = gw
            if ly.bias:
                grads[f"{pos}.b"] = gb
            p = ly.pad
            g = gxp[:, :, p : p + xshape[2], p : p + xshape[3]]
        elif ly.kind == "maxpool":
            arg, h, w = cache
            g = _kernels.maxpool_backward(g, arg, h, w)
        elif ly.kind == "avgpool":
            h, w = cache
            g = _kernels.avgpool_backward(g, ly.kernel, ly.stride, ly.pad, h, w)
        elif ly.kind == "fully-connected":
            flat, xshape = cache
            grads[f"{pos}.w"] = g.T @ flat
            if ly.bias:
                grads[f"{pos}.b"] = g.sum(axis=0)
            g = (g @ params[f"{pos}.w"]).reshape(xshape)
        elif ly.kind == "relu":
            g = g * cache
        elif ly.kind == "sigmoid":
            y = cache
            g = g * (ly.beta * y * (1.0 - y))
        else:  # piecewise-threshold: subgradient 1 inside the band
            g = g * cache
    return g, grads
