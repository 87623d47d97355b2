"""Hashing head: turn a feature vector into q approximately-binary outputs.

Two variants share the interface.  The slice head partitions the d input
features into q contiguous slices (the first d mod q slices get the extra
feature) and collapses each slice with its own bias-free dot product; the
matrix head is a single bias-free q x d projection.  Either way the raw
outputs pass through a steep sigmoid and, optionally, a band threshold that
pins values near 0/1 while staying identity inside [0.5-eps, 0.5+eps].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .nn.layers import piecewise_threshold, sigmoid_beta

MODES = ("slice", "matrix")

_MODE_ALIASES = {"divide": "slice", "fc": "matrix", "fully-connected": "matrix"}


@dataclass(frozen=True)
class HashHeadSpec:
    bits: int
    in_features: int
    mode: str = "slice"
    beta: float = 1.0
    threshold: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", _MODE_ALIASES.get(self.mode, self.mode))
        if self.mode not in MODES:
            raise ConfigError(f"unknown head mode {self.mode!r}")
        if self.bits < 1:
            raise ConfigError("head needs bits >= 1")
        if self.beta <= 0:
            raise ConfigError("head beta must be positive")
        if self.mode == "slice" and self.in_features < self.bits:
            raise ConfigError(f"cannot slice {self.in_features} features into {self.bits} groups")

    @property
    def weight_shape(self):
        if self.mode == "slice":
            return (self.in_features,)
        return (self.bits, self.in_features)


def partition_slices(d, q):
    """(start, length) per slice; the first d % q slices are one longer."""
    if q < 1 or d < q:
        raise DomainError(f"cannot split {d} features into {q} slices")
    base, extra = divmod(d, q)
    spans = []
    start = 0
    for i in range(q):
        length = base + (1 if i < extra else 0)
        spans.append((start, length))
        start += length
    return spans


def head_forward(head, params, feats, eps=None):
    """Features (n, d) -> outputs in [0, 1]^(n, q) plus a backward cache."""
    feats = np.asarray(feats)
    if feats.ndim != 2 or feats.shape[1] != head.in_features:
        raise ShapeError(f"head expects (n, {head.in_features}) features, got {feats.shape}")
    w = params["head.w"]
    if head.mode == "slice":
        spans = partition_slices(head.in_features, head.bits)
        starts = np.array([s for s, _ in spans])
        raw = np.add.reduceat(feats * w[None, :], starts, axis=1)
    else:
        raw = feats @ w.T
    s = sigmoid_beta(raw, head.beta)
    if head.threshold:
        if eps is None:
            raise ConfigError("head has thresholding enabled but no eps was given")
        band = (s >= 0.5 - eps) & (s <= 0.5 + eps)
        out = piecewise_threshold(s, eps)
    else:
        band = None
        out = s
    return out, (feats, s, band)


def head_backward(head, params, cache, gy):
    """Gradient of head outputs back to (features grad, weight grad)."""
    feats, s, band = cache
    g = gy * band if band is not None else np.asarray(gy)
    g = g * (head.beta * s * (1.0 - s))
    w = params["head.w"]
    if head.mode == "slice":
        spans = partition_slices(head.in_features, head.bits)
        lengths = [ln for _, ln in spans]
        wide = np.repeat(g, lengths, axis=1)
        gw = (feats * wide).sum(axis=0)
        gf = w[None, :] * wide
    else:
        gw = g.T @ feats
        gf = g @ w
    return gf, gw


def quantize(values):
    """Binarise head outputs: bit 1 iff the value exceeds 0.5 (a tie is 0)."""
    values = np.asarray(values)
    return (values > 0.5).astype(np.uint8)
