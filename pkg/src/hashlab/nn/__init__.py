"""Network building blocks: layer specs, parameter stores, configs."""

from .layers import (
    LayerSpec,
    NetworkSpec,
    backward,
    forward,
    infer_shapes,
    layer_param_shapes,
    piecewise_threshold,
    sigmoid_beta,
)
from .netconfig import dump_network, load_network, parse_network
from .params import ParamStore, init_params, load_store, read_store, save_store, write_store

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "ParamStore",
    "backward",
    "dump_network",
    "forward",
    "infer_shapes",
    "init_params",
    "layer_param_shapes",
    "load_network",
    "load_store",
    "parse_network",
    "piecewise_threshold",
    "read_store",
    "save_store",
    "sigmoid_beta",
    "write_store",
]
