"""INI-format network descriptions.

A ``[network]`` section gives the input extent (``input = 3x224x224``), and
ordered ``[layer.N]`` sections describe the stack.  Integer fields may be
arithmetic in the single variable ``bits`` (e.g. ``channels = 50*bits``) so
one file can describe a family of nets over code lengths; such files need a
concrete ``bits`` at load time.
"""

from __future__ import annotations

import ast
import configparser
import io

from ..errors import ConfigError
from .layers import LayerSpec, NetworkSpec

_INT_FIELDS = {
    "channels": "out_channels",
    "features": "out_features",
    "kernel": "kernel",
    "stride": "stride",
    "pad": "pad",
}

_OPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b, ast.Mult: lambda a, b: a * b, ast.FloorDiv: lambda a, b: a // b}


def _eval_int(text, bits):
    """Evaluate an integer expression over the variable ``bits``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"bad integer expression {text!r}") from e

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name) and node.id == "bits":
            if bits is None:
                raise ConfigError(f"expression {text!r} needs a concrete code length")
            return int(bits)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ConfigError(f"unsupported construct in integer expression {text!r}")

    return ev(tree)


def _parse_input(text):
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError as e:
        raise ConfigError(f"bad input extent {text!r}") from e
    return dims


def parse_network(text, bits=None):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"bad network config: {e}") from e
    if "network" not in cp:
        raise ConfigError("network config needs a [network] section")
    if "input" not in cp["network"]:
        raise ConfigError("[network] section needs an input extent")
    input_shape = _parse_input(cp["network"]["input"])

    indexed = []
    for section in cp.sections():
        if section == "network":
            continue
        if not section.startswith("layer."):
            raise ConfigError(f"unexpected section [{section}]")
        try:
            idx = int(section.split(".", 1)[1])
        except ValueError as e:
            raise ConfigError(f"bad layer section name [{section}]") from e
        indexed.append((idx, section))
    if not indexed:
        raise ConfigError("network config has no [layer.N] sections")
    indexed.sort()

    layers = []
    for _, section in indexed:
        opts = dict(cp[section])
        if "kind" not in opts:
            raise ConfigError(f"[{section}] is missing kind")
        kw = {"kind": opts.pop("kind")}
        for field, attr in _INT_FIELDS.items():
            if field in opts:
                kw[attr] = _eval_int(opts.pop(field), bits)
        if "rounding" in opts:
            kw["rounding"] = opts.pop("rounding")
        if "bias" in opts:
            raw = opts.pop("bias").lower()
            if raw not in ("true", "false", "yes", "no", "1", "0"):
                raise ConfigError(f"[{section}] bias must be boolean, got {raw!r}")
            kw["bias"] = raw in ("true", "yes", "1")
        if "beta" in opts:
            try:
                kw["beta"] = float(opts.pop("beta"))
            except ValueError as e:
                raise ConfigError(f"[{section}] beta must be a number") from e
        if opts:
            raise ConfigError(f"[{section}] has unknown fields: {', '.join(sorted(opts))}")
        layers.append(LayerSpec(**kw))
    return NetworkSpec(input_shape, layers)


def load_network(path, bits=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read network config {path}: {e}") from e
    return parse_network(text, bits)


def dump_network(net):
    """Render a NetworkSpec back to config text (all extents concrete)."""
    out = io.StringIO()
    out.write("[network]\n")
    out.write("input = " + "x".join(str(d) for d in net.input_shape) + "\n")
    for pos, ly in enumerate(net.layers, start=1):
        out.write(f"\n[layer.{pos}]\n")
        out.write(f"kind = {ly.kind}\n")
        if ly.kind == "conv":
            out.write(f"channels = {ly.out_channels}\n")
        if ly.kind in ("conv", "maxpool", "avgpool"):
            out.write(f"kernel = {ly.kernel}\n")
            out.write(f"stride = {ly.stride}\n")
            if ly.pad:
                out.write(f"pad = {ly.pad}\n")
            out.write(f"rounding = {ly.rounding}\n")
        if ly.kind == "fully-connected":
            out.write(f"features = {ly.out_features}\n")
        if ly.kind in ("conv", "fully-connected") and not ly.bias:
            out.write("bias = false\n")
        if ly.kind == "sigmoid" and ly.beta != 1.0:
            out.write(f"beta = {ly.beta}\n")
    return out.getvalue()
