import numpy as np
import pytest

from hashlab.errors import ConfigError
from hashlab.nn import dump_network, infer_shapes, load_network, parse_network

MINI = """
[network]
input = 3x8x8

[layer.1]
kind = conv
channels = 4
kernel = 3
pad = 1

[layer.2]
kind = relu

[layer.10]
kind = avgpool
kernel = 8
stride = 8
"""


def test_parse_orders_sections_numerically():
    net = parse_network(MINI)
    # layer.10 sorts after layer.2 numerically, not lexically
    assert [ly.kind for ly in net.layers] == ["conv", "relu", "avgpool"]
    assert net.output_shape == (4, 1, 1)


def test_bits_expressions():
    text = MINI.replace("channels = 4", "channels = 5*bits")
    net = parse_network(text, bits=12)
    assert net.layers[0].out_channels == 60
    with pytest.raises(ConfigError):
        parse_network(text)  # bits required but absent


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_network("[network]\ninput = 3x8x8\n")  # no layers
    with pytest.raises(ConfigError):
        parse_network("[layer.1]\nkind = relu\n")  # no [network]
    with pytest.raises(ConfigError):
        parse_network(MINI + "\n[weird]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_network(MINI.replace("kind = relu", "kind = relu\nfrobnicate = 7"))
    with pytest.raises(ConfigError):
        parse_network(MINI.replace("channels = 4", "channels = import_os"))
    with pytest.raises(ConfigError):
        parse_network(MINI.replace("channels = 4", "channels = __import__('os')"))


def test_dump_roundtrip():
    net = parse_network(MINI)
    again = parse_network(dump_network(net))
    assert again == net


def test_shipped_reference_network():
    net = load_network("configs/reference-224.ini", bits=48)
    extents = [s[1] for s in infer_shapes(net) if len(s) == 3]
    assert extents[-1] == 1
    assert net.output_shape == (50 * 48, 1, 1)
    # the documented extent chain
    conv_pool_extents = []
    for ly, s in zip(net.layers, infer_shapes(net)):
        if ly.kind in ("conv", "maxpool", "avgpool"):
            conv_pool_extents.append(s[1])
    assert conv_pool_extents == [54, 54, 27, 27, 27, 13, 13, 13, 6, 6, 6, 1]


def test_shipped_toy_network():
    net = load_network("configs/toy-8x8.ini", bits=12)
    assert net.output_shape == (60, 1, 1)
    assert int(np.prod(net.output_shape)) == 60
