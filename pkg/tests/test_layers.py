import numpy as np
import pytest

from hashlab.errors import ConfigError, DomainError, NumericError, ShapeError
from hashlab.nn import (
    LayerSpec,
    NetworkSpec,
    backward,
    forward,
    infer_shapes,
    init_params,
    layer_param_shapes,
    piecewise_threshold,
    sigmoid_beta,
)

from .oracles import avgpool_naive, conv2d_naive, fd_wrt_entry, maxpool_naive, rel_err


def test_layer_spec_validation():
    with pytest.raises(ConfigError):
        LayerSpec("nope")
    with pytest.raises(ConfigError):
        LayerSpec("conv", out_channels=4)  # no kernel
    with pytest.raises(ConfigError):
        LayerSpec("conv", out_channels=0, kernel=3)
    with pytest.raises(ConfigError):
        LayerSpec("maxpool", kernel=2, stride=2, pad=2)  # pad must stay < kernel
    with pytest.raises(ConfigError):
        LayerSpec("conv", out_channels=4, kernel=3, rounding="sideways")
    # aliases resolve to the canonical kinds
    assert LayerSpec("fc", out_features=5).kind == "fully-connected"
    assert LayerSpec("threshold").kind == "piecewise-threshold"
    # rounding defaults: floor for conv, ceil for pooling
    assert LayerSpec("conv", out_channels=4, kernel=3).rounding == "floor"
    assert LayerSpec("maxpool", kernel=3, stride=2).rounding == "ceil"


def test_network_spec_validation():
    with pytest.raises(ConfigError):
        NetworkSpec((3, 8), [LayerSpec("relu")])  # 2d input extent
    with pytest.raises(ConfigError):
        NetworkSpec((3, 8, 8), [])


def test_infer_shapes_published_chain():
    # the 224 recipe: extents 54/54/27/27/27/13/13/13/6/6/6/1
    layers = [
        LayerSpec("conv", out_channels=96, kernel=11, stride=4),
        LayerSpec("relu"),
        LayerSpec("conv", out_channels=96, kernel=1),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("conv", out_channels=256, kernel=5, stride=1, pad=2),
        LayerSpec("relu"),
        LayerSpec("conv", out_channels=256, kernel=1),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("conv", out_channels=384, kernel=3, pad=1),
        LayerSpec("relu"),
        LayerSpec("conv", out_channels=384, kernel=1),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("conv", out_channels=1024, kernel=3, pad=1),
        LayerSpec("relu"),
        LayerSpec("conv", out_channels=600, kernel=1),
        LayerSpec("relu"),
        LayerSpec("avgpool", kernel=6, stride=1),
    ]
    net = NetworkSpec((3, 224, 224), layers)
    extents = [s[1] for s in infer_shapes(net) if len(s) == 3]
    assert extents == [54, 54, 54, 54, 27, 27, 27, 27, 27, 13, 13, 13, 13, 13, 6, 6, 6, 6, 6, 1]
    assert net.output_shape == (600, 1, 1)


def test_infer_shapes_errors():
    net = NetworkSpec((3, 4, 4), [LayerSpec("conv", out_channels=2, kernel=7)])
    with pytest.raises(ShapeError):
        infer_shapes(net)
    # ceil rounding cannot leave the last pooling window outside the input:
    # extent 3, k=2, stride 3 -> out 2, but window 2 would start at row 3
    net = NetworkSpec((1, 3, 3), [LayerSpec("maxpool", kernel=2, stride=3, rounding="ceil")])
    with pytest.raises(ShapeError):
        infer_shapes(net)


def test_param_shapes():
    net = NetworkSpec(
        (3, 8, 8),
        [
            LayerSpec("conv", out_channels=4, kernel=3, pad=1),
            LayerSpec("relu"),
            LayerSpec("fully-connected", out_features=10),
            LayerSpec("fc", out_features=6, bias=False),
        ],
    )
    shapes = layer_param_shapes(net)
    assert shapes == {
        "0.w": (4, 3, 3, 3),
        "0.b": (4,),
        "2.w": (10, 4 * 8 * 8),
        "2.b": (10,),
        "3.w": (6, 10),
    }


def test_sigmoid_beta_values():
    assert sigmoid_beta(0.0) == pytest.approx(0.5)
    assert sigmoid_beta(np.array([800.0])) == pytest.approx(1.0)  # no overflow
    assert sigmoid_beta(np.array([-800.0])) == pytest.approx(0.0)
    # beta sharpens the slope at the origin: derivative is beta/4
    h = 1e-6
    slope = (sigmoid_beta(h, 3.0) - sigmoid_beta(-h, 3.0)) / (2 * h)
    assert slope == pytest.approx(0.75, rel=1e-6)


def test_piecewise_threshold_regions():
    eps = 0.1
    s = np.array([0.0, 0.3, 0.4, 0.45, 0.5, 0.6, 0.61, 0.95, 1.0])
    got = piecewise_threshold(s, eps)
    want = np.array([0.0, 0.0, 0.4, 0.45, 0.5, 0.6, 1.0, 1.0, 1.0])
    assert np.array_equal(got, want)
    # band edges belong to the identity region
    assert piecewise_threshold(np.array([0.5 - eps]), eps)[0] == 0.5 - eps
    assert piecewise_threshold(np.array([0.5 + eps]), eps)[0] == 0.5 + eps
    # eps = 0.5 is the identity on all of [0, 1]
    grid = np.linspace(0, 1, 21)
    assert np.array_equal(piecewise_threshold(grid, 0.5), grid)
    # monotone and idempotent
    vals = piecewise_threshold(grid, 0.2)
    assert np.all(np.diff(vals) >= 0)
    assert np.array_equal(piecewise_threshold(vals, 0.2), vals)
    with pytest.raises(DomainError):
        piecewise_threshold(np.array([1.2]), 0.1)
    with pytest.raises(DomainError):
        piecewise_threshold(np.array([-0.1]), 0.1)


def _single_layer_net(shape, ly):
    return NetworkSpec(shape, [ly])


def test_conv_forward_matches_naive():
    rng = np.random.default_rng(0)
    for _ in range(8):
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 4))
        h = int(rng.integers(4, 9))
        f = int(rng.integers(1, 5))
        k = int(rng.integers(1, min(4, h) + 1))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, k))
        rounding = "ceil" if rng.integers(2) else "floor"
        x = rng.standard_normal((n, c, h, h))
        ly = LayerSpec("conv", out_channels=f, kernel=k, stride=stride, pad=pad, rounding=rounding)
        net = _single_layer_net((c, h, h), ly)
        params = init_params(layer_param_shapes(net), seed=1)
        y, _ = forward(net, params, x)
        want = conv2d_naive(x, params["0.w"], params["0.b"], stride, pad, rounding)
        assert np.allclose(y, want, atol=1e-12)


def test_maxpool_matches_naive_and_tie_break():
    rng = np.random.default_rng(1)
    for _ in range(8):
        h = int(rng.integers(4, 10))
        k = int(rng.integers(2, 4))
        stride = int(rng.integers(1, 4))
        pad = int(rng.integers(0, k))
        x = rng.standard_normal((2, 3, h, h))
        ly = LayerSpec("maxpool", kernel=k, stride=stride, pad=pad)
        net = _single_layer_net((3, h, h), ly)
        try:
            infer_shapes(net)
        except ShapeError:
            continue
        y, _ = forward(net, {}, x)
        want, _ = maxpool_naive(x, k, stride, pad)
        assert np.array_equal(y, want)

    # exact ties: gradient must land on the first maximum in row-major order
    x = np.zeros((1, 1, 2, 2))
    ly = LayerSpec("maxpool", kernel=2, stride=2)
    net = _single_layer_net((1, 2, 2), ly)
    y, caches = forward(net, {}, x)
    gx, _ = backward(net, {}, caches, np.ones_like(y))
    assert gx[0, 0, 0, 0] == 1.0 and gx.sum() == 1.0


def test_avgpool_matches_naive():
    rng = np.random.default_rng(2)
    for _ in range(8):
        h = int(rng.integers(4, 10))
        k = int(rng.integers(2, 4))
        stride = int(rng.integers(1, 4))
        pad = int(rng.integers(0, k))
        x = rng.standard_normal((2, 3, h, h))
        ly = LayerSpec("avgpool", kernel=k, stride=stride, pad=pad)
        net = _single_layer_net((3, h, h), ly)
        try:
            infer_shapes(net)
        except ShapeError:
            continue
        y, _ = forward(net, {}, x)
        want = avgpool_naive(x, k, stride, pad)
        assert np.allclose(y, want, atol=1e-12)


def test_forward_shape_and_threshold_errors():
    net = _single_layer_net((3, 4, 4), LayerSpec("relu"))
    with pytest.raises(ShapeError):
        forward(net, {}, np.zeros((1, 3, 5, 5)))
    net = _single_layer_net((4,), LayerSpec("piecewise-threshold"))
    with pytest.raises(ConfigError):
        forward(net, {}, np.full((2, 4), 0.5))  # needs eps
    y, _ = forward(net, {}, np.full((2, 4), 0.5), eps=0.1)
    assert np.all(y == 0.5)


def test_forward_non_finite_detection():
    net = _single_layer_net((2,), LayerSpec("fc", out_features=2))
    params = init_params(layer_param_shapes(net), seed=0)
    with pytest.raises(NumericError):
        forward(net, params, np.array([[np.inf, 1.0]]))
    # opting out returns the values as-is
    y, _ = forward(net, params, np.array([[np.inf, 1.0]]), check_finite=False)
    assert not np.all(np.isfinite(y))


def _loss_through(net, params, x, proj, eps=None):
    y, caches = forward(net, params, x, eps=eps)
    return float((y * proj).sum()), caches, y


def _check_grads(net, params, x, eps=None, tol=1e-6, rng=None):
    """Backprop vs central differences on a handful of coordinates."""
    rng = rng or np.random.default_rng(0)
    y, caches = forward(net, params, x, eps=eps)
    proj = rng.standard_normal(y.shape)
    gx, grads = backward(net, params, caches, proj)

    def loss_x(xv):
        yv, _ = forward(net, params, xv, eps=eps)
        return float((yv * proj).sum())

    flat = x.reshape(-1)
    for j in rng.choice(flat.size, size=min(5, flat.size), replace=False):
        idx = np.unravel_index(j, x.shape)
        want = fd_wrt_entry(loss_x, x, idx)
        assert rel_err(gx[idx], want) <= tol, (idx, gx[idx], want)

    for name in grads:
        arr = params[name]

        def loss_p(pv, name=name):
            saved = params.params[name]
            params.params[name] = pv
            try:
                yv, _ = forward(net, params, x, eps=eps)
            finally:
                params.params[name] = saved
            return float((yv * proj).sum())

        fl = arr.reshape(-1)
        for j in rng.choice(fl.size, size=min(4, fl.size), replace=False):
            idx = np.unravel_index(j, arr.shape)
            want = fd_wrt_entry(loss_p, arr, idx)
            assert rel_err(grads[name][idx], want) <= tol, (name, idx)


def test_backward_single_layers_fd():
    rng = np.random.default_rng(3)
    cases = [
        ((3, 6, 6), LayerSpec("conv", out_channels=4, kernel=3, stride=2, pad=1)),
        ((3, 5, 5), LayerSpec("conv", out_channels=2, kernel=2, rounding="ceil", bias=False)),
        ((2, 6, 6), LayerSpec("avgpool", kernel=3, stride=2, pad=1)),
        ((12,), LayerSpec("fully-connected", out_features=5)),
        ((4, 3, 3), LayerSpec("fc", out_features=7, bias=False)),
        ((6,), LayerSpec("sigmoid", beta=2.5)),
    ]
    for shape, ly in cases:
        net = _single_layer_net(shape, ly)
        params = init_params(layer_param_shapes(net), seed=4)
        x = rng.standard_normal((2,) + shape)
        _check_grads(net, params, x, rng=rng)


def test_backward_maxpool_fd_away_from_ties():
    rng = np.random.default_rng(5)
    net = _single_layer_net((2, 6, 6), LayerSpec("maxpool", kernel=2, stride=2))
    # distinct values guarantee we stay away from argmax switching points
    x = rng.permutation(np.arange(2 * 2 * 6 * 6, dtype=np.float64)).reshape(2, 2, 6, 6)
    _check_grads(net, {}, x, rng=rng)


def test_backward_stack_fd():
    rng = np.random.default_rng(6)
    net = NetworkSpec(
        (2, 6, 6),
        [
            LayerSpec("conv", out_channels=3, kernel=3, pad=1),
            LayerSpec("relu"),
            LayerSpec("maxpool", kernel=2, stride=2),
            LayerSpec("conv", out_channels=8, kernel=1),
            LayerSpec("relu"),
            LayerSpec("avgpool", kernel=3, stride=3),
            LayerSpec("sigmoid"),
        ],
    )
    params = init_params(layer_param_shapes(net), seed=7)
    x = rng.standard_normal((3, 2, 6, 6)) + 0.1  # nudge away from relu kinks
    _check_grads(net, params, x, tol=1e-5, rng=rng)
