"""Mini-batch SGD with momentum over the network + head under the ranking loss.

One training step runs the three triplet branches forward, forms per-triplet
subgradients of the relaxed hinge, backpropagates each branch, and merges the
parameter gradients according to the sharing layout before a single optimizer
update per store:

* ``shared``            — one store serves anchor, positive, and negative;
  the three branch gradients are summed into it.
* ``query-independent`` — the anchor (query side) has its own store, the
  positive/negative (database side) share a second one.

The band half-width eps of the head threshold follows a step schedule and the
triplet batch for iteration i is drawn from a seed stream keyed by (seed, i),
so a run resumed from a checkpoint replays the exact uninterrupted batches.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, FormatError, InfeasibleError, NumericError
from .head import HashHeadSpec
from .model import ModelSpec, model_backward, model_forward
from .nn.netconfig import dump_network, parse_network
from .nn.params import read_store, write_store
from .triplet import relaxed_loss_batch, subgradients_batch

SHARING_MODES = ("shared", "query-independent")

_MAGIC = b"HLCK"
_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    lr_decay: float = 0.1
    lr_step: int = 10000
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_triplets: int = 21  # about 64 images' worth of triplets
    batch_images: int = 0  # alternative batch spec; 0 = use batch_triplets
    margin: float = 1.0
    eps_start: float = 0.5
    eps_decay: float = 0.8
    eps_step: int = 20000
    iterations: int = 2000
    seed: int = 0
    sharing: str = "shared"

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("train.momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay must be non-negative")
        if not 0 < self.eps_start <= 0.5:
            raise ConfigError("train.eps_start must lie in (0, 0.5]")
        if not 0 < self.eps_decay <= 1:
            raise ConfigError("train.eps_decay must lie in (0, 1]")
        if self.eps_step < 1 or self.lr_step < 1:
            raise ConfigError("train.eps_step and train.lr_step must be >= 1")
        if self.iterations < 0:
            raise ConfigError("train.iterations must be >= 0")
        if self.sharing not in SHARING_MODES:
            raise ConfigError(f"train.sharing must be one of {SHARING_MODES}")
        if self.batch_size() < 1:
            raise ConfigError("batch size must be at least one triplet")

    def batch_size(self):
        if self.batch_images:
            return max(1, self.batch_images // 3)
        return self.batch_triplets


@dataclass
class TrainState:
    iteration: int
    stores: dict  # {"shared": store} or {"query": store, "database": store}
    loss_sum: float = 0.0
    loss_count: int = 0

    @property
    def mean_loss(self):
        return self.loss_sum / self.loss_count if self.loss_count else float("nan")

    def store_for(self, role):
        """The ParamStore encoding a given side ("query" or "database")."""
        if "shared" in self.stores:
            return self.stores["shared"]
        return self.stores[role]


def epsilon_at(iteration, config):
    """Threshold band half-width after `iteration` steps."""
    return config.eps_start * config.eps_decay ** (iteration // config.eps_step)


def lr_at(iteration, config):
    return config.lr * config.lr_decay ** (iteration // config.lr_step)


def init_state(model, config, init_fn):
    """Fresh TrainState; ``init_fn(branch_index)`` builds one ParamStore."""
    if config.sharing == "shared":
        stores = {"shared": init_fn(0)}
    else:
        stores = {"query": init_fn(0), "database": init_fn(1)}
    return TrainState(iteration=0, stores=stores)


def sgd_momentum_step(store, grads, lr, momentum, weight_decay):
    """v <- mu*v - lr*(g + wd*w); w <- w + v, elementwise per array."""
    for name, w in store.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(w)
        v = store.momentum[name]
        v *= momentum
        v -= lr * (g + weight_decay * w)
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite update for parameter {name!r}")
        w += v


def _merge(into, grads):
    for name, g in grads.items():
        if name in into:
            into[name] = into[name] + g
        else:
            into[name] = g


def train_step(model, state, config, items, batch):
    """One optimizer step on a batch of Triplets; returns the pre-update loss."""
    if not batch:
        raise InfeasibleError("training step needs at least one triplet")
    eps = epsilon_at(state.iteration, config)
    lr = lr_at(state.iteration, config)
    xa = items[[t.anchor for t in batch]]
    xp = items[[t.positive for t in batch]]
    xn = items[[t.negative for t in batch]]

    if config.sharing == "shared":
        qstore = dstore = state.stores["shared"]
    else:
        qstore, dstore = state.stores["query"], state.stores["database"]

    ca, cache_a = model_forward(model, qstore, xa, eps=eps)
    cp, cache_p = model_forward(model, dstore, xp, eps=eps)
    cn, cache_n = model_forward(model, dstore, xn, eps=eps)

    values, _ = relaxed_loss_batch(ca, cp, cn, config.margin)
    loss = float(values.mean())
    ga, gp, gn = subgradients_batch(ca, cp, cn, config.margin)
    scale = 1.0 / len(batch)  # batch loss is the mean over triplets

    _, grads_a = model_backward(model, qstore, cache_a, ga * scale)
    _, grads_p = model_backward(model, dstore, cache_p, gp * scale)
    _, grads_n = model_backward(model, dstore, cache_n, gn * scale)

    if config.sharing == "shared":
        merged = {}
        _merge(merged, grads_a)
        _merge(merged, grads_p)
        _merge(merged, grads_n)
        sgd_momentum_step(qstore, merged, lr, config.momentum, config.weight_decay)
    else:
        merged = {}
        _merge(merged, grads_p)
        _merge(merged, grads_n)
        sgd_momentum_step(qstore, grads_a, lr, config.momentum, config.weight_decay)
        sgd_momentum_step(dstore, merged, lr, config.momentum, config.weight_decay)

    state.iteration += 1
    state.loss_sum += loss
    state.loss_count += 1
    return loss


def batch_rng(seed, iteration):
    """Generator for one iteration's triplet draw, independent of history."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, iteration)))


def train(model, state, config, items, sampler, log_fh=None, hook=None):
    """Run until config.iterations.  ``sampler(rng, count)`` returns a batch;
    ``hook(state, loss)`` fires after each step; resuming mid-run replays the
    same per-iteration batches because each draw reseeds from (seed, i)."""
    if log_fh is not None and state.iteration == 0:
        log_fh.write("iteration,loss,epsilon,learning_rate\n")
    while state.iteration < config.iterations:
        it = state.iteration
        batch = sampler(batch_rng(config.seed, it), config.batch_size())
        loss = train_step(model, state, config, items, batch)
        if log_fh is not None:
            log_fh.write(f"{it},{loss!r},{epsilon_at(it, config)!r},{lr_at(it, config)!r}\n")
        if hook is not None:
            hook(state, loss)
    return state


def _model_meta(model, config):
    head = model.head
    return {
        "format": "hashlab-checkpoint",
        "train": asdict(config),
        "head": {
            "bits": head.bits,
            "in_features": head.in_features,
            "mode": head.mode,
            "beta": head.beta,
            "threshold": head.threshold,
        },
        "network": dump_network(model.net),
    }


def checkpoint_save(state, model, config, path):
    """Atomic write of iteration counter, config, model recipe, and stores."""
    meta = json.dumps(_model_meta(model, config), sort_keys=True).encode("utf-8")
    blobs = []
    for name in sorted(state.stores):
        buf = io.BytesIO()
        write_store(buf, state.stores[name])
        blobs.append((name.encode("utf-8"), buf.getvalue()))
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQ", _VERSION, state.iteration))
            fh.write(struct.pack("<dQ", state.loss_sum, state.loss_count))
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(struct.pack("<I", len(blobs)))
            for name, blob in blobs:
                fh.write(struct.pack("<HQ", len(name), len(blob)))
                fh.write(name)
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated checkpoint")
    return buf


def checkpoint_load(path):
    """-> (TrainState, ModelSpec, TrainConfig)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise FormatError("not a checkpoint file")
        version, iteration = struct.unpack("<IQ", _read_exact(fh, 12))
        if version != _VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        loss_sum, loss_count = struct.unpack("<dQ", _read_exact(fh, 16))
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        except ValueError as e:
            raise FormatError(f"bad checkpoint metadata: {e}") from e
        (n_stores,) = struct.unpack("<I", _read_exact(fh, 4))
        stores = {}
        for _ in range(n_stores):
            name_len, blob_len = struct.unpack("<HQ", _read_exact(fh, 10))
            name = _read_exact(fh, name_len).decode("utf-8")
            stores[name] = read_store(io.BytesIO(_read_exact(fh, blob_len)))
        if fh.read(1):
            raise FormatError("trailing bytes after checkpoint payload")
    if meta.get("format") != "hashlab-checkpoint":
        raise FormatError("checkpoint metadata missing format tag")
    config = TrainConfig(**meta["train"])
    net = parse_network(meta["network"])
    head = HashHeadSpec(**meta["head"])
    model = ModelSpec(net, head)
    state = TrainState(iteration=iteration, stores=stores, loss_sum=loss_sum, loss_count=loss_count)
    expected = {"shared"} if config.sharing == "shared" else {"query", "database"}
    if set(stores) != expected:
        raise FormatError(f"checkpoint stores {sorted(stores)} do not match sharing mode {config.sharing!r}")
    return state, model, config
