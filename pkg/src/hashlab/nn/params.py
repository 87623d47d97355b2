"""Named parameter arrays, their momentum buffers, and a binary store format.

The on-disk layout ("HLPS") is a magic tag, a format version, an entry count,
then one record per array: section byte (0 = parameter, 1 = momentum buffer),
UTF-8 name, numpy dtype string, shape, and raw C-order bytes.  Everything is
little-endian; writes go through a temp file and os.replace so a crash never
leaves a half-written store.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from ..errors import FormatError, ShapeError

_MAGIC = b"HLPS"
_VERSION = 1


class ParamStore:
    """Ordered name -> array mapping with a zero-initialised momentum twin."""

    def __init__(self, params, momentum=None):
        self.params = dict(params)
        if momentum is None:
            momentum = {k: np.zeros_like(v) for k, v in self.params.items()}
        if set(momentum) != set(self.params):
            raise ShapeError("momentum buffers must mirror the parameter names")
        for k, v in momentum.items():
            if v.shape != self.params[k].shape:
                raise ShapeError(f"momentum shape mismatch for {k!r}")
        self.momentum = dict(momentum)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def copy(self):
        return ParamStore(
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.momentum.items()},
        )

    def astype(self, dtype):
        return ParamStore(
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.momentum.items()},
        )


def init_params(shapes, seed, dtype=np.float64, fan_in=None):
    """He-style init: weights ~ N(0, 2/fan_in), biases zero.

    Each array draws from its own generator keyed by (seed, name) so the
    result does not depend on which other arrays exist or their order.
    ``fan_in`` overrides the inferred fan-in per name (needed for flat weight
    vectors whose incoming width is not visible in the shape).
    """
    fan_in = dict(fan_in or {})
    params = {}
    for name, shape in shapes.items():
        key = (0,) + tuple(name.encode("utf-8"))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if name in fan_in:
            fin = fan_in[name]
        elif len(shape) >= 2:
            fin = int(np.prod(shape[1:]))
        else:
            fin = int(shape[0])
        scale = np.sqrt(2.0 / fin)
        params[name] = (rng.standard_normal(shape) * scale).astype(dtype)
    return ParamStore(params)


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated parameter store")
    return buf


def _write_entry(fh, section, name, arr):
    nb = name.encode("utf-8")
    dt = arr.dtype.str.encode("ascii")
    fh.write(struct.pack("<BH", section, len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<B", len(dt)))
    fh.write(dt)
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(np.ascontiguousarray(arr).tobytes())


def _read_entry(fh):
    section, name_len = struct.unpack("<BH", _read_exact(fh, 3))
    name = _read_exact(fh, name_len).decode("utf-8")
    (dt_len,) = struct.unpack("<B", _read_exact(fh, 1))
    dtype = np.dtype(_read_exact(fh, dt_len).decode("ascii"))
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(_read_exact(fh, count * dtype.itemsize), dtype=dtype).reshape(shape)
    return section, name, arr.copy()


def write_store(fh, store):
    entries = [(0, k, v) for k, v in store.params.items()]
    entries += [(1, k, v) for k, v in store.momentum.items()]
    fh.write(_MAGIC)
    fh.write(struct.pack("<II", _VERSION, len(entries)))
    for section, name, arr in entries:
        _write_entry(fh, section, name, arr)


def read_store(fh):
    if _read_exact(fh, 4) != _MAGIC:
        raise FormatError("not a parameter store file")
    version, count = struct.unpack("<II", _read_exact(fh, 8))
    if version != _VERSION:
        raise FormatError(f"unsupported parameter store version {version}")
    params, momentum = {}, {}
    for _ in range(count):
        section, name, arr = _read_entry(fh)
        if section == 0:
            params[name] = arr
        elif section == 1:
            momentum[name] = arr
        else:
            raise FormatError(f"unknown store section {section}")
    if not momentum:
        momentum = None
    return ParamStore(params, momentum)


def save_store(store, path):
    """Atomic write: temp file in the target directory, then rename over."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_store(fh, store)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_store(path):
    with open(path, "rb") as fh:
        return read_store(fh)
