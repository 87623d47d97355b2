"""Datasets: ingestion, export, and synthetic class-blob generation.

Three interchange formats, all chosen for bit-exact reproducibility (no
image codecs):

* feature CSV — header ``id,label,f0..f{d-1}``, one item per row;
* raw tensor file ("HLTD") — magic, version, item count and shape, dtype
  code, raw little-endian values, then a JSON block with ids/labels;
* directory of binary netpbm images — ``<root>/<label>/<name>.pgm|.ppm``
  (P5/P6, maxval 255), scaled to [0, 1].

Items are ordered by id (numeric when every id parses as an integer), so
re-ingesting a path always produces the same dataset.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, FormatError

_MAGIC = b"HLTD"
_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}

SPLITS = ("train", "query", "database")


@dataclass
class Dataset:
    items: np.ndarray  # (n, d) features or (n, c, h, w) images
    labels: list
    ids: list = None
    split: str = ""

    def __post_init__(self):
        self.items = np.asarray(self.items)
        if self.items.ndim not in (2, 4):
            raise FormatError("items must be (n, d) features or (n, c, h, w) images")
        if len(self.labels) != self.items.shape[0]:
            raise FormatError("labels length must match item count")
        if self.ids is None:
            self.ids = [str(i) for i in range(self.items.shape[0])]
        elif len(self.ids) != self.items.shape[0]:
            raise FormatError("ids length must match item count")
        if self.split and self.split not in SPLITS:
            raise FormatError(f"split must be one of {SPLITS}")

    def __len__(self):
        return self.items.shape[0]

    @property
    def item_shape(self):
        return self.items.shape[1:]


def _sort_by_id(ids, items, labels):
    try:
        key = sorted(range(len(ids)), key=lambda i: int(ids[i]))
    except ValueError:
        key = sorted(range(len(ids)), key=lambda i: ids[i])
    return [ids[i] for i in key], items[key], [labels[i] for i in key]


def _format_label(label):
    if isinstance(label, (set, frozenset, tuple, list)):
        return ";".join(str(x) for x in sorted(label))
    return str(label)


def _parse_label(text):
    if ";" in text:
        return frozenset(int(p) for p in text.split(";") if p)
    return int(text)


def ingest_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or len(header) < 3 or header[0].strip() != "id" or header[1].strip() != "label":
            raise FormatError("feature CSV needs an id,label,f0.. header")
        width = len(header) - 2
        ids, labels, rows = [], [], []
        for row_no, row in enumerate(rd, start=2):
            if len(row) != len(header):
                raise FormatError(f"feature CSV row {row_no}: expected {len(header)} fields, got {len(row)}")
            try:
                labels.append(_parse_label(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as e:
                raise FormatError(f"feature CSV row {row_no}: {e}") from e
            ids.append(row[0])
    if not rows:
        raise FormatError("feature CSV has no data rows")
    items = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    ids, items, labels = _sort_by_id(ids, items, labels)
    return Dataset(items, labels, ids)


def export_csv(ds, path):
    if ds.items.ndim != 2:
        raise FormatError("feature CSV holds flat feature vectors only")
    tmp = _tmp_for(path)
    try:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["id", "label"] + [f"f{i}" for i in range(ds.items.shape[1])])
            for i in range(len(ds)):
                wr.writerow([ds.ids[i], _format_label(ds.labels[i])] + [repr(v) for v in ds.items[i].tolist()])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tmp_for(path):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    os.close(fd)
    return tmp


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated tensor file")
    return buf


def ingest_raw(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise FormatError("not a raw tensor file")
        version, n, ndim = struct.unpack("<IQB", _read_exact(fh, 13))
        if version != _VERSION:
            raise FormatError(f"unsupported tensor file version {version}")
        shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim))
        (code,) = struct.unpack("<B", _read_exact(fh, 1))
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        dt = _DTYPES[code]
        count = n * int(np.prod(shape)) if shape else n
        items = np.frombuffer(_read_exact(fh, count * dt.itemsize), dtype=dt).reshape((n,) + shape).copy()
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        except ValueError as e:
            raise FormatError(f"bad tensor file metadata: {e}") from e
        if fh.read(1):
            raise FormatError("trailing bytes after tensor payload")
    labels = [_parse_label(str(v)) if isinstance(v, str) else (frozenset(v) if isinstance(v, list) else int(v)) for v in meta["labels"]]
    ids = [str(v) for v in meta["ids"]]
    ids_sorted, items, labels = _sort_by_id(ids, items, labels)
    return Dataset(items, labels, ids_sorted, split=meta.get("split", ""))


def export_raw(ds, path):
    items = ds.items
    code = 0 if items.dtype == np.float64 else 1
    items = np.ascontiguousarray(items, dtype=_DTYPES[code])
    meta = {
        "ids": ds.ids,
        "labels": [sorted(v) if isinstance(v, (set, frozenset)) else int(v) for v in ds.labels],
        "split": ds.split,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = _tmp_for(path)
    try:
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQB", _VERSION, len(ds), items.ndim - 1))
            for d in items.shape[1:]:
                fh.write(struct.pack("<Q", d))
            fh.write(struct.pack("<B", code))
            fh.write(items.tobytes())
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_pnm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    # header tokens may be separated by whitespace and '#' comments
    while len(fields) < 4 and pos < len(data):
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if len(fields) < 4 or fields[0] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary P5/P6 netpbm file")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as e:
        raise FormatError(f"{path}: bad netpbm header") from e
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if fields[0] == b"P5" else 3
    need = w * h * channels
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: truncated pixel data")
    px = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    return px.reshape(h, w, channels).transpose(2, 0, 1)


def ingest_dir(path):
    """<root>/<label>/<image>.pgm|.ppm; item id is '<label>/<stem>'."""
    entries = []
    for label_name in sorted(os.listdir(path)):
        sub = os.path.join(path, label_name)
        if not os.path.isdir(sub):
            continue
        for fname in sorted(os.listdir(sub)):
            if not fname.endswith((".pgm", ".ppm")):
                continue
            try:
                label = int(label_name)
            except ValueError as e:
                raise FormatError(f"directory label {label_name!r} is not an integer") from e
            entries.append((f"{label_name}/{os.path.splitext(fname)[0]}", label, os.path.join(sub, fname)))
    if not entries:
        raise FormatError(f"no .pgm/.ppm files under {path}")
    entries.sort(key=lambda e: e[0])
    images = [_read_pnm(p) for _, _, p in entries]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise FormatError(f"images disagree on shape: {sorted(shapes)}")
    return Dataset(np.stack(images), [label for _, label, _ in entries], [eid for eid, _, _ in entries])


def ingest(path, fmt="auto"):
    if fmt == "auto":
        if os.path.isdir(path):
            fmt = "dir"
        elif str(path).endswith(".csv"):
            fmt = "csv"
        else:
            fmt = "raw"
    if fmt == "csv":
        return ingest_csv(path)
    if fmt == "raw":
        return ingest_raw(path)
    if fmt == "dir":
        return ingest_dir(path)
    raise ConfigError(f"unknown dataset format {fmt!r}")


def synth_blobs(classes, per_class, shape, separation, seed, noise=1.0, brightness=0.0, split=""):
    """Gaussian class blobs: item = centroid[class] + noise + brightness shift.

    Centroids are standard normals scaled by ``separation``; ``brightness``
    adds a per-item constant across all features (a nuisance direction that
    class structure does not explain), which keeps untrained projections from
    separating the classes by accident.
    """
    if classes < 2:
        raise DomainError("need at least two classes")
    if separation < 0:
        raise DomainError("separation must be non-negative")
    shape = tuple(int(d) for d in shape)
    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((classes,) + shape) * separation
    items = []
    labels = []
    for c in range(classes):
        block = centroids[c] + rng.standard_normal((per_class,) + shape) * noise
        if brightness:
            block = block + rng.standard_normal((per_class,) + (1,) * len(shape)) * brightness
        items.append(block)
        labels.extend([c] * per_class)
    return Dataset(np.concatenate(items), labels, split=split)


def synth_splits(classes, sizes, shape, separation, seed, noise=1.0, brightness=0.0):
    """Disjoint train/query/database splits drawn around shared centroids.

    ``sizes`` maps split name -> total item count (split evenly over classes,
    remainder to the earliest classes).
    """
    for name in sizes:
        if name not in SPLITS:
            raise ConfigError(f"unknown split {name!r}")
    shape = tuple(int(d) for d in shape)
    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((classes,) + shape) * separation
    out = {}
    for split in SPLITS:
        if split not in sizes:
            continue
        total = sizes[split]
        counts = [total // classes + (1 if c < total % classes else 0) for c in range(classes)]
        items, labels = [], []
        for c, cnt in enumerate(counts):
            if cnt == 0:
                continue
            block = centroids[c] + rng.standard_normal((cnt,) + shape) * noise
            if brightness:
                block = block + rng.standard_normal((cnt,) + (1,) * len(shape)) * brightness
            items.append(block)
            labels.extend([c] * cnt)
        out[split] = Dataset(np.concatenate(items), labels, split=split)
    return out
