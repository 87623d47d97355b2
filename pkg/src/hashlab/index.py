"""Bit-packed binary codes and exact Hamming-space retrieval.

Bit i of a q-bit code lives in word i // 64 at bit position i % 64; words are
little-endian uint64 and padding bits above q are zero, so a code file is
byte-for-byte portable.  Retrieval is a linear popcount scan: exact, simple,
and fast enough for desk-scale databases.

Code file layout ("HLBC"): magic, version u32, q u32, count u64, then
count * ceil(q/64) little-endian words.  Labels travel in a sidecar CSV of
``index,label`` rows, multi-labels joined with ``;``.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile

import numpy as np

from . import _kernels
from .errors import DomainError, FormatError, LengthMismatch

_MAGIC = b"HLBC"
_VERSION = 1

_WORD = np.dtype("<u8")


def _n_words(q):
    return (q + 63) // 64


class BitCode:
    """A q-bit code packed into ceil(q/64) little-endian words."""

    __slots__ = ("q", "words")

    def __init__(self, q, words):
        words = np.ascontiguousarray(words, dtype=_WORD)
        if q < 1:
            raise DomainError("bit count must be >= 1")
        if words.shape != (_n_words(q),):
            raise LengthMismatch(f"expected {_n_words(q)} words for q={q}, got {words.shape}")
        if q % 64 and int(words[-1]) >> (q % 64):
            raise DomainError("padding bits above q must be zero")
        self.q = q
        self.words = words

    def __eq__(self, other):
        if not isinstance(other, BitCode):
            return NotImplemented
        return self.q == other.q and bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.q, self.words.tobytes()))

    def __repr__(self):
        return f"BitCode(q={self.q}, bits={''.join(str(b) for b in unpack(self))})"


def pack(bits):
    """Bits (iterable of 0/1, bit 0 first) -> BitCode."""
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
    if arr.ndim != 1 or arr.size < 1:
        raise DomainError("pack expects a non-empty flat bit sequence")
    if not np.isin(arr, (0, 1)).all():
        raise DomainError("pack expects only 0/1 values")
    return BitCode(arr.size, pack_many(arr[None, :].astype(np.uint8))[0])


def unpack(code):
    """BitCode -> uint8 array of its q bits, bit 0 first."""
    return unpack_many(code.words[None, :], code.q)[0]


def pack_many(bits):
    """(n, q) 0/1 matrix -> (n, ceil(q/64)) word matrix."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    n, q = bits.shape
    nw = _n_words(q)
    by = np.packbits(bits, axis=1, bitorder="little")
    padded = np.zeros((n, nw * 8), dtype=np.uint8)
    padded[:, : by.shape[1]] = by
    return padded.view(_WORD)


def unpack_many(words, q):
    """(n, ceil(q/64)) word matrix -> (n, q) 0/1 matrix."""
    words = np.ascontiguousarray(words, dtype=_WORD)
    by = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(by, axis=1, bitorder="little")[:, :q]


class CodeDatabase:
    """Immutable collection of equal-length codes with optional labels/ids."""

    def __init__(self, q, words, labels=None, ids=None):
        words = np.ascontiguousarray(words, dtype=_WORD)
        if words.ndim != 2 or words.shape[1] != _n_words(q):
            raise LengthMismatch(f"word matrix must be (n, {_n_words(q)}) for q={q}")
        if q % 64:
            bad = words[:, -1] >> (q % 64)
            if bad.any():
                raise DomainError("padding bits above q must be zero")
        if labels is not None and len(labels) != words.shape[0]:
            raise LengthMismatch("labels length must match code count")
        if ids is not None and len(ids) != words.shape[0]:
            raise LengthMismatch("ids length must match code count")
        self.q = q
        self.words = words
        self.labels = list(labels) if labels is not None else None
        self.ids = list(ids) if ids is not None else None

    @classmethod
    def from_bits(cls, bits, labels=None, ids=None):
        bits = np.asarray(bits)
        return cls(bits.shape[1], pack_many(bits), labels, ids)

    @classmethod
    def from_codes(cls, codes, labels=None, ids=None):
        if not codes:
            raise DomainError("need at least one code")
        q = codes[0].q
        for c in codes:
            if c.q != q:
                raise LengthMismatch("codes must share one bit count")
        return cls(q, np.stack([c.words for c in codes]), labels, ids)

    def __len__(self):
        return self.words.shape[0]

    def code(self, i):
        return BitCode(self.q, self.words[i])


def hamming(a, b):
    """Number of differing bits between two codes."""
    if a.q != b.q:
        raise LengthMismatch(f"cannot compare q={a.q} against q={b.q}")
    return int(np.bitwise_count(np.bitwise_xor(a.words, b.words)).sum())


def all_distances(query, db):
    """Hamming distance from one query code to every database code."""
    if query.q != db.q:
        raise LengthMismatch(f"cannot compare q={query.q} against q={db.q}")
    return _kernels.hamming_distances(query.words, db.words)


def rank_all(query, db):
    """Database indices by ascending distance, ties by ascending index."""
    return np.argsort(all_distances(query, db), kind="stable")


def radius_search(query, db, r):
    """Ascending indices of all codes within Hamming distance r."""
    if not 0 <= r <= db.q:
        raise DomainError(f"radius must lie in [0, {db.q}], got {r}")
    return np.flatnonzero(all_distances(query, db) <= r)


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("truncated code file")
    return buf


def save_codes(db, path):
    """Write codes (not labels) atomically; see the module docstring layout."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIQ", _VERSION, db.q, len(db)))
            fh.write(db.words.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_codes(path, labels=None, ids=None):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise FormatError("not a code file")
        version, q, count = struct.unpack("<IIQ", _read_exact(fh, 16))
        if version != _VERSION:
            raise FormatError(f"unsupported code file version {version}")
        nw = _n_words(q)
        raw = _read_exact(fh, count * nw * 8)
        if fh.read(1):
            raise FormatError("trailing bytes after code payload")
    words = np.frombuffer(raw, dtype=_WORD).reshape(count, nw).copy()
    return CodeDatabase(q, words, labels, ids)


def _format_label(label):
    if isinstance(label, (set, frozenset, tuple, list)):
        # a trailing ';' keeps singleton sets distinguishable from scalars
        parts = sorted(str(x) for x in label)
        joined = ";".join(parts)
        return joined if len(parts) > 1 else joined + ";"
    text = str(label)
    if ";" in text:
        raise FormatError("scalar labels must not contain ';'")
    return text


def _parse_label(text):
    if ";" in text:
        parts = [p for p in text.split(";") if p]
        try:
            return frozenset(int(p) for p in parts)
        except ValueError:
            return frozenset(parts)
    try:
        return int(text)
    except ValueError:
        return text


def save_labels(labels, path):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "label"])
            for i, label in enumerate(labels):
                wr.writerow([i, _format_label(label)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_labels(path):
    labels = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:2]] != ["index", "label"]:
            raise FormatError("label file needs an index,label header")
        for row_no, row in enumerate(rd, start=2):
            if len(row) < 2:
                raise FormatError(f"label file row {row_no}: expected index,label")
            try:
                labels[int(row[0])] = _parse_label(row[1])
            except ValueError as e:
                raise FormatError(f"label file row {row_no}: {e}") from e
    if sorted(labels) != list(range(len(labels))):
        raise FormatError("label indices must cover 0..n-1 exactly")
    return [labels[i] for i in range(len(labels))]
