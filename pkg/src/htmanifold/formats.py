"""File formats: dense tensors (DTEN1), HT checkpoints (HTCK1), sampling CSV.

All binary integers are unsigned 32-bit little-endian and all floats
IEEE-754 doubles, little-endian, with the first index fastest.

DTEN1::

    b"DTEN1" | d | n_0 ... n_{d-1} | data

HTCK1::

    b"HTCK1" | len | tree string (UTF-8, 1-based grammar)
             | count | k_t for every non-root node, parents-first
             | d | n_0 ... n_{d-1}
             | blocks of every node, parents-first, each first-index-fastest

The sampling CSV has header ``i1,...,id,value`` and 1-based indices.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from math import prod
import numpy as np

from .completion import SamplingSet
from .dimension_tree import parse_tree
from .errors import FormatError, HTError
from .ht_format import HTParams, orthogonality_residual

DTEN_MAGIC = b"DTEN1"
HTCK_MAGIC = b"HTCK1"


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {self.what} file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1) -> tuple:
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes in {self.what} file")


def _f64(a: np.ndarray) -> bytes:
    return np.asarray(a, dtype="<f8").reshape(-1, order="F").tobytes()


def dten_bytes(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype=float)
    return DTEN_MAGIC + struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape) + _f64(x)


def dten_from_bytes(data: bytes) -> np.ndarray:
    r = _Reader(data, "DTEN1")
    if r.take(5) != DTEN_MAGIC:
        raise FormatError("not a DTEN1 file (bad magic)")
    (d,) = r.u32()
    shape = r.u32(d)
    x = r.f64(prod(shape)).reshape(shape, order="F")
    r.done()
    return x


def write_dten(path, x: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(dten_bytes(x))


def read_dten(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return dten_from_bytes(fh.read())


def htck_bytes(x: HTParams) -> bytes:
    tree = x.tree
    ts = tree.to_string().encode("utf-8")
    ranks = [x.rank(t) for t in tree.non_root()]
    out = [HTCK_MAGIC, struct.pack("<I", len(ts)), ts, struct.pack(f"<I{len(ranks)}I", len(ranks), *ranks)]
    out.append(struct.pack(f"<I{x.d}I", x.d, *x.shape))
    out.extend(_f64(b) for b in x.blocks)
    return b"".join(out)


def htck_from_bytes(data: bytes) -> HTParams:
    r = _Reader(data, "HTCK1")
    if r.take(5) != HTCK_MAGIC:
        raise FormatError("not an HTCK1 file (bad magic)")
    (n,) = r.u32()
    try:
        tree = parse_tree(r.take(n).decode("utf-8"))
    except (UnicodeDecodeError, HTError) as exc:
        raise FormatError(f"bad tree string in checkpoint: {exc}") from exc
    (count,) = r.u32()
    if count != len(tree) - 1:
        raise FormatError(f"checkpoint lists {count} ranks for a tree with {len(tree) - 1} non-root nodes")
    ranks = (1,) + r.u32(count)
    (d,) = r.u32()
    if d != tree.d:
        raise FormatError("checkpoint shape does not match its tree")
    shape = r.u32(d)
    blocks = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            bshape = (shape[node.modes[0]], ranks[t])
        elif t == tree.root:
            bshape = (ranks[node.left], ranks[node.right])
        else:
            bshape = (ranks[node.left], ranks[node.right], ranks[t])
        blocks.append(r.f64(prod(bshape)).reshape(bshape, order="F"))
    r.done()
    x = HTParams(tree, tuple(blocks))
    return x.replace(x.blocks, orthogonal=orthogonality_residual(x) < 1e-10)


def write_htck(path, x: HTParams) -> None:
    with open(path, "wb") as fh:
        fh.write(htck_bytes(x))


def read_htck(path) -> HTParams:
    with open(path, "rb") as fh:
        return htck_from_bytes(fh.read())


def write_samples(path, omega: SamplingSet, values: np.ndarray) -> None:
    """Write 1-based indices and values; floats use 17 significant digits."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(omega),):
        raise FormatError("one value per sample index is required")
    d = len(omega.shape)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"i{j + 1}" for j in range(d)] + ["value"])
        for row, v in zip(omega.one_based.tolist(), values.tolist()):
            w.writerow(row + [f"{v:.17g}"])


def read_samples(path, shape, kind: str = "points", free_modes: tuple = ()) -> tuple[SamplingSet, np.ndarray]:
    """Parse a sampling CSV against a known tensor shape."""
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    want = [f"i{j + 1}" for j in range(d)] + ["value"]
    with open(path, newline="") as fh:
        text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != want:
        raise FormatError(f"sampling CSV header must be {','.join(want)}")
    body = [r for r in rows[1:] if r]
    idx = np.empty((len(body), d), dtype=np.intp)
    vals = np.empty(len(body))
    for k, r in enumerate(body):
        if len(r) != d + 1:
            raise FormatError(f"row {k + 2} has {len(r)} fields, expected {d + 1}")
        try:
            idx[k] = [int(c) for c in r[:d]]
            vals[k] = float(r[d])
        except ValueError as exc:
            raise FormatError(f"row {k + 2}: {exc}") from exc
    if idx.size and idx.min() < 1:
        raise FormatError("sampling CSV indices are 1-based")
    return SamplingSet(shape, idx - 1, kind, tuple(free_modes)), vals


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
