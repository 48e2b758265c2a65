"""Dense tensor primitives: matricization, multilinear products, contractions.

Dense tensors are plain :class:`numpy.ndarray` objects indexed as
``x[i_0, ..., i_{d-1}]``. Whenever a tensor is linearized (``vec``, the row
and column indices of a matricization, binary files) the *first* mode varies
fastest, i.e. Fortran order. Modes are 0-based throughout the Python API.

Kronecker-structured operators are never formed; everything is applied as a
sequence of mode products.
"""

from __future__ import annotations

from math import prod
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, ModeSetError, ShapeError

DENSE_LIMIT = 2**31 - 1


def check_dense_size(shape: Sequence[int]) -> None:
    """Raise CapacityError if a dense tensor of `shape` exceeds the dense limit."""
    size = prod(int(n) for n in shape)
    if size > DENSE_LIMIT:
        raise CapacityError(
            f"dense tensor of shape {tuple(shape)} has {size} entries "
            f"(limit {DENSE_LIMIT}); keep it in HT or sampled form"
        )


def _check_modes(t: Sequence[int], d: int, allow_empty: bool = False) -> list[int]:
    t = [int(m) for m in t]
    if not t and not allow_empty:
        raise ModeSetError("mode set must be nonempty")
    if len(set(t)) != len(t):
        raise ModeSetError(f"duplicate modes in {t}")
    for m in t:
        if not 0 <= m < d:
            raise ModeSetError(f"mode {m} outside 0..{d - 1}")
    return t


def complement(t: Sequence[int], d: int) -> list[int]:
    """Modes of ``range(d)`` not in `t`, ascending."""
    ts = set(t)
    return [m for m in range(d) if m not in ts]


def vec(x: np.ndarray) -> np.ndarray:
    """Vectorize with the first index fastest."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.asarray(v).reshape(tuple(shape), order="F")


def matricize(x: np.ndarray, t: Sequence[int]) -> np.ndarray:
    """Matricization ``X^(t)``: modes `t` along the rows, the rest along columns.

    Within the row group the modes are linearized in the order given by `t`
    (first listed fastest); the complementary modes are linearized in
    ascending order. With ``t`` equal to all modes the result is ``vec(x)``
    as a column.
    """
    x = np.asarray(x)
    t = _check_modes(t, x.ndim)
    tc = complement(t, x.ndim)
    rows = prod(x.shape[m] for m in t)
    cols = prod(x.shape[m] for m in tc)
    return np.transpose(x, t + tc).reshape(rows, cols, order="F")


def dematricize(m: np.ndarray, t: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given `shape`."""
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    t = _check_modes(t, d)
    tc = complement(t, d)
    m = np.asarray(m)
    rows = prod(shape[k] for k in t)
    cols = prod(shape[k] for k in tc)
    if m.ndim != 2 or m.shape != (rows, cols):
        raise ShapeError(f"matrix of shape {m.shape} does not match {(rows, cols)} for modes {t} of {shape}")
    perm = t + tc
    y = m.reshape(tuple(shape[k] for k in perm), order="F")
    return np.transpose(y, np.argsort(perm))


def mode_product(a: np.ndarray, x: np.ndarray, mode: int) -> np.ndarray:
    """``a ×_mode x``: multiply every mode-`mode` fiber of `x` by matrix `a`."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[1] != x.shape[mode]:
        raise ShapeError(f"matrix {a.shape} cannot act on mode {mode} of extent {x.shape[mode]}")
    return np.moveaxis(np.tensordot(a, x, axes=(1, mode)), 0, mode)


def multilinear_apply(mats: Sequence[Optional[np.ndarray]], x: np.ndarray) -> np.ndarray:
    """Multilinear product ``A_0 ×_0 A_1 ×_1 ... A_{d-1} ×_{d-1} x``.

    ``None`` entries stand for the identity on that mode.
    """
    x = np.asarray(x)
    if len(mats) != x.ndim:
        raise ShapeError(f"{len(mats)} matrices supplied for a {x.ndim}-tensor")
    for i, a in enumerate(mats):
        if a is not None:
            x = mode_product(a, x, i)
    return x


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean inner product ``vec(x)^T vec(y)``."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ShapeError(f"shapes {x.shape} and {y.shape} differ")
    return float(np.vdot(x, y))


def contract(x: np.ndarray, y: np.ndarray, s: Sequence[int], t: Sequence[int]) -> np.ndarray:
    """Contraction ``<x, y>_(s,t)``, summing mode ``s[i]`` of x against ``t[i]`` of y.

    The free modes of x (ascending) come first in the result, followed by
    the free modes of y. Full contraction returns a 0-d array holding the
    inner product.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    s = _check_modes(s, x.ndim, allow_empty=True)
    t = _check_modes(t, y.ndim, allow_empty=True)
    if len(s) != len(t):
        raise ShapeError(f"contracted mode lists {s} and {t} differ in length")
    for a, b in zip(s, t):
        if x.shape[a] != y.shape[b]:
            raise ShapeError(f"mode {a} of x (extent {x.shape[a]}) does not match mode {b} of y ({y.shape[b]})")
    return np.tensordot(x, y, axes=(s, t))


def adjoint_factor_derivative(
    mats: Sequence[Optional[np.ndarray]], b: np.ndarray, y: np.ndarray, i: int
) -> np.ndarray:
    """Adjoint of ``C -> A_0 ×_0 ... C ×_i ... A_{d-1} ×_{d-1} b``, applied to `y`.

    ``mats[i]`` is ignored (the open slot). Returns the ``m_i × n_i`` matrix
    ``<A_0^T ×_0 ... I ×_i ... A_{d-1}^T ×_{d-1} y, b>`` contracted over all
    modes except `i`.
    """
    b = np.asarray(b)
    y = np.asarray(y)
    d = b.ndim
    if y.ndim != d or len(mats) != d:
        raise ShapeError("mats, b and y must agree in order")
    if not 0 <= i < d:
        raise ModeSetError(f"mode {i} outside 0..{d - 1}")
    w = y
    for j, a in enumerate(mats):
        if j == i or a is None:
            continue
        a = np.asarray(a)
        if a.shape != (y.shape[j], b.shape[j]):
            raise ShapeError(f"factor {j} has shape {a.shape}, expected {(y.shape[j], b.shape[j])}")
        w = mode_product(a.T, w, j)
    rest = [j for j in range(d) if j != i]
    if w.shape[:i] + w.shape[i + 1 :] != b.shape[:i] + b.shape[i + 1 :]:
        raise ShapeError(f"y of shape {y.shape} is inconsistent with b of shape {b.shape}")
    return np.tensordot(w, b, axes=(rest, rest))


def adjoint_core_derivative(mats: Sequence[Optional[np.ndarray]], y: np.ndarray) -> np.ndarray:
    """Adjoint of ``C -> A_0 ×_0 ... A_{d-1} ×_{d-1} C``, i.e. the transposed product."""
    return multilinear_apply([None if a is None else np.asarray(a).T for a in mats], y)
