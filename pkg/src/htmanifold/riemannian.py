"""Tangent vectors on the orthogonal HT parameter space.

Tangent vectors are stored blockwise, one array per tree node with the same
shapes as the parameters. Horizontal vectors satisfy ``U_t^T dU_t = 0`` at
leaves and ``(B_t^(1,2))^T dB_t^(1,2) = 0`` at internal non-root nodes; the
root block is unconstrained. At orthogonal parameters the metric is the plain
Euclidean sum of blockwise inner products.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BasePointError, ParameterError, ShapeError, SkewError
from .ht_format import (
    HTParams,
    _combine,
    check_indices,
    eval_entries,
    expand,
    frames,
    gauge_blocks,
    qr_orthogonalize,
    root_to_tensor,
    sqrt_orthogonalize,
    tensor_to_root,
)


@dataclass(frozen=True, eq=False)
class TangentVector:
    blocks: tuple
    base: int
    horizontal: bool = False

    def _check(self, other: "TangentVector") -> None:
        if self.base != other.base:
            raise BasePointError(f"tangent vectors live at different base points ({self.base} vs {other.base})")

    def __add__(self, other):
        self._check(other)
        return TangentVector(tuple(a + b for a, b in zip(self.blocks, other.blocks)), self.base, self.horizontal and other.horizontal)

    def __sub__(self, other):
        self._check(other)
        return TangentVector(tuple(a - b for a, b in zip(self.blocks, other.blocks)), self.base, self.horizontal and other.horizontal)

    def __mul__(self, c):
        return TangentVector(tuple(c * a for a in self.blocks), self.base, self.horizontal)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def dot(self, other: "TangentVector") -> float:
        """Euclidean blockwise inner product (the metric at orthogonal parameters)."""
        self._check(other)
        return float(sum(np.vdot(a, b) for a, b in zip(self.blocks, other.blocks)))

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(a, a) for a in self.blocks)))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks])


def zero_tangent(x: HTParams) -> TangentVector:
    return TangentVector(tuple(np.zeros_like(b) for b in x.blocks), x.uid, True)


def tangent(x: HTParams, blocks: Sequence[np.ndarray], horizontal: bool = False) -> TangentVector:
    blocks = tuple(np.asarray(b, dtype=float) for b in blocks)
    if len(blocks) != len(x.blocks) or any(a.shape != b.shape for a, b in zip(blocks, x.blocks)):
        raise ShapeError("tangent blocks do not match the parameter block shapes")
    return TangentVector(blocks, x.uid, horizontal)


def random_tangent(x: HTParams, seed=None, horizontal: bool = True) -> TangentVector:
    rng = np.random.default_rng(seed)
    raw = tangent(x, [rng.standard_normal(b.shape) for b in x.blocks])
    return project_horizontal(x, raw) if horizontal else raw


def _require_base(x: HTParams, *vs: TangentVector) -> None:
    for v in vs:
        if v.base != x.uid:
            raise BasePointError(f"tangent vector based at {v.base}, not at parameters {x.uid}")


def _require_orthogonal(x: HTParams) -> None:
    if not x.orthogonal:
        raise ParameterError("operation requires orthogonalized parameters")


def inner(x: HTParams, a: TangentVector, b: TangentVector) -> float:
    """Riemannian metric ``g_x(a, b)`` at orthogonal `x`."""
    _require_orthogonal(x)
    _require_base(x, a, b)
    return a.dot(b)


def _project_blocks(x: HTParams, blocks: Sequence[np.ndarray]) -> list[np.ndarray]:
    tree = x.tree
    out = []
    for t, v in enumerate(blocks):
        u = x.blocks[t]
        if tree.is_leaf(t):
            out.append(v - u @ (u.T @ v))
        elif t == tree.root:
            out.append(np.array(v, copy=True))
        else:
            out.append(_project_core(u, v))
    return out


def _project_core(b: np.ndarray, v: np.ndarray) -> np.ndarray:
    # the projection commutes with a common row permutation, so C order avoids copies
    k = b.shape[2]
    bm = b.reshape(-1, k)
    vm = v.reshape(-1, k)
    return (vm - bm @ (bm.T @ vm)).reshape(b.shape)


def project_horizontal(x: HTParams, raw: TangentVector) -> TangentVector:
    """Componentwise projection onto the horizontal space at `x`."""
    _require_orthogonal(x)
    _require_base(x, raw)
    return TangentVector(tuple(_project_blocks(x, raw.blocks)), x.uid, True)


def horizontal_residual(x: HTParams, v: TangentVector) -> float:
    """Largest violation of the horizontal constraints (Frobenius norm per node)."""
    tree = x.tree
    res = 0.0
    for t in tree.non_root():
        u, dv = x.blocks[t], v.blocks[t]
        if not tree.is_leaf(t):
            u = u.reshape(-1, u.shape[2], order="F")
            dv = dv.reshape(-1, dv.shape[2], order="F")
        res = max(res, float(np.linalg.norm(u.T @ dv)))
    return res


def transport(x_new: HTParams, xi: TangentVector) -> TangentVector:
    """Vector transport by horizontal projection at the new base point."""
    _require_orthogonal(x_new)
    if len(xi.blocks) != len(x_new.blocks) or any(a.shape != b.shape for a, b in zip(xi.blocks, x_new.blocks)):
        raise ShapeError("cannot transport between parameter spaces of different ranks")
    return TangentVector(tuple(_project_blocks(x_new, xi.blocks)), x_new.uid, True)


RETRACTIONS = ("qr", "sqrt")


def retract(x: HTParams, xi: TangentVector, alpha: float = 1.0, method: str = "qr") -> HTParams:
    """Retraction ``QR(x + alpha xi)``, or its square-root variant.

    The square-root orthogonalization commutes with the gauge action, so
    solver trajectories started from gauge-equivalent points stay
    gauge-equivalent; the QR form does not (its triangular factors change
    under a gauge), which perturbs the blockwise vector transport.
    """
    if method == "qr":
        return qr_orthogonalize(step(x, xi, alpha))
    if method == "sqrt":
        return sqrt_orthogonalize(step(x, xi, alpha))
    raise ParameterError(f"retraction must be one of {RETRACTIONS}")


def step(x: HTParams, xi: TangentVector, alpha: float = 1.0) -> HTParams:
    """Unorthogonalized update ``x + alpha xi``."""
    _require_base(x, xi)
    return x.replace([b + alpha * v for b, v in zip(x.blocks, xi.blocks)], orthogonal=False)


def push_forward(y: HTParams, xi: TangentVector, g: Sequence) -> TangentVector:
    """Push a tangent vector through the gauge action; `y` is the gauged base point."""
    return TangentVector(tuple(gauge_blocks(y.tree, xi.blocks, g)), y.uid, xi.horizontal)


# -- vertical space -----------------------------------------------------------


def random_vertical_generator(x: HTParams, seed=None) -> tuple:
    rng = np.random.default_rng(seed)
    gen = [None] * len(x.tree)
    for t in x.tree.non_root():
        a = rng.standard_normal((x.rank(t), x.rank(t)))
        gen[t] = np.tril(a, -1) - np.tril(a, -1).T
    return tuple(gen)


def vertical_vector(x: HTParams, gen: Sequence) -> TangentVector:
    """Tangent to the gauge orbit generated by skew matrices ``D_t``.

    The point moves as ``U_t -> U_t exp(s D_t)`` so ``d phi`` vanishes on the
    result.
    """
    _require_orthogonal(x)
    tree = x.tree
    for t in tree.non_root():
        dt = np.asarray(gen[t])
        if dt.shape != (x.rank(t), x.rank(t)):
            raise ShapeError(f"generator at node {t} has shape {dt.shape}")
        if not np.array_equal(dt.T, -dt):
            raise SkewError(f"generator at node {t} is not skew-symmetric")
    blocks = []
    for t, node in enumerate(tree.nodes):
        b = x.blocks[t]
        if node.is_leaf:
            blocks.append(b @ gen[t])
            continue
        dl, dr = gen[node.left], gen[node.right]
        if t == tree.root:
            blocks.append(-dl @ b - b @ dr.T)
        else:
            v = np.einsum("wyz,zc->wyc", b, gen[t])
            v -= np.einsum("aw,wyz->ayz", dl, b)
            v -= np.einsum("by,wyz->wbz", dr, b)
            blocks.append(v)
    return TangentVector(tuple(blocks), x.uid, False)


# -- derivative of the parameter-to-tensor map --------------------------------


def dphi(x: HTParams, xi: TangentVector) -> np.ndarray:
    """Directional derivative ``D phi(x)[xi]`` as a dense tensor."""
    _require_base(x, xi)
    tree = x.tree
    fr = frames(x)
    dv: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            dv[t] = xi.blocks[t]
            continue
        b = x.core3(t)
        db = xi.blocks[t][:, :, None] if t == tree.root else xi.blocks[t]
        ul, ur = fr[node.left], fr[node.right]
        dv[t] = _combine(dv[node.left], ur, b) + _combine(ul, dv[node.right], b) + _combine(ul, ur, db)
    return root_to_tensor(tree, x.shape, dv[tree.root])


def riemannian_gradient_dense(x: HTParams, euclidean_grad: np.ndarray) -> TangentVector:
    """Riemannian gradient from a dense Euclidean gradient (adjoint of :func:`dphi`).

    Intermediate frame derivatives are passed down the tree unprojected; the
    horizontal projection is applied once to the extracted blocks.
    """
    _require_orthogonal(x)
    tree = x.tree
    euclidean_grad = np.asarray(euclidean_grad, dtype=float)
    if euclidean_grad.shape != x.shape:
        raise ShapeError(f"gradient of shape {euclidean_grad.shape} does not match tensor shape {x.shape}")
    fr = frames(x)
    du: list = [None] * len(tree)
    out: list = [None] * len(tree)
    du[tree.root] = tensor_to_root(tree, euclidean_grad)[:, None]
    for t in tree.internal:  # preorder: parents before children
        node = tree[t]
        ul, ur = fr[node.left], fr[node.right]
        b = x.core3(t)
        big = du[t].reshape(ul.shape[0], ur.shape[0], b.shape[2], order="F")
        tr = np.tensordot(big, ur, axes=(1, 0))  # (nl, k, kr)
        du[node.left] = np.tensordot(tr, b, axes=([2, 1], [1, 2]))
        tl = np.tensordot(ul, big, axes=(0, 0))  # (kl, nr, k)
        du[node.right] = np.tensordot(tl, b, axes=([0, 2], [0, 2]))
        db = np.tensordot(tl, ur, axes=(1, 0)).transpose(0, 2, 1)  # (kl, kr, k)
        nl, nr = ul.shape[0], ur.shape[0]
        du[node.left] = du[node.left].reshape(nl, -1)
        du[node.right] = du[node.right].reshape(nr, -1)
        out[t] = db[:, :, 0] if t == tree.root else db
    for t in tree.leaves:
        out[t] = du[t]
    return TangentVector(tuple(_project_blocks(x, out)), x.uid, True)


# -- separable (sampled) objective --------------------------------------------


def _khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product; column ``i * b.shape[1] + j`` holds ``a[:, i] * b[:, j]``."""
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _sparse_partial(x: HTParams, idx: np.ndarray, b: np.ndarray):
    """Data-fit value and unprojected gradient blocks for one shard of samples.

    Every ``K^3`` contraction is a single matrix product against row-wise
    Kronecker products of two children's sampled rows (or of a child's rows
    and the incoming cotangent). The rank-one root is contracted directly.
    """
    tree = x.tree
    sf: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            sf[t] = x.blocks[t][idx[:, node.modes[0]]]
        elif t == tree.root:
            sf[t] = np.einsum("sb,sb->s", sf[node.left] @ x.blocks[t], sf[node.right])[:, None]
        else:
            bt = x.blocks[t]
            sf[t] = _khatri_rao(sf[node.left], sf[node.right]) @ bt.reshape(-1, bt.shape[2])
    resid = sf[tree.root][:, 0] - b
    fval = 0.5 * float(resid @ resid)
    w: list = [None] * len(tree)
    out: list = [None] * len(tree)
    for t in tree.internal:
        node = tree[t]
        left, right = sf[node.left], sf[node.right]
        if t == tree.root:
            br = x.blocks[t]
            out[t] = left.T @ (resid[:, None] * right)
            w[node.left] = resid[:, None] * (right @ br.T)
            w[node.right] = resid[:, None] * (left @ br)
            continue
        bt = x.blocks[t]
        kl, kr, k = bt.shape
        wt = w[t]
        rw = _khatri_rao(right, wt)
        out[t] = (left.T @ rw).reshape(kl, kr, k)
        w[node.left] = rw @ bt.reshape(kl, kr * k).T
        del rw
        w[node.right] = _khatri_rao(left, wt) @ bt.transpose(1, 0, 2).reshape(kr, kl * k).T
    for t in tree.leaves:
        col = idx[:, tree[t].modes[0]]
        n, k = x.blocks[t].shape
        acc = np.empty((n, k))
        for j in range(k):
            acc[:, j] = np.bincount(col, weights=w[t][:, j], minlength=n)
        out[t] = acc
    return fval, out


def _merge(a, b):
    return a[0] + b[0], [p + q for p, q in zip(a[1], b[1])]


def data_objective_gradient(x: HTParams, idx: np.ndarray, b: np.ndarray, threads: int = 1):
    """``1/2 ||P_Omega phi(x) - b||^2`` and its Riemannian gradient.

    With ``threads > 1`` the samples are split into that many contiguous
    shards; partial results are merged by a fixed pairwise reduction, so the
    output depends only on the shard count.
    """
    _require_orthogonal(x)
    idx = check_indices(idx, x.shape)
    b = np.asarray(b, dtype=float)
    if b.shape != (idx.shape[0],):
        raise ShapeError(f"{b.shape[0] if b.ndim else 0} observations for {idx.shape[0]} indices")
    if threads <= 1 or idx.shape[0] < 2 * threads:
        fval, blocks = _sparse_partial(x, idx, b)
    else:
        cuts = np.linspace(0, idx.shape[0], threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: _sparse_partial(x, idx[cuts[s] : cuts[s + 1]], b[cuts[s] : cuts[s + 1]]), range(threads)))
        while len(parts) > 1:
            parts = [_merge(parts[i], parts[i + 1]) if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
        fval, blocks = parts[0]
    return fval, TangentVector(tuple(_project_blocks(x, blocks)), x.uid, True)


def objective_gradient_sparse(x: HTParams, idx: np.ndarray, b: np.ndarray, lam: float = 0.0, threads: int = 1):
    """Completion objective (plus ``lam^2`` times the Gramian regularizer) and its gradient."""
    fval, grad = data_objective_gradient(x, idx, b, threads=threads)
    if lam > 0:
        from .gauss_newton import gramians, regularizer_gradient, regularizer_value  # gauss_newton imports this module

        g = gramians(x)
        fval += lam**2 * regularizer_value(g)
        grad = grad + lam**2 * regularizer_gradient(x, g)
    return fval, grad


def objective_sparse(x: HTParams, idx: np.ndarray, b: np.ndarray) -> float:
    """Data-fit value only; valid for unorthogonalized parameters too."""
    r = eval_entries(x, idx) - b
    return 0.5 * float(r @ r)


def objective_gradient_dense(x: HTParams, idx: np.ndarray, b: np.ndarray, lam: float = 0.0):
    """Same quantities as :func:`objective_gradient_sparse`, through the dense tensor."""
    idx = check_indices(idx, x.shape)
    full = expand(x)
    resid = full[tuple(idx.T)] - np.asarray(b, dtype=float)
    egrad = np.zeros(x.shape)
    np.add.at(egrad, tuple(idx.T), resid)
    fval = 0.5 * float(resid @ resid)
    grad = riemannian_gradient_dense(x, egrad)
    if lam > 0:
        from .gauss_newton import gramians, regularizer_gradient, regularizer_value  # gauss_newton imports this module

        g = gramians(x)
        fval += lam**2 * regularizer_value(g)
        grad = grad + lam**2 * regularizer_gradient(x, g)
    return fval, grad
