"""Hierarchical Tucker parameters and the parameter-to-tensor map.

An :class:`HTParams` holds one array per tree node, indexed by node id:

* leaf ``t``: frame ``U_t`` of shape ``(n_t, k_t)``;
* internal non-root ``t``: transfer tensor ``B_t`` of shape ``(k_l, k_r, k_t)``;
* root: matrix ``B_root`` of shape ``(k_l, k_r)``.

The (implicit) frame of an internal node is
``U_t = kron(U_r, U_l) @ B_t^(1,2)``: its rows enumerate the node's modes in
``tree[t].modes`` order, first mode fastest.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import prod
from typing import Optional, Sequence

import numpy as np

from .dimension_tree import DimensionTree
from .errors import GaugeError, RankDeficiencyError, RankError, SampleIndexError, ShapeError
from .tensor_core import check_dense_size, matricize

_uid = itertools.count(1)

RANK_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class HTParams:
    tree: DimensionTree
    blocks: tuple
    orthogonal: bool = False
    uid: int = field(default_factory=lambda: next(_uid), compare=False)

    def __post_init__(self):
        tree = self.tree
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) != len(tree):
            raise ShapeError(f"{len(blocks)} blocks for a tree with {len(tree)} nodes")
        for i, node in enumerate(tree.nodes):
            b = blocks[i]
            if node.is_leaf:
                if b.ndim != 2:
                    raise ShapeError(f"leaf {i} needs a matrix, got shape {b.shape}")
                continue
            kl, kr = self.rank(node.left), self.rank(node.right)
            want = (kl, kr) if i == tree.root else (kl, kr, b.shape[-1] if b.ndim == 3 else -1)
            if b.shape != want:
                raise ShapeError(f"node {i} block has shape {b.shape}, expected {want}")

    # -- sizes ---------------------------------------------------------------
    def rank(self, t: int) -> int:
        if t == self.tree.root:
            return 1
        b = self.blocks[t]
        return b.shape[1] if self.tree.is_leaf(t) else b.shape[2]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.rank(t) for t in range(len(self.tree)))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.blocks[leaf].shape[0] for leaf in self.tree.leaves)

    @property
    def d(self) -> int:
        return self.tree.d

    def core3(self, t: int) -> np.ndarray:
        """Transfer tensor of an internal node as a 3-tensor (root gets ``k_t = 1``)."""
        b = self.blocks[t]
        return b[:, :, None] if t == self.tree.root else b

    def num_params(self) -> int:
        return sum(b.size for b in self.blocks)

    def replace(self, blocks, orthogonal: bool) -> "HTParams":
        return HTParams(self.tree, tuple(blocks), orthogonal)


def make_ranks(tree: DimensionTree, leaf: int, internal: Optional[int] = None) -> tuple[int, ...]:
    """Uniform rank vector; entry 0 (root) is the implicit 1."""
    internal = leaf if internal is None else internal
    return tuple(1 if t == tree.root else (leaf if tree.is_leaf(t) else internal) for t in range(len(tree)))


def validate_ranks(tree: DimensionTree, ranks: Sequence[int], shape: Sequence[int]) -> None:
    """Check the necessary conditions for full hierarchical rank."""
    ranks = list(ranks)
    if len(ranks) != len(tree):
        raise RankError(f"rank vector has {len(ranks)} entries, tree has {len(tree)} nodes")
    if len(shape) != tree.d:
        raise ShapeError(f"shape {tuple(shape)} does not match tree with {tree.d} modes")
    for t, node in enumerate(tree.nodes):
        if t == tree.root:
            continue
        k = ranks[t]
        if k < 1:
            raise RankError(f"rank of node {t} must be >= 1")
        n_t = prod(shape[m] for m in node.modes)
        n_c = prod(shape) // n_t
        if k > min(n_t, n_c):
            raise RankError(f"rank {k} at node {t} exceeds matricization size {n_t}x{n_c}")
        if not node.is_leaf:
            kl, kr = ranks[node.left], ranks[node.right]
            if k > kl * kr or kl > kr * k or kr > kl * k:
                raise RankError(f"ranks ({kl},{kr},{k}) at node {t} admit no full multilinear rank tensor")
    root = tree[tree.root]
    if ranks[root.left] != ranks[root.right]:
        raise RankError("the two children of the root must carry equal ranks")



def param_count_bound(tree: DimensionTree, shape: Sequence[int], ranks: Sequence[int]) -> int:
    """Upper bound ``d N K + (d-2) K^3 + K^2`` on the number of parameters."""
    d = tree.d
    N = max(shape)
    K = max(r for t, r in enumerate(ranks) if t != tree.root)
    return d * N * K + (d - 2) * K**3 + K**2


# -- evaluation -----------------------------------------------------------------


def _combine(ul: np.ndarray, ur: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Frame ``kron(ur, ul) @ b^(1,2)`` without forming the Kronecker product."""
    nl, nr = ul.shape[0], ur.shape[0]
    tmp = np.tensordot(ul, b, axes=(1, 0))  # (nl, kr, k)
    tmp = np.tensordot(tmp, ur, axes=(1, 1))  # (nl, k, nr)
    return np.transpose(tmp, (0, 2, 1)).reshape(nl * nr, b.shape[2], order="F")


def frames(x: HTParams) -> list[np.ndarray]:
    """Frames ``U_t`` of every node, computed children before parents.

    The root entry is ``vec`` of the tensor (ordered by the root's modes) as a
    column. Internal frames have ``n_t`` rows, so this is only for dense-size
    problems.
    """
    check_dense_size(x.shape)
    tree = x.tree
    out: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            out[t] = x.blocks[t]
        else:
            out[t] = _combine(out[node.left], out[node.right], x.core3(t))
    return out


def root_to_tensor(tree: DimensionTree, shape: Sequence[int], col: np.ndarray) -> np.ndarray:
    """Reshape a root-ordered vectorization into the naturally ordered tensor."""
    modes = tree[tree.root].modes
    y = np.asarray(col).reshape(tuple(shape[m] for m in modes), order="F")
    return np.transpose(y, np.argsort(modes))


def tensor_to_root(tree: DimensionTree, x: np.ndarray) -> np.ndarray:
    """Vectorize `x` in the root's mode order (inverse of :func:`root_to_tensor`)."""
    modes = tree[tree.root].modes
    return np.transpose(x, modes).reshape(-1, order="F")


def expand(x: HTParams) -> np.ndarray:
    """Dense tensor represented by `x`."""
    return root_to_tensor(x.tree, x.shape, frames(x)[x.tree.root])


def check_indices(idx: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.ndim != 2 or idx.shape[1] != len(shape):
        raise SampleIndexError(f"index array of shape {idx.shape} does not fit a {len(shape)}-tensor")
    if idx.size and (idx.min() < 0 or np.any(idx.max(axis=0) >= np.asarray(shape))):
        raise SampleIndexError(f"sample indices outside shape {tuple(shape)}")
    return idx.astype(np.intp, copy=False)


def sample_frames(x: HTParams, idx: np.ndarray) -> list[np.ndarray]:
    """Rows ``U_t(i_t, :)`` of every frame at the sampled multi-indices.

    Returns one ``(m, k_t)`` array per node; the root entry is ``(m, 1)``.
    Cost is ``O(m d K^3)``.
    """
    tree = x.tree
    idx = check_indices(idx, x.shape)
    m = idx.shape[0]
    out: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            out[t] = x.blocks[t][idx[:, node.modes[0]]]
            continue
        b = x.core3(t)
        kl, kr, k = b.shape
        tmp = (out[node.left] @ b.reshape(kl, kr * k)).reshape(m, kr, k)
        out[t] = np.einsum("myz,my->mz", tmp, out[node.right])
    return out


def eval_entries(x: HTParams, idx: np.ndarray) -> np.ndarray:
    """Entries of ``phi(x)`` at the 0-based multi-indices in the rows of `idx`."""
    return sample_frames(x, idx)[x.tree.root][:, 0]


# -- orthogonalization ---------------------------------------------------------


def _qr_pos(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    q = q * s
    r = s[:, None] * r
    scale = np.linalg.norm(r)
    if scale == 0.0 or np.min(np.abs(np.diag(r))) < RANK_TOL * scale:
        raise RankDeficiencyError(f"{what} is rank deficient")
    return q, r


def qr_orthogonalize(x: HTParams) -> HTParams:
    """Orthogonalize by QR factorizations, pushing R factors towards the root.

    R factors are normalized to a positive diagonal, which makes the result
    deterministic and leaves already orthogonal parameters unchanged.
    """
    tree = x.tree
    blocks = list(x.blocks)
    rs: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            blocks[t], rs[t] = _qr_pos(x.blocks[t], f"leaf frame {t}")
        elif t == tree.root:
            blocks[t] = rs[node.left] @ x.blocks[t] @ rs[node.right].T
        else:
            b = x.blocks[t]
            kl, kr, k = b.shape
            z = np.einsum("aw,by,wyz->abz", rs[node.left], rs[node.right], b, optimize=True)
            q, rs[t] = _qr_pos(z.reshape(kl * kr, k, order="F"), f"transfer tensor {t}")
            blocks[t] = q.reshape(kl, kr, k, order="F")
    return x.replace(blocks, orthogonal=True)


def _sym_sqrt(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """``(M^{1/2}, M^{-1/2})`` of a symmetric positive definite matrix."""
    w, v = np.linalg.eigh((m + m.T) / 2)
    if w[-1] <= 0 or w[0] < RANK_TOL * w[-1]:
        raise RankDeficiencyError(f"{what} is rank deficient")
    sw = np.sqrt(w)
    return (v * sw) @ v.T, (v / sw) @ v.T


def sqrt_orthogonalize(x: HTParams) -> HTParams:
    """Orthogonalize with symmetric square roots ``X (X^T X)^{-1/2}`` of small Gram matrices."""
    tree = x.tree
    blocks = list(x.blocks)
    roots: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            u = x.blocks[t]
            roots[t], inv = _sym_sqrt(u.T @ u, f"leaf frame {t}")
            blocks[t] = u @ inv
            continue
        c = np.einsum("aw,by,wyz->abz", roots[node.left], roots[node.right], x.core3(t), optimize=True)
        if t == tree.root:
            blocks[t] = c[:, :, 0]
        else:
            kl, kr, k = c.shape
            cm = c.reshape(kl * kr, k, order="F")
            roots[t], inv = _sym_sqrt(cm.T @ cm, f"transfer tensor {t}")
            blocks[t] = (cm @ inv).reshape(kl, kr, k, order="F")
    return x.replace(blocks, orthogonal=True)


def orthogonality_residual(x: HTParams) -> float:
    """Largest ``||Q^T Q - I||_F`` over leaf frames and non-root transfer tensors."""
    tree = x.tree
    res = 0.0
    for t in tree.non_root():
        b = x.blocks[t]
        q = b if tree.is_leaf(t) else b.reshape(-1, b.shape[2], order="F")
        res = max(res, float(np.linalg.norm(q.T @ q - np.eye(q.shape[1]))))
    return res


def rank_diagnostics(x: HTParams, tol: float = RANK_TOL) -> dict[int, bool]:
    """Per-node full-rank flags (leaf frames and all three unfoldings of each transfer tensor)."""
    tree = x.tree
    out = {}
    for t in range(len(tree)):
        b = x.blocks[t]
        if tree.is_leaf(t) or t == tree.root:
            mats = [b]
        else:
            mats = [b.reshape(b.shape[0], -1), np.moveaxis(b, 1, 0).reshape(b.shape[1], -1), b.reshape(-1, b.shape[2], order="F")]
        ok = True
        for m in mats:
            s = np.linalg.svd(m, compute_uv=False)
            ok &= bool(s.size and s[-1] >= tol * s[0])
        out[t] = ok
    return out


# -- gauge ----------------------------------------------------------------------


def random_gauge(x: HTParams, seed=None) -> tuple:
    """Random orthogonal ``A_t`` for every non-root node (``None`` at the root)."""
    rng = np.random.default_rng(seed)
    g = [None] * len(x.tree)
    for t in x.tree.non_root():
        q, r = np.linalg.qr(rng.standard_normal((x.rank(t), x.rank(t))))
        g[t] = q * np.sign(np.diag(r))
    return tuple(g)


def check_gauge(x: HTParams, g: Sequence, tol: float = 1e-10) -> None:
    if len(g) != len(x.tree):
        raise GaugeError(f"gauge has {len(g)} entries, tree has {len(x.tree)} nodes")
    for t in x.tree.non_root():
        a = np.asarray(g[t])
        k = x.rank(t)
        if a.shape != (k, k):
            raise GaugeError(f"gauge matrix at node {t} has shape {a.shape}, expected {(k, k)}")
        if np.linalg.norm(a.T @ a - np.eye(k)) > tol:
            raise GaugeError(f"gauge matrix at node {t} is not orthogonal")


def gauge_blocks(tree: DimensionTree, blocks: Sequence[np.ndarray], g: Sequence) -> list[np.ndarray]:
    """Apply the group action blockwise; linear in the blocks, so it also pushes tangent vectors forward."""
    out = []
    for t, node in enumerate(tree.nodes):
        b = blocks[t]
        if node.is_leaf:
            out.append(b @ g[t])
        elif t == tree.root:
            out.append(g[node.left].T @ b @ g[node.right])
        else:
            out.append(np.einsum("wa,yb,zc,wyz->abc", g[node.left], g[node.right], g[t], b, optimize=True))
    return out


def apply_gauge(x: HTParams, g: Sequence) -> HTParams:
    """``theta_x(A)``: change of basis at every node; leaves ``phi(x)`` unchanged."""
    check_gauge(x, g)
    return x.replace(gauge_blocks(x.tree, x.blocks, g), orthogonal=x.orthogonal)


# -- construction ----------------------------------------------------------------


def random_ht(tree: DimensionTree, ranks: Sequence[int], shape: Sequence[int], seed=None) -> HTParams:
    """I.i.d. standard normal parameters, QR-orthogonalized."""
    validate_ranks(tree, ranks, shape)
    rng = np.random.default_rng(seed)
    blocks = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            blocks.append(rng.standard_normal((shape[node.modes[0]], ranks[t])))
        elif t == tree.root:
            blocks.append(rng.standard_normal((ranks[node.left], ranks[node.right])))
        else:
            blocks.append(rng.standard_normal((ranks[node.left], ranks[node.right], ranks[t])))
    return qr_orthogonalize(HTParams(tree, tuple(blocks)))


def truncate(xfull: np.ndarray, tree: DimensionTree, ranks: Sequence[int], return_error: bool = False):
    """Hierarchical SVD of a dense tensor.

    Each non-root node keeps the leading ``k_t`` left singular vectors of its
    matricization; transfer tensors are obtained by projecting a node's basis
    onto the Kronecker product of its children's bases. Exact (to rounding)
    when every matricization rank is at most the prescribed rank.
    """
    xfull = np.asarray(xfull, dtype=float)
    if xfull.ndim != tree.d:
        raise ShapeError(f"{xfull.ndim}-tensor does not match tree over {tree.d} modes")
    shape = xfull.shape
    for t in tree.non_root():
        node = tree[t]
        n_t = prod(shape[m] for m in node.modes)
        if ranks[t] > min(n_t, xfull.size // n_t):
            raise RankError(f"rank {ranks[t]} at node {t} exceeds matricization size")
    validate_ranks(tree, ranks, shape)
    bases: list = [None] * len(tree)
    for t in tree.non_root():
        u, _, _ = np.linalg.svd(matricize(xfull, tree[t].modes), full_matrices=False)
        bases[t] = u[:, : ranks[t]]
    blocks: list = [None] * len(tree)
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            blocks[t] = bases[t]
            continue
        ul, ur = bases[node.left], bases[node.right]
        if t == tree.root:
            nl, nr = ul.shape[0], ur.shape[0]
            xm = tensor_to_root(tree, xfull).reshape(nl, nr, order="F")
            blocks[t] = ul.T @ xm @ ur
        else:
            nl, nr = ul.shape[0], ur.shape[0]
            ut = bases[t].reshape(nl, nr, -1, order="F")
            blocks[t] = np.einsum("iw,jy,ijz->wyz", ul, ur, ut, optimize=True)
    x = qr_orthogonalize(HTParams(tree, tuple(blocks)))
    if not return_error:
        return x
    nrm = np.linalg.norm(xfull)
    err = np.linalg.norm(expand(x) - xfull) / nrm if nrm > 0 else 0.0
    return x, float(err)
