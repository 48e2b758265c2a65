"""Gramians, the Gauss-Newton preconditioner and the Gramian-trace regularizer.

For orthogonal parameters the Gramian of node ``t`` is the ``k_t x k_t``
matrix whose eigenvalues are the squared singular values of ``X^(t)``. They
obey a root-to-leaves recursion over the transfer tensors alone:

    G_root = 1
    G_l[a, c] = sum_{y,z,q} B[a, y, z] G_t[z, q] B[c, y, q]
    G_r[b, d] = sum_{w,z,q} B[w, b, z] G_t[z, q] B[w, d, q]
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ConditioningError, ContractError, ShapeError
from .ht_format import HTParams
from .riemannian import TangentVector, _project_core, _require_base, _require_orthogonal

COND_TOL = 1e-14
DEFAULT_EPS_REL = 1e-8


class GramianSet:
    """Per-node Gramians with cached symmetric eigendecompositions."""

    def __init__(self, tree, mats: Sequence[np.ndarray]):
        self.tree = tree
        self.mats = tuple(mats)
        self._eig: dict = {}

    def __getitem__(self, t: int) -> np.ndarray:
        return self.mats[t]

    def __len__(self) -> int:
        return len(self.mats)

    def eig(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        if t not in self._eig:
            g = self.mats[t]
            self._eig[t] = np.linalg.eigh((g + g.T) / 2)
        return self._eig[t]

    def max_eigenvalue(self) -> float:
        return max(float(self.eig(t)[0][-1]) for t in self.tree.non_root())

    def condition_numbers(self) -> dict[int, float]:
        out = {}
        for t in self.tree.non_root():
            w = self.eig(t)[0]
            out[t] = float(w[-1] / w[0]) if w[0] > 0 else float("inf")
        return out

    def min_eigenvalue(self) -> float:
        return min(float(self.eig(t)[0][0]) for t in self.tree.non_root())


def _child_gramians(b: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bg = np.einsum("wyz,zq->wyq", b, g)
    gl = np.einsum("ayq,cyq->ac", bg, b)
    gr = np.einsum("wbq,wdq->bd", bg, b)
    return gl, gr


def gramians(x: HTParams) -> GramianSet:
    _require_orthogonal(x)
    tree = x.tree
    mats: list = [None] * len(tree)
    mats[tree.root] = np.ones((1, 1))
    for t in tree.internal:
        node = tree[t]
        mats[node.left], mats[node.right] = _child_gramians(x.core3(t), mats[t])
    return GramianSet(tree, mats)


def _checked_eig(g: GramianSet, t: int) -> tuple[np.ndarray, np.ndarray]:
    w, v = g.eig(t)
    if w[-1] <= 0 or w[0] <= COND_TOL * w[-1]:
        raise ConditioningError(f"Gramian at node {t} is numerically singular", node=t)
    return w, v


def default_eps(g: GramianSet) -> float:
    return DEFAULT_EPS_REL * g.max_eigenvalue()


def _ridge_factors(g: GramianSet, eps: float, inverse: bool) -> list:
    out: list = [None] * len(g)
    for t in g.tree.non_root():
        w, v = g.eig(t)
        w = w + eps
        if w[-1] <= 0 or w[0] <= COND_TOL * w[-1]:
            raise ConditioningError(f"Gramian at node {t} is numerically singular (eps={eps:g})", node=t)
        out[t] = (v / w) @ v.T if inverse else (v * w) @ v.T
    return out


def _apply_node_mats(x: HTParams, blocks: Sequence[np.ndarray], mats: Sequence) -> list[np.ndarray]:
    tree = x.tree
    out = []
    for t, blk in enumerate(blocks):
        if t == tree.root:
            out.append(np.array(blk, copy=True))
        elif tree.is_leaf(t):
            out.append(blk @ mats[t])
        else:
            out.append(np.einsum("wyz,zq->wyq", blk, mats[t]))
    return out


def apply_hgn_inverse(x: HTParams, zeta: TangentVector, eps: Optional[float] = None, g: Optional[GramianSet] = None) -> TangentVector:
    """Solve with the block-diagonal Gauss-Newton operator.

    Each non-root block is multiplied by ``(G_t + eps I)^{-1}`` along its rank
    index; the root block is left as is. ``eps=None`` uses the default ridge
    ``1e-8 * max_t lambda_max(G_t)``.
    """
    _require_base(x, zeta)
    g = gramians(x) if g is None else g
    eps = default_eps(g) if eps is None else float(eps)
    if eps < 0:
        raise ShapeError("ridge eps must be nonnegative")
    return TangentVector(tuple(_apply_node_mats(x, zeta.blocks, _ridge_factors(g, eps, True))), x.uid, zeta.horizontal)


def hgn_forward(x: HTParams, xi: TangentVector, eps: float = 0.0, g: Optional[GramianSet] = None) -> TangentVector:
    """Forward Gauss-Newton map, the inverse of :func:`apply_hgn_inverse`."""
    _require_base(x, xi)
    g = gramians(x) if g is None else g
    return TangentVector(tuple(_apply_node_mats(x, xi.blocks, _ridge_factors(g, float(eps), False))), x.uid, xi.horizontal)


# -- regularizer ----------------------------------------------------------------


def regularizer_value(g: GramianSet) -> float:
    """``sum_{t != root} tr(G_t) + tr(G_t^{-1})``."""
    total = 0.0
    for t in g.tree.non_root():
        w, _ = _checked_eig(g, t)
        total += float(np.sum(w) + np.sum(1.0 / w))
    return total


def dgramians_forward(x: HTParams, db: Sequence[Optional[np.ndarray]], g: Optional[GramianSet] = None) -> list[np.ndarray]:
    """Directional derivative of all Gramians along transfer-tensor perturbations.

    `db` is indexed by node id; entries at leaves are ignored and the root entry
    has the root block's matrix shape.
    """
    _require_orthogonal(x)
    tree = x.tree
    g = gramians(x) if g is None else g
    dg: list = [None] * len(tree)
    dg[tree.root] = np.zeros((1, 1))
    for t in tree.internal:
        node = tree[t]
        b = x.core3(t)
        dbt = np.asarray(db[t], dtype=float)
        if t == tree.root:
            dbt = dbt[:, :, None]
        if dbt.shape != b.shape:
            raise ShapeError(f"perturbation at node {t} has shape {dbt.shape}, expected {b.shape}")
        al, ar = _child_gramians(b, dg[t]) if np.any(dg[t]) else (0.0, 0.0)
        dbg = np.einsum("wyz,zq->wyq", dbt, g[t])
        ml = np.einsum("ayq,cyq->ac", dbg, b)
        mr = np.einsum("wbq,wdq->bd", dbg, b)
        dg[node.left] = al + ml + ml.T
        dg[node.right] = ar + mr + mr.T
    return dg


def dgramians_adjoint(x: HTParams, dg: Sequence[Optional[np.ndarray]], g: Optional[GramianSet] = None, project: bool = True) -> list:
    """Adjoint of :func:`dgramians_forward`: cotangents on Gramians to transfer tensors.

    Cotangents are pulled from the leaves towards the root; the result is
    indexed by node id (``None`` at leaves) and projected to the horizontal
    space at non-root internal nodes.
    """
    _require_orthogonal(x)
    tree = x.tree
    if dg[tree.root] is not None and np.any(np.asarray(dg[tree.root]) != 0):
        raise ContractError("the root Gramian is constant; its cotangent must be zero")
    g = gramians(x) if g is None else g
    acc: list = [None] * len(tree)
    for t in tree.non_root():
        k = x.rank(t)
        w = np.zeros((k, k)) if dg[t] is None else np.asarray(dg[t], dtype=float)
        if w.shape != (k, k):
            raise ShapeError(f"Gramian cotangent at node {t} has shape {w.shape}, expected {(k, k)}")
        acc[t] = w.copy()
    out: list = [None] * len(tree)
    for t in tree.traversal("children-first"):
        node = tree[t]
        if node.is_leaf:
            continue
        b = x.core3(t)
        wl, wr = acc[node.left], acc[node.right]
        vl, vr = wl + wl.T, wr + wr.T
        bg = np.einsum("cyq,zq->cyz", b, g[t])
        dbt = np.einsum("ac,cyz->ayz", vl, bg) + np.einsum("bd,wdz->wbz", vr, bg)
        if t == tree.root:
            out[t] = dbt[:, :, 0]
        else:
            out[t] = dbt
            acc[t] = acc[t] + np.einsum("ayz,ac,cyq->zq", b, wl, b, optimize=True) + np.einsum("wbz,bd,wdq->zq", b, wr, b, optimize=True)
    if project:
        for t in tree.internal:
            if t != tree.root:
                out[t] = _project_core(x.blocks[t], out[t])
    return out


def regularizer_cotangents(g: GramianSet) -> list:
    """``dR/dG_t = V_t (I - S_t^{-2}) V_t^T`` for every non-root node."""
    out: list = [None] * len(g)
    out[g.tree.root] = np.zeros((1, 1))
    for t in g.tree.non_root():
        w, v = _checked_eig(g, t)
        out[t] = (v * (1.0 - 1.0 / w**2)) @ v.T
    return out


def regularizer_gradient(x: HTParams, g: Optional[GramianSet] = None) -> TangentVector:
    """Riemannian gradient of the regularizer; leaf blocks are zero."""
    g = gramians(x) if g is None else g
    db = dgramians_adjoint(x, regularizer_cotangents(g), g)
    blocks = [np.zeros_like(x.blocks[t]) if x.tree.is_leaf(t) else db[t] for t in range(len(x.tree))]
    return TangentVector(tuple(blocks), x.uid, True)
