"""Randomized invariant suites with fixed seeds.

Each check returns a :class:`CheckResult` with the observed relative residual
and the tolerance it is held to. ``mutate`` injects a deliberate defect so the
suites can be shown to catch it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import gauss_newton as gn
from .dimension_tree import complete_tree
from .ht_format import apply_gauge, expand, make_ranks, qr_orthogonalize, random_gauge, random_ht, orthogonality_residual
from .riemannian import (
    dphi,
    inner,
    objective_gradient_dense,
    objective_gradient_sparse,
    objective_sparse,
    random_tangent,
    random_vertical_generator,
    riemannian_gradient_dense,
    step,
    vertical_vector,
)
from .tensor_core import dematricize, matricize

MUTATIONS = ("adjoint-sign",)
FD_STEP = 1e-5


@dataclass
class CheckResult:
    module: str
    check: str
    seed: int
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _instance(seed: int, d: Optional[int] = None, kmin: int = 1):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(3, 5)) if d is None else d
    tree = complete_tree(d)
    shape = tuple(int(n) for n in rng.integers(3, 7, size=d))
    k = int(rng.integers(kmin, 4))
    ranks = tuple(min(r, min(shape)) for r in make_ranks(tree, k))
    return tree, shape, random_ht(tree, ranks, shape, rng), rng


def _adjoint_fn(mutate: Optional[str]) -> Callable:
    if mutate == "adjoint-sign":

        def bad(x, dg, g=None, project=True):
            out = gn.dgramians_adjoint(x, dg, g, project)
            for t in x.tree.internal:
                if t != x.tree.root:
                    out[t] = -out[t]
            return out

        return bad
    return gn.dgramians_adjoint


def check_matricize(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    shape = tuple(int(n) for n in rng.integers(2, 5, size=4))
    x = rng.standard_normal(shape)
    t = list(rng.permutation(4)[: int(rng.integers(1, 4))])
    res = float(np.max(np.abs(dematricize(matricize(x, t), t, shape) - x)))
    return CheckResult("tensor_core", "matricize round trip", seed, res, 0.0)


def check_qr(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    g = apply_gauge(x, random_gauge(x, rng))
    y = qr_orthogonalize(g.replace([b * 1.5 for b in g.blocks[:1]] + list(g.blocks[1:]), False))
    res = max(orthogonality_residual(y), float(np.linalg.norm(expand(y) - 1.5 * expand(x)) / (1.5 * np.linalg.norm(expand(x)))))
    return CheckResult("ht_format", "QR orthogonalization", seed, res, 1e-12)


def check_adjoint(seed: int) -> CheckResult:
    _, shape, x, rng = _instance(seed)
    xi = random_tangent(x, rng)
    z = rng.standard_normal(shape)
    lhs = float(np.vdot(dphi(x, xi), z))
    rhs = inner(x, riemannian_gradient_dense(x, z), xi)
    return CheckResult("riemannian", "adjoint pair dphi / gradient", seed, _rel(lhs, rhs), 1e-10)


def check_vertical(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    gen = random_vertical_generator(x, rng)
    gnorm = np.sqrt(sum(np.sum(gt**2) for gt in gen if gt is not None))
    res = float(np.linalg.norm(dphi(x, vertical_vector(x, gen))) / (np.linalg.norm(expand(x)) * max(gnorm, 1e-300)))
    return CheckResult("riemannian", "vertical annihilation", seed, res, 1e-10)


def _problem(x, rng, frac=0.3):
    n = int(np.prod(x.shape))
    m = max(1, int(frac * n))
    lin = np.sort(rng.permutation(n)[:m])
    idx = np.stack(np.unravel_index(lin, x.shape, order="F"), axis=1)
    return idx, rng.standard_normal(m)


def check_sparse_dense(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    idx, b = _problem(x, rng)
    f1, g1 = objective_gradient_sparse(x, idx, b)
    f2, g2 = objective_gradient_dense(x, idx, b)
    res = max(_rel(f1, f2), (g1 - g2).norm() / max(g2.norm(), 1e-300))
    return CheckResult("riemannian", "sparse / dense gradient", seed, res, 1e-10)


def _unit_tangent(x, rng):
    xi = random_tangent(x, rng)
    return (1.0 / xi.norm()) * xi


def check_fd_gradient(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    idx, b = _problem(x, rng)
    xi = _unit_tangent(x, rng)
    _, g = objective_gradient_sparse(x, idx, b)
    fd = (objective_sparse(step(x, xi, FD_STEP), idx, b) - objective_sparse(step(x, xi, -FD_STEP), idx, b)) / (2 * FD_STEP)
    return CheckResult("riemannian", "gradient vs finite differences", seed, _rel(fd, inner(x, g, xi)), 1e-6)


def check_gramian_svd(seed: int) -> CheckResult:
    tree, _, x, _ = _instance(seed)
    g = gn.gramians(x)
    full = expand(x)
    res = 0.0
    for t in tree.non_root():
        s = np.linalg.svd(matricize(full, tree[t].modes), compute_uv=False)[: x.rank(t)]
        w = np.sort(g.eig(t)[0])[::-1]
        res = max(res, float(np.max(np.abs(w - s**2)) / s[0] ** 2))
    return CheckResult("gauss_newton", "Gramian eigenvalues = squared singular values", seed, res, 1e-10)


def check_dg_adjoint(seed: int, mutate: Optional[str] = None) -> CheckResult:
    tree, _, x, rng = _instance(seed, d=4, kmin=2)
    xi = random_tangent(x, rng)
    db = [None if tree.is_leaf(t) else xi.blocks[t] for t in range(len(tree))]
    dg = gn.dgramians_forward(x, db)
    w = [np.zeros((1, 1))] + [rng.standard_normal((x.rank(t), x.rank(t))) for t in tree.non_root()]
    adj = _adjoint_fn(mutate)(x, w)
    lhs = sum(float(np.vdot(dg[t], w[t])) for t in tree.non_root())
    rhs = sum(float(np.vdot(db[t], adj[t])) for t in tree.internal)
    return CheckResult("gauss_newton", "Gramian derivative adjoint pair", seed, _rel(lhs, rhs), 1e-10)


def check_regularizer_fd(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    blocks = list(x.blocks)
    blocks[x.tree.root] = blocks[x.tree.root] / np.linalg.norm(blocks[x.tree.root])
    x = x.replace(blocks, True)
    xi = _unit_tangent(x, rng)
    ip = inner(x, gn.regularizer_gradient(x), xi)
    # singular values move by about h, so steps scale with the smallest one;
    # the best of a short ladder balances truncation against rounding
    smin = np.sqrt(gn.gramians(x).min_eigenvalue())
    res = np.inf
    for c in (1e-3, 1e-4, 1e-5):
        h = c * smin
        rp = gn.regularizer_value(gn.gramians(qr_orthogonalize(step(x, xi, h))))
        rm = gn.regularizer_value(gn.gramians(qr_orthogonalize(step(x, xi, -h))))
        fd = (rp - rm) / (2 * h)
        # both vanish when every Gramian is the identity (rank-1 instances)
        res = min(res, abs(fd - ip) / max(abs(fd), abs(ip), 1e-3))
    return CheckResult("gauss_newton", "regularizer gradient vs finite differences", seed, float(res), 1e-6)


def check_gauge(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    idx, b = _problem(x, rng)
    y = apply_gauge(x, random_gauge(x, rng))
    f1, g1 = objective_gradient_sparse(x, idx, b)
    f2, g2 = objective_gradient_sparse(y, idx, b)
    r1 = gn.regularizer_value(gn.gramians(x))
    r2 = gn.regularizer_value(gn.gramians(y))
    res = max(
        float(np.linalg.norm(expand(x) - expand(y)) / np.linalg.norm(expand(x))),
        _rel(f1, f2),
        _rel(g1.norm(), g2.norm()),
        _rel(r1, r2),
    )
    return CheckResult("ht_format", "gauge invariance", seed, res, 1e-10)


def check_hgn_roundtrip(seed: int) -> CheckResult:
    _, _, x, rng = _instance(seed)
    z = random_tangent(x, rng)
    back = gn.apply_hgn_inverse(x, gn.hgn_forward(x, z, 0.0), 0.0)
    return CheckResult("gauss_newton", "Gauss-Newton forward / inverse", seed, (back - z).norm() / z.norm(), 1e-10)


SUITES: dict[str, Callable] = {
    "matricize": check_matricize,
    "qr": check_qr,
    "adjoint": check_adjoint,
    "vertical": check_vertical,
    "sparse_dense": check_sparse_dense,
    "fd_gradient": check_fd_gradient,
    "gramian_svd": check_gramian_svd,
    "dg_adjoint": check_dg_adjoint,
    "regularizer_fd": check_regularizer_fd,
    "gauge": check_gauge,
    "hgn_roundtrip": check_hgn_roundtrip,
}


def run_suites(seed: int = 0, trials: int = 5, mutate: Optional[str] = None) -> list[CheckResult]:
    """Run every suite on `trials` instances derived from `seed`."""
    out = []
    for name, fn in SUITES.items():
        for j in range(trials):
            s = seed * 1000 + j
            out.append(fn(s, mutate) if name == "dg_adjoint" else fn(s))
    return out
