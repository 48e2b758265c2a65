import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from htmanifold.dimension_tree import complete_tree
from htmanifold.errors import ConditioningError, ContractError
from htmanifold.gauss_newton import (
    apply_hgn_inverse,
    default_eps,
    dgramians_adjoint,
    dgramians_forward,
    gramians,
    hgn_forward,
    regularizer_cotangents,
    regularizer_gradient,
    regularizer_value,
)
from htmanifold.ht_format import HTParams, apply_gauge, expand, make_ranks, qr_orthogonalize, random_gauge, random_ht
from htmanifold.riemannian import dphi, horizontal_residual, inner, random_tangent, step, tangent
from htmanifold.tensor_core import matricize

H = 1e-5


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@st.composite
def instances(draw, kmin=1):
    d = draw(st.integers(2, 5))
    shape = tuple(draw(st.lists(st.integers(3, 6), min_size=d, max_size=d)))
    k = draw(st.integers(kmin, 3))
    tree = complete_tree(d)
    seed = draw(st.integers(0, 2**31 - 1))
    return random_ht(tree, make_ranks(tree, k), shape, seed), seed


def matrix_case(b_root):
    tree = complete_tree(2)
    k = b_root.shape[0]
    return HTParams(tree, (np.asarray(b_root, dtype=float), np.eye(4)[:, :k], np.eye(5)[:, :k]), orthogonal=True)


def transfer_perturbation(x, seed):
    xi = random_tangent(x, seed)
    return [None if x.tree.is_leaf(t) else xi.blocks[t] for t in range(len(x.tree))], xi


def test_matrix_gramians():
    g = gramians(matrix_case(np.diag([3.0, 2.0])))
    np.testing.assert_allclose(g[1], np.diag([9.0, 4.0]))
    np.testing.assert_allclose(g[2], np.diag([9.0, 4.0]))
    assert g[0].shape == (1, 1) and g[0][0, 0] == 1.0


def test_rank_one_gramians_equal_squared_norm():
    tree = complete_tree(4)
    x = random_ht(tree, make_ranks(tree, 1), (3, 4, 5, 6), 0)
    g = gramians(x)
    nrm2 = np.linalg.norm(expand(x)) ** 2
    for t in tree.non_root():
        assert g[t][0, 0] == pytest.approx(nrm2, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(instances())
def test_gramian_svd_identity(case):
    x, _ = case
    g = gramians(x)
    full = expand(x)
    for t in x.tree.non_root():
        s = np.linalg.svd(matricize(full, x.tree[t].modes), compute_uv=False)[: x.rank(t)]
        w = np.sort(g.eig(t)[0])[::-1]
        np.testing.assert_allclose(w, s**2, rtol=0, atol=1e-10 * s[0] ** 2)


def test_regularizer_values():
    x = matrix_case(np.diag([3.0, 2.0]))
    assert regularizer_value(gramians(x)) == pytest.approx(2 * (13 + 1 / 9 + 1 / 4), rel=1e-14)
    xi = matrix_case(np.eye(2))
    assert regularizer_value(gramians(xi)) == pytest.approx(2 * 2 * 2)


def test_regularizer_matches_dense_svds():
    tree = complete_tree(4)
    x = random_ht(tree, make_ranks(tree, 2), (4, 5, 4, 5), 1)
    full = expand(x)
    want = 0.0
    for t in tree.non_root():
        s = np.linalg.svd(matricize(full, tree[t].modes), compute_uv=False)[: x.rank(t)]
        want += np.sum(s**2) + np.sum(s**-2)
    assert rel(regularizer_value(gramians(x)), want) < 1e-9


def test_regularizer_singular_raises_with_node():
    x = matrix_case(np.diag([1.0, 0.0]))
    with pytest.raises(ConditioningError) as exc:
        regularizer_value(gramians(x))
    assert exc.value.node in (1, 2)
    with pytest.raises(ConditioningError):
        regularizer_gradient(x)


def test_hgn_identity_gramians_and_ridge_limit():
    x = matrix_case(np.eye(2))
    z = random_tangent(x, 2)
    out = apply_hgn_inverse(x, z, 0.0)
    assert (out - z).norm() < 1e-14
    big = apply_hgn_inverse(x, z, 1e12)
    for t in (1, 2):
        assert np.linalg.norm(big.blocks[t]) < 1e-10
    np.testing.assert_array_equal(big.blocks[0], z.blocks[0])


def test_hgn_singular_without_ridge():
    x = matrix_case(np.diag([1.0, 0.0]))
    z = random_tangent(x, 3)
    with pytest.raises(ConditioningError):
        apply_hgn_inverse(x, z, 0.0)
    apply_hgn_inverse(x, z)  # the default ridge regularizes


@settings(max_examples=20, deadline=None)
@given(instances())
def test_hgn_round_trip_and_horizontality(case):
    x, seed = case
    z = random_tangent(x, seed)
    back = apply_hgn_inverse(x, hgn_forward(x, z, 0.0), 0.0)
    assert (back - z).norm() < 1e-10 * z.norm()
    p = apply_hgn_inverse(x, z)
    assert horizontal_residual(x, p) < 1e-10 * max(p.norm(), 1.0)
    eps = default_eps(gramians(x))
    assert eps == pytest.approx(1e-8 * gramians(x).max_eigenvalue())


def test_hgn_is_gauss_newton_operator():
    # <dphi xi, dphi zeta> = <xi, H zeta> for horizontal xi, zeta
    tree = complete_tree(4)
    x = random_ht(tree, make_ranks(tree, 2), (4, 4, 5, 5), 4)
    a, b = random_tangent(x, 5), random_tangent(x, 6)
    lhs = float(np.vdot(dphi(x, a), dphi(x, b)))
    assert rel(lhs, inner(x, a, hgn_forward(x, b, 0.0))) < 1e-10


def test_dgramians_forward_simple_cases():
    x = matrix_case(np.array([[2.0, 1.0], [0.0, 1.0]]))
    db = np.array([[0.5, -1.0], [0.25, 2.0]])
    dg = dgramians_forward(x, [db, None, None])
    b = x.blocks[0]
    np.testing.assert_allclose(dg[1], db @ b.T + b @ db.T)
    np.testing.assert_allclose(dg[2], db.T @ b + b.T @ db)
    assert not dg[0].any()
    tree = complete_tree(4)
    y = random_ht(tree, make_ranks(tree, 2), (3,) * 4, 7)
    zero = dgramians_forward(y, [np.zeros_like(c) if not tree.is_leaf(t) else None for t, c in enumerate(y.blocks)])
    assert all(not m.any() for m in zero)


def test_dgramians_forward_finite_differences():
    tree = complete_tree(5)
    x = random_ht(tree, make_ranks(tree, 3), (4,) * 5, 8)
    # unit Frobenius norm keeps rounding in the difference quotient below the tolerance
    blocks = list(x.blocks)
    blocks[tree.root] = blocks[tree.root] / np.linalg.norm(blocks[tree.root])
    x = x.replace(blocks, orthogonal=True)
    _, xi = transfer_perturbation(x, 9)
    xi = (1 / xi.norm()) * xi
    db = [None if tree.is_leaf(t) else xi.blocks[t] for t in range(len(tree))]
    dg = dgramians_forward(x, db)
    gp = gramians(qr_orthogonalize(step(x, xi, H)))
    gm = gramians(qr_orthogonalize(step(x, xi, -H)))
    # leaf blocks of xi are horizontal, so they leave the Gramians unchanged to first order
    for t in tree.non_root():
        fd = (gp[t] - gm[t]) / (2 * H)
        assert np.linalg.norm(fd - dg[t]) <= 1e-7 * np.linalg.norm(dg[t])


@settings(max_examples=20, deadline=None)
@given(instances(kmin=2))
def test_dgramians_adjoint_pair(case):
    x, seed = case
    rng = np.random.default_rng(seed)
    db, _ = transfer_perturbation(x, rng)
    dg = dgramians_forward(x, db)
    w = [np.zeros((1, 1))] + [rng.standard_normal((x.rank(t), x.rank(t))) for t in x.tree.non_root()]
    adj = dgramians_adjoint(x, w)
    lhs = sum(float(np.vdot(dg[t], w[t])) for t in x.tree.non_root())
    rhs = sum(float(np.vdot(db[t], adj[t])) for t in x.tree.internal)
    assert rel(lhs, rhs) < 1e-10


def test_dgramians_adjoint_matrix_case_and_contract():
    x = matrix_case(np.array([[2.0, 1.0], [0.0, 1.0]]))
    wl, wr = np.array([[1.0, 2.0], [0.0, 3.0]]), np.array([[0.0, -1.0], [4.0, 1.0]])
    adj = dgramians_adjoint(x, [np.zeros((1, 1)), wl, wr])
    b = x.blocks[0]
    # d/dB <B B^T, Wl> + <B^T B, Wr> = (Wl + Wl^T) B + B (Wr + Wr^T)
    np.testing.assert_allclose(adj[0], (wl + wl.T) @ b + b @ (wr + wr.T))
    assert all(a is None or not a.any() for a in dgramians_adjoint(x, [np.zeros((1, 1)), np.zeros((2, 2)), np.zeros((2, 2))]))
    with pytest.raises(ContractError):
        dgramians_adjoint(x, [np.ones((1, 1)), wl, wr])


def test_regularizer_gradient_identity_gramians_vanish():
    x = matrix_case(np.eye(2))
    assert regularizer_gradient(x).norm() < 1e-14
    for c in regularizer_cotangents(gramians(x)):
        assert not np.any(np.abs(c) > 1e-14)


def unit_norm(x):
    blocks = list(x.blocks)
    blocks[x.tree.root] = blocks[x.tree.root] / np.linalg.norm(blocks[x.tree.root])
    return x.replace(blocks, True)


@settings(max_examples=15, deadline=None)
@given(instances(kmin=2))
def test_regularizer_gradient_finite_differences(case):
    x, seed = case
    x = unit_norm(x)
    xi = random_tangent(x, seed)
    xi = (1 / xi.norm()) * xi
    rg = regularizer_gradient(x)
    for t in x.tree.leaves:
        assert not rg.blocks[t].any()
    lmin = gramians(x).min_eigenvalue()
    assume(lmin > 1e-6)  # beyond this the difference quotient drowns in rounding
    ip = inner(x, rg, xi)
    # singular values move by about h, so steps scale with the smallest one;
    # the best of a short ladder balances truncation against rounding
    errs = []
    for c in (1e-3, 1e-4, 1e-5):
        h = c * np.sqrt(lmin)
        rp = regularizer_value(gramians(qr_orthogonalize(step(x, xi, h))))
        rm = regularizer_value(gramians(qr_orthogonalize(step(x, xi, -h))))
        fd = (rp - rm) / (2 * h)
        errs.append(abs(fd - ip) / max(abs(fd), abs(ip), 1e-3))
    assert min(errs) <= 1e-6


def test_regularizer_gauge_invariant():
    tree = complete_tree(4)
    x = random_ht(tree, make_ranks(tree, 3), (4,) * 4, 10)
    y = apply_gauge(x, random_gauge(x, 11))
    assert rel(regularizer_value(gramians(x)), regularizer_value(gramians(y))) < 1e-12


def test_regularizer_gradient_is_horizontal():
    tree = complete_tree(4)
    x = random_ht(tree, make_ranks(tree, 3), (4,) * 4, 12)
    rg = regularizer_gradient(x)
    assert horizontal_residual(x, rg) < 1e-12 * rg.norm()
    t = tangent(x, rg.blocks)
    assert t.norm() == pytest.approx(rg.norm())
