import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htmanifold.errors import CapacityError, ModeSetError, ShapeError
from htmanifold.tensor_core import (
    adjoint_core_derivative,
    adjoint_factor_derivative,
    check_dense_size,
    contract,
    dematricize,
    inner,
    matricize,
    multilinear_apply,
    unvec,
    vec,
)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(np.asarray(b)), 1e-300)


@st.composite
def tensor_and_modes(draw):
    d = draw(st.integers(1, 4))
    shape = tuple(draw(st.lists(st.integers(1, 4), min_size=d, max_size=d)))
    seed = draw(st.integers(0, 2**31 - 1))
    modes = draw(st.permutations(range(d)))
    k = draw(st.integers(1, d))
    x = np.random.default_rng(seed).standard_normal(shape)
    return x, list(modes[:k])


def test_matricize_small_example():
    x = unvec(np.arange(1, 9, dtype=float), (2, 2, 2))
    np.testing.assert_array_equal(matricize(x, [0]), [[1, 3, 5, 7], [2, 4, 6, 8]])
    np.testing.assert_array_equal(dematricize(matricize(x, [0]), [0], (2, 2, 2)), x)


def test_matricize_all_modes_is_vec():
    x = np.random.default_rng(0).standard_normal((2, 3, 4))
    np.testing.assert_array_equal(matricize(x, [0, 1, 2])[:, 0], vec(x))


def test_matricize_brute_force_index_oracle():
    x = np.random.default_rng(1).standard_normal((3, 4, 5))
    m = matricize(x, [1])
    for i1, i2, i3 in itertools.product(range(3), range(4), range(5)):
        assert m[i2, i1 + 3 * i3] == x[i1, i2, i3]


def test_dematricize_degenerate_scalar():
    y = dematricize(np.array([[2.5]]), [0], (1, 1))
    assert y.shape == (1, 1) and y[0, 0] == 2.5


def test_dematricize_all_mode_sets_bit_exact():
    x = np.random.default_rng(2).standard_normal((2, 3, 4))
    for k in (1, 2, 3):
        for t in itertools.combinations(range(3), k):
            np.testing.assert_array_equal(dematricize(matricize(x, t), t, x.shape), x)


@settings(max_examples=60, deadline=None)
@given(tensor_and_modes())
def test_matricize_round_trip_property(case):
    x, t = case
    np.testing.assert_array_equal(dematricize(matricize(x, t), t, x.shape), x)


def test_mode_set_errors():
    x = np.zeros((2, 2))
    with pytest.raises(ModeSetError):
        matricize(x, [0, 0])
    with pytest.raises(ModeSetError):
        matricize(x, [2])
    with pytest.raises(ModeSetError):
        matricize(x, [])
    with pytest.raises(ShapeError):
        dematricize(np.zeros((3, 2)), [0], (2, 2))


def test_multilinear_matrix_case():
    rng = np.random.default_rng(3)
    a, b, x = rng.standard_normal((5, 3)), rng.standard_normal((6, 4)), rng.standard_normal((3, 4))
    np.testing.assert_allclose(multilinear_apply([a, b], x), a @ x @ b.T, rtol=1e-13)


def test_multilinear_identity_and_loop_oracle():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 2, 2))
    np.testing.assert_array_equal(multilinear_apply([np.eye(2)] * 3, x), x)
    mats = [rng.standard_normal((3, 2)) for _ in range(3)]
    want = np.zeros((3, 3, 3))
    for i, j, k, p, q, r in itertools.product(range(3), range(3), range(3), range(2), range(2), range(2)):
        want[i, j, k] += mats[0][i, p] * mats[1][j, q] * mats[2][k, r] * x[p, q, r]
    np.testing.assert_allclose(multilinear_apply(mats, x), want, rtol=1e-13)


def test_multilinear_matricization_identity():
    # (A_1 x_1 ... x) ^(t) = (kron of A_t) X^(t) (kron of A_tc)^T, checked through vec
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 4))
    mats = [rng.standard_normal((m, n)) for m, n in ((3, 2), (2, 3), (5, 4))]
    y = multilinear_apply(mats, x)
    kron = np.kron(mats[2], np.kron(mats[1], mats[0]))  # first mode fastest
    np.testing.assert_allclose(vec(y), kron @ vec(x), rtol=1e-12)


def test_multilinear_shape_error():
    with pytest.raises(ShapeError):
        multilinear_apply([np.eye(3), None], np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        multilinear_apply([None], np.zeros((2, 2)))


def test_composition_and_adjoint_move():
    rng = np.random.default_rng(6)
    x, y = rng.standard_normal((2, 3, 2)), rng.standard_normal((4, 4, 4))
    a = [rng.standard_normal((4, n)) for n in x.shape]
    b = [rng.standard_normal((4, 4)) for _ in range(3)]
    c = [rng.standard_normal((3, 4)) for _ in range(3)]
    lhs = multilinear_apply(c, multilinear_apply(a, x))
    rhs = multilinear_apply([ci @ ai for ci, ai in zip(c, a)], x)
    assert rel(lhs, rhs) < 1e-12
    lhs = inner(multilinear_apply(a, x), multilinear_apply(b, y))
    rhs = inner(multilinear_apply([bi.T @ ai for ai, bi in zip(a, b)], x), y)
    assert abs(lhs - rhs) / abs(rhs) < 1e-12


def test_commutation_with_contraction():
    rng = np.random.default_rng(7)
    x, y = rng.standard_normal((3, 4, 5)), rng.standard_normal((3, 4, 5))
    a = rng.standard_normal((6, 4))
    lhs = contract(multilinear_apply([None, a, None], x), y, [0, 2], [0, 2])
    rhs = a @ contract(x, y, [0, 2], [0, 2])
    assert rel(lhs, rhs) < 1e-12


def test_contract_cases():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 4, 2))
    assert float(contract(x, x, [0, 1, 2], [0, 1, 2])) == pytest.approx(np.sum(x**2), rel=1e-14)
    m1, m2 = rng.standard_normal((3, 4)), rng.standard_normal((3, 5))
    np.testing.assert_allclose(contract(m1, m2, [0], [0]), m1.T @ m2, rtol=1e-13)
    y = rng.standard_normal((2, 4, 2))
    want = np.zeros((3, 2))
    for i, j, k, l in itertools.product(range(3), range(2), range(4), range(2)):
        want[i, j] += x[i, k, l] * y[j, k, l]
    np.testing.assert_allclose(contract(x, y, [1, 2], [1, 2]), want, rtol=1e-13)
    with pytest.raises(ShapeError):
        contract(x, y, [0], [0])
    with pytest.raises(ShapeError):
        contract(x, y, [1, 2], [1])


def test_contract_equals_dematricized_product():
    rng = np.random.default_rng(9)
    x, y = rng.standard_normal((3, 4, 5)), rng.standard_normal((4, 6, 5))
    got = contract(x, y, [1, 2], [0, 2])
    want = matricize(x, [0]) @ matricize(y, [0, 2])
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_adjoint_factor_derivative_identity():
    rng = np.random.default_rng(10)
    b = rng.standard_normal((2, 3, 4))
    mats = [rng.standard_normal((5, 2)), None, rng.standard_normal((3, 4))]
    c = rng.standard_normal((6, 3))
    y = rng.standard_normal((5, 6, 3))
    full = list(mats)
    full[1] = c
    lhs = inner(multilinear_apply(full, b), y)
    rhs = float(np.vdot(c, adjoint_factor_derivative(mats, b, y, 1)))
    assert abs(lhs - rhs) / abs(lhs) < 1e-12
    # all-identity factors with b = y: the contraction is the Gram of the mode-1 unfolding
    g = adjoint_factor_derivative([None, np.eye(3), np.eye(4)], b, b, 0)
    np.testing.assert_allclose(g, matricize(b, [0]) @ matricize(b, [0]).T, rtol=1e-13)
    assert not adjoint_factor_derivative(mats, b, np.zeros_like(y), 1).any()


def test_adjoint_factor_derivative_matrix_case():
    rng = np.random.default_rng(11)
    b, a2, y = rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), rng.standard_normal((2, 5))
    # P(C) = C b a2^T, so P*(Y) = Y a2 b^T
    np.testing.assert_allclose(adjoint_factor_derivative([None, a2], b, y, 0), y @ a2 @ b.T, rtol=1e-13)


def test_adjoint_core_derivative():
    rng = np.random.default_rng(12)
    mats = [rng.standard_normal((m, n)) for m, n in ((4, 2), (5, 3), (3, 3))]
    c, y = rng.standard_normal((2, 3, 3)), rng.standard_normal((4, 5, 3))
    lhs = inner(multilinear_apply(mats, c), y)
    rhs = inner(c, adjoint_core_derivative(mats, y))
    assert abs(lhs - rhs) / abs(lhs) < 1e-12
    q = [np.linalg.qr(rng.standard_normal((n, n)))[0] for n in (2, 3, 3)]
    assert rel(adjoint_core_derivative(q, multilinear_apply(q, c)), c) < 1e-13
    assert not adjoint_core_derivative(mats, np.zeros_like(y)).any()


def test_dense_size_limit():
    check_dense_size((1000, 1000))
    with pytest.raises(CapacityError):
        check_dense_size((2**16, 2**16))
