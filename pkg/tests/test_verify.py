import pytest

from htmanifold.verify import SUITES, run_suites


def test_all_suites_pass():
    res = run_suites(seed=0, trials=3)
    assert len(res) == 3 * len(SUITES)
    bad = [(r.check, r.seed, r.residual) for r in res if not r.passed]
    assert not bad


def test_seed_reproduces_residuals():
    a = [r.as_dict() for r in run_suites(seed=4, trials=2)]
    b = [r.as_dict() for r in run_suites(seed=4, trials=2)]
    assert a == b
    c = [r.as_dict() for r in run_suites(seed=5, trials=2)]
    assert [r["residual"] for r in a] != [r["residual"] for r in c]


def test_mutation_is_caught_only_by_adjoint_suite():
    res = run_suites(seed=0, trials=3, mutate="adjoint-sign")
    failed = {r.check for r in res if not r.passed}
    assert failed == {"Gramian derivative adjoint pair"}
    assert all(r.module == "gauss_newton" for r in res if not r.passed)
