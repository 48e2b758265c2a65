import pytest

from htmanifold.config import load_config, parse_config
from htmanifold.dimension_tree import complete_tree, parse_tree
from htmanifold.errors import ConfigError

BASIC = """\
seed: 3
d: 4
n: 10
ranks: {leaf: 2, internal: 2}
sampler: {kind: points, fraction: 0.2}
solver: {method: cg, max_iters: 50}
"""


def test_basic_config(tmp_path):
    cfg = parse_config(BASIC)
    assert cfg.tree == complete_tree(4) and cfg.shape == (10,) * 4
    assert cfg.ranks == (1,) + (2,) * 6 and cfg.fit_ranks == cfg.ranks
    assert cfg.seed == 3 and cfg.sampler.fraction == 0.2 and cfg.sampler.kind == "points"
    assert cfg.solver.method == "cg" and cfg.solver.max_iters == 50 and cfg.bench is None
    p = tmp_path / "c.yaml"
    p.write_text(BASIC)
    assert load_config(p).config_hash() == cfg.config_hash()
    assert parse_config(BASIC + "\n").config_hash() != cfg.config_hash()


def test_tree_fibers_and_rank_list():
    cfg = parse_config(
        'tree: "((1,3),(2,4))"\nshape: [6, 6, 8, 8]\nranks: [2, 2, 2, 2, 2, 2]\n'
        "fit_ranks: {leaf: 3, internal: 2}\n"
        "sampler: {kind: fibers, free_modes: [1, 2], fraction: 0.25}\n"
        "solver: {lambda: 0.01, retraction: sqrt, gamma: null}\ninit: random\n"
    )
    assert cfg.tree == parse_tree("((1,3),(2,4))")
    assert cfg.sampler.free_modes == (0, 1)
    assert cfg.solver.lam == 0.01 and cfg.solver.retraction == "sqrt" and cfg.init == "random"
    leaves = [t for t in range(len(cfg.tree)) if cfg.tree.is_leaf(t)]
    assert all(cfg.fit_ranks[t] == 3 for t in leaves)


def test_bench_section():
    cfg = parse_config(BASIC + "bench: {axis: K, grid: [32, 64], repeats: 3, base: {d: 4, n: 200, samples: 1000}}\n")
    b = cfg.bench
    assert b.axis == "K" and b.grid == (32, 64) and b.repeats == 3 and b.path == "sparse"
    assert b.base == (4, 200, None, 1000)
    n = parse_config(BASIC + "bench: {axis: N, grid: [8, 12]}\n").bench
    assert n.path == "dense" and n.base is None


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("d: 4\nn: 10\nranks: {leaf: 2}\nbogus: 1\n", 4, 8),
        ("d: 4\nn: 10\nranks: {leaf: 2}\nsampler: {fraction: 1.5}\n", 4, 21),
        ("d: 4\nn: 10\nranks: {leaf: two}\n", 3, 15),
        ("d: 4\nn: 10\nranks: [1, 2]\n", 3, 8),
        ("d: 4\nn: 10\nranks: {leaf: 2}\nsolver: {method: newton}\n", 4, 9),
        ("d: 4\nn: 10\nranks: {leaf: 2}\nsolver: {max_iters: -1}\n", 4, 21),
        ("d: 4\nn: 10\nranks: {leaf: 2}\nd: 5\n", 4, 1),
        ('tree: "((1,2),3"\nn: 4\nranks: {leaf: 1}\n', 1, 7),
        ("d: 4\nn: 10\nranks: {leaf: 2\n", 4, 1),
        ("d: 3\nn: 2\nranks: {leaf: 3}\n", 3, 8),
        ("d: 3\nn: 4\nranks: {leaf: 2}\nsampler: {kind: fibers, free_modes: [1, 2, 3]}\n", 4, 37),
        ("d: 4\nn: 10\nranks: {leaf: 2}\nbench: {axis: omega, grid: [100]}\n", 4, 28),
    ],
)
def test_errors_carry_position(text, line, col):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert (exc.value.line, exc.value.column) == (line, col)
    assert f"line {line}" in str(exc.value)


def test_missing_sections():
    for text in ("n: 4\nranks: {leaf: 1}\n", "d: 3\nranks: {leaf: 1}\n", "d: 3\nn: 4\n", ""):
        with pytest.raises(ConfigError):
            parse_config(text)
