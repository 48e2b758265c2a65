"""Experiment configuration files (YAML).

A configuration describes one synthetic experiment or benchmark::

    seed: 0
    tree: "((1,2),(3,4))"      # or `d: 4` for the complete tree
    shape: [10, 10, 10, 10]    # or `n: 10` with a tree / d
    ranks: {leaf: 2, internal: 2}   # or a list over non-root nodes, parents-first
    fit_ranks: ...             # optional ranks of the fitted model, same forms
    sampler: {kind: points, fraction: 0.2}
    #        {kind: fibers, free_modes: [1, 2], fraction: 0.25}   (1-based modes)
    noise_level: 0.0
    init: auto                 # auto | spectral | random
    solver: {method: cg, max_iters: 200, lam: 0.0}
    bench: {axis: omega, grid: [1000, 2000, 4000], repeats: 5,
            base: {d: 4, n: 40, k: 8}}   # base instance; samples: |Omega|

Every error raised while reading a configuration is a ConfigError carrying
the 1-based line and column of the offending item.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .completion import INIT_METHODS, sample_fibers, sample_points
from .dimension_tree import DimensionTree, complete_tree, parse_tree
from .errors import ConfigError, HTError
from .ht_format import validate_ranks
from .optimizer import SolverConfig

BENCH_AXES = ("N", "K", "d", "omega", "threads")


class _Node:
    """Plain value plus the source position of the YAML node it came from."""

    __slots__ = ("value", "line", "column")

    def __init__(self, value, mark):
        self.value = value
        self.line = mark.line + 1
        self.column = mark.column + 1


def _convert(loader, node):
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = loader.construct_object(k)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1, k.start_mark.column + 1)
            out[key] = _convert(loader, v)
        return _Node(out, node.start_mark)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_convert(loader, v) for v in node.value], node.start_mark)
    return _Node(loader.construct_object(node), node.start_mark)


def _plain(n: _Node):
    if isinstance(n.value, dict):
        return {k: _plain(v) for k, v in n.value.items()}
    if isinstance(n.value, list):
        return [_plain(v) for v in n.value]
    return n.value


def _parse_yaml(text: str) -> _Node:
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise ConfigError("configuration is empty", 1, 1)
        return _convert(loader, node)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1, mark.column + 1) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from None
    finally:
        loader.dispose()


def _fail(node: _Node, msg: str):
    raise ConfigError(msg, node.line, node.column)


def _int(node: _Node, what: str, lo: Optional[int] = None) -> int:
    v = node.value
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(node, f"{what} must be an integer")
    if lo is not None and v < lo:
        _fail(node, f"{what} must be >= {lo}")
    return v


def _float(node: _Node, what: str) -> float:
    v = node.value
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(node, f"{what} must be a number")
    return float(v)


def _map(node: _Node, what: str) -> dict:
    if not isinstance(node.value, dict):
        _fail(node, f"{what} must be a mapping")
    return node.value


def _list(node: _Node, what: str) -> list:
    if not isinstance(node.value, list):
        _fail(node, f"{what} must be a list")
    return node.value


def _check_keys(node: _Node, allowed, what: str) -> dict:
    m = _map(node, what)
    for k, v in m.items():
        if k not in allowed:
            _fail(v, f"unknown key {k!r} in {what}")
    return m


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "points"
    fraction: float = 0.2
    free_modes: tuple = ()  # 0-based

    def build(self, shape, rng):
        if self.kind == "points":
            return sample_points(shape, self.fraction, rng)
        return sample_fibers(shape, self.free_modes, self.fraction, rng)


@dataclass(frozen=True)
class BenchSpec:
    axis: str = "omega"
    grid: tuple = ()
    repeats: int = 5
    path: str = "sparse"  # sparse | dense | both
    base: Optional[tuple] = None  # (d, N, K, |Omega|); None entries take the axis defaults


@dataclass
class ExperimentConfig:
    tree: DimensionTree
    shape: tuple
    ranks: tuple
    fit_ranks: tuple
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    noise_level: float = 0.0
    seed: int = 0
    init: str = "auto"
    solver: SolverConfig = field(default_factory=SolverConfig)
    bench: Optional[BenchSpec] = None
    text: str = ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


_TOP = ("seed", "tree", "d", "shape", "n", "ranks", "fit_ranks", "sampler", "noise_level", "init", "solver", "bench")


def _ranks(node: _Node, tree: DimensionTree, what: str) -> tuple:
    if isinstance(node.value, dict):
        m = _check_keys(node, ("leaf", "internal"), what)
        if "leaf" not in m:
            _fail(node, f"{what} needs a 'leaf' entry")
        leaf = _int(m["leaf"], f"{what}.leaf", 1)
        internal = _int(m["internal"], f"{what}.internal", 1) if "internal" in m else leaf
        return tuple(1 if t == tree.root else (leaf if tree.is_leaf(t) else internal) for t in range(len(tree)))
    items = _list(node, what)
    if len(items) != len(tree) - 1:
        _fail(node, f"{what} needs {len(tree) - 1} entries (non-root nodes, parents-first), got {len(items)}")
    return (1,) + tuple(_int(v, what, 1) for v in items)


def _solver(node: _Node) -> SolverConfig:
    names = {f.name for f in dataclasses.fields(SolverConfig)} | {"lambda"}
    m = _check_keys(node, names, "solver")
    kw: dict[str, Any] = {}
    for k, v in m.items():
        key = "lam" if k == "lambda" else k
        if key in ("method", "restart_rule", "retraction"):
            if not isinstance(v.value, str):
                _fail(v, f"solver.{k} must be a string")
            kw[key] = v.value
        elif key == "gn_momentum":
            if not isinstance(v.value, bool):
                _fail(v, "solver.gn_momentum must be true or false")
            kw[key] = v.value
        elif key in ("max_iters", "max_halvings", "max_shrinks", "threads"):
            kw[key] = _int(v, f"solver.{k}", 0)
        elif key == "seed":
            kw[key] = None if v.value is None else _int(v, "solver.seed", 0)
        else:
            kw[key] = None if v.value is None else _float(v, f"solver.{k}")
    try:
        return SolverConfig(**kw)
    except HTError as exc:
        raise ConfigError(f"solver: {exc}", node.line, node.column) from None


def parse_config(text: str) -> ExperimentConfig:
    root = _parse_yaml(text)
    m = _check_keys(root, _TOP, "configuration")

    seed = _int(m["seed"], "seed", 0) if "seed" in m else 0
    if "tree" in m:
        if not isinstance(m["tree"].value, str):
            _fail(m["tree"], "tree must be a string like ((1,2),(3,4))")
        try:
            tree = parse_tree(m["tree"].value)
        except HTError as exc:
            _fail(m["tree"], f"bad tree: {exc}")
        if "d" in m and _int(m["d"], "d") != tree.d:
            _fail(m["d"], "d disagrees with the tree")
    elif "d" in m:
        d = _int(m["d"], "d", 2)
        tree = complete_tree(d)
    elif "shape" in m:
        tree = complete_tree(len(_list(m["shape"], "shape")))
    else:
        _fail(root, "configuration needs 'tree', 'd' or 'shape'")

    if "shape" in m:
        items = _list(m["shape"], "shape")
        shape = tuple(_int(v, "shape entry", 1) for v in items)
        if len(shape) != tree.d:
            _fail(m["shape"], f"shape has {len(shape)} entries, tree has {tree.d} modes")
    elif "n" in m:
        shape = (_int(m["n"], "n", 1),) * tree.d
    else:
        _fail(root, "configuration needs 'shape' or 'n'")

    if "ranks" not in m:
        _fail(root, "configuration needs 'ranks'")
    ranks = _ranks(m["ranks"], tree, "ranks")
    fit_ranks = _ranks(m["fit_ranks"], tree, "fit_ranks") if "fit_ranks" in m else ranks
    for key, rk in (("ranks", ranks), ("fit_ranks", fit_ranks)):
        if key in m:
            try:
                validate_ranks(tree, rk, shape)
            except HTError as exc:
                _fail(m[key], str(exc))

    sampler = SamplerSpec()
    if "sampler" in m:
        sm = _check_keys(m["sampler"], ("kind", "fraction", "free_modes"), "sampler")
        kind = sm["kind"].value if "kind" in sm else "points"
        if kind not in ("points", "fibers"):
            _fail(sm["kind"], "sampler.kind must be 'points' or 'fibers'")
        frac = _float(sm["fraction"], "sampler.fraction") if "fraction" in sm else 0.2
        if not 0 < frac <= 1:
            _fail(sm["fraction"], "sampler.fraction must lie in (0, 1]")
        free: tuple = ()
        if kind == "fibers":
            if "free_modes" not in sm:
                _fail(m["sampler"], "fiber sampling needs 'free_modes'")
            free = tuple(_int(v, "free mode", 1) - 1 for v in _list(sm["free_modes"], "sampler.free_modes"))
            if not free or max(free) >= tree.d or len(set(free)) != len(free) or len(free) >= tree.d:
                _fail(sm["free_modes"], f"free_modes must be distinct modes in 1..{tree.d}, leaving at least one")
        sampler = SamplerSpec(kind, frac, free)

    noise = _float(m["noise_level"], "noise_level") if "noise_level" in m else 0.0
    if noise < 0:
        _fail(m["noise_level"], "noise_level must be nonnegative")
    init = "auto"
    if "init" in m:
        init = m["init"].value
        if init not in INIT_METHODS:
            _fail(m["init"], f"init must be one of {INIT_METHODS}")
    solver = _solver(m["solver"]) if "solver" in m else SolverConfig()

    bench = None
    if "bench" in m:
        bm = _check_keys(m["bench"], ("axis", "grid", "repeats", "path", "base"), "bench")
        axis = bm["axis"].value if "axis" in bm else "omega"
        if axis not in BENCH_AXES:
            _fail(bm["axis"], f"bench.axis must be one of {BENCH_AXES}")
        if "grid" not in bm:
            _fail(m["bench"], "bench needs a 'grid'")
        grid = tuple(
            _float(v, "bench.grid entry") if axis == "omega" and isinstance(v.value, float) else _int(v, "bench.grid entry", 1)
            for v in _list(bm["grid"], "bench.grid")
        )
        if len(grid) < 2:
            _fail(bm["grid"], "bench.grid needs at least two points")
        repeats = _int(bm["repeats"], "bench.repeats", 1) if "repeats" in bm else 5
        path = bm["path"].value if "path" in bm else ("dense" if axis == "N" else "sparse")
        if path not in ("sparse", "dense", "both"):
            _fail(bm["path"], "bench.path must be sparse, dense or both")
        base = None
        if "base" in bm:
            bb = _check_keys(bm["base"], ("d", "n", "k", "samples"), "bench.base")
            base = tuple(_int(bb[key], f"bench.base.{key}", 1) if key in bb else None for key in ("d", "n", "k", "samples"))
        bench = BenchSpec(axis, grid, repeats, path, base)

    return ExperimentConfig(tree, shape, ranks, fit_ranks, sampler, noise, seed, init, solver, bench, text)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
