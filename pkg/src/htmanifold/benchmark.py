"""Timing of the objective/gradient kernels along one scaling axis.

Sparse timings cover :func:`objective_gradient_sparse`; dense timings cover
the dense gradient path (expand, residual, dense Riemannian gradient). The
fitted slope is the least-squares slope of ``log(time)`` against
``log(axis value)``.

Repeats are interleaved across the grid (one timing of every point per
round), so slow spells of a shared machine spread over all points instead of
biasing one of them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dimension_tree import complete_tree
from .errors import ParameterError
from .ht_format import make_ranks, random_ht
from .riemannian import objective_gradient_dense, objective_gradient_sparse

AXES = ("N", "K", "d", "omega", "threads")

# base instance for each axis: (d, N, K, |Omega|)
DEFAULTS = {
    "omega": (4, 40, 8, None),
    "K": (4, 200, None, 500),
    "d": (None, 20, 8, 2000),
    "N": (4, None, 2, None),
    "threads": (4, 40, 8, 40000),
}


@dataclass
class BenchRow:
    axis: str
    value: float
    path: str
    median_s: float
    repeats: int


def time_call(fn: Callable[[], object], repeats: int = 5) -> float:
    """Median wall time of `repeats` calls after one warm-up call."""
    return interleaved_medians([fn], repeats)[0]


def interleaved_medians(fns: Sequence[Callable[[], object]], repeats: int = 5) -> list[float]:
    """Median wall time of each callable, timing them round-robin after a warm-up."""
    for fn in fns:
        fn()
    ts = np.empty((repeats, len(fns)))
    for r in range(repeats):
        for j, fn in enumerate(fns):
            t0 = time.perf_counter()
            fn()
            ts[r, j] = time.perf_counter() - t0
    return [float(v) for v in np.median(ts, axis=0)]


def fit_slope(xs: Sequence[float], ts: Sequence[float]) -> float:
    xs, ts = np.asarray(xs, dtype=float), np.asarray(ts, dtype=float)
    if xs.size < 2:
        raise ParameterError("need at least two grid points to fit a slope")
    return float(np.polyfit(np.log(xs), np.log(ts), 1)[0])


def _instance(d, n, k, m, seed):
    tree = complete_tree(d)
    shape = (n,) * d
    x = random_ht(tree, make_ranks(tree, k), shape, seed)
    rng = np.random.default_rng(seed)
    idx = np.stack([rng.integers(0, n, size=m) for _ in range(d)], axis=1) if m else None
    b = rng.standard_normal(m) if m else None
    return x, idx, b


def run_axis(axis: str, grid: Sequence[float], path: str = "sparse", repeats: int = 5, seed: int = 0,
             base: Optional[tuple] = None) -> tuple[list[BenchRow], dict[str, float]]:
    """Time one axis and return the rows plus the fitted slope per path.

    For the ``threads`` axis the "slope" reported is the log-log slope of
    time against thread count (ideal scaling gives -1).
    """
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}")
    paths = ("sparse", "dense") if path == "both" else (path,)
    defaults = DEFAULTS[axis]
    if base is None:
        base = defaults
    d0, n0, k0, m0 = (b if b is not None else a for a, b in zip(defaults, base))
    cases = []
    for v in grid:
        d, n, k, m, threads = d0, n0, k0, m0, 1
        if axis == "omega":
            m = int(v)
        elif axis == "K":
            k = int(v)
        elif axis == "d":
            d = int(v)
        elif axis == "N":
            n = int(v)
        else:
            threads = int(v)
        for p in paths:
            if p == "dense":
                x, _, _ = _instance(d, n, k, 0, seed)
                full = np.stack(np.unravel_index(np.arange(n**d), (n,) * d), axis=1)
                bvals = np.random.default_rng(seed).standard_normal(full.shape[0])
                fn = lambda x=x, full=full, bvals=bvals: objective_gradient_dense(x, full, bvals)
            else:
                x, idx, b = _instance(d, n, k, m if m else 1000, seed)
                fn = lambda x=x, idx=idx, b=b, th=threads: objective_gradient_sparse(x, idx, b, threads=th)
            cases.append((float(v), p, fn))
    medians = interleaved_medians([c[2] for c in cases], repeats)
    rows = [BenchRow(axis, v, p, t, repeats) for (v, p, _), t in zip(cases, medians)]
    slopes = {}
    for p in paths:
        sel = [r for r in rows if r.path == p]
        slopes[p] = fit_slope([r.value for r in sel], [r.median_s for r in sel])
    return rows, slopes


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = ["axis,value,path,median_s,repeats"]
    for r in rows:
        lines.append(f"{r.axis},{r.value:.17g},{r.path},{r.median_s:.17g},{r.repeats}")
    return "\n".join(lines) + "\n"
