"""Completion problems: sampling sets, observed data, SNR and synthetic instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import prod
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dimension_tree import DimensionTree
from .errors import CapacityError, DegenerateReferenceError, ParameterError, RankDeficiencyError, SampleIndexError, ShapeError
from .gauss_newton import gramians
from .ht_format import HTParams, check_indices, eval_entries, expand, random_ht, truncate, validate_ranks
from .tensor_core import check_dense_size

KINDS = ("points", "fibers")


@dataclass(frozen=True, eq=False)
class SamplingSet:
    """Observed multi-indices of a tensor.

    `indices` holds 0-based multi-indices, one per row; :attr:`one_based`
    gives the 1-based form used in files. For ``kind="fibers"`` the
    `free_modes` are sampled on their full grid.
    """

    shape: tuple
    indices: np.ndarray
    kind: str = "points"
    free_modes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        idx = check_indices(self.indices, self.shape)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        if self.kind not in KINDS:
            raise ParameterError(f"sampling kind must be one of {KINDS}")
        lin = self.linear()
        if np.unique(lin).size != lin.size:
            raise SampleIndexError("sampling set contains duplicate indices")

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def one_based(self) -> np.ndarray:
        return self.indices + 1

    def linear(self) -> np.ndarray:
        """Linear indices, first mode fastest."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.intp)
        return np.ravel_multi_index(tuple(self.indices.T), self.shape, order="F")

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[tuple(self.indices.T)] = True
        return m

    def fraction(self) -> float:
        return len(self) / prod(self.shape)


@dataclass(frozen=True, eq=False)
class CompletionProblem:
    sampling: SamplingSet
    b: np.ndarray
    tree: DimensionTree
    ranks: Optional[tuple] = None
    lam: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.shape != (len(self.sampling),):
            raise ShapeError(f"{b.size} observed values for {len(self.sampling)} sample indices")
        object.__setattr__(self, "b", b)
        if self.tree.d != len(self.sampling.shape):
            raise ShapeError("tree and sampling shape disagree on the number of modes")
        if self.ranks is not None:
            object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
            validate_ranks(self.tree, self.ranks, self.sampling.shape)

    @property
    def shape(self) -> tuple:
        return self.sampling.shape

    @property
    def indices(self) -> np.ndarray:
        return self.sampling.indices


def _check_fraction(fraction: float) -> None:
    if not (0 < fraction <= 1) or math.isnan(fraction):
        raise ParameterError(f"sampling fraction must lie in (0, 1], got {fraction}")


def _unravel(lin: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.stack(np.unravel_index(lin, tuple(shape), order="F"), axis=1)


def sample_points(shape: Sequence[int], fraction: float, seed=None) -> SamplingSet:
    """``floor(fraction * N)`` distinct uniformly random entries, sorted linearly."""
    _check_fraction(fraction)
    shape = tuple(int(n) for n in shape)
    total = prod(shape)
    m = total if fraction == 1 else int(math.floor(fraction * total))
    rng = np.random.default_rng(seed)
    lin = np.arange(total) if m == total else np.sort(rng.permutation(total)[:m])
    return SamplingSet(shape, _unravel(lin, shape), "points")


def sample_fibers(shape: Sequence[int], free_modes: Sequence[int], fraction: float, seed=None) -> SamplingSet:
    """Full grid over `free_modes` (0-based) crossed with a random subset of the remaining grid."""
    _check_fraction(fraction)
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    free = tuple(sorted(int(m) for m in free_modes))
    if not free or len(set(free)) != len(free) or free[0] < 0 or free[-1] >= d:
        raise ParameterError(f"free modes {tuple(free_modes)} invalid for a {d}-tensor")
    rest = tuple(m for m in range(d) if m not in free)
    if not rest:
        raise ParameterError("at least one mode must be subsampled")
    n_free = prod(shape[m] for m in free)
    n_rest = prod(shape[m] for m in rest)
    m = n_rest if fraction == 1 else max(1, int(math.floor(fraction * n_rest)))
    rng = np.random.default_rng(seed)
    keep = np.arange(n_rest) if m == n_rest else np.sort(rng.permutation(n_rest)[:m])
    fi = _unravel(np.arange(n_free), [shape[k] for k in free])
    ri = _unravel(keep, [shape[k] for k in rest])
    idx = np.empty((m * n_free, d), dtype=np.intp)
    idx[:, list(free)] = np.tile(fi, (m, 1))
    idx[:, list(rest)] = np.repeat(ri, n_free, axis=0)
    return SamplingSet(shape, idx, "fibers", free)


def snr(x_est: np.ndarray, x_true: np.ndarray, omega: Optional[SamplingSet] = None, on_complement: bool = True) -> float:
    """``-20 log10(||X_S - D_S|| / ||D_S||)`` in dB.

    ``S`` is the complement of `omega` when `on_complement` is set (and
    `omega` is given), otherwise the full grid. Returns ``inf`` for an exact
    match.
    """
    x_est = np.asarray(x_est, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_est.shape != x_true.shape:
        raise ShapeError(f"shapes {x_est.shape} and {x_true.shape} differ")
    if omega is not None and on_complement:
        sel = ~omega.mask()
        diff, ref = (x_est - x_true)[sel], x_true[sel]
    else:
        diff, ref = x_est - x_true, x_true
    den = np.linalg.norm(ref)
    if den == 0:
        raise DegenerateReferenceError("reference tensor vanishes on the evaluation set")
    num = np.linalg.norm(diff)
    if num == 0:
        return math.inf
    return float(-20.0 * math.log10(num / den))


def snr_on(values_est: np.ndarray, values_true: np.ndarray) -> float:
    """SNR between two value vectors (e.g. a training set)."""
    values_true = np.asarray(values_true, dtype=float)
    den = np.linalg.norm(values_true)
    if den == 0:
        raise DegenerateReferenceError("reference values vanish")
    num = np.linalg.norm(np.asarray(values_est, dtype=float) - values_true)
    return math.inf if num == 0 else float(-20.0 * math.log10(num / den))


Sampler = Union[SamplingSet, Callable[[Sequence[int], object], SamplingSet]]


def make_synthetic(
    tree: DimensionTree,
    ranks: Sequence[int],
    shape: Sequence[int],
    sampler: Sampler,
    noise_level: float = 0.0,
    seed=None,
    lam: float = 0.0,
):
    """Random low-rank ground truth of unit Frobenius norm, observed on a sampling set.

    `sampler` is either a ready :class:`SamplingSet` or a callable
    ``sampler(shape, rng)``. Noise is i.i.d. Gaussian scaled by
    ``noise_level`` times the RMS of the clean observations.

    Returns
    -------
    problem : CompletionProblem
    truth : HTParams
    """
    if noise_level < 0:
        raise ParameterError("noise_level must be nonnegative")
    ss = np.random.SeedSequence(seed)
    s_truth, s_sample, s_noise = ss.spawn(3)
    shape = tuple(int(n) for n in shape)
    truth = random_ht(tree, ranks, shape, np.random.default_rng(s_truth))
    # unit Frobenius norm; for orthogonal parameters that is the root block's norm
    blocks = list(truth.blocks)
    blocks[tree.root] = blocks[tree.root] / np.linalg.norm(blocks[tree.root])
    truth = truth.replace(blocks, orthogonal=True)
    omega = sampler if isinstance(sampler, SamplingSet) else sampler(shape, np.random.default_rng(s_sample))
    if omega.shape != shape:
        raise ShapeError(f"sampling set shape {omega.shape} differs from {shape}")
    b = eval_entries(truth, omega.indices)
    if noise_level > 0:
        rms = float(np.sqrt(np.mean(b**2)))
        b = b + noise_level * rms * np.random.default_rng(s_noise).standard_normal(b.shape)
    return CompletionProblem(omega, b, tree, tuple(ranks), lam), truth


def spectral_guess(problem: CompletionProblem, ranks: Optional[Sequence[int]] = None) -> HTParams:
    """Hierarchical SVD of the zero-filled data rescaled by the sampling fraction.

    Needs the dense tensor; raises CapacityError for oversized shapes.
    """
    ranks = problem.ranks if ranks is None else tuple(ranks)
    check_dense_size(problem.shape)
    z = np.zeros(problem.shape)
    z[tuple(problem.indices.T)] = problem.b / problem.sampling.fraction()
    return truncate(z, problem.tree, ranks)


def random_guess(problem: CompletionProblem, seed=None, ranks: Optional[Sequence[int]] = None) -> HTParams:
    """Random orthogonal parameters scaled to the energy the data suggest.

    For orthogonal parameters ``||phi(x)|| = ||B_root||``, so only the root
    block is rescaled, to ``||b|| / sqrt(|Omega| / N)``.
    """
    ranks = problem.ranks if ranks is None else tuple(ranks)
    x = random_ht(problem.tree, ranks, problem.shape, seed)
    target = np.linalg.norm(problem.b) / math.sqrt(problem.sampling.fraction())
    root = x.blocks[x.tree.root]
    nrm = np.linalg.norm(root)
    if target == 0 or nrm == 0:
        return x
    blocks = list(x.blocks)
    blocks[x.tree.root] = root * (target / nrm)
    return x.replace(blocks, orthogonal=True)


INIT_METHODS = ("auto", "spectral", "random")
# added to an experiment seed to seed its random initial guess
INIT_SEED_OFFSET = 7


def initial_guess(problem: CompletionProblem, seed=None, ranks: Optional[Sequence[int]] = None, method: str = "auto") -> HTParams:
    """Starting point for the solvers.

    ``"auto"`` takes the spectral guess when the dense tensor fits and all
    of its Gramians are well conditioned (fiber sampling often makes them
    singular), and the random guess otherwise.
    """
    if method not in INIT_METHODS:
        raise ParameterError(f"init method must be one of {INIT_METHODS}")
    ranks = problem.ranks if ranks is None else tuple(ranks)
    if ranks is None:
        raise ParameterError("ranks are required for the initial guess")
    if method == "random":
        return random_guess(problem, seed, ranks)
    if method == "spectral":
        return spectral_guess(problem, ranks)
    try:
        x = spectral_guess(problem, ranks)
        conds = gramians(x).condition_numbers()
        if max(conds.values()) < 1e8:
            return x
    except (CapacityError, RankDeficiencyError):
        pass
    return random_guess(problem, seed, ranks)


def complement_snr(x_est: HTParams, x_true: HTParams, omega: SamplingSet, max_dense: int = 2**24, n_probe: int = 2**20, seed=0) -> float:
    """SNR of an HT estimate on the unobserved complement of `omega`.

    Uses every unobserved entry when the tensor has at most `max_dense`
    entries, otherwise `n_probe` unobserved entries drawn uniformly with
    replacement (rejecting observed ones) from a fixed seed.
    """
    total = prod(omega.shape)
    if total <= max_dense:
        return snr(expand(x_est), expand(x_true), omega, on_complement=True)
    rng = np.random.default_rng(seed)
    observed = np.sort(omega.linear())
    picks = []
    need = n_probe
    while need > 0:
        lin = rng.integers(0, total, size=need)
        pos = np.searchsorted(observed, lin)
        hit = (pos < observed.size) & (observed[np.minimum(pos, observed.size - 1)] == lin)
        picks.append(lin[~hit])
        need -= int((~hit).sum())
    idx = _unravel(np.concatenate(picks)[:n_probe], omega.shape)
    return snr_on(eval_entries(x_est, idx), eval_entries(x_true, idx))
