"""First-order solvers on the HT manifold: steepest descent, nonlinear CG and
Gauss-Newton-preconditioned descent.

All three share one loop. The search direction is built from the Riemannian
gradient (optionally preconditioned), previous quantities are carried over by
vector transport, the initial step comes from a Lipschitz estimate of the
gradient, and the step is fixed by an Armijo back/forward-tracking search that
evaluates the objective at unorthogonalized points ``x + alpha p``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import LineSearchError, ParameterError, RankDeficiencyError, SolverError
from .gauss_newton import apply_hgn_inverse, gramians, regularizer_value
from .ht_format import HTParams, eval_entries, qr_orthogonalize
from .riemannian import RETRACTIONS, TangentVector, objective_gradient_sparse, retract, step, transport

METHODS = ("sd", "cg", "gn")
RESTART_RULES = ("absolute", "relative")


@dataclass
class SolverConfig:
    """Solver settings.

    ``gamma=None`` selects ``0.1`` under the default relative restart rule
    (restart when ``<p, g> > -gamma ||g||^2``) and ``0.1 * ||g_0||^2`` under
    the absolute rule (restart when ``<p, g> > -gamma``). The absolute rule
    restarts on nearly every iteration once the gradient has shrunk below
    its initial size. ``grad_tol=None`` selects
    ``1e-9 * sqrt(n_params)``; ``eps_gn=None`` the relative default ridge.
    ``retraction="sqrt"`` swaps the QR retraction for the gauge-equivariant
    square-root one.
    """

    method: str = "cg"
    sigma: float = 1e-4
    theta: float = 0.5
    gamma: Optional[float] = None
    restart_rule: str = "relative"
    lam: float = 0.0
    eps_gn: Optional[float] = None
    gn_momentum: bool = False
    max_iters: int = 200
    grad_tol: Optional[float] = None
    obj_rel_tol: float = 1e-10
    max_halvings: int = 50
    max_shrinks: int = 10
    retraction: str = "qr"
    threads: int = 1
    seed: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.restart_rule not in RESTART_RULES:
            raise ParameterError(f"restart_rule must be one of {RESTART_RULES}")
        if not 0 < self.sigma < 1:
            raise ParameterError("sigma must lie in (0, 1)")
        if not 0 < self.theta < 1:
            raise ParameterError("theta must lie in (0, 1)")
        if self.gamma is not None and self.gamma <= 0:
            raise ParameterError("gamma must be positive")
        if self.lam < 0:
            raise ParameterError("lam must be nonnegative")
        if self.eps_gn is not None and self.eps_gn < 0:
            raise ParameterError("eps_gn must be nonnegative")
        if self.max_iters < 0:
            raise ParameterError("max_iters must be nonnegative")
        if self.grad_tol is not None and self.grad_tol < 0:
            raise ParameterError("grad_tol must be nonnegative")
        if self.obj_rel_tol < 0:
            raise ParameterError("obj_rel_tol must be nonnegative")
        if self.retraction not in RETRACTIONS:
            raise ParameterError(f"retraction must be one of {RETRACTIONS}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")


@dataclass
class IterRecord:
    iter: int
    obj: float
    gnorm: float
    alpha: float
    evals: int
    L: Optional[float]
    restart: bool
    t_ms: float
    min_gram_eig: Optional[float] = None


@dataclass
class IterateTrace:
    records: list = field(default_factory=list)
    reason: str = ""

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.obj for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        keys = ("iter", "obj", "gnorm", "alpha", "evals", "L", "restart", "t_ms")
        lines = []
        for r in self.records:
            d = asdict(r)
            lines.append(json.dumps({k: _json_float(d[k]) for k in keys}))
        return "\n".join(lines) + ("\n" if lines else "")


def _json_float(v):
    if isinstance(v, float):
        if not math.isfinite(v):
            return None
        return float(f"{v:.17g}")
    return v


def line_search(
    f_eval: Callable[[float], float],
    x: HTParams,
    p: TangentVector,
    g: TangentVector,
    alpha0: float,
    sigma: float = 1e-4,
    theta: float = 0.5,
    f0: Optional[float] = None,
    max_halvings: int = 50,
):
    """Armijo back/forward-tracking for ``alpha = theta^m alpha0``.

    `f_eval` maps a step length to the objective at ``x + alpha p``. The
    accepted step satisfies the sufficient-decrease condition and, whenever
    the search can establish it, ``f(alpha) < min(f(theta alpha), f(alpha/theta))``.
    Returns ``(alpha, f(alpha), evals)``; `evals` counts calls to `f_eval`.
    """
    slope = p.dot(g)
    if not slope < 0:
        raise LineSearchError(f"search direction is not a descent direction (<p, g> = {slope:g})")
    if not alpha0 > 0 or not math.isfinite(alpha0):
        raise LineSearchError(f"invalid initial step {alpha0!r}")
    evals = 0
    if f0 is None:
        f0 = f_eval(0.0)
        evals += 1

    def armijo(a, fa):
        return fa - f0 <= sigma * a * slope

    alpha = alpha0
    fa = f_eval(alpha)
    evals += 1
    if armijo(alpha, fa):
        # grow while the larger step still decreases f
        moved = False
        for _ in range(max_halvings):
            big = alpha / theta
            fb = f_eval(big)
            evals += 1
            if fb < fa and armijo(big, fb):
                alpha, fa, moved = big, fb, True
            else:
                break
        if moved:
            return alpha, fa, evals
    else:
        for _ in range(max_halvings):
            alpha *= theta
            fa = f_eval(alpha)
            evals += 1
            if armijo(alpha, fa):
                break
        else:
            raise LineSearchError(f"no sufficient decrease after {max_halvings} step reductions")
    # shrink further while that keeps decreasing f
    for _ in range(max_halvings):
        small = alpha * theta
        fs = f_eval(small)
        evals += 1
        if fs < fa:
            alpha, fa = small, fs
        else:
            break
    return alpha, fa, evals


class _Objective:
    """Objective pieces for one completion problem."""

    def __init__(self, idx, b, lam, threads):
        self.idx, self.b, self.lam, self.threads = idx, b, lam, threads

    def value_grad(self, x: HTParams):
        return objective_gradient_sparse(x, self.idx, self.b, lam=self.lam, threads=self.threads)

    def value_along(self, x: HTParams, p: TangentVector) -> Callable[[float], float]:
        def f(alpha: float) -> float:
            y = step(x, p, alpha)
            r = eval_entries(y, self.idx) - self.b
            val = 0.5 * float(r @ r)
            if self.lam > 0:
                # the Gramian recursion needs orthogonal parameters
                try:
                    val += self.lam**2 * regularizer_value(gramians(qr_orthogonalize(y)))
                except (RankDeficiencyError, ArithmeticError):
                    return math.inf
            return val

        return f


def solve(problem, x0: HTParams, cfg: Optional[SolverConfig] = None, callback=None, checkpoint=None):
    """Minimize the completion objective of `problem` starting from `x0`.

    Parameters
    ----------
    problem : CompletionProblem
    x0 : HTParams
        Orthogonal starting point with the problem's tree and ranks.
    cfg : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(i, x, record)`` after every iteration.
    checkpoint : tuple (every, callable), optional
        ``callable(i, x)`` is invoked every `every` iterations.

    Returns
    -------
    x : HTParams
    trace : IterateTrace
        ``trace.reason`` is one of ``"grad_tol"``, ``"obj_rel_tol"``,
        ``"max_iters"``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    if not x0.orthogonal:
        raise ParameterError("initial guess must be orthogonalized")
    if x0.tree != problem.tree or x0.shape != problem.shape:
        raise ParameterError("initial guess does not match the problem's tree and shape")
    if problem.ranks is not None and tuple(x0.ranks) != tuple(problem.ranks):
        raise ParameterError(f"initial ranks {x0.ranks} differ from problem ranks {tuple(problem.ranks)}")
    obj = _Objective(problem.indices, problem.b, cfg.lam, cfg.threads)
    t_start = time.perf_counter()
    trace = IterateTrace()

    x = x0
    f, g = obj.value_grad(x)
    gnorm = g.norm()
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-9 * math.sqrt(x.num_params())
    if cfg.gamma is not None:
        gamma = cfg.gamma
    else:
        gamma = 0.1 * gnorm**2 if cfg.restart_rule == "absolute" else 0.1

    def record(i, alpha, evals, L, restart):
        rec = IterRecord(i, f, gnorm, alpha, evals, L, restart, 1e3 * (time.perf_counter() - t_start))
        if cfg.lam > 0:
            rec.min_gram_eig = gramians(x).min_eigenvalue()
        trace.records.append(rec)
        if callback is not None:
            callback(i, x, rec)
        if checkpoint is not None and i > 0 and i % checkpoint[0] == 0:
            checkpoint[1](i, x)

    record(0, 0.0, 0, None, False)
    p_prev = g_prev = pg_prev = None
    alpha_prev = None
    reason = "max_iters"
    for i in range(1, cfg.max_iters + 1):
        if gnorm <= grad_tol:
            reason = "grad_tol"
            break
        pg = apply_hgn_inverse(x, g, eps=cfg.eps_gn) if cfg.method == "gn" else g
        restart = p_prev is None
        L = None
        ys = -1.0
        if p_prev is None:
            p = -pg
        else:
            tp = transport(x, p_prev)
            tg = transport(x, g_prev)
            s = alpha_prev * tp
            y = g - tg
            ys = y.dot(s)
            L = ys / s.dot(s)
            if cfg.method == "sd" or (cfg.method == "gn" and not cfg.gn_momentum):
                beta = 0.0
            else:
                beta = pg.dot(y) / pg_prev.dot(g_prev)
            p = -pg + beta * tp if beta != 0.0 else -pg
            thresh = gamma if cfg.restart_rule == "absolute" else gamma * gnorm**2
            if beta != 0.0 and p.dot(g) > -thresh:
                p = -pg
                restart = True
        if not p.dot(g) < 0:
            raise SolverError(f"iteration {i}: direction is not a descent direction after restart")
        if alpha_prev is None:
            alpha0 = 1.0 / p.norm()
        elif ys > 0:
            alpha0 = -g.dot(p) / (L * p.dot(p))
        else:
            alpha0 = alpha_prev
        alpha, f_new, evals = line_search(
            obj.value_along(x, p), x, p, g, alpha0, cfg.sigma, cfg.theta, f0=f, max_halvings=cfg.max_halvings
        )
        x_new = None
        for _ in range(cfg.max_shrinks + 1):
            try:
                x_new = retract(x, p, alpha, cfg.retraction)
                break
            except RankDeficiencyError:
                alpha *= cfg.theta
        if x_new is None:
            raise SolverError(f"iteration {i}: retraction rank deficient after {cfg.max_shrinks} step shrinks")
        f_old = f
        p_prev, g_prev, pg_prev, alpha_prev = p, g, pg, alpha
        x = x_new
        f, g = obj.value_grad(x)
        gnorm = g.norm()
        record(i, alpha, evals, L, restart)
        if f == 0.0 or abs(f_old - f) <= cfg.obj_rel_tol * max(abs(f_old), 1e-300):
            reason = "obj_rel_tol"
            break
    else:
        if gnorm <= grad_tol and cfg.max_iters > 0:
            reason = "grad_tol"
    trace.reason = reason
    return x, trace
