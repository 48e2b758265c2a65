"""Command-line front end: ``python3 -m htmanifold {generate,solve,bench,verify}``.

Exit codes: 0 success, 2 configuration or parameter error, 3 numerical
failure (including failed verification checks), 4 input/output error.
Every float written to stdout, JSON or CSV carries 17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .benchmark import rows_to_csv, run_axis
from .completion import INIT_SEED_OFFSET, CompletionProblem, complement_snr, initial_guess, make_synthetic, snr_on
from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigError, DegenerateReferenceError, FormatError, HTError, ParameterError
from .formats import atomic_write_text, read_dten, read_htck, read_samples, write_dten, write_htck, write_samples
from .ht_format import eval_entries
from .optimizer import solve
from .verify import MUTATIONS, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

SAMPLES, OBSERVED, TRUTH, MANIFEST = "samples.csv", "observed.dten", "truth.htck", "manifest.json"
RESULT, TRACE, REPORT, CHECKPOINT = "result.htck", "trace.jsonl", "report.json", "checkpoint.htck"


class VerificationFailed(Exception):
    pass


def _g(v) -> str:
    return f"{v:.17g}"


def _jsonable(v):
    """Floats rounded through 17 significant digits; non-finite values become null."""
    if isinstance(v, float):
        return float(_g(v)) if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _versions() -> dict:
    import yaml

    return {"htmanifold": __version__, "python": platform.python_version(), "numpy": np.__version__, "pyyaml": yaml.__version__}


def _manifest(cfg: ExperimentConfig, seed: int, inputs: dict, outputs: Sequence[str], command: str, **extra) -> dict:
    out = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "config_text": cfg.text,
        "seed": seed,
        "versions": _versions(),
        "inputs": inputs,
        "outputs": sorted(outputs),
    }
    out.update(extra)
    return out


def _outdir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out = _outdir(args.out)
    problem, truth = make_synthetic(cfg.tree, cfg.ranks, cfg.shape, cfg.sampler.build, cfg.noise_level, seed)
    write_samples(out / SAMPLES, problem.sampling, problem.b)
    write_dten(out / OBSERVED, problem.b)
    write_htck(out / TRUTH, truth)
    man = _manifest(
        cfg, seed, {"config": os.path.abspath(args.config)}, [SAMPLES, OBSERVED, TRUTH], "generate",
        samples=len(problem.sampling), sampler_kind=problem.sampling.kind,
        free_modes=[m + 1 for m in problem.sampling.free_modes],
    )
    atomic_write_text(out / MANIFEST, _dump(man))
    print(f"wrote {len(problem.sampling)} samples of a {'x'.join(map(str, cfg.shape))} tensor to {out}")
    return EXIT_OK


def _load_problem(pdir: Path):
    for name in (SAMPLES, OBSERVED, TRUTH, MANIFEST):
        if not (pdir / name).is_file():
            raise FileNotFoundError(f"problem directory lacks {name}: {pdir}")
    with open(pdir / MANIFEST, encoding="utf-8") as fh:
        try:
            man = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"unreadable {MANIFEST}: {exc}") from exc
    if "config_text" not in man:
        raise FormatError(f"{MANIFEST} has no config_text")
    cfg = parse_config(man["config_text"])
    free = tuple(m - 1 for m in man.get("free_modes", []))
    omega, csv_vals = read_samples(pdir / SAMPLES, cfg.shape, man.get("sampler_kind", "points"), free)
    b = read_dten(pdir / OBSERVED)
    if b.shape != (len(omega),):
        raise FormatError(f"{OBSERVED} holds {b.size} values for {len(omega)} samples")
    if not np.array_equal(b, csv_vals):
        raise FormatError(f"{OBSERVED} and {SAMPLES} disagree on the observed values")
    truth = read_htck(pdir / TRUTH)
    if truth.shape != cfg.shape or truth.tree != cfg.tree:
        raise FormatError(f"{TRUTH} does not match the configured tree and shape")
    return cfg, man, omega, b, truth


def _metrics(x, truth, problem) -> dict:
    train = snr_on(eval_entries(x, problem.indices), problem.b) if len(problem.b) else None
    try:
        test = complement_snr(x, truth, problem.sampling)
    except DegenerateReferenceError:
        test = None  # nothing (or only zeros) left unobserved
    return {"train_snr_db": train, "test_snr_db": test}


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    pdir = Path(args.problem)
    cfg, pman, omega, b, truth = _load_problem(pdir)
    overrides = {k: v for k, v in (("method", args.method), ("max_iters", args.max_iters), ("lam", args.lam),
                                   ("threads", args.threads)) if v is not None}
    try:
        solver_cfg = cfg.solver.__class__(**{**cfg.solver.__dict__, **overrides})
    except HTError as exc:
        raise ParameterError(str(exc)) from None
    seed = pman.get("seed", cfg.seed) if args.seed is None else args.seed
    init = cfg.init if args.init is None else args.init
    problem = CompletionProblem(omega, b, cfg.tree, cfg.fit_ranks, solver_cfg.lam)
    out = _outdir(args.out)
    x0 = initial_guess(problem, seed + INIT_SEED_OFFSET, cfg.fit_ranks, init)
    t_init = time.perf_counter()
    checkpoint = None
    outputs = [RESULT, TRACE, REPORT]
    if args.checkpoint_every:
        outputs.append(CHECKPOINT)

        def save(i, x):
            tmp = out / (CHECKPOINT + ".tmp")
            write_htck(tmp, x)
            os.replace(tmp, out / CHECKPOINT)

        checkpoint = (args.checkpoint_every, save)
    x, trace = solve(problem, x0, solver_cfg, checkpoint=checkpoint)
    t_solve = time.perf_counter()
    write_htck(out / RESULT, x)
    atomic_write_text(out / TRACE, trace.to_jsonl())
    report = {
        "method": solver_cfg.method,
        "lam": solver_cfg.lam,
        "iterations": len(trace) - 1,
        "reason": trace.reason,
        "objective": float(trace.records[-1].obj),
        "gradient_norm": float(trace.records[-1].gnorm),
        "samples": len(omega),
        "ranks": list(x.ranks),
        **_metrics(x, truth, problem),
        "initial": _metrics(x0, truth, problem),
    }
    atomic_write_text(out / REPORT, _dump(report))
    man = _manifest(
        cfg, seed, {"problem": os.path.abspath(pdir)}, outputs, "solve",
        threads=solver_cfg.threads, init=init, solver={k: v for k, v in solver_cfg.__dict__.items()},
        timings_s={"init": t_init - t0, "solve": t_solve - t_init, "total": time.perf_counter() - t0},
    )
    atomic_write_text(out / MANIFEST, _dump(man))
    test = report["test_snr_db"]
    print(f"{trace.reason} after {report['iterations']} iterations; objective {_g(report['objective'])}; "
          f"train SNR {_g(report['train_snr_db'])} dB; test SNR {'n/a' if test is None else _g(test)} dB")
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config)
    if cfg.bench is None:
        raise ConfigError("configuration has no 'bench' section")
    bench = cfg.bench
    repeats = bench.repeats if args.repeats is None else args.repeats
    if repeats < 1:
        raise ParameterError("--repeats must be >= 1")
    seed = cfg.seed if args.seed is None else args.seed
    out = _outdir(args.out)
    rows, slopes = run_axis(bench.axis, bench.grid, bench.path, repeats, seed, bench.base)
    atomic_write_text(out / "bench.csv", rows_to_csv(rows))
    atomic_write_text(out / "slopes.json", _dump({"axis": bench.axis, "slopes": slopes}))
    man = _manifest(cfg, seed, {"config": os.path.abspath(args.config)}, ["bench.csv", "slopes.json"], "bench",
                    threads=1, timings_s={"total": time.perf_counter() - t0})
    atomic_write_text(out / MANIFEST, _dump(man))
    for r in rows:
        print(f"{r.axis}={_g(r.value)} {r.path}: {_g(r.median_s)} s")
    for p, s in slopes.items():
        print(f"slope {bench.axis} ({p}): {_g(s)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.seed, args.trials, args.mutate)
    failed = [r for r in results if not r.passed]
    for r in results:
        if args.verbose or not r.passed:
            status = "PASS" if r.passed else "FAIL"
            print(f"{status} {r.module}: {r.check} seed={r.seed} residual={_g(r.residual)} tol={_g(r.tol)}")
    if args.out:
        atomic_write_text(args.out, _dump([r.as_dict() for r in results]))
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise VerificationFailed(f"{len(failed)} checks failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="htmanifold", description="Tensor completion on the fixed-rank HT manifold.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic completion problem")
    g.add_argument("config", help="YAML configuration")
    g.add_argument("--out", required=True, help="problem directory")
    g.add_argument("--seed", type=int, help="override the configured seed")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="fit a generated problem")
    s.add_argument("problem", help="directory written by 'generate'")
    s.add_argument("--out", required=True, help="result directory")
    s.add_argument("--method", choices=("sd", "cg", "gn"))
    s.add_argument("--max-iters", type=int)
    s.add_argument("--lam", type=float, help="regularization weight lambda")
    s.add_argument("--threads", type=int)
    s.add_argument("--seed", type=int, help="seed of the random initial guess")
    s.add_argument("--init", choices=("auto", "spectral", "random"))
    s.add_argument("--checkpoint-every", type=int, default=0, metavar="N")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="time the objective/gradient kernels along one axis")
    b.add_argument("config", help="YAML configuration with a 'bench' section")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--repeats", type=int)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run the randomized invariant suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=5)
    v.add_argument("--mutate", choices=MUTATIONS, help="inject a known defect")
    v.add_argument("--out", help="write all residuals as JSON")
    v.add_argument("-v", "--verbose", action="store_true", help="list passing checks too")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, HTError, RuntimeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
