"""Command-line front end: ``qaoa-csp <subcommand> ...``.

Every subcommand prints its records (JSON by default, CSV on request) and, with
``--out``, writes them to a file next to a ``.manifest.json`` describing the run.
Exit codes: 0 success (a sweep with failed rows still counts), 1 internal error,
2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import secrets
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .clause_poly import PATHS, BackendMismatch
from .experiments import (SOLVER_ENV, ExternalSolver, UnboundedThreshold, classical_median_runtime,
                          estimate_threshold, fit_exponent, optimize_angles, records_to_csv, records_to_json,
                          run_classical, sweep)
from .oracle import mc_average_success
from .success import QaoaAngles, SuccessQuery, evaluate_success
from .tables import (WITH_REPETITION, WITHOUT_REPETITION, Fixed, Poisson, SamplerConfig, TableSpecError,
                     parse_truth_table, sample_instance, trial_rng)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
REPETITION = {"with": WITH_REPETITION, "without": WITHOUT_REPETITION}


class UsageError(ValueError):
    pass


def _table(spec):
    try:
        return parse_truth_table(spec)
    except TableSpecError as exc:
        raise UsageError(str(exc)) from exc


def _m_mode(args):
    if args.fixed_m is not None:
        if args.fixed_m < 0:
            raise UsageError("--fixed-m must be >= 0")
        return Fixed(args.fixed_m)
    if args.r is None:
        raise UsageError("one of --r or --fixed-m is required")
    if not args.r >= 0:
        raise UsageError("--r must be >= 0")
    return Poisson(args.r)


def _seed(args):
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _m_fields(m_mode):
    return {"r": m_mode.r, "fixed_m": None} if isinstance(m_mode, Poisson) else {"r": None, "fixed_m": m_mode.m}


# ---------------------------------------------------------------------------
# subcommands; each returns a list of flat-ish record dicts


def cmd_psuccess(args):
    table = _table(args.table)
    m_mode = _m_mode(args)
    q = SuccessQuery(table, args.n, QaoaAngles(args.gamma, args.beta), m_mode, args.path,
                     REPETITION[args.repetition], args.precision)
    res = evaluate_success(q)
    return [{"table": args.table, "k": table.k, "n": args.n, **_m_fields(m_mode), "gamma": args.gamma,
             "beta": args.beta, "repetition_mode": q.repetition_mode, "probability": res.probability,
             "imag_residue": res.imag, "path": res.path, "precision": res.precision,
             "error_bound": float(res.error_bound), "clamped": res.clamped,
             "runtime_model_1_over_p": (1 / res.probability) if res.probability > 0 else None}]


def cmd_threshold(args):
    table = _table(args.table)
    seed = _seed(args)
    res = estimate_threshold(table, args.n, args.samples, args.target, args.tol, seed, REPETITION[args.repetition])
    return [{"table": args.table, "k": table.k, "n_probe": args.n, "samples": args.samples, "seed": seed,
             "repetition_mode": REPETITION[args.repetition], "r_star": res.r_star,
             "bracket_lo": res.bracket[0], "bracket_hi": res.bracket[1], "converged_by": res.converged_by,
             "probes": [[r, p, s] for r, p, s in res.probe_history]}]


def cmd_optimize(args):
    table = _table(args.table)
    m_mode = _m_mode(args)
    angles, p = optimize_angles(table, args.n, grid=args.grid, m_mode=m_mode, path=args.path,
                                repetition_mode=REPETITION[args.repetition])
    return [{"table": args.table, "k": table.k, "n_ref": args.n, **_m_fields(m_mode), "grid": f"{args.grid}x{args.grid}",
             "gamma": angles.gamma, "beta": angles.beta, "probability": p,
             "repetition_mode": REPETITION[args.repetition]}]


def _solver(args):
    if args.solver == "internal":
        return "internal"
    cmd = args.solver_cmd or os.environ.get(SOLVER_ENV)
    if not cmd:
        raise UsageError(f"external solver needs --solver-cmd or ${SOLVER_ENV}")
    return ExternalSolver(cmd, args.decisions_pattern, args.propagations_pattern, args.timeout)


def cmd_sweep(args):
    specs = args.table
    tables = [_table(s) for s in specs]
    seed = _seed(args)
    if args.r is None or args.r == ["threshold"]:
        r_mode = "threshold"
    else:
        try:
            r_vals = [float(x) for x in args.r]
        except ValueError as exc:
            raise UsageError("--r takes 'threshold' or numbers") from exc
        if len(r_vals) not in (1, len(tables)):
            raise UsageError("give one --r value or one per table")
        r_mode = r_vals[0] if len(r_vals) == 1 else r_vals
    if args.n_min > args.n_max:
        raise UsageError("--n-min must not exceed --n-max")
    return sweep(tables, range(args.n_min, args.n_max + 1), r_mode, seed=seed, n_ref=args.n_ref, grid=args.grid,
                 threshold_n=args.threshold_n, threshold_samples=args.samples,
                 classical_n_values=args.classical_n or (), classical_instances=args.instances,
                 solver=_solver(args), repetition_mode=REPETITION[args.repetition], jobs=args.jobs, labels=specs)


def _read_curve(path):
    with open(path, newline="") as fh:
        text = fh.read()
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise UsageError(f"{path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    if "n" in header and "p" in header:
        i, j = header.index("n"), header.index("p")
        body = rows[1:]
    else:
        i, j, body = 0, 1, rows
    try:
        return [(float(r[i]), float(r[j])) for r in body if r]
    except (ValueError, IndexError) as exc:
        raise UsageError(f"cannot read (n, p) pairs from {path}: {exc}") from exc


def cmd_fit(args):
    pts = _read_curve(args.input)
    try:
        fit = fit_exponent(pts)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return [{"input": os.path.basename(args.input), "points": len(pts), "a": fit.a, "b": fit.b,
             "residual": fit.residual, "n_min": fit.n_range[0], "n_max": fit.n_range[1]}]


def cmd_oracle(args):
    table = _table(args.table)
    m_mode = _m_mode(args)
    seed = _seed(args)
    rep = REPETITION[args.repetition]
    angles = QaoaAngles(args.gamma, args.beta)
    est = mc_average_success(args.n, table, SamplerConfig(rep, m_mode, seed), angles, args.instances, seed)
    closed = evaluate_success(SuccessQuery(table, args.n, angles, m_mode, args.path, rep)).probability
    z = (est.mean - closed) / est.std_error if est.std_error > 0 else (0.0 if est.mean == closed else math.inf)
    return [{"table": args.table, "k": table.k, "n": args.n, **_m_fields(m_mode), "gamma": args.gamma,
             "beta": args.beta, "repetition_mode": rep, "instances": args.instances, "seed": seed,
             "mc_mean": est.mean, "mc_stderr": est.std_error, "closed_form": closed, "z_score": z}]


def cmd_classical(args):
    table = _table(args.table)
    seed = _seed(args)
    rep = REPETITION[args.repetition]
    solver = _solver(args)
    cfg = SamplerConfig(rep, Poisson(args.r))
    stats = [run_classical(sample_instance(args.n, table, cfg, trial_rng(seed, i)), solver)
             for i in range(args.instances)]
    proxies = sorted(s.runtime_proxy for s in stats)
    return [{"table": args.table, "k": table.k, "n": args.n, "r": args.r, "instances": args.instances,
             "seed": seed, "repetition_mode": rep, "solver": stats[0].solver if stats else "internal-dpll",
             "median_runtime_proxy": float(np.median(proxies)) if proxies else None,
             "satisfiable_fraction": sum(s.satisfiable for s in stats) / max(1, len(stats)),
             "mean_decisions": float(np.mean([s.decisions for s in stats])) if stats else None,
             "mean_propagations": float(np.mean([s.propagations for s in stats])) if stats else None}]


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, m=True, angles=False, seed=False, path=True):
    p.add_argument("--table", required=True, help="truth table: bits, ksat:k, nae:k, 1in:k or hamming:k:bits")
    p.add_argument("--n", type=int, required=True, help="number of variables")
    if m:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--r", type=float, help="Poisson clause density (m ~ Poisson(r n))")
        g.add_argument("--fixed-m", type=int, help="exact clause count")
    if angles:
        p.add_argument("--beta", type=float, required=True)
        p.add_argument("--gamma", type=float, required=True)
    if seed:
        p.add_argument("--seed", type=int, help="RNG seed (random and printed when omitted)")
    if path:
        p.add_argument("--path", choices=PATHS, default="auto", help="clause-polynomial backend")
    p.add_argument("--repetition", choices=sorted(REPETITION), default="with",
                   help="clause sampling with or without repeated variables")


def _add_solver(p):
    p.add_argument("--solver", choices=("internal", "external"), default="internal")
    p.add_argument("--solver-cmd", help="external command template containing {file}")
    p.add_argument("--decisions-pattern", default=r"decisions\s*:\s*(\d+)")
    p.add_argument("--propagations-pattern", default=r"propagations\s*:\s*(\d+)")
    p.add_argument("--timeout", type=float, default=300.0, help="wall limit per external solver call (s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaoa-csp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", help="write records here (a .manifest.json is written alongside)")
        p.add_argument("--jobs", type=int, default=1, help="worker cap for parallel sections")
        return p

    p = add("psuccess", cmd_psuccess, "closed-form instance-averaged success probability")
    _add_common(p, angles=True)
    p.add_argument("--precision", choices=("auto", "double", "mp"), default="auto")

    p = add("threshold", cmd_threshold, "estimate the satisfiability threshold by bisection")
    _add_common(p, m=False, seed=True, path=False)
    p.set_defaults(n=12)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--target", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=0.05)

    p = add("optimize", cmd_optimize, "grid search for the best angles")
    _add_common(p)
    p.add_argument("--grid", type=int, default=50)

    p = add("sweep", cmd_sweep, "threshold, angles, success curve, fits and classical medians per table")
    p.add_argument("--table", action="append", required=True, help="repeat for several tables")
    p.add_argument("--n-min", type=int, default=12)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--n-ref", type=int, help="angle optimisation size (default: midpoint of the range)")
    p.add_argument("--r", nargs="+", help="'threshold' (default), one density, or one per table")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--threshold-n", type=int, default=12)
    p.add_argument("--samples", type=int, default=200, help="instances per threshold probe")
    p.add_argument("--classical-n", type=int, nargs="*", help="sizes for classical medians (none by default)")
    p.add_argument("--instances", type=int, default=500, help="instances per classical median")
    p.add_argument("--repetition", choices=sorted(REPETITION), default="with")
    _add_solver(p)

    p = add("fit", cmd_fit, "fit log2 p = a + b n to a CSV of (n, p)")
    p.add_argument("--input", required=True)

    p = add("oracle", cmd_oracle, "Monte-Carlo statevector average versus the closed form")
    _add_common(p, angles=True, seed=True)
    p.add_argument("--instances", type=int, default=2500)

    p = add("classical", cmd_classical, "median decisions+propagations of a SAT solver")
    _add_common(p, m=False, seed=True, path=False)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--instances", type=int, default=500)
    _add_solver(p)
    return parser


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _write_outputs(args, records, text, started):
    params = _params(args)
    # the output location and worker count do not change results, so they stay out of the run id
    keyed = {k: v for k, v in params.items() if k not in ("out", "jobs")}
    run_id = hashlib.sha256(json.dumps(keyed, sort_keys=True, default=str).encode()).hexdigest()[:16]
    base = os.path.splitext(args.out)[0]
    manifest_path = base + ".manifest.json"
    data = text
    if args.format == "json":
        doc = json.loads(text)
        doc["manifest"] = os.path.basename(manifest_path)
        doc["run_id"] = run_id
        data = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        data = f"# manifest={os.path.basename(manifest_path)} run_id={run_id}\n" + text
    with open(args.out, "w") as fh:
        fh.write(data)
    manifest = {"command": args.command, "parameters": params, "seeds": [params.get("seed")],
                "tool_version": __version__, "run_id": run_id, "outputs": [os.path.basename(args.out)],
                "wall_time_s": round(time.time() - started, 6)}
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    started = time.time()
    try:
        if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
            raise UsageError("--n must be >= 1")
        records = args.func(args)
        text = records_to_json(records) if args.format == "json" else records_to_csv(records)
        sys.stdout.write(text)
        if args.out:
            _write_outputs(args, records, text, started)
    except (UsageError, BackendMismatch) as exc:
        print(f"qaoa-csp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnboundedThreshold as exc:
        print(f"qaoa-csp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # internal failure; keep the diagnostic short
        print(f"qaoa-csp {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
