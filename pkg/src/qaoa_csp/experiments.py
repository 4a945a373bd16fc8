"""Experiment pipeline: thresholds, angle search, exponent fits, CNF export and a classical baseline."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import shlex
import subprocess
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .success import QaoaAngles, SuccessQuery, evaluate_success, success_curve, success_grid
from .tables import (WITH_REPETITION, CspInstance, Fixed, Poisson, SamplerConfig, TruthTable, count_true_rows,
                     sample_instance, trial_rng)

SOLVER_ENV = "QAOA_CSP_SOLVER"


# ---------------------------------------------------------------------------
# satisfiability threshold


class UnboundedThreshold(RuntimeError):
    """No clause density makes random instances unsatisfiable with probability 1/2."""


@dataclass
class ThresholdResult:
    r_star: float
    probe_history: list = field(default_factory=list)  # (r, sat fraction, samples)
    bracket: tuple = (0.0, math.inf)
    n_probe: int = 12
    converged_by: str = ""


def sat_fraction(table: TruthTable, n: int, r: float, samples: int, seed: int,
                 repetition_mode: str = WITH_REPETITION) -> float:
    """Fraction of ``samples`` Poisson(r n) instances that are satisfiable (brute force).

    Instance ``i`` always uses the generator seeded by ``(seed, i)``; with the
    inverse-CDF clause count its clause list grows by appending as ``r`` increases.
    """
    cfg = SamplerConfig(repetition_mode, Poisson(r))
    sat = 0
    for i in range(samples):
        inst = sample_instance(n, table, cfg, trial_rng(seed, i))
        sat += inst.is_satisfiable()
    return sat / samples


def estimate_threshold(table: TruthTable, n_probe: int = 12, samples: int = 200, target: float = 0.5,
                       tol: float = 0.05, seed: int = 0, repetition_mode: str = WITH_REPETITION,
                       rel_width: float = 1e-3, r_max: float = 4096.0) -> ThresholdResult:
    """Bisection on ``r`` for the density where a random instance is satisfiable with probability ``target``."""
    if count_true_rows(table) == 2 ** table.k:
        raise UnboundedThreshold("every clause of an all-true table is satisfied; no threshold exists")
    history = []
    base, n_samples = samples, samples

    def probe(r):
        p = sat_fraction(table, n_probe, r, n_samples, seed, repetition_mode)
        history.append((r, p, n_samples))
        return p

    lo, p_lo = 0.0, 1.0
    hi = 1.0
    p_hi = probe(hi)
    while p_hi > target:
        if abs(p_hi - target) <= tol:
            return ThresholdResult(hi, history, (lo, hi), n_probe, "tolerance")
        lo, p_lo = hi, p_hi
        hi *= 2
        if hi > r_max:
            raise UnboundedThreshold(f"instances stay satisfiable up to r={r_max}")
        p_hi = probe(hi)
    while True:
        mid = 0.5 * (lo + hi)
        p_mid = probe(mid)
        if not (p_hi - 1e-12 <= p_mid <= p_lo + 1e-12) and n_samples < 4 * base:
            # ordering contradiction: sampling noise, so re-probe the bracket with more samples
            n_samples = min(2 * n_samples, 4 * base)
            p_lo = probe(lo) if lo > 0 else 1.0
            p_hi = probe(hi)
            continue
        if abs(p_mid - target) <= tol:
            return ThresholdResult(mid, history, (lo, hi), n_probe, "tolerance")
        if p_mid > target:
            lo, p_lo = mid, p_mid
        else:
            hi, p_hi = mid, p_mid
        if hi - lo <= rel_width * hi:
            return ThresholdResult(0.5 * (lo + hi), history, (lo, hi), n_probe, "bracket")


# ---------------------------------------------------------------------------
# angle search and fits


def angle_grid(size: int = 50) -> np.ndarray:
    return 2 * math.pi * np.arange(size) / size


def optimize_angles(table: TruthTable, n_ref: int, r: Optional[float] = None, grid: int = 50,
                    m_mode=None, path: str = "auto", repetition_mode: str = WITH_REPETITION,
                    tie_rtol: float = 1e-12):
    """Best ``(gamma, beta)`` on a ``grid x grid`` lattice of [0, 2pi)^2.

    Values within ``tie_rtol`` (relative) of the maximum count as ties, and the
    smallest ``(gamma, beta)`` pair among them wins.
    """
    if m_mode is None:
        if r is None:
            raise ValueError("give r or m_mode")
        m_mode = Poisson(r)
    g = angle_grid(grid)
    vals = success_grid(table, n_ref, m_mode, g, g, path, repetition_mode)
    gi, bi = grid_argmax(vals, tie_rtol)
    angles = QaoaAngles(float(g[gi]), float(g[bi]))
    p = evaluate_success(SuccessQuery(table, n_ref, angles, m_mode, path, repetition_mode)).probability
    return angles, p


def grid_argmax(vals: np.ndarray, tie_rtol: float = 1e-12) -> tuple:
    """Index of the maximum of a (gamma, beta) grid; near-ties go to the smallest index pair."""
    best = vals.max()
    ties = np.argwhere(vals >= best - tie_rtol * abs(best))
    return tuple(int(i) for i in min(map(tuple, ties)))


@dataclass
class FitResult:
    a: float
    b: float
    residual: float
    n_range: tuple

    def predict(self, n):
        return 2.0 ** (self.a + self.b * np.asarray(n, dtype=float))


def fit_exponent(points: Sequence) -> FitResult:
    """Least-squares fit of ``log2 p = a + b n``."""
    pts = [(float(n), float(p)) for n, p in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit")
    ns = np.array([x[0] for x in pts])
    ps = np.array([x[1] for x in pts])
    if np.any(ps <= 0) or not np.all(np.isfinite(ps)):
        raise ValueError("all values must be positive and finite")
    if np.ptp(ns) == 0:
        raise ValueError("fit needs at least two distinct n values")
    y = np.log2(ps)
    A = np.stack([np.ones_like(ns), ns], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([a, b]) - y) ** 2)))
    return FitResult(float(a), float(b), res, (int(ns.min()), int(ns.max())))


# ---------------------------------------------------------------------------
# CNF conversion and DIMACS


@dataclass(frozen=True)
class Cnf:
    n_vars: int
    clauses: tuple  # tuple of tuples of nonzero signed 1-based literals

    def satisfied_by(self, assignment: Sequence[int]) -> bool:
        return all(any((lit > 0) == bool(assignment[abs(lit) - 1]) for lit in c) for c in self.clauses)


def to_cnf(instance: CspInstance) -> Cnf:
    """Forbid every false row of the table for every clause, one disjunction per row."""
    false_rows = [v for v in range(2 ** instance.k) if not instance.table.values[v]]
    out = []
    for var, neg in zip(instance.variables.tolist(), instance.negations.tolist()):
        for v in false_rows:
            lits = []
            for q, (l, nu) in enumerate(zip(var, neg)):
                bad = ((v >> q) & 1) ^ int(nu)     # value of x_l that realises row v
                lit = -(l + 1) if bad else l + 1
                if lit not in lits:
                    lits.append(lit)
            if any(-x in lits for x in lits):
                continue
            out.append(tuple(lits))
    return Cnf(instance.n, tuple(out))


def export_dimacs(cnf: Cnf) -> str:
    lines = [f"p cnf {cnf.n_vars} {len(cnf.clauses)}"]
    lines += [" ".join(str(x) for x in c + (0,)) for c in cnf.clauses]
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> Cnf:
    n_vars, declared = None, None
    clauses, cur = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad DIMACS header: {line!r}")
            n_vars, declared = int(parts[2]), int(parts[3])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if n_vars is None:
        raise ValueError("missing DIMACS header")
    if cur:
        clauses.append(tuple(cur))
    if declared != len(clauses):
        raise ValueError(f"header declares {declared} clauses, found {len(clauses)}")
    return Cnf(n_vars, tuple(clauses))


# ---------------------------------------------------------------------------
# classical solvers


@dataclass
class ClassicalRunStats:
    decisions: int
    propagations: int
    satisfiable: bool
    solver: str = "internal-dpll"

    @property
    def runtime_proxy(self) -> int:
        return self.decisions + self.propagations


class _Dpll:
    """Plain DPLL: unit propagation plus first-unassigned-variable branching, true first."""

    def __init__(self, cnf: Cnf):
        self.n = cnf.n_vars
        self.clauses = [list(c) for c in cnf.clauses]
        self.value = [0] * (self.n + 1)
        self.decisions = 0
        self.propagations = 0

    def _lit_value(self, lit):
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    def _propagate(self, trail):
        changed = True
        while changed:
            changed = False
            for c in self.clauses:
                unassigned, sat = None, False
                free = 0
                for lit in c:
                    lv = self._lit_value(lit)
                    if lv == 1:
                        sat = True
                        break
                    if lv == 0:
                        free += 1
                        unassigned = lit
                if sat:
                    continue
                if free == 0:
                    return False
                if free == 1:
                    self.value[abs(unassigned)] = 1 if unassigned > 0 else -1
                    trail.append(abs(unassigned))
                    self.propagations += 1
                    changed = True
        return True

    def _all_satisfied(self):
        return all(any(self._lit_value(l) == 1 for l in c) for c in self.clauses)

    def _solve(self):
        trail = []
        ok = self._propagate(trail)
        if ok and self._all_satisfied():
            return True
        if ok:
            var = next(v for v in range(1, self.n + 1) if self.value[v] == 0)
            for val in (1, -1):
                self.decisions += 1
                self.value[var] = val
                if self._solve():
                    return True
                self.value[var] = 0
        for v in trail:
            self.value[v] = 0
        return False

    def run(self) -> bool:
        if any(len(c) == 0 for c in self.clauses):
            return False
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 4 * self.n + 100))
        try:
            return self._solve()
        finally:
            sys.setrecursionlimit(limit)


def dpll(cnf: Cnf) -> ClassicalRunStats:
    s = _Dpll(cnf)
    sat = s.run()
    return ClassicalRunStats(s.decisions, s.propagations, sat)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExternalSolver:
    """Adapter for a DIMACS solver binary.

    ``command`` is a template containing ``{file}``; the two patterns are regular
    expressions whose first group captures the decision and propagation counts.
    The verdict comes from exit code 10/20 when present, otherwise from an
    ``UNSAT``/``SAT`` status line.
    """

    command: str
    decisions_pattern: str = r"decisions\s*:\s*(\d+)"
    propagations_pattern: str = r"propagations\s*:\s*(\d+)"
    timeout: float = 300.0
    name: str = "external"

    def run(self, cnf: Cnf) -> ClassicalRunStats:
        command = os.environ.get(SOLVER_ENV) or self.command
        if "{file}" not in command:
            raise SolverError("solver command must contain a {file} placeholder")
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "instance.cnf")
            with open(path, "w") as fh:
                fh.write(export_dimacs(cnf))
            argv = shlex.split(command.replace("{file}", shlex.quote(path)))
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            except FileNotFoundError as exc:
                raise SolverError(f"cannot launch solver: {exc}") from exc
            except subprocess.TimeoutExpired as exc:
                raise SolverError(f"solver exceeded the {self.timeout}s wall limit") from exc
        out = proc.stdout + "\n" + proc.stderr
        if proc.returncode == 10:
            sat = True
        elif proc.returncode == 20:
            sat = False
        elif re.search(r"\bUNSAT(ISFIABLE)?\b", out):
            sat = False
        elif re.search(r"\bSAT(ISFIABLE)?\b", out):
            sat = True
        else:
            raise SolverError(f"no verdict in solver output (exit code {proc.returncode})")
        counts = []
        for pat in (self.decisions_pattern, self.propagations_pattern):
            m = re.search(pat, out)
            if not m:
                raise SolverError(f"pattern {pat!r} not found in solver output")
            counts.append(int(m.group(1)))
        return ClassicalRunStats(counts[0], counts[1], sat, self.name)


Solver = Union[str, ExternalSolver]


def run_classical(instance: Union[CspInstance, Cnf], solver: Solver = "internal") -> ClassicalRunStats:
    cnf = instance if isinstance(instance, Cnf) else to_cnf(instance)
    if isinstance(solver, ExternalSolver):
        return solver.run(cnf)
    if solver != "internal":
        raise ValueError(f"unknown solver {solver!r}")
    return dpll(cnf)


def classical_median_runtime(table: TruthTable, n: int, r: float, instances: int = 500,
                             solver: Solver = "internal", seed: int = 0,
                             repetition_mode: str = WITH_REPETITION) -> float:
    cfg = SamplerConfig(repetition_mode, Poisson(r))
    proxies = [run_classical(sample_instance(n, table, cfg, trial_rng(seed, i)), solver).runtime_proxy
               for i in range(instances)]
    return float(np.median(proxies))


# ---------------------------------------------------------------------------
# sweeps and records


RECORD_FIELDS = (
    "table", "k", "true_rows", "status", "error", "r", "r_source", "gamma", "beta", "n_ref", "angle_grid",
    "n_values", "probabilities", "fit_a", "fit_b", "fit_residual", "runtime_model",
    "classical_n_values", "classical_medians", "classical_fit_a", "classical_fit_b", "solver",
    "repetition_mode", "seed", "tool_version",
)


def sweep(tables: Sequence[TruthTable], n_values: Sequence[int], r_mode: Union[str, float, Sequence[float]] = "threshold",
          seed: int = 0, n_ref: Optional[int] = None, grid: int = 50, threshold_n: int = 12,
          threshold_samples: int = 200, classical_n_values: Sequence[int] = (), classical_instances: int = 500,
          solver: Solver = "internal", repetition_mode: str = WITH_REPETITION, jobs: int = 1,
          labels: Optional[Sequence[str]] = None) -> list:
    """Run the full per-table pipeline and return one record per table.

    ``r_mode`` is ``"threshold"``, a single ``r`` for every table or one ``r`` per
    table.  A failure in one table is stored in its record and the sweep goes on.
    """
    n_values = sorted(int(n) for n in n_values)
    if n_ref is None:
        n_ref = n_values[len(n_values) // 2] if n_values else threshold_n
    labels = list(labels) if labels is not None else [t.bitstring for t in tables]
    records = []
    for idx, table in enumerate(tables):
        rec = dict.fromkeys(RECORD_FIELDS)
        rec.update(table=labels[idx], k=table.k, true_rows=count_true_rows(table), status="ok", error="",
                   n_ref=n_ref, angle_grid=f"{grid}x{grid}", runtime_model="1/p (lower bound)",
                   solver=solver.name if isinstance(solver, ExternalSolver) else "internal-dpll",
                   repetition_mode=repetition_mode, seed=seed, tool_version=__version__)
        try:
            if r_mode == "threshold":
                r = estimate_threshold(table, threshold_n, threshold_samples, seed=seed,
                                       repetition_mode=repetition_mode).r_star
                rec["r_source"] = f"threshold(n={threshold_n},samples={threshold_samples})"
            else:
                r = float(r_mode) if np.ndim(r_mode) == 0 else float(list(r_mode)[idx])
                rec["r_source"] = "given"
            rec["r"] = r
            angles, _ = optimize_angles(table, n_ref, r, grid, repetition_mode=repetition_mode)
            rec["gamma"], rec["beta"] = angles.gamma, angles.beta
            q = SuccessQuery(table, n_ref, angles, Poisson(r), repetition_mode=repetition_mode)
            curve = success_curve(q, n_values, jobs=jobs)
            rec["n_values"] = [n for n, _ in curve]
            rec["probabilities"] = [p for _, p in curve]
            if len(curve) >= 3 and all(p > 0 for _, p in curve):
                fit = fit_exponent(curve)
                rec["fit_a"], rec["fit_b"], rec["fit_residual"] = fit.a, fit.b, fit.residual
            if classical_n_values:
                meds = [classical_median_runtime(table, n, r, classical_instances, solver, seed, repetition_mode)
                        for n in classical_n_values]
                rec["classical_n_values"] = list(classical_n_values)
                rec["classical_medians"] = meds
                if len(meds) >= 3 and all(m > 0 for m in meds):
                    cf = fit_exponent(zip(classical_n_values, meds))
                    rec["classical_fit_a"], rec["classical_fit_b"] = cf.a, cf.b
        except Exception as exc:  # recorded per table, the sweep continues
            rec["status"] = "error"
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def records_to_json(records: list, manifest: Optional[dict] = None) -> str:
    doc = {"manifest": manifest, "records": records} if manifest is not None else {"records": records}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ";".join(_csv_cell(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def records_to_csv(records: list, fields: Optional[Sequence[str]] = None) -> str:
    """Flat projection of the JSON records; list fields are joined with ``;``."""
    if fields is None:
        fields = []
        for rec in records:
            fields += [k for k in rec if k not in fields]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for rec in records:
        w.writerow([_csv_cell(rec.get(f)) for f in fields])
    return buf.getvalue()
