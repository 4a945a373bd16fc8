"""Truth tables, clauses, CSP instances and random instance samplers.

A truth table on ``k`` bits is stored as a tuple of ``2**k`` booleans indexed by
the little-endian integer encoding of the literal values, i.e. row ``i`` holds
``T(x_0, ..., x_{k-1})`` with ``x_q = (i >> q) & 1``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.stats import poisson

WITH_REPETITION = "with_repetition"
WITHOUT_REPETITION = "without_repetition"
REPETITION_MODES = (WITH_REPETITION, WITHOUT_REPETITION)


class TableSpecError(ValueError):
    """Raised for a malformed truth-table specification string."""


@dataclass(frozen=True)
class TruthTable:
    k: int
    values: tuple

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        vals = tuple(bool(v) for v in self.values)
        if len(vals) != 2 ** self.k:
            raise ValueError(f"truth table on k={self.k} bits needs {2 ** self.k} rows, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    def __call__(self, bits: Sequence[int]) -> bool:
        return self.values[bits_to_index(bits)]

    @cached_property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=bool)

    @property
    def bitstring(self) -> str:
        return "".join("1" if v else "0" for v in self.values)

    def hamming_weights(self):
        """Return the weight -> truth list if the table only depends on popcount, else None."""
        weights = [None] * (self.k + 1)
        for i, v in enumerate(self.values):
            h = bin(i).count("1")
            if weights[h] is None:
                weights[h] = v
            elif weights[h] != v:
                return None
        return tuple(weights)

    @property
    def is_hamming(self) -> bool:
        return self.hamming_weights() is not None

    def to_hamming(self) -> "HammingSpec":
        w = self.hamming_weights()
        if w is None:
            raise ValueError("truth table is not of Hamming-weight type")
        return HammingSpec(self.k, w)

    def __str__(self):
        return self.bitstring


@dataclass(frozen=True)
class HammingSpec:
    """Truth table depending only on the number of true literals."""

    k: int
    weight_values: tuple

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        vals = tuple(bool(v) for v in self.weight_values)
        if len(vals) != self.k + 1:
            raise ValueError(f"Hamming spec on k={self.k} bits needs {self.k + 1} weights, got {len(vals)}")
        object.__setattr__(self, "weight_values", vals)

    def to_table(self) -> TruthTable:
        return TruthTable(self.k, [self.weight_values[bin(i).count("1")] for i in range(2 ** self.k)])


@dataclass(frozen=True)
class Clause:
    """Ordered ``k`` pairs ``(variable index, negated)``; repeats are kept verbatim."""

    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(l), bool(nu)) for l, nu in self.pairs))

    @property
    def k(self) -> int:
        return len(self.pairs)

    @property
    def variables(self) -> tuple:
        return tuple(l for l, _ in self.pairs)

    @property
    def negations(self) -> tuple:
        return tuple(nu for _, nu in self.pairs)


@dataclass(frozen=True, eq=False)
class CspInstance:
    """``m`` clauses over ``n`` variables, stored as ``(m, k)`` index and negation arrays."""

    n: int
    table: TruthTable
    variables: np.ndarray
    negations: np.ndarray

    def __post_init__(self):
        k = self.table.k
        var = np.asarray(self.variables, dtype=np.int64).reshape(-1, k)
        neg = np.asarray(self.negations, dtype=bool).reshape(-1, k)
        if var.shape != neg.shape:
            raise ValueError("variables and negations must have the same shape")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if var.size and (var.min() < 0 or var.max() >= self.n):
            raise ValueError(f"variable index out of range [0, {self.n})")
        var.flags.writeable = False
        neg.flags.writeable = False
        object.__setattr__(self, "variables", var)
        object.__setattr__(self, "negations", neg)

    @classmethod
    def from_clauses(cls, n: int, table: TruthTable, clauses: Iterable[Union[Clause, Sequence]]):
        clauses = [c if isinstance(c, Clause) else Clause(c) for c in clauses]
        for c in clauses:
            if c.k != table.k:
                raise ValueError(f"clause has {c.k} literals, table expects {table.k}")
        var = [c.variables for c in clauses]
        neg = [c.negations for c in clauses]
        return cls(n, table, np.array(var, dtype=np.int64).reshape(-1, table.k),
                   np.array(neg, dtype=bool).reshape(-1, table.k))

    @property
    def m(self) -> int:
        return self.variables.shape[0]

    @property
    def k(self) -> int:
        return self.table.k

    @property
    def clauses(self) -> tuple:
        return tuple(Clause(zip(v.tolist(), g.tolist())) for v, g in zip(self.variables, self.negations))

    def violation_counts(self) -> np.ndarray:
        """Number of violated clauses for each of the ``2**n`` assignments (variable 0 = LSB)."""
        x = np.arange(2 ** self.n, dtype=np.int64)
        cost = np.zeros(x.shape, dtype=np.int64)
        violated = ~self.table.array
        shifts = np.arange(self.k, dtype=np.int64)
        chunk = max(1, 2 ** 22 // max(1, x.size * self.k))
        for start in range(0, self.m, chunk):
            var = self.variables[start:start + chunk]
            neg = self.negations[start:start + chunk].astype(np.int64)
            bits = ((x[None, None, :] >> var[:, :, None]) & 1) ^ neg[:, :, None]
            rows = (bits << shifts[None, :, None]).sum(axis=1)
            cost += violated[rows].sum(axis=0)
        return cost

    def is_satisfiable(self) -> bool:
        return bool((self.violation_counts() == 0).any())

    def satisfied_by(self, assignment: Sequence[int]) -> bool:
        return all(evaluate_clause(self.table, c, assignment) for c in self.clauses)

    def to_text(self) -> str:
        lines = [f"{self.n} {self.k}"]
        for var, neg in zip(self.variables, self.negations):
            lines.append(" ".join(str(-(v + 1) if g else v + 1) for v, g in zip(var.tolist(), neg.tolist())))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, table: TruthTable) -> "CspInstance":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows:
            raise ValueError("empty instance text")
        n, k = int(rows[0][0]), int(rows[0][1])
        if k != table.k:
            raise ValueError(f"instance header k={k} does not match table k={table.k}")
        clauses = []
        for r in rows[1:]:
            lits = [int(t) for t in r]
            if len(lits) != k or 0 in lits:
                raise ValueError(f"bad clause line: {' '.join(r)}")
            clauses.append([(abs(x) - 1, x < 0) for x in lits])
        return cls.from_clauses(n, table, clauses)


def bits_to_index(bits: Sequence[int]) -> int:
    return sum((int(b) & 1) << q for q, b in enumerate(bits))


def index_to_bits(index: int, k: int) -> tuple:
    return tuple((index >> q) & 1 for q in range(k))


def ksat_table(k: int) -> TruthTable:
    return HammingSpec(k, [False] + [True] * k).to_table()


def nae_table(k: int) -> TruthTable:
    return HammingSpec(k, [0 < h < k for h in range(k + 1)]).to_table()


def one_in_k_table(k: int) -> TruthTable:
    return HammingSpec(k, [h == 1 for h in range(k + 1)]).to_table()


def first_false_rows_table(k: int, i: int) -> TruthTable:
    """Table whose first ``i`` rows are false and the remaining rows true."""
    if not 0 <= i <= 2 ** k:
        raise ValueError(f"i must lie in [0, {2 ** k}]")
    return TruthTable(k, [row >= i for row in range(2 ** k)])


_FAMILIES = {"ksat": ksat_table, "nae": nae_table, "1in": one_in_k_table}


def parse_truth_table(spec: str) -> TruthTable:
    """Parse ``<bits>``, ``ksat:<k>``, ``nae:<k>``, ``1in:<k>`` or ``hamming:<k>:<bits>``."""
    s = spec.strip()
    if re.fullmatch(r"[01]+", s):
        k = len(s).bit_length() - 1
        if k < 1 or 2 ** k != len(s):
            raise TableSpecError(f"table bitstring length {len(s)} is not 2^k with k >= 1")
        return TruthTable(k, [c == "1" for c in s])
    parts = s.split(":")
    head = parts[0].lower()
    try:
        if head in _FAMILIES and len(parts) == 2:
            k = int(parts[1])
            if k < 1:
                raise TableSpecError(f"k must be >= 1 in {spec!r}")
            return _FAMILIES[head](k)
        if head == "hamming" and len(parts) == 3:
            k = int(parts[1])
            bits = parts[2]
            if k < 1:
                raise TableSpecError(f"k must be >= 1 in {spec!r}")
            if not re.fullmatch(r"[01]+", bits) or len(bits) != k + 1:
                raise TableSpecError(f"hamming spec needs {k + 1} weight bits, got {bits!r}")
            return HammingSpec(k, [c == "1" for c in bits]).to_table()
    except ValueError as exc:
        if isinstance(exc, TableSpecError):
            raise
        raise TableSpecError(f"malformed table spec {spec!r}: {exc}") from exc
    raise TableSpecError(f"unrecognised table spec {spec!r}")


def evaluate_clause(table: TruthTable, clause: Clause, assignment: Sequence[int]) -> bool:
    """Truth value of ``clause`` under ``assignment`` (a 0/1 sequence of length n)."""
    n = len(assignment)
    bits = []
    for l, nu in clause.pairs:
        if not 0 <= l < n:
            raise IndexError(f"variable index {l} out of range for n={n}")
        bits.append(int(assignment[l]) ^ int(nu))
    return table(bits)


def count_true_rows(table: TruthTable) -> int:
    return sum(table.values)


@dataclass(frozen=True)
class Poisson:
    """Clause count drawn from Poisson(r * n)."""

    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"r must be >= 0, got {self.r}")


@dataclass(frozen=True)
class Fixed:
    """Exactly ``m`` clauses."""

    m: int

    def __post_init__(self):
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError(f"m must be a nonnegative integer, got {self.m}")


@dataclass(frozen=True)
class SamplerConfig:
    repetition_mode: str = WITH_REPETITION
    m_mode: Union[Poisson, Fixed] = field(default_factory=lambda: Poisson(1.0))
    seed: int = 0

    def __post_init__(self):
        if self.repetition_mode not in REPETITION_MODES:
            raise ValueError(f"unknown repetition mode {self.repetition_mode!r}")
        if not isinstance(self.m_mode, (Poisson, Fixed)):
            raise ValueError("m_mode must be Poisson or Fixed")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def draw_clause_count(n: int, m_mode, rng: np.random.Generator) -> int:
    """Clause count for one instance.

    Poisson counts use inversion of the CDF on a single uniform, which stays
    accurate for large means and makes ``m`` monotone in ``r`` for a fixed seed.
    """
    if isinstance(m_mode, Fixed):
        return int(m_mode.m)
    mean = m_mode.r * n
    u = rng.random()
    if mean == 0:
        return 0
    return max(0, int(poisson.ppf(u, mean)))


def sample_clauses(n: int, k: int, m: int, repetition_mode: str, rng: np.random.Generator):
    """Draw ``m`` i.i.d. clauses, returning ``(variables, negations)`` arrays of shape (m, k).

    Each clause consumes one row of uniforms, so the first ``j`` clauses drawn for
    ``m >= j`` do not depend on ``m``.
    """
    if repetition_mode == WITH_REPETITION:
        u = rng.random((m, 2 * k))
        var = np.minimum((u[:, :k] * n).astype(np.int64), n - 1)
        neg = u[:, k:] < 0.5
    elif repetition_mode == WITHOUT_REPETITION:
        if k > n:
            raise ValueError(f"sampling without repetition needs k <= n (k={k}, n={n})")
        u = rng.random((m, n + k))
        # the k smallest of n uniform keys form a uniformly random ordered k-subset
        var = np.argsort(u[:, :n], axis=1, kind="stable")[:, :k].astype(np.int64)
        neg = u[:, n:] < 0.5
    else:
        raise ValueError(f"unknown repetition mode {repetition_mode!r}")
    return var.reshape(m, k), neg.reshape(m, k)


def sample_instance(n: int, table: TruthTable, cfg: SamplerConfig,
                    rng: np.random.Generator = None) -> CspInstance:
    """Random instance per ``cfg``; uses ``cfg.seed`` when no generator is supplied."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if cfg.repetition_mode == WITHOUT_REPETITION and table.k > n:
        raise ValueError(f"sampling without repetition needs k <= n (k={table.k}, n={n})")
    if rng is None:
        rng = cfg.rng()
    m = draw_clause_count(n, cfg.m_mode, rng)
    var, neg = sample_clauses(n, table.k, m, cfg.repetition_mode, rng)
    return CspInstance(n, table, var, neg)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial ``index`` of a seeded batch."""
    return np.random.default_rng([int(seed) & (2 ** 64 - 1), int(index)])
