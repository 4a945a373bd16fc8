"""Single-clause polynomial P_single(n') by four interchangeable routes.

``P_single`` is the expectation over one random clause of
``exp(-i*gamma/2 * (S1 - S_1)) * S0`` where ``St`` indicates that bitstring
``z_t`` of a triplet satisfies the clause.  Because every route averages over
uniform negations, the value only depends on the reduced configuration
``n' = (n'_00, n'_01, n'_10, n'_11)`` of the triplet.

Every route can be written as ``c0 + cm * exp(-i*gamma/2) + cp * exp(i*gamma/2)``
with nonnegative real coefficients

* ``cm = Pr[S1, S0, not S_1]``
* ``cp = Pr[not S1, S0, S_1]``
* ``c0 = Pr[S0, S1 == S_1]``

The backends return these coefficients, so the gamma dependence is cheap and
an exact rational evaluation is available for the high-precision fallback.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .combinatorics import (REDUCED_CELL, ConfigNumbers, ReducedConfigNumbers, compositions_array,
                            multinomial)
from .tables import (WITH_REPETITION, WITHOUT_REPETITION, REPETITION_MODES, HammingSpec, TruthTable,
                     nae_table, one_in_k_table)

MAX_ZTABLE_K = 7

SATISFACTION = "satisfaction"
VIOLATION = "violation"
PAIR_LABELS = ("1,0", "1,-1", "0,-1")


def _as_reduced(nr) -> tuple:
    if isinstance(nr, ReducedConfigNumbers):
        return nr.counts
    c = tuple(int(x) for x in nr)
    if len(c) != 4 or min(c) < 0:
        raise ValueError(f"reduced configuration needs 4 nonnegative counts, got {c}")
    return c


def _check_weight(counts, n):
    if n is not None and sum(counts) != n:
        raise ValueError(f"configuration weight {sum(counts)} does not match n={n}")
    if sum(counts) < 1:
        raise ValueError("configuration weight must be >= 1")


# ---------------------------------------------------------------------------
# Z table (general truth tables)


@dataclass(frozen=True, eq=False)
class ZTable:
    """Counts of k-bit triplets by joint truth value ``y`` and configuration.

    ``ys[e]`` is ``(y1, y0, y_1)``, ``configs[e]`` the 8 configuration counts and
    ``counts[e]`` the number of triplets in that cell.
    """

    k: int
    ys: np.ndarray
    configs: np.ndarray
    counts: np.ndarray

    def entries(self) -> dict:
        return {(tuple(int(v) for v in y), tuple(int(v) for v in c)): int(m)
                for y, c, m in zip(self.ys, self.configs, self.counts)}

    def total(self) -> int:
        return int(self.counts.sum())

    def dump(self) -> str:
        """One line per entry: ``y1y0y_1 c000 ... c111 count``, sorted."""
        lines = []
        for (y, c), m in sorted(self.entries().items()):
            lines.append("".join(str(v) for v in y) + " " + " ".join(str(v) for v in c) + f" {m}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "ZTable":
        ys, cs, ms = [], [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split()
            ys.append([int(ch) for ch in parts[0]])
            cs.append([int(v) for v in parts[1:9]])
            ms.append(int(parts[9]))
        cs = np.array(cs, dtype=np.int64)
        return cls(int(cs[0].sum()), np.array(ys, dtype=np.int64), cs, np.array(ms, dtype=np.int64))


def build_ztable(table: TruthTable) -> ZTable:
    """Classify all ``8**k`` triplets of k-bit rows by truth values and configuration."""
    k = table.k
    if k > MAX_ZTABLE_K:
        raise ValueError(f"Z table enumeration supports k <= {MAX_ZTABLE_K}, got k={k}")
    mask = (1 << k) - 1
    t = np.arange(8 ** k, dtype=np.int64)
    w1, w0, wm1 = t & mask, (t >> k) & mask, t >> (2 * k)
    tab = table.array.astype(np.int64)
    y = 4 * tab[w1] + 2 * tab[w0] + tab[wm1]
    # configuration encoded as base-(k+1) digits, one digit per pattern s
    base = k + 1
    key = np.zeros_like(t)
    for q in range(k):
        s = 4 * ((w1 >> q) & 1) + 2 * ((w0 >> q) & 1) + ((wm1 >> q) & 1)
        key += base ** s
    uniq, counts = np.unique(key * 8 + y, return_counts=True)
    ys_code, keys = uniq % 8, uniq // 8
    configs = np.stack([(keys // base ** s) % base for s in range(8)], axis=1)
    ys = np.stack([(ys_code >> 2) & 1, (ys_code >> 1) & 1, ys_code & 1], axis=1)
    return ZTable(k, ys, configs, counts)


def _phase(y1, ym1, gamma):
    return cmath.exp(-0.5j * gamma * (int(y1) - int(ym1)))


def p_single_general(z: ZTable, nr, gamma: float, n: int = None) -> complex:
    """Single-clause polynomial of a general table at a reduced configuration."""
    counts = _as_reduced(nr)
    _check_weight(counts, n)
    n = sum(counts)
    frac = [counts[REDUCED_CELL[s]] / n for s in range(8)]
    re, im = [], []
    for y, c, m in zip(z.ys, z.configs, z.counts):
        if not y[1]:
            continue
        w = float(m)
        for s in range(8):
            if c[s]:
                w *= frac[s] ** int(c[s])
        v = w * _phase(y[0], y[2], gamma)
        re.append(v.real)
        im.append(v.imag)
    return complex(math.fsum(re), math.fsum(im)) / 2 ** z.k


def p_single_general_config(z: ZTable, config: ConfigNumbers, gamma: float) -> complex:
    """Same polynomial parameterised by the full 8-cell configuration of the triplet."""
    c8 = config.counts
    n = sum(c8)
    if n < 1:
        raise ValueError("configuration weight must be >= 1")
    frac = [(c8[s] + c8[7 - s]) / n for s in range(8)]
    total = 0j
    for y, c, m in zip(z.ys, z.configs, z.counts):
        if y[1]:
            w = float(m) * math.prod(frac[s] ** int(c[s]) for s in range(8) if c[s])
            total += w * _phase(y[0], y[2], gamma)
    return total / 2 ** z.k


# ---------------------------------------------------------------------------
# Hamming-weight tables


def _hamming_weights(spec) -> tuple:
    if isinstance(spec, HammingSpec):
        return spec.weight_values
    if isinstance(spec, TruthTable):
        w = spec.hamming_weights()
        if w is None:
            raise ValueError("truth table is not of Hamming-weight type")
        return w
    raise TypeError("expected a HammingSpec or TruthTable")


_POPCOUNT_MASKS = (4, 2, 1)  # bit of s belonging to z1, z0, z_1


def p_single_hamming(spec, nr, gamma: float, n: int = None) -> complex:
    """Explicit multinomial sum over the configurations of weight k."""
    wv = _hamming_weights(spec)
    k = len(wv) - 1
    counts = _as_reduced(nr)
    _check_weight(counts, n)
    n = sum(counts)
    frac = [counts[REDUCED_CELL[s]] / n for s in range(8)]
    re, im = [], []
    for kv in compositions_array(k, 8):
        h1, h0, hm1 = (sum(int(kv[s]) for s in range(8) if s & bit) for bit in _POPCOUNT_MASKS)
        if not wv[h0]:
            continue
        w = float(multinomial(k, kv))
        for s in range(8):
            if kv[s]:
                w *= frac[s] ** int(kv[s])
        v = w * _phase(wv[h1], wv[hm1], gamma)
        re.append(v.real)
        im.append(v.imag)
    return complex(math.fsum(re), math.fsum(im)) / 2 ** k


# ---------------------------------------------------------------------------
# Analytic clause expectations


@dataclass
class ClauseExpectations:
    """Joint satisfaction or violation probabilities of a triplet against one random clause.

    ``convention`` is ``"satisfaction"`` (probabilities that the bitstrings all
    satisfy the clause) or ``"violation"`` (that they all violate it).  ``p1`` is
    the single-bitstring probability (the same for all three), ``p2`` maps a pair
    label ``"1,0"``, ``"1,-1"`` or ``"0,-1"`` to the pair probability and ``p3`` is
    the three-way probability.  Values are floats, Fractions or numpy arrays
    evaluated over many configurations at once.
    """

    k: int
    n: int
    convention: str
    p1: object
    p2: dict = field(default_factory=dict)
    p3: object = 0.0

    def as_violation(self) -> "ClauseExpectations":
        if self.convention == VIOLATION:
            return self
        return _flip(self, VIOLATION)

    def as_satisfaction(self) -> "ClauseExpectations":
        if self.convention == SATISFACTION:
            return self
        return _flip(self, SATISFACTION)


def _flip(e: ClauseExpectations, target: str) -> ClauseExpectations:
    # inclusion-exclusion is its own inverse between the two conventions
    p1 = 1 - e.p1
    p2 = {lab: 1 - 2 * e.p1 + v for lab, v in e.p2.items()}
    p3 = 1 - 3 * e.p1 + sum(e.p2[lab] for lab in PAIR_LABELS) - e.p3
    return ClauseExpectations(e.k, e.n, target, p1, p2, p3)


def _cells(nr):
    if isinstance(nr, np.ndarray) and nr.ndim == 2:
        return nr[:, 0], nr[:, 1], nr[:, 2], nr[:, 3], int(nr[0].sum())
    c = _as_reduced(nr)
    return c[0], c[1], c[2], c[3], sum(c)


@lru_cache(maxsize=None)
def _binom_table(nmax: int) -> np.ndarray:
    tab = np.zeros((nmax + 1, nmax + 1))
    for x in range(nmax + 1):
        for j in range(x + 1):
            tab[x, j] = math.comb(x, j)
    return tab


class _Arith:
    """Binomials and ratios either exactly (scalars) or in float64 (arrays)."""

    def __init__(self, vectorised: bool, nmax: int):
        self.vec = vectorised
        self.tab = _binom_table(nmax) if vectorised else None

    def comb(self, x, j):
        if j < 0:
            return 0
        if self.vec:
            return self.tab[x, j] if j < self.tab.shape[1] else np.zeros(np.shape(x))
        return math.comb(int(x), j)

    def ratio(self, num, den):
        return num / den if self.vec else Fraction(num, den)

    def power_ratio(self, x, n, k):
        return (x / n) ** k if self.vec else Fraction(int(x), n) ** k


def clause_expectations_1in_k(k: int, nr) -> ClauseExpectations:
    """Satisfaction probabilities of exactly-one-true clauses sampled without repetition.

    ``nr`` is one reduced configuration (exact Fractions are returned) or an
    ``(M, 4)`` array of configurations of equal weight (float arrays are returned).
    """
    a, b, c, d, n = _cells(nr)
    if k > n:
        raise ValueError(f"1-in-k expectations without repetition need k <= n (k={k}, n={n})")
    ar = _Arith(isinstance(nr, np.ndarray) and nr.ndim == 2, n)
    Z = math.comb(n, k) * 2 ** k

    def pair(same, diff):
        return ar.ratio(k * ar.comb(same, k) + 2 * ar.comb(same, k - 2) * ar.comb(diff, 2), Z)

    p1 = Fraction(k, 2 ** k) if not ar.vec else k / 2 ** k
    p2 = {"1,0": pair(a + b, c + d), "1,-1": pair(a + c, b + d), "0,-1": pair(a + d, b + c)}
    p3 = ar.ratio(k * ar.comb(a, k)
                  + 2 * ar.comb(a, k - 2) * (ar.comb(b, 2) + ar.comb(c, 2) + ar.comb(d, 2))
                  + b * c * d * ar.comb(a, k - 3), Z)
    return ClauseExpectations(k, n, SATISFACTION, p1, p2, p3)


def clause_expectations_nae(k: int, nr, repetition_mode: str = WITHOUT_REPETITION) -> ClauseExpectations:
    """Violation probabilities of not-all-equal clauses under either sampling mode."""
    if repetition_mode not in REPETITION_MODES:
        raise ValueError(f"unknown repetition mode {repetition_mode!r}")
    a, b, c, d, n = _cells(nr)
    if repetition_mode == WITHOUT_REPETITION and k > n:
        raise ValueError(f"NAE expectations without repetition need k <= n (k={k}, n={n})")
    ar = _Arith(isinstance(nr, np.ndarray) and nr.ndim == 2, n)
    if repetition_mode == WITH_REPETITION:
        def f(x):
            return ar.power_ratio(x, n, k)
    else:
        cnk = math.comb(n, k)

        def f(x):
            return ar.ratio(ar.comb(x, k), cnk)
    coef = Fraction(2, 2 ** k) if not ar.vec else 2 / 2 ** k
    p2 = {"1,0": coef * (f(a + b) + f(c + d)),
          "1,-1": coef * (f(a + c) + f(b + d)),
          "0,-1": coef * (f(a + d) + f(b + c))}
    p3 = coef * (f(a) + f(b) + f(c) + f(d))
    return ClauseExpectations(k, n, VIOLATION, coef, p2, p3)


def p_single_from_expectations(e: ClauseExpectations, gamma: float):
    """Assemble P_single from violation probabilities (satisfaction inputs are converted)."""
    v = e.as_violation()
    ep, em = cmath.exp(0.5j * gamma), cmath.exp(-0.5j * gamma)
    s2 = 4 * math.sin(gamma / 4) ** 2
    v1 = v0 = vm1 = v.p1
    return (1 + (ep - 1) * v1 + (em - 1) * vm1 + s2 * v.p2["1,-1"] - v0
            - (ep - 1) * v.p2["1,0"] - (em - 1) * v.p2["0,-1"] - s2 * v.p3)


def phase_coefficients_from_expectations(e: ClauseExpectations):
    """``(c0, cm, cp)`` with ``P = c0 + cm e^{-i g/2} + cp e^{i g/2}``."""
    s = e.as_satisfaction()
    cm = s.p2["1,0"] - s.p3
    cp = s.p2["0,-1"] - s.p3
    c0 = s.p1 - s.p2["1,0"] - s.p2["0,-1"] + 2 * s.p3
    return c0, cm, cp


def p_single_from_coefficients(c0, cm, cp, gamma):
    return c0 + cm * np.exp(-0.5j * gamma) + cp * np.exp(0.5j * gamma)


# ---------------------------------------------------------------------------
# Vectorised backends used by the success-probability evaluator


class ClauseBackend:
    """Evaluates the phase coefficients over many reduced configurations."""

    name = "abstract"
    repetition_mode = WITH_REPETITION

    def coefficients(self, N: np.ndarray) -> np.ndarray:
        """``(M, 3)`` float array of ``(c0, cm, cp)`` for rows of ``N`` (equal weight)."""
        raise NotImplementedError

    def coefficients_exact(self, counts: Sequence[int]) -> tuple:
        """Exact Fractions ``(c0, cm, cp)`` at one reduced configuration."""
        raise NotImplementedError

    def values(self, N: np.ndarray, gamma: float) -> np.ndarray:
        c = self.coefficients(N)
        return p_single_from_coefficients(c[:, 0], c[:, 1], c[:, 2], gamma)


class _FoldedBackend(ClauseBackend):
    """Backends whose coefficients are integer sums over reduced k-configurations."""

    def __init__(self, k: int, exps: np.ndarray, weights: np.ndarray):
        self.k = k
        self.exps = exps          # (K, 4) reduced exponents
        self.weights = weights    # (K, 3) integer weights for (c0, cm, cp)

    def coefficients(self, N):
        N = np.asarray(N, dtype=np.int64)
        n = N[0].sum()
        frac = N / n
        # 0**0 == 1 as required by the multinomial structure
        powers = np.prod(frac[:, None, :] ** self.exps[None, :, :], axis=2)
        return powers @ self.weights.astype(float) / 2 ** self.k

    def coefficients_exact(self, counts):
        n = sum(counts)
        out = [Fraction(0)] * 3
        for R, w in zip(self.exps, self.weights):
            p = math.prod(Fraction(int(counts[c]), n) ** int(R[c]) for c in range(4))
            for j in range(3):
                if w[j]:
                    out[j] += int(w[j]) * p
        return tuple(x / 2 ** self.k for x in out)


def _fold(k, rows):
    """Accumulate ``(reduced exponent, column, weight)`` triples into dense arrays."""
    acc = {}
    for R, col, w in rows:
        key = tuple(int(x) for x in R)
        acc.setdefault(key, [0, 0, 0])[col] += int(w)
    keys = sorted(acc)
    return np.array(keys, dtype=np.int64).reshape(-1, 4), np.array([acc[x] for x in keys], dtype=np.int64).reshape(-1, 3)


def _phase_column(y1, ym1):
    return {0: 0, 1: 1, -1: 2}[int(y1) - int(ym1)]


def _fold_cells(kv):
    R = [0, 0, 0, 0]
    for s in range(8):
        R[REDUCED_CELL[s]] += int(kv[s])
    return R


class GeneralBackend(_FoldedBackend):
    name = "general"

    def __init__(self, table: TruthTable):
        self.table = table
        self.ztable = build_ztable(table)
        rows = [(_fold_cells(c), _phase_column(y[0], y[2]), m)
                for y, c, m in zip(self.ztable.ys, self.ztable.configs, self.ztable.counts) if y[1]]
        exps, weights = _fold(table.k, rows) if rows else (np.zeros((0, 4), np.int64), np.zeros((0, 3), np.int64))
        super().__init__(table.k, exps, weights)


class HammingBackend(_FoldedBackend):
    name = "hamming"

    def __init__(self, spec):
        wv = _hamming_weights(spec)
        k = len(wv) - 1
        self.weight_values = wv
        rows = []
        for kv in compositions_array(k, 8):
            h1, h0, hm1 = (sum(int(kv[s]) for s in range(8) if s & bit) for bit in _POPCOUNT_MASKS)
            if wv[h0]:
                rows.append((_fold_cells(kv), _phase_column(wv[h1], wv[hm1]), multinomial(k, kv)))
        exps, weights = _fold(k, rows) if rows else (np.zeros((0, 4), np.int64), np.zeros((0, 3), np.int64))
        super().__init__(k, exps, weights)


class _ExpectationBackend(ClauseBackend):
    def _expect(self, nr):
        raise NotImplementedError

    def coefficients(self, N):
        N = np.asarray(N, dtype=np.int64)
        c0, cm, cp = phase_coefficients_from_expectations(self._expect(N))
        shape = (N.shape[0],)
        return np.stack([np.broadcast_to(c0, shape), np.broadcast_to(cm, shape), np.broadcast_to(cp, shape)], axis=1)

    def coefficients_exact(self, counts):
        return phase_coefficients_from_expectations(self._expect(tuple(int(x) for x in counts)))


class OneInKBackend(_ExpectationBackend):
    name = "1in"
    repetition_mode = WITHOUT_REPETITION

    def __init__(self, k: int):
        self.k = k

    def _expect(self, nr):
        return clause_expectations_1in_k(self.k, nr)


class NaeBackend(_ExpectationBackend):
    name = "nae"

    def __init__(self, k: int, repetition_mode: str = WITHOUT_REPETITION):
        if repetition_mode not in REPETITION_MODES:
            raise ValueError(f"unknown repetition mode {repetition_mode!r}")
        self.k = k
        self.repetition_mode = repetition_mode

    def _expect(self, nr):
        return clause_expectations_nae(self.k, nr, self.repetition_mode)


PATHS = ("auto", "general", "hamming", "1in", "nae")


class BackendMismatch(ValueError):
    """The requested polynomial route cannot serve this table or sampling mode."""


def select_backend(table: TruthTable, path: str = "auto", repetition_mode: str = WITH_REPETITION) -> ClauseBackend:
    """Pick the clause-polynomial backend for ``table`` under the given clause distribution."""
    if path not in PATHS:
        raise BackendMismatch(f"unknown path {path!r}; choose from {', '.join(PATHS)}")
    if repetition_mode not in REPETITION_MODES:
        raise BackendMismatch(f"unknown repetition mode {repetition_mode!r}")
    k = table.k
    is_1in = table == one_in_k_table(k)
    is_nae = table == nae_table(k)
    if path == "auto":
        if repetition_mode == WITHOUT_REPETITION:
            if is_1in:
                return OneInKBackend(k)
            if is_nae:
                return NaeBackend(k, WITHOUT_REPETITION)
            raise BackendMismatch("without-repetition sampling is only available for 1-in-k and NAE tables")
        if is_nae:
            return NaeBackend(k, WITH_REPETITION)
        path = "hamming" if table.is_hamming else "general"
    if path == "1in":
        if not is_1in:
            raise BackendMismatch("the 1in path needs a 1-in-k table")
        if repetition_mode != WITHOUT_REPETITION:
            raise BackendMismatch("the 1in path is defined for without-repetition sampling")
        return OneInKBackend(k)
    if path == "nae":
        if not is_nae:
            raise BackendMismatch("the nae path needs a NAE table")
        return NaeBackend(k, repetition_mode)
    if repetition_mode != WITH_REPETITION:
        raise BackendMismatch(f"the {path} path is defined for with-repetition sampling only")
    if path == "hamming":
        if not table.is_hamming:
            raise BackendMismatch("the hamming path needs a Hamming-weight table")
        return HammingBackend(table)
    if k > MAX_ZTABLE_K:
        raise BackendMismatch(f"the general path supports k <= {MAX_ZTABLE_K}")
    return GeneralBackend(table)
