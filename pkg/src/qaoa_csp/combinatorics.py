"""Multinomials and configuration basis numbers.

A configuration of a bitstring triplet ``(w1, w0, w_1)`` counts, for each of the
eight joint bit patterns ``s = (s1, s0, s_1)``, how many positions carry that
pattern.  Patterns are indexed ``4*s1 + 2*s0 + s_1``.  The reduced configuration
pairs every pattern with its complement, giving four cells indexed by
``(s0 xor s1, s_1 xor s1)`` as ``2*a + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

LOG_ZERO = float("-inf")


@dataclass(frozen=True)
class ConfigNumbers:
    counts: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if len(c) != 8 or min(c) < 0:
            raise ValueError(f"configuration needs 8 nonnegative counts, got {c}")
        object.__setattr__(self, "counts", c)

    @property
    def weight(self) -> int:
        return sum(self.counts)

    def __getitem__(self, s):
        return self.counts[s]


@dataclass(frozen=True)
class ReducedConfigNumbers:
    counts: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if len(c) != 4 or min(c) < 0:
            raise ValueError(f"reduced configuration needs 4 nonnegative counts, got {c}")
        object.__setattr__(self, "counts", c)

    @property
    def weight(self) -> int:
        return sum(self.counts)

    def __getitem__(self, s):
        return self.counts[s]


def multinomial(q: int, parts: Sequence[int]) -> int:
    """Exact ``q! / prod(parts!)``; zero when parts are negative or do not sum to ``q``."""
    parts = [int(p) for p in parts]
    if q < 0 or any(p < 0 for p in parts) or sum(parts) != q:
        return 0
    out, left = 1, q
    for p in parts:
        out *= math.comb(left, p)
        left -= p
    return out


def log_multinomial(q: int, parts: Sequence[int]) -> float:
    """Natural log of :func:`multinomial`; returns ``LOG_ZERO`` in the vanishing case."""
    parts = [int(p) for p in parts]
    if q < 0 or any(p < 0 for p in parts) or sum(parts) != q:
        return LOG_ZERO
    return math.lgamma(q + 1) - math.fsum(math.lgamma(p + 1) for p in parts)


def _compositions(q: int, parts: int) -> Iterator[tuple]:
    if parts == 1:
        yield (q,)
        return
    for first in range(q + 1):
        for rest in _compositions(q - first, parts - 1):
            yield (first,) + rest


def enumerate_configs(q: int, parts: int = 8):
    """Stream every weak composition of ``q`` into ``parts`` (8 or 4) in lexicographic order."""
    if q < 0:
        raise ValueError("q must be >= 0")
    if parts == 8:
        return (ConfigNumbers(c) for c in _compositions(q, 8))
    if parts == 4:
        return (ReducedConfigNumbers(c) for c in _compositions(q, 4))
    raise ValueError(f"parts must be 8 or 4, got {parts}")


def count_configs(q: int, parts: int = 8) -> int:
    return math.comb(q + parts - 1, parts - 1)


def negate_config(c: ConfigNumbers) -> ConfigNumbers:
    return ConfigNumbers(tuple(c.counts[7 - s] for s in range(8)))


# reduced cell of each pattern s: (s0 ^ s1, s_1 ^ s1)
REDUCED_CELL = np.array([2 * (((s >> 1) & 1) ^ (s >> 2)) + ((s & 1) ^ (s >> 2)) for s in range(8)])


def reduce_config(c: ConfigNumbers) -> ReducedConfigNumbers:
    out = [0, 0, 0, 0]
    for s, v in enumerate(c.counts):
        out[REDUCED_CELL[s]] += v
    return ReducedConfigNumbers(out)


def config_of_triplet(w1: Sequence[int], w0: Sequence[int], wm1: Sequence[int]) -> ConfigNumbers:
    if not len(w1) == len(w0) == len(wm1):
        raise ValueError("triplet bitstrings must have equal length")
    counts = [0] * 8
    for a, b, c in zip(w1, w0, wm1):
        counts[4 * (int(a) & 1) + 2 * (int(b) & 1) + (int(c) & 1)] += 1
    return ConfigNumbers(counts)


def compositions_array(q: int, parts: int) -> np.ndarray:
    """All weak compositions of ``q`` into ``parts`` as an ``(count, parts)`` int array, lexicographic."""
    if parts == 1:
        return np.array([[q]], dtype=np.int64)
    blocks = []
    for first in range(q + 1):
        rest = compositions_array(q - first, parts - 1)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


def reduced_configs_array(n: int) -> np.ndarray:
    """Every reduced configuration of weight ``n`` as rows of an ``(C(n+3,3), 4)`` array."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return compositions_array(n, 4)


def log_multinomial_rows(rows: np.ndarray) -> np.ndarray:
    """Vectorised log-multinomial over rows of nonnegative counts."""
    rows = np.asarray(rows)
    q = rows.sum(axis=1)
    return gammaln(q + 1.0) - gammaln(rows + 1.0).sum(axis=1)
