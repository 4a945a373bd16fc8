"""Brute-force ground truth: dense statevector QAOA, instance averaging, clause enumeration."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .clause_poly import SATISFACTION, ClauseExpectations
from .success import QaoaAngles
from .tables import (WITH_REPETITION, WITHOUT_REPETITION, CspInstance, Fixed, SamplerConfig, TruthTable,
                     sample_instance, trial_rng)

MAX_QUBITS = 26
MAX_CLAUSE_SPACE = 10 ** 7


@dataclass
class StateVector:
    n: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _check_size(n):
    if n > MAX_QUBITS:
        raise ValueError(f"statevector simulation is capped at n <= {MAX_QUBITS}, got {n}")


def apply_mixer(psi: np.ndarray, n: int, beta: float) -> np.ndarray:
    """Apply ``exp(-i beta X / 2)`` to every qubit (qubit 0 is the least significant bit)."""
    c, s = math.cos(beta / 2), -1j * math.sin(beta / 2)
    psi = psi.astype(complex, copy=True)
    for q in range(n):
        v = psi.reshape(-1, 2, 2 ** q)
        a0, a1 = v[:, 0, :].copy(), v[:, 1, :].copy()
        v[:, 0, :] = c * a0 + s * a1
        v[:, 1, :] = s * a0 + c * a1
    return psi


def state_from_costs(costs: np.ndarray, n: int, angles: QaoaAngles) -> StateVector:
    psi = np.exp(-0.5j * angles.gamma * costs) / math.sqrt(2 ** n)
    return StateVector(n, apply_mixer(psi, n, angles.beta))


def qaoa_state(instance: CspInstance, angles: QaoaAngles) -> StateVector:
    _check_size(instance.n)
    return state_from_costs(instance.violation_counts(), instance.n, angles)


def success_from_costs(costs: np.ndarray, n: int, angles: QaoaAngles) -> float:
    psi = state_from_costs(costs, n, angles).amplitudes
    sat = costs == 0
    return float(np.sum(np.abs(psi[sat]) ** 2)) if sat.any() else 0.0


def instance_success(instance: CspInstance, angles: QaoaAngles) -> float:
    """Probability that measuring the QAOA state yields a satisfying assignment."""
    _check_size(instance.n)
    return success_from_costs(instance.violation_counts(), instance.n, angles)


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_instances: int

    def __iter__(self):
        return iter((self.mean, self.std_error))


def mc_average_success(n: int, table: TruthTable, cfg: SamplerConfig,
                       angles: Union[QaoaAngles, Sequence[QaoaAngles]], n_instances: int,
                       seed: int = None):
    """Monte-Carlo instance average of the success probability.

    Instance ``i`` is drawn from a generator seeded by ``(seed, i)``, so results do
    not depend on how trials are partitioned.  Passing a list of angle pairs reuses
    every instance for all of them and returns a list of estimates.
    """
    _check_size(n)
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    seed = cfg.seed if seed is None else seed
    single = isinstance(angles, QaoaAngles)
    angle_list = [angles] if single else list(angles)
    vals = np.empty((n_instances, len(angle_list)))
    for i in range(n_instances):
        inst = sample_instance(n, table, cfg, trial_rng(seed, i))
        costs = inst.violation_counts()
        for j, a in enumerate(angle_list):
            vals[i, j] = success_from_costs(costs, n, a)
    means = vals.mean(axis=0)
    errs = vals.std(axis=0, ddof=1) / math.sqrt(n_instances) if n_instances > 1 else np.zeros(len(angle_list))
    out = [McEstimate(float(m), float(e), n_instances) for m, e in zip(means, errs)]
    return out[0] if single else out


def _all_clauses(n: int, k: int, repetition_mode: str):
    if repetition_mode == WITH_REPETITION:
        space = n ** k * 2 ** k
        scopes = itertools.product(range(n), repeat=k)
    elif repetition_mode == WITHOUT_REPETITION:
        if k > n:
            raise ValueError("k > n has no clauses without repetition")
        space = math.perm(n, k) * 2 ** k
        scopes = itertools.permutations(range(n), k)
    else:
        raise ValueError(f"unknown repetition mode {repetition_mode!r}")
    if space > MAX_CLAUSE_SPACE:
        raise ValueError(f"clause space of {space} exceeds the enumeration budget")
    var = np.array(list(scopes), dtype=np.int64).reshape(-1, k)
    neg = np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int64)
    return var, neg


def _truth_matrix(table: TruthTable, z: np.ndarray, var: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """Boolean (scopes, negations) matrix of clause truth values under bitstring ``z``."""
    lits = z[var][:, None, :] ^ neg[None, :, :]
    rows = (lits << np.arange(var.shape[1])).sum(axis=2)
    return table.array[rows]


def _triplet_truths(n, table, triplet, repetition_mode):
    z = [np.asarray(t, dtype=np.int64) for t in triplet]
    if any(len(t) != n for t in z):
        raise ValueError("triplet bitstrings must have length n")
    var, neg = _all_clauses(n, table.k, repetition_mode)
    return [_truth_matrix(table, t, var, neg) for t in z]


def enumerate_clause_expectation(n: int, table: TruthTable, triplet, gamma: float,
                                 repetition_mode: str = WITH_REPETITION) -> complex:
    """Average of ``exp(-i gamma/2 (S1 - S_1)) S0`` over every clause, uniformly weighted."""
    s1, s0, sm1 = _triplet_truths(n, table, triplet, repetition_mode)
    vals = np.exp(-0.5j * gamma * (s1.astype(float) - sm1)) * s0
    return complex(vals.mean())


def enumerate_clause_probabilities(n: int, table: TruthTable, triplet,
                                   repetition_mode: str = WITH_REPETITION) -> ClauseExpectations:
    """Exact joint satisfaction probabilities of the triplet against one uniform clause."""
    s1, s0, sm1 = _triplet_truths(n, table, triplet, repetition_mode)
    p2 = {"1,0": float((s1 & s0).mean()), "1,-1": float((s1 & sm1).mean()), "0,-1": float((s0 & sm1).mean())}
    return ClauseExpectations(table.k, n, SATISFACTION, float(s0.mean()), p2, float((s1 & s0 & sm1).mean()))


def exact_average_success(n: int, table: TruthTable, m: int, angles: QaoaAngles) -> float:
    """Average success over every with-repetition instance of exactly ``m`` clauses."""
    var, neg = _all_clauses(n, table.k, WITH_REPETITION)
    clauses = [(v, g) for v in var for g in neg]
    total = math.fsum(
        instance_success(CspInstance(n, table, [c[0] for c in combo], [c[1] for c in combo]), angles)
        for combo in itertools.product(clauses, repeat=m)
    ) if m else instance_success(CspInstance(n, table, np.zeros((0, table.k)), np.zeros((0, table.k))), angles)
    return total / (len(clauses) ** m if m else 1)


def triplet_from_reduced(counts, rng: np.random.Generator = None):
    """A bitstring triplet whose reduced configuration is ``counts`` (positions shuffled if ``rng`` given)."""
    patterns = [0b000, 0b001, 0b010, 0b011]   # one representative pattern per reduced cell
    s = np.repeat(patterns, [int(c) for c in counts])
    if rng is not None:
        s = rng.permutation(s)
        flip = rng.integers(0, 2, s.size).astype(bool)
        s = np.where(flip, 7 - s, s)          # complementing a position keeps its reduced cell
    return tuple(((s >> sh) & 1).astype(np.int64) for sh in (2, 1, 0))
