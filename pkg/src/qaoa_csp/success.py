"""Instance-averaged depth-1 QAOA success probability in closed form.

The average over random instances collapses to a sum over reduced
configurations ``n' = (a, b, c, d)`` of weight ``n``::

    sum  multinomial(n; a, b, c, d) * cos^2(beta/2)^a * (-i sin(beta)/2)^b
         * sin^2(beta/2)^c * (i sin(beta)/2)^d * W(P_single(n'))

with ``W(P) = exp(r n (P - 1))`` for a Poisson clause count and ``W(P) = P^m``
for exactly ``m`` clauses.  There are ``C(n+3, 3)`` terms, so the cost is cubic
in ``n`` once the clause backend is fixed.
"""
from __future__ import annotations

import logging
import math
from fractions import Fraction
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import mpmath
import numpy as np

from .clause_poly import ClauseBackend, select_backend
from .combinatorics import log_multinomial_rows, multinomial, reduced_configs_array
from .tables import WITH_REPETITION, Fixed, Poisson, TruthTable

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
IMAG_TOL = 1e-9
REL_ERROR_TARGET = 1e-9
ABS_ERROR_TARGET = 1e-12
PRECISIONS = ("auto", "double", "mp")


class PrecisionError(ArithmeticError):
    """The evaluation could not reach the requested accuracy."""


@dataclass(frozen=True)
class QaoaAngles:
    gamma: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise ValueError("angles must be finite")

    def canonical(self) -> "QaoaAngles":
        """Representative with beta in [0, 2pi) and gamma in [0, 4pi)."""
        return QaoaAngles(math.fmod(self.gamma, 4 * math.pi) % (4 * math.pi),
                          math.fmod(self.beta, 2 * math.pi) % (2 * math.pi))


MMode = Union[Poisson, Fixed]


@dataclass(frozen=True)
class SuccessQuery:
    table: TruthTable
    n: int
    angles: QaoaAngles
    m_mode: MMode
    path: str = "auto"
    repetition_mode: str = WITH_REPETITION
    precision: str = "auto"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not isinstance(self.m_mode, (Poisson, Fixed)):
            raise ValueError("m_mode must be Poisson or Fixed")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}")

    def with_n(self, n: int) -> "SuccessQuery":
        return SuccessQuery(self.table, n, self.angles, self.m_mode, self.path,
                            self.repetition_mode, self.precision)


@dataclass
class SuccessResult:
    probability: float
    imag: float
    path: str
    precision: str
    error_bound: float
    clamped: bool = False
    n_terms: int = 0


@lru_cache(maxsize=64)
def backend_for(table: TruthTable, path: str = "auto", repetition_mode: str = WITH_REPETITION) -> ClauseBackend:
    return select_backend(table, path, repetition_mode)


@lru_cache(maxsize=128)
def _configs(n: int):
    N = reduced_configs_array(n)
    N.flags.writeable = False
    lm = log_multinomial_rows(N)
    lm.flags.writeable = False
    return N, lm


_COEF_CACHE: dict = {}


def _coefficients(backend: ClauseBackend, n: int) -> np.ndarray:
    key = (id(backend), n)
    hit = _COEF_CACHE.get(key)
    if hit is None or hit[0] is not backend:
        if len(_COEF_CACHE) > 512:
            _COEF_CACHE.clear()
        hit = (backend, backend.coefficients(_configs(n)[0]))
        _COEF_CACHE[key] = hit
    return hit[1]


def _mixer_log_phase(N: np.ndarray, beta: float):
    """Log-magnitude and phase of the mixer factor for every configuration (zeros give -inf)."""
    a, b, c, d = N[:, 0], N[:, 1], N[:, 2], N[:, 3]
    c2, s2, sb = math.cos(beta / 2) ** 2, math.sin(beta / 2) ** 2, math.sin(beta) / 2
    logmag = np.zeros(N.shape[0])
    for cnt, f in ((a, c2), (c, s2), (b + d, abs(sb))):
        if f > 0:
            logmag += cnt * math.log(f)
        else:
            logmag = np.where(cnt > 0, -np.inf, logmag)
    # (i sb)^d (-i sb)^b: phase pi/2 * (d - b), plus pi per factor when sb < 0
    phase = 0.5 * math.pi * (d - b) + (math.pi * (b + d) if sb < 0 else 0.0)
    return logmag, phase


def _weight_log_phase(P: np.ndarray, n: int, m_mode: MMode):
    if isinstance(m_mode, Poisson):
        rn = m_mode.r * n
        return rn * (P.real - 1.0), rn * P.imag
    m = int(m_mode.m)
    if m == 0:
        return np.zeros(P.shape), np.zeros(P.shape)
    mag = np.abs(P)
    with np.errstate(divide="ignore"):
        return np.where(mag > 0, m * np.log(mag), -np.inf), m * np.angle(P)


def _evaluate_double(backend: ClauseBackend, n: int, angles: QaoaAngles, m_mode: MMode):
    N, lm = _configs(n)
    coef = _coefficients(backend, n)
    P = coef[:, 0] + coef[:, 1] * np.exp(-0.5j * angles.gamma) + coef[:, 2] * np.exp(0.5j * angles.gamma)
    lmix, pmix = _mixer_log_phase(N, angles.beta)
    lw, pw = _weight_log_phase(P, n, m_mode)
    logt = lm + lmix + lw
    finite = np.isfinite(logt)
    if not finite.any():
        return 0j, 0.0
    L = logt[finite].max()
    mag = np.exp(logt[finite] - L)
    ph = np.mod((pmix + pw)[finite], 2 * math.pi)
    re = math.fsum(mag * np.cos(ph))
    im = math.fsum(mag * np.sin(ph))
    scale = math.exp(L)
    total_mag = math.fsum(mag) * scale
    extra = m_mode.r * n if isinstance(m_mode, Poisson) else m_mode.m
    rel = EPS * (16 + 4 * n + 2 * abs(L) + 4 * float(lm.max()) + 8 * extra + 2 * float(np.abs(pw).max(initial=0.0)))
    return complex(re * scale, im * scale), rel * total_mag


def _evaluate_mp(backend: ClauseBackend, n: int, angles: QaoaAngles, m_mode: MMode, dps: int):
    N, _ = _configs(n)
    trivial = m_mode == Poisson(0.0) or m_mode == Fixed(0)   # W == 1 for every configuration
    with mpmath.workdps(dps):
        gamma, beta = mpmath.mpf(angles.gamma), mpmath.mpf(angles.beta)
        em, ep = mpmath.expj(-gamma / 2), mpmath.expj(gamma / 2)
        c2, s2, sb = mpmath.cos(beta / 2) ** 2, mpmath.sin(beta / 2) ** 2, mpmath.sin(beta) / 2
        total = mpmath.mpc(0)
        for row in N:
            a, b, c, d = (int(x) for x in row)
            mix = multinomial(n, (a, b, c, d)) * c2 ** a * s2 ** c * (mpmath.mpc(0, 1) * sb) ** d \
                * (mpmath.mpc(0, -1) * sb) ** b
            if mix == 0:
                continue
            if trivial:
                total += mix
                continue
            c0, cm, cp = (_mpf(v) for v in backend.coefficients_exact((a, b, c, d)))
            P = c0 + cm * em + cp * ep
            if isinstance(m_mode, Poisson):
                W = mpmath.exp(mpmath.mpf(m_mode.r) * n * (P - 1))
            else:
                W = P ** int(m_mode.m)
            total += mix * W
        return complex(total)


def _mpf(v):
    f = Fraction(v)
    return mpmath.mpf(f.numerator) / f.denominator


def evaluate_success(q: SuccessQuery, backend: Optional[ClauseBackend] = None) -> SuccessResult:
    """Closed-form success probability with accuracy diagnostics.

    Double precision is used first; with ``precision="auto"`` an mpmath re-run
    is triggered when the estimated rounding error exceeds ``1e-9`` relative or
    ``1e-12`` absolute, or when the imaginary residue is too large.
    """
    if backend is None:
        backend = backend_for(q.table, q.path, q.repetition_mode)
    n_terms = math.comb(q.n + 3, 3)
    mode = "double"
    if q.precision == "mp":
        value, bound, mode = _mp_value(backend, q), 0.0, "mp"
    else:
        value, bound = _evaluate_double(backend, q.n, q.angles, q.m_mode)
        target = min(REL_ERROR_TARGET * abs(value.real), ABS_ERROR_TARGET)
        bad = bound > target or abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real))
        if bad and bound > 0 and q.precision == "auto":
            log.debug("falling back to mpmath (bound %.3g, value %r)", bound, value)
            value, bound, mode = _mp_value(backend, q), 0.0, "mp"
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        raise PrecisionError(f"imaginary residue {value.imag:.3g} exceeds tolerance (real part {value.real:.6g})")
    p = value.real
    clamped = False
    if p < 0:
        if p < -max(bound, 1e-12):
            raise PrecisionError(f"negative probability {p:.3g} beyond rounding bound {bound:.3g}")
        log.info("clamping tiny negative probability %.3g to 0", p)
        p, clamped = 0.0, True
    return SuccessResult(p, value.imag, backend.name, mode, bound, clamped, n_terms)


def _mp_value(backend, q: SuccessQuery) -> complex:
    # digits lost to cancellation are at most log10 of sum |t| / |p|; 40 covers every tested regime
    return _evaluate_mp(backend, q.n, q.angles, q.m_mode, dps=40)


def success_probability(q: SuccessQuery) -> float:
    return evaluate_success(q).probability


def success_curve(q: SuccessQuery, n_values: Iterable[int], jobs: int = 1) -> list:
    """``[(n, p(n))]`` for each requested size."""
    n_values = list(n_values)
    if jobs and jobs > 1 and len(n_values) > 1:
        from concurrent.futures import ThreadPoolExecutor

        backend_for(q.table, q.path, q.repetition_mode)
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            probs = list(ex.map(lambda n: success_probability(q.with_n(n)), n_values))
    else:
        probs = [success_probability(q.with_n(n)) for n in n_values]
    return list(zip(n_values, probs))


def success_grid(table: TruthTable, n: int, m_mode: MMode, gammas: Sequence[float], betas: Sequence[float],
                 path: str = "auto", repetition_mode: str = WITH_REPETITION) -> np.ndarray:
    """Double-precision success probabilities on a ``len(gammas) x len(betas)`` grid.

    Meant for angle search; re-evaluate the chosen point with :func:`evaluate_success`.
    """
    backend = backend_for(table, path, repetition_mode)
    N, lm = _configs(n)
    coef = _coefficients(backend, n)
    g = np.asarray(gammas, dtype=float)
    P = coef[None, :, 0] + coef[None, :, 1] * np.exp(-0.5j * g)[:, None] + coef[None, :, 2] * np.exp(0.5j * g)[:, None]
    lw, pw = _weight_log_phase(P, n, m_mode)
    mixes = []
    for beta in betas:
        lmix, pmix = _mixer_log_phase(N, float(beta))
        mixes.append((lm + lmix, pmix))
    lmix = np.stack([x[0] for x in mixes], axis=1)   # (rows, B)
    pmix = np.stack([x[1] for x in mixes], axis=1)
    shift = np.max(lw[np.isfinite(lw)], initial=0.0)
    lshift = np.max(lmix[np.isfinite(lmix)], initial=0.0)
    W = np.exp(lw - shift) * np.exp(1j * pw)                  # (G, rows)
    M = np.exp(lmix - lshift) * np.exp(1j * pmix)             # (rows, B)
    out = (W @ M).real * math.exp(shift + lshift)
    return out
