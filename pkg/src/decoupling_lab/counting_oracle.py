"""Exact integer ground truth for exponential-sum norms.

The characters e(gamma(n/N).x) are orthogonal on Q, so
    avg_Q |f|^{2m} = sum over keys (s, q) of |r(s, q)|^2,
    r(s, q) = sum of a_{n_1}...a_{n_m} over m-tuples with sum n_i = s, sum n_i^2 = q.
Everything here is integer arithmetic; floats only enter through the
coefficients themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exp_sum import ExpSumSpec, lp_power_mean

DEFAULT_TUPLE_BUDGET = 64**3


class OracleBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSolutionCount:
    N: int
    intervals: tuple
    count: int
    weighted_value: complex


def _members(N, interval):
    lo, hi = (Fraction(v).limit_denominator(1 << 40) for v in interval)
    n = np.arange(1, N + 1, dtype=np.int64)
    keep = np.array([lo < Fraction(int(k), N) <= hi for k in n], dtype=bool)
    return n[keep]


def _pair_keys(idx, N):
    n, m = np.meshgrid(idx, idx, indexing="ij")
    off = n != m
    n, m = n[off], m[off]
    key = (n - m + N) * (2 * N * N + 1) + (n * n - m * m + N * N)
    return key, n, m


def count_pair_system(N, I, I_prime, coeffs=None) -> SystemSolutionCount:
    """Count (n, m, n', m') with n != m, n' != m' and
    n - m = n' - m',  n^2 - m^2 = n'^2 - m'^2,
    where n/N, m/N lie in I and n'/N, m'/N lie in I' (intervals as (lo, hi]).

    ``weighted_value`` is sum a_n conj(a_m) conj(a_n' conj(a_m')) over the
    solutions, i.e. the inner product of the off-diagonal parts of |f_I|^2
    and |f_I'|^2 averaged over Q.
    """
    a = np.ones(N, dtype=np.complex128) if coeffs is None else np.asarray(coeffs, dtype=np.complex128)
    A = _members(N, I)
    B = _members(N, I_prime)
    if A.size < 2 or B.size < 2:
        return SystemSolutionCount(N, (tuple(I), tuple(I_prime)), 0, 0j)
    ka, na, ma = _pair_keys(A, N)
    kb, nb, mb = _pair_keys(B, N)
    wa = a[na - 1] * np.conj(a[ma - 1])
    wb = a[nb - 1] * np.conj(a[mb - 1])
    keys, inv = np.unique(np.concatenate([ka, kb]), return_inverse=True)
    ia, ib = inv[: ka.size], inv[ka.size :]
    ca = np.bincount(ia, minlength=keys.size)
    cb = np.bincount(ib, minlength=keys.size)
    count = int(np.dot(ca.astype(object), cb.astype(object)))
    ra = np.bincount(ia, wa.real, keys.size) + 1j * np.bincount(ia, wa.imag, keys.size)
    rb = np.bincount(ib, wb.real, keys.size) + 1j * np.bincount(ib, wb.imag, keys.size)
    return SystemSolutionCount(N, (tuple(I), tuple(I_prime)), count, complex(np.sum(ra * np.conj(rb))))


def _tuple_sums(N, m):
    n = np.arange(1, N + 1, dtype=np.int64)
    s = np.zeros(1, dtype=np.int64)
    q = np.zeros(1, dtype=np.int64)
    for _ in range(m):
        s = (s[:, None] + n[None, :]).ravel()
        q = (q[:, None] + (n * n)[None, :]).ravel()
    return s, q


def l2m_norm_by_counting(coeffs, m, modulus=None, budget=DEFAULT_TUPLE_BUDGET):
    """Exact avg_Q |f|^{2m} by meet-in-the-middle over m-tuples.

    With ``modulus`` M the keys are reduced mod M, which gives the same
    quantity for the sum with frequencies (n, n^2) on Z_M^2.
    """
    a = np.asarray(coeffs, dtype=np.complex128).ravel()
    N = a.size
    if m == 1:
        return float(np.sum(np.abs(a) ** 2))
    if m not in (2, 3):
        raise ValueError("m must be 1, 2 or 3")
    if N**m > budget:
        raise OracleBudgetError(
            f"{N}^{m} tuples exceed the budget of {budget}; raise the budget explicitly "
            "or use vinogradov_count_ones for all-ones coefficients"
        )
    s, q = _tuple_sums(N, m)
    if modulus is None:
        key = s * (m * N * N + 1) + q
    else:
        key = (s % modulus) * modulus + (q % modulus)
    _, inv = np.unique(key, return_inverse=True)
    if np.all(a == 1):
        r = np.bincount(inv)
        return int(np.dot(r.astype(np.int64), r.astype(np.int64)))
    w = np.ones(1, dtype=np.complex128)
    for _ in range(m):
        w = (w[:, None] * a[None, :]).ravel()
    re = np.bincount(inv, w.real)
    im = np.bincount(inv, w.imag)
    return float(np.sum(re * re + im * im))


def vinogradov_count_ones(N, buckets=None):
    """Number of solutions in [1, N]^6 of
    x1 + x2 + x3 = y1 + y2 + y3,  x1^2 + x2^2 + x3^2 = y1^2 + y2^2 + y3^2.

    A triple is (x3, d1 = x1 - x2, d2 = x2 - x3).  Its sum is 3 x3 + d1 + 2 d2
    and, for a fixed sum, its sum of squares is fixed by the norm
    q = d1^2 + d1 d2 + d2^2.  Within a class (q, (d1 + 2 d2) mod 3) each
    admissible d contributes an interval of values of the sum index j, so the
    count is sum_j c(j)^2 over classes, done by a sweep over interval
    endpoints.  Cost is O(N^2 log N) instead of O(N^3).
    """
    if N < 1:
        return 0
    qmax = 3 * N * N
    nb = buckets or max(1, qmax // (1 << 22) + 1)
    edges = np.linspace(0, qmax + 1, nb + 1).astype(np.int64)
    d2 = np.arange(-(N - 1), N, dtype=np.int64)
    width = 4 * N
    total = 0
    for b in range(nb):
        ql, qh = int(edges[b]), int(edges[b + 1])
        codes = []
        for d1 in range(-(N - 1), N):
            q = d1 * d1 + d1 * d2 + d2 * d2
            top = np.maximum(np.maximum(0, d2), d1 + d2)
            bot = np.minimum(np.minimum(0, d2), d1 + d2)
            ok = (top - bot < N) & (q >= ql) & (q < qh)
            if not ok.any():
                continue
            c = d1 + 2 * d2[ok]
            rho = c % 3
            shift = (c - rho) // 3
            start = 1 - bot[ok] + shift + N
            stop = N - top[ok] + shift + 1 + N
            base = ((q[ok] - ql) * 3 + rho) * width
            codes.append(((base + start) << 1) | 1)
            codes.append((base + stop) << 1)
        if not codes:
            continue
        code = np.concatenate(codes)
        code.sort()
        count = np.cumsum(np.where(code & 1, 1, -1).astype(np.int64))
        gap = np.diff(code >> 1)
        total += int(np.dot(count[:-1] ** 2, gap))
    return total


def strichartz_ratio_ones(N):
    """D(N) for a_n = 1 and p = 6 from the exact solution count."""
    return vinogradov_count_ones(N) ** (1.0 / 6.0) / math.sqrt(N)


def verify_quadrature(spec: ExpSumSpec, grid=None, m=3, oversample=4):
    """Relative gap between grid quadrature of avg|f|^{2m} and the exact count."""
    oracle = l2m_norm_by_counting(spec.coeffs, m)
    quad = lp_power_mean(spec, 2 * m, grid, oversample)
    return abs(quad - oracle) / abs(oracle)


class OracleCache:
    """JSON files keyed by (N, coefficient digest, m)."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, spec, m):
        return self.directory / f"l2m_N{spec.N}_m{m}_{spec.digest()[:24]}.json"

    def get(self, spec, m):
        path = self._path(spec, m)
        if not path.exists():
            return None
        rec = json.loads(path.read_text())
        if rec["digest"] != spec.digest() or rec["N"] != spec.N or rec["m"] != m:
            return None
        return rec["value"]

    def put(self, spec, m, value):
        rec = {"N": spec.N, "m": m, "digest": spec.digest(), "value": value}
        self._path(spec, m).write_text(json.dumps(rec, sort_keys=True))

    def l2m(self, spec, m, **kw):
        value = self.get(spec, m)
        if value is None:
            value = l2m_norm_by_counting(spec.coeffs, m, **kw)
            self.put(spec, m, value)
        return value
