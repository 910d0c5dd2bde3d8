"""Exponential sums along the parabola and their Strichartz / decoupling ratios.

    f(x) = sum_{n=1}^N a_n e(gamma(n/N) . x),   gamma(s) = (s, s^2),   e(t) = exp(2 pi i t)

on Q = [0, N^2]^2.  Since f is N-periodic in x_1, one period [0, N) x [0, N^2)
carries the same averages as Q; the default quadrature grid samples that
period with spacing 1/4, which integrates |f|^p exactly for even p <= 6.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .core_fields import EXACT, REAL, ComplexField, GridSpec, _is_power_of


@dataclass(frozen=True)
class ExpSumSpec:
    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=np.complex128).ravel()
        if a.size < 1:
            raise ValueError("an exponential sum needs at least one coefficient")
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def ones(cls, N):
        return cls(np.ones(N))

    @classmethod
    def random_phase(cls, N, seed):
        rng = np.random.default_rng(seed)
        return cls(np.exp(2j * np.pi * rng.random(N)))

    @classmethod
    def from_source(cls, N, source, base_dir=None):
        """Build from ``all-ones``, ``random-phase(seed)`` or ``file(path)``."""
        source = source.strip()
        if source == "all-ones":
            return cls.ones(N)
        m = re.fullmatch(r"random-phase\((\d+)\)", source)
        if m:
            return cls.random_phase(N, int(m.group(1)))
        m = re.fullmatch(r"file\((.+)\)", source)
        if m:
            path = Path(m.group(1).strip())
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            spec = cls(_read_coefficients(path))
            if spec.N != N:
                raise ValueError(f"coefficient file has {spec.N} entries, expected {N}")
            return spec
        raise ValueError(f"unknown coefficient source {source!r}")

    @property
    def N(self):
        return self.coeffs.size

    @property
    def n(self):
        return np.arange(1, self.N + 1, dtype=np.int64)

    def l2_norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def restrict(self, keep):
        return ExpSumSpec(np.where(keep, self.coeffs, 0))

    def scaled(self, c):
        return ExpSumSpec(self.coeffs * c)

    def conjugate(self):
        return ExpSumSpec(np.conj(self.coeffs))

    def digest(self):
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.coeffs, dtype="<c16").tobytes()).hexdigest()


def _read_coefficients(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = [float(t) for t in re.split(r"[,\s]+", line) if t]
            rows.append(complex(parts[0], parts[1] if len(parts) > 1 else 0.0))
    return np.array(rows)


@dataclass(frozen=True)
class DyadicPartition:
    """Partition of (0, 1] into 1/delta intervals.

    Real mode uses the contiguous intervals (k delta, (k+1) delta], so that
    n/N for n = 1..N falls into exactly one of them and each interval holds
    N delta frequencies when delta >= 1/N.  Exact mode uses residue classes of
    n modulo p^j, the p-adic balls of radius delta = p^-j.
    """

    delta: float
    mode: str = REAL
    p: int = 2

    def __post_init__(self):
        count = round(1.0 / self.delta)
        if count < 1 or abs(count * self.delta - 1.0) > 1e-12:
            raise ValueError(f"1/delta must be a positive integer, got delta={self.delta}")
        base = self.p if self.mode == EXACT else 2
        if not _is_power_of(count, base):
            raise ValueError(f"1/delta must be a power of {base}")
        object.__setattr__(self, "delta", 1.0 / count)

    @property
    def count(self):
        return round(1.0 / self.delta)

    @property
    def intervals(self):
        d = Fraction(1, self.count)
        return [(k * d, (k + 1) * d) for k in range(self.count)]

    def label(self, n, N):
        """Interval index of each frequency n (1 <= n <= N)."""
        n = np.asarray(n, dtype=np.int64)
        if self.mode == EXACT:
            return n % self.count
        return (n * self.count - 1) // N

    def members(self, index, N):
        n = np.arange(1, N + 1, dtype=np.int64)
        return n[self.label(n, N) == index]


def frequency_bins(spec: ExpSumSpec, grid: GridSpec):
    """Grid bins (k1, k2) of the characters e(gamma(n/N).x).

    On the grid every character coincides with the DFT basis vector of its
    bin, so placing a_n there and inverting reproduces the samples exactly.
    """
    N = spec.N
    n = spec.n
    if grid.dims != 2:
        raise ValueError("exponential sums live on 2-D grids")
    if grid.mode == EXACT:
        M = grid.shape[0]
        if grid.shape != (N * N, N * N):
            raise ValueError("exact mode needs the grid Z_{N^2} x Z_{N^2}")
        return n % M, (n * n) % M
    e1, e2 = grid.extent
    r1, r2 = e1 / N, e2 / (N * N)
    if abs(r1 - round(r1)) > 1e-9 or abs(r2 - round(r2)) > 1e-9 or round(r1) < 1 or round(r2) < 1:
        raise ValueError("grid extents must be multiples of (N, N^2) so every character is periodic")
    return (n * round(r1)) % grid.shape[0], (n * n * round(r2)) % grid.shape[1]


def _coefficient_grid(spec, grid, coeffs=None):
    a = spec.coeffs if coeffs is None else coeffs
    k1, k2 = frequency_bins(spec, grid)
    S = np.zeros(grid.shape, dtype=np.complex128)
    np.add.at(S, (k1, k2), a)
    return S


def eval_exp_sum(spec: ExpSumSpec, grid: GridSpec) -> ComplexField:
    S = _coefficient_grid(spec, grid)
    return ComplexField(grid, sfft.ifftn(S, norm="forward"))


def partial_sum(spec: ExpSumSpec, partition: DyadicPartition, index: int, grid: GridSpec) -> ComplexField:
    keep = partition.label(spec.n, spec.N) == index
    return eval_exp_sum(spec.restrict(keep), grid)


def eval_exp_sum_at(spec: ExpSumSpec, points, mode=REAL):
    """Direct evaluation at arbitrary points with compensated summation.

    Integer points are handled with exact integer phase reduction, so for
    instance a_n = 1 at x = (jN, 0) gives exactly N.  In exact mode the
    points are elements of Z_{N^2}^2.
    """
    pts = np.atleast_2d(np.asarray(points))
    N = spec.N
    M = N * N
    integral = np.issubdtype(pts.dtype, np.integer) or np.all(pts == np.round(pts))
    acc = np.zeros(pts.shape[0], dtype=np.complex128)
    comp = np.zeros_like(acc)
    if integral:
        x = np.round(pts).astype(np.int64)
        x1 = x[:, 0] % (N if mode == REAL else M)
        x2 = x[:, 1] % M
    for n, a in zip(range(1, N + 1), spec.coeffs):
        if integral:
            if mode == REAL:
                num = (n * N * x1 + n * n * x2) % M
            else:
                num = (n * x1 + n * n * x2) % M
            phase = 2 * np.pi * num / M
        else:
            if mode != REAL:
                raise ValueError("exact mode points must be integers")
            t = np.fmod(pts[:, 0] * (n / N), 1.0) + np.fmod(pts[:, 1] * (n * n / M), 1.0)
            phase = 2 * np.pi * t
        term = a * (np.cos(phase) + 1j * np.sin(phase))
        y = term - comp
        t_ = acc + y
        comp = (t_ - acc) - y
        acc = t_
    return acc


def quadrature_grid(N, oversample=4, reduced=True) -> GridSpec:
    """Grid integrating |f|^p exactly for even p < 2*oversample.

    ``reduced`` samples one x_1-period [0, N) x [0, N^2) instead of all of Q.
    """
    if reduced:
        return GridSpec((N, N * N), (oversample * N, oversample * N * N))
    return GridSpec.square(N * N, oversample * N * N)


def _power_mean_streamed(spec, p, oversample, chunk_points=1 << 22):
    """Mean of |f|^p over the reduced quadrature grid without storing it."""
    N = spec.N
    n1 = oversample * N
    n2 = oversample * N * N
    n = spec.n
    sq = (n * n) % n2
    bins = n % n1
    rows = max(1, chunk_points // n1)
    totals = []
    half = p / 2.0
    even = float(p).is_integer() and int(p) % 2 == 0
    for start in range(0, n2, rows):
        i2 = np.arange(start, min(n2, start + rows), dtype=np.int64)
        phase = (np.outer(i2, sq) % n2) * (2 * np.pi / n2)
        B = np.zeros((i2.size, n1), dtype=np.complex128)
        np.add.at(B, (slice(None), bins), spec.coeffs * np.exp(1j * phase))
        f = sfft.ifft(B, axis=1, norm="forward")
        inten = f.real**2 + f.imag**2
        vals = inten ** int(half) if even else inten**half
        totals.append(float(vals.sum()))
    return math.fsum(totals) / (n1 * n2)


def lp_power_mean(spec: ExpSumSpec, p, grid: GridSpec | None = None, oversample=4):
    """(1/|Q|) integral over Q of |f|^p."""
    if grid is None:
        return _power_mean_streamed(spec, p, oversample)
    f = eval_exp_sum(spec, grid)
    inten = f.intensity()
    return float(np.mean(inten ** (p / 2.0)))


def _single_character(spec):
    return np.count_nonzero(spec.coeffs) == 1


def strichartz_ratio(spec: ExpSumSpec, p, grid: GridSpec | None = None, oversample=4):
    """D = ||f||_{L^p_avg(Q)} / ||a||_2."""
    if p < 2:
        raise ValueError("p must be >= 2")
    norm = spec.l2_norm()
    if norm == 0:
        raise ValueError("zero coefficient vector")
    if _single_character(spec):
        return 1.0  # a single character has constant modulus
    return lp_power_mean(spec, p, grid, oversample) ** (1.0 / p) / norm


def decoupling_ratio(spec: ExpSumSpec, delta, p, grid: GridSpec | None = None, oversample=4, mode=REAL):
    """||sum_I f_I||_p / (sum_I ||f_I||_p^2)^(1/2) over the partition at scale delta."""
    if spec.l2_norm() == 0:
        raise ValueError("zero coefficient vector")
    part = DyadicPartition(delta, mode)
    num = lp_power_mean(spec, p, grid, oversample) ** (1.0 / p)
    labels = part.label(spec.n, spec.N)
    parts = []
    for k in range(part.count):
        sub = spec.restrict(labels == k)
        if not np.any(sub.coeffs):
            continue
        parts.append(lp_power_mean(sub, p, grid, oversample) ** (2.0 / p))
    return num / math.sqrt(math.fsum(parts))


@dataclass(frozen=True)
class SpecFile:
    spec: ExpSumSpec
    oversampling: int
    mode: str
    p: int


def load_spec_file(path) -> SpecFile:
    """Read the key-value spec format::

        # comment
        N = 64
        coefficients = random-phase(3)     # all-ones | random-phase(seed) | file(path)
        oversampling = 4
        mode = real                        # real | exact
        p = 2                              # prime for exact mode
    """
    path = Path(path)
    values = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#")[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            key, sep, val = line.partition(":")
        if not sep:
            raise ValueError(f"malformed spec line: {raw!r}")
        values[key.strip().lower()] = val.strip()
    if "n" not in values:
        raise ValueError("spec file needs N")
    N = int(values["n"])
    spec = ExpSumSpec.from_source(N, values.get("coefficients", "all-ones"), base_dir=path.parent)
    mode = values.get("mode", REAL)
    if mode not in (REAL, EXACT):
        raise ValueError(f"unknown mode {mode!r}")
    return SpecFile(spec, int(values.get("oversampling", 4)), mode, int(values.get("p", 2)))


def write_ratio_csv(rows, path):
    """Rows are mappings with keys N, p, delta, ratio."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "p", "delta", "ratio"])
        for r in rows:
            w.writerow([r["N"], r["p"], repr(float(r["delta"])), repr(float(r["ratio"]))])
