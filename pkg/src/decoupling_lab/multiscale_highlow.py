"""Multiscale high-low analysis of exponential sums on Q.

The fields live on a "pipeline grid":

* exact mode: Z_{N^2} x Z_{N^2}, frequencies (n, n^2) mod N^2, intervals are
  residue classes of n;
* real mode: the lattice Z_N x Z_{N^2} with unit spacing, one x_1-period of Q,
  intervals are contiguous bands of xi_1 = k_1 / N (mod 1).

Pruned sums f_j, square functions g_j, the classification into Omega_j and the
low set L, the level sets U_alpha, and checks of the low lemma, high lemma and
its fine-scale variant are all implemented on these grids.  The lemma checks
additionally accept a sparse spectrum, in which case the Fourier transform of
each |f_I|^2 is the exact autocorrelation of the coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .core_fields import (
    EXACT,
    REAL,
    ComplexField,
    GridSpec,
    RegionMask,
    _ilog,
    _is_power_of,
    lowpass_convolve,
    raised_cosine_step,
)
from .exp_sum import DyadicPartition, ExpSumSpec, _coefficient_grid
from .wavepacket import Cap, _window_1d, exact_slab_mask, tube_labels


# ---------------------------------------------------------------- ladder


@dataclass(frozen=True)
class ScaleLadder:
    N: int
    c: float
    deltas: tuple
    mode: str = REAL
    p: int = 2

    @property
    def J(self):
        return len(self.deltas) - 1

    @property
    def log_N(self):
        return math.log(self.N)

    def w(self, j):
        return 1.0 / (self.N**2 * self.deltas[j])

    def partition(self, j):
        return DyadicPartition(self.deltas[j], self.mode, self.p)


def build_ladder(N, c=1.0, mode=REAL, p=2) -> ScaleLadder:
    """delta_j = (log N)^(-c j) rounded down to a power of 1/p (1/2 in real mode).

    The last scale is clamped to 1/N; repeated values after rounding are
    dropped so the ladder strictly descends.
    """
    if N < 16:
        raise ValueError("the ladder needs N >= 16 so that log log N > 0")
    if not c > 0:
        raise ValueError("c must be positive")
    base = p if mode == EXACT else 2
    if not _is_power_of(N, base):
        raise ValueError(f"N must be a power of {base}")
    top = _ilog(N, base)
    L = math.log(N)
    exps = [0]
    j = 1
    while exps[-1] < top:
        e = math.ceil(c * j * math.log(L, base) - 1e-12)
        e = min(e, top)
        if e > exps[-1]:
            exps.append(e)
        j += 1
    return ScaleLadder(N, float(c), tuple(float(base) ** -e for e in exps), mode, p)


@dataclass(frozen=True)
class PruningParams:
    epsilon: float
    tilde_c: float
    alpha: float
    g_J_sup: float
    log_N: float

    @property
    def lam(self):
        return self.log_N**self.tilde_c * self.g_J_sup / self.alpha

    @classmethod
    def for_ladder(cls, ladder: ScaleLadder, alpha, g_J_sup, tilde_c=None, epsilon=None):
        tc = 2 * ladder.c + 2 if tilde_c is None else tilde_c
        eps = 1.0 / ladder.log_N if epsilon is None else epsilon
        return cls(eps, tc, float(alpha), float(g_J_sup), ladder.log_N)


def pipeline_grid(N, mode=REAL, p=2) -> GridSpec:
    if mode == EXACT:
        return GridSpec.exact(N * N, 2, p)
    return GridSpec((N, N * N), (N, N * N))


def _grid_N(grid):
    if grid.mode == EXACT:
        return math.isqrt(grid.shape[0])
    return round(grid.extent[0])


# ---------------------------------------------------------------- bands


def _spectrum(field_or_spectrum):
    if isinstance(field_or_spectrum, ComplexField):
        F = field_or_spectrum
        return F.grid, sfft.fftn(F.samples, norm="forward")
    return field_or_spectrum


def _bands(grid, partition):
    """Rows (xi_1 bins, demodulated order) of each interval and the coarse length."""
    M1 = grid.shape[0]
    if grid.mode == EXACT:
        q = partition.count
        if M1 % q:
            raise ValueError("scale finer than the grid")
        n1 = M1 // q
        return [a + q * np.arange(n1) for a in range(q)], n1
    N = round(grid.extent[0])
    if M1 % N:
        raise ValueError("x_1 samples must be a multiple of N")
    count = partition.count
    if N % count:
        raise ValueError("N must be divisible by 1/delta")
    B = N // count
    n1 = min(2 * B, M1)
    return [(k * B + 1 + np.arange(B)) % M1 for k in range(count)], n1


def _coarse_intensity(c, rows, n1):
    sub = np.zeros((n1, c.shape[1]), dtype=np.complex128)
    sub[: rows.size] = c[rows]
    G = sfft.ifft2(sub, norm="forward")
    return G.real**2 + G.imag**2


def _expand(coarse, grid):
    M1 = grid.shape[0]
    n1 = coarse.shape[0]
    if n1 == M1:
        return coarse
    if grid.mode == EXACT:
        return np.tile(coarse, (M1 // n1, 1))
    half = n1 // 2
    spec = sfft.fft(coarse, axis=0)
    out = np.zeros((M1, coarse.shape[1]), dtype=np.complex128)
    out[:half] = spec[:half]
    if half > 1:
        out[M1 - half + 1 :] = spec[n1 - half + 1 :]
    res = sfft.ifft(out, axis=0).real * (M1 / n1)
    return np.maximum(res, 0.0)


def interval_intensities(source, delta):
    """Yield (interval index, |f_I|^2 on the full grid) for the partition at delta."""
    grid, c = _spectrum(source)
    part = DyadicPartition(delta, grid.mode, grid.p)
    rows, n1 = _bands(grid, part)
    for k, r in enumerate(rows):
        yield k, _expand(_coarse_intensity(c, r, n1), grid)


def square_function(source, delta) -> ComplexField:
    """g(x) = sum_I |f_I(x)|^2 over the partition at scale delta."""
    grid, c = _spectrum(source)
    part = DyadicPartition(delta, grid.mode, grid.p)
    rows, n1 = _bands(grid, part)
    acc = np.zeros((n1, grid.shape[1]))
    for r in rows:
        acc += _coarse_intensity(c, r, n1)
    return ComplexField(grid, _expand(acc, grid))


# ---------------------------------------------------------------- pruning


def _pipeline_caps(grid, delta):
    count = round(1.0 / delta)
    return [Cap((a,), 1.0 / count, grid.mode, grid.p) for a in range(count)]


def _cap_mult(grid, cap):
    if grid.mode == EXACT:
        return exact_slab_mask(grid, cap)
    N = round(grid.extent[0])
    xi = sfft.fftfreq(grid.shape[0], d=grid.spacing[0])
    w = _window_1d(xi % 1.0 if N == grid.shape[0] else xi, cap.index[0], cap.count, True, "partition")
    return w[:, None]


def cap_sup_bounds(grid, c, delta):
    """Upper bounds sum |c| eta_theta >= sup |P_theta F| for every cap."""
    caps = _pipeline_caps(grid, delta)
    A = np.abs(c)
    if grid.mode == EXACT:
        M = grid.shape[0]
        q1 = caps[0].p ** caps[0].level
        q2 = q1 * q1
        S = A.reshape(M, M // q2, q2).sum(axis=1)
        k1 = np.arange(M)
        out = []
        for cap in caps:
            a = cap.index[0]
            rows = k1[a::q1]
            out.append(float(S[rows, (2 * a * rows - a * a) % q2].sum()))
        return caps, np.array(out)
    row = A.sum(axis=1)
    return caps, np.array([float((_cap_mult(grid, cap)[:, 0] * row).sum()) for cap in caps])


@dataclass(frozen=True)
class PruneResult:
    grid: GridSpec
    spectrum: np.ndarray
    removed_mass: float
    removed_packets: int
    expanded_caps: int
    max_surviving_sup: float
    lam: float

    @property
    def field(self) -> ComplexField:
        return ComplexField(self.grid, sfft.ifftn(self.spectrum, norm="forward"))


def prune(source, delta, lam, exact_sups=False) -> PruneResult:
    """Remove the wave packets at scale delta whose sup norm exceeds lam.

    A cap whose l^1 spectral bound is already <= lam cannot contain an
    offending packet and is left untouched, unless ``exact_sups`` asks for the
    packet sup norms of every cap.
    """
    grid, c = _spectrum(source)
    caps, bounds = cap_sup_bounds(grid, c, delta)
    drop_total = None
    removed_mass = 0.0
    removed = 0
    expanded = 0
    surv = 0.0
    for cap, b in zip(caps, bounds):
        if b <= lam and not exact_sups:
            surv = max(surv, b)
            continue
        if b == 0:
            continue
        expanded += 1
        P = sfft.ifftn(c * _cap_mult(grid, cap), norm="forward")
        lab = tube_labels(grid, cap).ravel()
        inten = (P.real**2 + P.imag**2).ravel()
        uniq, inv = np.unique(lab, return_inverse=True)
        sup = np.sqrt(np.asarray(ndimage.maximum(inten, inv, np.arange(uniq.size))))
        bad = sup > lam
        if np.any(~bad):
            surv = max(surv, float(sup[~bad].max()))
        if np.any(bad):
            part = np.where(bad[inv].reshape(grid.shape), P, 0)
            drop_total = part if drop_total is None else drop_total + part
            removed += int(bad.sum())
            removed_mass += float(np.bincount(inv, inten)[bad].sum()) * grid.cell_volume
    if drop_total is not None:
        c = c - sfft.fftn(drop_total, norm="forward")
    return PruneResult(grid, c, removed_mass, removed, expanded, surv, float(lam))


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class SquareFunctionStack:
    ladder: ScaleLadder
    g: tuple
    provenance: tuple

    def level(self, j):
        return self.g[j]


@dataclass(frozen=True)
class OmegaDecomposition:
    omegas: dict
    low_set: RegionMask

    def masks(self):
        return [self.omegas[j] for j in sorted(self.omegas, reverse=True)] + [self.low_set]

    def is_partition(self):
        total = np.zeros(self.low_set.grid.shape, dtype=np.int8)
        for m in self.masks():
            total += m.membership
        return bool(np.all(total == 1))


def classify(stack: SquareFunctionStack, epsilon) -> OmegaDecomposition:
    g = [np.asarray(x.samples) for x in stack.g]
    J = len(g) - 1
    grid = stack.g[0].grid
    taken = np.zeros(grid.shape, dtype=bool)
    omegas = {}
    for j in range(J - 1, -1, -1):
        with np.errstate(invalid="ignore"):
            cond = (g[j] >= (1.0 + epsilon) * g[j + 1]) & ~taken
        omegas[j] = RegionMask(grid, cond)
        taken |= cond
    return OmegaDecomposition(omegas, RegionMask(grid, ~taken))


def low_chain_holds(stack: SquareFunctionStack, omega: OmegaDecomposition, epsilon, rtol=1e-12):
    """Pointwise g_0 <= (1+eps)^J g_J on the low set."""
    J = len(stack.g) - 1
    L = omega.low_set.membership
    g0 = np.asarray(stack.g[0].samples)[L]
    gJ = np.asarray(stack.g[J].samples)[L]
    return bool(np.all(g0 <= (1.0 + epsilon) ** J * gJ * (1 + rtol) + 1e-300))


# ---------------------------------------------------------------- level sets


@dataclass(frozen=True)
class BilinearProfile:
    grid: GridSpec
    bilinear: np.ndarray
    l6: np.ndarray


def bilinear_profile(source, delta1) -> BilinearProfile:
    """max_{I != I'} |f_I f_I'|^(1/2) and (sum_I |f_I|^6)^(1/6) over P_{delta1}."""
    grid, c = _spectrum(source)
    top1 = np.zeros(grid.shape)
    top2 = np.zeros(grid.shape)
    s6 = np.zeros(grid.shape)
    for _, v in interval_intensities((grid, c), delta1):
        hi = np.maximum(top1, v)
        top2 = np.maximum(top2, np.minimum(top1, v))
        top1 = hi
        s6 += v**3
    return BilinearProfile(grid, np.sqrt(np.sqrt(top1 * top2)), s6 ** (1.0 / 6.0))


def level_set(source, alpha, delta1=None, log_N=None, c_prime=2.0) -> RegionMask:
    """U_alpha: bilinear size in [alpha, 2 alpha) and l^6 sum <= (log N)^c' alpha."""
    prof = source if isinstance(source, BilinearProfile) else bilinear_profile(source, delta1)
    if log_N is None:
        log_N = math.log(max(_grid_N(prof.grid), 2))
    lf = max(log_N, 1.0) ** c_prime
    b = prof.bilinear
    mask = (b >= alpha) & (b < 2 * alpha) & (prof.l6 <= lf * alpha)
    return RegionMask(prof.grid, mask)


# ---------------------------------------------------------------- lemmas


def lemma_grid(N, mode=REAL, p=2):
    """Grid on which |f|^2 and its filtered versions are represented faithfully."""
    if mode == EXACT:
        return GridSpec.exact(N * N, 2, p)
    return GridSpec((N, N * N), (2 * N, 2 * N * N))


def _as_field(source, mode):
    if isinstance(source, ExpSumSpec):
        grid = lemma_grid(source.N, mode)
        return ComplexField(grid, sfft.ifftn(_coefficient_grid(source, grid), norm="forward"))
    return source


def verify_low_lemma(source, r, mode=REAL):
    """max_x | |sum_I f_I|^2 * lowpass_r - sum_I |f_I|^2 * lowpass_r |, I in P_r."""
    F = _as_field(source, mode)
    lhs = lowpass_convolve(ComplexField(F.grid, F.intensity()), r)
    rhs = lowpass_convolve(square_function(F, r), r)
    return float(np.max(np.abs(np.asarray(lhs.samples) - np.asarray(rhs.samples))))


@dataclass(frozen=True)
class SparseSpectrum:
    """Finitely many frequencies xi = (k1, k2) / N^2 with coefficients.

    Exact mode reads (k1, k2) as elements of Z_{N^2}^2 and xi_1's interval is
    the class of k1 mod 1/delta; real mode reads xi = (k1, k2)/N^2 literally.
    """

    N: int
    k1: np.ndarray
    k2: np.ndarray
    coeffs: np.ndarray
    mode: str = REAL
    p: int = 2

    @classmethod
    def from_exp_sum(cls, spec: ExpSumSpec, mode=REAL, p=2):
        n = spec.n
        N = spec.N
        if mode == EXACT:
            M = N * N
            return cls(N, n % M, (n * n) % M, spec.coeffs, mode, p)
        return cls(N, n * N, n * n, spec.coeffs, mode, p)

    def labels(self, delta):
        count = round(1.0 / delta)
        if self.mode == EXACT:
            return self.k1 % count
        return (self.k1 * count - 1) // (self.N * self.N)

    def to_field(self, grid=None):
        N = self.N
        if grid is None:
            grid = lemma_grid(N, self.mode, self.p)
        S = np.zeros(grid.shape, dtype=np.complex128)
        if self.mode == EXACT:
            np.add.at(S, (self.k1 % grid.shape[0], self.k2 % grid.shape[1]), self.coeffs)
        else:
            r1 = grid.extent[0] / (N * N)
            r2 = grid.extent[1] / (N * N)
            i1 = np.round(self.k1 * r1).astype(np.int64)
            i2 = np.round(self.k2 * r2).astype(np.int64)
            if not (np.allclose(i1, self.k1 * r1) and np.allclose(i2, self.k2 * r2)):
                raise ValueError("frequencies do not sit on this grid's lattice")
            np.add.at(S, (i1 % grid.shape[0], i2 % grid.shape[1]), self.coeffs)
        return ComplexField(grid, sfft.ifftn(S, norm="forward"))


def random_cap_field(N, seed, per_cap=3, p=2) -> SparseSpectrum:
    """Exact-mode field with random frequencies inside the caps tau_theta at scale 1/N."""
    rng = np.random.default_rng(seed)
    M = N * N
    a = np.repeat(np.arange(N, dtype=np.int64), per_cap)
    k1 = a + N * rng.integers(0, N, a.size)
    k2 = (2 * a * k1 - a * a) % M
    coeffs = np.exp(2j * np.pi * rng.random(a.size)) * rng.uniform(0.5, 1.5, a.size)
    return SparseSpectrum(N, k1 % M, k2, coeffs, EXACT, p)


def _autocorrelation(sp: SparseSpectrum, sel):
    """Keys and values of the Fourier transform of |sum_{sel} c e(xi.x)|^2."""
    k1, k2, c = sp.k1[sel], sp.k2[sel], sp.coeffs[sel]
    d1 = k1[:, None] - k1[None, :]
    d2 = k2[:, None] - k2[None, :]
    w = (c[:, None] * np.conj(c)[None, :]).ravel()
    d1, d2 = d1.ravel(), d2.ravel()
    if sp.mode == EXACT:
        M = sp.N * sp.N
        d1 %= M
        d2 %= M
    return d1, d2, w


def _high_symbol(sp: SparseSpectrum, d1, d2, cutoff):
    """1 - low-pass symbol at the given cutoff, evaluated at exact frequencies."""
    if sp.mode == EXACT:
        e = max(0, math.ceil(math.log(1.0 / cutoff, sp.p) - 1e-9)) if cutoff < 1 else 0
        q = sp.p**e
        low = (d1 % q == 0) & (d2 % q == 0)
        return (~low).astype(float)
    M = float(sp.N * sp.N)
    low = raised_cosine_step(np.abs(d1) / M / cutoff) * raised_cosine_step(np.abs(d2) / M / cutoff)
    return 1.0 - low


def _key(sp, d1, d2):
    span = 4 * sp.N * sp.N + 1
    return (d1 + 2 * sp.N * sp.N) * span + (d2 + 2 * sp.N * sp.N)


def _block_spectra(sp: SparseSpectrum, groups, cutoff):
    """For each group (list of index arrays), the high-passed spectrum of sum |f_I|^2."""
    out = []
    for members in groups:
        keys, vals = [], []
        for sel in members:
            if sel.size == 0:
                continue
            d1, d2, w = _autocorrelation(sp, sel)
            keys.append(_key(sp, d1, d2))
            vals.append(w * _high_symbol(sp, d1, d2, cutoff))
        if keys:
            out.append((np.concatenate(keys), np.concatenate(vals)))
    return out


def _norms_from_blocks(blocks):
    """(sum_xi |sum_blocks h(xi)|^2, sum_blocks sum_xi |h(xi)|^2)."""
    if not blocks:
        return 0.0, 0.0
    all_keys = np.concatenate([k for k, _ in blocks])
    uniq, inv = np.unique(all_keys, return_inverse=True)
    total = np.zeros(uniq.size, dtype=np.complex128)
    per = 0.0
    start = 0
    for k, v in blocks:
        idx = inv[start : start + k.size]
        start += k.size
        h = np.bincount(idx, v.real, uniq.size) + 1j * np.bincount(idx, v.imag, uniq.size)
        total += h
        per += float(np.sum(h.real**2 + h.imag**2))
    return float(np.sum(total.real**2 + total.imag**2)), per


def _as_sparse(source, mode):
    if isinstance(source, ExpSumSpec):
        return SparseSpectrum.from_exp_sum(source, mode)
    return source


def verify_high_lemma(source, delta_prev, delta, mode=REAL):
    """Both sides of
        avg |sum_I |f_I|^2 * high_delta|^2 <= (delta_prev / delta) sum_I avg ||f_I|^2 * high_delta|^2,
    I in P_{delta_prev}, with the Fourier transforms taken exactly.
    Returns (lhs, rhs, holds)."""
    if not delta_prev > delta:
        raise ValueError("need delta_prev > delta")
    if isinstance(source, ComplexField):
        return _verify_high_lemma_grid(source, delta_prev, delta)
    sp = _as_sparse(source, mode)
    lab = sp.labels(delta_prev)
    idx = np.arange(lab.size)
    groups = [[idx[lab == k]] for k in range(round(1 / delta_prev))]
    lhs, per = _norms_from_blocks(_block_spectra(sp, groups, delta))
    rhs = (delta_prev / delta) * per
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-9))


def _verify_high_lemma_grid(F: ComplexField, delta_prev, delta):
    grid = F.grid
    total = None
    per = 0.0
    for _, v in interval_intensities(F, delta_prev):
        h = np.asarray(lowpass_convolve(ComplexField(grid, v), delta).samples)
        h = v - h
        per += float(np.mean(h * h))
        total = h if total is None else total + h
    lhs = float(np.mean(total * total)) if total is not None else 0.0
    rhs = (delta_prev / delta) * per
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-9))


def verify_high_lemma_variant(source, w, mode=EXACT, rtol=1e-9):
    """Both sides of the fine-scale identity
        avg |sum_{I in P_{1/N}} |f_I|^2 * high_w|^2
          = sum_{B in P_{delta}} avg |sum_{I subset B} |f_I|^2 * high_w|^2,  delta = 1 / (N^2 w).
    Returns (lhs, rhs, holds) with holds meaning equality to ``rtol``."""
    sp = _as_sparse(source, mode)
    N = sp.N
    delta = 1.0 / (N * N * w)
    fine = sp.labels(1.0 / N)
    coarse = sp.labels(delta)
    idx = np.arange(fine.size)
    groups = []
    for b in range(round(1 / delta)):
        members = [idx[(coarse == b) & (fine == k)] for k in np.unique(fine[coarse == b])]
        groups.append(members)
    lhs, rhs = _norms_from_blocks(_block_spectra(sp, groups, w))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return lhs, rhs, bool(abs(lhs - rhs) <= rtol * scale)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class PipelineRow:
    alpha: float
    region_id: str
    points: int
    measured_mass: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class PruneStat:
    alpha: float
    level: int
    lam: float
    expanded_caps: int
    removed_packets: int
    removed_mass: float
    max_surviving_sup: float
    passed: bool


@dataclass(frozen=True)
class ChainRow:
    alpha: float
    low_l6: float
    chain_bound: float
    pointwise: bool
    passed: bool


@dataclass(frozen=True)
class PipelineReport:
    N: int
    mode: str
    deltas: tuple
    c: float
    tilde_c: float
    c_prime: float
    bound_c: float
    epsilon: float
    a_norm: float
    f_sup: float
    g_J_sup: float
    rows: tuple
    chain: tuple
    pruning: tuple
    partition_ok: bool
    extras: dict = field(default_factory=dict)

    @property
    def J(self):
        return len(self.deltas) - 1

    def all_pass(self):
        return (
            self.partition_ok
            and all(r.passed for r in self.rows)
            and all(r.passed for r in self.chain)
            and all(r.passed for r in self.pruning)
        )


def _region_masks(omega: OmegaDecomposition):
    out = [(f"omega_{j}", omega.omegas[j].membership) for j in sorted(omega.omegas, reverse=True)]
    out.append(("low", omega.low_set.membership))
    return out


def _run_chain(grid, c, ladder, lam):
    g = [None] * (ladder.J + 1)
    prov = [None] * (ladder.J + 1)
    stats = []
    cur = c
    for j in range(ladder.J, -1, -1):
        g[j] = square_function((grid, cur), ladder.deltas[j])
        prov[j] = "f" if j == ladder.J else f"f_{j + 1}"
        if j >= 1:
            res = prune((grid, cur), ladder.deltas[j], lam)
            stats.append((j, res))
            cur = res.spectrum
    return SquareFunctionStack(ladder, tuple(g), tuple(prov)), stats


def highlow_pipeline(
    spec: ExpSumSpec,
    ladder: ScaleLadder | None = None,
    c=1.0,
    tilde_c=None,
    c_prime=None,
    bound_c=3.0,
    mode=REAL,
    p=2,
    alphas=None,
) -> PipelineReport:
    """Run ladder -> prune/square/classify -> level-set masses for every dyadic alpha."""
    N = spec.N
    a_norm = spec.l2_norm()
    logf = max(math.log(N), 1.0) if N > 1 else 1.0
    bound = (logf**bound_c * a_norm) ** 6
    if ladder is None and N < 16:
        return _trivial_report(spec, mode, c, bound_c, bound)
    if ladder is None:
        ladder = build_ladder(N, c, mode, p)
    c = ladder.c
    tc = 2 * c + 2 if tilde_c is None else tilde_c
    cp = c + 1 if c_prime is None else c_prime
    eps = 1.0 / ladder.log_N
    grid = pipeline_grid(N, ladder.mode, ladder.p)
    coeff = _coefficient_grid(spec, grid)
    F = sfft.ifftn(coeff, norm="forward")
    f_sup = float(np.sqrt((F.real**2 + F.imag**2).max()))
    del F
    delta1 = ladder.deltas[1] if ladder.J >= 1 else 1.0
    profile = bilinear_profile((grid, coeff), delta1)
    g_J = square_function((grid, coeff), ladder.deltas[-1])
    g_J_sup = float(np.max(g_J.samples))
    if alphas is None:
        top = math.ceil(math.log2(N))
        alphas = [f_sup * 2.0**-i for i in range(top + 1)]

    # the unpruned chain is shared by every alpha whose threshold exceeds all packet bounds
    unpruned_bounds = [float(cap_sup_bounds(grid, coeff, ladder.deltas[j])[1].max()) for j in range(1, ladder.J + 1)]
    cache = {}
    rows, chain, pstats = [], [], []
    partition_ok = True
    gJ3 = float(np.mean(np.asarray(g_J.samples) ** 3))
    for alpha in alphas:
        params = PruningParams(eps, tc, alpha, g_J_sup, ladder.log_N)
        lam = params.lam
        if all(b <= lam for b in unpruned_bounds):
            if "unpruned" not in cache:
                cache["unpruned"] = _run_chain(grid, coeff, ladder, math.inf)
            stack, stats = cache["unpruned"]
            stats = [(j, PruneResult(grid, coeff, 0.0, 0, 0, unpruned_bounds[j - 1], lam)) for j, _ in stats]
        else:
            stack, stats = _run_chain(grid, coeff, ladder, lam)
        omega = classify(stack, eps)
        partition_ok &= omega.is_partition()
        U = level_set(profile, alpha, log_N=ladder.log_N, c_prime=cp).membership
        for name, m in _region_masks(omega):
            cnt = int(np.count_nonzero(U & m))
            mass = alpha**6 * cnt / grid.size
            rows.append(PipelineRow(alpha, name, cnt, mass, bound, bool(mass <= bound)))
        L = omega.low_set.membership
        g0 = np.asarray(stack.g[0].samples)
        low_l6 = float(np.sum(g0[L] ** 3) / grid.size) ** (1 / 6)
        chain_bound = (1 + eps) ** (ladder.J / 2) * gJ3 ** (1 / 6)
        pw = low_chain_holds(stack, omega, eps)
        chain.append(ChainRow(alpha, low_l6, chain_bound, pw, bool(pw and low_l6 <= chain_bound * (1 + 1e-12))))
        for j, res in stats:
            pstats.append(
                PruneStat(
                    alpha,
                    j,
                    lam,
                    res.expanded_caps,
                    res.removed_packets,
                    res.removed_mass,
                    res.max_surviving_sup,
                    bool(res.max_surviving_sup <= lam),
                )
            )
    return PipelineReport(
        N,
        ladder.mode,
        ladder.deltas,
        c,
        tc,
        cp,
        bound_c,
        eps,
        a_norm,
        f_sup,
        g_J_sup,
        tuple(rows),
        tuple(chain),
        tuple(pstats),
        bool(partition_ok),
    )


def _trivial_report(spec, mode, c, bound_c, bound):
    """N < 16: one interval, no pair of distinct intervals, so every U_alpha is empty."""
    a_norm = spec.l2_norm()
    f_sup = float(np.sum(np.abs(spec.coeffs)))
    rows = (PipelineRow(f_sup, "low", 0, 0.0, bound, True),)
    return PipelineReport(
        spec.N, mode, (1.0,), c, 2 * c + 2, c + 1, bound_c, 1.0, a_norm, f_sup, a_norm**2, rows, (), (), True
    )
