"""Refined Strichartz and refined decoupling experiments.

Initial data live on the torus [0, L)^d as sparse spectra f = sum_k c_k e(x.k/L)
and evolve by E f(x, t) = sum_k c_k e(x.xi_k + t|xi_k|^2).  A packet at
frequency xi moves along x = x_0 - 2 xi t.  Spacetime is [0, L)^d x [0, R],
cut into cubes of side s = R^(1/2) centred at the lattice points s Z^d and
grouped into horizontal slabs [k s, (k+1) s).

Cube norms are computed slab by slab with one inverse FFT per time sample, so
nothing larger than one slab is held in memory.  Norms over the whole window
use the Galilean identity |E f(x, t)| = |E g(x + 2ct, t)|, where g is f
shifted down in frequency by c, which lets narrow-band data be sampled on a
coarse grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .wavepacket import Cap, _window_1d, tube_of


def lp_exponent(d):
    return 2.0 * (d + 2) / d


def _pow2_at_least(x):
    return 1 << max(0, math.ceil(math.log2(max(x, 1.0)) - 1e-12))


def cube_side(R):
    s = math.isqrt(int(R))
    if s * s != int(R) or s & (s - 1):
        raise ValueError("R must be an even power of 2")
    return s


def default_K(R):
    """R^(1/4) rounded down to a power of 2."""
    s = cube_side(R)
    return 1 << (s.bit_length() - 1) // 2


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class SparseData:
    """f(x) = sum_j coeffs[j] e(x . k[j] / L) on [0, L)^d; k has shape (n, d)."""

    L: int
    k: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def build(cls, L, k, coeffs):
        k = np.asarray(k, dtype=np.int64)
        if k.ndim == 1:
            k = k[:, None]
        coeffs = np.asarray(coeffs, dtype=np.complex128).ravel()
        uniq, inv = np.unique(k, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        c = np.bincount(inv, coeffs.real, len(uniq)) + 1j * np.bincount(inv, coeffs.imag, len(uniq))
        keep = c != 0
        return cls(int(L), uniq[keep], c[keep])

    @property
    def d(self):
        return self.k.shape[1]

    @property
    def xi(self):
        return self.k / self.L

    def l2_norm(self):
        return math.sqrt(self.L**self.d * float(np.sum(np.abs(self.coeffs) ** 2)))

    def __add__(self, other):
        if other.L != self.L:
            raise ValueError("different tori")
        return SparseData.build(self.L, np.vstack([self.k, other.k]), np.concatenate([self.coeffs, other.coeffs]))

    def scaled(self, c):
        return SparseData(self.L, self.k, self.coeffs * c)

    def shifted(self, k0):
        """Same coefficients at frequencies k - k0 (the Galilean partner)."""
        return SparseData(self.L, self.k - np.asarray(k0, dtype=np.int64), self.coeffs)

    def band_center(self):
        return np.round((self.k.min(axis=0) + self.k.max(axis=0)) / 2.0).astype(np.int64)


def packet_coefficients(R, theta, nu, L, d=1):
    """Spectrum of P_theta applied to e(c_theta.(x - nu)) 1_{q_nu}(x), q_nu the cube of side R^(1/2) at nu."""
    s = cube_side(R)
    count = s
    delta = 1.0 / count
    theta = np.atleast_1d(theta)
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    axes = []
    for a in range(d):
        c = (theta[a] + 0.5) * delta
        k = np.arange(math.floor((c - delta) * L), math.ceil((c + delta) * L) + 1)
        xi = k / L
        w = _window_1d(xi, int(theta[a]), count, False, "partition")
        val = np.exp(-2j * np.pi * nu[a] * xi) * s * np.sinc(s * (c - xi)) * w / L
        keep = w > 0
        axes.append((k[keep], val[keep]))
    ks = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, d)
    vals = np.ones(1, dtype=np.complex128)
    for _, v in axes:
        vals = np.multiply.outer(vals, v).ravel()
    return ks, vals


@dataclass(frozen=True)
class TubeSet:
    """Tubes T_{theta, nu}: theta indexes caps of side R^(-1/2), nu = cols * R^(1/2)."""

    R: int
    L: int
    theta: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray

    @property
    def d(self):
        return self.theta.shape[1]

    @property
    def W(self):
        return self.theta.shape[0]

    @property
    def side(self):
        return cube_side(self.R)

    def nu(self):
        return self.cols * self.side

    def centers(self):
        return (self.theta + 0.5) / self.side

    def tube(self, j):
        cap = Cap(tuple(int(i) for i in self.theta[j]), 1.0 / self.side)
        return tube_of(cap, self.nu()[j], self.R, period=(self.L,) * self.d)

    def data(self) -> SparseData:
        ks, vals = [], []
        for j in range(self.W):
            k, v = packet_coefficients(self.R, self.theta[j], self.nu()[j], self.L, self.d)
            ks.append(k)
            vals.append(v * self.coeffs[j])
        return SparseData.build(self.L, np.vstack(ks), np.concatenate(vals))

    def subset(self, keep):
        keep = np.asarray(keep)
        return TubeSet(self.R, self.L, self.theta[keep], self.cols[keep], self.coeffs[keep])


def _tube_set(R, L, theta, cols, coeffs=None):
    theta = np.atleast_2d(np.asarray(theta, dtype=np.int64))
    cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
    if theta.shape[0] == 1 and theta.shape[1] != cols.shape[1]:
        theta = theta.T
    if cols.shape[0] == 1 and cols.shape[1] != theta.shape[1]:
        cols = cols.T
    W = theta.shape[0]
    c = np.ones(W, dtype=np.complex128) if coeffs is None else np.asarray(coeffs, dtype=np.complex128)
    return TubeSet(int(R), int(L), theta, cols, c)


def single_packet(R, theta=None, col=0, L=None, d=1):
    s = cube_side(R)
    L = 4 * R if L is None else L
    theta = [s // 2] * d if theta is None else np.atleast_1d(theta)
    return _tube_set(R, L, [list(theta)], [[col] * d if np.ndim(col) == 0 else list(col)])


def parallel_example(R, theta=None, L=None, d=1):
    """One packet of a fixed direction at every lattice point of the torus."""
    s = cube_side(R)
    L = 4 * R if L is None else L
    ncols = L // s
    theta = [s // 2] * d if theta is None else list(np.atleast_1d(theta))
    cols = np.stack(np.meshgrid(*[np.arange(ncols)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    return _tube_set(R, L, np.tile(theta, (len(cols), 1)), cols)


def bush_tubes(R, x0=None, L=None, d=1):
    """All directions through the lattice point x0 (default 3R, so the bush stays on the torus)."""
    s = cube_side(R)
    L = 4 * R if L is None else L
    x0 = 3 * R if x0 is None else x0
    if x0 % s:
        raise ValueError("x0 must be a lattice point")
    thetas = np.stack(np.meshgrid(*[np.arange(s)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    return _tube_set(R, L, thetas, np.full(thetas.shape, (x0 // s) % (L // s)))


def bush_data(R, x0=None, L=None, d=1, kind="sharp") -> SparseData:
    """Data focusing at x0: "sharp" has spectrum 1_{[0,1)^d} e(-x0.xi); "packets" sums the bush packets."""
    L = 4 * R if L is None else L
    x0 = 3 * R if x0 is None else x0
    if kind == "packets":
        return bush_tubes(R, x0, L, d).data()
    if kind != "sharp":
        raise ValueError("kind must be 'sharp' or 'packets'")
    k1 = np.arange(L)
    ks = np.stack(np.meshgrid(*[k1] * d, indexing="ij"), axis=-1).reshape(-1, d)
    vals = np.exp(-2j * np.pi * x0 * ks.sum(axis=1) / L) / L**d
    return SparseData(L, ks, vals)


def random_tube_set(R, W, seed, L=None, d=1) -> TubeSet:
    """W distinct tubes drawn uniformly with unit-modulus random coefficients."""
    s = cube_side(R)
    L = 4 * R if L is None else L
    ncols = L // s
    total = s**d * ncols**d
    if not 1 <= W <= total:
        raise ValueError(f"W must lie in [1, {total}]")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(total, size=W, replace=False))
    th, co = np.divmod(pick, ncols**d)
    theta = np.stack(np.unravel_index(th, (s,) * d), axis=-1)
    cols = np.stack(np.unravel_index(co, (ncols,) * d), axis=-1)
    coeffs = np.exp(2j * np.pi * rng.random(W))
    return _tube_set(R, L, theta, cols, coeffs)


# ---------------------------------------------------------------- cubes


@dataclass(frozen=True)
class CubeDecomposition:
    R: int
    L: int
    d: int = 1

    @property
    def side(self):
        return cube_side(self.R)

    @property
    def ncols(self):
        n, r = divmod(self.L, self.side)
        if r:
            raise ValueError("L must be a multiple of R^(1/2)")
        return n

    @property
    def nslabs(self):
        return self.R // self.side

    @property
    def shape(self):
        return (self.nslabs,) + (self.ncols,) * self.d

    @property
    def count(self):
        return int(np.prod(self.shape))

    def slab_of(self, flat_index):
        return np.unravel_index(flat_index, self.shape)[0]


@dataclass(frozen=True)
class CubeNorms:
    decomposition: CubeDecomposition
    p: float
    sums: np.ndarray

    @property
    def norms(self):
        return self.sums ** (1.0 / self.p)

    def lp_norm(self, mask=None):
        s = self.sums if mask is None else self.sums[mask]
        return float(np.sum(s)) ** (1.0 / self.p)


def _spatial_samples(data, p, minimum):
    span = (data.k.max(axis=0) - data.k.min(axis=0) + 1).max() / data.L
    return max(_pow2_at_least(1.25 * (p / 2.0) * span * data.L), minimum)


def _time_step(xi2, p, height):
    spread = float(xi2.max() - xi2.min()) if xi2.size else 0.0
    if spread == 0:
        return 1
    return max(1, math.ceil(height * (p / 2.0) * spread / 0.8))


def _stream(data: SparseData, R, p, ncols, height, nx):
    """Per time block of the given height: integral of |E f|^p over each spatial cell."""
    d = data.d
    L = data.L
    px = nx // ncols
    h = L / nx
    xi2 = np.sum(data.xi**2, axis=1)
    nt = _time_step(xi2, p, height)
    dt = height / nt
    bins = np.ravel_multi_index(tuple((data.k % nx).T), (nx,) * d)
    unique_bins = np.unique(bins).size == bins.size
    nblocks = round(R / height)
    out = np.zeros((nblocks,) + (ncols,) * d)
    spatial = tuple(range(1, d + 1))
    for b in range(nblocks):
        t = b * height + (np.arange(nt) + 0.5) * dt
        ph = np.exp(2j * np.pi * np.multiply.outer(t, xi2)) * data.coeffs
        S = np.zeros((nt, nx**d), dtype=np.complex128)
        if unique_bins:
            S[:, bins] = ph
        else:
            for i in range(nt):
                np.add.at(S[i], bins, ph[i])
        F = sfft.ifftn(S.reshape((nt,) + (nx,) * d), axes=spatial, norm="forward")
        P = (F.real**2 + F.imag**2) ** (p / 2.0)
        P = np.roll(P, px // 2, axis=spatial)
        P = P.reshape((nt,) + sum(((ncols, px),) * d, ()))
        P = P.sum(axis=(0,) + tuple(2 + 2 * a for a in range(d)))
        out[b] = P * h**d * dt
    return out


def cube_power_sums(data: SparseData, R, p=None) -> CubeNorms:
    """integral over each cube of |E f|^p."""
    p = lp_exponent(data.d) if p is None else p
    dec = CubeDecomposition(R, data.L, data.d)
    nx = _spatial_samples(data, p, dec.ncols)
    sums = _stream(data, R, p, dec.ncols, dec.side, nx)
    return CubeNorms(dec, p, sums)


def window_power_sum(data: SparseData, R, p=None):
    """integral of |E f|^p over [0, L)^d x [0, R], via the Galilean shift to the band centre."""
    p = lp_exponent(data.d) if p is None else p
    g = data.shifted(data.band_center())
    nx = _spatial_samples(g, p, 1)
    height = min(float(R), max(1.0, R / 64.0))
    return float(_stream(g, R, p, 1, height, nx).sum())


def evaluate(data: SparseData, times, nx):
    """Samples of E f at the given times on the uniform grid of nx^d points."""
    d = data.d
    bins = np.ravel_multi_index(tuple((data.k % nx).T), (nx,) * d)
    xi2 = np.sum(data.xi**2, axis=1)
    out = np.empty((len(times),) + (nx,) * d, dtype=np.complex128)
    for i, t in enumerate(times):
        S = np.zeros(nx**d, dtype=np.complex128)
        np.add.at(S, bins, data.coeffs * np.exp(2j * np.pi * t * xi2))
        out[i] = sfft.ifftn(S.reshape((nx,) * d), norm="forward")
    return out


def tube_mass_fraction(tubes: TubeSet, j=0, dilation=3.0, nt=64):
    """Share of the L^2 mass of E(packet j) on [0, L) x [0, R] inside the dilated tube."""
    one = tubes.subset([j])
    data = one.data()
    nx = _spatial_samples(data, 2, 1) * 2
    t = (np.arange(nt) + 0.5) * tubes.R / nt
    F = evaluate(data, t, nx)
    x = np.arange(nx) * (tubes.L / nx)
    tube = tubes.tube(j)
    if tubes.d != 1:
        raise NotImplementedError("mass fractions are implemented for d = 1")
    inside = tube.contains(x[None, :, None], t[:, None], dilation)
    I = F.real**2 + F.imag**2
    return float(I[inside].sum() / I.sum())


def strichartz_ratio(data: SparseData, R, p=None):
    """||E f||_{L^p([0,L)^d x [0,R])} / ||f||_2."""
    p = lp_exponent(data.d) if p is None else p
    return window_power_sum(data, R, p) ** (1.0 / p) / data.l2_norm()


# ---------------------------------------------------------------- selection


@dataclass(frozen=True)
class Selection:
    mask: np.ndarray
    sigma: float
    lambda_amp: float
    slabs: tuple

    @property
    def empty(self):
        return not bool(self.mask.any())


def select_comparable_cubes(norms: CubeNorms, band=None, policy="most_cubes") -> Selection:
    """Cubes with L^p norm in [band, 2 band), then slabs within a factor 2 of the median count.

    Without an explicit band, ``policy="most_cubes"`` takes the dyadic band
    holding the most cubes (ties go to the higher band).
    """
    v = norms.norms
    pos = v > 0
    if not pos.any():
        return Selection(np.zeros(v.shape, dtype=bool), 0.0, 0.0, ())
    if band is None:
        if policy != "most_cubes":
            raise ValueError(f"unknown band policy {policy!r}")
        level = np.floor(np.log2(v[pos]) + 1e-12).astype(np.int64)
        lv, cnt = np.unique(level, return_counts=True)
        band = 2.0 ** float(lv[np.flatnonzero(cnt == cnt.max())[-1]])
    mask = pos & (v >= band * (1 - 1e-12)) & (v < 2 * band * (1 - 1e-12))
    counts = mask.reshape(mask.shape[0], -1).sum(axis=1)
    used = counts[counts > 0]
    if used.size == 0:
        return Selection(mask, 0.0, float(band), ())
    med = float(np.median(used))
    keep = (counts > 0) & (counts >= med / 2) & (counts <= 2 * med)
    mask = mask & keep.reshape((-1,) + (1,) * (mask.ndim - 1))
    return Selection(mask, med, float(band), tuple(int(i) for i in np.flatnonzero(keep)))


@dataclass(frozen=True)
class RefinedReport:
    theorem: str
    sigma: float
    lambda_amp: float
    lhs: float
    rhs: float
    ratio: float
    skipped: bool = False
    extra: dict = field(default_factory=dict)


def _ratio(lhs, rhs):
    return lhs / rhs if lhs > 0 and rhs > 0 else 0.0


def _bands_present(norms: CubeNorms):
    v = norms.norms
    v = v[v > 0]
    return [2.0 ** float(e) for e in np.unique(np.floor(np.log2(v) + 1e-12))]


def refined_strichartz_check(data: SparseData, R, band=None, p=None, norms=None, policy="max_ratio") -> RefinedReport:
    """||E f||_{L^p(Y)} against sigma^(-(1/2 - 1/p)) ||f||_2.

    Without an explicit band, ``policy="max_ratio"`` tries every dyadic band
    and keeps the one with the largest ratio, the hardest test of the bound;
    ``policy="most_cubes"`` defers to select_comparable_cubes.
    """
    p = lp_exponent(data.d) if p is None else p
    norms = cube_power_sums(data, R, p) if norms is None else norms
    if band is None and policy == "max_ratio":
        reports = [refined_strichartz_check(data, R, b, p, norms) for b in _bands_present(norms)]
        reports = [r for r in reports if not r.skipped]
        if not reports:
            return RefinedReport("refined_strichartz", 0.0, 0.0, 0.0, 0.0, 0.0, True)
        return max(reports, key=lambda r: r.ratio)
    sel = select_comparable_cubes(norms, band, "most_cubes")
    if sel.empty:
        return RefinedReport("refined_strichartz", 0.0, sel.lambda_amp, 0.0, 0.0, 0.0, True)
    lhs = norms.lp_norm(sel.mask)
    rhs = sel.sigma ** -(0.5 - 1.0 / p) * data.l2_norm()
    extra = {"R": int(R), "cubes": int(sel.mask.sum()), "slabs": len(sel.slabs)}
    return RefinedReport("refined_strichartz", sel.sigma, sel.lambda_amp, lhs, rhs, _ratio(lhs, rhs), False, extra)


def predicted_bush_band(data: SparseData, R, p=None):
    """Cube amplitude ||f||_2 R^(-d/2) R^((d+1)/(2p)) expected at distance ~R from the focus, as the
    lower end of a dyadic band centred on it."""
    d = data.d
    p = lp_exponent(d) if p is None else p
    return data.l2_norm() * R ** (-d / 2) * R ** ((d + 1) / (2 * p)) / math.sqrt(2)


# ---------------------------------------------------------------- incidence


@dataclass(frozen=True)
class IncidenceTable:
    """M(Q) = #{T : Q subset T}; each tube meets exactly one cube per slab."""

    decomposition: CubeDecomposition
    tubes: TubeSet
    tube_cols: np.ndarray
    counts: np.ndarray

    @property
    def W(self):
        return self.tubes.W

    def cubes_per_tube(self):
        return np.full(self.W, self.decomposition.nslabs, dtype=np.int64)

    def double_count_holds(self):
        return int(self.counts.sum()) == int(self.cubes_per_tube().sum())

    def levels(self):
        top = int(self.counts.max()) if self.counts.size else 0
        return [1 << e for e in range(top.bit_length())] if top else []

    def Y(self, M):
        return (self.counts >= M) & (self.counts < 2 * M)

    def Y_masks(self):
        return {M: self.Y(M) for M in self.levels()}


def tube_columns(tubes: TubeSet, decomposition: CubeDecomposition | None = None):
    """Column of each tube in each slab: the cube containing its axis at the slab start."""
    dec = decomposition or CubeDecomposition(tubes.R, tubes.L, tubes.d)
    s = dec.side
    t0 = np.arange(dec.nslabs) * s
    axis = tubes.nu()[:, None, :] - 2.0 * tubes.centers()[:, None, :] * t0[None, :, None]
    return (np.floor((axis + s / 2.0) / s).astype(np.int64)) % dec.ncols


def incidence(tubes: TubeSet) -> IncidenceTable:
    dec = CubeDecomposition(tubes.R, tubes.L, tubes.d)
    cols = tube_columns(tubes, dec)
    slab = np.broadcast_to(np.arange(dec.nslabs)[None, :], cols.shape[:2])
    idx = np.ravel_multi_index((slab.ravel(),) + tuple(cols.reshape(-1, tubes.d).T), dec.shape)
    counts = np.bincount(idx, minlength=dec.count).reshape(dec.shape)
    return IncidenceTable(dec, tubes, cols, counts)


# ---------------------------------------------------------------- experiments on tube sets


class TubeExperiment:
    """Cached spacetime quantities of F = sum_{T in W} F_T."""

    def __init__(self, tubes: TubeSet, p=None):
        self.tubes = tubes
        self.p = lp_exponent(tubes.d) if p is None else p
        self._data = None
        self._norms = None
        self._table = None
        self._theta_sum = None

    @property
    def data(self):
        if self._data is None:
            self._data = self.tubes.data()
        return self._data

    @property
    def norms(self) -> CubeNorms:
        if self._norms is None:
            self._norms = cube_power_sums(self.data, self.tubes.R, self.p)
        return self._norms

    @property
    def table(self) -> IncidenceTable:
        if self._table is None:
            self._table = incidence(self.tubes)
        return self._table

    def theta_power_sum(self):
        """sum_theta ||F_theta||_p^p over the whole window."""
        if self._theta_sum is None:
            keys = [tuple(t) for t in self.tubes.theta]
            total = 0.0
            for key in sorted(set(keys)):
                sel = [j for j, k in enumerate(keys) if k == key]
                total += window_power_sum(self.tubes.subset(sel).data(), self.tubes.R, self.p)
            self._theta_sum = total
        return self._theta_sum


def refined_decoupling_ratio(exp: TubeExperiment, M) -> RefinedReport:
    """||F||_{L^p(Y_M)} against M^(1/2 - 1/p) (sum_theta ||F_theta||_p^p)^(1/p)."""
    p = exp.p
    Y = exp.table.Y(M)
    extra = {"R": exp.tubes.R, "M": int(M), "W": exp.tubes.W, "cubes": int(Y.sum())}
    if not Y.any():
        return RefinedReport("refined_decoupling", 0.0, 0.0, 0.0, 0.0, 0.0, True, extra)
    lhs = exp.norms.lp_norm(Y)
    rhs = M ** (0.5 - 1.0 / p) * exp.theta_power_sum() ** (1.0 / p)
    return RefinedReport("refined_decoupling", 0.0, 0.0, lhs, rhs, _ratio(lhs, rhs), False, extra)


def refined_decoupling_sweep(exp: TubeExperiment):
    return [refined_decoupling_ratio(exp, M) for M in exp.table.levels()]


def refined_strichartz_packets_check(exp: TubeExperiment, M) -> RefinedReport:
    """||E f||_{L^p(Y_M)} against (M / W)^(1/2 - 1/p) ||f||_2 for f a sum of W packets."""
    p = exp.p
    Y = exp.table.Y(M)
    extra = {"R": exp.tubes.R, "M": int(M), "W": exp.tubes.W, "cubes": int(Y.sum())}
    if not Y.any():
        return RefinedReport("refined_strichartz_packets", 0.0, 0.0, 0.0, 0.0, 0.0, True, extra)
    lhs = exp.norms.lp_norm(Y)
    rhs = (M / exp.tubes.W) ** (0.5 - 1.0 / p) * exp.data.l2_norm()
    return RefinedReport("refined_strichartz_packets", 0.0, 0.0, lhs, rhs, _ratio(lhs, rhs), False, extra)


# ---------------------------------------------------------------- pigeonholing


@dataclass(frozen=True)
class PigeonholeResult:
    sigma: float
    M: int
    W: int
    rho: int
    N: int
    bound: float
    holds: bool
    count_chain: bool
    skipped: bool = False


def pigeonhole_sigma(exp: TubeExperiment, selection: Selection | None = None, C=16.0) -> PigeonholeResult:
    """Check sigma <= C (log R)^3 W / M after the dyadic pigeonholing of packet norms and M(Q).

    Packets are first restricted to the most common dyadic L^2 level (W' of
    them); cubes of Y are then grouped by M(Q) counted with those packets and
    the most populous level M is kept (N cubes in rho slabs).  The exact
    count N M <= sum M(Q) <= rho W' is reported as ``count_chain``.
    """
    tubes = exp.tubes
    R = tubes.R
    sel = select_comparable_cubes(exp.norms) if selection is None else selection
    if sel.empty or sel.sigma == 0:
        return PigeonholeResult(0.0, 0, tubes.W, 0, 0, math.inf, True, True, True)
    norms = np.array([SparseData.build(tubes.L, *packet_coefficients(R, tubes.theta[j], tubes.nu()[j], tubes.L, tubes.d)).l2_norm() * abs(tubes.coeffs[j]) for j in range(tubes.W)])
    lev = np.floor(np.log2(norms) + 1e-12).astype(np.int64)
    lv, cnt = np.unique(lev, return_counts=True)
    top = lv[np.flatnonzero(cnt == cnt.max())[-1]]
    keep = np.flatnonzero(lev == top)
    sub = tubes.subset(keep)
    table = incidence(sub)
    Mq = table.counts[sel.mask]
    Wp = sub.W
    incident = Mq[Mq > 0]
    if incident.size == 0:
        return PigeonholeResult(sel.sigma, 0, Wp, 0, 0, math.inf, True, True, True)
    mlev = np.floor(np.log2(incident)).astype(np.int64)
    lv, cnt = np.unique(mlev, return_counts=True)
    best = int(lv[np.flatnonzero(cnt == cnt.max())[-1]])
    M = 1 << best
    Yp = sel.mask & (table.counts >= M) & (table.counts < 2 * M)
    N = int(Yp.sum())
    rho = int(Yp.reshape(Yp.shape[0], -1).any(axis=1).sum())
    chain = N * M <= int(table.counts[Yp].sum()) <= rho * Wp
    bound = C * math.log(R) ** 3 * Wp / M
    return PigeonholeResult(sel.sigma, M, Wp, rho, N, bound, bool(sel.sigma <= bound), bool(chain))


# ---------------------------------------------------------------- strips and rescaling


@dataclass(frozen=True)
class StripPartition:
    """labels[slab, col] = strip id; each strip is K cubes stacked along the direction of beta."""

    beta: int
    K: int
    labels: np.ndarray

    @property
    def count(self):
        return int(self.labels.max()) + 1

    def cubes(self, strip):
        return np.argwhere(self.labels == strip)


def _beta_center(beta, K):
    return (beta + 0.5) / K


def strips(beta, R, K=None, L=None) -> StripPartition:
    """Partition of the d = 1 cube grid into translates of R^(1/2) K^(-1) tau_beta^*."""
    s = cube_side(R)
    K = default_K(R) if K is None else int(K)
    L = 4 * R if L is None else L
    dec = CubeDecomposition(R, L, 1)
    if K < 1 or dec.nslabs % K or K & (K - 1):
        raise ValueError("K must be a power of 2 dividing R^(1/2)")
    if not 0 <= beta < K:
        raise ValueError("beta out of range")
    c = _beta_center(beta, K)
    ncols = dec.ncols
    labels = np.empty(dec.shape, dtype=np.int64)
    for k in range(dec.nslabs):
        block, kk = divmod(k, K)
        off = int(round(-2.0 * c * kk))
        start_col = (np.arange(ncols) - off) % ncols
        labels[k] = block * ncols + start_col
    return StripPartition(int(beta), K, labels)


def rescale_points(x, t, beta, K):
    """(x, t) -> ((x + 2 c t) / K, t / K^2), c the centre of beta."""
    c = _beta_center(beta, K)
    return (np.asarray(x) + 2.0 * c * np.asarray(t)) / K, np.asarray(t) / K**2


@dataclass(frozen=True)
class Rescaled:
    data: SparseData
    R1: float
    K: int
    jacobian: float
    center: float


def parabolic_rescale(data: SparseData, beta, K, R, p=None) -> Rescaled:
    """G with E f(x, t) = e(c x + c^2 t) E g((x + 2 c t) / K, t / K^2), frequencies eta = K (xi - c).

    The rescaled torus has length L / K and the window becomes [0, R / K^2];
    ||E f||_p = K^((d+2)/p) ||E g||_p.
    """
    if data.d != 1:
        raise NotImplementedError("parabolic rescaling is implemented for d = 1")
    p = lp_exponent(1) if p is None else p
    K = int(K)
    if K == 1:
        return Rescaled(data, float(R), 1, 1.0, 0.0)
    c = _beta_center(beta, K)
    kc = c * data.L
    if abs(kc - round(kc)) > 1e-9 or data.L % K:
        raise ValueError("the centre of beta must be a frequency of the torus and K must divide L")
    lo, hi = beta / K, (beta + 1) / K
    xi = data.xi[:, 0]
    if np.any(xi < lo - 0.5 / K) or np.any(xi > hi + 0.5 / K):
        raise ValueError("data is not supported over 2 beta")
    g = SparseData(data.L // K, data.k - int(round(kc)), data.coeffs)
    return Rescaled(g, R / K**2, K, float(K) ** ((data.d + 2) / p), c)


@dataclass(frozen=True)
class BootstrapRow:
    cube: tuple
    M: int
    M1: int
    M2: int
    holds: bool


def bootstrap_chain(exp: TubeExperiment, M, K=None):
    """For every cube Q0 in Y_M: M'(beta) = #{T in W_beta : strip(beta, Q0) subset T}; for each
    dyadic level M' the number M'' of caps beta at that level satisfies M' M'' <= M(Q0)."""
    tubes = exp.tubes
    if tubes.d != 1:
        raise NotImplementedError("the bootstrap chain is implemented for d = 1")
    R = tubes.R
    K = default_K(R) if K is None else K
    s = cube_side(R)
    table = exp.table
    cols = table.tube_cols[:, :, 0]
    beta_of = tubes.theta[:, 0] // (s // K)
    parts = {b: strips(b, R, K, tubes.L) for b in range(K)}
    rows = []
    for slab, col in np.argwhere(table.Y(M)):
        MQ = int(table.counts[slab, col])
        Mp = np.zeros(K, dtype=np.int64)
        for b in range(K):
            lab = parts[b].labels
            sid = lab[slab, col]
            cells = np.argwhere(lab == sid)
            through = np.flatnonzero((beta_of == b) & (cols[:, slab] == col))
            if through.size == 0:
                continue
            inside = np.all(cols[np.ix_(through, cells[:, 0])] == cells[:, 1][None, :], axis=1)
            Mp[b] = int(inside.sum())
        for e in range(int(Mp.max()).bit_length()):
            lo = 1 << e
            M2 = int(np.count_nonzero((Mp >= lo) & (Mp < 2 * lo)))
            if M2:
                rows.append(BootstrapRow((int(slab), int(col)), MQ, lo, M2, lo * M2 <= MQ))
    return rows
