"""Caps on the paraboloid, their dual tubes, and wave packet decompositions.

Spacetime fields are sampled on grids whose last axis is time (or x_2 on Q);
the frequency dual to it is eta.  A cap theta of side delta in [0,1]^d sits
over the slab tau_theta = {(xi, eta): xi in 2 theta, |eta - L_theta(xi)| <= delta^2}.

Real mode uses raised-cosine windows: psi_theta(xi) = prod cos^2(pi u / 2)
with u = (xi - c_theta) / delta, which sum to one over the caps.  Exact mode
uses residue classes: on Z_M^{d+1} the slab of the class a mod p^j is the coset
    {k = a mod p^j,  k_t = sum 2 a_i k_i - a_i^2 mod p^{2j}},
and its tubes are the cosets of the annihilator, on which a projected field has
constant modulus.

The evolution convention is E f(x, t) = sum_xi fhat(xi) e(x.xi + t|xi|^2), so a
packet at frequency c moves along x = x_0 - 2 c t.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .core_fields import EXACT, REAL, ComplexField, GridSpec, _ilog, _is_power_of, raised_cosine_step


@dataclass(frozen=True)
class Cap:
    index: tuple
    delta: float
    mode: str = REAL
    p: int = 2

    @property
    def d(self):
        return len(self.index)

    @property
    def count(self):
        return round(1.0 / self.delta)

    @property
    def center(self):
        if self.mode == EXACT:
            return np.array(self.index, dtype=float)
        return (np.array(self.index, dtype=float) + 0.5) * self.delta

    @property
    def level(self):
        return _ilog(self.count, self.p)

    def linearization(self, xi):
        c = self.center
        xi = np.asarray(xi, dtype=float)
        return float(c @ c) + 2.0 * (np.atleast_1d(xi) - c) @ c

    @property
    def slopes(self):
        return 2.0 * self.center

    @property
    def normal(self):
        n = np.append(-2.0 * self.center, 1.0)
        return n / np.linalg.norm(n)

    def slab_contains(self, xi, eta):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        inside = np.all(np.abs(xi - self.center) <= self.delta)
        return bool(inside and abs(eta - self.linearization(xi)) <= self.delta**2)


def build_caps(delta, d=1, mode=REAL, p=2):
    count = round(1.0 / delta)
    if count < 1 or abs(count * delta - 1.0) > 1e-12:
        raise ValueError("1/delta must be an integer")
    if mode == EXACT and not _is_power_of(count, p):
        raise ValueError("exact mode needs 1/delta to be a power of p")
    delta = 1.0 / count
    return [Cap(tuple(ix), delta, mode, p) for ix in itertools.product(range(count), repeat=d)]


def _window_1d(xi, i, count, periodic, kind):
    delta = 1.0 / count
    u = (xi - (i + 0.5) * delta) / delta
    if periodic:
        u = (u + count / 2.0) % count - count / 2.0
    if kind == "cover":
        return (np.abs(u) <= 1.0).astype(float)
    w = np.where(np.abs(u) <= 1.0, np.cos(0.5 * np.pi * u) ** 2, 0.0)
    if not periodic:
        # the outermost caps stay flat out to the edge of the cover
        if i == 0:
            w = np.where((u >= -1.0) & (u <= 0.0), 1.0, w)
        if i == count - 1:
            w = np.where((u >= 0.0) & (u <= 1.0), 1.0, w)
    return w


def cap_window(cap: Cap, xi_axes, periodic=False, kind="partition"):
    """Separable real-mode window psi_theta evaluated on per-axis frequencies.

    ``kind="partition"`` gives the partition of unity (sums to 1 on the cover
    [-delta/2, 1 + delta/2]^d); ``kind="cover"`` gives the indicator of 2 theta.
    Returns one 1-D factor per axis.
    """
    return [_window_1d(np.asarray(x, dtype=float), i, cap.count, periodic, kind) for x, i in zip(xi_axes, cap.index)]


def _aliased_frequencies(grid, axis, center):
    k = sfft.fftfreq(grid.shape[axis], d=grid.spacing[axis])
    span = 1.0 / grid.spacing[axis]
    return (k - (center - span / 2.0)) % span + (center - span / 2.0)


def _along(vec, axis, dims):
    shape = [1] * dims
    shape[axis] = -1
    return np.asarray(vec).reshape(shape)


def exact_slab_mask(grid: GridSpec, cap: Cap):
    """Indicator of tau_theta on Z_M^{d+1} (boolean array over frequency bins)."""
    M = grid.shape[0]
    q1 = cap.p**cap.level
    q2 = q1 * q1
    if M % q2:
        raise ValueError("cap too fine for this grid: need p^{2j} | M")
    d = grid.dims - 1
    ks = np.meshgrid(*[np.arange(M, dtype=np.int64)] * (d + 1), indexing="ij", sparse=True)
    mask = np.ones(grid.shape, dtype=bool)
    target = 0
    for i in range(d):
        a = int(cap.index[i])
        mask = mask & ((ks[i] % q1) == a)
        target = target + 2 * a * ks[i] - a * a
    return mask & (((ks[d] - target) % q2) == 0)


def cap_multiplier(grid: GridSpec, cap: Cap, periodic=False, slab_height="auto", kind="partition", center=0.5):
    """Fourier multiplier eta_{tau_theta} on the grid of a spacetime field."""
    if grid.mode == EXACT:
        return exact_slab_mask(grid, cap).astype(float)
    d = grid.dims - 1
    xi = [_aliased_frequencies(grid, a, center) for a in range(d)]
    facs = cap_window(cap, xi, periodic=periodic, kind=kind)
    mult = np.ones(grid.shape)
    for a, f in enumerate(facs):
        mult = mult * _along(f, a, grid.dims)
    if slab_height is None:
        return mult
    h = cap.delta**2 if slab_height == "auto" else float(slab_height)
    eta = _along(_aliased_frequencies(grid, d, center), d, grid.dims)
    c = cap.center
    lin = float(c @ c)
    for a in range(d):
        lin = lin + 2.0 * c[a] * (_along(xi[a], a, grid.dims) - c[a])
    return mult * raised_cosine_step(np.abs(eta - lin) / (2.0 * h))


def project_cap(F: ComplexField, cap: Cap, **kw) -> ComplexField:
    """P_{tau_theta} F as a Fourier multiplier."""
    spec = sfft.fftn(F.samples)
    return F.with_samples(sfft.ifftn(spec * cap_multiplier(F.grid, cap, **kw)))


def tube_labels(grid: GridSpec, cap: Cap, periodic_check=True):
    """Label of the tube of T_theta containing each grid point.

    Real mode tiles by {floor((x + 2 c t) / delta^-1) mod (L / delta^-1), floor(t / delta^-2)}.
    """
    d = grid.dims - 1
    coords = np.meshgrid(*[np.arange(s, dtype=np.int64) for s in grid.shape], indexing="ij", sparse=True)
    if grid.mode == EXACT:
        M = grid.shape[0]
        q1 = cap.p**cap.level
        if M % (q1 * q1):
            raise ValueError("cap too fine for this grid")
        Lt = M // (q1 * q1)
        Ls = M // q1
        lab = coords[d] % Lt
        for i in range(d):
            lab = lab * Ls + (coords[i] + 2 * int(cap.index[i]) * coords[d]) % Ls
        return np.broadcast_to(lab, grid.shape).astype(np.int64)
    w = 1.0 / cap.delta
    h = w * w
    t = coords[d] * grid.spacing[d]
    lab = np.floor(t / h).astype(np.int64)
    for i in range(d):
        L = grid.extent[i]
        ncol = round(L / w)
        if periodic_check and abs(ncol * w - L) > 1e-9:
            raise ValueError("spatial extent must be a multiple of the tube width")
        x = coords[i] * grid.spacing[i]
        s = np.floor(np.mod(x + 2.0 * cap.center[i] * t, L) / w).astype(np.int64) % ncol
        lab = lab * ncol + s
    return np.broadcast_to(lab, grid.shape).astype(np.int64)


@dataclass(frozen=True)
class Tube:
    """T_{theta,nu}: axis x = nu - 2 c_theta t for 0 <= t <= length, cross-section width."""

    cap: Cap
    nu: tuple
    width: float
    length: float
    period: tuple | None = None

    @property
    def velocity(self):
        return -2.0 * self.cap.center

    def axis_at(self, t):
        return np.asarray(self.nu, dtype=float) + np.multiply.outer(np.asarray(t, dtype=float), self.velocity)

    def contains(self, x, t, dilation=1.0):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        off = x - self.axis_at(t)
        if self.period is not None:
            P = np.asarray(self.period, dtype=float)
            off = (off + P / 2.0) % P - P / 2.0
        inside = np.all(np.abs(off) <= 0.5 * self.width * dilation, axis=-1)
        return inside & (t >= 0) & (t <= self.length)


def tube_of(cap: Cap, nu, R, period=None) -> Tube:
    nu = tuple(np.atleast_1d(np.asarray(nu, dtype=float)))
    return Tube(cap, nu, math.sqrt(R), float(R), None if period is None else tuple(np.atleast_1d(period)))


class WavePacketDecomposition:
    """Lazy decomposition F = sum_T P_T F + residual with P_T F = 1_T P_{tau_theta(T)} F."""

    def __init__(self, field: ComplexField, delta, periodic=False, slab_height="auto", center=0.5):
        self.field = field
        self.delta = float(delta)
        self.grid = field.grid
        mode = self.grid.mode
        self.caps = build_caps(delta, self.grid.dims - 1, mode, self.grid.p)
        self._kw = dict(periodic=periodic, slab_height=slab_height, center=center)
        self._spectrum = sfft.fftn(field.samples)
        self._spectrum.flags.writeable = False
        self._residual = None

    def cap_field(self, cap):
        mult = cap_multiplier(self.grid, cap, **self._kw)
        return sfft.ifftn(self._spectrum * mult)

    def tube_labels(self, cap):
        return tube_labels(self.grid, cap)

    def packet_norms(self, cap):
        """(labels, squared L^2 norms, sup norms) of the nonzero packets of one cap."""
        P = self.cap_field(cap)
        lab = self.tube_labels(cap).ravel()
        inten = (P.real**2 + P.imag**2).ravel()
        uniq, inv = np.unique(lab, return_inverse=True)
        l2 = np.bincount(inv, inten) * self.grid.cell_volume
        sup = np.sqrt(ndimage.maximum(inten, inv, np.arange(uniq.size)))
        return uniq, l2, np.asarray(sup)

    def packet(self, cap, label) -> ComplexField:
        P = self.cap_field(cap)
        return self.field.with_samples(np.where(self.tube_labels(cap) == label, P, 0))

    def reconstruct(self, keep=None) -> ComplexField:
        """Sum of packets (and residual); ``keep(cap, labels) -> bool array`` selects tubes."""
        total = np.zeros(self.grid.shape, dtype=np.complex128)
        for cap in self.caps:
            P = self.cap_field(cap)
            if keep is None:
                total += P
            else:
                lab = self.tube_labels(cap)
                total += np.where(keep(cap, lab), P, 0)
        return self.field.with_samples(total + self.residual.samples)

    @property
    def residual(self) -> ComplexField:
        if self._residual is None:
            if self.grid.mode == EXACT:
                covered = np.zeros(self.grid.shape, dtype=bool)
                for cap in self.caps:
                    covered |= exact_slab_mask(self.grid, cap)
                res = sfft.ifftn(np.where(covered, 0, self._spectrum))
            else:
                total = np.zeros(self.grid.shape)
                for cap in self.caps:
                    total = total + cap_multiplier(self.grid, cap, **self._kw)
                res = sfft.ifftn(self._spectrum * (1.0 - total))
            self._residual = self.field.with_samples(res)
        return self._residual

    def packet_table(self):
        rows = []
        for cap in self.caps:
            labels, l2, sup = self.packet_norms(cap)
            for lab, e, s in zip(labels, l2, sup):
                if s == 0:
                    continue
                rows.append(
                    {
                        "theta": "/".join(str(i) for i in cap.index),
                        "tube": int(lab),
                        "l2": math.sqrt(float(e)),
                        "sup": float(s),
                        "center": "/".join(repr(float(c)) for c in cap.center),
                        "width": 1.0 / cap.delta,
                        "length": 1.0 / cap.delta**2,
                    }
                )
        return rows


def decompose(F: ComplexField, delta, **kw) -> WavePacketDecomposition:
    return WavePacketDecomposition(F, delta, **kw)


def write_packet_table(rows, path):
    cols = ["theta", "tube", "l2", "sup", "center", "width", "length"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in cols})


class InitialPackets:
    """P_{theta,nu} f = 1_{q_nu} P_theta f for a spatial field f."""

    def __init__(self, f: ComplexField, delta, periodic=False, center=0.5):
        self.field = f
        self.grid = f.grid
        self.delta = float(delta)
        self.caps = build_caps(delta, self.grid.dims, self.grid.mode, self.grid.p)
        self._spectrum = sfft.fftn(f.samples)
        self._periodic = periodic
        self._center = center
        self.cube_labels = self._cube_labels()

    def _cube_labels(self):
        g = self.grid
        coords = np.meshgrid(*[np.arange(s, dtype=np.int64) for s in g.shape], indexing="ij", sparse=True)
        lab = np.zeros((1,) * g.dims, dtype=np.int64)
        for a in range(g.dims):
            if g.mode == EXACT:
                q = g.shape[a] // (g.p ** _ilog(round(1 / self.delta), g.p))
                lab = lab * q + coords[a] % q
            else:
                w = 1.0 / self.delta
                ncol = round(g.extent[a] / w)
                if abs(ncol * w - g.extent[a]) > 1e-9:
                    raise ValueError("spatial extent must be a multiple of delta^-1")
                x = coords[a] * g.spacing[a]
                lab = lab * ncol + np.floor((x + w / 2.0) / w).astype(np.int64) % ncol
        return np.broadcast_to(lab, g.shape)

    def window(self, cap):
        g = self.grid
        if g.mode == EXACT:
            q = cap.p**cap.level
            mult = np.ones(g.shape)
            for a in range(g.dims):
                k = np.arange(g.shape[a])
                mult = mult * _along((k % q) == cap.index[a], a, g.dims)
            return mult
        xi = [_aliased_frequencies(g, a, self._center) for a in range(g.dims)]
        mult = np.ones(g.shape)
        for a, fac in enumerate(cap_window(cap, xi, periodic=self._periodic)):
            mult = mult * _along(fac, a, g.dims)
        return mult

    def cap_component(self, cap):
        return sfft.ifftn(self._spectrum * self.window(cap))

    def components(self, cap):
        """Map nu-label -> P_{theta,nu} f (only nonzero components)."""
        P = self.cap_component(cap)
        out = {}
        for lab in np.unique(self.cube_labels):
            comp = np.where(self.cube_labels == lab, P, 0)
            if np.any(comp != 0):
                out[int(lab)] = comp
        return out

    def reconstruct(self):
        total = np.zeros(self.grid.shape, dtype=np.complex128)
        for cap in self.caps:
            total += self.cap_component(cap)
        return self.field.with_samples(total)

    def norms(self):
        """Array of shape (#caps, #cubes) with the L^2 norm of each P_{theta,nu} f."""
        ncube = int(self.cube_labels.max()) + 1
        out = np.zeros((len(self.caps), ncube))
        lab = self.cube_labels.ravel()
        for i, cap in enumerate(self.caps):
            P = self.cap_component(cap).ravel()
            out[i] = np.sqrt(np.bincount(lab, P.real**2 + P.imag**2, ncube) * self.grid.cell_volume)
        return out


def initial_packets(f: ComplexField, delta, **kw) -> InitialPackets:
    return InitialPackets(f, delta, **kw)


def schrodinger_evolve(f: ComplexField, times, R=None, physical=False, center=0.5) -> ComplexField:
    """Spacetime samples of the free evolution of f at uniformly spaced times.

    The time axis is appended last.  ``times`` must be i * R / n for
    i = 0..n-1.  Real-mode frequencies are taken in the alias window of width
    1/spacing around ``center``, so band-limited data in [0,1]^d evolves
    correctly once the spacing is below 1/2 (1/2 itself also works for the
    half-open band).
    """
    g = f.grid
    times = np.asarray(times, dtype=float)
    n = times.size
    if R is None:
        R = times[1] * n if n > 1 else 1.0
    if n > 1 and not np.allclose(times, np.arange(n) * (R / n)):
        raise ValueError("times must be uniformly spaced from 0 with step R/n")
    spec = sfft.fftn(f.samples)
    if g.mode == EXACT:
        M = g.shape[0]
        ksq = np.zeros(g.shape, dtype=np.int64)
        for a in range(g.dims):
            k = np.arange(g.shape[a], dtype=np.int64)
            ksq = ksq + _along(k * k, a, g.dims)
        ksq = ksq % M
        tgrid = GridSpec(g.extent + (float(M),), g.shape + (M,), EXACT, g.p)
        if n != M:
            raise ValueError("exact mode evolves over the whole group Z_M")
        out = np.empty(g.shape + (n,), dtype=np.complex128)
        for i, t in enumerate(times.astype(np.int64)):
            out[..., i] = sfft.ifftn(spec * np.exp(2j * np.pi * ((t * ksq) % M) / M))
        return ComplexField(tgrid, out)
    xi2 = np.zeros(g.shape)
    for a in range(g.dims):
        xi2 = xi2 + _along(_aliased_frequencies(g, a, center) ** 2, a, g.dims)
    rate = -4.0 * np.pi**2 * xi2 if physical else 2.0 * np.pi * xi2
    out = np.empty(g.shape + (n,), dtype=np.complex128)
    for i, t in enumerate(times):
        out[..., i] = sfft.ifftn(spec * np.exp(1j * t * rate))
    tgrid = GridSpec(g.extent + (float(R),), g.shape + (n,), REAL)
    return ComplexField(tgrid, out)
