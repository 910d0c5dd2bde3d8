"""Grids, sampled fields, the DFT contract, averaged L^p norms and frequency cutoffs.

Two grid modes are supported.

``real``
    A uniform periodic grid with per-axis extent and sample count.  Frequencies
    are physical (cycles per unit length) and cutoffs use smooth raised-cosine
    symbols.

``exact``
    The finite group Z_M^d with M a power of a prime p and unit spacing.  The
    size of a frequency k is its p-adic absolute value, so every "box"
    ``|xi| <= r`` is a subgroup and every dual box is a coset.  Low-pass
    filtering is then a sharp projection and the uncertainty principle holds
    as an identity.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

REAL = "real"
EXACT = "exact"
_MODES = (REAL, EXACT)


def _is_power_of(value: int, p: int) -> bool:
    if value < 1:
        return False
    while value % p == 0:
        value //= p
    return value == 1


def _ilog(value: int, p: int) -> int:
    e = 0
    while value % p == 0 and value > 1:
        value //= p
        e += 1
    return e


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic sampling grid.

    Parameters
    ----------
    extent : tuple of float
        Side length of the domain along each axis.
    shape : tuple of int
        Number of samples along each axis.
    mode : {"real", "exact"}
    p : int
        The prime used by exact mode.
    """

    extent: tuple
    shape: tuple
    mode: str = REAL
    p: int = 2

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        if len(extent) != len(shape) or not shape:
            raise ValueError("extent and shape must have the same nonzero length")
        if any(s < 1 for s in shape) or any(not e > 0 for e in extent):
            raise ValueError("grid extents and sample counts must be positive")
        if self.mode not in _MODES:
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.mode == EXACT:
            if self.p < 2 or any(self.p % q == 0 for q in range(2, int(self.p**0.5) + 1)):
                raise ValueError("exact mode needs a prime p")
            for e, s in zip(extent, shape):
                if not _is_power_of(s, self.p) or e != s:
                    raise ValueError("exact mode needs unit spacing and p-power sample counts")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def square(cls, side_length, samples, dims=2, mode=REAL, p=2):
        return cls((side_length,) * dims, (samples,) * dims, mode, p)

    @classmethod
    def exact(cls, modulus, dims=2, p=2):
        return cls((modulus,) * dims, (modulus,) * dims, EXACT, p)

    @property
    def dims(self):
        return len(self.shape)

    @property
    def side_length(self):
        return self.extent[0] if len(set(self.extent)) == 1 else self.extent

    @property
    def samples_per_axis(self):
        return self.shape[0] if len(set(self.shape)) == 1 else self.shape

    @property
    def spacing(self):
        return tuple(e / s for e, s in zip(self.extent, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.extent))

    @property
    def size(self):
        return int(np.prod(self.shape))

    def exponent(self, axis=0):
        """Return m with shape[axis] = p**m (exact mode)."""
        self._require_exact()
        return _ilog(self.shape[axis], self.p)

    def coordinates(self, axis):
        return np.arange(self.shape[axis]) * self.spacing[axis]

    def frequencies(self, axis):
        """Frequency labels along one axis.

        Real mode returns physical frequencies in cycles per unit; exact mode
        returns the residues 0..M-1.
        """
        if self.mode == EXACT:
            return np.arange(self.shape[axis], dtype=np.int64)
        return sfft.fftfreq(self.shape[axis], d=self.spacing[axis])

    def frequency_magnitude(self, axis):
        """|xi| along one axis: Euclidean in real mode, p-adic in exact mode."""
        if self.mode == REAL:
            return np.abs(self.frequencies(axis))
        k = self.frequencies(axis)
        v = padic_valuation(k, self.p, self.exponent(axis))
        mag = float(self.p) ** (-v.astype(float))
        mag[k == 0] = 0.0
        return mag

    def _require_exact(self):
        if self.mode != EXACT:
            raise ValueError("operation defined only in exact mode")


def padic_valuation(k, p, cap):
    """Largest e <= cap with p**e dividing k (so 0 has valuation cap)."""
    k = np.asarray(k, dtype=np.int64)
    v = np.zeros(k.shape, dtype=np.int64)
    q = 1
    for _ in range(cap):
        q *= p
        v += (k % q) == 0
    return v


@dataclass(frozen=True)
class ComplexField:
    """Samples of a function on a grid (``domain`` is "space" or "frequency")."""

    grid: GridSpec
    samples: np.ndarray
    domain: str = "space"

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.shape != self.grid.shape:
            raise ValueError(f"samples shape {arr.shape} does not match grid {self.grid.shape}")
        if not (np.issubdtype(arr.dtype, np.complexfloating) or np.issubdtype(arr.dtype, np.floating)):
            arr = arr.astype(np.complex128)
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "samples", view)

    def with_samples(self, samples, domain=None):
        return ComplexField(self.grid, samples, domain or self.domain)

    def intensity(self):
        s = self.samples
        if np.iscomplexobj(s):
            return s.real * s.real + s.imag * s.imag
        return s * s

    def l2_norm(self):
        """Continuum-normalized L^2 norm (sum of |f|^2 times cell volume)."""
        return math.sqrt(float(self.intensity().sum()) * self.grid.cell_volume)

    def sup_norm(self):
        return float(np.sqrt(self.intensity().max()))

    def __add__(self, other):
        _check_same_grid(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self.with_samples(self.samples - other.samples)


@dataclass(frozen=True)
class RegionMask:
    grid: GridSpec
    membership: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.membership, dtype=bool)
        if arr.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "membership", view)

    @classmethod
    def full(cls, grid):
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @property
    def count(self):
        return int(self.membership.sum())

    def measure(self):
        return self.count * self.grid.cell_volume

    def __or__(self, other):
        return RegionMask(self.grid, self.membership | other.membership)

    def __and__(self, other):
        return RegionMask(self.grid, self.membership & other.membership)

    def __invert__(self):
        return RegionMask(self.grid, ~self.membership)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def dft_forward(field: ComplexField) -> ComplexField:
    """Unitary DFT (the sign convention is e(-x.xi))."""
    if field.domain != "space":
        raise ValueError("dft_forward expects a spatial field")
    return ComplexField(field.grid, sfft.fftn(field.samples, norm="ortho"), "frequency")


def dft_inverse(field: ComplexField) -> ComplexField:
    if field.domain != "frequency":
        raise ValueError("dft_inverse expects a frequency-domain field")
    return ComplexField(field.grid, sfft.ifftn(field.samples, norm="ortho"), "space")


def lp_avg_norm(field: ComplexField, p, region: RegionMask | None = None, normalize="domain"):
    """Averaged L^p norm over a region.

    With ``normalize="domain"`` the integral over the region is divided by the
    volume of the whole grid, otherwise by the volume of the region itself.
    ``p = inf`` gives the maximum of |f| over the region.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if normalize not in ("domain", "region"):
        raise ValueError("normalize must be 'domain' or 'region'")
    inten = field.intensity()
    if region is not None:
        if region.grid.shape != field.grid.shape:
            raise ValueError("region and field grids differ")
        if region.count == 0:
            raise ValueError("empty region")
        inten = inten[region.membership]
    if math.isinf(p):
        return float(np.sqrt(inten.max()))
    if p == 2:
        vals = inten
    elif float(p).is_integer() and int(p) % 2 == 0:
        vals = inten ** (int(p) // 2)
    else:
        vals = inten ** (p / 2.0)
    denom = field.grid.size if normalize == "domain" else vals.size
    return float((vals.sum() / denom) ** (1.0 / p))


def raised_cosine_step(s):
    """1 on s <= 1, 0 on s >= 2, cosine transition in between."""
    s = np.asarray(s, dtype=float)
    out = 0.5 * (1.0 + np.cos(np.pi * np.clip(s - 1.0, 0.0, 1.0)))
    return np.where(s <= 1.0, 1.0, np.where(s >= 2.0, 0.0, out))


def _exact_cutoff_level(cutoff, p):
    """Smallest e >= 0 with p**-e <= cutoff."""
    if cutoff >= 1:
        return 0
    return max(0, math.ceil(math.log(1.0 / cutoff, p) - 1e-9))


def lowpass_factors(grid: GridSpec, cutoff):
    """Per-axis 1-D factors whose outer product is the low-pass symbol."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    factors = []
    for axis in range(grid.dims):
        if grid.mode == EXACT:
            e = _exact_cutoff_level(cutoff, grid.p)
            k = grid.frequencies(axis)
            keep = (k % (grid.p**e)) == 0 if e <= grid.exponent(axis) else k == 0
            factors.append(keep.astype(float))
        else:
            factors.append(raised_cosine_step(np.abs(grid.frequencies(axis)) / cutoff))
    return factors


def lowpass_symbol(grid: GridSpec, cutoff):
    out = np.ones(grid.shape)
    for axis, fac in enumerate(lowpass_factors(grid, cutoff)):
        out = out * _along(fac, axis, grid.dims)
    return out


def _along(vec, axis, dims):
    shape = [1] * dims
    shape[axis] = -1
    return np.asarray(vec).reshape(shape)


def apply_separable(spectrum, factors):
    out = spectrum
    for axis, fac in enumerate(factors):
        out = out * _along(fac, axis, spectrum.ndim)
    return out


def lowpass_convolve(field: ComplexField, cutoff) -> ComplexField:
    spec = sfft.fftn(field.samples)
    out = sfft.ifftn(apply_separable(spec, lowpass_factors(field.grid, cutoff)))
    if not np.iscomplexobj(field.samples):
        out = out.real
    return field.with_samples(out)


def highpass_part(field: ComplexField, cutoff) -> ComplexField:
    return field - lowpass_convolve(field, cutoff)


_MAGIC = b"DLFIELD1"


def save_field(path, field: ComplexField):
    """Binary container: fixed header followed by interleaved float64 re/im."""
    grid = field.grid
    header = _MAGIC + struct.pack(
        "<IIII", grid.dims, _MODES.index(grid.mode), grid.p, 0 if field.domain == "space" else 1
    )
    header += struct.pack(f"<{grid.dims}Q", *grid.shape)
    header += struct.pack(f"<{grid.dims}d", *grid.extent)
    data = np.ascontiguousarray(field.samples, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.view("<f8").tobytes())


def load_field(path) -> ComplexField:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError("not a field container")
    dims, mode, p, domain = struct.unpack_from("<IIII", raw, 8)
    off = 24
    shape = struct.unpack_from(f"<{dims}Q", raw, off)
    off += 8 * dims
    extent = struct.unpack_from(f"<{dims}d", raw, off)
    off += 8 * dims
    grid = GridSpec(extent, shape, _MODES[mode], p)
    data = np.frombuffer(raw, dtype="<f8", offset=off)
    if data.size != 2 * grid.size:
        raise ValueError("truncated field container")
    samples = data.view("<c16").reshape(grid.shape).astype(np.complex128)
    return ComplexField(grid, samples, "space" if domain == 0 else "frequency")


def field_to_csv(field: ComplexField, path, max_points=1 << 16):
    grid = field.grid
    if grid.size > max_points:
        raise ValueError(f"grid has {grid.size} points; CSV export is limited to {max_points}")
    idx = np.indices(grid.shape).reshape(grid.dims, -1).T
    vals = np.asarray(field.samples, dtype=np.complex128).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{a}" for a in range(grid.dims)] + [f"x{a}" for a in range(grid.dims)] + ["re", "im"])
        h = grid.spacing
        for row, v in zip(idx, vals):
            w.writerow(list(row) + [repr(r * h[a]) for a, r in enumerate(row)] + [repr(v.real), repr(v.imag)])
