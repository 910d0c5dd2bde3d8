import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoupling_lab.core_fields import EXACT, ComplexField, GridSpec
from decoupling_lab.strichartz_lab import cube_side, single_packet, tube_mass_fraction
from decoupling_lab.wavepacket import (
    Cap,
    build_caps,
    cap_multiplier,
    cap_window,
    decompose,
    exact_slab_mask,
    initial_packets,
    project_cap,
    schrodinger_evolve,
    tube_labels,
    tube_of,
    write_packet_table,
)


def _rand(shape, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def _band_limited_evolution(R, seed):
    """E f on x in [0, L), t in [0, L^2) for random f with spectrum k/L, 0 <= k < L."""
    L = 4 * math.isqrt(R)
    g = GridSpec((float(L),), (2 * L,))
    spec = np.zeros(2 * L, dtype=np.complex128)
    spec[:L] = _rand(L, seed)
    f = ComplexField(g, np.fft.ifft(spec))
    return f, schrodinger_evolve(f, np.arange(L * L), R=float(L * L))


def test_caps_basic():
    caps = build_caps(0.25)
    assert len(caps) == 4
    assert np.allclose([c.center[0] for c in caps], [0.125, 0.375, 0.625, 0.875])
    assert len(build_caps(0.5, d=2)) == 4
    for c in build_caps(1 / 8, d=2):
        x = c.center
        assert c.slab_contains(x, float(x @ x))
        assert not c.slab_contains(x, float(x @ x) + 2 * c.delta**2)
    with pytest.raises(ValueError):
        build_caps(0.3)
    with pytest.raises(ValueError):
        build_caps(1 / 6, mode=EXACT)
    assert Cap((2,), 1 / 9, EXACT, 3).level == 2


def test_partition_of_unity_real():
    xi = np.linspace(-1 / 16, 1 + 1 / 16, 2001)
    caps = build_caps(1 / 8)
    total = sum(cap_window(c, [xi])[0] for c in caps)
    assert np.allclose(total, 1.0, atol=1e-12)
    xi = np.linspace(-3, 3, 997)
    total = sum(cap_window(c, [xi], periodic=True)[0] for c in caps)
    assert np.allclose(total, 1.0, atol=1e-12)
    cover = cap_window(caps[3], [xi], kind="cover")[0]
    assert np.all(cover[(xi >= 2.5 / 8) & (xi <= 4.5 / 8)] == 1)


def test_tube_geometry():
    cap0 = Cap((0,), 1.0)
    T = tube_of(Cap((0,), 1 / 8), 0.0, 64)
    assert np.allclose(T.axis_at([0.0, 10.0]), [[0.0], [-1.25]])
    vertical = tube_of(Cap((0,), 1.0), 0.0, 16)
    assert cap0.center[0] == 0.5
    half = tube_of(Cap((1,), 1 / 2), 0.0, 16)
    assert np.allclose(half.velocity, [-1.5])
    assert bool(T.contains([0.0], 0.0)) and not bool(T.contains([0.0], -1.0))
    assert not bool(T.contains([0.0], 65.0))
    # the tube meets t = 0 in the cube around nu
    assert bool(T.contains([3.9], 0.0)) and not bool(T.contains([4.1], 0.0))
    per = tube_of(Cap((0,), 1 / 8), 0.0, 64, period=32)
    assert bool(per.contains([31.0], 0.0))
    assert vertical.width == 4.0 and vertical.length == 16.0


@pytest.mark.parametrize("p,M,d", [(2, 16, 1), (3, 9, 1), (2, 16, 2)])
def test_exact_tiling_and_cosets(p, M, d):
    grid = GridSpec.exact(M, d + 1, p)
    for cap in build_caps(1 / math.isqrt(M), d, EXACT, p):
        lab = tube_labels(grid, cap)
        counts = np.bincount(lab.ravel())
        assert counts.min() == counts.max()
        idx = np.argwhere(lab == lab.flat[0])
        base = {tuple((r - idx[0]) % M) for r in idx}
        for other in np.unique(lab)[1:4]:
            pts = np.argwhere(lab == other)
            assert {tuple((r - pts[0]) % M) for r in pts} == base


def test_exact_slabs_disjoint_and_contain_parabola():
    M = 64
    grid = GridSpec.exact(M)
    caps = build_caps(1 / 8, 1, EXACT)
    masks = [exact_slab_mask(grid, c) for c in caps]
    assert np.max(sum(m.astype(int) for m in masks)) == 1
    k = np.arange(M)
    on_parabola = np.zeros((M, M), dtype=bool)
    on_parabola[k, (k * k) % M] = True
    assert np.all(sum(masks)[on_parabola])
    with pytest.raises(ValueError):
        exact_slab_mask(GridSpec.exact(32), caps[0])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_decomposition_identities(seed):
    M = 64
    F = ComplexField(GridSpec.exact(M), _rand((M, M), seed))
    D = decompose(F, 1 / 8)
    assert np.abs(D.reconstruct().samples - F.samples).max() <= 1e-12 * F.sup_norm()
    total = sum(D.packet_norms(c)[1].sum() for c in D.caps) + D.residual.l2_norm() ** 2
    assert total == pytest.approx(F.l2_norm() ** 2, rel=1e-12)
    for cap in D.caps[:3]:
        P = np.abs(D.cap_field(cap))
        lab = D.tube_labels(cap)
        for t in np.unique(lab)[:5]:
            vals = P[lab == t]
            assert np.ptp(vals) <= 1e-12 * F.sup_norm()


def test_exact_evolution_has_no_residual():
    M = 64
    f = ComplexField(GridSpec.exact(M, 1), _rand(M, 2))
    E = schrodinger_evolve(f, np.arange(M))
    D = decompose(E, 1 / 8)
    assert D.residual.sup_norm() <= 1e-12 * E.sup_norm()
    keep_one = D.reconstruct(keep=lambda cap, lab: (cap.index[0] == 3) & (lab == 0))
    assert np.abs(keep_one.samples - D.residual.samples).max() > 0
    with pytest.raises(ValueError):
        schrodinger_evolve(f, np.arange(8))


def test_evolution_matches_direct_sum():
    L, n = 4.0, 16
    g = GridSpec((L,), (n,))
    f = ComplexField(g, _rand(n, 3))
    t = np.arange(5) * 0.3
    E = schrodinger_evolve(f, t, R=1.5)
    x = g.coordinates(0)
    fh = np.fft.fft(f.samples) / n
    k = np.fft.fftfreq(n, d=L / n)
    # alias window centred at 1/2: frequencies in [1/2 - 2, 1/2 + 2)
    k = (k + 1.5) % 4.0 - 1.5
    direct = np.array([[np.sum(fh * np.exp(2j * np.pi * (k * xx + tt * k * k))) for tt in t] for xx in x])
    assert np.allclose(E.samples, direct, atol=1e-12)
    with pytest.raises(ValueError):
        schrodinger_evolve(f, [0.0, 0.1, 0.5])


@pytest.mark.parametrize("R", [64, 256])
def test_real_decomposition_reconstructs_band_limited_field(R):
    f, E = _band_limited_evolution(R, R)
    norms = np.linalg.norm(E.samples, axis=0)
    assert np.ptp(norms) <= 1e-12 * norms.max()
    D = decompose(E, 1 / math.isqrt(R))
    assert D.residual.sup_norm() <= 1e-6 * E.sup_norm()
    packets = D.reconstruct().samples - D.residual.samples
    assert np.abs(packets - E.samples).max() <= 1e-6 * E.sup_norm()


def test_real_tube_labels_and_projection():
    f, E = _band_limited_evolution(64, 0)
    cap = Cap((3,), 1 / 8)
    lab = tube_labels(E.grid, cap)
    L = E.grid.extent[0]
    assert lab.min() == 0 and lab.max() == (L // 8) * (E.grid.extent[1] // 64) - 1
    P = project_cap(E, cap)
    assert np.allclose(np.fft.fftn(P.samples), np.fft.fftn(E.samples) * cap_multiplier(E.grid, cap))
    with pytest.raises(ValueError):
        tube_labels(GridSpec((30.0, 64.0), (60, 64)), cap)


def test_initial_packets_exact_orthogonality():
    M = 64
    f = ComplexField(GridSpec.exact(M, 1), _rand(M, 5))
    ip = initial_packets(f, 1 / 8)
    assert np.allclose(ip.reconstruct().samples, f.samples, atol=1e-12)
    assert np.sum(ip.norms() ** 2) == pytest.approx(f.l2_norm() ** 2, rel=1e-12)
    comps = ip.components(ip.caps[2])
    assert np.allclose(sum(comps.values()), ip.cap_component(ip.caps[2]))


def test_initial_packets_real_reconstruction():
    L, n = 32, 128
    g = GridSpec((float(L),), (n,))
    spec = np.zeros(n, dtype=np.complex128)
    spec[:L] = _rand(L, 9)
    f = ComplexField(g, np.fft.ifft(spec))
    ip = initial_packets(f, 1 / 8)
    assert np.abs(ip.reconstruct().samples - f.samples).max() <= 1e-12 * f.sup_norm()
    assert ip.norms().shape == (8, 4)


def test_packet_table(tmp_path):
    M = 16
    F = ComplexField(GridSpec.exact(M), _rand((M, M), 1))
    rows = decompose(F, 1 / 4).packet_table()
    assert rows and {"theta", "tube", "l2", "sup", "center", "width", "length"} <= set(rows[0])
    write_packet_table(rows, tmp_path / "p.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == len(rows) + 1


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([64, 256]), st.integers(0, 10**6), st.integers(0, 10**6))
def test_packet_adheres_to_tube(R, a, b):
    s = cube_side(R)
    tubes = single_packet(R, a % s, b % (4 * R // s))
    assert tube_mass_fraction(tubes) >= 0.9
