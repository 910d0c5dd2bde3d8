import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoupling_lab.core_fields import EXACT, GridSpec
from decoupling_lab.exp_sum import (
    DyadicPartition,
    ExpSumSpec,
    decoupling_ratio,
    eval_exp_sum,
    eval_exp_sum_at,
    load_spec_file,
    lp_power_mean,
    partial_sum,
    quadrature_grid,
    strichartz_ratio,
    write_ratio_csv,
)


def _brute_sextuples(N):
    c = Counter((a + b + d, a * a + b * b + d * d) for a, b, d in itertools.product(range(1, N + 1), repeat=3))
    return sum(v * v for v in c.values())


def _direct(spec, x1, x2):
    N = spec.N
    return sum(a * np.exp(2j * np.pi * ((n / N) * x1 + (n * n / N**2) * x2)) for n, a in zip(range(1, N + 1), spec.coeffs))


def test_eval_matches_direct_sum():
    spec = ExpSumSpec.random_phase(6, 2)
    g = GridSpec((6.0, 36.0), (12, 72))
    F = eval_exp_sum(spec, g)
    rng = np.random.default_rng(0)
    for _ in range(20):
        i, j = rng.integers(0, 12), rng.integers(0, 72)
        x1, x2 = g.coordinates(0)[i], g.coordinates(1)[j]
        assert abs(F.samples[i, j] - _direct(spec, x1, x2)) < 1e-12


def test_eval_examples():
    g = quadrature_grid(16)
    F = eval_exp_sum(ExpSumSpec.ones(16), g)
    assert abs(F.samples[0, 0] - 16) < 1e-12
    one = eval_exp_sum(ExpSumSpec.ones(1), quadrature_grid(1))
    assert np.allclose(np.abs(one.samples), 1.0)
    pts = np.array([[16 * j, 0] for j in range(-3, 7)])
    assert np.all(eval_exp_sum_at(ExpSumSpec.ones(16), pts) == 16)
    assert abs(eval_exp_sum_at(ExpSumSpec.ones(16), [[0.5, 3.25]])[0] - _direct(ExpSumSpec.ones(16), 0.5, 3.25)) < 1e-12


def test_exact_grid_evaluation():
    spec = ExpSumSpec.random_phase(4, 1)
    F = eval_exp_sum(spec, GridSpec.exact(16))
    val = eval_exp_sum_at(spec, [[3, 5]], mode=EXACT)[0]
    assert abs(F.samples[3, 5] - val) < 1e-12
    with pytest.raises(ValueError):
        eval_exp_sum(spec, GridSpec.exact(8))
    with pytest.raises(ValueError):
        eval_exp_sum(spec, GridSpec((3.0, 16.0), (8, 8)))


def test_partition_structure():
    for delta in (1.0, 0.5, 0.125):
        part = DyadicPartition(delta)
        iv = part.intervals
        assert len(iv) == part.count == round(1 / delta)
        assert iv[0][0] == 0 and iv[-1][1] == 1
        assert all(a[1] == b[0] for a, b in zip(iv, iv[1:]))
    labels = DyadicPartition(0.25).label(np.arange(1, 17), 16)
    assert list(np.bincount(labels)) == [4, 4, 4, 4]
    assert DyadicPartition(1 / 9, EXACT, 3).count == 9
    with pytest.raises(ValueError):
        DyadicPartition(0.3)
    with pytest.raises(ValueError):
        DyadicPartition(1 / 6)


def test_partial_sum_examples():
    spec = ExpSumSpec.ones(8)
    g = quadrature_grid(8)
    full = eval_exp_sum(spec, g)
    assert np.allclose(partial_sum(spec, DyadicPartition(1.0), 0, g).samples, full.samples)
    for k in range(2):
        assert abs(partial_sum(spec, DyadicPartition(0.5), k, g).samples[0, 0] - 4) < 1e-12
    rand = ExpSumSpec.random_phase(8, 5)
    for k in range(8):
        f = partial_sum(rand, DyadicPartition(1 / 8), k, g)
        assert np.allclose(np.abs(f.samples), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 8, 16]), st.sampled_from([0.5, 0.25, 0.125]))
def test_partial_sums_add_up(seed, N, delta):
    spec = ExpSumSpec.random_phase(N, seed)
    g = quadrature_grid(N, oversample=2)
    part = DyadicPartition(delta)
    total = sum(partial_sum(spec, part, k, g).samples for k in range(part.count))
    assert np.allclose(total, eval_exp_sum(spec, g).samples, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8, 16]))
def test_orthogonality_on_Q(seed, N):
    spec = ExpSumSpec.random_phase(N, seed).scaled(1.7)
    assert abs(lp_power_mean(spec, 2) - spec.l2_norm() ** 2) <= 1e-10 * spec.l2_norm() ** 2


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False),
)
def test_scaling_covariance(seed, c):
    spec = ExpSumSpec.random_phase(8, seed)
    cs = spec.scaled(c)
    for p in (4, 6):
        assert lp_power_mean(cs, p) ** (1 / p) == pytest.approx(abs(c) * lp_power_mean(spec, p) ** (1 / p), rel=1e-12)
        assert strichartz_ratio(cs, p) == pytest.approx(strichartz_ratio(spec, p), rel=1e-12)
    assert decoupling_ratio(cs, 0.25, 6) == pytest.approx(decoupling_ratio(spec, 0.25, 6), rel=1e-12)


def test_strichartz_ratio_values():
    assert strichartz_ratio(ExpSumSpec.ones(1), 6) == 1.0
    assert strichartz_ratio(ExpSumSpec.ones(1), 3.5) == 1.0
    assert strichartz_ratio(ExpSumSpec.ones(2), 6) == pytest.approx(20 ** (1 / 6) / math.sqrt(2), rel=1e-12)
    for N in (3, 4, 8):
        assert strichartz_ratio(ExpSumSpec.ones(N), 6) == pytest.approx(_brute_sextuples(N) ** (1 / 6) / math.sqrt(N), rel=1e-10)
    # random-phase regression baselines, cross-checked against the counting oracle
    assert strichartz_ratio(ExpSumSpec.random_phase(16, 0), 6) == pytest.approx(1.330799994402756, rel=1e-10)
    assert strichartz_ratio(ExpSumSpec.random_phase(64, 0), 6) == pytest.approx(1.3426122652490098, rel=1e-10)
    with pytest.raises(ValueError):
        strichartz_ratio(ExpSumSpec(np.zeros(4)), 6)
    with pytest.raises(ValueError):
        strichartz_ratio(ExpSumSpec.ones(4), 1.5)


def test_explicit_grid_matches_streamed_quadrature():
    spec = ExpSumSpec.random_phase(8, 3)
    assert lp_power_mean(spec, 6, quadrature_grid(8)) == pytest.approx(lp_power_mean(spec, 6), rel=1e-12)
    assert lp_power_mean(spec, 6, quadrature_grid(8, reduced=False)) == pytest.approx(lp_power_mean(spec, 6), rel=1e-12)


def test_decoupling_ratio_values():
    spec = ExpSumSpec.random_phase(16, 1)
    assert decoupling_ratio(spec, 1 / 16, 2) == pytest.approx(1.0, abs=1e-10)
    assert decoupling_ratio(spec, 1.0, 6) == pytest.approx(1.0, rel=1e-12)
    # translation invariance of the count: each block of 4 consecutive n has the count of n = 1..4
    num = _brute_sextuples(16) ** (1 / 6)
    den = math.sqrt(4 * _brute_sextuples(4) ** (1 / 3))
    assert decoupling_ratio(ExpSumSpec.ones(16), 0.25, 6) == pytest.approx(num / den, rel=1e-10)


def test_spec_file(tmp_path):
    (tmp_path / "a.txt").write_text("1 0\n0 1\n# note\n-1, 0\n")
    (tmp_path / "s.cfg").write_text("N = 3\ncoefficients = file(a.txt)  # local\nmode = exact\np = 3\n")
    sf = load_spec_file(tmp_path / "s.cfg")
    assert sf.mode == EXACT and sf.p == 3 and sf.oversampling == 4
    assert np.array_equal(sf.spec.coeffs, [1, 1j, -1])
    (tmp_path / "r.cfg").write_text("N: 8\ncoefficients: random-phase(4)\n")
    assert np.array_equal(load_spec_file(tmp_path / "r.cfg").spec.coeffs, ExpSumSpec.random_phase(8, 4).coeffs)
    (tmp_path / "bad.cfg").write_text("coefficients = all-ones\n")
    with pytest.raises(ValueError):
        load_spec_file(tmp_path / "bad.cfg")
    with pytest.raises(ValueError):
        ExpSumSpec.from_source(4, "gaussian(3)")
    with pytest.raises(ValueError):
        ExpSumSpec.from_source(4, "file(a.txt)", base_dir=tmp_path)


def test_ratio_csv(tmp_path):
    write_ratio_csv([{"N": 4, "p": 6, "delta": Fraction(1, 4), "ratio": 1.25}], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["N,p,delta,ratio", "4,6,0.25,1.25"]
