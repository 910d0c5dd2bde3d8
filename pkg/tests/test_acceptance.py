"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest
import scipy.fft as sfft

from decoupling_lab.core_fields import EXACT, REAL
from decoupling_lab.counting_oracle import count_pair_system, l2m_norm_by_counting, strichartz_ratio_ones, verify_quadrature
from decoupling_lab.exp_sum import DyadicPartition, ExpSumSpec, eval_exp_sum, eval_exp_sum_at, partial_sum, quadrature_grid
from decoupling_lab.multiscale_highlow import (
    SparseSpectrum,
    highlow_pipeline,
    pipeline_grid,
    random_cap_field,
    square_function,
    verify_high_lemma,
    verify_high_lemma_variant,
    verify_low_lemma,
)
from decoupling_lab.report import fit_growth, power_exponent
from decoupling_lab.strichartz_lab import (
    TubeExperiment,
    bootstrap_chain,
    bush_data,
    bush_tubes,
    parallel_example,
    pigeonhole_sigma,
    predicted_bush_band,
    random_tube_set,
    refined_decoupling_sweep,
    refined_strichartz_check,
    select_comparable_cubes,
    single_packet,
    strichartz_ratio,
)
from decoupling_lab.wavepacket import decompose, exact_slab_mask


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return report


def test_criterion_01_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (2, 4, 8, 16):
        specs = [ExpSumSpec.ones(N)] + [ExpSumSpec.random_phase(N, s) for s in range(20)]
        worst = max(worst, max(verify_quadrature(s) for s in specs))
    twenty = l2m_norm_by_counting(np.ones(2), 3)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and twenty == 20 and isinstance(twenty, int) and elapsed < 30
    verdict(1, ok, f"max rel error {worst:.2e}, N=2 ones count {twenty}, {elapsed:.1f} s")


def _cross_inner_product(spec, I_index, J_index, part, grid):
    fI = partial_sum(spec, part, I_index, grid).samples
    fJ = partial_sum(spec, part, J_index, grid).samples
    hI = np.abs(fI) ** 2
    hJ = np.abs(fJ) ** 2
    return abs(np.mean((hI - hI.mean()) * (hJ - hJ.mean())))


def test_criterion_02_orthogonality_certificate(verdict):
    N = 32
    grid = quadrature_grid(N, oversample=2)
    specs = [ExpSumSpec.ones(N), ExpSumSpec.random_phase(N, 0), ExpSumSpec.random_phase(N, 1)]
    max_count, max_ip, pairs = 0, 0.0, 0
    for delta in (0.5, 0.25, 0.125):
        part = DyadicPartition(delta)
        for i, j in itertools.permutations(range(part.count), 2):
            I, J = part.intervals[i], part.intervals[j]
            max_count = max(max_count, count_pair_system(N, I, J).count)
            pairs += 1
            for spec in specs:
                max_ip = max(max_ip, _cross_inner_product(spec, i, j, part, grid))
    ok = max_count == 0 and max_ip <= 1e-10
    verdict(2, ok, f"{pairs} interval pairs, max count {max_count}, max inner product {max_ip:.2e}")


def test_criterion_03_square_function_peak(verdict):
    worst = 0.0
    for N, delta in itertools.product((16, 64), (0.25, 1 / 16)):
        spec = ExpSumSpec.ones(N)
        target = N * N * delta
        part = DyadicPartition(delta)
        pts = [[j * N, 0] for j in range(-2, 3)]
        direct = sum(np.abs(eval_exp_sum_at(ExpSumSpec(np.where(part.label(spec.n, N) == k, 1.0, 0.0)), pts)) ** 2 for k in range(part.count))
        worst = max(worst, float(np.max(np.abs(direct - target))) / target)
        for mode in (REAL, EXACT):
            G = square_function(eval_exp_sum(spec, pipeline_grid(N, mode)), delta)
            worst = max(worst, abs(G.samples[0, 0] - target) / target)
    verdict(3, worst <= 1e-12, f"max relative deviation of g(jN, 0) from N^2 delta: {worst:.1e}")


def test_criterion_04_strichartz_growth(verdict):
    t0 = time.perf_counter()
    Ns = [2**k for k in range(4, 13)]
    D = [strichartz_ratio_ones(N) for N in Ns]
    fit = fit_growth(list(zip(Ns, D)))
    under = all(d <= 4 * math.log(N) ** 3 for N, d in zip(Ns, D))
    elapsed = time.perf_counter() - t0
    ok = fit.a <= 0.1 and fit.polylog_residual < fit.power_residual and under and elapsed < 600
    verdict(
        4,
        ok,
        f"a={fit.a:.4f} b={fit.b:.4f} residuals power {fit.power_residual:.2e} polylog {fit.polylog_residual:.2e}, "
        f"D(4096)={D[-1]:.4f}, {elapsed:.0f} s",
    )


def test_criterion_05_exact_identities(verdict):
    N = 64
    recon, low, support, constancy = 0.0, 0.0, 0.0, 0.0
    for seed in range(20):
        spec = ExpSumSpec.random_phase(N, seed)
        sup = eval_exp_sum(spec, pipeline_grid(N, EXACT)).sup_norm()
        low = max(low, verify_low_lemma(spec, 1 / 8, EXACT) / sup**2)
    for seed in range(2):
        spec = ExpSumSpec.random_phase(N, seed)
        F = eval_exp_sum(spec, pipeline_grid(N, EXACT))
        sup = F.sup_norm()
        D = decompose(F, 1 / 8)
        recon = max(recon, np.abs(D.reconstruct().samples - F.samples).max() / sup)
        for cap in D.caps:
            P = D.cap_field(cap)
            spectrum = np.abs(sfft.fftn(P, norm="forward"))
            outside = spectrum[~exact_slab_mask(F.grid, cap)]
            support = max(support, float(outside.max(initial=0.0)) / sup)
            A = np.abs(P)
            lab = D.tube_labels(cap)
            order = np.argsort(lab.ravel(), kind="stable")
            blocks = A.reshape(-1)[order].reshape(int(lab.max()) + 1, -1)
            constancy = max(constancy, float(np.ptp(blocks, axis=1).max()) / sup)
    ok = recon <= 1e-12 and low <= 1e-10 and support <= 1e-12 and constancy <= 1e-12
    verdict(
        5,
        ok,
        f"reconstruction {recon:.1e}, low lemma {low:.1e} ||f||^2, off-slab spectrum {support:.1e}, tube modulus spread {constancy:.1e}",
    )


def test_criterion_06_high_lemma(verdict):
    N = 64
    pairs = [(0.5, 1 / 16), (0.25, 1 / 64), (1 / 8, 1 / 512), (1 / 16, 1 / 4096)]
    widths = [1 / 4096, 1 / 1024, 1 / 256]
    worst_high, worst_variant, count = 0.0, 0.0, 0
    for seed in range(100):
        for sp in (SparseSpectrum.from_exp_sum(ExpSumSpec.random_phase(N, seed), EXACT), random_cap_field(N, seed)):
            for dp, d in pairs:
                lhs, rhs, _ = verify_high_lemma(sp, dp, d, EXACT)
                worst_high = max(worst_high, lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0))
                count += 1
            for w in widths:
                lhs, rhs, _ = verify_high_lemma_variant(sp, w)
                worst_variant = max(worst_variant, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    ok = worst_high <= 1 + 1e-9 and worst_variant <= 1e-9
    verdict(6, ok, f"{count} high lemma instances, max LHS/RHS {worst_high:.4f}; variant max rel gap {worst_variant:.1e}")


def test_criterion_07_omega_decomposition(verdict):
    runs = [
        (ExpSumSpec.random_phase(16, 0), EXACT, 0.0, None),
        (ExpSumSpec.random_phase(16, 1), EXACT, None, None),
        (ExpSumSpec.ones(64), EXACT, None, None),
        (ExpSumSpec.random_phase(64, 0), REAL, 0.0, [20.0, 40.0]),
        (ExpSumSpec.random_phase(64, 1), REAL, None, None),
        (ExpSumSpec.ones(256), REAL, None, None),
    ]
    partition = chain = pruning = True
    removed = 0
    for spec, mode, tc, alphas in runs:
        rep = highlow_pipeline(spec, mode=mode, tilde_c=tc, alphas=alphas)
        partition &= rep.partition_ok
        chain &= all(r.pointwise for r in rep.chain)
        pruning &= all(p.max_surviving_sup <= p.lam for p in rep.pruning)
        removed += sum(p.removed_packets for p in rep.pruning)
    ok = partition and chain and pruning and removed > 0
    verdict(7, ok, f"partition {partition}, low chain {chain}, pruned sups <= lambda {pruning} ({removed} packets removed)")


def test_criterion_08_pipeline_bound(verdict):
    rows, worst = 0, 0.0
    for N in (64, 256):
        for spec in [ExpSumSpec.ones(N)] + [ExpSumSpec.random_phase(N, s) for s in range(5)]:
            rep = highlow_pipeline(spec, mode=REAL)
            for r in rep.rows:
                rows += 1
                worst = max(worst, r.measured_mass / r.bound)
    verdict(8, worst <= 1.0, f"{rows} (alpha, region) rows, max mass / bound {worst:.2e}")


def test_criterion_09_refined_strichartz_extremals(verdict):
    Rs = [2**6, 2**8, 2**10]
    par, bush = [], []
    for R in Rs:
        par.append(refined_strichartz_check(parallel_example(R).data(), R).ratio)
        data = bush_data(R)
        bush.append(refined_strichartz_check(data, R, band=predicted_bush_band(data, R)).ratio)
    ep, eb = power_exponent(Rs, par), power_exponent(Rs, bush)
    in_band = all(1 / 8 <= r <= 8 for r in par + bush)
    ok = in_band and abs(ep) <= 0.1 and abs(eb) <= 0.1
    verdict(
        9,
        ok,
        f"parallel {[round(r, 4) for r in par]} exponent {ep:.4f}; bush {[round(r, 4) for r in bush]} exponent {eb:.4f}",
    )


def _decoupling_instance(exp, selection=None):
    ratios = [r.ratio for r in refined_decoupling_sweep(exp) if not r.skipped]
    ph = pigeonhole_sigma(exp, selection)
    chain = [row for M in exp.table.levels() for row in bootstrap_chain(exp, M)]
    return ratios, ph, chain


def test_criterion_10_refined_decoupling(verdict):
    R = 2**8
    rng = np.random.default_rng(2024)
    worst, instances, pigeon, chains = 0.0, 0, True, True
    experiments = []
    for seed in range(100):
        W = int(rng.integers(1, 16 * 64 // 2))
        experiments.append((TubeExperiment(random_tube_set(R, W, seed)), None))
    bush = TubeExperiment(bush_tubes(R))
    experiments.append((bush, select_comparable_cubes(bush.norms, predicted_bush_band(bush.data, R))))
    for exp, sel in experiments:
        ratios, ph, chain = _decoupling_instance(exp, sel)
        worst = max([worst] + ratios)
        pigeon &= ph.holds and ph.count_chain
        chains &= all(r.holds and r.M1 * r.M2 <= r.M for r in chain)
        instances += len(chain)
    ok = worst <= 8 and pigeon and chains
    verdict(10, ok, f"101 configurations, max ratio {worst:.4f}, pigeonhole {pigeon}, {instances} chain instances ok {chains}")


def test_criterion_11_single_packet(verdict):
    ratios = {R: strichartz_ratio(single_packet(R).data(), R) for R in (2**6, 2**8)}
    ok = all(0.25 <= r <= 4 for r in ratios.values())
    verdict(11, ok, ", ".join(f"R={R}: {r:.4f}" for R, r in ratios.items()))
