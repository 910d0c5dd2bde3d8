"""Config-driven experiment runner.

    decoupling-lab oracle-verify --N 2 4 8 --seeds 0 1 2 --out results
    decoupling-lab strichartz-growth --config growth.json --plots

Every run writes <out>/<experiment>.jsonl (header, one line per row, summary),
a CSV mirror of the rows and, with --plots, an SVG drawn from that CSV.  The
exit code is 0 iff every embedded check passed, 1 if a check failed and 2 for
an invalid or infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core_fields import EXACT, ComplexField, GridSpec
from .counting_oracle import l2m_norm_by_counting, strichartz_ratio_ones
from .exp_sum import ExpSumSpec, lp_power_mean, strichartz_ratio
from .multiscale_highlow import highlow_pipeline
from .report import fit_growth, plot_csv, power_exponent, write_csv, write_jsonl
from .wavepacket import decompose, schrodinger_evolve

GENERATOR = "numpy.random.PCG64"
KINDS = ("strichartz-growth", "highlow-pipeline", "wavepacket-checks", "refined-lab", "oracle-verify")

LIMITS = {
    "oracle-verify": 64,
    "strichartz-growth/count": 1 << 13,
    "strichartz-growth/quadrature": 128,
    "highlow-pipeline/real": 256,
    "highlow-pipeline/exact": 64,
    "wavepacket-checks": 1 << 10,
    "refined-lab/1": 1 << 12,
    "refined-lab/2": 1 << 8,
}


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("decoupling_lab").joinpath("config.schema.json").read_text())


@dataclass
class ExperimentConfig:
    experiment: str
    mode: str = "real"
    seed: int = 0
    out: str = "results"
    N: list = field(default_factory=list)
    R: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    include_ones: bool = True
    method: str = "count"
    c: float = 1.0
    tilde_c: float | None = None
    c_prime: float | None = None
    bound_c: float = 3.0
    p: int = 2
    d: int = 1
    K: int | None = None
    example: str = "parallel"
    W: int | None = None
    band_policy: str = "max_ratio"
    workers: int = 1
    plots: bool = False

    @classmethod
    def from_dict(cls, raw):
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        cfg = cls(**raw)
        cfg.check()
        return cfg

    def to_dict(self):
        return asdict(self)

    def check(self):
        kind = self.experiment
        if kind in ("strichartz-growth", "highlow-pipeline", "oracle-verify") and not self.N:
            raise ConfigError(f"{kind} needs a nonempty N sweep")
        if kind in ("wavepacket-checks", "refined-lab") and not self.R:
            raise ConfigError(f"{kind} needs a nonempty R sweep")
        if kind == "oracle-verify" and not (self.seeds or self.include_ones):
            raise ConfigError("oracle-verify needs seeds or include_ones")
        if kind == "highlow-pipeline" and not (self.seeds or self.include_ones):
            raise ConfigError("highlow-pipeline needs seeds or include_ones")
        if kind == "refined-lab" and self.example == "random" and not self.seeds:
            raise ConfigError("the random example needs explicit seeds")
        if kind == "strichartz-growth" and self.method == "count" and (self.seeds or not self.include_ones):
            raise ConfigError("the counting method applies to a_n = 1 only; use method quadrature")
        for key, limit in LIMITS.items():
            name, _, sub = key.partition("/")
            if name != kind:
                continue
            if sub and sub not in (self.method, self.mode, str(self.d)):
                continue
            sizes = self.R if kind in ("wavepacket-checks", "refined-lab") else self.N
            big = [n for n in sizes if n > limit]
            if big:
                raise ConfigError(f"infeasible size {big[0]} for {key}: the limit on this machine class is {limit}")


# ---------------------------------------------------------------- jobs


def _specs(cfg, N):
    out = [("ones", ExpSumSpec.ones(N))] if cfg["include_ones"] else []
    out += [(f"seed:{s}", ExpSumSpec.random_phase(N, s)) for s in cfg["seeds"]]
    return out


def _job_oracle(cfg, N):
    rows = []
    for label, spec in _specs(cfg, N):
        oracle = l2m_norm_by_counting(spec.coeffs, 3)
        quad = lp_power_mean(spec, 6)
        rel = abs(quad - oracle) / abs(oracle)
        rows.append({"N": N, "coefficients": label, "oracle": float(oracle), "quadrature": quad, "rel_error": rel, "passed": rel <= 1e-8})
        if N == 2 and label == "ones":
            rows[-1]["passed"] = rows[-1]["passed"] and oracle == 20
    return rows


def _job_growth(cfg, N):
    rows = []
    if cfg["method"] == "count":
        D = strichartz_ratio_ones(N)
        rows.append({"N": N, "coefficients": "ones", "D": D, "method": "count"})
    else:
        for label, spec in _specs(cfg, N):
            rows.append({"N": N, "coefficients": label, "D": strichartz_ratio(spec, 6), "method": "quadrature"})
    for r in rows:
        r["bound"] = 4 * max(math.log(N), 1.0) ** 3
        r["passed"] = r["D"] <= r["bound"]
    return rows


def _job_highlow(cfg, N, label):
    spec = ExpSumSpec.ones(N) if label == "ones" else ExpSumSpec.random_phase(N, int(label.split(":")[1]))
    rep = highlow_pipeline(spec, c=cfg["c"], tilde_c=cfg["tilde_c"], c_prime=cfg["c_prime"], bound_c=cfg["bound_c"], mode=cfg["mode"], p=cfg["p"])
    base = {"N": N, "coefficients": label, "mode": cfg["mode"]}
    rows = []
    for r in rep.rows:
        rows.append({**base, "table": "level_set", "alpha": r.alpha, "region_id": r.region_id, "points": r.points, "measured_mass": r.measured_mass, "bound": r.bound, "passed": r.passed})
    for r in rep.chain:
        rows.append({**base, "table": "low_chain", "alpha": r.alpha, "measured_mass": r.low_l6, "bound": r.chain_bound, "pointwise": r.pointwise, "passed": r.passed})
    for r in rep.pruning:
        rows.append({**base, "table": "pruning", "alpha": r.alpha, "level": r.level, "lambda": r.lam, "removed_packets": r.removed_packets, "removed_mass": r.removed_mass, "max_surviving_sup": r.max_surviving_sup, "passed": r.passed})
    rows.append({**base, "table": "partition", "deltas": list(rep.deltas), "epsilon": rep.epsilon, "passed": rep.partition_ok})
    return rows


def _job_wavepacket(cfg, R, seed):
    from .strichartz_lab import single_packet, tube_mass_fraction

    rng = np.random.default_rng(seed)
    s = math.isqrt(R)
    delta = 1.0 / s
    rows = []
    base = {"R": R, "seed": seed, "mode": cfg["mode"]}
    if cfg["mode"] == EXACT:
        p = cfg["p"]
        grid = GridSpec.exact(R, 2, p)
        F = ComplexField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
        D = decompose(F, delta)
        scale = F.sup_norm()
        rows.append({**base, "check": "reconstruction", "value": float(np.abs(D.reconstruct().samples - F.samples).max()) / scale, "tolerance": 1e-12})
        total = sum(D.packet_norms(c)[1].sum() for c in D.caps) + D.residual.l2_norm() ** 2
        rows.append({**base, "check": "parseval", "value": abs(total - F.l2_norm() ** 2) / F.l2_norm() ** 2, "tolerance": 1e-12})
        worst = 0.0
        for cap in D.caps:
            P = np.abs(D.cap_field(cap))
            lab = D.tube_labels(cap).ravel()
            _, inv = np.unique(lab, return_inverse=True)
            hi = np.zeros(inv.max() + 1)
            lo = np.full(inv.max() + 1, np.inf)
            np.maximum.at(hi, inv, P.ravel())
            np.minimum.at(lo, inv, P.ravel())
            worst = max(worst, float((hi - lo).max()))
        rows.append({**base, "check": "tube_constancy", "value": worst / scale, "tolerance": 1e-12})
        f = ComplexField(GridSpec.exact(R, 1, p), rng.normal(size=R) + 1j * rng.normal(size=R))
        E = schrodinger_evolve(f, np.arange(R))
        dev = max(abs(np.linalg.norm(E.samples[:, i]) - np.linalg.norm(f.samples)) for i in range(R)) / np.linalg.norm(f.samples)
        rows.append({**base, "check": "unitarity", "value": float(dev), "tolerance": 1e-12})
    else:
        L = 4 * s
        grid = GridSpec((float(L),), (2 * L,))
        k = np.arange(L)
        spec = np.zeros(2 * L, dtype=np.complex128)
        spec[k] = (rng.normal(size=L) + 1j * rng.normal(size=L)) * np.hanning(L + 2)[1:-1]
        f = ComplexField(grid, np.fft.ifft(spec) * 2 * L)
        E = schrodinger_evolve(f, np.arange(L * L), R=float(L * L))
        D = decompose(E, delta)
        recon = D.reconstruct().samples - D.residual.samples
        scale = E.sup_norm()
        rows.append({**base, "check": "reconstruction", "value": float(np.abs(recon - E.samples).max()) / scale, "tolerance": 1e-6})
        dev = max(abs(np.linalg.norm(E.samples[:, i]) - np.linalg.norm(f.samples)) for i in range(0, L * L, max(1, L * L // 64))) / np.linalg.norm(f.samples)
        rows.append({**base, "check": "unitarity", "value": float(dev), "tolerance": 1e-12})
        frac = tube_mass_fraction(single_packet(R))
        rows.append({**base, "check": "tube_mass_fraction", "value": frac, "tolerance": 0.9})
    for r in rows:
        r["passed"] = r["value"] >= r["tolerance"] if r["check"] == "tube_mass_fraction" else r["value"] <= r["tolerance"]
    return rows


def _job_refined(cfg, R, seed):
    from . import strichartz_lab as lab

    d = cfg["d"]
    ex = cfg["example"]
    base = {"R": R, "d": d, "example": ex}
    rows = []

    def add(report, **kw):
        row = {**base, **kw, "theorem": report.theorem, "sigma": report.sigma, "lambda_amp": report.lambda_amp, "lhs": report.lhs, "rhs": report.rhs, "ratio": report.ratio, "skipped": report.skipped}
        row.update({k: v for k, v in report.extra.items() if k not in row})
        rows.append(row)
        return row

    if ex == "random":
        rng = np.random.default_rng(seed)
        s = lab.cube_side(R)
        total = s**d * (4 * R // s) ** d
        W = cfg["W"] or int(rng.integers(s, max(s + 1, total // 4) + 1))
        tubes = lab.random_tube_set(R, min(W, total), seed, d=d)
        base["seed"] = seed
    elif ex == "bush":
        tubes = lab.bush_tubes(R, d=d)
    elif ex == "parallel":
        tubes = lab.parallel_example(R, d=d)
    else:
        tubes = lab.single_packet(R, d=d)

    exp = lab.TubeExperiment(tubes)
    if ex in ("parallel", "bush", "single"):
        data = lab.bush_data(R, d=d) if ex == "bush" else exp.data
        norms = lab.cube_power_sums(data, R)
        band = lab.predicted_bush_band(data, R) if cfg["band_policy"] == "predicted" or ex == "bush" else None
        rep = lab.refined_strichartz_check(data, R, band=band, norms=norms, policy="most_cubes" if cfg["band_policy"] == "most_cubes" else "max_ratio")
        row = add(rep, check="ratio_in_band")
        row["passed"] = (not rep.skipped) and 1 / 8 <= rep.ratio <= 8
    table = exp.table
    rows.append({**base, "check": "double_count", "W": tubes.W, "incidences": int(table.cubes_per_tube().sum()), "passed": bool(table.double_count_holds())})
    if d == 1:
        for rep in lab.refined_decoupling_sweep(exp):
            row = add(rep, check="refined_decoupling")
            row["passed"] = rep.skipped or rep.ratio <= 8
        sel = None
        if ex == "bush":
            bdata = exp.data
            sel = lab.select_comparable_cubes(exp.norms, lab.predicted_bush_band(bdata, R))
        ph = lab.pigeonhole_sigma(exp, sel)
        rows.append({**base, "check": "pigeonhole", "sigma": ph.sigma, "M": ph.M, "W": ph.W, "rho": ph.rho, "N": ph.N, "bound": ph.bound, "count_chain": ph.count_chain, "skipped": ph.skipped, "passed": ph.holds and ph.count_chain})
        K = cfg["K"] or lab.default_K(R)
        chain = [r for M in table.levels() for r in lab.bootstrap_chain(exp, M, K)]
        rows.append({**base, "check": "bootstrap_chain", "K": K, "instances": len(chain), "passed": all(r.holds for r in chain)})
    return rows


def _call(args):
    fn, a = args
    return fn(*a)


def _run_jobs(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_call, jobs))
    return [_call(j) for j in jobs]


def _plan(cfg: ExperimentConfig):
    c = cfg.to_dict()
    kind = cfg.experiment
    if kind == "oracle-verify":
        return [(_job_oracle, (c, N)) for N in cfg.N]
    if kind == "strichartz-growth":
        return [(_job_growth, (c, N)) for N in sorted(cfg.N)]
    if kind == "highlow-pipeline":
        labels = (["ones"] if cfg.include_ones else []) + [f"seed:{s}" for s in cfg.seeds]
        return [(_job_highlow, (c, N, lab)) for N in cfg.N for lab in labels]
    if kind == "wavepacket-checks":
        seeds = cfg.seeds or [cfg.seed]
        return [(_job_wavepacket, (c, R, s)) for R in cfg.R for s in seeds]
    seeds = cfg.seeds if cfg.example == "random" else [cfg.seed]
    return [(_job_refined, (c, R, s)) for R in cfg.R for s in seeds]


def _summary_extras(cfg, rows):
    out = {}
    if cfg.experiment == "strichartz-growth":
        groups = {}
        for r in rows:
            groups.setdefault(r["coefficients"], []).append((r["N"], r["D"]))
        fits = {}
        for label, pts in groups.items():
            pts.sort()
            if len(pts) >= 4 and pts[0][0] > 1:
                fits[label] = fit_growth(pts).as_dict()
            vals = [v for _, v in pts]
            if label == "ones":
                out["ones_monotone"] = all(b >= a for a, b in zip(vals, vals[1:]))
        out["fits"] = fits
    if cfg.experiment == "refined-lab":
        by_R = {}
        for r in rows:
            if r.get("check") == "ratio_in_band" and not r["skipped"]:
                by_R.setdefault(r["R"], []).append(r["ratio"])
        if len(by_R) >= 2:
            Rs = sorted(by_R)
            out["ratio_R_exponent"] = power_exponent(Rs, [max(by_R[R]) for R in Rs])
    return out


PLOTS = {
    "strichartz-growth": ("N", "D", "coefficients"),
    "oracle-verify": ("N", "rel_error", "coefficients"),
    "highlow-pipeline": ("alpha", "measured_mass", "region_id"),
    "wavepacket-checks": ("R", "value", "check"),
    "refined-lab": ("R", "ratio", "check"),
}


def run(cfg: ExperimentConfig):
    """Execute one experiment; returns (exit_code, paths)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    rows = [r for chunk in _run_jobs(_plan(cfg), cfg.workers) for r in chunk]
    failed = [i for i, r in enumerate(rows) if not r.get("passed", True)]
    extras = _summary_extras(cfg, rows)
    if extras.get("ones_monotone") is False:
        failed.append("ones_monotone")
    summary = {"passed": not failed, "checks": sum("passed" in r for r in rows), "failed": failed, **extras}
    header = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "generator": GENERATOR,
        "seed": cfg.seed,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t0)),
    }
    stem = out / cfg.experiment
    paths = [write_jsonl(stem.with_suffix(".jsonl"), header, rows, summary), write_csv(stem.with_suffix(".csv"), rows)]
    if cfg.plots:
        x, y, group = PLOTS[cfg.experiment]
        paths.append(plot_csv(paths[1], stem.with_suffix(".svg"), x, y, group, logy=cfg.experiment != "wavepacket-checks"))
    return (0 if not failed else 1), paths


# ---------------------------------------------------------------- argparse


def build_parser():
    ap = argparse.ArgumentParser(prog="decoupling-lab", description="Decoupling and Strichartz experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", type=Path, help="JSON config file; flags override its keys")
        sp.add_argument("--mode", choices=["real", "exact"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--N", type=int, nargs="*")
        sp.add_argument("--R", type=int, nargs="*")
        sp.add_argument("--seeds", type=int, nargs="*")
        sp.add_argument("--no-ones", dest="include_ones", action="store_false", default=None)
        sp.add_argument("--method", choices=["count", "quadrature"])
        sp.add_argument("--c", type=float)
        sp.add_argument("--tilde-c", dest="tilde_c", type=float)
        sp.add_argument("--c-prime", dest="c_prime", type=float)
        sp.add_argument("--bound-c", dest="bound_c", type=float)
        sp.add_argument("--p", type=int)
        sp.add_argument("--d", type=int, choices=[1, 2])
        sp.add_argument("--K", type=int)
        sp.add_argument("--example", choices=["parallel", "bush", "random", "single"])
        sp.add_argument("--W", type=int)
        sp.add_argument("--band-policy", dest="band_policy", choices=["max_ratio", "most_cubes", "predicted"])
        sp.add_argument("--workers", type=int)
        sp.add_argument("--plots", action="store_true", default=None)
    return ap


def config_from_args(ns) -> ExperimentConfig:
    raw = {}
    if ns.config is not None:
        try:
            raw = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if raw.get("experiment", ns.experiment) != ns.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {ns.experiment!r}")
    raw["experiment"] = ns.experiment
    names = {f.name for f in fields(ExperimentConfig)}
    for key, value in vars(ns).items():
        if key in names and value is not None and key != "experiment":
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    code, paths = run(cfg)
    for p in paths:
        print(p)
    print("PASS" if code == 0 else "FAIL")
    return code


if __name__ == "__main__":
    sys.exit(main())
