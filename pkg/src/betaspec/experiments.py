"""Experiment runners behind ``betaspec run``.

Realization ``i`` always draws from ``derive_stream(seed, i)``; blocks of
realizations may run in worker processes but results are gathered and
reduced in realization order, so outputs do not depend on ``workers``.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numba
import numpy as np
from scipy import stats as sps

from . import reporting
from .config import ExperimentConfig
from .ensemble import (
    _draw_operator,
    draw_gbe_arrays,
    householder_tridiagonalize,
    mean_operator,
    sample_gbe,
    sample_goe_dense,
    stream_gbe,
)
from .meanfield import hermite_u_sequence, hermite_zeros
from .numeric import derive_stream, log_gamma
from .recursion import (
    DEFAULT_TOL,
    _full_spectrum,
    char_poly_sequence,
    eigenvalues,
    eigenvector,
    forward_solution,
    nearest_eigenvalue,
    spectral_measure,
)
from .stats import (
    Histogram,
    density_compare,
    histogram_l1,
    ipr,
    n2_marginal_oracle,
    repulsion_exponent,
    unfold_and_spacings,
)
from .transfer import (
    decay_exponent,
    decay_target,
    growth_exponent,
    growth_target,
    lyapunov_theory,
    mean_log_b_theory,
    mean_log_D_theory,
    transfer_log_norms,
)

log = logging.getLogger(__name__)

BLOCK = 2000


@dataclass
class Check:
    name: str
    measured: object
    target: object
    tolerance: object
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "target": self.target,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "detail": self.detail,
        }


@dataclass
class ReportBundle:
    config: ExperimentConfig
    checks: list
    files: list
    wall_time: float
    out_dir: Path

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {
            "experiment": self.config.experiment,
            "config": self.config.to_dict(),
            "master_seed": self.config.seed,
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
            "wall_time_s": self.wall_time,
            "files": sorted(Path(f).name for f in self.files),
        }


def _within(name, measured, target, tol, **detail) -> Check:
    return Check(name, measured, target, tol, bool(abs(measured - target) <= tol), detail)


def map_realizations(fn, cfg: ExperimentConfig, count: int | None = None, block: int = BLOCK) -> list:
    """Apply ``fn(start, stop)`` over realization blocks; results in block order."""
    count = cfg.realizations if count is None else count
    if cfg.workers > 1:
        block = max(1, min(block, -(-count // cfg.workers)))
    ranges = [(s, min(s + block, count)) for s in range(0, count, block)]
    if cfg.workers <= 1 or len(ranges) == 1:
        return [fn(s, e) for s, e in ranges]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_call_range, [fn] * len(ranges), ranges))


def _call_range(fn, rng_range):
    return fn(*rng_range)


# ---------------------------------------------------------------------------
# per-block workers (top level so they pickle)
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _sampled_spectrum(gen, beta, N, a, b, tol, out):
    # one compiled call per realization: generator unboxing dominates at small N
    _draw_operator(gen, beta, N, a, b)
    _full_spectrum(a, b, tol, out)


def spectra_block(beta, N, seed, start, stop, tol=DEFAULT_TOL):
    """Sorted spectra of realizations ``start..stop-1``, one row each."""
    out = np.empty((stop - start, N))
    a = np.empty(N)
    b = np.empty(N - 1)
    for r, i in enumerate(range(start, stop)):
        _sampled_spectrum(derive_stream(seed, i).generator, float(beta), N, a, b, tol, out[r])
    return out


def _lyapunov_block(beta, det_n, x_n, lam, seed, start, stop):
    rows = np.empty((stop - start, 2))
    for r, i in enumerate(range(start, stop)):
        base = derive_stream(seed, i)
        op = sample_gbe(beta, det_n, base)
        rows[r, 0] = char_poly_sequence(op, lam).log_abs(det_n)
        x = forward_solution(stream_gbe(beta, base.spawn(1)[0]), lam, x_n)
        rows[r, 1] = x.log_abs(x_n + 1)
    return rows


def _transfer_block(beta, lam, checkpoints, seed, start, stop):
    out = np.empty((stop - start, len(checkpoints)))
    for r, i in enumerate(range(start, stop)):
        res = transfer_log_norms(stream_gbe(beta, derive_stream(seed, i)), lam, checkpoints)
        out[r] = res[:, 1]
    return out


def _eigvec_block(beta, N, growth_n, lam, fit_lo, growth_hi, ratio, seed, start, stop):
    # lambda_k, peak site, decay window start, decay slope, growth slope
    rows = np.full((stop - start, 5), np.nan)
    for r, i in enumerate(range(start, stop)):
        base = derive_stream(seed, i)
        op = sample_gbe(beta, N, base)
        lk = nearest_eigenvalue(op, lam)
        v = eigenvector(op, lk)
        peak = int(np.argmax(v * v)) + 1
        lo = max(peak, fit_lo)
        rows[r, :3] = lk, peak, lo
        if N >= ratio * lo:
            rows[r, 3] = decay_exponent(v, (lo, N)).slope
        x = forward_solution(stream_gbe(beta, base.spawn(1)[0]), lam, growth_n)
        rows[r, 4] = decay_exponent(x, (fit_lo, growth_hi)).slope
    return rows


def _ipr_block(beta, N, seed, halfwidth, start, stop):
    vals = []
    for i in range(start, stop):
        op = sample_gbe(beta, N, derive_stream(seed, i))
        for lk in eigenvalues(op, (-halfwidth, halfwidth)):
            vals.append(ipr(eigenvector(op, lk)))
    return np.asarray(vals)


def _goe_block(N, seed, start, stop):
    tri = np.empty((stop - start, N))
    dense = np.empty((stop - start, N))
    coup = np.empty((stop - start, N - 1))
    for r, i in enumerate(range(start, stop)):
        base = derive_stream(seed, i)
        a, b = draw_gbe_arrays(base.generator, 1.0, N)
        _full_spectrum(a, b, DEFAULT_TOL, tri[r])
        d, e = householder_tridiagonalize(sample_goe_dense(N, base.spawn(1)[0]))
        _full_spectrum(d, e, DEFAULT_TOL, dense[r])
        coup[r] = e
    return tri, dense, coup


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _spectra(cfg, beta, N=None):
    N = cfg.n if N is None else N
    fn = partial(spectra_block, beta, N, cfg.seed)
    return np.concatenate(map_realizations(fn, cfg))


def exp_density(cfg, out):
    checks, files = [], []
    for beta in cfg.beta:
        eigs = _spectra(cfg, beta)
        hist, l1 = density_compare(list(eigs), beta, cfg.n, cfg.bins)
        files.append(reporting.write_csv(out / f"density_{reporting.beta_tag(beta)}.csv", ["bin_left", "bin_right", "density"], hist.rows()))
        checks.append(Check(f"semicircle_l1[{reporting.beta_tag(beta)}]", l1, 0.0, 0.05, l1 <= 0.05, {"beta": beta}))
    return checks, files


def exp_spacing(cfg, out):
    checks, files = [], []
    for beta in cfg.beta:
        eigs = _spectra(cfg, beta)
        per = [unfold_and_spacings(e, beta, cfg.n, cfg.central_fraction) for e in eigs]
        s = np.concatenate(per)
        means = np.array([p.mean() for p in per])
        edges = np.linspace(0.0, 4.0, cfg.bins + 1)
        counts, _ = np.histogram(s, edges)
        hist = Histogram(edges, counts, s.size)
        files.append(reporting.write_csv(out / f"spacing_{reporting.beta_tag(beta)}.csv", ["bin_left", "bin_right", "density"], hist.rows()))
        tag = reporting.beta_tag(beta)
        checks.append(_within(f"mean_spacing[{tag}]", float(s.mean()), 1.0, 0.05, beta=beta, spacings=int(s.size),
                              per_realization_range=[float(means.min()), float(means.max())]))
    return checks, files


def repulsion_tolerance(beta: float) -> float:
    return max(0.2, 0.1 * beta)


def exp_repulsion(cfg, out):
    checks, files = [], []
    for beta in cfg.beta:
        eigs = _spectra(cfg, beta)
        s = np.concatenate([unfold_and_spacings(e, beta, cfg.n, cfg.central_fraction) for e in eigs])
        fit = repulsion_exponent(s, cfg.quantile_cut)
        edges = np.linspace(0.0, 4.0, cfg.bins + 1)
        counts, _ = np.histogram(s, edges)
        files.append(reporting.write_csv(out / f"spacing_{reporting.beta_tag(beta)}.csv", ["bin_left", "bin_right", "density"], Histogram(edges, counts, s.size).rows()))
        checks.append(_within(f"repulsion_exponent[{reporting.beta_tag(beta)}]", fit.slope, beta, repulsion_tolerance(beta), fit=fit.to_dict(), spacings=int(s.size)))
    return checks, files


def exp_lyapunov(cfg, out):
    checks, files = [], []
    for beta in cfg.beta:
        tag = reporting.beta_tag(beta)
        fn = partial(_lyapunov_block, beta, cfg.det_n, cfg.n, cfg.lam, cfg.seed)
        rows = np.concatenate(map_realizations(fn, cfg))
        files.append(reporting.write_csv(
            out / f"lyapunov_{tag}.csv",
            ["realization", "log_abs_D", "log_abs_x"],
            [(i, r[0], r[1]) for i, r in enumerate(rows)],
        ))
        d_mc = float(rows[:, 0].mean() / cfg.det_n)
        checks.append(_within(f"mean_log_D[{tag}]", d_mc, mean_log_D_theory(beta, cfg.det_n), 0.05, n=cfg.det_n))
        lx = rows[:, 1]
        lyap = float(-lx.mean() / cfg.n)
        se = float(lx.std(ddof=1) / math.sqrt(lx.size) / cfg.n) if lx.size > 1 else math.inf
        target = lyapunov_theory(beta, cfg.n)
        checks.append(_within(f"lyapunov[{tag}]", lyap, target, 3.0 * se, n=cfg.n, stderr=se, z=(lyap - target) / se if se > 0 else None))
        exact = mean_log_b_theory(beta, cfg.n, "exact")
        asym = mean_log_b_theory(beta, cfg.n, "asymptotic")
        checks.append(_within(f"mean_log_b_exact_vs_asymptotic[{tag}]", exact, asym, 2e-3, n=cfg.n))
    return checks, files


def default_checkpoints(n_max: int, per_decade: int = 10, first: int = 10) -> np.ndarray:
    top = math.log10(n_max)
    lo = math.log10(min(first, n_max))
    pts = np.unique(np.round(np.logspace(lo, top, int(round((top - lo) * per_decade)) + 1)).astype(np.int64))
    return pts


def exp_transfer_growth(cfg, out):
    checks, files = [], []
    ck = np.asarray(cfg.checkpoints if cfg.checkpoints else default_checkpoints(cfg.n), dtype=np.int64)
    window = cfg.fit_window or (100, int(ck[-1]))
    for beta in cfg.beta:
        tag = reporting.beta_tag(beta)
        fn = partial(_transfer_block, beta, cfg.lam, ck, cfg.seed)
        norms = np.concatenate(map_realizations(fn, cfg, block=50))
        files.append(reporting.write_csv(
            out / f"transfer_{tag}.csv",
            ["realization", "n", "log_norm"],
            ((i, int(n), v) for i, row in enumerate(norms) for n, v in zip(ck, row)),
        ))
        fit = growth_exponent([np.column_stack([ck, row]) for row in norms], window)
        checks.append(_within(f"growth_exponent[{tag}]", fit.slope, growth_target(beta), 0.1, fit=fit.to_dict(), window=list(window)))
    return checks, files


def exp_eigvec_decay(cfg, out):
    checks, files = [], []
    fit_lo, growth_hi = cfg.fit_window or (100, cfg.growth_n)
    growth_hi = min(growth_hi, cfg.growth_n)
    for beta in cfg.beta:
        tag = reporting.beta_tag(beta)
        fn = partial(_eigvec_block, beta, cfg.n, cfg.growth_n, cfg.lam, fit_lo, growth_hi, cfg.min_window_ratio, cfg.seed)
        rows = np.concatenate(map_realizations(fn, cfg, block=25))
        files.append(reporting.write_csv(
            out / f"eigvec_{tag}.csv",
            ["realization", "lambda", "peak", "window_start", "decay_slope", "growth_slope"],
            [(i, r[0], int(r[1]), int(r[2]), r[3], r[4]) for i, r in enumerate(rows)],
        ))
        # component dump of the first realization's eigenvector
        op = sample_gbe(beta, cfg.n, derive_stream(cfg.seed, 0))
        v = eigenvector(op, rows[0, 0])
        files.append(reporting.write_csv(out / f"eigvec_components_{tag}.csv", ["k", "n", "component"], ((0, n + 1, c) for n, c in enumerate(v))))
        dec = rows[~np.isnan(rows[:, 3]), 3]
        used = int(dec.size)
        if used >= 2:
            d_mean = float(dec.mean())
            d_se = float(dec.std(ddof=1) / math.sqrt(used))
            checks.append(_within(f"decay_exponent[{tag}]", d_mean, decay_target(beta), 0.3, stderr=d_se, used=used, skipped=int(rows.shape[0] - used)))
        else:
            checks.append(Check(f"decay_exponent[{tag}]", None, decay_target(beta), 0.3, False, {"used": used}))
        g = rows[:, 4]
        g_se = float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else 0.0
        checks.append(_within(f"forward_growth_exponent[{tag}]", float(g.mean()), growth_target(beta), 0.15, stderr=g_se, window=[fit_lo, growth_hi]))
    return checks, files


def exp_mean_hamiltonian(cfg, out):
    checks, files = [], []
    for beta in cfg.beta:
        tag = reporting.beta_tag(beta)
        worst = 0.0
        for N in range(1, cfg.n + 1):
            lam = eigenvalues(mean_operator(beta, N))
            worst = max(worst, float(np.max(np.abs(lam - math.sqrt(beta) * hermite_zeros(N)))))
        checks.append(Check(f"hermite_zero_match[{tag}]", worst, 0.0, 1e-10, worst <= 1e-10, {"N_max": cfg.n}))
        prop = hermite_proportionality(beta, min(30, cfg.n))
        checks.append(Check(f"hermite_proportionality[{tag}]", prop, 0.0, 1e-9, prop <= 1e-9, {"n_max": min(30, cfg.n)}))
        sm = spectral_measure(mean_operator(beta, cfg.n))
        files.append(reporting.write_csv(out / f"mean_spectrum_{tag}.csv", ["k", "lambda", "weight"], ((k, l, w) for k, (l, w) in enumerate(sm.points))))
    return checks, files


def hermite_proportionality(beta: float, n_max: int, lambdas=(0.3, 1.1, -2.0)) -> float:
    """Largest relative deviation of ``x_{m+1} u_0 / u_m`` from 1 over ``m <= n_max``.

    Sites where ``|u_m|`` is below 1e-3 of its running maximum are skipped,
    the ratio being ill-conditioned next to a node.
    """
    op = mean_operator(beta, n_max + 1)
    worst = 0.0
    for lam in lambdas:
        x = forward_solution(op, lam * math.sqrt(beta), n_max).values()[1 : n_max + 2]
        u = hermite_u_sequence(n_max, lam)
        ok = np.abs(u) >= 1e-3 * np.maximum.accumulate(np.abs(u))
        dev = np.abs(x[ok] * u[0] / u[ok] - 1.0)
        worst = max(worst, float(dev.max()))
    return worst


def n2_bin_mass(beta: float, edges: np.ndarray, sub: int = 8) -> np.ndarray:
    """Oracle probability of each bin by composite Simpson on the N = 2 marginal."""
    grid = np.linspace(edges[0], edges[-1], (len(edges) - 1) * 2 * sub + 1)
    dens = n2_marginal_oracle(beta, grid)
    h = grid[1] - grid[0]
    k = 2 * sub
    mass = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        seg = dens[i * k : (i + 1) * k + 1]
        mass[i] = h / 3.0 * (seg[0] + seg[-1] + 4.0 * seg[1:-1:2].sum() + 2.0 * seg[2:-1:2].sum())
    return mass


def exp_n2_oracle(cfg, out):
    checks, files = [], []
    edges = np.linspace(-4.0, 4.0, cfg.bins + 1)
    for beta in cfg.beta:
        tag = reporting.beta_tag(beta)
        eigs = _spectra(cfg, beta, N=2).reshape(-1)
        counts, _ = np.histogram(eigs, edges)
        hist = Histogram(edges, counts, eigs.size)
        mass = n2_bin_mass(beta, edges)
        l1 = histogram_l1(hist, mass)
        files.append(reporting.write_csv(out / f"n2_hist_{tag}.csv", ["bin_left", "bin_right", "density"], hist.rows()))
        files.append(reporting.write_csv(
            out / f"n2_oracle_{tag}.csv",
            ["bin_left", "bin_right", "density"],
            ((edges[i], edges[i + 1], mass[i] / (edges[i + 1] - edges[i])) for i in range(len(mass))),
        ))
        checks.append(Check(f"n2_l1[{tag}]", l1, 0.0, 0.02, l1 <= 0.02, {"eigenvalues": int(eigs.size)}))
    return checks, files


def exp_ipr_scan(cfg, out):
    medians, counts = [], []
    for beta in cfg.beta:
        half = 0.2 * math.sqrt(2.0 * beta * cfg.n)
        fn = partial(_ipr_block, beta, cfg.n, cfg.seed, half)
        vals = np.concatenate(map_realizations(fn, cfg, block=25))
        medians.append(float(np.median(vals)))
        counts.append(int(vals.size))
    files = [reporting.write_csv(out / "ipr.csv", ["beta", "median_ipr", "count"], zip(cfg.beta, medians, counts))]
    order = np.argsort(cfg.beta)
    med = np.asarray(medians)[order]
    ok = bool(np.all(np.diff(med) < 0))
    return [Check("ipr_strictly_decreasing", medians, "decreasing in beta", None, ok, {"beta": list(cfg.beta), "counts": counts})], files


def exp_goe_crosscheck(cfg, out):
    N = cfg.n
    blocks = map_realizations(partial(_goe_block, N, cfg.seed), cfg, block=500)
    tri = np.concatenate([b[0] for b in blocks])
    dense = np.concatenate([b[1] for b in blocks])
    coup = np.concatenate([b[2] for b in blocks])
    ks = sps.ks_2samp(tri.reshape(-1), dense.reshape(-1))
    checks = [Check("ks_two_sample", float(ks.pvalue), ">= 0.01", 0.01, bool(ks.pvalue >= 0.01), {"statistic": float(ks.statistic)})]
    # pooled eigenvalues are strongly correlated within a realization; single
    # ranks (one value per realization) give an independent-sample KS as well
    for k in (N // 4, N - 1):
        kk = sps.ks_2samp(tri[:, k], dense[:, k])
        checks.append(Check(f"ks_rank_{k + 1}", float(kk.pvalue), ">= 0.01", 0.01, bool(kk.pvalue >= 0.01), {"statistic": float(kk.statistic)}))
    # Householder couplings come out in the mirrored order: position j carries chi parameter N - j
    k = (N - np.arange(1, N)).astype(float)
    mean_th = np.exp(log_gamma((k + 1) / 2) - log_gamma(k / 2))
    var_th = k / 2 - mean_th ** 2
    z = (coup.mean(axis=0) - mean_th) / np.sqrt(var_th / coup.shape[0])
    zmax = float(np.max(np.abs(z)))
    checks.append(Check("coupling_means_z", zmax, 0.0, 4.0, zmax <= 4.0))
    # first four moments of the pooled empirical spectral density
    for p in (1, 2, 3, 4):
        ta, da = (tri ** p).mean(axis=1), (dense ** p).mean(axis=1)
        se = math.sqrt(ta.var(ddof=1) / ta.size + da.var(ddof=1) / da.size)
        zp = float((ta.mean() - da.mean()) / se)
        checks.append(Check(f"spectral_moment_{p}_z", zp, 0.0, 4.0, abs(zp) <= 4.0))
    edges = np.linspace(-12.0, 12.0, 61)
    rows = []
    ht, _ = np.histogram(tri, edges)
    hd, _ = np.histogram(dense, edges)
    w = np.diff(edges)
    for i in range(len(w)):
        rows.append((edges[i], edges[i + 1], ht[i] / (tri.size * w[i]), hd[i] / (dense.size * w[i])))
    files = [reporting.write_csv(out / "goe_crosscheck.csv", ["bin_left", "bin_right", "density_tridiagonal", "density_dense"], rows)]
    return checks, files


RUNNERS = {
    "density": exp_density,
    "spacing": exp_spacing,
    "repulsion": exp_repulsion,
    "lyapunov": exp_lyapunov,
    "transfer-growth": exp_transfer_growth,
    "eigvec-decay": exp_eigvec_decay,
    "mean-hamiltonian": exp_mean_hamiltonian,
    "n2-oracle": exp_n2_oracle,
    "ipr-scan": exp_ipr_scan,
    "goe-crosscheck": exp_goe_crosscheck,
}


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Run one experiment, write its CSV files and ``summary.json`` into ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log.info("running %s (seed=%d, realizations=%d)", cfg.experiment, cfg.seed, cfg.realizations)
    checks, files = RUNNERS[cfg.experiment](cfg, out)
    bundle = ReportBundle(cfg, checks, files, time.perf_counter() - t0, out)
    bundle.files.append(reporting.write_json(out / "summary.json", bundle.summary()))
    return bundle
