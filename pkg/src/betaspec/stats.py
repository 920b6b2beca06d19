"""Ensemble statistics: semicircle density, unfolded spacings, level repulsion, IPR.

Also holds the two-level quadrature oracle: the exact one-point density
of the joint eigenvalue law at ``N = 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureError
from .meanfield import integrated_semicircle
from .transfer import FitResult, fit_line

__all__ = [
    "Histogram",
    "density_compare",
    "unfold_and_spacings",
    "repulsion_exponent",
    "ipr",
    "n2_marginal_oracle",
    "histogram_l1",
]


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise ValueError("need len(counts) == len(edges) - 1")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density(self) -> np.ndarray:
        """Counts normalized by ``total`` and bin width."""
        return self.counts / (self.total * self.widths)

    def rows(self):
        d = self.density()
        return [(self.edges[i], self.edges[i + 1], d[i]) for i in range(len(self.counts))]


def _histogram(values: np.ndarray, edges: np.ndarray) -> Histogram:
    counts, _ = np.histogram(values, bins=edges)
    # mass outside the binned range still counts toward the total
    return Histogram(edges, counts.astype(np.int64), int(values.size))


def histogram_l1(hist: Histogram, bin_mass: np.ndarray) -> float:
    """L1 distance between empirical and reference per-bin probabilities.

    Mass falling outside the binned range on either side is lumped into
    one extra cell.
    """
    emp = hist.counts / hist.total
    ref = np.asarray(bin_mass, dtype=float)
    outside = abs((1.0 - float(np.sum(emp))) - (1.0 - float(np.sum(ref))))
    return float(np.sum(np.abs(emp - ref)) + outside)


def density_compare(eigs, beta: float, N: int, bins: int = 60) -> tuple[Histogram, float]:
    """Histogram of ``lambda / sqrt(2 beta N)`` on ``[-1.1, 1.1]`` and its L1 distance to the semicircle."""
    batches = [np.asarray(e, dtype=float).reshape(-1) for e in eigs]
    if not batches or sum(b.size for b in batches) == 0:
        raise ValueError("no eigenvalues given")
    mu = np.concatenate(batches) / math.sqrt(2.0 * beta * N)
    edges = np.linspace(-1.1, 1.1, bins + 1)
    hist = _histogram(mu, edges)
    mass = np.diff(integrated_semicircle(edges))
    return hist, histogram_l1(hist, mass)


def unfold_and_spacings(eigs, beta: float, N: int, central_fraction: float = 0.5) -> np.ndarray:
    """Spacings of ``N * F(lambda / sqrt(2 beta N))`` inside the central part of the band.

    ``F`` is the cumulative semicircle; the central fraction is taken by
    eigenvalue rank.
    """
    lam = np.sort(np.asarray(eigs, dtype=float).reshape(-1))
    if N < 4:
        raise ValueError("need N >= 4")
    if not 0 < central_fraction <= 1:
        raise ValueError("central_fraction must lie in (0, 1]")
    unf = N * integrated_semicircle(lam / math.sqrt(2.0 * beta * N))
    keep = int(round(central_fraction * lam.size))
    start = (lam.size - keep) // 2
    return np.diff(unf[start : start + keep])


def repulsion_exponent(spacings, quantile_cut: float = 0.002, skip: int = 10) -> FitResult:
    """Small-spacing exponent from the empirical CDF.

    Fits ``log CDF(s)`` against ``log s`` over the spacings below the
    ``quantile_cut`` quantile (the ``skip`` smallest are dropped as too
    noisy) and returns ``slope - 1``, since ``CDF ~ s**(beta + 1)``.
    """
    s = np.sort(np.asarray(spacings, dtype=float).reshape(-1))
    if s.size < 10**4:
        raise ValueError(f"need at least 10**4 spacings, got {s.size}")
    if not 0 < quantile_cut < 1:
        raise ValueError("quantile_cut must lie in (0, 1)")
    m = int(quantile_cut * s.size)
    if m - skip < 10:
        raise ValueError("too few spacings below the quantile cut")
    cdf = np.arange(1, s.size + 1) / s.size
    body = slice(skip, m)
    if np.any(s[body] <= 0):
        raise ValueError("non-positive spacings in the fit range")
    fit = fit_line(np.log(s[body]), np.log(cdf[body]))
    return FitResult(fit.slope - 1.0, fit.intercept, fit.stderr, fit.points)


def ipr(v) -> float:
    """Inverse participation ratio ``sum v_n**4`` of a unit vector."""
    v = np.asarray(v, dtype=float)
    if abs(float(np.dot(v, v)) - 1.0) > 1e-8:
        raise ValueError("ipr needs a unit-norm vector")
    return float(np.sum(v ** 4))


def n2_marginal_oracle(beta: float, grid) -> np.ndarray:
    """One-eigenvalue density of the ``N = 2`` joint law ``exp(-(l^2+m^2)/2) |l - m|**beta``.

    The numerator integral over the partner eigenvalue is split at the
    singular point; the normalization is a separate two-dimensional
    quadrature.
    """
    grid = np.asarray(grid, dtype=float)

    def weight(mu, lam):
        return math.exp(-0.5 * (lam * lam + mu * mu)) * abs(lam - mu) ** beta

    def numerator(lam):
        total = 0.0
        for lo, hi in ((-np.inf, lam), (lam, np.inf)):
            val, err = integrate.quad(weight, lo, hi, args=(lam,), epsabs=1e-13, epsrel=1e-11, limit=200)
            if not np.isfinite(val) or err > 1e-9:
                raise QuadratureError(f"numerator quadrature at {lam} did not converge (err={err:.2e})")
            total += val
        return total

    # symmetric in the two eigenvalues: integrate the ordered half mu < lam
    z, zerr = integrate.dblquad(
        lambda mu, lam: weight(mu, lam),
        -np.inf,
        np.inf,
        -np.inf,
        lambda lam: lam,
        epsabs=1e-13,
        epsrel=1e-11,
    )
    z *= 2.0
    if not np.isfinite(z) or zerr > 1e-9 * max(z, 1.0):
        raise QuadratureError(f"normalization quadrature did not converge (err={zerr:.2e})")
    return np.array([numerator(x) for x in grid.reshape(-1)]).reshape(grid.shape) / z
