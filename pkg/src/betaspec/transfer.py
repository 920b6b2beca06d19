"""Transfer-matrix products, exponent fits and the Lyapunov theory.

The one-step matrix ``S_n = [[(lam - a_n)/b_n, -b_{n-1}/b_n], [1, 0]]``
maps ``(x_n, x_{n-1})`` to ``(x_{n+1}, x_n)``.  Products are renormalized
after every step and the discarded scale is accumulated in log form.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .ensemble import CoefficientStream
from .numeric import digamma
from .recursion import LogSignedSequence

__all__ = [
    "FitResult",
    "TransferAccumulator",
    "step_matrix",
    "transfer_log_norms",
    "growth_exponent",
    "growth_target",
    "decay_target",
    "mean_log_b_theory",
    "mean_log_D_theory",
    "lyapunov_theory",
    "decay_exponent",
    "fit_line",
    "CHUNK",
]

CHUNK = 1 << 16


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    points: int

    def to_dict(self) -> dict:
        return {k: float(v) if k != "points" else int(v) for k, v in asdict(self).items()}


def fit_line(x, y) -> FitResult:
    """Ordinary least squares ``y = slope x + intercept`` with the slope's standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 points for a fit, got {n}")
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("fit abscissae are all equal")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (slope * x + intercept)
    stderr = math.sqrt(max(float(np.sum(resid * resid)), 0.0) / (n - 2) / sxx)
    return FitResult(slope, intercept, stderr, n)


def growth_target(beta: float) -> float:
    """Growth exponent ``1/beta - 1/2`` of ``||T_n||^2`` in ``n``."""
    return 1.0 / beta - 0.5


def decay_target(beta: float) -> float:
    """Exponent ``-(1/2 + 1/beta)`` of the decaying solution's ``|y_n|^2``."""
    return -(0.5 + 1.0 / beta)


# ---------------------------------------------------------------------------
# transfer matrices
# ---------------------------------------------------------------------------


def step_matrix(a_n: float, b_n: float, b_prev: float, lam: float) -> np.ndarray:
    if not (b_n > 0 and b_prev > 0):
        raise ValueError("couplings must be positive")
    return np.array([[(lam - a_n) / b_n, -b_prev / b_n], [1.0, 0.0]])


@numba.njit(cache=True)
def _norm2(m00, m01, m10, m11):
    f = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11
    det = m00 * m11 - m01 * m10
    disc = f * f - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return math.sqrt(0.5 * (f + math.sqrt(disc)))


@numba.njit(cache=True)
def _transfer_kernel(a, b, lam, state, first_step, checkpoints, ci, out):
    # state = [m00, m01, m10, m11, log_norm, b_prev]; returns next checkpoint slot
    m00, m01, m10, m11, log_norm, b_prev = state[0], state[1], state[2], state[3], state[4], state[5]
    n_ck = checkpoints.shape[0]
    for i in range(a.shape[0]):
        bn = b[i]
        s00 = (lam - a[i]) / bn
        s01 = -b_prev / bn
        n00 = s00 * m00 + s01 * m10
        n01 = s00 * m01 + s01 * m11
        m10 = m00
        m11 = m01
        m00 = n00
        m01 = n01
        nrm = _norm2(m00, m01, m10, m11)
        m00 /= nrm
        m01 /= nrm
        m10 /= nrm
        m11 /= nrm
        log_norm += math.log(nrm)
        b_prev = bn
        step = first_step + i
        while ci < n_ck and checkpoints[ci] == step:
            out[ci] = log_norm
            ci += 1
    state[0], state[1], state[2], state[3], state[4], state[5] = m00, m01, m10, m11, log_norm, b_prev
    return ci


class TransferAccumulator:
    """Running product ``T_n = S_n ... S_1`` kept as unit-norm ``m`` times ``exp(log_norm)``."""

    def __init__(self, lam: float = 0.0, b0: float = 1.0):
        self.lam = float(lam)
        self._state = np.array([1.0, 0.0, 0.0, 1.0, 0.0, float(b0)])
        self.b0 = float(b0)
        self.steps = 0

    @property
    def m(self) -> np.ndarray:
        return self._state[:4].reshape(2, 2).copy()

    @property
    def log_norm(self) -> float:
        return float(self._state[4])

    @property
    def b_prev(self) -> float:
        return float(self._state[5])

    def push(self, a, b, checkpoints=None) -> np.ndarray:
        """Multiply in the steps for coefficient arrays ``a``, ``b``.

        Returns ``log ||T_n||`` at those ``checkpoints`` that fall inside
        this batch (step counts are absolute).
        """
        a = np.ascontiguousarray(np.atleast_1d(np.asarray(a, dtype=float)))
        b = np.ascontiguousarray(np.atleast_1d(np.asarray(b, dtype=float)))
        if a.shape != b.shape:
            raise ValueError("a and b must have equal length")
        if np.any(b <= 0):
            raise ValueError("couplings must be positive")
        ck = np.empty(0, dtype=np.int64) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
        out = np.full(ck.size, np.nan)
        ci = int(np.searchsorted(ck, self.steps + 1))
        _transfer_kernel(a, b, self.lam, self._state, self.steps + 1, ck, ci, out)
        self.steps += a.size
        return out

    def log_norm_total(self) -> float:
        """``log ||T_n||_2``."""
        m = self._state
        return float(m[4] + math.log(_norm2(m[0], m[1], m[2], m[3])))

    def log_abs_det(self) -> float:
        m = self._state
        return float(math.log(abs(m[0] * m[3] - m[1] * m[2])) + 2.0 * m[4])

    def apply_log(self, v0=(1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
        """Signs and log-magnitudes of ``T_n v0`` (``v0 = (x_1, x_0)`` by default)."""
        w = self.m @ np.asarray(v0, dtype=float)
        with np.errstate(divide="ignore"):
            return np.sign(w), np.log(np.abs(w)) + self.log_norm


def transfer_log_norms(stream: CoefficientStream, lam: float, checkpoints) -> np.ndarray:
    """``(n, log ||T_n||)`` rows at increasing step counts ``checkpoints``.

    Consumes ``max(checkpoints)`` sites from ``stream`` in chunks.
    """
    ck = np.asarray(checkpoints, dtype=np.int64)
    if ck.ndim != 1 or ck.size == 0:
        raise ValueError("checkpoints must be a non-empty 1-d array")
    if np.any(np.diff(ck) <= 0) or ck[0] < 1:
        raise ValueError("checkpoints must be strictly increasing positive integers")
    if ck[-1] > 10**7:
        raise ValueError("checkpoints above 10**7 are not supported")
    acc = TransferAccumulator(lam)
    out = np.empty(ck.size)
    remaining = int(ck[-1])
    while remaining > 0:
        take = min(CHUNK, remaining)
        a, b = stream.take(take)
        got = acc.push(a, b, ck)
        mask = ~np.isnan(got)
        out[mask] = got[mask]
        remaining -= take
    return np.column_stack([ck.astype(float), out])


def growth_exponent(samples, fit_window) -> FitResult:
    """Slope of the realization-mean ``log ||T_n||^2`` against ``log n``.

    Every sample is an ``(n, log ||T_n||)`` array on the same checkpoints.
    ``stderr`` is the realization-to-realization scatter of the per-sample
    slopes; with a single sample it is the regression error.
    """
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise ValueError("no samples")
    n = samples[0][:, 0]
    lo, hi = fit_window
    sel = (n >= lo) & (n <= hi)
    pts = int(np.count_nonzero(sel))
    if pts < 3:
        raise ValueError(f"need at least 3 checkpoints inside {fit_window}, got {pts}")
    x = np.log(n[sel])
    ys = np.array([2.0 * s[sel, 1] for s in samples])
    mean_fit = fit_line(x, ys.mean(axis=0))
    if len(samples) == 1:
        return mean_fit
    slopes = np.array([fit_line(x, y).slope for y in ys])
    stderr = float(np.std(slopes, ddof=1) / math.sqrt(len(samples)))
    return FitResult(mean_fit.slope, mean_fit.intercept, stderr, pts)


# ---------------------------------------------------------------------------
# Lyapunov theory
# ---------------------------------------------------------------------------


def mean_log_b_theory(beta: float, n: int, mode: str = "exact") -> float:
    """``(1/n) sum_{m<=n} E[log b_m]``.

    ``exact`` sums ``psi(beta m / 2) / 2``; ``asymptotic`` returns
    ``(log(n beta/2) - 1 + (1/2 - 1/beta) log(n)/n) / 2``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if mode == "exact":
        m = np.arange(1, n + 1, dtype=float)
        return float(0.5 * np.sum(digamma(beta * m / 2.0)) / n)
    if mode == "asymptotic":
        return 0.5 * (math.log(n * beta / 2.0) - 1.0 + (0.5 - 1.0 / beta) * math.log(n) / n)
    raise ValueError(f"unknown mode {mode!r}")


def mean_log_D_theory(beta: float, n: int) -> float:
    """Leading-order ``(1/n) E[log|D_n(lam)|]`` for ``|lam|`` well inside the bulk."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return 0.5 * (math.log(n * beta / 2.0) - 1.0)


def lyapunov_theory(beta: float, n: int) -> float:
    """``(1/2)(1/2 - 1/beta) log(n) / n``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return 0.5 * (0.5 - 1.0 / beta) * math.log(n) / n


# ---------------------------------------------------------------------------
# envelope fits
# ---------------------------------------------------------------------------


def _trace_logsq(trace):
    if isinstance(trace, LogSignedSequence):
        return trace.indices.astype(float), 2.0 * trace.logmags
    v = np.asarray(trace, dtype=float).reshape(-1)
    with np.errstate(divide="ignore"):
        return np.arange(1, v.size + 1, dtype=float), np.log(v * v)


def decay_exponent(trace, fit_window, bins: int = 12) -> FitResult:
    """Power-law exponent of ``|v_n|^2`` over ``fit_window = (lo, hi)``.

    The window is cut into ``bins`` logarithmic blocks; the maximum of
    ``log|v_n|^2`` in each block (placed at its own ``log n``) is fitted
    by least squares, which rides over the oscillation zeros.
    """
    n, lv = _trace_logsq(trace)
    lo, hi = int(fit_window[0]), int(fit_window[1])
    sel = (n >= lo) & (n <= hi)
    if np.count_nonzero(sel) < 10:
        raise ValueError(f"window {fit_window} holds fewer than 10 points")
    n, lv = n[sel], lv[sel]
    if not np.any(np.isfinite(lv)):
        raise ValueError("trace is identically zero on the fit window")
    edges = np.unique(np.round(np.geomspace(n[0], n[-1] + 1, bins + 1)))
    xs, ys = [], []
    for left, right in zip(edges[:-1], edges[1:]):
        blk = (n >= left) & (n < right) & np.isfinite(lv)
        if np.any(blk):
            k = np.argmax(np.where(blk, lv, -np.inf))
            xs.append(math.log(n[k]))
            ys.append(lv[k])
    return fit_line(xs, ys)
