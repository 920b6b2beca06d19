"""Mean-Hamiltonian theory: oscillator functions, Hermite zeros, semicircle.

For the leading-order mean operator (``a_n = 0``, ``b_n = sqrt(beta n/2)``)
the forward solution with ``x_1 = 1`` is ``x_{n+1} = u_n(l) / u_0(l)`` where
``l = lambda / sqrt(beta)`` and ``u_n`` is the normalized harmonic-oscillator
eigenfunction.  The finite operator's eigenvalues are ``sqrt(beta)`` times
the zeros of ``H_N``.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "hermite_u",
    "hermite_u_sequence",
    "log_abs_hermite_sequence",
    "hermite_zeros",
    "oscillator_completeness_check",
    "semicircle_density",
    "integrated_semicircle",
    "semicircle_quantiles",
]

_LOG_PI_QUARTER = 0.25 * math.log(math.pi)
_RESCALE = 1e150


def _scaled_u(n_max: int, x: np.ndarray):
    # u_m = vals[m] * exp(logscale[m]); rescaling keeps vals bounded
    x = np.asarray(x, dtype=float)
    vals = np.empty((n_max + 1,) + x.shape)
    logscale = np.empty((n_max + 1,) + x.shape)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    acc = -0.5 * x * x - _LOG_PI_QUARTER
    vals[0] = cur
    logscale[0] = acc
    for m in range(n_max):
        nxt = x * math.sqrt(2.0 / (m + 1)) * cur - math.sqrt(m / (m + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            f = np.where(big, np.abs(cur), 1.0)
            cur = cur / f
            prev = prev / f
            acc = acc + np.log(f)
        vals[m + 1] = cur
        logscale[m + 1] = acc
    return vals, logscale


def hermite_u_sequence(n_max: int, x) -> np.ndarray:
    """``u_0(x), ..., u_{n_max}(x)`` along the first axis."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    vals, logscale = _scaled_u(int(n_max), x)
    with np.errstate(under="ignore"):
        return vals * np.exp(logscale)


def hermite_u(n: int, x):
    """Normalized oscillator function ``(sqrt(pi) n! 2^n)^{-1/2} e^{-x^2/2} H_n(x)``.

    Runs the normalized recurrence
    ``u_{m+1} = x sqrt(2/(m+1)) u_m - sqrt(m/(m+1)) u_{m-1}`` with a
    running log-scale, so neither large ``n`` nor large ``|x|`` overflows.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 10**6:
        raise ValueError("n above 10**6 is not supported")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    acc = -0.5 * x * x - _LOG_PI_QUARTER
    for m in range(n):
        nxt = x * math.sqrt(2.0 / (m + 1)) * cur - math.sqrt(m / (m + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            f = np.where(big, np.abs(cur), 1.0)
            cur, prev = cur / f, prev / f
            acc = acc + np.log(f)
    with np.errstate(under="ignore"):
        out = cur * np.exp(acc)
    return out if out.ndim else float(out)


def log_abs_hermite_sequence(n_max: int, x) -> np.ndarray:
    """``log|H_m(x)|`` for ``m = 0..n_max`` via the rescaled oscillator recurrence."""
    vals, logscale = _scaled_u(int(n_max), x)
    m = np.arange(n_max + 1).reshape((-1,) + (1,) * np.ndim(x))
    x = np.asarray(x, dtype=float)
    # H_m = u_m * sqrt(sqrt(pi) m! 2^m) * e^{x^2/2}
    norm = 0.5 * (_LOG_PI_QUARTER * 2 + np.vectorize(math.lgamma)(m + 1.0) + m * math.log(2.0))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(vals)) + logscale + norm + 0.5 * x * x


def hermite_zeros(N: int, iterations: int = 8) -> np.ndarray:
    """Zeros of the physicists' Hermite polynomial ``H_N``, ascending.

    Gauss-Hermite nodes serve as starting points and are polished by
    Newton steps on ``u_N`` using ``u_N' = -x u_N + sqrt(2N) u_{N-1}``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    x = np.polynomial.hermite.hermgauss(N)[0].astype(float)
    for _ in range(iterations):
        seq = hermite_u_sequence(N, x)
        u, um1 = seq[N], seq[N - 1]
        du = -x * u + math.sqrt(2.0 * N) * um1
        step = np.where(du != 0, u / np.where(du != 0, du, 1.0), 0.0)
        x = x - step
    return np.sort(x)


def oscillator_completeness_check(M: int, x: float, y: float) -> float:
    """Partial kernel ``sum_{m<M} u_m(x) u_m(y)``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    seq = hermite_u_sequence(M - 1, np.array([x, y], dtype=float))
    return float(np.dot(seq[:, 0], seq[:, 1]))


def semicircle_density(mu):
    """``(2/pi) sqrt(1 - mu^2)`` on ``[-1, 1]``, zero outside."""
    mu = np.asarray(mu, dtype=float)
    out = np.where(np.abs(mu) <= 1.0, (2.0 / math.pi) * np.sqrt(np.clip(1.0 - mu * mu, 0.0, None)), 0.0)
    return out if out.ndim else float(out)


def integrated_semicircle(mu):
    """Cumulative semicircle ``(mu sqrt(1-mu^2) + arcsin mu)/pi + 1/2``, clamped."""
    mu = np.clip(np.asarray(mu, dtype=float), -1.0, 1.0)
    out = (mu * np.sqrt(1.0 - mu * mu) + np.arcsin(mu)) / math.pi + 0.5
    return out if out.ndim else float(out)


def semicircle_quantiles(p, iterations: int = 60) -> np.ndarray:
    """Inverse of :func:`integrated_semicircle` by bisection."""
    p = np.asarray(p, dtype=float)
    lo = np.full(p.shape, -1.0)
    hi = np.full(p.shape, 1.0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = integrated_semicircle(mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)
