"""Three-term recursions, Sturm bisection, inverse iteration, spectral weights.

The determinant sequence ``D_n`` and the solutions ``x_n``/``y_n`` of the
eigenvalue recursion grow factorially with ``n`` (through the product of
couplings), so every recursion here is run with a running rescale and
returned as a :class:`LogSignedSequence`.

Boundary convention: the couplings ``b_0`` and ``b_N`` that the finite
matrix does not define are taken to be 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .ensemble import CoefficientStream, TridiagonalOperator
from .errors import SolverError

__all__ = [
    "LogSignedSequence",
    "SpectralMeasure",
    "char_poly_sequence",
    "forward_solution",
    "backward_solution",
    "wronskian",
    "sturm_count",
    "eigenvalues",
    "eigenvalues_by_index",
    "nearest_eigenvalue",
    "eigenvector",
    "spectral_measure",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LogSignedSequence:
    """Values ``signs[i] * exp(logmags[i])`` at indices ``start_index + i``.

    Exact zeros carry sign 0 and ``logmag = -inf``.
    """

    signs: np.ndarray
    logmags: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=np.int8)
        m = np.asarray(self.logmags, dtype=float)
        if s.shape != m.shape or s.ndim != 1:
            raise ValueError("signs and logmags must be 1-d arrays of equal length")
        m = np.where(s == 0, -np.inf, m)
        object.__setattr__(self, "signs", s)
        object.__setattr__(self, "logmags", m)

    def __len__(self):
        return self.signs.size

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start_index, self.start_index + len(self))

    @property
    def stop_index(self) -> int:
        return self.start_index + len(self)

    def _pos(self, n: int) -> int:
        i = n - self.start_index
        if not 0 <= i < len(self):
            raise IndexError(f"index {n} outside [{self.start_index}, {self.stop_index})")
        return i

    def sign(self, n: int) -> int:
        return int(self.signs[self._pos(n)])

    def log_abs(self, n: int) -> float:
        return float(self.logmags[self._pos(n)])

    def __getitem__(self, n: int) -> float:
        i = self._pos(n)
        s = int(self.signs[i])
        return 0.0 if s == 0 else s * math.exp(self.logmags[i])

    def values(self) -> np.ndarray:
        """Plain floating-point reconstruction (may overflow to inf)."""
        with np.errstate(over="ignore"):
            return self.signs * np.exp(self.logmags)

    def sign_agreements(self) -> int:
        """Number of consecutive pairs that share a sign (zero takes the preceding sign)."""
        s = self.signs.astype(int)
        for i in range(1, s.size):
            if s[i] == 0:
                s[i] = s[i - 1]
        s = s[s != 0]
        return int(np.count_nonzero(s[1:] == s[:-1]))


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Point masses ``weights`` at strictly increasing ``lambdas``."""

    lambdas: np.ndarray
    weights: np.ndarray

    @property
    def points(self):
        return list(zip(self.lambdas.tolist(), self.weights.tolist()))

    def __len__(self):
        return self.lambdas.size


# ---------------------------------------------------------------------------
# recursions
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _record(val, acc, signs, logm, i):
    if val > 0.0:
        signs[i] = 1
        logm[i] = math.log(val) + acc
    elif val < 0.0:
        signs[i] = -1
        logm[i] = math.log(-val) + acc
    else:
        signs[i] = 0
        logm[i] = -np.inf


@numba.njit(cache=True)
def _charpoly_kernel(a, b, lam, signs, logm):
    # slot 0 holds D_{-1}, slot n+1 holds D_n
    n_sites = a.shape[0]
    prev2 = 0.0
    prev1 = 1.0
    acc = 0.0
    signs[0] = 0
    logm[0] = -np.inf
    signs[1] = 1
    logm[1] = 0.0
    for n in range(1, n_sites + 1):
        bb = b[n - 2] * b[n - 2] if n >= 2 else 0.0
        cur = (lam - a[n - 1]) * prev1 - bb * prev2
        prev2 = prev1
        prev1 = cur
        s = max(abs(prev1), abs(prev2))
        _record(cur, acc, signs, logm, n + 1)
        if s > 0.0:
            prev1 /= s
            prev2 /= s
            acc += math.log(s)


@numba.njit(cache=True)
def _forward_kernel(a, b, lam, signs, logm):
    # b[n-1] is b_n for n = 1..n_max; b_0 = 1; slot n holds x_n
    n_max = a.shape[0]
    xp = 0.0
    xc = 1.0
    acc = 0.0
    b_prev = 1.0
    signs[0] = 0
    logm[0] = -np.inf
    signs[1] = 1
    logm[1] = 0.0
    for n in range(1, n_max + 1):
        xn = ((lam - a[n - 1]) * xc - b_prev * xp) / b[n - 1]
        b_prev = b[n - 1]
        xp = xc
        xc = xn
        _record(xc, acc, signs, logm, n + 1)
        s = max(abs(xc), abs(xp))
        if s > 0.0:
            xc /= s
            xp /= s
            acc += math.log(s)


@numba.njit(cache=True)
def _backward_kernel(a, bext, lam, signs, logm):
    # bext[n] = b_n for n = 0..N with b_0 = b_N = 1; slot n holds y_n
    n_sites = a.shape[0]
    yn = 0.0
    yc = 1.0
    acc = 0.0
    signs[n_sites + 1] = 0
    logm[n_sites + 1] = -np.inf
    signs[n_sites] = 1
    logm[n_sites] = 0.0
    for n in range(n_sites, 0, -1):
        yp = ((lam - a[n - 1]) * yc - bext[n] * yn) / bext[n - 1]
        yn = yc
        yc = yp
        _record(yc, acc, signs, logm, n - 1)
        s = max(abs(yc), abs(yn))
        if s > 0.0:
            yc /= s
            yn /= s
            acc += math.log(s)


def char_poly_sequence(op: TridiagonalOperator, lam: float) -> LogSignedSequence:
    """``D_{-1}, D_0, ..., D_N`` with ``D_n = det(lam I - H_n)`` for the top ``n x n`` block."""
    n = op.size
    signs = np.empty(n + 2, dtype=np.int8)
    logm = np.empty(n + 2)
    _charpoly_kernel(op.diag, op.offdiag, float(lam), signs, logm)
    return LogSignedSequence(signs, logm, start_index=-1)


def forward_solution(source, lam: float, n_max: int | None = None) -> LogSignedSequence:
    """Solution ``x_0 = 0, x_1 = 1`` of the eigenvalue recursion up to ``x_{n_max+1}``.

    ``source`` is an operator (``n_max <= N``, default ``N``; the missing
    ``b_N`` is 1) or a :class:`CoefficientStream`, from which ``n_max``
    fresh sites are consumed.
    """
    if isinstance(source, CoefficientStream):
        if n_max is None:
            raise ValueError("n_max is required for a coefficient stream")
        a, b = source.take(int(n_max))
    else:
        n_sites = source.size
        n_max = n_sites if n_max is None else int(n_max)
        if not 1 <= n_max <= n_sites:
            raise ValueError(f"n_max must lie in [1, {n_sites}]")
        a = source.diag[:n_max]
        b = np.append(source.offdiag, 1.0)[:n_max]
    signs = np.empty(n_max + 2, dtype=np.int8)
    logm = np.empty(n_max + 2)
    _forward_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b), float(lam), signs, logm)
    return LogSignedSequence(signs, logm, start_index=0)


def backward_solution(op: TridiagonalOperator, lam: float) -> LogSignedSequence:
    """Solution ``y_{N+1} = 0, y_N = 1`` iterated down to ``y_0``."""
    n = op.size
    if n < 2:
        raise ValueError("backward solution needs N >= 2")
    bext = np.concatenate(([1.0], op.offdiag, [1.0]))
    signs = np.empty(n + 2, dtype=np.int8)
    logm = np.empty(n + 2)
    _backward_kernel(op.diag, bext, float(lam), signs, logm)
    return LogSignedSequence(signs, logm, start_index=0)


def _signed_logdiff(s1, l1, s2, l2):
    # sign/log of s1 e^l1 - s2 e^l2, elementwise
    s2 = -s2
    big = np.maximum(l1, l2)
    big = np.where(np.isfinite(big), big, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        v = s1 * np.exp(l1 - big) + s2 * np.exp(l2 - big)
        out_l = np.log(np.abs(v)) + big
    return np.sign(v).astype(np.int8), out_l


def wronskian(op: TridiagonalOperator, x: LogSignedSequence, y: LogSignedSequence) -> LogSignedSequence:
    """``W_n = b_n (x_{n+1} y_n - x_n y_{n+1})`` for ``n = 0..N`` (``b_0 = b_N = 1``)."""
    n = op.size
    lb = np.log(np.concatenate(([1.0], op.offdiag, [1.0])))
    xs, xl = x.signs[x._pos(0) : x._pos(n + 1) + 1], x.logmags[x._pos(0) : x._pos(n + 1) + 1]
    ys, yl = y.signs[y._pos(0) : y._pos(n + 1) + 1], y.logmags[y._pos(0) : y._pos(n + 1) + 1]
    s1 = xs[1:] * ys[:-1]
    l1 = xl[1:] + yl[:-1]
    s2 = xs[:-1] * ys[1:]
    l2 = xl[:-1] + yl[1:]
    s, lg = _signed_logdiff(s1.astype(float), l1, s2.astype(float), l2)
    return LogSignedSequence(s, lg + lb, start_index=0)


# ---------------------------------------------------------------------------
# Sturm bisection
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _sturm_count(a, b2, x, pivmin):
    # negative pivots of the LDL^T factorization of H - x I
    d = a[0] - x
    if abs(d) < pivmin:
        d = -pivmin
    count = 1 if d < 0.0 else 0
    for i in range(1, a.shape[0]):
        d = (a[i] - x) - b2[i - 1] / d
        if abs(d) < pivmin:
            d = -pivmin
        if d < 0.0:
            count += 1
    return count


@numba.njit(cache=True)
def _bisect_kernel(a, b2, pivmin, k_lo, k_hi, lo0, hi0, tol_abs, out):
    # all brackets are halved in lockstep; the sweep over sites then runs
    # independent pivot chains side by side instead of one serial chain
    m = k_hi - k_lo
    n = a.shape[0]
    lo = np.full(m, lo0)
    hi = np.full(m, hi0)
    mid = np.empty(m)
    d = np.empty(m)
    cnt = np.empty(m, dtype=np.int64)
    steps = 1
    width = hi0 - lo0
    while width > tol_abs and steps < 2100:
        width *= 0.5
        steps += 1
    for _ in range(steps):
        for j in range(m):
            mid[j] = 0.5 * (lo[j] + hi[j])
            d[j] = 1.0
            cnt[j] = 0
        for i in range(n):
            ai = a[i]
            bb = b2[i - 1] if i > 0 else 0.0
            for j in range(m):
                t = (ai - mid[j]) - bb / d[j]
                t = t if abs(t) >= pivmin else -pivmin
                cnt[j] += 1 if t < 0.0 else 0
                d[j] = t
        done = True
        for j in range(m):
            if mid[j] <= lo[j] or mid[j] >= hi[j]:
                continue
            if cnt[j] > k_lo + j:
                hi[j] = mid[j]
            else:
                lo[j] = mid[j]
            if hi[j] - lo[j] > tol_abs:
                done = False
        if done:
            break
    for j in range(m):
        out[j] = 0.5 * (lo[j] + hi[j])


@numba.njit(cache=True)
def _full_spectrum(a, b, tol, out):
    # Gershgorin bracket, pivot floor and lockstep bisection in one call
    n = a.shape[0]
    b2 = np.empty(max(n - 1, 0))
    glo = np.inf
    ghi = -np.inf
    bmax = 1.0
    for i in range(n):
        r = 0.0
        if i > 0:
            r += b[i - 1]
        if i < n - 1:
            r += b[i]
            b2[i] = b[i] * b[i]
            if b2[i] > bmax:
                bmax = b2[i]
        glo = min(glo, a[i] - r)
        ghi = max(ghi, a[i] + r)
    scale = max(1.0, abs(glo), abs(ghi))
    pad = 2.0 * 2.220446049250313e-16 * scale
    pivmin = 2.2250738585072014e-308 * bmax
    _bisect_kernel(a, b2, pivmin, 0, n, glo - pad, ghi + pad, tol * scale, out)


def _pivmin(op: TridiagonalOperator) -> float:
    bmax = float(np.max(op.offdiag ** 2)) if op.size > 1 else 0.0
    return np.finfo(float).tiny * max(1.0, bmax)


def _bracket(op: TridiagonalOperator) -> tuple[float, float, float]:
    glo, ghi = op.gershgorin()
    scale = max(1.0, abs(glo), abs(ghi))
    # widen so that the Gershgorin ends are strict bounds for the count
    pad = 2.0 * np.finfo(float).eps * scale
    return glo - pad, ghi + pad, scale


def sturm_count(op: TridiagonalOperator, lam: float) -> int:
    """Number of eigenvalues strictly below ``lam``."""
    return int(_sturm_count(op.diag, op.offdiag ** 2, float(lam), _pivmin(op)))


def eigenvalues(op: TridiagonalOperator, window=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Sorted eigenvalues by Sturm-count bisection.

    With ``window=(lo, hi)`` only the eigenvalues in ``[lo, hi)`` are
    returned; their number is fixed exactly by two Sturm counts.  Each
    eigenvalue is bracketed to width ``tol * max(1, |spectral bound|)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if window is None:
        out = np.empty(op.size)
        _full_spectrum(op.diag, op.offdiag, float(tol), out)
        return out
    wlo, whi = float(window[0]), float(window[1])
    if not whi > wlo:
        return np.empty(0)
    glo, ghi, scale = _bracket(op)
    b2 = op.offdiag ** 2
    pivmin = _pivmin(op)
    k_lo = int(_sturm_count(op.diag, b2, wlo, pivmin))
    k_hi = int(_sturm_count(op.diag, b2, whi, pivmin))
    lo, hi = max(glo, wlo), min(ghi, whi)
    out = np.empty(k_hi - k_lo)
    if out.size:
        _bisect_kernel(op.diag, b2, pivmin, k_lo, k_hi, lo, hi, tol * scale, out)
    return out


def eigenvalues_by_index(op: TridiagonalOperator, k_lo: int, k_hi: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Eigenvalues with ascending ranks ``k_lo <= k < k_hi`` (0-based)."""
    k_lo = max(0, int(k_lo))
    k_hi = min(op.size, int(k_hi))
    if k_hi <= k_lo:
        return np.empty(0)
    glo, ghi, scale = _bracket(op)
    out = np.empty(k_hi - k_lo)
    _bisect_kernel(op.diag, op.offdiag ** 2, _pivmin(op), k_lo, k_hi, glo, ghi, tol * scale, out)
    return out


def nearest_eigenvalue(op: TridiagonalOperator, lam: float, tol: float = DEFAULT_TOL) -> float:
    """The eigenvalue closest to ``lam``."""
    k = sturm_count(op, lam)
    cand = eigenvalues_by_index(op, k - 1, k + 1, tol)
    return float(cand[np.argmin(np.abs(cand - lam))])


# ---------------------------------------------------------------------------
# inverse iteration
# ---------------------------------------------------------------------------

_MAX_ITER = 4
_RESIDUAL_TOL = 1e-10


@numba.njit(cache=True)
def _gt_factor(dl, d, du, du2, ipiv, eps_pivot):
    # LU with partial pivoting of a tridiagonal matrix, LAPACK dgttrf layout
    n = d.shape[0]
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            ipiv[i] = i
            if d[i] == 0.0:
                d[i] = eps_pivot
            fact = dl[i] / d[i]
            dl[i] = fact
            d[i + 1] -= fact * du[i]
            if i < n - 2:
                du2[i] = 0.0
        else:
            ipiv[i] = i + 1
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
    if d[n - 1] == 0.0:
        d[n - 1] = eps_pivot


@numba.njit(cache=True)
def _gt_solve(dl, d, du, du2, ipiv, x):
    n = d.shape[0]
    for i in range(n - 1):
        if ipiv[i] == i:
            x[i + 1] -= dl[i] * x[i]
        else:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i]
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]


@numba.njit(cache=True)
def _start_vector(n, seed):
    # xorshift64* fill with entries in (-1, 1)
    v = np.empty(n)
    state = np.uint64(0x9E3779B97F4A7C15) ^ np.uint64(seed * 0x2545F4914F6CDD1D + 1)
    for i in range(n):
        state ^= state >> np.uint64(12)
        state ^= state << np.uint64(25)
        state ^= state >> np.uint64(27)
        r = (state * np.uint64(0x2545F4914F6CDD1D)) >> np.uint64(11)
        v[i] = 2.0 * (float(r) / 9007199254740992.0) - 1.0
    return v


@numba.njit(cache=True)
def _inverse_iteration(a, b, lam, norm_est, seed):
    n = a.shape[0]
    v = _start_vector(n, seed)
    v /= math.sqrt(np.sum(v * v))
    eps_pivot = 2.220446049250313e-16 * max(norm_est, 1.0)
    dl = np.empty(max(n - 1, 0))
    d = np.empty(n)
    du = np.empty(max(n - 1, 0))
    du2 = np.zeros(max(n - 2, 0))
    ipiv = np.empty(max(n - 1, 0), dtype=np.int64)
    for i in range(n):
        d[i] = a[i] - lam
    for i in range(n - 1):
        dl[i] = b[i]
        du[i] = b[i]
    _gt_factor(dl, d, du, du2, ipiv, eps_pivot)
    res = np.inf
    for it in range(_MAX_ITER):
        _gt_solve(dl, d, du, du2, ipiv, v)
        v /= math.sqrt(np.sum(v * v))
        # residual ||H v - lam v||_2
        r2 = 0.0
        for i in range(n):
            r = (a[i] - lam) * v[i]
            if i > 0:
                r += b[i - 1] * v[i - 1]
            if i < n - 1:
                r += b[i] * v[i + 1]
            r2 += r * r
        res = math.sqrt(r2)
        # a second sweep removes the contamination left by the start vector
        if it >= 1 and res <= _RESIDUAL_TOL * norm_est:
            break
    return v, res


def eigenvector(op: TridiagonalOperator, lambda_hat: float) -> np.ndarray:
    """Unit eigenvector for an accurate eigenvalue estimate ``lambda_hat``.

    At most four inverse-iteration sweeps; one retry from a fresh start
    vector, then :class:`SolverError`.  The first nonzero component is
    made positive.
    """
    norm_est = max(op.norm_bound(), np.finfo(float).tiny)
    for seed in (0, 1):
        v, res = _inverse_iteration(op.diag, op.offdiag, float(lambda_hat), norm_est, seed)
        if res <= _RESIDUAL_TOL * norm_est:
            nz = np.flatnonzero(v)
            if nz.size and v[nz[0]] < 0:
                v = -v
            return v
    raise SolverError(
        f"inverse iteration at lambda={lambda_hat!r} stalled with residual {res:.3e}"
    )


def spectral_measure(op: TridiagonalOperator, tol: float = DEFAULT_TOL) -> SpectralMeasure:
    """Spectral measure of the first site: weights ``|<delta_1|psi_k>|^2``."""
    lam = eigenvalues(op, tol=tol)
    if lam.size > 1 and np.any(np.diff(lam) <= 0):
        raise SolverError("coincident eigenvalues; spectral weights are not resolved")
    w = np.empty(lam.size)
    for k, x in enumerate(lam):
        w[k] = eigenvector(op, x)[0] ** 2
    return SpectralMeasure(lam, w)
