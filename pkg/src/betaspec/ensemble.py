"""Tridiagonal beta-ensemble operators.

Site ``n`` carries an on-site potential ``a_n ~ N(0, 1)`` and, for
``n < N``, a coupling ``b_n`` to site ``n + 1`` distributed as the scaled
chi law with parameter ``k = beta * n``.  Couplings therefore grow like
``sqrt(beta * n / 2)`` down the band.  The mirrored (Dumitriu-Edelman)
orientation has the same spectrum and is available with
``orientation="reversed"``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .numeric import RngStream, _standard_gamma, log_gamma

__all__ = [
    "TridiagonalOperator",
    "CoefficientStream",
    "sample_gbe",
    "stream_gbe",
    "mean_operator",
    "sample_goe_dense",
    "householder_tridiagonalize",
    "sample_goe_dense_tridiagonalize",
    "log_joint_eigenvalue_density",
    "write_operator_csv",
    "read_operator_csv",
]

_ORIENTATIONS = ("growing", "reversed")


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Finite symmetric Jacobi matrix with diagonal ``diag`` and couplings ``offdiag``.

    ``offdiag[i]`` couples sites ``i + 1`` and ``i + 2`` (1-based), so
    ``len(offdiag) == len(diag) - 1``.  Arrays are stored read-only.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        a = np.array(self.diag, dtype=float).reshape(-1)
        b = np.array(self.offdiag, dtype=float).reshape(-1)
        if a.size == 0:
            raise ValueError("operator needs at least one site")
        if b.size != a.size - 1:
            raise ValueError(f"expected {a.size - 1} couplings, got {b.size}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("operator entries must be finite")
        if np.any(b <= 0):
            raise ValueError("couplings must be strictly positive")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "diag", a)
        object.__setattr__(self, "offdiag", b)

    @property
    def size(self) -> int:
        return self.diag.size

    def __len__(self):
        return self.diag.size

    def reversed(self) -> "TridiagonalOperator":
        return TridiagonalOperator(self.diag[::-1], self.offdiag[::-1], self.beta)

    def scaled(self, factor: float) -> "TridiagonalOperator":
        return TridiagonalOperator(self.diag * factor, self.offdiag * factor, self.beta)

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diag)
        if self.size > 1:
            h += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return h

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def gershgorin(self) -> tuple[float, float]:
        """Interval containing the whole spectrum."""
        r = np.zeros(self.size)
        r[:-1] += self.offdiag
        r[1:] += self.offdiag
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))

    def norm_bound(self) -> float:
        lo, hi = self.gershgorin()
        return max(abs(lo), abs(hi))


@numba.njit(cache=True)
def _draw_pairs(gen, beta, first_index, count, a, b):
    # site n contributes a_n then b_n; consumption order is independent of chunking
    for i in range(count):
        n = first_index + i
        a[i] = gen.standard_normal()
        b[i] = math.sqrt(_standard_gamma(gen, 0.5 * beta * n))


class CoefficientStream:
    """Lazily generated half-line coefficients ``(a_n, b_n)``, ``n = 1, 2, ...``.

    Draws are consumed from ``rng`` strictly in site order, so element ``n``
    is the same whatever chunk sizes are requested.
    """

    def __init__(self, beta: float, rng: RngStream):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)
        self.rng = rng
        self.next_index = 1

    def take(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``count`` pairs as arrays ``(a, b)``; advances the stream."""
        count = int(count)
        a = np.empty(count)
        b = np.empty(count)
        if count:
            _draw_pairs(self.rng.generator, self.beta, self.next_index, count, a, b)
        self.next_index += count
        return a, b

    def __iter__(self):
        return self

    def __next__(self) -> tuple[float, float]:
        a, b = self.take(1)
        return float(a[0]), float(b[0])


def stream_gbe(beta: float, rng: RngStream) -> CoefficientStream:
    return CoefficientStream(beta, rng)


@numba.njit(cache=True)
def _draw_operator(gen, beta, N, a, b):
    # pairs (a_n, b_n) for n < N, then the last diagonal entry
    _draw_pairs(gen, beta, 1, N - 1, a, b)
    a[N - 1] = gen.standard_normal()


def draw_gbe_arrays(gen: np.random.Generator, beta: float, N: int, a=None, b=None):
    """Raw ``(diag, offdiag)`` draws for one operator with couplings growing down the band."""
    a = np.empty(N) if a is None else a
    b = np.empty(N - 1) if b is None else b
    _draw_operator(gen, float(beta), int(N), a, b)
    return a, b


def sample_gbe(
    beta: float,
    N: int,
    rng: RngStream,
    orientation: str = "growing",
    scaled: bool = False,
) -> TridiagonalOperator:
    """Sample one ``N``-site operator of the beta ensemble.

    The draws are exactly the first ``N`` diagonal and ``N - 1`` coupling
    entries of :func:`stream_gbe` on the same stream, so coupling ``b_n``
    has parameter ``beta n`` and grows down the band (``"growing"``);
    ``"reversed"`` flips the site order.  ``scaled=True``
    multiplies by ``sqrt(2 / (beta N))`` so the spectrum fills ``[-1, 1]``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    if orientation not in _ORIENTATIONS:
        raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
    a, b = draw_gbe_arrays(rng.generator, float(beta), N)
    op = TridiagonalOperator(a, b, float(beta))
    if orientation == "reversed":
        op = op.reversed()
    if scaled:
        op = op.scaled(math.sqrt(2.0 / (beta * N)))
    return op


def mean_operator(beta: float, N: int, mode: str = "leading-order") -> TridiagonalOperator:
    """Deterministic operator with ``a_n = 0`` and averaged couplings.

    ``mode="exact-mean"`` uses ``E[b_n] = Gamma((beta n + 1)/2) / Gamma(beta n / 2)``;
    ``mode="leading-order"`` uses ``sqrt(beta n / 2)``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    k = beta * np.arange(1, N, dtype=float)
    if mode == "leading-order":
        b = np.sqrt(k / 2.0)
    elif mode == "exact-mean":
        b = np.exp(log_gamma((k + 1.0) / 2.0) - log_gamma(k / 2.0)) if N > 1 else np.empty(0)
    else:
        raise ValueError(f"unknown mean-operator mode {mode!r}")
    return TridiagonalOperator(np.zeros(N), b, float(beta))


# ---------------------------------------------------------------------------
# dense GOE route
# ---------------------------------------------------------------------------


def sample_goe_dense(N: int, rng: RngStream) -> np.ndarray:
    """Dense real symmetric matrix with weight ``exp(-Tr H^2 / 2)``.

    Diagonal entries have variance 1 and off-diagonal entries variance 1/2.
    """
    g = rng.generator.standard_normal((N, N))
    # (g + g^T)/2 has off-diagonal variance 1/2 and diagonal variance 1
    return (g + g.T) / 2.0


def householder_tridiagonalize(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduce a dense symmetric matrix to tridiagonal form.

    Each reflector maps the sub-column onto ``+|x| e_1`` so all couplings
    come out non-negative.  Returns ``(diag, offdiag)``.
    """
    a = np.array(h, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    offdiag = np.empty(max(n - 1, 0))
    for j in range(n - 2):
        x = a[j + 1 :, j]
        alpha = np.linalg.norm(x)
        offdiag[j] = alpha
        v = x.copy()
        if x[0] > 0.0:
            # x0 - alpha without cancellation
            v[0] = -np.dot(x[1:], x[1:]) / (x[0] + alpha)
        else:
            v[0] -= alpha
        vn = np.dot(v, v)
        if vn > 0.0:
            # P = I - 2 v v^T / (v^T v) sends x to alpha e_1
            sub = a[j + 1 :, j + 1 :]
            w = sub @ v * (2.0 / vn)
            k = np.dot(v, w) / vn
            w -= k * v
            sub -= np.outer(v, w) + np.outer(w, v)
        a[j + 1 :, j] = 0.0
        a[j, j + 1 :] = 0.0
    if n >= 2:
        offdiag[n - 2] = abs(a[n - 1, n - 2])
    return np.diag(a).copy(), offdiag


def sample_goe_dense_tridiagonalize(N: int, rng: RngStream) -> TridiagonalOperator:
    if N < 2:
        raise ValueError("N must be at least 2")
    d, e = householder_tridiagonalize(sample_goe_dense(N, rng))
    return TridiagonalOperator(d, e, 1.0)


def log_joint_eigenvalue_density(lambdas, beta: float) -> float:
    """Unnormalized log of the joint eigenvalue density.

    ``-1/2 sum l_j^2 + beta sum_{j<k} log|l_j - l_k|``; coincident
    eigenvalues give ``-inf``.
    """
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.size == 0:
        raise ValueError("need at least one eigenvalue")
    out = -0.5 * float(np.dot(lam, lam))
    if lam.size > 1:
        diff = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(lam.size, 1)]
        if np.any(diff == 0.0):
            return -math.inf
        out += beta * float(np.sum(np.log(diff)))
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_operator_csv(op: TridiagonalOperator, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "a", "b"])
        for i in range(op.size):
            b = _fmt(op.offdiag[i]) if i < op.size - 1 else ""
            w.writerow([i + 1, _fmt(op.diag[i]), b])


def read_operator_csv(path, beta: float | None = None) -> TridiagonalOperator:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["n", "a", "b"]:
        raise ValueError("operator CSV must start with header n,a,b")
    body = rows[1:]
    a = [float(r[1]) for r in body]
    b = [float(r[2]) for r in body[:-1]]
    if body and body[-1][2] != "":
        raise ValueError("last row must leave b empty")
    return TridiagonalOperator(a, b, beta)
