"""Random streams, special functions and the Gaussian / chi samplers.

Every random draw in the package flows through an :class:`RngStream`.  A
stream is derived from ``(master_seed, stream_id)`` by hashing both into a
:class:`numpy.random.SeedSequence`, so realization ``i`` of an experiment
depends on nothing but the master seed and ``i``.

The chi sampler draws ``b = sqrt(G)`` with ``G ~ Gamma(k/2, 1)`` which has
the density ``2/Gamma(k/2) b**(k-1) exp(-b**2)``.  Gamma variates are
generated with the Marsaglia-Tsang squeeze/rejection method; shapes below
one use the ``U**(1/shape)`` boost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "ChiParam",
    "derive_stream",
    "log_gamma",
    "digamma",
    "sample_gaussian",
    "sample_chi_scaled",
    "EULER_GAMMA",
]

EULER_GAMMA = 0.57721566490153286061

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    """A deterministic generator tagged with the id it was derived from."""

    master_seed: int
    stream_id: int
    generator: np.random.Generator = field(repr=False)

    def spawn(self, count: int = 1) -> list["RngStream"]:
        """Independent child streams; successive calls yield fresh children."""
        return [RngStream(self.master_seed, self.stream_id, g) for g in self.generator.spawn(count)]


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    if stream_id < 0:
        raise ValueError("stream_id must be non-negative")
    seq = np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=(int(stream_id),))
    return RngStream(int(master_seed), int(stream_id), np.random.Generator(np.random.PCG64(seq)))


@dataclass(frozen=True)
class ChiParam:
    """Exponent parameter ``k`` of the chi-type coupling density (``k = beta*n``)."""

    k: float

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"chi parameter must be positive and finite, got {self.k!r}")


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

# Bernoulli-number coefficients B_{2j} / (2j (2j-1)) of the Stirling series.
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LGAMMA_SHIFT = 15.0

# B_{2j} / (2j) for the digamma asymptotic series.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 10.0


def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def log_gamma(x):
    """``ln Gamma(x)`` for ``x > 0`` (scalar or array).

    Arguments below 15 are shifted upward with ``Gamma(x+1) = x Gamma(x)``
    and the Stirling series is summed at the shifted point.
    """
    arr = _check_positive(x, "log_gamma")
    z = arr.copy()
    log_prod = np.zeros_like(z)
    prod = np.ones_like(z)
    low = z < _LGAMMA_SHIFT
    while np.any(low):
        prod = np.where(low, prod * z, prod)
        z = np.where(low, z + 1.0, z)
        low = z < _LGAMMA_SHIFT
    log_prod = np.log(prod)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_STIRLING):
        series = series * inv2 + c
    series = series / z
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - log_prod
    return out if out.ndim else float(out)


def digamma(x):
    """``psi(x) = Gamma'(x)/Gamma(x)`` for ``x > 0`` (scalar or array)."""
    arr = _check_positive(x, "digamma")
    z = arr.copy()
    acc = np.zeros_like(z)
    low = z < _DIGAMMA_SHIFT
    while np.any(low):
        acc = np.where(low, acc - 1.0 / z, acc)
        z = np.where(low, z + 1.0, z)
        low = z < _DIGAMMA_SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + c
    out = np.log(z) - 0.5 / z - series * inv2 + acc
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _standard_gamma(gen, shape):
    boost = 1.0
    if shape < 1.0:
        # 1 - U lies in (0, 1], keeping the boosted variate strictly positive
        boost = (1.0 - gen.random()) ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = gen.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - gen.random()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v * boost
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v * boost


@numba.njit(cache=True)
def _fill_chi(gen, k, out):
    for i in range(k.shape[0]):
        out[i] = math.sqrt(_standard_gamma(gen, 0.5 * k[i]))
    return out


def sample_gaussian(rng: RngStream, size=None):
    """Standard normal draw(s) from ``rng``."""
    return rng.generator.standard_normal(size)


def sample_chi_scaled(rng: RngStream, p, size=None):
    """Draw ``b`` with density ``2/Gamma(k/2) b**(k-1) exp(-b**2)``.

    ``p`` is a :class:`ChiParam` or a bare positive ``k``.  With ``size``
    an array of independent draws is returned.
    """
    k = p.k if isinstance(p, ChiParam) else ChiParam(float(p)).k
    n = 1 if size is None else int(np.prod(size))
    out = _fill_chi(rng.generator, np.full(n, k), np.empty(n))
    if size is None:
        return float(out[0])
    return out.reshape(size)
