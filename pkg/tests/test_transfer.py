import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from betaspec import (
    TransferAccumulator,
    char_poly_sequence,
    decay_exponent,
    derive_stream,
    digamma,
    fit_line,
    forward_solution,
    growth_exponent,
    lyapunov_theory,
    mean_log_b_theory,
    mean_log_D_theory,
    sample_gbe,
    stream_gbe,
    transfer_log_norms,
)
from betaspec.ensemble import CoefficientStream
from betaspec.meanfield import semicircle_density
from betaspec.numeric import EULER_GAMMA
from betaspec.transfer import decay_target, growth_target, step_matrix


class FreeStream(CoefficientStream):
    """a = 0, b = 1 on every site."""

    def __init__(self):
        self.beta = 1.0
        self.next_index = 1

    def take(self, count):
        self.next_index += count
        return np.zeros(count), np.ones(count)


def test_step_matrix():
    np.testing.assert_array_equal(step_matrix(0, 1, 1, 0), [[0, -1], [1, 0]])
    for a, b, bp, lam in [(0.3, 2.0, 0.7, -1.0), (-1.2, 0.1, 5.0, 3.3)]:
        assert np.linalg.det(step_matrix(a, b, bp, lam)) == pytest.approx(bp / b, rel=1e-14)
    with pytest.raises(ValueError):
        step_matrix(0, 0.0, 1, 0)


def test_free_transfer_norm_is_one():
    res = transfer_log_norms(FreeStream(), 0.0, [1, 10, 1000, 100_000])
    np.testing.assert_allclose(res[:, 1], 0.0, atol=1e-12)
    np.testing.assert_array_equal(res[:, 0], [1, 10, 1000, 100_000])


def test_transfer_checkpoint_validation():
    with pytest.raises(ValueError):
        transfer_log_norms(FreeStream(), 0.0, [5, 3])
    with pytest.raises(ValueError):
        transfer_log_norms(FreeStream(), 0.0, [])
    with pytest.raises(ValueError):
        transfer_log_norms(FreeStream(), 0.0, [10, 10**8])


def test_transfer_reconstructs_forward_solution():
    op = sample_gbe(1.0, 101, derive_stream(70, 0))
    lam = 0.4
    x = forward_solution(op, lam, 100)
    acc = TransferAccumulator(lam)
    for n in range(1, 101):
        acc.push(op.diag[n - 1 : n], op.offdiag[n - 1 : n])
        s, lg = acc.apply_log((1.0, 0.0))
        assert s[0] == x.sign(n + 1) and s[1] == x.sign(n)
        assert abs(lg[0] - x.log_abs(n + 1)) <= 1e-9 * max(1.0, abs(lg[0]))
        assert abs(lg[1] - x.log_abs(n)) <= 1e-9 * max(1.0, abs(lg[1]))


def test_transfer_matches_dense_product():
    op = sample_gbe(2.0, 31, derive_stream(71, 0))
    lam = -0.8
    t = np.eye(2)
    bp = 1.0
    for n in range(30):
        t = step_matrix(op.diag[n], op.offdiag[n], bp, lam) @ t
        bp = op.offdiag[n]
    acc = TransferAccumulator(lam)
    acc.push(op.diag[:30], op.offdiag[:30])
    assert acc.log_norm_total() == pytest.approx(math.log(np.linalg.norm(t, 2)), rel=1e-12)
    np.testing.assert_allclose(acc.m * math.exp(acc.log_norm), t, rtol=1e-11)
    assert 0.5 <= np.linalg.norm(acc.m, 2) <= 2.0
    assert acc.steps == 30 and acc.b_prev == op.offdiag[29]


def test_determinant_identity_every_checkpoint():
    stream = stream_gbe(1.0, derive_stream(72, 0))
    acc = TransferAccumulator(0.0)
    for _ in range(20):
        a, b = stream.take(500)
        acc.push(a, b)
        # det T_n = b_0 / b_n with b_0 = 1
        assert acc.log_abs_det() == pytest.approx(-math.log(b[-1]), rel=1e-9, abs=1e-9)


def test_chunking_invariance():
    ck = np.array([3, 17, 1000, 70_000, 140_000])
    r1 = transfer_log_norms(stream_gbe(4.0, derive_stream(73, 0)), 0.2, ck)
    acc = TransferAccumulator(0.2)
    s = stream_gbe(4.0, derive_stream(73, 0))
    got = np.full(ck.size, np.nan)
    for size in (1, 2, 500, 69_497, 70_000):
        a, b = s.take(size)
        out = acc.push(a, b, ck)
        got[~np.isnan(out)] = out[~np.isnan(out)]
    np.testing.assert_allclose(got, r1[:, 1], rtol=1e-12)


def test_fit_line_and_growth_synthetic():
    x = np.log(np.geomspace(100, 1e6, 30))
    f = fit_line(x, 0.5 * x + 2)
    assert f.slope == pytest.approx(0.5, abs=1e-12) and f.stderr < 1e-10 and f.points == 30
    with pytest.raises(ValueError):
        fit_line([1, 2], [1, 2])
    n = np.geomspace(10, 1e6, 41)
    samples = [np.column_stack([n, 0.25 * np.log(n)]) for _ in range(3)]  # log||T||^2 = 0.5 log n
    g = growth_exponent(samples, (100, 1e6))
    assert g.slope == pytest.approx(0.5, abs=1e-12)
    assert g.stderr == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        growth_exponent(samples, (2e6, 3e6))
    assert g.to_dict()["points"] == 33


def test_decay_exponent_synthetic():
    n = np.arange(1, 5001, dtype=float)
    f = decay_exponent(n ** -0.75, (10, 5000))
    assert f.slope == pytest.approx(-1.5, abs=1e-10)
    assert f.stderr < 1e-8
    # oscillating envelope: the block maxima ride over the zeros
    v = n ** -0.75 * np.cos(1.3 * n)
    assert decay_exponent(v, (50, 5000)).slope == pytest.approx(-1.5, abs=0.05)
    with pytest.raises(ValueError):
        decay_exponent(np.zeros(100), (1, 100))
    with pytest.raises(ValueError):
        decay_exponent(n, (1, 5))


def test_decay_exponent_on_logsigned_trace():
    x = forward_solution(sample_gbe(1.0, 3000, derive_stream(74, 0)), 0.0)
    f = decay_exponent(x, (100, 3000))
    assert np.isfinite(f.slope) and f.points >= 10


def test_targets():
    assert growth_target(2.0) == 0.0 and growth_target(1.0) == 0.5
    assert decay_target(1.0) == -1.5


def test_mean_log_b_theory_values():
    assert mean_log_b_theory(2.0, 1) == pytest.approx(-EULER_GAMMA / 2, abs=1e-14)
    assert mean_log_b_theory(2.0, 2) == pytest.approx(0.25 * (1 - 2 * EULER_GAMMA), abs=1e-14)
    assert abs(mean_log_b_theory(1.0, 10_000) - mean_log_b_theory(1.0, 10_000, "asymptotic")) < 2e-3
    with pytest.raises(ValueError):
        mean_log_b_theory(1.0, 5, "fancy")
    with pytest.raises(ValueError):
        mean_log_b_theory(1.0, 0)


def test_mean_log_b_is_half_digamma_average():
    beta, n = 3.0, 40
    ref = sum(0.5 * float(digamma(beta * m / 2)) for m in range(1, n + 1)) / n
    assert mean_log_b_theory(beta, n) == pytest.approx(ref, rel=1e-14)


def test_mean_log_D_theory():
    assert mean_log_D_theory(2.0, 2) == pytest.approx(0.5 * (math.log(2) - 1), abs=1e-12)
    # semicircle average of log|y| with radius sqrt(2 beta n)
    beta, n = 1.0, 500
    R = math.sqrt(2 * beta * n)
    val, _ = integrate.quad(lambda y: semicircle_density(y / R) / R * math.log(abs(y)), -R, R, points=[0.0], limit=200)
    assert abs(val - mean_log_D_theory(beta, n)) < 0.02


def test_lyapunov_theory():
    for n in (10, 1000):
        assert lyapunov_theory(2.0, n) == 0.0
    assert lyapunov_theory(1.0, math.e ** 2) == pytest.approx(-0.5 * math.e ** -2)
    with pytest.raises(ValueError):
        lyapunov_theory(1.0, 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(2, 10**7))
def test_asymptotic_consistency(beta, n):
    lhs = lyapunov_theory(beta, n)
    rhs = mean_log_b_theory(beta, n, "asymptotic") - mean_log_D_theory(beta, n)
    assert abs(lhs - rhs) <= 1e-12


def test_lyapunov_rearrangement_per_realization():
    op = sample_gbe(1.0, 2000, derive_stream(75, 0))
    n = 1999
    d = char_poly_sequence(op, 0.0)
    x = forward_solution(op, 0.0)
    lhs = -x.log_abs(n + 1) / n
    rhs = -d.log_abs(n) / n + np.sum(np.log(op.offdiag[:n])) / n
    assert abs(lhs - rhs) <= 1e-10
