import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betaspec import (
    LogSignedSequence,
    SolverError,
    TridiagonalOperator,
    backward_solution,
    char_poly_sequence,
    derive_stream,
    eigenvalues,
    eigenvector,
    forward_solution,
    hermite_zeros,
    mean_operator,
    nearest_eigenvalue,
    sample_gbe,
    spectral_measure,
    stream_gbe,
    sturm_count,
    wronskian,
)
from betaspec.recursion import eigenvalues_by_index


def free_op(N):
    return TridiagonalOperator(np.zeros(N), np.ones(N - 1))


def rel_close(lhs, rhs, rel):
    return abs(lhs - rhs) <= rel * max(1.0, abs(lhs), abs(rhs))


# -- LogSignedSequence ------------------------------------------------------


def test_logsigned_roundtrip_and_zero():
    s = LogSignedSequence([1, 0, -1], [0.0, 5.0, math.log(2.0)], start_index=-1)
    assert s.logmags[1] == -math.inf
    assert s[-1] == 1.0 and s[0] == 0.0 and s[1] == -2.0
    assert list(s.indices) == [-1, 0, 1] and s.stop_index == 2
    with pytest.raises(IndexError):
        s[2]
    with pytest.raises(ValueError):
        LogSignedSequence([1, 1], [0.0])


# -- determinant recursion --------------------------------------------------


def test_charpoly_small():
    d = char_poly_sequence(TridiagonalOperator([0.0], []), 2.0)
    assert d[-1] == 0.0 and d[0] == 1.0 and d[1] == pytest.approx(2.0)
    assert char_poly_sequence(free_op(2), 0.0)[2] == pytest.approx(-1.0)


def test_charpoly_matches_dense_det(random_op):
    op = random_op(N=12, seed=2)
    d = char_poly_sequence(op, 0.7)
    h = op.to_dense()
    for n in range(1, 13):
        ref = np.linalg.det(0.7 * np.eye(n) - h[:n, :n])
        assert d[n] == pytest.approx(ref, rel=1e-10)


def test_charpoly_sign_count_is_sturm(random_op):
    # sign agreements of D_0..D_N count eigenvalues below lambda
    # (sign changes count the ones above)
    op = random_op(beta=1.0, N=50, seed=17)
    lam = 0.3
    d = char_poly_sequence(op, lam)
    below = int(np.sum(eigenvalues(op) < lam))
    seq = LogSignedSequence(d.signs[1:], d.logmags[1:], 0)
    assert seq.sign_agreements() == below == sturm_count(op, lam)


def test_charpoly_no_overflow():
    op = sample_gbe(2.0, 5000, derive_stream(0, 0))
    d = char_poly_sequence(op, 0.0)
    assert np.all(np.isfinite(d.logmags[1:]))
    assert d.log_abs(5000) > 700  # far past double range


# -- forward / backward -----------------------------------------------------


def test_forward_free_particle():
    x = forward_solution(free_op(8), 0.0)
    np.testing.assert_allclose(x.values(), [0, 1, 0, -1, 0, 1, 0, -1, 0, 1], atol=1e-15)


def test_forward_recursion_residual(random_op):
    op = random_op(N=40, seed=8)
    lam = -0.4
    x = forward_solution(op, lam).values()
    b = np.concatenate(([1.0], op.offdiag, [1.0]))
    for n in range(1, 41):
        r = b[n - 1] * x[n - 1] + (op.diag[n - 1] - lam) * x[n] + b[n] * x[n + 1]
        assert abs(r) <= 1e-10 * max(1.0, abs(x[n - 1]), abs(x[n]), abs(x[n + 1])) * b.max()


def test_forward_from_stream_and_bounds(random_op):
    x = forward_solution(stream_gbe(1.0, derive_stream(2, 0)), 0.0, 20)
    assert len(x) == 22
    with pytest.raises(ValueError):
        forward_solution(stream_gbe(1.0, derive_stream(2, 0)), 0.0)
    with pytest.raises(ValueError):
        forward_solution(random_op(N=5), 0.0, 6)


def test_backward_free_three_sites():
    # hand recursion with b_0 = b_3 = 1: y_4 = 0, y_3 = 1, y_2 = 0, y_1 = -1, y_0 = 0
    y = backward_solution(free_op(3), 0.0)
    np.testing.assert_allclose(y.values(), [0, -1, 0, 1, 0], atol=1e-15)
    with pytest.raises(ValueError):
        backward_solution(free_op(1), 0.0)


def test_determinant_equals_scaled_solution(random_op):
    op = random_op(N=50, seed=4)
    rng = np.random.default_rng(0)
    for lam in rng.uniform(-8, 8, 20):
        d = char_poly_sequence(op, lam)
        x = forward_solution(op, lam)
        cum = np.concatenate(([0.0], np.cumsum(np.log(np.append(op.offdiag, 1.0)))))
        for n in range(1, 51):
            lhs = d.log_abs(n)
            rhs = x.log_abs(n + 1) + cum[n]
            assert abs(lhs - rhs) <= 1e-9 * n
            assert d.sign(n) == x.sign(n + 1)


def test_wronskian_constant_and_y0(random_op):
    op = random_op(N=100, seed=6)
    for lam in (-3.1, 0.0, 0.77):
        x, y = forward_solution(op, lam), backward_solution(op, lam)
        w = wronskian(op, x, y)
        assert np.all(w.signs == w.signs[0])
        assert np.max(np.abs(w.logmags - w.logmags[0])) <= 1e-8
        # y_0 = b_N x_{N+1} / b_0 with b_0 = b_N = 1
        assert y.sign(0) == x.sign(101)
        assert rel_close(y.log_abs(0), x.log_abs(101), 1e-8)


# -- eigenvalues --------------------------------------------------------------


def test_eigenvalues_trivial():
    np.testing.assert_allclose(eigenvalues(free_op(2)), [-1, 1], atol=1e-12)
    np.testing.assert_allclose(eigenvalues(mean_operator(2.0, 5)), math.sqrt(2) * hermite_zeros(5), atol=1e-10)
    with pytest.raises(ValueError):
        eigenvalues(free_op(2), tol=0.0)
    assert eigenvalues(free_op(4), window=(1.0, 1.0)).size == 0


@pytest.mark.parametrize("beta", [0.5, 1.0, 4.0])
def test_eigenvalues_match_lapack(beta):
    op = sample_gbe(beta, 300, derive_stream(31, int(beta * 10)))
    ref = np.linalg.eigvalsh(op.to_dense())
    np.testing.assert_allclose(eigenvalues(op), ref, atol=1e-12 * op.norm_bound() * 5)


def test_windowed_counts_are_certified():
    op = sample_gbe(1.0, 512, derive_stream(32, 0))
    full = eigenvalues(op)
    rng = np.random.default_rng(1)
    for _ in range(20):
        lo, hi = np.sort(rng.uniform(-40, 40, 2))
        w = eigenvalues(op, window=(lo, hi))
        assert w.size == sturm_count(op, hi) - sturm_count(op, lo)
        assert w.size == np.count_nonzero((full >= lo) & (full < hi))
        if w.size:
            np.testing.assert_allclose(w, full[(full >= lo) & (full < hi)], atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(-30, 30))
def test_sturm_count_exact(seed, lam):
    op = sample_gbe(1.0, 60, derive_stream(seed, 0))
    ref = np.linalg.eigvalsh(op.to_dense())
    if np.min(np.abs(ref - lam)) < 1e-9:
        return
    assert sturm_count(op, lam) == int(np.sum(ref < lam))


def test_by_index_and_nearest(random_op):
    op = random_op(N=80, seed=9)
    full = eigenvalues(op)
    np.testing.assert_allclose(eigenvalues_by_index(op, 10, 15), full[10:15], atol=1e-12)
    assert eigenvalues_by_index(op, 5, 5).size == 0
    assert nearest_eigenvalue(op, 0.0) == pytest.approx(full[np.argmin(np.abs(full))], abs=1e-12)
    assert nearest_eigenvalue(op, 1e3) == pytest.approx(full[-1], abs=1e-12)


def test_eigenvalue_spacing_clusters():
    # nearly degenerate pair from two weakly coupled identical blocks
    a = np.array([0.0, 1.0, 0.0, 1.0])
    b = np.array([0.5, 1e-7, 0.5])
    op = TridiagonalOperator(a, b)
    np.testing.assert_allclose(eigenvalues(op), np.linalg.eigvalsh(op.to_dense()), atol=1e-12)


# -- eigenvectors and spectral measure ---------------------------------------------


def test_eigenvector_trivial():
    v = eigenvector(free_op(2), 1.0)
    np.testing.assert_allclose(v, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-12)


def test_eigenvector_residuals_all_pairs():
    op = sample_gbe(1.0, 200, derive_stream(40, 0))
    h = op.norm_bound()
    b = np.concatenate(([0.0], op.offdiag, [0.0]))
    for lam in eigenvalues(op):
        v = eigenvector(op, lam)
        assert abs(np.linalg.norm(v) - 1) < 1e-12
        assert np.linalg.norm(op.matvec(v) - lam * v) <= 1e-10 * h
        nz = np.flatnonzero(np.abs(v) > 0)
        assert v[nz[0]] > 0
        # site-by-site recursion relative to the local scale
        vv = np.concatenate(([0.0], v, [0.0]))
        r = b[:-1] * vv[:-2] + (op.diag - lam) * vv[1:-1] + b[1:] * vv[2:]
        loc = b[:-1] * np.abs(vv[:-2]) + np.abs(op.diag - lam) * np.abs(vv[1:-1]) + b[1:] * np.abs(vv[2:])
        assert np.all(np.abs(r) <= 1e-8 * np.maximum(loc, 1e-300) + 1e-12 * h)


def test_eigenvector_bad_shift_raises():
    op = free_op(50)
    lam = eigenvalues(op)
    mid = 0.5 * (lam[24] + lam[25])
    with pytest.raises(SolverError):
        eigenvector(op, mid)


def test_spectral_measure_small():
    sm = spectral_measure(free_op(2))
    np.testing.assert_allclose(sm.weights, [0.5, 0.5], atol=1e-12)
    one = spectral_measure(TridiagonalOperator([0.3], []))
    assert one.weights[0] == pytest.approx(1.0) and one.lambdas[0] == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("beta, N", [(1.0, 150), (4.0, 200), (0.5, 100)])
def test_spectral_measure_sums_to_one(beta, N):
    sm = spectral_measure(sample_gbe(beta, N, derive_stream(50, N)))
    assert abs(sm.weights.sum() - 1) <= 1e-10
    assert np.all(sm.weights >= 0)
    assert np.all(np.diff(sm.lambdas) > 0)
    assert len(sm) == N


def test_spectral_measure_localization_ordering():
    R, N = 100, 400
    med = {}
    for beta in (1.0, 4.0):
        mx = [spectral_measure(sample_gbe(beta, N, derive_stream(51, i))).weights.max() for i in range(R)]
        med[beta] = np.median(mx)
    assert med[1.0] > med[4.0]
