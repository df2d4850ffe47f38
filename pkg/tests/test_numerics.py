import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from crindex.numerics import (
    DENSE_LIMIT,
    AmbiguousRank,
    NonSymmetric,
    ThresholdPolicy,
    complex_to_real,
    conjugate_linear_to_real,
    kernel_dims,
    realify,
    symmetric_eig,
)


def test_real_structure_squares():
    R = realify(3)
    assert np.allclose(R.J0 @ R.J0, -np.eye(6))
    assert np.allclose(R.C @ R.C, np.eye(6))
    assert np.allclose(R.J0 @ R.C, -R.C @ R.J0)


def test_complex_and_antilinear_maps_match_complex_arithmetic():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    u = rng.normal(size=2) + 1j * rng.normal(size=2)
    ur = np.concatenate([u.real, u.imag])
    lin = complex_to_real(M) @ ur
    anti = conjugate_linear_to_real(M) @ ur
    assert np.allclose(lin[:2] + 1j * lin[2:], M @ u)
    assert np.allclose(anti[:2] + 1j * anti[2:], M @ np.conj(u))


def test_diagonal_example():
    ker, coker = kernel_dims(np.diag([1.0, 1.0, 0.0]))
    assert (ker.zero_count, coker.zero_count) == (1, 1)
    assert ker.gap_ratio == np.inf


def test_rectangular_counts():
    ker, coker = kernel_dims(np.hstack([np.eye(3), np.zeros((3, 2))]))
    assert (ker.zero_count, coker.zero_count) == (2, 0)


def _planted(rng, m, n, k):
    # rank r with nonzero singular values in [1, 10], so the gap is known
    r = min(m, n) - k
    U = np.linalg.qr(rng.normal(size=(m, r)))[0]
    V = np.linalg.qr(rng.normal(size=(n, r)))[0]
    return (U * rng.uniform(1.0, 10.0, size=r)) @ V.T


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 30), st.integers(3, 30), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_planted_rank_deficiency(m, n, k, seed):
    k = min(k, min(m, n) - 1)
    rng = np.random.default_rng(seed)
    ker, coker = kernel_dims(_planted(rng, m, n, k))
    assert ker.zero_count == k + max(0, n - m)
    assert coker.zero_count == k + max(0, m - n)
    assert ker.gap_ratio >= 1e6


def test_ambiguous_singular_value_is_refused():
    with pytest.raises(AmbiguousRank):
        kernel_dims(np.diag([1.0, 1.0, 3e-8]))


def test_sparse_and_dense_paths_agree():
    # diagonal with planted zeros, hidden by random permutations
    rng = np.random.default_rng(3)
    N = DENSE_LIMIT + 500
    d = rng.uniform(1.0, 2.0, size=N)
    d[rng.choice(N, 3, replace=False)] = 0.0
    P = sp.identity(N, format="csr")[rng.permutation(N)]
    Q = sp.identity(N, format="csr")[rng.permutation(N)]
    B = sp.diags(d) + sp.diags(0.3 * rng.uniform(size=N - 1), 1)
    M = (P @ B @ Q).tocsr()
    ker_s, coker_s = kernel_dims(M, vectors=True)
    ker_d, coker_d = kernel_dims(M.toarray())
    assert (ker_s.zero_count, coker_s.zero_count) == (ker_d.zero_count, coker_d.zero_count)
    assert ker_s.zero_count == np.sum(d == 0.0)
    assert np.linalg.norm(M @ ker_s.basis) < 1e-8
    assert np.linalg.norm(M.T @ coker_s.basis) < 1e-8


def test_symmetric_eig_refuses_asymmetry():
    with pytest.raises(NonSymmetric):
        symmetric_eig(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_threshold_policy_floor():
    assert ThresholdPolicy().threshold(0.0) == 1e-12
    assert ThresholdPolicy().threshold(10.0) == pytest.approx(1e-7)
