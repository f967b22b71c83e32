import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmrcd.kernel import (
    KernelSpec,
    center_cross,
    center_gram,
    center_gram_weighted,
    center_self,
    cross_kernel,
    gram_matrix,
    kernel_eval,
    median_heuristic_bandwidth,
    read_gram_csv,
    validate_gram,
)


def random_data(seed, n=12, p=3):
    return np.random.default_rng(seed).normal(size=(n, p))


def test_linear_gram_is_inner_products():
    X = random_data(0)
    K = gram_matrix(KernelSpec.linear(), X)
    assert np.allclose(K, X @ X.T, rtol=1e-14, atol=1e-14)
    assert np.array_equal(K, K.T)


def test_rbf_and_poly_entries():
    X = random_data(1, 6, 2)
    rbf = KernelSpec.rbf(0.7)
    K = gram_matrix(rbf, X)
    for i in range(6):
        for j in range(6):
            expect = np.exp(-np.sum((X[i] - X[j]) ** 2) / (2 * 0.7 ** 2))
            assert K[i, j] == pytest.approx(expect, rel=1e-12)
    assert np.all(np.diag(K) == 1.0)
    poly = KernelSpec.polynomial(2, 1.0)
    Kp = gram_matrix(poly, X)
    assert np.allclose(Kp, (X @ X.T + 1) ** 2, rtol=1e-12)
    assert kernel_eval(poly, [1, 2], [3, 4]) == pytest.approx((11 + 1) ** 2)


def test_rbf_identical_rows_give_exact_one():
    X = np.array([[0.3, -1.2], [0.3, -1.2], [2.0, 0.0]])
    K = gram_matrix(KernelSpec.rbf(1.0), X)
    assert K[0, 1] == 1.0


def test_kernel_errors():
    with pytest.raises(ValueError, match="dimension"):
        kernel_eval(KernelSpec.linear(), [1, 2], [1, 2, 3])
    with pytest.raises(ValueError, match="bandwidth"):
        gram_matrix(KernelSpec.rbf(), random_data(2))
    with pytest.raises(ValueError):
        KernelSpec.rbf(-1.0)
    with pytest.raises(FloatingPointError, match="pair"):
        gram_matrix(KernelSpec.polynomial(200, 1.0), np.full((3, 2), 1e3))


def test_center_gram_matches_explicit_feature_centering():
    X = random_data(3)
    Xc = X - X.mean(axis=0)
    assert np.allclose(center_gram(X @ X.T), Xc @ Xc.T, atol=1e-12)


def test_center_gram_row_sums_vanish():
    K = gram_matrix(KernelSpec.rbf(1.5), random_data(4))
    assert np.allclose(center_gram(K).sum(axis=1), 0.0, atol=1e-12)


def test_weighted_centering_matches_weighted_mean():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(10, 3))
    w = rng.uniform(size=10)
    w /= w.sum()
    Xc = X - w @ X
    assert np.allclose(center_gram_weighted(X @ X.T, w), Xc @ Xc.T, atol=1e-12)
    with pytest.raises(ValueError, match="sum to 1"):
        center_gram_weighted(X @ X.T, 2 * w)


def test_center_cross_and_self_match_coordinates():
    rng = np.random.default_rng(6)
    XH = rng.normal(size=(7, 3))
    Q = rng.normal(size=(4, 3))
    c = XH.mean(axis=0)
    kt = center_cross(XH @ XH.T, XH @ Q.T)
    assert np.allclose(kt, (XH - c) @ (Q - c).T, atol=1e-12)
    ks = center_self(XH @ XH.T, XH @ Q.T, np.sum(Q * Q, axis=1))
    assert np.allclose(ks, np.sum((Q - c) ** 2, axis=1), atol=1e-12)
    v = cross_kernel(KernelSpec.linear(), XH, Q[0])
    assert np.allclose(v, (XH - c) @ (Q[0] - c), atol=1e-12)


def test_single_point_centers_to_zero():
    x = np.array([[1.0, 2.0]])
    assert np.allclose(cross_kernel(KernelSpec.linear(), x, x[0]), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
def test_centered_gram_spectrum_equals_covariance_spectrum(n, p, seed):
    X = np.random.default_rng(seed).normal(size=(n, p)) * np.linspace(0.5, 3.0, p)
    cov = np.cov(X, rowvar=False).reshape(p, p)
    lam_cov = np.sort(np.linalg.eigvalsh(cov))[::-1]
    lam_k = np.sort(np.linalg.eigvalsh(center_gram(X @ X.T) / (n - 1)))[::-1]
    q = min(p, n - 1)
    top = max(lam_cov[0], 1e-300)
    assert np.allclose(lam_k[:q], lam_cov[:q], rtol=1e-10, atol=1e-10 * top)
    assert np.all(np.abs(lam_k[q:]) <= 1e-10 * top)


def test_median_heuristic_examples():
    assert median_heuristic_bandwidth(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)
    assert median_heuristic_bandwidth(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)
    with pytest.raises(ValueError, match="degenerate data for bandwidth"):
        median_heuristic_bandwidth(np.ones((5, 2)))


def test_median_heuristic_against_pair_loop():
    X = random_data(7, 15, 2)
    d2 = [np.sum((X[i] - X[j]) ** 2) for i in range(15) for j in range(i + 1, 15)]
    assert median_heuristic_bandwidth(X) == pytest.approx(np.sqrt(np.median(d2)), rel=1e-14)


def test_validate_gram_rejects_bad_input():
    K = gram_matrix(KernelSpec.linear(), random_data(8))
    assert validate_gram(K) is not None
    bad = K.copy()
    bad[0, 1] += 1.0
    with pytest.raises(ValueError, match="symmetric"):
        validate_gram(bad)
    with pytest.raises(ValueError, match="semidefinite"):
        validate_gram(-np.eye(4))
    with pytest.raises(ValueError, match="non-finite"):
        validate_gram(np.full((3, 3), np.nan))
    with pytest.raises(ValueError, match="square"):
        validate_gram(np.zeros((3, 4)))


def test_validate_gram_keeps_values(tmp_path):
    K = gram_matrix(KernelSpec.rbf(1.0), random_data(9))
    assert np.array_equal(validate_gram(K), K)
    path = tmp_path / "k.csv"
    np.savetxt(path, K, delimiter=",", fmt="%.17g")
    assert np.array_equal(read_gram_csv(path), K)
