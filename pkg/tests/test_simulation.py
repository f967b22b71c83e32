import numpy as np
import pytest
from scipy import stats

from kmrcd.estimator import fit
from kmrcd.kernel import KernelSpec
from kmrcd.simulation import (
    SimScenario,
    clayton_theta,
    count_outlier_containment,
    generate,
    generate_alyz_sigma,
    generate_circle,
    generate_clayton_copula,
    generate_contaminated,
    generate_t_copula,
    kl_divergence,
    mse_deviation,
    outlier_direction,
    run_replication,
    run_simulation,
)


@pytest.mark.parametrize("p", [2, 5, 30])
def test_alyz_sigma_is_correlation_with_condition_100(p):
    S = generate_alyz_sigma(p, rng=p)
    assert np.allclose(np.diag(S), 1.0, atol=1e-6)
    assert np.array_equal(S, S.T)
    lam = np.linalg.eigvalsh(S)
    assert lam[0] > 0
    assert abs(lam[-1] / lam[0] - 100) / 100 < 1e-3


def test_alyz_small_dimension_off_diagonal():
    S = generate_alyz_sigma(2, rng=0)
    assert -1 < S[0, 1] < 1


def test_alyz_errors():
    with pytest.raises(ValueError):
        generate_alyz_sigma(1)
    with pytest.raises(ValueError):
        generate_alyz_sigma(3, condition_number=1.0)


def test_outlier_direction_scaling():
    S = generate_alyz_sigma(6, rng=1)
    v = outlier_direction(S)
    assert v @ np.linalg.solve(S, v) == pytest.approx(6, abs=1e-8)


def test_contamination_types():
    S = generate_alyz_sigma(3, rng=2)
    X, out = generate_contaminated(10, S, 0.3, "point", rng=3)
    assert len(out) == 3
    assert np.all(X[out] == X[out[0]])
    assert np.allclose(X[out[0]], 200 * outlier_direction(S))
    X, out = generate_contaminated(100, S, 0.0, "shift", rng=3)
    assert out.size == 0
    X, out = generate_contaminated(200, S, 0.2, "cluster", rng=4)
    assert len(out) == 40
    assert np.std(X[out] - 200 * outlier_direction(S)) < 0.1
    X, out = generate_contaminated(200, S, 0.2, "shift", rng=4)
    mu = 200 * outlier_direction(S)
    assert np.linalg.norm(X[out].mean(axis=0) - mu) < 1.0


def test_t_copula():
    X, out = generate_t_copula(5000, epsilon=0.0, rng=5)
    assert out.size == 0
    assert np.all((X > 0) & (X < 1))
    tau = stats.kendalltau(X[:, 0], X[:, 1])[0]
    assert tau == pytest.approx(2 / np.pi * np.arcsin(0.1), abs=0.05)


def test_copula_outliers_keep_clearance():
    X, out = generate_t_copula(500, epsilon=0.1, rng=6)
    assert len(out) == 50
    clean = np.delete(X, out, axis=0)
    gaps = np.min(np.linalg.norm(X[out][:, None] - clean[None], axis=2), axis=1)
    assert gaps.min() > 0.05


def test_clayton_copula():
    assert clayton_theta(0.6) == pytest.approx(3.0)
    X, out = generate_clayton_copula(5000, rng=7)
    assert np.all((X > 0) & (X < 1))
    assert stats.kendalltau(X[:, 0], X[:, 1])[0] == pytest.approx(0.6, abs=0.05)
    X, out = generate_clayton_copula(300, epsilon=0.2, rng=7)
    assert len(out) == 60


def test_circle():
    X, out = generate_circle(1000, 0.2, rng=8)
    clean = np.delete(X, out, axis=0)
    assert np.allclose(np.linalg.norm(clean, axis=1), 1.0, atol=1e-12)
    r = np.linalg.norm(X[out], axis=1)
    assert np.mean(r < 0.4) == pytest.approx(1 - np.exp(-2), abs=0.05)
    X, out = generate_circle(50, 0.0, rng=8)
    assert out.size == 0 and np.allclose(np.linalg.norm(X, axis=1), 1.0)


def test_generators_deterministic_per_seed():
    a = generate_t_copula(100, epsilon=0.1, rng=9)[0]
    b = generate_t_copula(100, epsilon=0.1, rng=9)[0]
    c = generate_t_copula(100, epsilon=0.1, rng=10)[0]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_kl_divergence():
    S = generate_alyz_sigma(3, rng=11)
    assert kl_divergence(S, S) == pytest.approx(0, abs=1e-10)
    assert kl_divergence(2 * S, S) == pytest.approx(3 - 3 * np.log(2))
    assert kl_divergence(2 * np.eye(2), np.eye(2)) != pytest.approx(kl_divergence(np.eye(2), 2 * np.eye(2)))
    rng = np.random.default_rng(12)
    for _ in range(20):
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 4))
        assert kl_divergence(A @ A.T + 0.1 * np.eye(4), B @ B.T + 0.1 * np.eye(4)) > 0
    with pytest.raises(ValueError):
        kl_divergence(-np.eye(2), np.eye(2))


def test_mse_deviation():
    S = np.eye(3)
    assert mse_deviation(S, S) == 0
    assert mse_deviation(S + 1, S) == pytest.approx(1.0)
    rng = np.random.default_rng(13)
    A, B = rng.normal(size=(2, 4, 4))
    assert mse_deviation(A, B) == pytest.approx(sum((A[i, j] - B[i, j]) ** 2 for i in range(4) for j in range(4)) / 16)
    with pytest.raises(ValueError):
        mse_deviation(np.eye(2), np.eye(3))


def test_containment_counts():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(100, 2))
    X[:10] += 8
    res = fit(X, KernelSpec.linear(), h_fraction=0.75)
    assert count_outlier_containment(res, [], 0.1) == (0, 0)
    assert count_outlier_containment(res, np.arange(10), 0.1) == (0, 0)
    inside = res.subset[:5]
    assert count_outlier_containment(res, inside, 0.05)[0] == 5


def test_scenario_validation():
    with pytest.raises(ValueError, match="valid"):
        SimScenario(generator="frank")
    with pytest.raises(ValueError, match="valid"):
        SimScenario(contamination="mixed")
    with pytest.raises(ValueError):
        SimScenario(epsilon=0.5)
    with pytest.raises(ValueError, match="bivariate"):
        SimScenario(generator="circle", p=3)


def test_replications_independent_of_parallelism():
    sc = SimScenario("alyz", n=60, p=3, epsilon=0.1, contamination="shift", seed=4)
    serial = run_simulation(sc, 3, workers=1)
    parallel = run_simulation(sc, 3, workers=3)
    for a, b in zip(serial, parallel):
        assert (a.kl, a.outliers_in_H, a.rho) == (b.kl, b.outliers_in_H, b.rho)
    assert run_replication(sc, 1).kl == serial[1].kl
    X, out, S = generate(sc, np.random.default_rng([4, 0]))
    assert S.shape == (3, 3) and len(out) == 6


def test_linear_scenario_reports_finite_kl():
    sc = SimScenario("alyz", n=100, p=10, epsilon=0.0, contamination="none", seed=1)
    r = run_replication(sc, 0)
    assert np.isfinite(r.kl) and np.isfinite(r.mse)
    sc = SimScenario("circle", n=100, epsilon=0.2, kernel="poly2", seed=1)
    assert np.isnan(run_replication(sc, 0).kl)
