"""Synthetic data generators and accuracy measures for KMRCD experiments.

Linear settings draw Gaussian data with an ALYZ-type correlation matrix and
replace a fraction of the rows by point, shift or cluster outliers.
Nonlinear settings draw from a t or Clayton copula on the unit square, or
from the unit circle, with outliers added as described per generator.
Frank and Gumbel copulas are not provided.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .estimator import KmrcdFit, fit
from .kernel import KernelSpec

SHIFT_DISTANCE = 200.0
CLUSTER_SD = 0.05
COPULA_CLEARANCE = 0.05
MAX_REJECTION_DRAWS = 10 ** 6
CIRCLE_OUTLIER_VAR = 0.04

GENERATORS = ("alyz", "tcopula", "clayton", "circle")
CONTAMINATIONS = ("none", "point", "shift", "cluster")


def _n_outliers(n, epsilon):
    if not 0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must lie in [0, 0.5), got {epsilon}")
    m = int(np.floor(epsilon * n + 1e-9))
    if m >= n / 2:
        raise ValueError("contamination must affect fewer than half of the rows")
    return m


def generate_alyz_sigma(p, condition_number=100.0, rng=None, max_iter=100):
    """Random correlation matrix with a prescribed condition number."""
    if p < 2:
        raise ValueError("p must be at least 2")
    if not condition_number > 1:
        raise ValueError("condition number must exceed 1")
    rng = np.random.default_rng(rng)
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    Q = Q * np.sign(np.diag(R))
    lam = rng.uniform(1.0, condition_number, size=p)
    lam[0], lam[-1] = 1.0, condition_number
    sigma = (Q * lam) @ Q.T
    for _ in range(max_iter):
        s = np.sqrt(np.diag(sigma))
        sigma = sigma / np.outer(s, s)
        sigma = 0.5 * (sigma + sigma.T)
        np.fill_diagonal(sigma, 1.0)
        lam, V = np.linalg.eigh(sigma)
        kappa = lam[-1] / lam[0]
        if abs(kappa - condition_number) / condition_number < 1e-3:
            return sigma
        # stretch the spectrum about its smallest eigenvalue to restore the ratio
        lo, hi = lam[0], lam[-1]
        lo = max(lo, 1e-12 * hi)
        lam = lo + (lam - lam[0]) * (condition_number - 1.0) * lo / (hi - lam[0])
        sigma = (V * lam) @ V.T
    raise RuntimeError("ALYZ correlation matrix did not converge")


def outlier_direction(sigma):
    """Smallest-eigenvalue eigenvector scaled so that v' Sigma^-1 v = p."""
    p = sigma.shape[0]
    lam, V = np.linalg.eigh(sigma)
    return V[:, 0] * np.sqrt(p * lam[0])


def generate_contaminated(n, sigma, epsilon, contamination="shift", rng=None, k=SHIFT_DISTANCE):
    """Gaussian rows N(0, sigma) with a random fraction replaced by outliers.

    Returns ``(X, outlier_indices)``.
    """
    if contamination not in CONTAMINATIONS:
        raise ValueError(f"unknown contamination {contamination!r}; expected one of {CONTAMINATIONS}")
    rng = np.random.default_rng(rng)
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    X = rng.multivariate_normal(np.zeros(p), sigma, size=n, method="eigh")
    m = _n_outliers(n, epsilon) if contamination != "none" else 0
    if m == 0:
        return X, np.array([], dtype=int)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    mu = k * outlier_direction(sigma)
    if contamination == "point":
        X[idx] = mu
    elif contamination == "shift":
        X[idx] = rng.multivariate_normal(mu, sigma, size=m, method="eigh")
    else:
        X[idx] = mu + CLUSTER_SD * rng.standard_normal((m, p))
    return X, idx


def _mix(clean, outliers, rng):
    X = np.vstack([clean, outliers]) if len(outliers) else clean
    perm = rng.permutation(X.shape[0])
    X = X[perm]
    is_out = perm >= clean.shape[0]
    return X, np.flatnonzero(is_out)


def _uniform_outliers(clean, m, rng, clearance=COPULA_CLEARANCE):
    if m == 0:
        return np.empty((0, 2))
    tree = cKDTree(clean)
    found, draws = [], 0
    while len(found) < m:
        batch = max(4 * (m - len(found)), 64)
        draws += batch
        if draws > MAX_REJECTION_DRAWS:
            raise RuntimeError("outlier rejection sampling exceeded its draw budget")
        cand = rng.uniform(size=(batch, 2))
        dist, _ = tree.query(cand)
        found.extend(cand[dist > clearance])
    return np.array(found[:m])


def sample_t_copula(n, pearson=0.1, nu=1.0, rng=None):
    if not abs(pearson) < 1:
        raise ValueError("correlation must lie in (-1, 1)")
    if not nu >= 1:
        raise ValueError("degrees of freedom must be at least 1")
    rng = np.random.default_rng(rng)
    corr = np.array([[1.0, pearson], [pearson, 1.0]])
    z = rng.multivariate_normal(np.zeros(2), corr, size=n, method="cholesky")
    w = rng.chisquare(nu, size=n) / nu
    t = z / np.sqrt(w)[:, None]
    u = stats.t.cdf(t, nu)
    # keep the points strictly inside the unit square
    return np.clip(u, np.finfo(float).tiny, 1 - np.finfo(float).epsneg)


def clayton_theta(tau):
    return 2.0 * tau / (1.0 - tau)


def sample_clayton_copula(n, tau=0.6, rng=None):
    if not 0 < tau < 1:
        raise ValueError("Kendall tau must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    theta = clayton_theta(tau)
    u = rng.uniform(size=n)
    w = rng.uniform(size=n)
    v = (u ** -theta * (w ** (-theta / (1.0 + theta)) - 1.0) + 1.0) ** (-1.0 / theta)
    return np.column_stack([u, v])


def generate_t_copula(n, pearson=0.1, nu=1.0, epsilon=0.0, rng=None):
    rng = np.random.default_rng(rng)
    m = _n_outliers(n, epsilon)
    clean = sample_t_copula(n - m, pearson, nu, rng)
    return _mix(clean, _uniform_outliers(clean, m, rng), rng)


def generate_clayton_copula(n, tau=0.6, epsilon=0.0, rng=None):
    rng = np.random.default_rng(rng)
    m = _n_outliers(n, epsilon)
    clean = sample_clayton_copula(n - m, tau, rng)
    return _mix(clean, _uniform_outliers(clean, m, rng), rng)


def generate_circle(n, epsilon=0.0, rng=None):
    rng = np.random.default_rng(rng)
    m = _n_outliers(n, epsilon)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n - m)
    clean = np.column_stack([np.cos(theta), np.sin(theta)])
    outliers = np.sqrt(CIRCLE_OUTLIER_VAR) * rng.standard_normal((m, 2))
    return _mix(clean, outliers, rng)


def kl_divergence(sigma_hat, sigma):
    """trace(S^ S^-1) - log det(S^ S^-1) - p for positive definite inputs."""
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma_hat.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    try:
        Ls = np.linalg.cholesky(sigma)
        np.linalg.cholesky(sigma_hat)
    except np.linalg.LinAlgError:
        raise ValueError("KL divergence needs positive definite matrices") from None
    p = sigma.shape[0]
    A = np.linalg.solve(Ls, np.linalg.solve(Ls, sigma_hat).T)
    A = 0.5 * (A + A.T)
    _, logdet = np.linalg.slogdet(A)
    return float(max(np.trace(A) - logdet - p, 0.0))


def mse_deviation(sigma_hat, sigma):
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma_hat.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    p = sigma.shape[0]
    return float(((sigma_hat - sigma) ** 2).sum() / p ** 2)


def count_outlier_containment(fit_result: KmrcdFit, outliers, epsilon):
    """Outliers inside the h-subset and among the n(1-eps) smallest distances."""
    outliers = np.asarray(outliers, dtype=int)
    if outliers.size == 0:
        return 0, 0
    n = fit_result.distances.size
    in_h = int(np.isin(outliers, fit_result.subset).sum())
    top = np.argsort(fit_result.distances, kind="stable")[: n - _n_outliers(n, epsilon)]
    in_top = int(np.isin(outliers, top).sum())
    return in_h, in_top


@dataclass
class SimScenario:
    generator: str = "alyz"
    n: int = 200
    p: int = 2
    epsilon: float = 0.0
    contamination: str = "shift"
    kernel: str = "linear"
    sigma: float | None = None
    h_fraction: float = 0.75
    seed: int = 0
    pearson: float = 0.1
    nu: float = 1.0
    tau: float = 0.6

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; valid: {', '.join(GENERATORS)}")
        if self.contamination not in CONTAMINATIONS:
            raise ValueError(
                f"unknown contamination {self.contamination!r}; valid: {', '.join(CONTAMINATIONS)}")
        _n_outliers(self.n, self.epsilon)
        if self.generator != "alyz" and self.p != 2:
            raise ValueError(f"generator {self.generator!r} is bivariate; p must be 2")


@dataclass
class SimResult:
    replication: int
    h: int
    rho: float
    kl: float
    mse: float
    outliers_in_H: int
    outliers_in_top: int
    n_flagged: int
    runtime: float


def kernel_from_name(name, sigma=None):
    if name == "linear":
        return KernelSpec.linear()
    if name == "rbf":
        return KernelSpec.rbf(sigma)
    if name == "poly2":
        return KernelSpec.polynomial(2, 1.0)
    raise ValueError(f"unknown kernel {name!r}; valid: linear, rbf, poly2")


def generate(scenario: SimScenario, rng):
    """Draw one dataset; returns ``(X, outliers, true covariance or None)``."""
    g = scenario.generator
    if g == "alyz":
        sigma = generate_alyz_sigma(scenario.p, rng=rng)
        X, out = generate_contaminated(scenario.n, sigma, scenario.epsilon,
                                       scenario.contamination, rng)
        return X, out, sigma
    if g == "tcopula":
        X, out = generate_t_copula(scenario.n, scenario.pearson, scenario.nu, scenario.epsilon, rng)
    elif g == "clayton":
        X, out = generate_clayton_copula(scenario.n, scenario.tau, scenario.epsilon, rng)
    else:
        X, out = generate_circle(scenario.n, scenario.epsilon, rng)
    return X, out, None


def run_replication(scenario: SimScenario, rep: int) -> SimResult:
    """One independent replication keyed by (scenario seed, replication index)."""
    rng = np.random.default_rng([scenario.seed, rep])
    X, out, sigma = generate(scenario, rng)
    kernel = kernel_from_name(scenario.kernel, scenario.sigma)
    t0 = time.perf_counter()
    res = fit(X, kernel, h_fraction=scenario.h_fraction, seed=rng)
    runtime = time.perf_counter() - t0
    kl = mse = float("nan")
    if sigma is not None and res.linear_covariance is not None:
        kl = kl_divergence(res.linear_covariance, sigma)
        mse = mse_deviation(res.linear_covariance, sigma)
    in_h, in_top = count_outlier_containment(res, out, scenario.epsilon)
    return SimResult(rep, res.h, res.rho, kl, mse, in_h, in_top, int(res.flags.sum()), runtime)


def run_simulation(scenario: SimScenario, reps: int, workers: int = 1):
    """Run ``reps`` replications; results are returned in replication order."""
    if workers <= 1 or reps <= 1:
        return [run_replication(scenario, r) for r in range(reps)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: run_replication(scenario, r), range(reps)))


def result_row(scenario: SimScenario, result: SimResult):
    row = asdict(scenario)
    row.update(asdict(result))
    return row
