"""Kernel minimum regularized covariance determinant (KMRCD) estimator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .initial_estimators import initial_weights, subset_from_scores
from .kernel import (
    KernelSpec,
    center_cross,
    center_gram,
    center_self,
    cross_gram,
    gram_matrix,
    median_heuristic_bandwidth,
    validate_gram,
)
from .refinement import refine
from .robust_univariate import robust_standardize, univariate_mcd

log = logging.getLogger(__name__)

KAPPA_MAX = 50.0
RHO_FLOOR = 1e-6
MAX_CSTEPS = 100
Z_995 = float(stats.norm.ppf(0.995))
LD_SHIFT = 0.1
SIGMA_FLOOR = 1e-12


def condition_number(eigs, rho, h):
    eigs = np.maximum(np.asarray(eigs, dtype=float), 0.0)
    return ((h - 1) * rho + (1 - rho) * eigs.max()) / ((h - 1) * rho + (1 - rho) * eigs.min())


def select_rho(eigs, h, kappa_max=KAPPA_MAX):
    """Smallest rho in (0, 1] whose regularized condition number is <= kappa_max."""
    eigs = np.maximum(np.asarray(eigs, dtype=float), 0.0)
    big, small = float(eigs.max()), float(eigs.min())
    gap = big - kappa_max * small
    if gap <= 0:
        return RHO_FLOOR
    rho = gap / (gap + (kappa_max - 1.0) * (h - 1))
    if not 0 < rho <= 1 or condition_number(eigs, rho, h) > kappa_max * (1 + 1e-9):
        rho = _bisect_rho(eigs, h, 0.0, kappa_max)
    return max(float(rho), RHO_FLOOR)


def _bisect_rho(eigs, h, lo=0.0, kappa_max=KAPPA_MAX):
    # condition number decreases in rho, so bisect for the smallest feasible one
    hi = 1.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if condition_number(eigs, mid, h) <= kappa_max:
            hi = mid
        else:
            lo = mid
    return hi


def combine_rhos(rhos):
    rhos = np.asarray(rhos, dtype=float)
    if rhos.max() <= 0.1:
        return float(rhos.max())
    return float(max(0.1, np.median(rhos)))


def regularized_gram(Kc_H, rho, h=None):
    """``(1 - rho) Kc_H + (h - 1) rho I`` for a centered subset Gram block."""
    Kc_H = np.asarray(Kc_H, dtype=float)
    h = Kc_H.shape[0] if h is None else int(h)
    return (1.0 - rho) * Kc_H + (h - 1) * rho * np.eye(h)


def objective(Kc_H, rho, h=None):
    """Log-determinant of the regularized subset Gram matrix."""
    Kc_H = np.asarray(Kc_H, dtype=float)
    h = Kc_H.shape[0] if h is None else int(h)
    lam = np.linalg.eigvalsh(Kc_H)
    return _objective_from_eigs(lam, rho, h)


def _objective_from_eigs(lam, rho, h):
    return float(np.sum(np.log((1.0 - rho) * np.maximum(lam, 0.0) + (h - 1) * rho)))


@dataclass
class SubsetFit:
    """Cached eigendecomposition of the centered Gram block of one h-subset."""

    subset: np.ndarray
    rho: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    K_HH: np.ndarray

    @classmethod
    def build(cls, K, subset, rho):
        subset = np.asarray(subset)
        K_HH = K[np.ix_(subset, subset)]
        lam, V = np.linalg.eigh(center_gram(K_HH))
        return cls(subset, float(rho), lam, V, K_HH)

    @property
    def h(self):
        return self.subset.size

    @property
    def objective(self):
        return _objective_from_eigs(self.eigenvalues, self.rho, self.h)

    @property
    def reg_eigenvalues(self):
        return (1.0 - self.rho) * np.maximum(self.eigenvalues, 0.0) + (self.h - 1) * self.rho

    def distances(self, K_Hx, k_xx):
        """Regularized kernel Mahalanobis distances of query points.

        ``K_Hx`` holds raw kernel values between the subset and the queries,
        ``k_xx`` the raw self-similarities of the queries.
        """
        rho = self.rho
        kt = center_cross(self.K_HH, K_Hx)
        kxx = center_self(self.K_HH, K_Hx, k_xx)
        proj = self.eigenvectors.T @ kt
        quad = ((proj * proj) / self.reg_eigenvalues[:, None]).sum(axis=0)
        md2 = (kxx - (1.0 - rho) * quad) / rho
        return np.sqrt(np.maximum(md2, 0.0))


def kernel_mahalanobis(K, subset, rho, i=None):
    """Regularized kernel Mahalanobis distance(s) relative to an h-subset.

    With ``i`` None, returns the distances of all n observations.
    """
    K = np.asarray(K, dtype=float)
    sf = SubsetFit.build(K, subset, rho)
    d = sf.distances(K[sf.subset, :], np.diag(K))
    return d if i is None else float(d[i])


def c_step(K, subset, rho):
    """One concentration step: the h observations closest to the current fit."""
    K = np.asarray(K, dtype=float)
    d = kernel_mahalanobis(K, subset, rho)
    idx, _ = subset_from_scores(d, len(subset))
    return idx


def run_csteps(K, subset, rho, max_steps=MAX_CSTEPS):
    """Iterate C-steps until the subset repeats.

    Returns ``(final SubsetFit, objective trace, converged flag)``.
    """
    K = np.asarray(K, dtype=float)
    diag = np.diag(K)
    sf = SubsetFit.build(K, np.sort(np.asarray(subset)), rho)
    trace = [sf.objective]
    h = sf.h
    for _ in range(max_steps):
        d = sf.distances(K[sf.subset, :], diag)
        new, _ = subset_from_scores(d, h)
        if np.array_equal(new, sf.subset):
            return sf, trace, True
        sf = SubsetFit.build(K, new, rho)
        trace.append(sf.objective)
    return sf, trace, False


def flag_outliers(distances, h):
    """Cutoff on robust distances from a univariate MCD of log-distances."""
    d = np.asarray(distances, dtype=float)
    ld = np.log(LD_SHIFT + d)
    est = univariate_mcd(ld, h)
    sigma = max(est.scale, SIGMA_FLOOR)
    cutoff = float(np.exp(est.location + Z_995 * sigma) - LD_SHIFT)
    return cutoff, d > cutoff


def linear_covariance(X, subset, rho):
    """Center and regularized covariance of an h-subset in coordinates."""
    X = np.asarray(X, dtype=float)
    XH = X[np.asarray(subset)]
    h, p = XH.shape
    center = XH.mean(axis=0)
    Xc = XH - center
    cov = (1.0 - rho) / (h - 1) * (Xc.T @ Xc) + rho * np.eye(p)
    return center, 0.5 * (cov + cov.T)


def default_h(n, kernel: KernelSpec, p=None, h_fraction=None):
    if h_fraction is None:
        h_fraction = 0.5 if (kernel.kind == "linear" and p is not None and p <= 10) else 0.75
    if not 0.5 <= h_fraction < 1:
        raise ValueError(f"h_fraction must lie in [0.5, 1), got {h_fraction}")
    return max(int(np.floor(h_fraction * n)), (n + 1) // 2)


@dataclass
class StartResult:
    origin: str
    initial_subset: np.ndarray
    rho: float
    subset: np.ndarray
    objective: float
    n_steps: int
    converged: bool


@dataclass
class KmrcdFit:
    subset: np.ndarray
    h: int
    rho: float
    kernel: KernelSpec
    distances: np.ndarray
    objective: float
    cutoff: float
    flags: np.ndarray
    starts: list
    best_start: int
    cstep_rho: float
    eigenvalues: np.ndarray = field(repr=False)
    locations: np.ndarray | None = None
    scales: np.ndarray | None = None
    linear_center: np.ndarray | None = None
    linear_covariance: np.ndarray | None = None
    _subset_fit: SubsetFit | None = field(default=None, repr=False)
    _support: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.distances.size

    @property
    def condition_number(self):
        reg = self._subset_fit.reg_eigenvalues
        return float(reg.max() / reg.min())

    def mahalanobis(self, X_new):
        """Robust distances of new observations given in original coordinates."""
        if self._support is None:
            raise ValueError("distances of new points need a fit on coordinates")
        Z = np.atleast_2d(np.asarray(X_new, dtype=float))
        if self.locations is not None:
            Z = (Z - self.locations) / self.scales
        K_Hx = cross_gram(self.kernel, self._support, Z)
        k_xx = np.array([cross_gram(self.kernel, z[None, :], z[None, :])[0, 0] for z in Z])
        return self._subset_fit.distances(K_Hx, k_xx)

    def report(self):
        out = {
            "n": int(self.n),
            "h": int(self.h),
            "rho": self.rho,
            "cstep_rho": self.cstep_rho,
            "condition_number": self.condition_number,
            "objective": self.objective,
            "cutoff": self.cutoff,
            "kernel": self.kernel.describe(),
            "subset_indices": [int(i) for i in self.subset],
            "n_flagged": int(self.flags.sum()),
            "best_start": self.starts[self.best_start].origin,
            "starts": [
                {
                    "origin": s.origin,
                    "rho": s.rho,
                    "objective": s.objective,
                    "csteps": s.n_steps,
                    "converged": s.converged,
                }
                for s in self.starts
            ],
        }
        if self.locations is not None:
            out["standardization"] = {
                "location": [float(v) for v in self.locations],
                "scale": [float(v) for v in self.scales],
            }
        return out


def fit_gram(K, h, rng=None, kernel=None, n_directions=500, sdo_index_pairs=None):
    """Run KMRCD on a (validated) Gram matrix.

    ``sdo_index_pairs`` overrides the random SDO directions, e.g. to map a
    fixed draw through a row permutation.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    h = int(h)
    if not (n / 2 <= h < n):
        raise ValueError(f"h must satisfy n/2 <= h < n (n={n}, h={h})")
    kernel = kernel or KernelSpec.precomputed()

    weights = initial_weights(K, h, rng=rng, n_directions=n_directions,
                              sdo_index_pairs=sdo_index_pairs)
    refined = [refine(K, wp, h) for wp in weights]
    rhos = []
    for sub in refined:
        lam = np.linalg.eigvalsh(center_gram(K[np.ix_(sub, sub)]))
        rhos.append(select_rho(lam, h))
    rho = combine_rhos(rhos)
    log.debug("per-start rho %s -> %s", rhos, rho)

    starts, fits = [], []
    for wp, sub, r in zip(weights, refined, rhos):
        sf, trace, conv = run_csteps(K, sub, rho)
        starts.append(StartResult(wp.origin, sub, r, sf.subset, sf.objective, len(trace) - 1, conv))
        fits.append(sf)
    best = int(np.argmin([s.objective for s in starts]))
    sf = fits[best]
    # C-steps can drift to a subset whose spectrum needs more shrinkage than
    # the combined rho gives; raise rho for that subset only
    final_rho = max(rho, select_rho(sf.eigenvalues, h))
    if condition_number(sf.eigenvalues, final_rho, h) > KAPPA_MAX * (1 + 1e-9):
        final_rho = _bisect_rho(sf.eigenvalues, h, final_rho)
    if final_rho != rho:
        log.debug("final rho raised from %s to %s", rho, final_rho)
        sf = SubsetFit(sf.subset, final_rho, sf.eigenvalues, sf.eigenvectors, sf.K_HH)
    d = sf.distances(K[sf.subset, :], np.diag(K))
    cutoff, flags = flag_outliers(d, h)
    return KmrcdFit(
        subset=sf.subset,
        h=h,
        rho=sf.rho,
        kernel=kernel,
        distances=d,
        objective=sf.objective,
        cutoff=cutoff,
        flags=flags,
        starts=starts,
        best_start=best,
        cstep_rho=rho,
        eigenvalues=sf.eigenvalues,
        _subset_fit=sf,
    )


def fit(X=None, kernel: KernelSpec | None = None, *, gram=None, h=None, h_fraction=None,
        seed=0, standardize=True, n_directions=500, sdo_index_pairs=None) -> KmrcdFit:
    """Fit KMRCD to coordinates ``X`` or to a precomputed Gram matrix.

    Coordinates are robustly standardized first (unless ``standardize`` is
    False); an RBF kernel without bandwidth gets the median heuristic.
    """
    rng = np.random.default_rng(seed)
    if (X is None) == (gram is None):
        raise ValueError("pass exactly one of X or gram")
    if gram is not None:
        K = validate_gram(gram)
        kernel = KernelSpec.precomputed()
        n = K.shape[0]
        if h is None:
            h = default_h(n, kernel, None, h_fraction)
        return fit_gram(K, h, rng=rng, kernel=kernel, n_directions=n_directions,
                        sdo_index_pairs=sdo_index_pairs)

    kernel = kernel or KernelSpec.linear()
    if kernel.kind == "precomputed":
        raise ValueError("a precomputed kernel needs gram=, not coordinates")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if standardize:
        Z, locs, scales = robust_standardize(X)
    else:
        Z, locs, scales = X, None, None
    if kernel.kind == "rbf" and kernel.sigma is None:
        kernel = kernel.with_sigma(median_heuristic_bandwidth(Z, standardized=True))
        log.info("median heuristic bandwidth sigma=%.17g", kernel.sigma)
    if h is None:
        h = default_h(n, kernel, p, h_fraction)
    K = gram_matrix(kernel, Z)
    result = fit_gram(K, h, rng=rng, kernel=kernel, n_directions=n_directions,
                      sdo_index_pairs=sdo_index_pairs)
    result.locations, result.scales = locs, scales
    result._support = Z[result.subset]
    if kernel.kind == "linear":
        center, cov = linear_covariance(Z, result.subset, result.rho)
        if standardize:
            center = locs + scales * center
            cov = cov * np.outer(scales, scales)
        result.linear_center, result.linear_covariance = center, cov
    return result
