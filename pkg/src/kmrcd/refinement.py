"""Kernelized refinement of an initial location/scatter estimate.

The initial estimate is given by location weights ``w`` and covariance
weights ``u``.  Its eigenvalues are re-estimated by the squared Qn scale of
the data projected on its eigenvectors, the center is replaced by the
spatial median in the whitened space, and the h observations closest to
that fit form the refined subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .initial_estimators import WeightPair, spatial_median_weights, subset_from_scores
from .kernel import center_gram_weighted
from .robust_univariate import qn_scale_columns

RANK_EPS = 1e-9
QN_FLOOR = 1e-10


@dataclass
class RefinementState:
    eigenvalues: np.ndarray  # retained eigenvalues of the weighted centered Gram, descending
    B: np.ndarray            # projections of the uncentered data, (n, r)
    L: np.ndarray            # squared Qn of every column of B
    K_star: np.ndarray       # Gram matrix of the whitened feature map
    gamma_star: np.ndarray   # spatial median coefficients on K_star
    distances: np.ndarray    # squared whitened distances to the refined center

    @property
    def rank(self):
        return self.eigenvalues.size


def refine_state(K, wp: WeightPair) -> RefinementState:
    K = np.asarray(K, dtype=float)
    w = np.asarray(wp.w, dtype=float)
    u = np.asarray(wp.u, dtype=float)
    if np.any(w < 0) or np.any(u < 0) or not (w.sum() > 0 and u.sum() > 0):
        raise ValueError("weights must be nonnegative with a positive sum")
    w = w / w.sum()
    u = u / u.sum()
    sqrt_d = np.sqrt(u)

    K_hat = sqrt_d[:, None] * center_gram_weighted(K, w) * sqrt_d[None, :]
    lam, V = np.linalg.eigh(K_hat)
    lam, V = lam[::-1], V[:, ::-1]
    keep = lam > RANK_EPS * max(lam[0], 0.0)
    # a spectrum at round-off level of the kernel values carries no scatter
    roundoff = K.shape[0] * np.finfo(float).eps * max(np.abs(K).max(), np.finfo(float).tiny)
    if lam[0] <= roundoff or not keep.any():
        raise ValueError("all variance in weighted center: the initial scatter has rank 0")
    lam, V = lam[keep], V[:, keep]

    # unit-norm feature-space eigenvectors are Phi~' D^(1/2) V Lambda^(-1/2)
    M = sqrt_d[:, None] * V / np.sqrt(lam)[None, :]
    # Phi Phi~' = K - K w 1', the one-sided centering
    K_half = K - (K @ w)[:, None]
    B = K_half @ M

    L = np.maximum(qn_scale_columns(B), QN_FLOOR) ** 2
    Bw = B / np.sqrt(L)[None, :]
    K_star = Bw @ Bw.T
    K_star = 0.5 * (K_star + K_star.T)
    gamma = spatial_median_weights(K_star)

    # k*(x_i, X)_j = (phi(x_i) - c*)'(phi(x_j) - c_w); the trailing double sum
    # enters with a plus sign, as exact expansion of the inner product requires
    Kg = K @ gamma
    k_star = K_half - Kg[None, :] + (gamma @ K @ w)
    G = (k_star @ M) / np.sqrt(L)[None, :]
    d = np.maximum((G * G).sum(axis=1), 0.0)
    return RefinementState(lam, B, L, K_star, gamma, d)


def refine(K, wp: WeightPair, h):
    """Refined h-subset (sorted indices) for one initial estimate."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    h = int(h)
    if not 0 < h <= n:
        raise ValueError(f"h must satisfy 0 < h <= n (n={n}, h={h})")
    state = refine_state(K, wp)
    idx, _ = subset_from_scores(state.distances, h)
    return idx
