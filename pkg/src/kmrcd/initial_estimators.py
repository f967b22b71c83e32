"""Kernelized initial estimators of location and scatter.

Each estimator maps a raw Gram matrix to a :class:`WeightPair` of location
weights ``w`` and covariance weights ``u``.  The spatial median, SDO and
spatial rank estimators produce 0/1 indicator weights of an h-subset; the
spatial sign covariance estimator produces continuous weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEDIAN_EPS = 1e-12
SSCM_MIN_DIST = 1e-10
DUPLICATE_EPS = 1e-12
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class WeightPair:
    w: np.ndarray
    u: np.ndarray
    origin: str


def subset_from_scores(scores, h):
    """Indices of the h smallest scores (ties go to the smaller index).

    Returns ``(indices, WeightPair)`` with sorted indices and indicator
    weights ``w = u``.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    h = int(h)
    if not 0 < h <= n:
        raise ValueError(f"h must satisfy 0 < h <= n (n={n}, h={h})")
    idx = np.sort(np.argsort(scores, kind="stable")[:h])
    ind = np.zeros(n)
    ind[idx] = 1.0
    return idx, WeightPair(ind, ind.copy(), "subset")


def _indicator_pair(scores, h, origin):
    _, wp = subset_from_scores(scores, h)
    return WeightPair(wp.w, wp.u, origin)


def spatial_median_weights(K, iterations=10):
    """Coefficients gamma of the feature-space spatial median.

    Runs a fixed number of Weiszfeld-type updates starting from uniform
    weights.  A point sitting on the current median gets the capped weight
    ``MEDIAN_EPS ** -0.5`` before normalization.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    gamma = np.full(n, 1.0 / n)
    diag = np.diag(K)
    for _ in range(iterations):
        Kg = K @ gamma
        sq = diag - 2.0 * Kg + gamma @ Kg
        inv = np.where(sq > MEDIAN_EPS, 1.0 / np.sqrt(np.maximum(sq, MEDIAN_EPS)), MEDIAN_EPS ** -0.5)
        gamma = inv / inv.sum()
    return gamma


def distances_to_spatial_median(K, gamma):
    """Feature-space distances ``||phi(x_i) - sum_j gamma_j phi(x_j)||``."""
    K = np.asarray(K, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    Kg = K @ gamma
    sq = np.diag(K) + gamma @ Kg - 2.0 * Kg
    return np.sqrt(np.maximum(sq, 0.0))


def spatial_median_subset(K, h, iterations=10):
    gamma = spatial_median_weights(K, iterations)
    return _indicator_pair(distances_to_spatial_median(K, gamma), h, "spatial_median")


def sdo_pairs(n, n_directions=500, rng=None):
    """Random index pairs ``(first, second)`` with ``first != second``."""
    if n < 2:
        raise ValueError("SDO needs at least two observations")
    rng = np.random.default_rng(rng)
    first = rng.integers(0, n, size=n_directions)
    second = rng.integers(0, n - 1, size=n_directions)
    return first, second + (second >= first)


def sdo_outlyingness(K, n_directions=500, rng=None, pairs=None):
    """Kernel Stahel-Donoho outlyingness over random two-point directions.

    Each direction runs through two observations; ``pairs`` may supply
    the index pairs explicitly instead of drawing them from ``rng``.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if pairs is None:
        first, second = sdo_pairs(n, n_directions, rng)
    else:
        first, second = (np.asarray(a, dtype=int) for a in pairs)
        if np.any(first == second):
            raise ValueError("SDO direction pairs must join two distinct observations")
    n_directions = first.size

    eta = np.zeros(n)
    used = 0
    diag = np.diag(K)
    # process directions in blocks to bound memory at n * block
    block = max(1, min(n_directions, (1 << 22) // max(n, 1)))
    for s in range(0, n_directions, block):
        i = first[s:s + block]
        j = second[s:s + block]
        denom = diag[i] + diag[j] - 2.0 * K[i, j]
        A = K[:, i] - K[:, j]
        valid = denom > MEDIAN_EPS
        if not valid.any():
            continue
        A = A[:, valid] / np.sqrt(denom[valid])
        med = np.median(A, axis=0)
        dev = np.abs(A - med)
        mad = MAD_SCALE * np.median(dev, axis=0)
        ok = mad > 0
        if not ok.any():
            continue
        r = dev[:, ok] / mad[ok]
        eta = np.maximum(eta, r.max(axis=1))
        used += int(ok.sum())
    if used == 0:
        raise ValueError("degenerate data for SDO: every direction has zero spread")
    return eta


def sdo_weights(K, h, n_directions=500, rng=None, pairs=None):
    eta = sdo_outlyingness(K, n_directions, rng, pairs)
    return _indicator_pair(eta, h, "sdo")


def spatial_ranks(K):
    """Spatial rank of every feature vector, computed from the Gram matrix."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    diag = np.diag(K)
    alpha2 = diag[:, None] + diag[None, :] - 2.0 * K
    alpha = np.sqrt(np.maximum(alpha2, 0.0))
    A = np.zeros_like(K)
    mask = alpha > DUPLICATE_EPS
    np.fill_diagonal(mask, False)
    A[mask] = 1.0 / alpha[mask]
    s = A.sum(axis=1)
    t = (A * K).sum(axis=1)
    q = ((A @ K) * A).sum(axis=1)
    sq = diag * s ** 2 - 2.0 * s * t + q
    return np.sqrt(np.maximum(sq, 0.0)) / n


def spatial_rank_weights(K, h):
    return _indicator_pair(spatial_ranks(K), h, "spatial_rank")


def sscm_weights(K, iterations=10):
    """Spatial sign covariance weights: ``w = gamma`` and ``u_i = 1/d_i``."""
    gamma = spatial_median_weights(K, iterations)
    d = distances_to_spatial_median(K, gamma)
    u = 1.0 / np.maximum(d, SSCM_MIN_DIST)
    return WeightPair(gamma, u, "sscm")


def initial_weights(K, h, rng=None, n_directions=500, sdo_index_pairs=None):
    """The four initial weight pairs in a fixed order."""
    return [
        spatial_median_subset(K, h),
        sdo_weights(K, h, n_directions=n_directions, rng=rng, pairs=sdo_index_pairs),
        spatial_rank_weights(K, h),
        sscm_weights(K),
    ]
