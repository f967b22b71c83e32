"""Kernel functions, Gram matrices and feature-space centering.

All routines operate on dense numpy arrays.  A Gram matrix is an ``(n, n)``
float array; centered variants are produced by the ``center_*`` helpers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8

KERNEL_KINDS = ("linear", "rbf", "poly", "precomputed")


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to use and its parameters.

    ``kind`` is one of ``linear``, ``rbf``, ``poly`` or ``precomputed``.
    ``sigma`` may be left as None for an RBF kernel whose bandwidth is
    resolved later by the median heuristic.
    """

    kind: str = "linear"
    sigma: float | None = None
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "rbf" and self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"RBF sigma must be positive, got {self.sigma}")
        if self.kind == "poly" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError(f"polynomial degree must be a positive integer, got {self.degree}")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def rbf(cls, sigma=None):
        return cls("rbf", sigma=sigma)

    @classmethod
    def polynomial(cls, degree=2, offset=1.0):
        return cls("poly", degree=degree, offset=offset)

    @classmethod
    def precomputed(cls):
        return cls("precomputed")

    def with_sigma(self, sigma):
        return KernelSpec(self.kind, sigma=float(sigma), degree=self.degree, offset=self.offset)

    def describe(self):
        if self.kind == "rbf":
            return {"kind": "rbf", "sigma": self.sigma}
        if self.kind == "poly":
            return {"kind": "poly", "degree": self.degree, "offset": self.offset}
        return {"kind": self.kind}


def _check_evaluable(spec):
    if spec.kind == "precomputed":
        raise ValueError("no kernel function available for a precomputed kernel")
    if spec.kind == "rbf" and spec.sigma is None:
        raise ValueError("RBF kernel needs a bandwidth; resolve sigma first")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for two vectors."""
    _check_evaluable(spec)
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("kernel arguments must be finite")
    return float(cross_gram(spec, x[None, :], y[None, :])[0, 0])


def _sq_dists(A, B):
    return cdist(A, B, "sqeuclidean")


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Matrix of kernel values ``k(a_i, b_j)`` between the rows of A and B."""
    _check_evaluable(spec)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "rbf":
        return np.exp(-_sq_dists(A, B) / (2.0 * spec.sigma ** 2))
    return (A @ B.T + spec.offset) ** int(spec.degree)


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Raw Gram matrix ``K[i, j] = k(x_i, x_j)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    with np.errstate(over="ignore", invalid="ignore"):
        K = cross_gram(spec, X, X)
    bad = np.argwhere(~np.isfinite(K))
    if bad.size:
        i, j = bad[0]
        raise FloatingPointError(f"non-finite kernel value for pair ({i}, {j})")
    # the matrix product is not bitwise symmetric; enforce it
    K = np.triu(K) + np.triu(K, 1).T
    if spec.kind == "rbf":
        np.fill_diagonal(K, 1.0)
    return K


def center_gram(K) -> np.ndarray:
    """Double-center a Gram matrix at the unweighted feature-space mean."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    return center_gram_weighted(K, np.full(n, 1.0 / n))


def center_gram_weighted(K, w) -> np.ndarray:
    """Center at the weighted mean ``sum_i w_i phi(x_i)``.

    Returns ``K - K w 1' - 1 w' K + (w' K w) 1 1'``.  ``w`` must lie on the
    simplex.
    """
    K = np.asarray(K, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-10:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    Kw = K @ w
    Kc = K - Kw[:, None] - Kw[None, :] + w @ Kw
    return 0.5 * (Kc + Kc.T)


def center_cross(K_HH, K_Hx):
    """Center kernel columns ``k(H, x)`` at the mean of the subset H.

    ``K_HH`` is the raw ``(h, h)`` block of H and ``K_Hx`` the raw ``(h, m)``
    kernel values between H and m query points.  Returns ``k~(H, x)`` for
    every query column, using 1/h and 1/h**2 normalization.
    """
    K_HH = np.asarray(K_HH, dtype=float)
    K_Hx = np.asarray(K_Hx, dtype=float)
    if K_Hx.ndim == 1:
        K_Hx = K_Hx[:, None]
    if K_Hx.shape[0] != K_HH.shape[0]:
        raise ValueError("cross-kernel block does not match subset size")
    row_mean = K_HH.mean(axis=1)
    return K_Hx - row_mean[:, None] - K_Hx.mean(axis=0)[None, :] + K_HH.mean()


def center_self(K_HH, K_Hx, k_xx):
    """Centered self-similarity ``k~(x, x) = ||phi(x) - c_H||^2`` (unclamped)."""
    K_Hx = np.asarray(K_Hx, dtype=float)
    if K_Hx.ndim == 1:
        K_Hx = K_Hx[:, None]
    return np.asarray(k_xx, dtype=float) - 2.0 * K_Hx.mean(axis=0) + np.mean(K_HH)


def cross_kernel(spec: KernelSpec, X_H, x) -> np.ndarray:
    """Vector ``[k~(x_i, x) for i in H]`` centered at the mean of ``X_H``."""
    X_H = np.atleast_2d(np.asarray(X_H, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    if X_H.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {X_H.shape[1]} vs {x.shape[0]}")
    K_HH = cross_gram(spec, X_H, X_H)
    K_Hx = cross_gram(spec, X_H, x[None, :])
    return center_cross(K_HH, K_Hx)[:, 0]


def median_heuristic_bandwidth(X, standardized=True) -> float:
    """RBF bandwidth: sigma**2 is the median squared pairwise distance.

    The rows of X are expected to be robustly standardized already; callers
    assert that through ``standardized``.
    """
    if not standardized:
        raise ValueError("median heuristic expects standardized data")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two observations for a bandwidth")
    d2 = pdist(X, "sqeuclidean")
    med = float(np.median(d2))
    if not med > 0:
        if np.all(d2 == 0):
            raise ValueError("degenerate data for bandwidth: all pairwise distances are zero")
        raise ValueError("degenerate data for bandwidth: median pairwise distance is zero")
    return float(np.sqrt(med))


def validate_gram(K, name="Gram matrix") -> np.ndarray:
    """Check a precomputed Gram matrix for shape, symmetry and PSD-ness.

    Eigenvalues below ``-1e-8 * lambda_max`` are rejected.  Smaller negative
    eigenvalues are round-off; the matrix is returned unmodified and the
    downstream computations clamp their own radicands.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"{name} must be square, got shape {K.shape}")
    if K.shape[0] < 2:
        raise ValueError(f"{name} needs at least two observations")
    if not np.all(np.isfinite(K)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = max(np.abs(K).max(), np.finfo(float).tiny)
    asym = np.abs(K - K.T).max()
    if asym > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3g})")
    eigs = np.linalg.eigvalsh(0.5 * (K + K.T))
    lam_max = max(eigs[-1], 0.0)
    if eigs[0] < -PSD_RTOL * max(lam_max, np.finfo(float).tiny):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {eigs[0]:.3g})")
    return K


def read_gram_csv(path) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    try:
        K = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: Gram matrix CSV must be numeric without header ({exc})") from None
    return validate_gram(K, name=str(path))
