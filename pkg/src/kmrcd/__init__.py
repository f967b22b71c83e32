"""Kernel minimum regularized covariance determinant (KMRCD) estimation."""

from .estimator import KmrcdFit, fit, fit_gram, flag_outliers, kernel_mahalanobis
from .kernel import KernelSpec, center_gram, gram_matrix, median_heuristic_bandwidth
from .robust_univariate import qn_scale, robust_standardize, univariate_mcd

__all__ = [
    "KernelSpec",
    "KmrcdFit",
    "center_gram",
    "fit",
    "fit_gram",
    "flag_outliers",
    "gram_matrix",
    "kernel_mahalanobis",
    "median_heuristic_bandwidth",
    "qn_scale",
    "robust_standardize",
    "univariate_mcd",
]

__version__ = "0.1.0"
