"""Univariate robust estimators: MCD, reweighted MCD, Qn and standardization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

REWEIGHT_CUTOFF = 2.5
QN_CONSTANT = 2.2219
# small-sample correction factors of Qn for n = 2..9
_QN_SMALL_N = {2: 0.399, 3: 0.994, 4: 0.512, 5: 0.844, 6: 0.611, 7: 0.857, 8: 0.669, 9: 0.872}
_QN_BRUTE_FORCE_MAX_N = 1000


@dataclass(frozen=True)
class LocationScale:
    location: float
    scale: float
    support: np.ndarray = field(repr=False)


def _as_values(values):
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 values")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    return v


def mcd_consistency_factor(h, n):
    """Consistency factor c_alpha of the univariate MCD at coverage h/n."""
    alpha = h / n
    if alpha >= 1.0:
        return 1.0
    q = stats.chi2.ppf(alpha, 1)
    return alpha / stats.chi2.cdf(q, 3)


def _best_window(sorted_v, h):
    # running sums give the sum of squared deviations of every length-h window
    c1 = np.concatenate(([0.0], np.cumsum(sorted_v)))
    c2 = np.concatenate(([0.0], np.cumsum(sorted_v ** 2)))
    s1 = c1[h:] - c1[:-h]
    s2 = c2[h:] - c2[:-h]
    ss = s2 - s1 ** 2 / h
    # recompute near-minimal windows exactly to make the choice round-off free
    tol = 1e-9 * max(abs(ss).max(), 1.0)
    cands = np.flatnonzero(ss <= ss.min() + tol)
    exact = [np.sum((sorted_v[j:j + h] - sorted_v[j:j + h].mean()) ** 2) for j in cands]
    return int(cands[int(np.argmin(exact))])


def univariate_mcd(values, h) -> LocationScale:
    """Univariate MCD: the length-h window of sorted values with least variance.

    The returned scale includes the consistency factor ``sqrt(c_alpha)``;
    ``support`` holds the original indices of the window.
    """
    v = _as_values(values)
    n = v.size
    h = int(h)
    if not (n / 2 <= h <= n):
        raise ValueError(f"h must satisfy n/2 <= h <= n (n={n}, h={h})")
    order = np.argsort(v, kind="stable")
    sv = v[order]
    j = _best_window(sv, h)
    window = sv[j:j + h]
    loc = float(window.mean())
    raw = float(window.std(ddof=1)) if h > 1 else 0.0
    scale = raw * np.sqrt(mcd_consistency_factor(h, n))
    return LocationScale(loc, float(scale), np.sort(order[j:j + h]))


def _truncated_normal_factor(cutoff):
    q = cutoff ** 2
    return stats.chi2.cdf(q, 1) / stats.chi2.cdf(q, 3)


def reweighted_univariate_mcd(values) -> LocationScale:
    """Reweighted univariate MCD with coverage ``n//2 + 1``.

    Observations within 2.5 raw scales of the raw location are kept; their
    mean and rescaled standard deviation form the estimate.
    """
    v = _as_values(values)
    n = v.size
    raw = univariate_mcd(v, n // 2 + 1)
    if raw.scale == 0:
        return raw
    keep = np.flatnonzero(np.abs(v - raw.location) / raw.scale <= REWEIGHT_CUTOFF)
    kept = v[keep]
    loc = float(kept.mean())
    if kept.size < 2:
        return LocationScale(loc, raw.scale, keep)
    scale = float(kept.std(ddof=1)) * np.sqrt(_truncated_normal_factor(REWEIGHT_CUTOFF))
    return LocationScale(loc, scale, keep)


def qn_correction(n):
    if n <= 9:
        return _QN_SMALL_N[n]
    return n / (n + 1.4) if n % 2 else n / (n + 3.8)


def _qn_order(n):
    h = n // 2 + 1
    return h * (h - 1) // 2


def _kth_pairwise_diff_brute(v, k):
    i, j = np.triu_indices(v.size, k=1)
    d = np.abs(v[i] - v[j])
    return float(np.partition(d, k - 1)[k - 1])


def _kth_pairwise_diff_select(v, k):
    """k-th smallest ``|v_i - v_j|`` (i < j) without forming all pairs.

    Bisects on the value with O(n log n) pair counting, then resolves the
    exact order statistic among the few remaining candidate pairs.
    """
    y = np.sort(v)
    n = y.size
    idx = np.arange(n)

    def last_within(t):
        # per i, the largest j >= i with y[j] - y[i] <= t (exact float differences)
        lo = idx.copy()
        hi = np.full(n, n)
        while True:
            active = hi - lo > 1
            if not active.any():
                return lo
            mid = (lo + hi) // 2
            ok = np.zeros(n, dtype=bool)
            ok[active] = y[mid[active]] - y[idx[active]] <= t
            lo = np.where(active & ok, mid, lo)
            hi = np.where(active & ~ok, mid, hi)

    span = float(y[-1] - y[0])
    if span == 0:
        return 0.0
    lo_t, lo_last = None, idx
    hi_t, hi_last = span, np.full(n, n - 1)
    c_lo, c_hi = 0, n * (n - 1) // 2
    while c_hi - c_lo > max(4 * n, 64):
        mid = 0.5 * ((lo_t if lo_t is not None else 0.0) + hi_t)
        if mid >= hi_t or (lo_t is not None and mid <= lo_t):
            break
        last = last_within(mid)
        c = int((last - idx).sum())
        if c >= k:
            hi_t, hi_last, c_hi = mid, last, c
        else:
            lo_t, lo_last, c_lo = mid, last, c
    cand = [y[lo_last[a] + 1:hi_last[a] + 1] - y[a] for a in np.flatnonzero(hi_last > lo_last)]
    cand = np.sort(np.concatenate(cand))
    return float(cand[k - c_lo - 1])


def qn_scale(values, method="auto") -> float:
    """Qn scale estimate.

    ``method`` selects ``brute`` (all pairs), ``select`` (pair counting) or
    ``auto``; both give identical results.
    """
    v = _as_values(values)
    n = v.size
    k = _qn_order(n)
    if method == "auto":
        method = "brute" if n <= _QN_BRUTE_FORCE_MAX_N else "select"
    if method == "brute":
        kth = _kth_pairwise_diff_brute(v, k)
    elif method == "select":
        kth = _kth_pairwise_diff_select(v, k)
    else:
        raise ValueError(f"unknown Qn method {method!r}")
    return QN_CONSTANT * qn_correction(n) * kth


def qn_scale_columns(B) -> np.ndarray:
    """Qn of every column of a 2-D array (vectorized brute force)."""
    B = np.asarray(B, dtype=float)
    n, r = B.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if n > _QN_BRUTE_FORCE_MAX_N:
        return np.array([qn_scale(B[:, j]) for j in range(r)])
    k = _qn_order(n)
    i, j = np.triu_indices(n, k=1)
    out = np.empty(r)
    # bound the temporary pair matrix to roughly 2**24 entries
    step = max(1, (1 << 24) // max(i.size, 1))
    for s in range(0, r, step):
        blk = B[:, s:s + step]
        d = np.abs(blk[i] - blk[j])
        out[s:s + step] = np.partition(d, k - 1, axis=0)[k - 1]
    return QN_CONSTANT * qn_correction(n) * out


def robust_standardize(X):
    """Column-wise z-scores from the reweighted univariate MCD.

    Returns ``(Z, locations, scales)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-D array")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    locs = np.empty(X.shape[1])
    scales = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        est = reweighted_univariate_mcd(X[:, j])
        if not est.scale > 0:
            raise ValueError(f"column {j} has zero robust scale")
        locs[j], scales[j] = est.location, est.scale
    return (X - locs) / scales, locs, scales
