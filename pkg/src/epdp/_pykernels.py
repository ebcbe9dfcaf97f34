"""Pure numpy implementations of the hot kernels.

Kept arithmetically identical to ``_ckernels.pyx`` wherever the outputs
feed a decision (OBS choice, sampling, RR reports): transcendental values
are computed with :mod:`math` once per distinct budget, as the C code
computes them with libm.
"""

import math

import numpy as np


def _map_distinct(budgets, fn):
    uniq, inv = np.unique(budgets, return_inverse=True)
    return np.array([fn(float(b)) for b in uniq], dtype=np.float64)[inv]


def obs_scan(values, counts, sensitivity):
    """Return ``(index, err)`` of the candidate with minimal modelled error.

    ``values`` are the distinct budgets in ascending order. Ties keep the
    earliest (smallest) candidate.
    """
    m = len(values)
    best = math.inf
    best_k = -1
    for k in range(m):
        th = float(values[k])
        denom = math.expm1(th)
        var = 0.0
        bias = 0.0
        for i in range(k):
            p = math.expm1(float(values[i])) / denom
            n_i = float(counts[i])
            var += n_i * p * (1.0 - p)
            bias += n_i * (1.0 - p)
        r = sensitivity / th
        err = var + bias * bias + 2.0 * (r * r)
        if err < best:
            best = err
            best_k = k
    return best_k, best


def sample_keep(values, budgets, threshold, uniforms):
    """Mask of present users retained by the sampling step."""
    values = np.asarray(values)
    budgets = np.asarray(budgets, dtype=np.float64)
    denom = math.expm1(threshold)
    p = _map_distinct(budgets, lambda b: math.expm1(b) / denom)
    return (values >= 0) & ((budgets >= threshold) | (np.asarray(uniforms) < p))


def sampled_histogram(values, budgets, threshold, uniforms, d):
    values = np.asarray(values)
    keep = sample_keep(values, budgets, threshold, uniforms)
    return np.bincount(values[keep], minlength=d).astype(np.int64)


def window_sums(dense, windows):
    """``out[t, i]`` = sum of ``dense[max(0, t - windows[i] + 1): t + 1, i]``."""
    dense = np.asarray(dense, dtype=np.float64)
    T, n = dense.shape
    csum = np.vstack([np.zeros((1, n)), np.cumsum(dense, axis=0)])
    t_idx = np.arange(1, T + 1)[:, None]
    lo = np.maximum(t_idx - np.asarray(windows)[None, :], 0)
    return csum[t_idx, np.arange(n)[None, :]] - csum[lo, np.arange(n)[None, :]]


def rr_estimate(values, budgets, u_keep, u_other, d):
    """Randomized-response reports aggregated into an unbiased histogram.

    User ``i`` keeps their category with probability
    ``e^b / (e^b + d - 1)``, otherwise reports one of the other ``d - 1``
    categories chosen by ``u_other``. Returns the summed per-user unbiased
    indicator estimates.
    """
    values = np.asarray(values)
    budgets = np.asarray(budgets, dtype=np.float64)
    present = values >= 0
    v = values[present]
    b = budgets[present]
    p = _map_distinct(b, lambda x: 1.0 / (1.0 + (d - 1) * math.exp(-x)))
    inv_em1 = _map_distinct(b, lambda x: 1.0 / math.expm1(x))
    keep = np.asarray(u_keep)[present] < p
    other = np.minimum((np.asarray(u_other)[present] * (d - 1)).astype(np.int64), max(d - 2, 0))
    other = other + (other >= v)
    report = np.where(keep, v, other)
    weight = 1.0 + d * inv_em1
    est = np.bincount(report, weights=weight, minlength=d)
    return est - inv_em1.sum()
