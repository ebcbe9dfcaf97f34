"""Utility metrics over a release series against the true counts."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from epdp.model import Histogram, Publication


def _as_matrix(series) -> np.ndarray:
    if isinstance(series, np.ndarray):
        m = np.asarray(series, dtype=np.float64)
        return m.reshape(m.shape[0], -1) if m.ndim == 1 else m
    rows = []
    for item in series:
        if isinstance(item, (Histogram, Publication)):
            rows.append(item.bins)
        else:
            rows.append(np.asarray(item, dtype=np.float64).reshape(-1))
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def _paired(published, truth) -> tuple[np.ndarray, np.ndarray]:
    r = _as_matrix(published)
    c = _as_matrix(truth)
    if r.shape[0] != c.shape[0]:
        raise ValueError(f"length mismatch: {r.shape[0]} releases vs {c.shape[0]} true histograms")
    if r.shape[0] == 0:
        raise ValueError("empty series")
    if r.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: {r.shape[1]} vs {c.shape[1]} bins")
    return r, c


def amre(published, truth) -> float:
    """Time-averaged mean squared error per bin, ``(1/T) sum_t ||r_t - c_t||^2 / d``.

    Despite the name this is a plain squared error, not a relative one;
    noisy negative bins are used as they are.
    """
    r, c = _paired(published, truth)
    return float(np.mean(np.mean((r - c) ** 2, axis=1)))


def _normalize_release(r: np.ndarray) -> np.ndarray:
    r = np.clip(r, 0.0, None)
    tot = r.sum(axis=1, keepdims=True)
    uniform = np.full_like(r, 1.0 / r.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, r / np.where(tot > 0, tot, 1.0), uniform)


def _kl_to_mix(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(p > 0, p * np.log(p / np.where(m > 0, m, 1.0)), 0.0)
    return terms.sum(axis=1)


def jsd_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise Jensen-Shannon divergence (natural log) of probability vectors."""
    m = 0.5 * (p + q)
    return 0.5 * _kl_to_mix(p, m) + 0.5 * _kl_to_mix(q, m)


def ajsd(published, truth, skip_empty: bool = False) -> float:
    """Time-averaged Jensen-Shannon divergence between normalized histograms.

    Releases are clipped at zero before normalizing; an all-zero release
    becomes the uniform distribution. A true histogram with zero total is an
    error unless ``skip_empty`` drops those slots.
    """
    r, c = _paired(published, truth)
    tot = c.sum(axis=1)
    empty = ~(tot > 0)
    if empty.any():
        if not skip_empty:
            raise ValueError(f"true histogram has zero total at slot {int(np.argmax(empty)) + 1}")
        r, c, tot = r[~empty], c[~empty], tot[~empty]
        if r.shape[0] == 0:
            return math.nan
    p = _normalize_release(r)
    q = c / tot[:, None]
    return float(np.mean(np.clip(jsd_rows(p, q), 0.0, math.log(2))))


def per_slot_squared_error(published, truth) -> np.ndarray:
    r, c = _paired(published, truth)
    return np.mean((r - c) ** 2, axis=1)


def summarize(values: Sequence[float]) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "median": float(np.median(v))}
