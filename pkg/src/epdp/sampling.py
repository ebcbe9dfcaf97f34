"""Personalized sampling mechanism, its error model, and optimal budget selection.

The sampling mechanism answers a count query over users with different
budgets by choosing a threshold budget: users at or above it are always
counted, users below it are counted with probability
``(e^b - 1) / (e^threshold - 1)``, and Laplace noise calibrated to the
threshold is added to every bin. The modelled error of a threshold is the
sampling error (variance plus squared bias of the dropped users) plus the
Laplace variance; OBS picks the declared budget minimizing it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from epdp import kernels
from epdp.model import ABSENT, BudgetGroups, Histogram, SlotDatabase
from epdp.noise import RandomSource


def _positive(x, name):
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"invalid {name} {x!r}")
    return x


@dataclass(frozen=True)
class ErrorBreakdown:
    sampling: float
    noise: float

    @property
    def total(self) -> float:
        return self.sampling + self.noise


def inclusion_probability(user_budget: float, threshold: float) -> float:
    user_budget = _positive(user_budget, "budget")
    threshold = _positive(threshold, "threshold")
    if user_budget >= threshold:
        return 1.0
    return math.expm1(user_budget) / math.expm1(threshold)


def sampling_error(groups: BudgetGroups, threshold: float) -> float:
    threshold = _positive(threshold, "threshold")
    denom = math.expm1(threshold)
    var = 0.0
    bias = 0.0
    for value, count in groups.entries:
        if value >= threshold:
            break
        p = math.expm1(value) / denom
        var += count * p * (1.0 - p)
        bias += count * (1.0 - p)
    return var + bias * bias


def noise_error(threshold: float, sensitivity: float = 1.0) -> float:
    """Variance ``2 (sensitivity / threshold)^2`` of the Laplace noise."""
    r = _positive(sensitivity, "sensitivity") / _positive(threshold, "threshold")
    return 2.0 * (r * r)


def error_breakdown(groups: BudgetGroups, threshold: float, sensitivity: float = 1.0) -> ErrorBreakdown:
    return ErrorBreakdown(sampling_error(groups, threshold), noise_error(threshold, sensitivity))


def obs(groups: BudgetGroups, sensitivity: float = 1.0) -> tuple[float, float]:
    """Optimal budget selection.

    Scans the distinct declared budgets in ascending order and returns
    ``(threshold, error)`` for the one with the smallest modelled error; a
    later candidate must be strictly better to replace the current choice.
    """
    if not len(groups):
        raise ValueError("no requirements")
    sensitivity = _positive(sensitivity, "sensitivity")
    values = np.asarray(groups.values, dtype=np.float64)
    k, err = kernels.obs_scan(values, np.asarray(groups.counts, dtype=np.float64), sensitivity)
    return float(values[k]), float(err)


def obs_from_arrays(values: np.ndarray, counts: np.ndarray, sensitivity: float = 1.0) -> tuple[float, float]:
    """OBS over already-grouped ``values`` (ascending, distinct) and ``counts``."""
    k, err = kernels.obs_scan(values, counts, sensitivity)
    return float(values[k]), float(err)


def group_arrays(budgets: np.ndarray, weights: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distinct ascending budgets with their (optionally weighted) counts."""
    uniq, inv = np.unique(np.asarray(budgets, dtype=np.float64), return_inverse=True)
    counts = np.bincount(inv, weights=weights, minlength=uniq.size).astype(np.float64)
    return np.ascontiguousarray(uniq), counts


def obs_error_bound(groups: BudgetGroups, sensitivity: float = 1.0) -> float:
    """Upper bound on the OBS error from the two extreme thresholds."""
    n = groups.n
    n_max = groups.counts[-1]
    tail = n - n_max
    low = 2.0 * sensitivity**2 / groups.values[0] ** 2
    high = tail * (tail + 0.25) + 2.0 * sensitivity**2 / groups.values[-1] ** 2
    return min(low, high)


def count_query(db: SlotDatabase) -> Histogram:
    present = db.values[db.values != ABSENT]
    return Histogram(np.bincount(present, minlength=db.domain_size), exact=True)


def _budget_vector(db: SlotDatabase, budgets) -> np.ndarray:
    b = np.asarray(budgets, dtype=np.float64).reshape(-1)
    if b.shape[0] != db.n_users:
        raise ValueError(f"missing budget: {b.shape[0]} budgets for {db.n_users} users")
    present = db.values != ABSENT
    if np.any(~(b[present] > 0)):
        raise ValueError("missing budget for a present user")
    return b


def _sampling_uniforms(n: int, rng: RandomSource) -> np.ndarray:
    if rng.zero_noise:
        # Bernoulli(p < 1) is never true in zero-noise mode.
        return np.ones(n)
    return rng.uniform(n)


def sm_sample(db: SlotDatabase, budgets, threshold: float, rng: RandomSource) -> SlotDatabase:
    """Sampling step: users below ``threshold`` survive with their inclusion probability.

    ``budgets`` is indexed like ``db.values``; absent users may carry 0.
    """
    threshold = _positive(threshold, "threshold")
    b = _budget_vector(db, budgets)
    keep = kernels.sample_keep(db.values, b, threshold, _sampling_uniforms(db.n_users, rng))
    return db.with_values(np.where(keep, db.values, ABSENT))


def sampled_count(db: SlotDatabase, budgets, threshold: float, rng: RandomSource) -> np.ndarray:
    """``count_query(sm_sample(...))`` fused into one pass; same random draws."""
    threshold = _positive(threshold, "threshold")
    b = _budget_vector(db, budgets)
    return kernels.sampled_histogram(
        db.values, b, threshold, _sampling_uniforms(db.n_users, rng), db.domain_size
    )


def sm_disturb(hist: Histogram | np.ndarray, threshold: float, sensitivity: float, rng: RandomSource) -> Histogram:
    """Disturb step: independent Laplace(sensitivity / threshold) noise per bin."""
    scale = _positive(sensitivity, "sensitivity") / _positive(threshold, "threshold")
    bins = hist.bins if isinstance(hist, Histogram) else np.asarray(hist, dtype=np.float64)
    return Histogram(bins + rng.laplace(scale, bins.shape[0]), exact=False)
