"""Stream publishers under personalized w-event privacy.

Each publisher consumes one :class:`~epdp.model.SlotDatabase` per slot and
emits one :class:`~epdp.model.Publication`, recording every budget it
spends in a :class:`~epdp.accountant.BudgetLedger`.

* :class:`PBD` (budget distribution) and :class:`PBA` (budget absorption)
  split each user's budget in half: one half funds a per-slot private
  dissimilarity test, the other funds fresh releases, which are only made
  when the data moved further than the release error.
* :class:`UniformPublisher` spends ``eps_i / w_i`` on a fresh release every slot.
* :class:`PLBU` does the same with per-user randomized response instead of
  central sampling plus Laplace noise.

Users sharing a requirement always share all budget state, so the
publishers keep that state per requirement class and broadcast it to users.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from epdp import kernels
from epdp.accountant import DC, NOP, BudgetLedger
from epdp.model import (
    ABSENT,
    APPROXIMATED,
    FRESH,
    NULLIFIED,
    Histogram,
    PrivacyRequirement,
    Publication,
    SlotDatabase,
    Stream,
)
from epdp.noise import RandomSource
from epdp.sampling import group_arrays, obs_from_arrays, sampled_count, sm_disturb


def _obs_positive(budgets: np.ndarray, weights: np.ndarray | None, sensitivity: float):
    """OBS over the positive entries of ``budgets``; ``None`` if there are none.

    Zero-budget users can never be sampled, so they are left out of the
    candidate set.
    """
    pos = budgets > 0
    if not pos.any():
        return None
    values, counts = group_arrays(budgets[pos], None if weights is None else weights[pos])
    return obs_from_arrays(values, counts, sensitivity)


def dc(
    db: SlotDatabase,
    dc_budgets,
    last_fresh,
    sensitivity_dis: float | None = None,
    rng: RandomSource | None = None,
    *,
    groups: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Private mean absolute difference between the sampled counts and the last fresh release.

    OBS picks the sampling threshold from ``dc_budgets`` (per user), using
    ``sensitivity_dis`` (default ``1/d``) as the noise sensitivity; the
    returned value carries Laplace(``sensitivity_dis / threshold``) noise.
    ``groups`` lets callers pass the precomputed ``(values, counts)``.
    """
    if rng is None:
        raise ValueError("dc needs a RandomSource")
    d = db.domain_size
    sens = 1.0 / d if sensitivity_dis is None else float(sensitivity_dis)
    budgets = np.asarray(dc_budgets, dtype=np.float64).reshape(-1)
    if budgets.size == 0:
        raise ValueError("no requirements")
    if np.any(~(budgets > 0)):
        raise ValueError("invalid budget")
    if groups is None:
        groups = group_arrays(budgets)
    threshold, _ = obs_from_arrays(groups[0], groups[1], sens)
    ref = last_fresh.bins if isinstance(last_fresh, Histogram) else np.asarray(last_fresh, dtype=np.float64)
    if ref.shape[0] != d:
        raise ValueError(f"last release has {ref.shape[0]} bins, expected {d}")
    counts = sampled_count(db, budgets, threshold, rng)
    dis_star = float(np.abs(counts - ref).sum()) / d
    return dis_star + rng.laplace(sens / threshold)


class Publisher:
    """Shared plumbing: requirement classes, history, ledger, slot bookkeeping.

    ``force`` maps slots to a forced fresh (``True``) or skip (``False``)
    decision that replaces the dissimilarity comparison; everything else,
    including the DC charge, happens as usual. It exists to replay fixed
    schedules.
    """

    name = "publisher"

    def __init__(
        self,
        requirements: Sequence[PrivacyRequirement],
        domain_size: int,
        rng: RandomSource,
        sensitivity: float = 1.0,
        force: Mapping[int, bool] | None = None,
    ):
        if not requirements:
            raise ValueError("no requirements")
        if int(domain_size) != domain_size or domain_size < 1:
            raise ValueError(f"invalid domain_size {domain_size!r}")
        if not sensitivity > 0:
            raise ValueError(f"invalid sensitivity {sensitivity!r}")
        self.requirements = list(requirements)
        self.d = int(domain_size)
        self.rng = rng
        self.sensitivity = float(sensitivity)
        self.force = dict(force or {})
        self.ledger = BudgetLedger(self.requirements)
        self.history: list[Publication] = []

        classes: dict[tuple[int, float], int] = {}
        cls_idx = np.empty(len(self.requirements), dtype=np.int64)
        for i, r in enumerate(self.requirements):
            cls_idx[i] = classes.setdefault((r.window, r.budget), len(classes))
        self._cls = cls_idx
        keys = list(classes)
        self.cls_window = np.array([w for w, _ in keys], dtype=np.int64)
        self.cls_budget = np.array([e for _, e in keys], dtype=np.float64)
        self.cls_count = np.bincount(cls_idx, minlength=len(keys)).astype(np.float64)

        self._release = Histogram.zeros(self.d)
        self._release_slot = 0
        self._fresh_release = self._release
        self.last_fresh_slot: int | None = None

    @property
    def n_users(self) -> int:
        return len(self.requirements)

    @property
    def slot(self) -> int:
        return len(self.history)

    def per_user(self, cls_values: np.ndarray) -> np.ndarray:
        return cls_values[self._cls]

    def _begin(self, db: SlotDatabase) -> int:
        t = self.slot + 1
        if db.slot != t:
            raise ValueError(f"expected slot {t}, got {db.slot}")
        if db.domain_size != self.d:
            raise ValueError(f"database domain {db.domain_size} != publisher domain {self.d}")
        if db.n_users != self.n_users:
            raise ValueError(f"database has {db.n_users} users, publisher has {self.n_users}")
        return t

    def _publish_fresh(self, t: int, bins, epsilon_opt: float) -> Publication:
        hist = bins if isinstance(bins, Histogram) else Histogram(bins)
        pub = Publication(t, hist, FRESH, epsilon_opt=float(epsilon_opt))
        self._release = hist
        self._release_slot = t
        self._fresh_release = hist
        self.last_fresh_slot = t
        self.history.append(pub)
        return pub

    def _publish_copy(self, t: int, kind: str) -> Publication:
        pub = Publication(t, self._release, kind, source_slot=self._release_slot)
        self.history.append(pub)
        return pub

    def step(self, db: SlotDatabase) -> Publication:
        raise NotImplementedError

    def run(self, stream: Stream | Sequence[SlotDatabase]) -> list[Publication]:
        for db in stream:
            self.step(db)
        return self.history

    def releases(self) -> np.ndarray:
        """``(T, d)`` matrix of released bins."""
        if not self.history:
            return np.zeros((0, self.d))
        return np.vstack([p.bins for p in self.history])


class _AdaptivePublisher(Publisher):
    """Dissimilarity test funded by ``eps_i / (2 w_i)`` per slot; subclasses choose the release budget."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.cls_share = self.cls_budget / (2 * self.cls_window)
        self._dc_groups = group_arrays(self.cls_share, self.cls_count)
        self._dc_user_budgets = self.per_user(self.cls_share)
        self.last_dis: float | None = None
        self.last_candidates: np.ndarray | None = None
        self.last_threshold: tuple[float, float] | None = None

    def _dissimilarity(self, db: SlotDatabase, t: int) -> float:
        dis = dc(db, self._dc_user_budgets, self._fresh_release, 1.0 / self.d, self.rng, groups=self._dc_groups)
        self.ledger.charge_all(t, DC, self._dc_user_budgets)
        self.last_dis = dis
        return dis

    def _try_fresh(self, db: SlotDatabase, t: int, dis: float, cls_cand: np.ndarray) -> bool:
        """Run the release test on class candidates; publish and charge if it passes."""
        self.last_candidates = self.per_user(cls_cand)
        chosen = _obs_positive(cls_cand, self.cls_count, self.sensitivity)
        self.last_threshold = chosen
        if chosen is None:
            fresh = False
        elif t in self.force:
            fresh = bool(self.force[t])
        else:
            fresh = dis > math.sqrt(chosen[1])
        if not fresh:
            self.ledger.charge_all(t, NOP, np.zeros(self.n_users))
            self._publish_copy(t, APPROXIMATED)
            return False
        threshold = chosen[0]
        user_cand = self.last_candidates
        self.ledger.charge_all(t, NOP, user_cand)
        counts = sampled_count(db, user_cand, threshold, self.rng)
        self._publish_fresh(t, sm_disturb(counts.astype(np.float64), threshold, self.sensitivity, self.rng), threshold)
        return True


class PBD(_AdaptivePublisher):
    """Personalized budget distribution.

    A fresh release spends half of what is left of the user's release half
    (``eps_i / 2``) within their current window.
    """

    name = "PBD"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._max_window = int(self.cls_window.max())
        self._spent_slots: list[int] = []
        self._spent: list[np.ndarray] = []

    def window_spent(self, t: int) -> np.ndarray:
        """Per-class release budget spent over slots ``t - w + 1 .. t - 1``."""
        if not self._spent_slots:
            return np.zeros_like(self.cls_budget)
        slots = np.array(self._spent_slots)[:, None]
        inside = slots >= (t - self.cls_window + 1)[None, :]
        return np.where(inside, np.array(self._spent), 0.0).sum(axis=0)

    def step(self, db: SlotDatabase) -> Publication:
        t = self._begin(db)
        dis = self._dissimilarity(db, t)
        while self._spent_slots and self._spent_slots[0] <= t - self._max_window:
            self._spent_slots.pop(0)
            self._spent.pop(0)
        remaining = np.maximum(self.cls_budget / 2 - self.window_spent(t), 0.0)
        cand = remaining / 2
        if self._try_fresh(db, t, dis, cand):
            self._spent_slots.append(t)
            self._spent.append(cand)
        return self.history[-1]


class PBA(_AdaptivePublisher):
    """Personalized budget absorption.

    A fresh release absorbs the unused one-share allotments of the slots
    since the previous release (at most ``w_i`` shares) and then nullifies
    as many following slots as it borrowed.
    """

    name = "PBA"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # shares spent by each class at the last fresh release l; the
        # bootstrap release at l = 0 counts as one share (no nullified slots)
        self._l = 0
        self._shares_at_l = np.ones(len(self.cls_budget), dtype=np.int64)

    @property
    def nullified_counts(self) -> np.ndarray:
        """Per-user number of slots occupied by the last fresh release."""
        return self.per_user(self._shares_at_l - 1)

    def step(self, db: SlotDatabase) -> Publication:
        t = self._begin(db)
        dis = self._dissimilarity(db, t)
        t_null = self._shares_at_l - 1
        if t - self._l <= int(t_null.max()):
            self.last_candidates = None
            self.last_threshold = None
            self.ledger.charge_all(t, NOP, np.zeros(self.n_users))
            return self._publish_copy(t, NULLIFIED)
        absorbed = np.maximum(t - self._l - t_null, 0)
        shares = np.minimum(absorbed, self.cls_window)
        cand = self.cls_share * shares
        if self._try_fresh(db, t, dis, cand):
            self._l = t
            self._shares_at_l = shares
        return self.history[-1]


class UniformPublisher(Publisher):
    """Fresh release every slot at ``eps_i / w_i``."""

    name = "Uniform"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        cls_rate = self.cls_budget / self.cls_window
        self._user_rate = self.per_user(cls_rate)
        values, counts = group_arrays(cls_rate, self.cls_count)
        self.threshold, self.modelled_error = obs_from_arrays(values, counts, self.sensitivity)

    def step(self, db: SlotDatabase) -> Publication:
        t = self._begin(db)
        self.ledger.charge_all(t, NOP, self._user_rate)
        counts = sampled_count(db, self._user_rate, self.threshold, self.rng)
        return self._publish_fresh(t, sm_disturb(counts.astype(np.float64), self.threshold, self.sensitivity, self.rng), self.threshold)


class PLBU(Publisher):
    """Per-user d-ary randomized response at ``eps_i / w_i`` every slot.

    In zero-noise mode users report truthfully.
    """

    name = "PLBU"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._user_rate = self.per_user(self.cls_budget / self.cls_window)
        self._min_rate = float(self._user_rate.min())

    def step(self, db: SlotDatabase) -> Publication:
        t = self._begin(db)
        self.ledger.charge_all(t, NOP, self._user_rate)
        if self.rng.zero_noise:
            # truthful reports; the debiasing step would only distort them
            present = db.values[db.values != ABSENT]
            return self._publish_fresh(t, np.bincount(present, minlength=self.d).astype(np.float64), self._min_rate)
        n = self.n_users
        u_keep, u_other = self.rng.uniform(n), self.rng.uniform(n)
        est = kernels.rr_estimate(db.values, self._user_rate, u_keep, u_other, self.d)
        return self._publish_fresh(t, est, self._min_rate)


PUBLISHERS = {"PBD": PBD, "PBA": PBA, "Uniform": UniformPublisher, "PLBU": PLBU}
BASELINES = {"BD": PBD, "BA": PBA}


def make_baseline(
    kind: str,
    window: int,
    epsilon: float,
    n: int,
    domain_size: int,
    rng: RandomSource,
    sensitivity: float = 1.0,
    user_ids: Sequence | None = None,
    force: Mapping[int, bool] | None = None,
) -> Publisher:
    """BD or BA: the personalized publisher with every user on the same ``(window, epsilon)``.

    With a single requirement class OBS has one candidate and sampling keeps
    everyone, which is exactly the non-personalized algorithm.
    """
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {sorted(BASELINES)}")
    if int(n) != n or n < 1:
        raise ValueError(f"invalid n {n!r}")
    ids = list(range(n)) if user_ids is None else list(user_ids)
    if len(ids) != n:
        raise ValueError("user_ids length differs from n")
    reqs = [PrivacyRequirement(u, window, epsilon) for u in ids]
    pub = BASELINES[kind](reqs, domain_size, rng, sensitivity=sensitivity, force=force)
    pub.name = kind
    return pub


# Utility bounds -------------------------------------------------------------


def _rate_stats(requirements: Sequence[PrivacyRequirement], n_A: int | None):
    rates = np.array([r.budget / r.window for r in requirements])
    eps_L, eps_R = float(rates.min()), float(rates.max())
    if n_A is None:
        n_A = int(np.sum(rates == eps_R))
    n = len(requirements)
    Z = (n - n_A) * (n - n_A + 0.25)
    return eps_L, eps_R, Z


def _dc_term(d, eps_L, eps_R, Z):
    return min(8.0 / (d * d * eps_L**2), Z + 8.0 / (d * d * eps_R**2))


def error_bound_pbd(requirements: Sequence[PrivacyRequirement], d: int, s_tilde: int, n_A: int | None = None) -> float:
    """Average per-slot error bound for PBD with at most ``s_tilde`` releases per smallest window.

    Rates ``eps_i / w_i`` enter squared. ``n_A`` defaults to the number of
    users at the largest rate.
    """
    if int(s_tilde) != s_tilde or s_tilde < 1:
        raise ValueError(f"s_tilde must be a positive integer, got {s_tilde!r}")
    eps_L, eps_R, Z = _rate_stats(requirements, n_A)
    geo = 32.0 * (4.0**s_tilde - 1) / (3.0 * s_tilde)
    return _dc_term(d, eps_L, eps_R, Z) + min(geo / eps_L**2, Z + geo / eps_R**2)


def square_harmonic(x: int) -> float:
    """``sum_{k=1..x} 1/k^2``."""
    return sum(1.0 / (k * k) for k in range(1, int(x) + 1))


def error_bound_pba(
    requirements: Sequence[PrivacyRequirement],
    d: int,
    alpha: int,
    err_nlf: float,
    eps_tilde_L: float,
    eps_tilde_R: float,
    n_A: int | None = None,
) -> float:
    """Average per-slot error bound for PBA with ``alpha`` skips before each release.

    ``err_nlf`` is the mean error of a nullified slot; ``eps_tilde_L`` and
    ``eps_tilde_R`` are the smallest and largest release budgets, used only
    when ``alpha`` exceeds the smallest window.
    """
    if int(alpha) != alpha or alpha < 0:
        raise ValueError(f"alpha must be a non-negative integer, got {alpha!r}")
    if err_nlf < 0:
        raise ValueError("err_nlf must be non-negative")
    eps_L, eps_R, Z = _rate_stats(requirements, n_A)
    w_L = min(r.window for r in requirements)
    if alpha <= w_L:
        h = square_harmonic(alpha + 1)
        nop = min(2.0 / eps_L**2 * h, (alpha + 1) * Z + 2.0 / eps_R**2 * h)
    else:
        h = square_harmonic(w_L)
        nop = min(2.0 / eps_L**2 * h, w_L * Z + 2.0 / eps_R**2 * h) + (alpha - w_L + 1) * min(
            2.0 / eps_tilde_L**2, Z + 2.0 / eps_tilde_R**2
        )
    return _dc_term(d, eps_L, eps_R, Z) + (nop + alpha * err_nlf) / (2 * alpha + 1)


def max_releases_in_window(history: Sequence[Publication], window: int) -> int:
    """Largest number of fresh releases inside any ``window`` consecutive slots."""
    fresh = np.array([p.slot for p in history if p.is_fresh], dtype=np.int64)
    if fresh.size == 0:
        return 0
    ends = np.searchsorted(fresh, fresh + window, side="left")
    return int((ends - np.arange(fresh.size)).max())


def skip_statistics(history: Sequence[Publication], truth: np.ndarray) -> tuple[int, float]:
    """``(alpha, err_nlf)`` measured from a PBA run.

    ``alpha`` is the mean number of approximated slots per fresh release,
    rounded to the nearest integer; ``err_nlf`` is the mean per-bin squared
    error over nullified slots (0 if there were none).
    """
    n_fresh = sum(p.is_fresh for p in history)
    n_skip = sum(p.kind == APPROXIMATED for p in history)
    alpha = int(math.floor(n_skip / n_fresh + 0.5)) if n_fresh else 0
    errs = [
        float(np.mean((p.bins - truth[p.slot - 1]) ** 2)) for p in history if p.kind == NULLIFIED
    ]
    return alpha, float(np.mean(errs)) if errs else 0.0


def true_counts(stream: Stream | Sequence[SlotDatabase]) -> np.ndarray:
    """``(T, d)`` exact histograms of all present users."""
    rows = []
    for db in stream:
        present = db.values[db.values != ABSENT]
        rows.append(np.bincount(present, minlength=db.domain_size))
    return np.array(rows, dtype=np.float64)
