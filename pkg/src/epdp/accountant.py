"""Append-only budget ledger and sliding-window composition audit.

Every budget a mechanism spends on a user is recorded as a charge
``(user, slot, phase, amount)``; phase ``DC`` is the dissimilarity test and
``NOP`` the noisy publication. :func:`audit` recomputes, for every user
and slot ``t``, the total charged over ``[max(t - w + 1, 1), t]`` and
reports every window exceeding the user's budget.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from epdp import kernels
from epdp.model import PrivacyRequirement

DC = "DC"
NOP = "NOP"
PHASES = (DC, NOP)

AUDIT_TOLERANCE = 1e-9


class LedgerError(ValueError):
    pass


@dataclass(frozen=True)
class BudgetCharge:
    user_id: Hashable
    slot: int
    phase: str
    amount: float


@dataclass(frozen=True)
class Violation:
    user_id: Hashable
    t: int
    overshoot: float


class BudgetLedger:
    """Charges per user, slot and phase, stored column-wise.

    A whole slot's charges for every user are appended as one vector by
    :meth:`charge_all`; :meth:`charge` appends a single entry. At most one
    charge per ``(user, slot, phase)`` is accepted and a user's slots may
    not go backwards.
    """

    def __init__(self, requirements: Sequence[PrivacyRequirement]):
        self.requirements = list(requirements)
        self._index = {}
        for i, r in enumerate(self.requirements):
            if r.user_id in self._index:
                raise LedgerError(f"duplicate requirement for user {r.user_id!r}")
            self._index[r.user_id] = i
        n = len(self.requirements)
        self.windows = np.array([r.window for r in self.requirements], dtype=np.int64)
        self.budgets = np.array([r.budget for r in self.requirements], dtype=np.float64)
        self._last_slot = np.zeros(n, dtype=np.int64)
        self._last_phase_slot = {p: np.zeros(n, dtype=np.int64) for p in PHASES}
        # columnar chunks: (slot, phase, user indices or None for all users, amounts)
        self._chunks: list[tuple[int, str, np.ndarray | None, np.ndarray]] = []
        self._dense_cache: dict[str, np.ndarray] = {}

    @property
    def n_users(self) -> int:
        return len(self.requirements)

    @property
    def max_slot(self) -> int:
        return int(self._last_slot.max()) if self.n_users else 0

    def user_index(self, user_id) -> int:
        try:
            return self._index[user_id]
        except KeyError:
            raise LedgerError(f"unknown user {user_id!r}") from None

    def _check(self, idx: np.ndarray | slice, slot: int, phase: str, amounts: np.ndarray):
        if phase not in PHASES:
            raise LedgerError(f"unknown phase {phase!r}")
        if int(slot) != slot or slot < 1:
            raise LedgerError(f"invalid slot {slot!r}")
        if np.any(~(amounts >= 0)) or np.any(~np.isfinite(amounts)):
            raise LedgerError("charge amounts must be finite and non-negative")
        if np.any(self._last_phase_slot[phase][idx] == slot):
            raise LedgerError(f"double charge at slot {slot} phase {phase}")
        if np.any(self._last_slot[idx] > slot):
            raise LedgerError(f"slot {slot} precedes an already recorded slot")

    def charge(self, user_id, slot: int, phase: str, amount: float) -> "BudgetLedger":
        i = self.user_index(user_id)
        amounts = np.array([float(amount)])
        self._check(np.array([i]), slot, phase, amounts)
        self._append(slot, phase, np.array([i]), amounts)
        return self

    def charge_all(self, slot: int, phase: str, amounts) -> "BudgetLedger":
        """Charge every enrolled user at ``slot``; ``amounts`` is indexed by user position."""
        amounts = np.array(amounts, dtype=np.float64).reshape(-1)
        if amounts.shape[0] != self.n_users:
            raise LedgerError(f"expected {self.n_users} amounts, got {amounts.shape[0]}")
        self._check(slice(None), slot, phase, amounts)
        self._append(slot, phase, None, amounts)
        return self

    def _append(self, slot, phase, idx, amounts):
        amounts.setflags(write=False)
        self._chunks.append((int(slot), phase, idx, amounts))
        if idx is None:
            self._last_slot[:] = slot
            self._last_phase_slot[phase][:] = slot
        else:
            self._last_slot[idx] = slot
            self._last_phase_slot[phase][idx] = slot
        self._dense_cache.clear()

    def charges(self) -> Iterable[BudgetCharge]:
        """All charges in insertion order."""
        ids = [r.user_id for r in self.requirements]
        for slot, phase, idx, amounts in self._chunks:
            users = range(self.n_users) if idx is None else idx
            for i, a in zip(users, amounts):
                yield BudgetCharge(ids[i], slot, phase, float(a))

    def __len__(self):
        return sum(self.n_users if idx is None else len(idx) for _, _, idx, _ in self._chunks)

    def dense(self, phase: str | None = None, T: int | None = None) -> np.ndarray:
        """``(T, n)`` matrix of amounts; row ``t - 1`` holds slot ``t``."""
        key = f"{phase}:{T}"
        if key in self._dense_cache:
            return self._dense_cache[key]
        T = self.max_slot if T is None else T
        out = np.zeros((T, self.n_users))
        for slot, ph, idx, amounts in self._chunks:
            if (phase is not None and ph != phase) or slot > T:
                continue
            if idx is None:
                out[slot - 1] += amounts
            else:
                np.add.at(out[slot - 1], idx, amounts)
        out.setflags(write=False)
        self._dense_cache[key] = out
        return out

    def window_sums(self, phase: str | None = None, T: int | None = None) -> np.ndarray:
        """Sliding-window totals for every ``(t, user)``, each user with their own window."""
        dense = self.dense(phase, T)
        if dense.size == 0:
            return dense
        return kernels.window_sums(dense, self.windows)

    def window_sum(self, user_id, t: int, phase: str | None = None) -> float:
        i = self.user_index(user_id)
        if int(t) != t or t < 1:
            raise LedgerError(f"invalid slot {t!r}")
        w = int(self.windows[i])
        lo = max(t - w + 1, 1)
        total = 0.0
        for slot, ph, idx, amounts in self._chunks:
            if not lo <= slot <= t or (phase is not None and ph != phase):
                continue
            if idx is None:
                total += float(amounts[i])
            else:
                total += float(amounts[idx == i].sum())
        return total

    # CSV round trip -------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["user_id", "slot", "phase", "amount"])
            for c in self.charges():
                out.writerow([c.user_id, c.slot, c.phase, repr(c.amount)])

    @classmethod
    def from_csv(cls, path, requirements: Sequence[PrivacyRequirement]) -> "BudgetLedger":
        ledger = cls(requirements)
        by_str = {str(r.user_id): r.user_id for r in requirements}
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (lineno == 1 and row[0] == "user_id"):
                    continue
                if len(row) != 4:
                    raise LedgerError(f"line {lineno}: expected 4 fields, got {len(row)}")
                user, slot, phase, amount = row
                if user not in by_str:
                    raise LedgerError(f"line {lineno}: unknown user {user!r}")
                try:
                    ledger.charge(by_str[user], int(slot), phase.strip(), float(amount))
                except ValueError as exc:
                    raise LedgerError(f"line {lineno}: {exc}") from None
        return ledger


def read_requirements_csv(path) -> list[PrivacyRequirement]:
    """Rows ``user_id,window,epsilon`` (header optional)."""
    reqs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0] == "user_id"):
                continue
            if len(row) != 3:
                raise LedgerError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                reqs.append(PrivacyRequirement(row[0], int(row[1]), float(row[2])))
            except ValueError as exc:
                raise LedgerError(f"line {lineno}: {exc}") from None
    return reqs


def write_requirements_csv(path, requirements: Sequence[PrivacyRequirement]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["user_id", "window", "epsilon"])
        for r in requirements:
            out.writerow([r.user_id, r.window, repr(r.budget)])


def charge(ledger: BudgetLedger, user_id, slot: int, phase: str, amount: float) -> BudgetLedger:
    return ledger.charge(user_id, slot, phase, amount)


def window_sum(ledger: BudgetLedger, user_id, t: int) -> float:
    return ledger.window_sum(user_id, t)


def audit(ledger: BudgetLedger, tolerance: float = AUDIT_TOLERANCE) -> list[Violation]:
    """Every ``(user, t)`` whose window total exceeds the user's budget."""
    if ledger.max_slot == 0:
        return []
    sums = ledger.window_sums()
    over = sums - ledger.budgets[None, :]
    ts, users = np.nonzero(over > tolerance)
    order = np.lexsort((ts, users))
    ids = [r.user_id for r in ledger.requirements]
    return [Violation(ids[users[k]], int(ts[k]) + 1, float(over[ts[k], users[k]])) for k in order]
