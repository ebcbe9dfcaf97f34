"""Domain types shared by the publishers, the accountant and the benchmark."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence

import numpy as np

ABSENT = -1
"""Category value marking a user who reported nothing at a slot."""

FRESH = "fresh"
APPROXIMATED = "approximated"
NULLIFIED = "nullified"
PUBLICATION_KINDS = (FRESH, APPROXIMATED, NULLIFIED)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PrivacyRequirement:
    """A user's ``(window, budget)`` pair, fixed when the stream starts."""

    user_id: Hashable
    window: int
    budget: float

    def __post_init__(self):
        if isinstance(self.window, bool) or int(self.window) != self.window or self.window < 1:
            raise ValueError(f"invalid window {self.window!r} for user {self.user_id!r}")
        budget = float(self.budget)
        if not (budget > 0 and math.isfinite(budget)):
            raise ValueError(f"invalid budget {self.budget!r} for user {self.user_id!r}")
        object.__setattr__(self, "window", int(self.window))
        object.__setattr__(self, "budget", budget)

    @property
    def share(self) -> float:
        """Per-slot budget share ``budget / window``."""
        return self.budget / self.window


class SlotDatabase:
    """All users' categorical values at one time slot.

    ``values[i]`` is the category of user ``i`` (position in the requirement
    list) or ``ABSENT``.
    """

    __slots__ = ("slot", "values", "domain_size")

    def __init__(self, slot: int, values, domain_size: int):
        if int(slot) != slot or slot < 1:
            raise ValueError(f"slot must be a positive integer, got {slot!r}")
        if int(domain_size) != domain_size or domain_size < 1:
            raise ValueError(f"domain_size must be a positive integer, got {domain_size!r}")
        vals = np.array(values, dtype=np.int64).reshape(-1)
        present = vals[vals != ABSENT]
        if present.size and (present.min() < 0 or present.max() >= domain_size):
            raise ValueError(f"category outside [0, {domain_size}) at slot {slot}")
        self.slot = int(slot)
        self.values = _frozen(vals)
        self.domain_size = int(domain_size)

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def present(self) -> np.ndarray:
        return self.values != ABSENT

    def with_values(self, values) -> "SlotDatabase":
        return SlotDatabase(self.slot, values, self.domain_size)

    def __eq__(self, other):
        if not isinstance(other, SlotDatabase):
            return NotImplemented
        return (
            self.slot == other.slot
            and self.domain_size == other.domain_size
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SlotDatabase(slot={self.slot}, n_users={self.n_users}, domain_size={self.domain_size})"


@dataclass(frozen=True, eq=False)
class Histogram:
    """A length-``d`` count vector, either exact counts or a noisy release."""

    bins: np.ndarray
    exact: bool = False

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.float64).reshape(-1)
        if bins.size == 0:
            raise ValueError("histogram needs at least one bin")
        if self.exact and (np.any(bins < 0) or np.any(bins != np.round(bins))):
            raise ValueError("exact histograms hold non-negative integer counts")
        object.__setattr__(self, "bins", _frozen(bins))

    def __len__(self):
        return self.bins.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.exact == other.exact and np.array_equal(self.bins, other.bins)

    @classmethod
    def zeros(cls, d: int) -> "Histogram":
        return cls(np.zeros(d), exact=True)


@dataclass(frozen=True, eq=False)
class Publication:
    """One released histogram together with how it was produced.

    ``epsilon_opt`` is set for fresh releases; ``source_slot`` names the slot
    whose histogram was copied for approximated and nullified ones (``0`` is
    the all-zeros bootstrap release).
    """

    slot: int
    histogram: Histogram
    kind: str
    epsilon_opt: float | None = None
    source_slot: int | None = None

    def __post_init__(self):
        if self.kind not in PUBLICATION_KINDS:
            raise ValueError(f"unknown publication kind {self.kind!r}")
        if self.kind == FRESH:
            if self.epsilon_opt is None or not self.epsilon_opt > 0:
                raise ValueError("fresh publications carry a positive epsilon_opt")
        elif self.source_slot is None or not 0 <= self.source_slot < self.slot:
            raise ValueError(f"{self.kind} publication needs an earlier source_slot")

    @property
    def bins(self) -> np.ndarray:
        return self.histogram.bins

    @property
    def is_fresh(self) -> bool:
        return self.kind == FRESH


@dataclass(frozen=True)
class BudgetGroups:
    """Distinct budget values in ascending order with their multiplicities."""

    values: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.counts):
            raise ValueError("values and counts differ in length")
        if not self.values:
            raise ValueError("no requirements")
        for v in self.values:
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"invalid budget {v!r}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("budget values must be strictly increasing")
        if any(int(c) != c or c < 1 for c in self.counts):
            raise ValueError("group counts must be positive integers")

    @property
    def entries(self) -> list[tuple[float, int]]:
        return list(zip(self.values, self.counts))

    @property
    def n(self) -> int:
        return sum(self.counts)

    def __len__(self):
        return len(self.values)

    def expand(self) -> list[float]:
        return [v for v, c in self.entries for _ in range(c)]


def build_budget_groups(budgets: Iterable[float], counts: Iterable[int] | None = None) -> BudgetGroups:
    """Group budgets by exact value.

    With ``counts`` given, ``budgets[k]`` is taken to occur ``counts[k]``
    times; repeated values are merged.

    >>> build_budget_groups([0.1, 0.4, 0.4, 0.1]).entries
    [(0.1, 2), (0.4, 2)]
    """
    budgets = [float(b) for b in budgets]
    if not budgets:
        raise ValueError("no requirements")
    for b in budgets:
        if not (b > 0 and math.isfinite(b)):
            raise ValueError(f"invalid budget {b!r}")
    tally: Counter = Counter()
    if counts is None:
        tally.update(budgets)
    else:
        counts = [int(c) for c in counts]
        if len(counts) != len(budgets):
            raise ValueError("budgets and counts differ in length")
        for b, c in zip(budgets, counts):
            if c < 1:
                raise ValueError("group counts must be positive integers")
            tally[b] += c
    values = tuple(sorted(tally))
    return BudgetGroups(values, tuple(tally[v] for v in values))


@dataclass
class Stream:
    """A finite prefix of an event stream: one ``SlotDatabase`` per slot.

    ``user_ids[i]`` names the user behind position ``i`` of every database.
    Synthetic generators also keep the probability series they drew from.
    """

    user_ids: list
    domain_size: int
    databases: list[SlotDatabase] = field(default_factory=list)
    probabilities: np.ndarray | None = None

    def __len__(self):
        return len(self.databases)

    def __iter__(self) -> Iterator[SlotDatabase]:
        return iter(self.databases)

    def __getitem__(self, k):
        return self.databases[k]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)


def requirement_budgets(requirements: Sequence[PrivacyRequirement]) -> np.ndarray:
    return np.array([r.budget for r in requirements], dtype=np.float64)


def requirement_windows(requirements: Sequence[PrivacyRequirement]) -> np.ndarray:
    return np.array([r.window for r in requirements], dtype=np.int64)
