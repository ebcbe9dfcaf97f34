"""Experiment configuration: a flat ``key = value`` file, lists comma-separated.

Example::

    dataset = sin
    n_users = 1000
    T = 2000
    mechanisms = PBD, PBA, BD, BA, Uniform, PLBU
    epsilon_grid = 0.2, 0.4, 0.6, 0.8, 1.0
    window_grid = 120
    requirement_model = menu
    repetitions = 10
    master_seed = 7
    output_dir = results/sin_epsilon
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from epdp.model import PrivacyRequirement
from epdp.noise import RandomSource

MECHANISMS = ("PBD", "PBA", "BD", "BA", "Uniform", "PLBU")
SYNTHETIC = ("tlns", "sin", "log")
MODELS = ("uniform", "two_point", "menu")

# default sweep values
DEFAULT_EPSILONS = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_WINDOWS = (40, 80, 120, 160, 200)


@dataclass(frozen=True)
class UniformModel:
    window: int
    epsilon: float


@dataclass(frozen=True)
class TwoPointModel:
    """A fraction ``ratio`` of users gets ``a``, the rest ``b``; each is ``(window, epsilon)``."""

    a: tuple[int, float]
    b: tuple[int, float]
    ratio: float

    def __post_init__(self):
        if not 0 <= self.ratio <= 1:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio!r}")


@dataclass(frozen=True)
class MenuModel:
    """Each user draws a budget from ``epsilons`` and a window from ``windows`` uniformly."""

    windows: tuple[int, ...]
    epsilons: tuple[float, ...]


def assign_requirements(model, n: int, rng: RandomSource, user_ids: Sequence | None = None) -> list[PrivacyRequirement]:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    ids = list(range(n)) if user_ids is None else list(user_ids)
    if isinstance(model, UniformModel):
        pairs = [(model.window, model.epsilon)] * n
    elif isinstance(model, TwoPointModel):
        n_a = int(math.floor(model.ratio * n + 0.5))
        pairs = [tuple(model.a)] * n_a + [tuple(model.b)] * (n - n_a)
        order = list(range(n))
        rng.shuffle(order)
        pairs = [pairs[k] for k in order]
    elif isinstance(model, MenuModel):
        wi = rng.integers(len(model.windows), n)
        ei = rng.integers(len(model.epsilons), n)
        pairs = [(model.windows[a], model.epsilons[b]) for a, b in zip(wi, ei)]
    else:
        raise ValueError(f"invalid requirement model {model!r}")
    return [PrivacyRequirement(u, w, e) for u, (w, e) in zip(ids, pairs)]


def conservative_bound(requirements: Sequence[PrivacyRequirement]) -> tuple[int, float]:
    """``(max window, min budget)``: the one requirement that satisfies every user."""
    return max(r.window for r in requirements), min(r.budget for r in requirements)


@dataclass(frozen=True)
class GridPoint:
    epsilon: float | None
    window: int | None
    ratio: float | None

    def key(self):
        return (self.epsilon, self.window, self.ratio)


@dataclass
class ExperimentConfig:
    dataset: str = "sin"
    n_users: int = 1000
    T: int = 2000
    domain_size: int | None = None
    grid: bool = False
    mechanisms: list[str] = field(default_factory=lambda: list(MECHANISMS))
    epsilon_grid: list[float] = field(default_factory=lambda: [0.6])
    window_grid: list[int] = field(default_factory=lambda: [120])
    requirement_model: str = "uniform"
    two_point_a: tuple[int, float] = (10, 0.5)
    two_point_b: tuple[int, float] = (20, 1.0)
    ratio: list[float] = field(default_factory=lambda: [0.5])
    repetitions: int = 10
    master_seed: int = 0
    output_dir: str = "results"
    zero_noise: bool = False
    sensitivity: float = 1.0
    record_timing: bool = True
    save_ledgers: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.mechanisms or any(m not in MECHANISMS for m in self.mechanisms):
            raise ValueError(f"mechanisms must be drawn from {MECHANISMS}, got {self.mechanisms}")
        if not self.epsilon_grid or any(not e > 0 for e in self.epsilon_grid):
            raise ValueError("epsilon_grid must be non-empty and positive")
        if not self.window_grid or any(int(w) != w or w < 1 for w in self.window_grid):
            raise ValueError("window_grid must be non-empty positive integers")
        if not self.ratio or any(not 0 <= o <= 1 for o in self.ratio):
            raise ValueError("ratio values must lie in [0, 1]")
        if self.requirement_model not in MODELS:
            raise ValueError(f"requirement_model must be one of {MODELS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.dataset not in SYNTHETIC and self.domain_size is None and not self.grid:
            raise ValueError("CSV datasets need domain_size or grid = true")
        if self.n_users < 1 or self.T < 1:
            raise ValueError("n_users and T must be positive")

    @property
    def synthetic(self) -> bool:
        return self.dataset in SYNTHETIC

    def grid_points(self) -> list[GridPoint]:
        if self.requirement_model == "two_point":
            return [GridPoint(None, None, o) for o in self.ratio]
        return [GridPoint(e, w, None) for e in self.epsilon_grid for w in self.window_grid]

    def model_for(self, point: GridPoint):
        if self.requirement_model == "uniform":
            return UniformModel(point.window, point.epsilon)
        if self.requirement_model == "two_point":
            return TwoPointModel(self.two_point_a, self.two_point_b, point.ratio)
        # menus: budgets at or above epsilon, windows at or below w
        eps = tuple(e for e in sorted(set(DEFAULT_EPSILONS) | set(self.epsilon_grid)) if e >= point.epsilon)
        wins = tuple(w for w in sorted(set(DEFAULT_WINDOWS) | set(self.window_grid)) if w <= point.window)
        return MenuModel(wins, eps)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_LIST_FLOAT = {"epsilon_grid", "ratio"}
_LIST_INT = {"window_grid"}
_INT = {"n_users", "T", "repetitions", "master_seed", "domain_size"}
_FLOAT = {"sensitivity"}
_BOOL = {"zero_noise", "grid", "record_timing", "save_ledgers"}
_PAIR = {"two_point_a", "two_point_b"}
_STR = {"dataset", "requirement_model", "output_dir"}
_ALIASES = {"t": "T", "n": "n_users", "seed": "master_seed", "mechanism": "mechanisms"}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        items = [s.strip() for s in val.split(",") if s.strip()]
        try:
            if key in _LIST_FLOAT:
                values[key] = [float(s) for s in items]
            elif key in _LIST_INT:
                values[key] = [int(s) for s in items]
            elif key in _INT:
                values[key] = int(val)
            elif key in _FLOAT:
                values[key] = float(val)
            elif key in _BOOL:
                values[key] = _bool(val)
            elif key in _PAIR:
                if len(items) != 2:
                    raise ValueError("expected 'window, epsilon'")
                values[key] = (int(items[0]), float(items[1]))
            elif key == "mechanisms":
                values[key] = items
            elif key in _STR:
                values[key] = val
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())
