"""Synthetic binary streams and CSV event-log ingestion.

Synthetic streams draw a probability series ``p`` and give every user a
Bernoulli(``p_t``) bit at slot ``t``. Slots are 1-based; the closed-form
generators evaluate their formula at ``t - 1`` so slot 1 sits at the
formula's origin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from epdp.model import ABSENT, SlotDatabase, Stream
from epdp.noise import RandomSource


def _check_size(n, T):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")


def tlns_probabilities(T: int, p0: float, stddev: float, rng: RandomSource) -> np.ndarray:
    p = np.empty(T)
    p[0] = p0
    steps = rng.gaussian(stddev, T - 1) if T > 1 else np.zeros(0)
    for t in range(1, T):
        p[t] = min(max(p[t - 1] + steps[t - 1], 0.0), 1.0)
    return p


def sin_probabilities(T: int, A: float = 0.05, omega: float = 0.01, h: float = 0.075) -> np.ndarray:
    return A * np.sin(omega * np.arange(T)) + h


def log_probabilities(T: int, A: float = 0.25, b: float = 0.01) -> np.ndarray:
    return A / (1.0 + np.exp(-b * np.arange(T)))


def binary_stream(p: np.ndarray, n: int, rng: RandomSource) -> Stream:
    """One Bernoulli(``p[t-1]``) bit per user per slot, as a 2-bin stream."""
    dbs = []
    for t, pt in enumerate(p, start=1):
        bits = rng.bernoulli(np.full(n, pt))
        dbs.append(SlotDatabase(t, bits.astype(np.int64), 2))
    return Stream(list(range(n)), 2, dbs, probabilities=np.asarray(p))


def gen_tlns(n: int, T: int, p0: float = 0.05, stddev: float = 0.0025, rng: RandomSource | None = None) -> Stream:
    """Clamped Gaussian random walk starting at ``p0``."""
    _check_size(n, T)
    if not 0 <= p0 <= 1:
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")
    if not stddev >= 0:
        raise ValueError(f"stddev must be non-negative, got {stddev!r}")
    rng = rng or RandomSource(0)
    return binary_stream(tlns_probabilities(T, p0, stddev, rng), n, rng)


def gen_sin(n: int, T: int, A: float = 0.05, omega: float = 0.01, h: float = 0.075, rng: RandomSource | None = None) -> Stream:
    """``p_t = A sin(omega t) + h``."""
    _check_size(n, T)
    if not (h - abs(A) >= 0 and h + abs(A) <= 1):
        raise ValueError(f"A={A!r}, h={h!r} leave [0, 1]")
    rng = rng or RandomSource(0)
    return binary_stream(sin_probabilities(T, A, omega, h), n, rng)


def gen_log(n: int, T: int, A: float = 0.25, b: float = 0.01, rng: RandomSource | None = None) -> Stream:
    """``p_t = A / (1 + e^{-b t})``."""
    _check_size(n, T)
    if not 0 < A <= 1:
        raise ValueError(f"A must lie in (0, 1], got {A!r}")
    rng = rng or RandomSource(0)
    return binary_stream(log_probabilities(T, A, b), n, rng)


GENERATORS = {"tlns": gen_tlns, "sin": gen_sin, "log": gen_log}


@dataclass(frozen=True)
class GridSpec:
    """Uniform ``cells_x`` by ``cells_y`` grid over a lon/lat box."""

    lon_min: float = 116.0
    lon_max: float = 116.8
    lat_min: float = 39.5
    lat_max: float = 40.3
    cells_x: int = 10
    cells_y: int = 10

    @property
    def domain_size(self) -> int:
        return self.cells_x * self.cells_y


def grid_bucket(lon: float, lat: float, grid: GridSpec = GridSpec()) -> int:
    """Row-major cell index; points on the right/top edge fall in the last cell."""
    if not (grid.lon_min <= lon <= grid.lon_max and grid.lat_min <= lat <= grid.lat_max):
        raise ValueError(f"point ({lon}, {lat}) outside the grid's bounding area")
    dx = (grid.lon_max - grid.lon_min) / grid.cells_x
    dy = (grid.lat_max - grid.lat_min) / grid.cells_y
    col = min(int(math.floor((lon - grid.lon_min) / dx)), grid.cells_x - 1)
    row = min(int(math.floor((lat - grid.lat_min) / dy)), grid.cells_y - 1)
    return col + grid.cells_x * row


def ingest_csv(path, domain: int | GridSpec) -> Stream:
    """Read ``user_id,slot,category`` rows, or ``user_id,slot,lon,lat`` with a grid.

    A header row is skipped when its slot field is not an integer. Later rows
    for the same ``(user, slot)`` replace earlier ones. Users are numbered in
    order of first appearance; slots run from 1 to the largest slot seen.
    """
    grid = domain if isinstance(domain, GridSpec) else None
    d = grid.domain_size if grid else int(domain)
    if d < 1:
        raise ValueError(f"invalid domain size {d!r}")
    users: dict[str, int] = {}
    cells: dict[tuple[int, int], int] = {}
    max_slot = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if lineno == 1 and (len(row) < 2 or not _is_int(row[1])):
                continue
            try:
                slot = int(row[1])
                if grid is None:
                    if len(row) != 3:
                        raise ValueError(f"expected 3 fields, got {len(row)}")
                    cat = int(row[2])
                    if not 0 <= cat < d:
                        raise ValueError(f"category {cat} out of range [0, {d})")
                else:
                    if len(row) != 4:
                        raise ValueError(f"expected 4 fields, got {len(row)}")
                    cat = grid_bucket(float(row[2]), float(row[3]), grid)
                if slot < 1:
                    raise ValueError(f"slot must be >= 1, got {slot}")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            u = users.setdefault(row[0], len(users))
            cells[(u, slot)] = cat
            max_slot = max(max_slot, slot)
    n = len(users)
    grid_vals = np.full((max_slot, n), ABSENT, dtype=np.int64)
    for (u, slot), cat in cells.items():
        grid_vals[slot - 1, u] = cat
    dbs = [SlotDatabase(t + 1, grid_vals[t], d) for t in range(max_slot)]
    return Stream(list(users), d, dbs)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def write_csv(stream: Stream, path) -> None:
    """Write ``user_id,slot,category`` rows for every present user."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["user_id", "slot", "category"])
        for db in stream:
            for i in np.flatnonzero(db.values != ABSENT):
                out.writerow([stream.user_ids[i], db.slot, int(db.values[i])])
