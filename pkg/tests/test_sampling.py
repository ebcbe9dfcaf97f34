import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epdp.model import ABSENT, Histogram, SlotDatabase, build_budget_groups
from epdp.noise import RandomSource
from epdp.sampling import (
    count_query,
    error_breakdown,
    inclusion_probability,
    noise_error,
    obs,
    obs_error_bound,
    sampled_count,
    sampling_error,
    sm_disturb,
    sm_sample,
)

EXAMPLE = build_budget_groups([0.1, 0.4, 0.8], counts=[2, 5, 3])


def brute_force_err(budgets, threshold, sensitivity):
    """Per-user evaluation with the exponential written out (no expm1)."""
    var = bias = 0.0
    for b in budgets:
        if b < threshold:
            p = (math.exp(b) - 1) / (math.exp(threshold) - 1)
            var += p * (1 - p)
            bias += 1 - p
    return var + bias**2 + 2 * sensitivity**2 / threshold**2


def test_inclusion_probability():
    assert inclusion_probability(0.8, 0.4) == 1.0
    assert inclusion_probability(0.4, 0.4) == 1.0
    assert inclusion_probability(0.1, 0.4) == pytest.approx(0.21384, abs=1e-5)
    with pytest.raises(ValueError):
        inclusion_probability(0.0, 0.4)
    with pytest.raises(ValueError):
        inclusion_probability(0.1, -1)


def test_sampling_error_examples():
    assert sampling_error(build_budget_groups([0.5] * 10), 0.5) == 0.0
    assert sampling_error(EXAMPLE, 0.4) == pytest.approx(2.8084, abs=1e-3)
    assert sampling_error(EXAMPLE, 0.1) == 0.0
    with pytest.raises(ValueError):
        sampling_error(EXAMPLE, 0.0)


def test_noise_error_examples():
    assert noise_error(0.1, 1) == 200.0
    assert noise_error(0.4, 1) == 12.5
    assert noise_error(1.0, 1) == 2.0
    with pytest.raises(ValueError):
        noise_error(0.4, 0)


def test_obs_examples():
    eps, err = obs(EXAMPLE, 1)
    assert eps == 0.4
    assert err == pytest.approx(15.31, abs=0.01)
    assert obs(build_budget_groups([0.5] * 7)) == (0.5, 8.0)
    b = error_breakdown(EXAMPLE, 0.4)
    assert b.noise == 12.5 and b.total == pytest.approx(err, rel=1e-12)


def test_obs_third_candidate_error():
    # threshold 0.8: both lower groups are sampled
    assert error_breakdown(EXAMPLE, 0.8).total == pytest.approx(27.733, abs=1e-3)


@st.composite
def groups(draw):
    k = draw(st.integers(1, 6))
    values = draw(st.lists(st.floats(0.05, 2.0), min_size=k, max_size=k, unique=True))
    counts = draw(st.lists(st.integers(1, 50), min_size=k, max_size=k))
    return build_budget_groups(values, counts)


@settings(max_examples=300)
@given(groups(), st.sampled_from([1.0, 0.5, 2.0]))
def test_obs_matches_brute_force(g, sens):
    budgets = g.expand()
    errs = [brute_force_err(budgets, th, sens) for th in g.values]
    k = int(np.argmin(errs))
    eps, err = obs(g, sens)
    assert err == pytest.approx(errs[k], rel=1e-9)
    # argmin may only differ on a near-tie
    assert eps == g.values[k] or errs[g.values.index(eps)] == pytest.approx(errs[k], rel=1e-9)


@settings(max_examples=200)
@given(groups(), st.sampled_from([1.0, 0.5]))
def test_obs_within_extreme_bound(g, sens):
    assert obs(g, sens)[1] <= obs_error_bound(g, sens) + 1e-9


def test_obs_empty_groups():
    class Empty:
        values, counts = (), ()

        def __len__(self):
            return 0

    with pytest.raises(ValueError):
        obs(Empty())


def _tally(values, d):
    out = [0] * d
    for v in values:
        if v != ABSENT:
            out[v] += 1
    return out


def test_count_query():
    assert count_query(SlotDatabase(1, [0, 0, 2], 3)).bins.tolist() == [2, 0, 1]
    assert count_query(SlotDatabase(1, [], 4)).bins.tolist() == [0, 0, 0, 0]
    vals = np.random.default_rng(4).integers(-1, 5, 100)
    h = count_query(SlotDatabase(1, vals, 5))
    assert h.exact and h.bins.tolist() == _tally(vals.tolist(), 5)


def test_sm_sample_no_sampling_above_threshold():
    db = SlotDatabase(1, [0, 1, 1, ABSENT], 2)
    out = sm_sample(db, [0.5, 0.6, 0.5, 0.0], 0.5, RandomSource(0))
    assert out == db


def test_sm_sample_zero_noise_drops_below():
    db = SlotDatabase(1, [0, 1, 1], 2)
    out = sm_sample(db, [0.5, 0.2, 0.5], 0.5, RandomSource(0, zero_noise=True))
    assert out.values.tolist() == [0, ABSENT, 1]


def test_sm_sample_missing_budget():
    db = SlotDatabase(1, [0, 1], 2)
    with pytest.raises(ValueError, match="missing budget"):
        sm_sample(db, [0.5], 0.5, RandomSource(0))
    with pytest.raises(ValueError, match="missing budget"):
        sm_sample(db, [0.5, 0.0], 0.5, RandomSource(0))


def test_sm_sample_retention_frequency(each_backend):
    # one user per trial, many trials at once: each position is an independent trial
    n = 100_000
    p = (math.exp(0.1) - 1) / (math.exp(0.4) - 1)
    db = SlotDatabase(1, np.zeros(n, dtype=np.int64), 1)
    kept = sm_sample(db, np.full(n, 0.1), 0.4, RandomSource(12)).present.mean()
    assert abs(kept - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_sampled_count_matches_sample_then_count():
    vals = np.random.default_rng(1).integers(-1, 4, 500)
    budgets = np.random.default_rng(2).uniform(0.05, 1.0, 500)
    db = SlotDatabase(1, vals, 4)
    a = sampled_count(db, budgets, 0.5, RandomSource(3))
    b = count_query(sm_sample(db, budgets, 0.5, RandomSource(3))).bins
    assert a.tolist() == b.tolist()


def test_sm_disturb():
    h = Histogram([3.0, 4.0])
    assert sm_disturb(h, 0.4, 1, RandomSource(0, zero_noise=True)) == h
    with pytest.raises(ValueError):
        sm_disturb(h, 0.0, 1, RandomSource(0))


def test_sm_disturb_variance():
    rng = RandomSource(21)
    x = np.array([sm_disturb(Histogram(np.zeros(10_000)), 0.4, 1, rng).bins for _ in range(100)]).ravel()
    assert abs(x.var() / 12.5 - 1) < 0.05


def test_sm_disturb_bins_independent():
    rng = RandomSource(22)
    x = np.array([sm_disturb(Histogram(np.zeros(100)), 0.4, 1, rng).bins for _ in range(10_000)])
    corr = np.corrcoef(x, rowvar=False)
    off = corr[~np.eye(100, dtype=bool)]
    assert np.abs(off).mean() < 0.01
    assert np.abs(off).max() < 0.05
