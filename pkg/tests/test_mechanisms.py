import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epdp.accountant import DC, NOP, audit
from epdp.mechanisms import (
    PBA,
    PBD,
    PLBU,
    UniformPublisher,
    dc,
    error_bound_pba,
    error_bound_pbd,
    make_baseline,
    max_releases_in_window,
    skip_statistics,
    square_harmonic,
    true_counts,
)
from epdp.model import APPROXIMATED, FRESH, NULLIFIED, Histogram, PrivacyRequirement, SlotDatabase, Stream
from epdp.noise import RandomSource
from epdp.sampling import count_query, sampled_count
from epdp.streams import gen_sin, gen_tlns


def reqs_of(pairs):
    return [PrivacyRequirement(i, w, e) for i, (w, e) in enumerate(pairs)]


def static_stream(values, d, T):
    return Stream(list(range(len(values))), d, [SlotDatabase(t, values, d) for t in range(1, T + 1)])


# dissimilarity ------------------------------------------------------------


def test_dc_identical_zero_noise():
    db = SlotDatabase(1, [0, 1, 1, 2], 3)
    d = dc(db, [0.3] * 4, count_query(db), rng=RandomSource(0, zero_noise=True))
    assert d == 0.0


def test_dc_direct_evaluation():
    db = SlotDatabase(1, [0, 0, 0, 0], 2)
    d = dc(db, [0.3] * 4, Histogram([2.0, 2.0]), rng=RandomSource(0, zero_noise=True))
    assert d == 2.0


def test_dc_errors():
    db = SlotDatabase(1, [0], 2)
    with pytest.raises(ValueError, match="no requirements"):
        dc(SlotDatabase(1, [], 2), [], Histogram([0, 0]), rng=RandomSource(0))
    with pytest.raises(ValueError):
        dc(db, [0.3], Histogram([0, 0, 0]), rng=RandomSource(0))


def test_dc_noise_is_zero_mean():
    rng = np.random.default_rng(5)
    values = rng.integers(0, 3, 40)
    budgets = rng.choice([0.02, 0.05, 0.1], 40)
    db = SlotDatabase(1, values, 3)
    ref = Histogram([10.0, 5.0, 20.0])
    reps = 10_000
    src = RandomSource(6)
    noisy = np.array([dc(db, budgets, ref, rng=src) for _ in range(reps)])
    # dis* alone: the same sampling step without the Laplace term
    src2 = RandomSource(7)
    from epdp.mechanisms import _obs_positive

    th, _ = _obs_positive(budgets, None, 1 / 3)
    clean = np.array([np.abs(sampled_count(db, budgets, th, src2) - ref.bins).sum() / 3 for _ in range(reps)])
    se = math.sqrt(noisy.var() / reps + clean.var() / reps)
    assert abs(noisy.mean() - clean.mean()) < 3 * se


# PBD / PBA schedules -----------------------------------------------------


def test_pbd_example_schedule():
    eps = 0.9
    reqs = reqs_of([(4, eps), (2, 0.5)])
    pub = PBD(reqs, 2, RandomSource(0, zero_noise=True), force={1: True, 2: False, 3: True})
    pub.run(static_stream([0, 1], 2, 3))
    dense_dc = pub.ledger.dense(DC)
    dense_nop = pub.ledger.dense(NOP)
    assert dense_dc[:, 0].tolist() == [eps / 8] * 3
    assert dense_nop[:, 0].tolist() == [eps / 4, 0.0, eps / 8]
    assert [p.kind for p in pub.history] == [FRESH, APPROXIMATED, FRESH]


def test_pba_example_schedule():
    e = (1.0, 0.8, 0.6)
    reqs = reqs_of([(4, e[0]), (2, e[1]), (3, e[2])])
    pub = PBA(reqs, 2, RandomSource(0, zero_noise=True), force={1: True, 2: False, 3: True, 5: True})
    data = static_stream([0, 1, 1], 2, 5)
    cands = []
    for db in data:
        pub.step(db)
        cands.append(None if pub.last_candidates is None else pub.last_candidates.tolist())
    assert cands[0] == [e[0] / 8, e[1] / 4, e[2] / 6]
    assert cands[2] == [e[0] / 4, e[1] / 2, e[2] / 3]
    assert pub.history[3].kind == NULLIFIED
    assert cands[3] is None
    assert cands[4] == [e[0] / 8, e[1] / 4, e[2] / 6]
    # DC is charged on every slot, nullified ones included
    assert pub.ledger.dense(DC)[:, 0].tolist() == [e[0] / 8] * 5


def test_ba_three_shares_nullify_two():
    pub = make_baseline("BA", 4, 1.0, 3, 2, RandomSource(0, zero_noise=True), force={1: True, 2: False, 3: False, 4: True})
    pub.run(static_stream([0, 1, 0], 2, 7))
    kinds = [p.kind for p in pub.history]
    assert kinds[3] == FRESH
    assert pub.ledger.dense(NOP)[3, 0] == pytest.approx(3 * 1.0 / 8)
    assert kinds[4:6] == [NULLIFIED, NULLIFIED]
    assert kinds[6] != NULLIFIED


def test_slot_discontinuity():
    pub = PBD(reqs_of([(3, 1.0)]), 2, RandomSource(0))
    pub.step(SlotDatabase(1, [0], 2))
    with pytest.raises(ValueError, match="expected slot 2"):
        pub.step(SlotDatabase(3, [0], 2))


def test_zero_noise_static_publishes_once():
    # enough users that the first release clears its own error
    reqs = reqs_of([(5, 1.0)] * 120 + [(3, 0.6)] * 120)
    values = [0, 1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 1] * 20
    for cls in (PBD, PBA):
        pub = cls(reqs, 2, RandomSource(0, zero_noise=True))
        pub.run(static_stream(values, 2, 30))
        kinds = [p.kind for p in pub.history]
        assert kinds[0] == FRESH
        assert FRESH not in kinds[1:]


def test_copies_equal_source():
    s = gen_sin(200, 200, rng=RandomSource(1))
    for cls in (PBD, PBA):
        pub = cls(reqs_of([(10, 0.5)] * 100 + [(20, 1.0)] * 100), 2, RandomSource(2))
        pub.run(s)
        by_slot = {p.slot: p for p in pub.history}
        for p in pub.history:
            if not p.is_fresh and p.source_slot > 0:
                assert p.histogram == by_slot[p.source_slot].histogram
                assert by_slot[p.source_slot].is_fresh


def test_pba_nullified_exactly_after_fresh():
    s = gen_sin(300, 400, rng=RandomSource(3))
    reqs = reqs_of([(10, 0.5)] * 150 + [(20, 1.0)] * 150)
    pub = PBA(reqs, 2, RandomSource(4))
    shares = {}
    for db in s:
        p = pub.step(db)
        if p.is_fresh:
            shares[p.slot] = int((pub._shares_at_l - 1).max())
    kinds = {p.slot: p.kind for p in pub.history}
    fresh = sorted(shares)
    assert len(fresh) > 3
    for l, nxt in zip(fresh, fresh[1:] + [len(s) + 1]):
        for t in range(l + 1, nxt):
            assert (kinds[t] == NULLIFIED) == (t <= l + shares[l])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.integers(1, 60), st.integers(0, 2**32), st.floats(0.0, 1.0))
def test_audit_clean_random_runs(n, T, seed, ratio):
    rng = np.random.default_rng(seed)
    pairs = [(int(rng.integers(1, 12)), float(rng.choice([0.1, 0.5, 1.0, 2.0]))) for _ in range(n)]
    s = gen_tlns(n, T, stddev=0.05, rng=RandomSource(seed))
    for cls in (PBD, PBA, UniformPublisher, PLBU):
        pub = cls(reqs_of(pairs), 2, RandomSource(seed + 1))
        pub.run(s)
        assert audit(pub.ledger) == []


# uniform and PLBU --------------------------------------------------------


def test_uniform_zero_noise_and_ledger():
    s = gen_sin(50, 30, rng=RandomSource(0))
    pub = UniformPublisher(reqs_of([(8, 1.0)] * 50), 2, RandomSource(0, zero_noise=True))
    pub.run(s)
    assert np.array_equal(pub.releases(), true_counts(s))
    sums = pub.ledger.window_sums()
    assert np.allclose(sums[7:], 1.0, rtol=0, atol=1e-12)


def test_uniform_noise_variance():
    pub = UniformPublisher(reqs_of([(8, 1.0)]), 1, RandomSource(9))
    s = static_stream([0], 1, 20_000)
    pub.run(s)
    err = pub.releases()[:, 0] - 1
    assert abs(err.var() / 128 - 1) < 0.05


def test_plbu_large_rate_exact():
    s = gen_sin(100, 20, rng=RandomSource(1))
    pub = PLBU(reqs_of([(1, 50.0)] * 100), 2, RandomSource(2))
    pub.run(s)
    np.testing.assert_allclose(pub.releases(), true_counts(s), atol=1e-9)


def test_plbu_zero_noise_truthful():
    s = gen_sin(30, 5, rng=RandomSource(1))
    pub = PLBU(reqs_of([(4, 1.0)] * 30), 2, RandomSource(2, zero_noise=True))
    pub.run(s)
    np.testing.assert_allclose(pub.releases(), true_counts(s), atol=1e-9)


def test_plbu_unbiased():
    n, d, reps = 10_000, 5, 100
    values = np.arange(n) % d
    db = SlotDatabase(1, values, d)
    reqs = reqs_of([(20, 1.0)] * n)  # rate 0.05
    est = []
    for r in range(reps):
        pub = PLBU(reqs, d, RandomSource(100 + r))
        est.append(pub.step(db).bins)
    est = np.array(est)
    se = est.std(axis=0, ddof=1) / math.sqrt(reps)
    assert np.all(np.abs(est.mean(axis=0) - n / d) < 3 * se)


def test_plbu_ledger():
    pub = PLBU(reqs_of([(4, 1.0), (2, 0.3)]), 2, RandomSource(0))
    pub.run(static_stream([0, 1], 2, 6))
    sums = pub.ledger.window_sums()
    assert np.allclose(sums[3:, 0], 1.0) and np.allclose(sums[1:, 1], 0.3)


# baselines ---------------------------------------------------------------


@pytest.mark.parametrize("kind, cls", [("BD", PBD), ("BA", PBA)])
def test_baseline_equals_personalized_uniform(kind, cls):
    s = gen_sin(80, 150, rng=RandomSource(5))
    base = make_baseline(kind, 12, 0.7, 80, 2, RandomSource(6))
    pers = cls(reqs_of([(12, 0.7)] * 80), 2, RandomSource(6))
    base.run(s)
    pers.run(s)
    assert np.array_equal(base.releases(), pers.releases())
    assert [p.kind for p in base.history] == [p.kind for p in pers.history]
    assert list(base.ledger.charges()) == list(pers.ledger.charges())


def test_make_baseline_errors():
    with pytest.raises(ValueError):
        make_baseline("XX", 4, 1.0, 3, 2, RandomSource(0))
    with pytest.raises(ValueError):
        make_baseline("BD", 0, 1.0, 3, 2, RandomSource(0))
    with pytest.raises(ValueError):
        make_baseline("BD", 4, 1.0, 0, 2, RandomSource(0))


# bounds ------------------------------------------------------------------


def test_bound_examples():
    reqs = reqs_of([(1, 1.0)] * 5)
    assert error_bound_pbd(reqs, 1, 1) == pytest.approx(40.0)
    for s in (1, 2, 4):
        expect = 8.0 + 32 * (4**s - 1) / (3 * s)
        assert error_bound_pbd(reqs_of([(3, 1.5)] * 4), 2, s) == pytest.approx(8 / (4 * 0.25) + 32 * (4**s - 1) / (3 * s * 0.25))
        assert error_bound_pbd(reqs, 1, s) == pytest.approx(expect)
    assert error_bound_pba(reqs, 1, 0, 0.0, 1.0, 1.0) == pytest.approx(10.0)
    assert square_harmonic(3) == pytest.approx(49 / 36)
    with pytest.raises(ValueError):
        error_bound_pbd(reqs, 1, 0)


def test_bound_helpers():
    s = static_stream([0, 1], 2, 4)
    pub = PBA(reqs_of([(4, 1.0)] * 2), 2, RandomSource(0, zero_noise=True), force={1: True, 2: False, 3: True})
    pub.run(s)
    assert max_releases_in_window(pub.history, 4) == 2
    alpha, err_nlf = skip_statistics(pub.history, true_counts(s))
    assert alpha == 1  # one skip per two releases, 0.5 rounds up
    assert err_nlf == 0.0
