import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import jensenshannon

from epdp.metrics import ajsd, amre, jsd_rows, per_slot_squared_error, summarize
from epdp.model import Histogram


def test_amre_examples():
    assert amre([(1, 3)], [(2, 1)]) == 2.5
    c = np.arange(12.0).reshape(4, 3)
    assert amre(c, c) == 0.0
    assert amre([Histogram([1.0, 3.0])], [Histogram([2.0, 1.0])]) == 2.5


def test_amre_errors():
    with pytest.raises(ValueError, match="length"):
        amre([(1, 2)], [(1, 2), (3, 4)])
    with pytest.raises(ValueError):
        amre([(1, 2)], [(1, 2, 3)])


def test_per_slot():
    assert per_slot_squared_error([(1, 3), (0, 0)], [(2, 1), (0, 2)]).tolist() == [2.5, 2.0]


def test_ajsd_examples():
    c = np.array([[3.0, 1.0], [2.0, 2.0]])
    assert ajsd(c, c) == 0.0
    assert ajsd([(1, 0)], [(0, 1)]) == pytest.approx(math.log(2), abs=1e-12)


def test_ajsd_matches_scipy():
    r = np.array([[1.0, 1.0], [5.0, 2.0], [0.0, 3.0]])
    c = np.array([[1.0, 0.0], [1.0, 4.0], [2.0, 2.0]])
    ref = np.mean([jensenshannon(a / a.sum(), b / b.sum()) ** 2 for a, b in zip(r, c)])
    assert ajsd(r, c) == pytest.approx(ref, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(1, 8), st.integers(0, 2**32))
def test_jsd_rows_property(d, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(d), 5)
    q = rng.dirichlet(np.ones(d), 5)
    j = jsd_rows(p, q)
    assert np.all(j >= -1e-15) and np.all(j <= math.log(2) + 1e-12)
    assert np.allclose(j, jsd_rows(q, p), atol=1e-15)
    ref = [jensenshannon(a, b) ** 2 for a, b in zip(p, q)]
    assert np.allclose(j, ref, atol=1e-9)


def test_ajsd_noisy_release_clipped():
    # negative bins are clipped before normalizing; all-nonpositive becomes uniform
    assert ajsd([(-2.0, 4.0)], [(0.0, 1.0)]) == 0.0
    assert ajsd([(-1.0, -1.0)], [(1.0, 1.0)]) == 0.0


def test_ajsd_empty_truth():
    with pytest.raises(ValueError, match="zero total"):
        ajsd([(1, 1)], [(0, 0)])
    assert ajsd([(1, 1), (1, 0)], [(0, 0), (1, 0)], skip_empty=True) == 0.0


def test_summarize():
    got = summarize([3.0, 1.0, 2.0, 10.0])
    assert got == {"mean": 4.0, "median": 2.5}
