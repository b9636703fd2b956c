import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbelab.estimates import MomentEstimate, ess, weighted_estimate


def test_ess_uniform_weights():
    assert ess(np.ones(50)) == pytest.approx(50.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=200).filter(lambda w: sum(w) > 0))
def test_ess_bounds(w):
    e = ess(np.array(w))
    assert 1.0 - 1e-9 <= e <= len(w) + 1e-9


def test_unweighted_estimate_matches_numpy(rng):
    v = rng.exponential(size=4000)
    e = weighted_estimate(v, None, seed=1, params={})
    assert e.mean == pytest.approx(v.mean())
    assert e.stderr == pytest.approx(v.std(ddof=1) / math.sqrt(v.size), rel=1e-6)
    assert e.ok


def test_stderr_scales_as_inverse_sqrt_replicas(rng):
    v = rng.standard_normal(40_000) + 3.0
    small = weighted_estimate(v[:10_000], None, seed=1, params={})
    big = weighted_estimate(v, None, seed=1, params={})
    assert big.stderr / small.stderr == pytest.approx(0.5, rel=0.05)


def test_low_ess_flags_unreliable(rng):
    lw = np.zeros(1000)
    lw[0] = 50.0
    e = weighted_estimate(np.ones(1000), lw, seed=1, params={})
    assert e.status == "unreliable"
    assert not e.ok


def test_moment_estimate_validates():
    with pytest.raises(ValueError):
        MomentEstimate(1.0, -1.0, 10, 10.0, 0, {})
    with pytest.raises(ValueError):
        MomentEstimate(1.0, 0.1, 10, 11.0, 0, {})


def test_roundtrip():
    e = MomentEstimate(2.0, 0.1, 100, 90.0, 7, {"a": 1}, "ok", {"d": 2})
    assert MomentEstimate.from_dict(e.to_dict()) == e
    assert e.rel_err() == pytest.approx(0.05)
