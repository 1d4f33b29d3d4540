import math

import numpy as np
import pytest

from skysim import aoi


def simpson_penalty(z, x0, x1, threshold, cap, n_panels=100):
    """Numerical oracle: composite Simpson on f(age) over [x0, x1].

    The integrand jumps at age == threshold and kinks at age == cap, so the
    interval is split at those crossing times and each smooth piece is
    integrated with panels no wider than (x1 - x0) / n_panels.
    """
    breaks = sorted({x0, x1} | {z + a for a in (threshold, cap) if x0 < z + a < x1})

    def piece(lo, hi):
        panels = max(1, int(np.ceil((hi - lo) / ((x1 - x0) / n_panels))))
        xs = np.linspace(lo, hi, 2 * panels + 1)
        mid = 0.5 * (lo + hi)  # classify the piece by its interior
        ages = xs - z
        f = ages.copy()
        if mid - z >= threshold:
            f += np.exp(np.minimum(ages, cap))
        h = (hi - lo) / (2 * panels)
        return h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())

    return sum(piece(a, b) for a, b in zip(breaks, breaks[1:]))


def test_penalty_integral_linear_region():
    # age ramps 2 -> 3 below the threshold: integral of a is (9 - 4) / 2
    assert aoi.penalty_integral(2.0, 3.0, 10.0, 50.0) == pytest.approx(2.5, rel=1e-15)


def test_penalty_integral_exponential_region():
    val = aoi.penalty_integral(4.0, 6.0, 5.0, 50.0)
    expect = (36 - 16) / 2 + (math.exp(6) - math.exp(5))
    assert val == pytest.approx(expect, rel=1e-14)


def test_penalty_integral_cap():
    val = aoi.penalty_integral(10.0, 12.0, 5.0, 11.0)
    expect = (144 - 100) / 2 + (math.exp(11) - math.exp(10)) + math.exp(11) * 1.0
    assert val == pytest.approx(expect, rel=1e-14)


def test_violation_integral():
    assert aoi.violation_integral(2.0, 3.0, 5.0) == 0.0
    assert aoi.violation_integral(4.5, 6.0, 5.0) == pytest.approx(1.0)
    assert aoi.violation_integral(7.0, 8.0, 5.0) == pytest.approx(1.0)
    assert aoi.violation_integral(3.0, 3.0, 2.0) == 0.0


def test_hand_trace_never_collected():
    # one packet at slot 0, threshold 3, watched for 10 slots
    tr = aoi.AgeTracker(1, threshold=3.0, exp_cap=50.0)
    aoi.advance(tr, 0, [0], {})
    for t in range(1, 10):
        aoi.advance(tr, t, [], {})
    assert tr.violation[0] == pytest.approx(7.0, rel=1e-14)
    expect = 50.0 + (math.exp(10.0) - math.exp(3.0))
    assert tr.penalty[0] == pytest.approx(expect, rel=1e-14)


def test_hand_trace_collection_resets_age():
    # generated at slot 0, collected at the end of slot 2 (queue emptied)
    tr = aoi.AgeTracker(1, threshold=100.0)
    aoi.advance(tr, 0, [0], {})
    aoi.advance(tr, 1, [], {})
    aoi.advance(tr, 2, [], {0: None})
    assert tr.penalty[0] == pytest.approx(4.5, rel=1e-14)  # age ramp 0 -> 3
    # queue empty: age clock stopped
    aoi.advance(tr, 3, [], {})
    assert tr.penalty[0] == pytest.approx(4.5, rel=1e-14)
    # new arrival restarts the ramp at zero
    aoi.advance(tr, 4, [0], {})
    assert tr.penalty[0] == pytest.approx(5.0, rel=1e-14)


def test_hand_trace_partial_collection_moves_oldest():
    # two packets (slots 0 and 2); collecting the first leaves age anchored at 2
    tr = aoi.AgeTracker(1, threshold=100.0)
    aoi.advance(tr, 0, [0], {})
    aoi.advance(tr, 1, [], {})
    aoi.advance(tr, 2, [], {0: 2.0})
    # slot 3: age ramps from (3 - 2) to (4 - 2)
    aoi.advance(tr, 3, [], {})
    assert tr.penalty[0] == pytest.approx(4.5 + 1.5, rel=1e-14)


def test_generation_when_nonempty_keeps_oldest():
    tr = aoi.AgeTracker(1, threshold=100.0)
    aoi.advance(tr, 0, [0], {})
    # a later arrival must not reset the clock while packets remain queued
    aoi.advance(tr, 1, [0], {})
    assert tr.oldest_gen[0] == 0.0


def test_metrics_aggregation():
    tr = aoi.AgeTracker(2, threshold=1.0)
    aoi.advance(tr, 0, [0], {})
    aoi.advance(tr, 1, [], {})
    assert aoi.violation_ratio(tr) == pytest.approx(0.5 * (1.0 + 0.0))
    assert aoi.violation_ratio(tr, horizon_slots=2, normalize=True) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        aoi.violation_ratio(tr, normalize=True)
    q = aoi.aoi_penalty(tr, np.array([2.0, 1.0]))
    assert q == pytest.approx(2.0 * tr.penalty[0] / 2.0, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_random_traces_match_numerical_oracle(seed):
    rng = np.random.default_rng(seed)
    threshold = float(rng.uniform(2.0, 8.0))
    cap = float(rng.uniform(5.0, 12.0))
    tr = aoi.AgeTracker(1, threshold=threshold, exp_cap=cap)
    z = None
    oracle_v = 0.0
    oracle_q = 0.0
    for t in range(30):
        gens = [0] if (z is None and rng.uniform() < 0.4) else []
        if gens:
            z = float(t)
        collections = {}
        if z is not None and rng.uniform() < 0.3:
            new_z = None if rng.uniform() < 0.5 else float(t)
            collections = {0: new_z}
        if z is not None:
            oracle_q += simpson_penalty(z, t, t + 1, threshold, cap)
            oracle_v += max(0.0, (t + 1 - z) - max(t - z, threshold))
        aoi.advance(tr, t, gens, collections)
        if collections:
            z = collections[0]
    assert tr.penalty[0] == pytest.approx(oracle_q, rel=1e-6)
    assert tr.violation[0] == pytest.approx(oracle_v, rel=1e-9, abs=1e-12)
