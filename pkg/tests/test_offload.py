import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skysim import offload
from skysim.errors import DomainError, UnreachableLinkError


def test_alphabet_size_stars_and_bars():
    for P in range(0, 4):
        for G in range(1, 7):
            alphabet = offload.split_alphabet(P, G)
            assert len(alphabet) == math.comb(G + P, P)
            assert offload.split_alphabet_size(P, G) == len(alphabet)
            assert len(set(a.counts for a in alphabet)) == len(alphabet)


def test_alphabet_is_lexicographic():
    counts = [a.counts for a in offload.split_alphabet(2, 3)]
    assert counts == sorted(counts)
    assert counts[0] == (0, 0, 3)
    assert counts[-1] == (3, 0, 0)


@given(P=st.integers(0, 3), G=st.integers(1, 6), data=st.data())
def test_split_fractions_sum_exactly(P, G, data):
    idx = data.draw(st.integers(0, offload.split_alphabet_size(P, G) - 1))
    split = offload.decode_split(idx, P, G)
    assert sum(split.counts) == G
    assert split.local_frac + sum(split.relay_fracs) == pytest.approx(1.0, abs=1e-15)
    assert split.counts[0] == round(split.local_frac * G)


def test_invalid_splits_rejected():
    with pytest.raises(DomainError):
        offload.TaskSplit((1, 2), 4)
    with pytest.raises(DomainError):
        offload.TaskSplit((-1, 5), 4)
    with pytest.raises(DomainError):
        offload.decode_split(9999, 1, 4)


def test_u2c_cost():
    t, e = offload.u2c_cost(1e6, 2e6, 0.8, 0.1)
    assert t == pytest.approx(0.5, rel=1e-15)
    assert e == pytest.approx(0.8 * 0.1 * 0.5, rel=1e-15)
    with pytest.raises(UnreachableLinkError):
        offload.u2c_cost(1e6, 0.0, 0.8, 0.1)


def test_cuav_compute_cost():
    t, e = offload.cuav_compute_cost(0.5, 1e6, 100.0, 1e9, 1e-28)
    assert t == pytest.approx(0.05, rel=1e-15)
    assert e == pytest.approx(1e-28 * 1e27 * 0.05, rel=1e-15)
    t0, e0 = offload.cuav_compute_cost(0.0, 1e6, 100.0, 1e9, 1e-28)
    assert t0 == 0.0 and e0 == 0.0


def test_c2i_cost():
    t, e = offload.c2i_cost(0.25, 1e6, 5e6, 2.0, 0.5)
    assert t == pytest.approx(0.05, rel=1e-15)
    assert e == pytest.approx(0.05 * 2.0 * 0.5, rel=1e-15)
    assert offload.c2i_cost(0.0, 1e6, 0.0, 2.0, 0.5) == (0.0, 0.0)
    with pytest.raises(UnreachableLinkError):
        offload.c2i_cost(0.5, 1e6, 0.0, 2.0, 0.5)


def test_bs_compute_delay_shares_cpu():
    d = offload.bs_compute_delay(0.5, 1e6, 100.0, 1e10, 2)
    assert d == pytest.approx(0.5 * 1e8 / 5e9, rel=1e-15)


def test_slot_compute_time_composition():
    costs = [(0.1, 0.3, 0.2), (0.05, 0.0, 0.4)]
    assert offload.slot_compute_time(costs) == pytest.approx(0.1 + 0.3 + 0.05 + 0.4,
                                                             rel=1e-15)
