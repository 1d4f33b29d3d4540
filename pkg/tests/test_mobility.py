import math

import mpmath
import numpy as np
import pytest

from skysim import mobility
from skysim.errors import DomainError

C1, C2, C3 = 79.86, 88.63, 0.037
V_TIP, V0 = 120.0, 4.03


def mp_propulsion(v):
    """High-precision oracle for the rotary-wing power model."""
    with mpmath.workdps(50):
        v = mpmath.mpf(v)
        blade = C1 * (1 + 3 * v**2 / mpmath.mpf(V_TIP) ** 2)
        induced = C2 * mpmath.sqrt(1 + v**4 / (4 * mpmath.mpf(V0) ** 4)
                                   - v**2 / (2 * mpmath.mpf(V0) ** 2))
        parasite = mpmath.mpf("0.5") * C3 * v**3
        return float(blade + induced + parasite)


def test_hover_power_is_exactly_c1_plus_c2():
    assert mobility.propulsion_coefficient(0.0, C1, C2, C3, V_TIP, V0) == C1 + C2


@pytest.mark.parametrize("v", [0.5, 4.03, 10.0, 20.0, 35.0, 60.0])
def test_propulsion_matches_high_precision_oracle(v):
    got = mobility.propulsion_coefficient(v, C1, C2, C3, V_TIP, V0)
    assert got == pytest.approx(mp_propulsion(v), rel=1e-12)


def test_propulsion_rejects_negative_speed():
    with pytest.raises(DomainError):
        mobility.propulsion_coefficient(-1.0, C1, C2, C3, V_TIP, V0)


def test_slot_energy_composition():
    a_move = mobility.propulsion_coefficient(20.0, C1, C2, C3, V_TIP, V0)
    a_hover = mobility.propulsion_coefficient(0.0, C1, C2, C3, V_TIP, V0)
    e = mobility.slot_propulsion_energy(0.3, 1.0, a_move, a_hover)
    assert e == pytest.approx(0.3 * a_move + 0.7 * a_hover, rel=1e-14)
    assert mobility.slot_propulsion_energy(0.0, 1.0, a_move, a_hover) == a_hover
    with pytest.raises(DomainError):
        mobility.slot_propulsion_energy(1.5, 1.0, a_move, a_hover)
    with pytest.raises(DomainError):
        mobility.slot_propulsion_energy(-0.1, 1.0, a_move, a_hover)


def test_apply_move_basic():
    res = mobility.apply_move(np.array([100.0, 100.0, 100.0]), 0.0, 10.0,
                              20.0, 20.0, 1000.0)
    np.testing.assert_allclose(res.position, [110.0, 100.0, 100.0])
    assert res.move_time == pytest.approx(0.5, rel=1e-14)
    assert not res.clamped
    assert res.position[2] == 100.0  # altitude untouched


def test_apply_move_clamps_long_commands():
    res = mobility.apply_move(np.array([100.0, 100.0, 100.0]), math.pi / 2, 50.0,
                              20.0, 20.0, 1000.0)
    np.testing.assert_allclose(res.position, [100.0, 120.0, 100.0], atol=1e-12)
    assert res.clamped
    with pytest.raises(DomainError):
        mobility.apply_move(np.zeros(3), 0.0, -1.0, 20.0, 20.0, 1000.0)


def test_apply_move_respects_area_boundary():
    res = mobility.apply_move(np.array([5.0, 5.0, 100.0]), math.pi, 20.0,
                              20.0, 20.0, 1000.0)
    assert res.position[0] == 0.0
    assert res.move_time == pytest.approx(5.0 / 20.0, rel=1e-12)


def test_apply_move_obstacle_first_contact():
    # heading east from (0, 50) into a disc centered (30, 50) radius 10:
    # first contact at x = 20
    res = mobility.apply_move(np.array([0.0, 50.0, 100.0]), 0.0, 20.0,
                              40.0, 20.0, 1000.0, obstacles=((30.0, 50.0, 10.0),),
                              slot_seconds=2.0)
    np.testing.assert_allclose(res.position[:2], [20.0, 50.0], atol=1e-9)
    assert res.move_time == pytest.approx(1.0, rel=1e-9)


def test_apply_move_skims_past_obstacle():
    # path passes outside the disc: unaffected
    res = mobility.apply_move(np.array([0.0, 50.0, 100.0]), 0.0, 20.0,
                              40.0, 20.0, 1000.0, obstacles=((30.0, 65.0, 10.0),))
    np.testing.assert_allclose(res.position[:2], [20.0, 50.0], atol=1e-12)


def test_zero_move_costs_nothing():
    res = mobility.apply_move(np.array([3.0, 4.0, 100.0]), 1.0, 0.0, 20.0, 20.0, 1000.0)
    np.testing.assert_array_equal(res.position, [3.0, 4.0, 100.0])
    assert res.move_time == 0.0


def test_separation_strict_inequality():
    pos = np.array([[0.0, 0.0, 100.0], [10.0, 0.0, 100.0], [13.0, 0.0, 100.0]])
    assert mobility.check_separation(pos, 10.0) == [(1, 2)]
    assert mobility.check_separation(pos, 10.0 + 1e-9) == [(0, 1), (1, 2)]


def test_coverage_overlap_strict_inequality():
    pos = np.array([[0.0, 0.0, 100.0], [100.0, 0.0, 100.0]])
    assert mobility.check_coverage_overlap(pos, [50.0, 50.0]) == []
    assert mobility.check_coverage_overlap(pos, [50.0, 51.0]) == [(0, 1)]
