import dataclasses
import itertools
import math

import numpy as np
import pytest

from skysim import radio
from skysim.channel import sample_channels
from skysim.errors import DomainError
from skysim.scenario import RadioParams


def make_channels(seed=0, M=2, N=1, P=1, L=2, radio_params=None):
    rng = np.random.default_rng(seed)
    geo = np.random.default_rng(seed + 500)
    ue = geo.uniform(50, 400, (M, 2))
    cu = np.column_stack([geo.uniform(50, 400, (N, 2)), np.full(N, 100.0)])
    iu = np.column_stack([geo.uniform(50, 400, (P, 2)), np.full(P, 200.0)])
    return sample_channels(ue, cu, iu, np.array([0.0, 0.0, 10.0]),
                           np.array([420.0, 420.0, 0.0]), np.array([80.0, 420.0, 0.0]),
                           L, radio_params or RadioParams(), rng)


def test_phase_alphabet():
    np.testing.assert_allclose(radio.phases_from_indices([0, 2, 4], 8),
                               [0.0, math.pi / 2, math.pi])
    v = radio.reflection_vector(radio.phases_from_indices([0, 4], 8))
    np.testing.assert_allclose(v, [1.0 + 0j, -1.0 + 0j], atol=1e-15)
    assert np.allclose(np.abs(v), 1.0)


def test_cascaded_gain_scalar():
    h_out = np.array([1.0 + 0j, 2.0j])
    h_in = np.array([1.0 - 1.0j, 0.5 + 0j])
    v = np.array([1.0 + 0j, -1.0 + 0j])
    expect = (1 + 0j) * (1 - 1j) + 2j * (-1) * 0.5
    assert radio.cascaded_gain(h_out, v, h_in) == pytest.approx(expect, rel=1e-15)


def test_cascaded_gain_length_mismatch():
    with pytest.raises(DomainError):
        radio.cascaded_gain(np.ones(2, complex), np.ones(3, complex), np.ones(2, complex))


def test_sinr_uplink_matches_hand_formula():
    ch = make_channels(seed=1, M=3)
    rp = RadioParams()
    g = radio.sinr_uplink(ch, 0, 0, rp, co_served=[0, 1, 2])
    interference = sum(ch.loss_uc[i, 0] * abs(ch.h_uc[i, 0]) ** 2 * rp.ue_power
                       for i in (1, 2))
    expect = abs(ch.h_uc[0, 0]) ** 2 * rp.ue_power / (rp.noise_cuav + interference)
    assert g == pytest.approx(expect, rel=1e-12)
    # serving alone removes the interference term
    g_alone = radio.sinr_uplink(ch, 0, 0, rp, co_served=[0])
    assert g_alone > g


def test_rate_uplink_bandwidth_share():
    assert radio.rate_uplink(3.0, 1e6, 2) == pytest.approx(5e5 * 2.0, rel=1e-12)
    with pytest.raises(DomainError):
        radio.rate_uplink(1.0, 1e6, 0)


def test_sinr_bs_matches_hand_formula():
    ch = make_channels(seed=2, N=2, P=2, L=3)
    rp = RadioParams()
    v = [np.exp(1j * np.random.default_rng(9).uniform(0, 2 * np.pi, 3))
         for _ in range(2)]

    def tilde(h, loss):
        return h / np.sqrt(loss)

    def casc(out, loss_o, vp, inn, loss_i):
        return np.sum(tilde(out, loss_o) * vp * tilde(inn, loss_i))

    n, p = 0, 1
    num = abs(casc(ch.h_ib[p], ch.loss_ib[p], v[p], ch.h_ci[n, p], ch.loss_ci[n, p])) ** 2
    num *= rp.cuav_tx_power
    den = rp.noise_bs + abs(tilde(ch.h_jb, ch.loss_jb)) ** 2 * rp.jammer_power
    for pp in range(2):
        den += abs(casc(ch.h_ib[pp], ch.loss_ib[pp], v[pp],
                        ch.h_ji[pp], ch.loss_ji[pp])) ** 2 * rp.jammer_power
        den += abs(casc(ch.h_ib[pp], ch.loss_ib[pp], v[pp],
                        ch.h_ci[1, pp], ch.loss_ci[1, pp])) ** 2 * rp.cuav_tx_power
    assert radio.sinr_bs(ch, n, p, v, rp) == pytest.approx(num / den, rel=1e-12)


def test_sinr_bs_decreases_with_jammer_power():
    ch = make_channels(seed=3, N=1, P=2, L=2)
    v = [np.ones(2, complex)] * 2
    gammas = [radio.sinr_bs(ch, 0, 0, v, RadioParams(jammer_power=pj))
              for pj in (0.0, 0.1, 1.0, 10.0)]
    assert all(a > b for a, b in zip(gammas, gammas[1:]))


def test_sinr_eve_excludes_jammer():
    v = [np.ones(2, complex)]
    ch = make_channels(seed=4)
    a = radio.sinr_eve(ch, 0, 0, v, RadioParams(jammer_power=0.0))
    b = radio.sinr_eve(ch, 0, 0, v, RadioParams(jammer_power=100.0))
    assert a == b


def test_worst_case_eve_scales_estimate_outward():
    ch = make_channels(seed=5)
    rp_wc = RadioParams(worst_case_eve=True)
    h = radio.eve_channel(ch, 0, rp_wc)
    xi = rp_wc.csi_error_bound["IE"]
    assert np.linalg.norm(h) == pytest.approx(np.linalg.norm(ch.hhat_ie[0]) + xi,
                                              rel=1e-12)
    np.testing.assert_array_equal(radio.eve_channel(ch, 0, RadioParams()), ch.h_ie[0])


def test_secrecy_nonnegative_and_clamped_per_route():
    ch = make_channels(seed=6, N=1, P=2)
    rp = RadioParams()
    v = [np.ones(2, complex)] * 2
    s = radio.secrecy_rate(ch, 0, v, rp)
    per_route = [max(0.0, radio.rate_bs(radio.sinr_bs(ch, 0, p, v, rp),
                                        rp.bs_bandwidth_hz, 1)
                     - radio.rate_eve(radio.sinr_eve(ch, 0, p, v, rp), rp, 1))
                 for p in range(2)]
    assert s == pytest.approx(sum(per_route), rel=1e-12)
    assert s >= 0.0


def test_eve_rate_cap_strict():
    ch = make_channels(seed=7)
    rp = RadioParams()
    v = [np.ones(2, complex)]
    total = radio.eve_rate_total(ch, 0, v, rp)
    assert not radio.eve_rate_cap_violated(ch, 0, v, rp, total)
    assert radio.eve_rate_cap_violated(ch, 0, v, rp, total - 1e-9)


def test_global_phase_shift_leaves_cascade_magnitude():
    ch = make_channels(seed=8, L=4)
    rp = RadioParams()
    rng = np.random.default_rng(11)
    phases = rng.uniform(0, 2 * np.pi, 4)
    for shift in (0.3, 1.7):
        a = radio.sinr_bs(ch, 0, 0, [radio.reflection_vector(phases)], rp)
        b = radio.sinr_bs(ch, 0, 0, [radio.reflection_vector(phases + shift)], rp)
        assert b == pytest.approx(a, rel=1e-10)


def brute_force_best_phases(ch, rp, levels=8, L=2):
    """Exhaustive secrecy search over the full discrete reflection alphabet."""
    best, best_idx, table = -np.inf, None, {}
    for idx in itertools.product(range(levels), repeat=L):
        v = [radio.reflection_vector(radio.phases_from_indices(idx, levels))]
        s = radio.secrecy_rate(ch, 0, v, rp)
        table[idx] = s
        if s > best:
            best, best_idx = s, idx
    return best_idx, table


def test_exhaustive_reflection_search_consistency():
    ch = make_channels(seed=9, M=1, N=1, P=1, L=2)
    rp = RadioParams()
    best_idx, table = brute_force_best_phases(ch, rp)
    assert len(table) == 64
    # module evaluation agrees with the enumerated values pointwise
    for idx, s in table.items():
        v = [radio.reflection_vector(radio.phases_from_indices(idx, 8))]
        assert radio.secrecy_rate(ch, 0, v, rp) == pytest.approx(s, rel=1e-15)
    assert table[best_idx] == max(table.values())


def test_compute_rate_report_consistency():
    ch = make_channels(seed=10, M=3, N=2, P=2)
    rp = RadioParams()
    v = [np.ones(2, complex)] * 2
    assignment = [0, 0, 1]
    rep = radio.compute_rate_report(ch, v, rp, assignment)
    assert rep.gamma_uc[2, 0] == 0.0  # not served there
    g = radio.sinr_uplink(ch, 0, 0, rp, [0, 1])
    assert rep.gamma_uc[0, 0] == pytest.approx(g, rel=1e-15)
    assert rep.rate_uc[0, 0] == pytest.approx(
        radio.rate_uplink(g, rp.uplink_bandwidth_hz, 2), rel=1e-15)
    for n in range(2):
        assert rep.secrecy[n] == pytest.approx(radio.secrecy_rate(ch, n, v, rp),
                                               rel=1e-15)
