"""SNR, achievable rates, and secrecy rate for both offloading hops.

The BS hop goes through IRS cascades; the jammer interferes both directly
and via IRS reflections. Physical outcomes (what the environment scores)
use the true illegitimate channels; agents only ever observe estimated
regions. A worst-case flag instead evaluates the eavesdropper at the
CSI-ball boundary aligned with the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelRealization
from .errors import DomainError
from .scenario import RadioParams


def phases_from_indices(indices, levels: int) -> np.ndarray:
    """Uniformly quantized phase alphabet: index k -> 2*pi*k/levels."""
    return 2.0 * math.pi * np.asarray(indices, dtype=float) / levels


def reflection_vector(phases) -> np.ndarray:
    """Unit-modulus coefficients e^{j*theta}."""
    return np.exp(1j * np.asarray(phases, dtype=float))


@dataclass
class RateReport:
    """All per-slot SNRs and rates the environment needs."""

    gamma_uc: np.ndarray  # (M, N), zero where not co-served
    rate_uc: np.ndarray  # (M, N) bits/s
    gamma_bs: np.ndarray  # (N, P)
    rate_bs: np.ndarray  # (N, P) bits/s
    gamma_eve: np.ndarray  # (N, P)
    rate_eve: np.ndarray  # (N, P)
    secrecy: np.ndarray  # (N,) bits/s


def sinr_uplink(ch: ChannelRealization, m: int, n: int, radio: RadioParams,
                co_served: Sequence[int]) -> float:
    """Uplink SINR of UE m at C-UAV n with interference from co-served UEs."""
    num = abs(ch.h_uc[m, n]) ** 2 * radio.ue_power
    interference = 0.0
    for i in co_served:
        if i == m:
            continue
        interference += ch.loss_uc[i, n] * abs(ch.h_uc[i, n]) ** 2 * radio.ue_power
    return num / (radio.noise_cuav + interference)


def rate_uplink(gamma: float, uplink_bandwidth_hz: float, served_count: int) -> float:
    """Equal bandwidth share across the served UEs."""
    if served_count < 1:
        raise DomainError("served_count must be >= 1")
    return uplink_bandwidth_hz / served_count * math.log2(1.0 + gamma)


def cascaded_gain(h_out: np.ndarray, v: np.ndarray, h_in: np.ndarray) -> complex:
    """IRS cascade h_out . diag(v) . h_in."""
    h_out = np.asarray(h_out)
    v = np.asarray(v)
    h_in = np.asarray(h_in)
    if not (h_out.shape == v.shape == h_in.shape):
        raise DomainError("cascaded_gain requires equal-length vectors")
    return complex(np.sum(h_out * v * h_in))


def _tilde(h, loss):
    """Path-loss incorporated coefficient."""
    return h / np.sqrt(loss)


def eve_channel(ch: ChannelRealization, p: int, radio: RadioParams) -> np.ndarray:
    """I-UAV p -> eavesdropper coefficients used for physical outcomes."""
    if radio.worst_case_eve:
        hhat = ch.hhat_ie[p]
        norm = np.linalg.norm(hhat)
        if norm == 0.0:
            return hhat
        return hhat * (1.0 + radio.csi_error_bound["IE"] / norm)
    return ch.h_ie[p]


def _cascade_bs(ch, n, p, v_p):
    return cascaded_gain(_tilde(ch.h_ib[p], ch.loss_ib[p]), v_p,
                         _tilde(ch.h_ci[n, p], ch.loss_ci[n, p]))


def _cascade_eve(ch, n, p, v_p, radio):
    return cascaded_gain(_tilde(eve_channel(ch, p, radio), ch.loss_ie[p]), v_p,
                         _tilde(ch.h_ci[n, p], ch.loss_ci[n, p]))


def _cascade_jam(ch, p, v_p):
    return cascaded_gain(_tilde(ch.h_ib[p], ch.loss_ib[p]), v_p,
                         _tilde(ch.h_ji[p], ch.loss_ji[p]))


def sinr_bs(ch: ChannelRealization, n: int, p: int, v: Sequence[np.ndarray],
            radio: RadioParams) -> float:
    """BS SINR of C-UAV n's signal through I-UAV p.

    Interference: direct jamming, IRS-reflected jamming over all surfaces,
    and cross-C-UAV cascades over all surfaces.
    """
    N = ch.h_ci.shape[0]
    P = ch.h_ci.shape[1]
    num = abs(_cascade_bs(ch, n, p, v[p])) ** 2 * radio.cuav_tx_power
    den = radio.noise_bs + abs(_tilde(ch.h_jb, ch.loss_jb)) ** 2 * radio.jammer_power
    for pp in range(P):
        den += abs(_cascade_jam(ch, pp, v[pp])) ** 2 * radio.jammer_power
        for nn in range(N):
            if nn == n:
                continue
            den += abs(_cascade_bs(ch, nn, pp, v[pp])) ** 2 * radio.cuav_tx_power
    return num / den


def sinr_eve(ch: ChannelRealization, n: int, p: int, v: Sequence[np.ndarray],
             radio: RadioParams) -> float:
    """Eavesdropper SINR of C-UAV n's leakage through I-UAV p (no jamming term)."""
    N = ch.h_ci.shape[0]
    P = ch.h_ci.shape[1]
    num = abs(_cascade_eve(ch, n, p, v[p], radio)) ** 2 * radio.cuav_tx_power
    den = radio.noise_eve
    for pp in range(P):
        for nn in range(N):
            if nn == n:
                continue
            den += abs(_cascade_eve(ch, nn, pp, v[pp], radio)) ** 2 * radio.cuav_tx_power
    return num / den


def rate_bs(gamma: float, bs_bandwidth_hz: float, num_cuavs: int) -> float:
    return bs_bandwidth_hz / num_cuavs * math.log2(1.0 + gamma)


def rate_eve(gamma: float, radio: RadioParams, num_cuavs: int) -> float:
    r = math.log2(1.0 + gamma)
    if radio.eve_rate_bandwidth:
        r *= radio.bs_bandwidth_hz / num_cuavs
    return r


def secrecy_rate(ch: ChannelRealization, n: int, v: Sequence[np.ndarray],
                 radio: RadioParams) -> float:
    """Sum over surfaces of the clamped BS-minus-eavesdropper rate gap."""
    N = ch.h_ci.shape[0]
    P = ch.h_ci.shape[1]
    total = 0.0
    for p in range(P):
        r_b = rate_bs(sinr_bs(ch, n, p, v, radio), radio.bs_bandwidth_hz, N)
        r_e = rate_eve(sinr_eve(ch, n, p, v, radio), radio, N)
        total += max(0.0, r_b - r_e)
    return total


def eve_rate_total(ch: ChannelRealization, n: int, v: Sequence[np.ndarray],
                   radio: RadioParams) -> float:
    N = ch.h_ci.shape[0]
    P = ch.h_ci.shape[1]
    return sum(rate_eve(sinr_eve(ch, n, p, v, radio), radio, N) for p in range(P))


def eve_rate_cap_violated(ch: ChannelRealization, n: int, v: Sequence[np.ndarray],
                          radio: RadioParams, rate_cap: float) -> bool:
    return eve_rate_total(ch, n, v, radio) > rate_cap


def compute_rate_report(ch: ChannelRealization, v: Sequence[np.ndarray],
                        radio: RadioParams, assignment: Sequence[int]) -> RateReport:
    """Rates for one slot. assignment[m] is the serving C-UAV index or -1."""
    M, N = ch.h_uc.shape
    P = ch.h_ci.shape[1]
    served = [[m for m in range(M) if assignment[m] == n] for n in range(N)]

    gamma_uc = np.zeros((M, N))
    rate_uc = np.zeros((M, N))
    for n in range(N):
        for m in served[n]:
            g = sinr_uplink(ch, m, n, radio, served[n])
            gamma_uc[m, n] = g
            rate_uc[m, n] = rate_uplink(g, radio.uplink_bandwidth_hz, len(served[n]))

    gamma_bs = np.zeros((N, P))
    r_bs = np.zeros((N, P))
    gamma_e = np.zeros((N, P))
    r_e = np.zeros((N, P))
    secrecy = np.zeros(N)
    for n in range(N):
        for p in range(P):
            gamma_bs[n, p] = sinr_bs(ch, n, p, v, radio)
            r_bs[n, p] = rate_bs(gamma_bs[n, p], radio.bs_bandwidth_hz, N)
            gamma_e[n, p] = sinr_eve(ch, n, p, v, radio)
            r_e[n, p] = rate_eve(gamma_e[n, p], radio, N)
            secrecy[n] += max(0.0, r_bs[n, p] - r_e[n, p])

    return RateReport(gamma_uc=gamma_uc, rate_uc=rate_uc, gamma_bs=gamma_bs,
                      rate_bs=r_bs, gamma_eve=gamma_e, rate_eve=r_e, secrecy=secrecy)
