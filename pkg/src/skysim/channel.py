"""Per-slot channel generation: Nakagami-m fading, path loss, bounded CSI.

Illegitimate links (C-UAV->E, jammer->BS, jammer->I-UAV, I-UAV->E) carry
both an estimated coefficient and the true one, with the estimation error
confined to a ball of configured radius. Legitimate links are known exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .scenario import RadioParams


def path_loss(d: float, A: float, alpha_pl: float) -> float:
    """A * d^alpha for link distance d > 0."""
    if d <= 0:
        raise DomainError(f"path_loss requires d > 0, got {d}")
    return A * d**alpha_pl


def nakagami_magnitude(rng: np.random.Generator, m: float, size) -> np.ndarray:
    """|h| samples with E[|h|^2] = 1 (unit spread)."""
    return np.sqrt(rng.gamma(shape=m, scale=1.0 / m, size=size))


def _fading(rng: np.random.Generator, m: float, size) -> np.ndarray:
    mag = nakagami_magnitude(rng, m, size)
    phase = rng.uniform(0.0, 2 * math.pi, size=size)
    return mag * np.exp(1j * phase)


def _ball_error(rng: np.random.Generator, radius: float, n_complex: int) -> np.ndarray:
    """Uniform draw from the radius-ball in C^n (2n real dims)."""
    if radius == 0.0:
        return np.zeros(n_complex, dtype=complex)
    direction = rng.normal(size=2 * n_complex)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return np.zeros(n_complex, dtype=complex)
    r = radius * rng.uniform() ** (1.0 / (2 * n_complex))
    vec = direction / norm * r
    return vec[:n_complex] + 1j * vec[n_complex:]


@dataclass
class ChannelRealization:
    """All complex channel coefficients and path losses for one timeslot."""

    h_uc: np.ndarray  # (M, N)
    h_ci: np.ndarray  # (N, P, L)
    h_ib: np.ndarray  # (P, L)
    h_jb: complex
    h_ce: np.ndarray  # (N,)
    h_ji: np.ndarray  # (P, L)
    h_ie: np.ndarray  # (P, L)
    # estimated illegitimate CSI (true = estimated + in-ball error)
    hhat_jb: complex
    hhat_ce: np.ndarray
    hhat_ji: np.ndarray
    hhat_ie: np.ndarray
    loss_uc: np.ndarray  # (M, N)
    loss_ci: np.ndarray  # (N, P)
    loss_ib: np.ndarray  # (P,)
    loss_jb: float
    loss_ce: np.ndarray  # (N,)
    loss_ji: np.ndarray  # (P,)
    loss_ie: np.ndarray  # (P,)


def sample_channels(
    ue_pos: np.ndarray,
    cuav_pos: np.ndarray,
    iuav_pos: np.ndarray,
    bs_pos: np.ndarray,
    eve_pos: np.ndarray,
    jam_pos: np.ndarray,
    irs_elements: int,
    radio: RadioParams,
    rng: np.random.Generator,
) -> ChannelRealization:
    """One independent block-fading realization for every link."""
    M = ue_pos.shape[0]
    N = cuav_pos.shape[0]
    P = iuav_pos.shape[0]
    L = int(irs_elements)
    coords = np.concatenate([ue_pos.ravel(), cuav_pos.ravel(), iuav_pos.ravel()])
    if not np.all(np.isfinite(coords)):
        raise DomainError("positions must be finite")

    A, alpha = radio.pathloss_const, radio.pathloss_exp

    def dist(a, b):
        return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))

    ue3 = np.concatenate([ue_pos, np.zeros((M, 1))], axis=1)

    loss_uc = np.empty((M, N))
    for m in range(M):
        for n in range(N):
            loss_uc[m, n] = path_loss(dist(ue3[m], cuav_pos[n]), A, alpha)
    loss_ci = np.empty((N, P))
    for n in range(N):
        for p in range(P):
            loss_ci[n, p] = path_loss(dist(cuav_pos[n], iuav_pos[p]), A, alpha)
    loss_ib = np.array([path_loss(dist(iuav_pos[p], bs_pos), A, alpha) for p in range(P)])
    loss_jb = path_loss(dist(jam_pos, bs_pos), A, alpha)
    loss_ce = np.array([path_loss(dist(cuav_pos[n], eve_pos), A, alpha) for n in range(N)])
    loss_ji = np.array([path_loss(dist(jam_pos, iuav_pos[p]), A, alpha) for p in range(P)])
    loss_ie = np.array([path_loss(dist(iuav_pos[p], eve_pos), A, alpha) for p in range(P)])

    m_air = radio.nakagami_m_air
    m_gnd = radio.nakagami_m_ground
    xi = radio.csi_error_bound

    h_uc = _fading(rng, m_gnd, (M, N))
    h_ci = _fading(rng, m_air, (N, P, L))
    h_ib = _fading(rng, m_air, (P, L))

    hhat_jb = complex(_fading(rng, m_gnd, (1,))[0])
    hhat_ce = _fading(rng, m_gnd, (N,))
    hhat_ji = _fading(rng, m_gnd, (P, L))
    hhat_ie = _fading(rng, m_air, (P, L))

    h_jb = hhat_jb + complex(_ball_error(rng, xi["JB"], 1)[0])
    h_ce = hhat_ce + np.array([_ball_error(rng, xi["CE"], 1)[0] for _ in range(N)])
    h_ji = hhat_ji + np.stack([_ball_error(rng, xi["JI"], L) for _ in range(P)])
    h_ie = hhat_ie + np.stack([_ball_error(rng, xi["IE"], L) for _ in range(P)])

    return ChannelRealization(
        h_uc=h_uc, h_ci=h_ci, h_ib=h_ib, h_jb=h_jb, h_ce=h_ce, h_ji=h_ji, h_ie=h_ie,
        hhat_jb=hhat_jb, hhat_ce=hhat_ce, hhat_ji=hhat_ji, hhat_ie=hhat_ie,
        loss_uc=loss_uc, loss_ci=loss_ci, loss_ib=loss_ib, loss_jb=loss_jb,
        loss_ce=loss_ce, loss_ji=loss_ji, loss_ie=loss_ie,
    )
