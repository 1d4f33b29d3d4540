"""UAV kinematics, rotor propulsion power, and geometric constraint checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def propulsion_coefficient(v_uav: float, c1: float, c2: float, c3: float,
                           v_tip: float, v_0: float) -> float:
    """Rotorcraft power draw (watts) at horizontal speed v_uav."""
    if v_uav < 0:
        raise DomainError("speed must be nonnegative")
    radicand = 1.0 + v_uav**4 / (4.0 * v_0**4) - v_uav**2 / (2.0 * v_0**2)
    if radicand < 0.0:
        raise DomainError("propulsion radicand negative at this speed")
    return (c1 * (1.0 + 3.0 * v_uav**2 / v_tip**2)
            + c2 * math.sqrt(radicand)
            + 0.5 * c3 * v_uav**3)


def slot_propulsion_energy(move_time: float, slot_seconds: float,
                           alpha_move: float, alpha_hover: float) -> float:
    """Energy split between the moving and hovering portions of a slot."""
    if not 0.0 <= move_time <= slot_seconds:
        raise DomainError("move_time must lie in [0, slot length]")
    return alpha_move * move_time + alpha_hover * (slot_seconds - move_time)


def _segment_disc_entry(p0: np.ndarray, d: np.ndarray, center: np.ndarray,
                        radius: float) -> float | None:
    """Smallest t in (0, 1] where p0 + t*d enters the disc, or None."""
    f = p0 - center
    a = float(d @ d)
    if a == 0.0:
        return None
    b = 2.0 * float(f @ d)
    c = float(f @ f) - radius * radius
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    t = (-b - sq) / (2 * a)
    if 0.0 < t <= 1.0:
        return t
    return None


@dataclass
class MoveResult:
    position: np.ndarray  # (3,)
    move_time: float
    clamped: bool  # requested distance exceeded l_max


def apply_move(position: np.ndarray, rho: float, l: float, l_max: float,
               v_move: float, area_side: float, obstacles=(),
               slot_seconds: float | None = None) -> MoveResult:
    """Planar displacement with boundary and obstacle clipping.

    Distances beyond l_max are clamped (logged via the clamped flag), not
    rejected. The actual distance flown sets move_time = l_eff / v_move.
    """
    clamped = False
    if l < 0:
        raise DomainError("move distance must be nonnegative")
    if l > l_max:
        l = l_max
        clamped = True
    p0 = np.asarray(position, dtype=float).copy()
    if l == 0.0:
        return MoveResult(position=p0, move_time=0.0, clamped=clamped)
    step = np.array([l * math.cos(rho), l * math.sin(rho)])
    # first contact with any obstacle disc clips the move
    t_hit = 1.0
    for (ox, oy, rad) in obstacles:
        t = _segment_disc_entry(p0[:2], step, np.array([ox, oy]), rad)
        if t is not None:
            t_hit = min(t_hit, t)
    target = p0[:2] + t_hit * step
    target = np.clip(target, 0.0, area_side)
    # clipping can only shorten the move; guard against roundoff in the norm
    l_eff = min(float(np.linalg.norm(target - p0[:2])), l)
    move_time = l_eff / v_move
    if slot_seconds is not None and move_time > slot_seconds:
        raise DomainError("move time exceeds the slot length")
    new_pos = p0.copy()
    new_pos[:2] = target
    return MoveResult(position=new_pos, move_time=move_time, clamped=clamped)


def check_separation(positions: np.ndarray, d_min: float) -> list[tuple[int, int]]:
    """Pairs closer than d_min (strict) among same-kind UAVs."""
    violations = []
    k = len(positions)
    for i in range(k):
        for j in range(i + 1, k):
            if float(np.linalg.norm(positions[i] - positions[j])) < d_min:
                violations.append((i, j))
    return violations


def check_coverage_overlap(positions: np.ndarray, radii) -> list[tuple[int, int]]:
    """Pairs whose coverage radii sum exceeds their distance (strict)."""
    violations = []
    radii = np.asarray(radii, dtype=float)
    k = len(positions)
    for i in range(k):
        for j in range(i + 1, k):
            if radii[i] + radii[j] > float(np.linalg.norm(positions[i] - positions[j])):
                violations.append((i, j))
    return violations
