"""Age-of-Information bookkeeping: threshold violation time and soft penalty.

Ages are measured in slots. Within a slot the generation time of the oldest
uncollected packet is constant, so the age is a unit-slope ramp and both
metrics integrate exactly in closed form. Generations take effect at the
start of a slot, collections at its end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _exp_capped_integral(lo: float, hi: float, cap: float) -> float:
    """Integral of exp(min(a, cap)) over the age interval [lo, hi]."""
    if hi <= lo:
        return 0.0
    if hi <= cap:
        return math.exp(hi) - math.exp(lo)
    if lo >= cap:
        return math.exp(cap) * (hi - lo)
    return math.exp(cap) - math.exp(lo) + math.exp(cap) * (hi - cap)


def penalty_integral(a0: float, a1: float, threshold: float, cap: float) -> float:
    """Exact integral of f(age) along a unit-slope ramp from age a0 to a1.

    f(a) = a below the threshold and a + e^a at or above it, with the
    exponent argument saturated at `cap`.
    """
    if a1 <= a0:
        return 0.0
    linear = (a1 * a1 - a0 * a0) / 2.0
    lo = max(a0, threshold)
    return linear + _exp_capped_integral(lo, a1, cap)


def violation_integral(a0: float, a1: float, threshold: float) -> float:
    """Time spent at or above the threshold along the ramp [a0, a1]."""
    return max(0.0, a1 - max(a0, threshold))


@dataclass
class AgeTracker:
    """Per-UE age state plus the two metric accumulators."""

    num_ues: int
    threshold: float
    exp_cap: float = 50.0
    oldest_gen: list = field(default_factory=list)  # per UE, None when empty
    violation: np.ndarray = None
    penalty: np.ndarray = None

    def __post_init__(self):
        if not self.oldest_gen:
            self.oldest_gen = [None] * self.num_ues
        if self.violation is None:
            self.violation = np.zeros(self.num_ues)
        if self.penalty is None:
            self.penalty = np.zeros(self.num_ues)


def advance(tracker: AgeTracker, slot: int, generations, collections) -> AgeTracker:
    """Process one slot [slot, slot + 1].

    generations: UE indices whose queue received a packet at x = slot while
    previously empty (tracker starts its clock there).
    collections: mapping UE index -> new oldest generation time (or None for
    an emptied queue), effective at x = slot + 1.
    """
    for m in generations:
        if tracker.oldest_gen[m] is None:
            tracker.oldest_gen[m] = float(slot)
    x0, x1 = float(slot), float(slot + 1)
    for m in range(tracker.num_ues):
        z = tracker.oldest_gen[m]
        if z is None:
            continue
        a0, a1 = x0 - z, x1 - z
        tracker.violation[m] += violation_integral(a0, a1, tracker.threshold)
        tracker.penalty[m] += penalty_integral(a0, a1, tracker.threshold, tracker.exp_cap)
    for m, new_z in collections.items():
        tracker.oldest_gen[m] = float(new_z) if new_z is not None else None
    return tracker


def violation_ratio(tracker: AgeTracker, horizon_slots: float | None = None,
                    normalize: bool = False) -> float:
    """chi: violated time averaged over UEs (optionally divided by X)."""
    chi = float(np.mean(tracker.violation))
    if normalize:
        if not horizon_slots:
            raise ValueError("normalization requires the horizon")
        chi /= horizon_slots
    return chi


def aoi_penalty(tracker: AgeTracker, weights: np.ndarray) -> float:
    """Q: weighted penalty integral averaged over UEs."""
    weights = np.asarray(weights, dtype=float)
    return float(np.mean(weights * tracker.penalty))
