"""Task-split bookkeeping and per-phase delay/energy terms of offloading.

Splits live on a discrete simplex: fractions are multiples of 1/G so the
sum-to-one constraint is exact at the integer level. All delay terms are
linear in the data size, which lets partially served packets carry over
with proportional cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import DomainError, UnreachableLinkError


@dataclass(frozen=True)
class TaskSplit:
    """Fractions k_i / grid with integer counts summing to the grid size."""

    counts: tuple  # (local, relay_1, ..., relay_P)
    grid: int

    def __post_init__(self):
        if sum(self.counts) != self.grid:
            raise DomainError("split counts must sum to the grid size")
        if any(k < 0 for k in self.counts):
            raise DomainError("split counts must be nonnegative")

    @property
    def local_frac(self) -> float:
        return self.counts[0] / self.grid

    @property
    def relay_fracs(self) -> tuple:
        return tuple(k / self.grid for k in self.counts[1:])


@lru_cache(maxsize=None)
def split_alphabet(num_relays: int, grid: int) -> tuple:
    """All compositions of `grid` into num_relays + 1 parts, lexicographic."""

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    return tuple(TaskSplit(c, grid) for c in compositions(grid, num_relays + 1))


def split_alphabet_size(num_relays: int, grid: int) -> int:
    return math.comb(grid + num_relays, num_relays)


def decode_split(index: int, num_relays: int, grid: int) -> TaskSplit:
    alphabet = split_alphabet(num_relays, grid)
    if not 0 <= index < len(alphabet):
        raise DomainError(f"split index {index} out of range (size {len(alphabet)})")
    return alphabet[index]


def u2c_cost(data_bits: float, rate_uc: float, h_uc_gain_sq: float,
             ue_power: float) -> tuple[float, float]:
    """Uplink transmission time and the energy booked to the C-UAV ledger."""
    if rate_uc <= 0.0:
        raise UnreachableLinkError("uplink rate is zero; task stays queued")
    t = data_bits / rate_uc
    e = h_uc_gain_sq * ue_power * t
    return t, e


def cuav_compute_cost(local_frac: float, data_bits: float, cycles_per_bit: float,
                      cpu_hz: float, kappa: float) -> tuple[float, float]:
    """Onboard compute time and energy for the locally kept fraction."""
    t = local_frac * data_bits * cycles_per_bit / cpu_hz
    e = kappa * cpu_hz**3 * t
    return t, e


def c2i_cost(relay_frac: float, data_bits: float, rate_bs: float,
             cascade_gain_sq: float, cuav_tx_power: float) -> tuple[float, float]:
    """Relay transmission time and energy for one I-UAV route."""
    if relay_frac == 0.0:
        return 0.0, 0.0
    if rate_bs <= 0.0:
        raise UnreachableLinkError("relay route rate is zero")
    t = relay_frac * data_bits / rate_bs
    e = t * cascade_gain_sq * cuav_tx_power
    return t, e


def bs_compute_delay(relay_frac: float, data_bits: float, cycles_per_bit: float,
                     bs_cpu_hz: float, num_cuavs: int) -> float:
    """BS compute time at the per-C-UAV resource share."""
    return relay_frac * data_bits * cycles_per_bit / (bs_cpu_hz / num_cuavs)


def slot_compute_time(per_ue_costs) -> float:
    """Sum over UEs of uplink time plus the slower of compute and relay legs.

    per_ue_costs: iterable of (t_u2c, t_compute, t_relay_total) where
    t_relay_total already composes C2I transmission and BS compute.
    """
    return sum(t_u + max(t_c, t_r) for t_u, t_c, t_r in per_ue_costs)
