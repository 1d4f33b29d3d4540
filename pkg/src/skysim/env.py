"""The decentralized MDP: observations, slot dynamics, rewards, termination.

One environment instance owns one episode's mutable state. Step order per
slot: moves and propulsion, channel sampling, traffic generation, UE
association, rate computation, offloading within the residual time budget,
energy charging, AoI update, rewards.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import aoi, mobility, offload, radio
from .channel import ChannelRealization, sample_channels
from .errors import ContractError, UnreachableLinkError
from .rng import substream
from .scenario import ScenarioConfig, build_world


@dataclass
class ActionBundle:
    """Discrete action indices for every UAV in one slot."""

    move: np.ndarray  # (N + P, 2) int: (angle bin, distance bin)
    split: np.ndarray  # (N, M) int: split-alphabet index per UE
    phase: np.ndarray  # (P, L) int: phase level per IRS element (slot 0 only)


@dataclass
class StepOutcome:
    rewards: np.ndarray  # (N + P,)
    observations: np.ndarray  # (N + P, obs_dim)
    done: bool
    info: dict


def observation_dim(num_ues: int, num_cuavs: int, num_iuavs: int) -> int:
    """5 per UE, 7 adversary scalars, 4 per UAV, plus a self one-hot."""
    n_uavs = num_cuavs + num_iuavs
    return 5 * num_ues + 7 + 4 * n_uavs + n_uavs


class UavMecEnv:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        self.M = config.num_ues
        self.N = config.num_cuavs
        self.P = config.num_iuavs
        self.L = config.irs_elements
        self.n_uavs = self.N + self.P
        self.obs_dim = observation_dim(self.M, self.N, self.P)
        e = config.energy
        self.alpha_move = mobility.propulsion_coefficient(
            e.cruise_speed, e.c1, e.c2, e.c3, e.rotor_tip_speed, e.induced_velocity)
        self.alpha_hover = mobility.propulsion_coefficient(
            0.0, e.c1, e.c2, e.c3, e.rotor_tip_speed, e.induced_velocity)
        self._replay_fh = None
        self.reset()

    # ------------------------------------------------------------------
    def enable_replay(self, path: str) -> None:
        self._replay_fh = open(path, "w", encoding="utf-8")

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self.seed = int(seed)
        cfg = dataclasses.replace(self.config, seed=self.seed)
        world = build_world(cfg)
        self.world = world
        self.cuav_pos = world.cuav_pos.copy()
        self.iuav_pos = world.iuav_pos.copy()
        self.queues: list[list[list[float]]] = [[] for _ in range(self.M)]
        self.debits: list[list[float]] = [[] for _ in range(self.n_uavs)]
        self.energy_spent = np.zeros(self.n_uavs)
        self.tracker = aoi.AgeTracker(self.M, self.config.aoi_threshold,
                                      exp_cap=self.config.aoi_exp_cap)
        self.reflection = [np.ones(self.L, dtype=complex) for _ in range(self.P)]
        self.t = 0
        self.done = False
        self.secrecy_norm_total = 0.0
        self.extrinsic_total = 0.0
        self._rng_channels = substream(self.seed, "channels")
        self._rng_traffic = substream(self.seed, "traffic")
        self.channels = self._sample_channels()
        return self._observations()

    # ------------------------------------------------------------------
    def _uav_positions(self) -> np.ndarray:
        return np.concatenate([self.cuav_pos, self.iuav_pos], axis=0)

    def remaining_energy(self) -> np.ndarray:
        return self.config.energy.battery_j - self.energy_spent

    def _charge(self, uav: int, amount: float) -> None:
        self.debits[uav].append(amount)
        self.energy_spent[uav] += amount

    def _sample_channels(self) -> ChannelRealization:
        w = self.world
        return sample_channels(w.ue_pos, self.cuav_pos, self.iuav_pos, w.bs_pos,
                               w.eve_pos, w.jam_pos, self.L, self.config.radio,
                               self._rng_channels)

    # ------------------------------------------------------------------
    def _observations(self) -> np.ndarray:
        cfg = self.config
        side = cfg.area_side_m
        horizon = cfg.horizon_slots
        uav_pos = self._uav_positions()
        remaining = self.remaining_energy()
        obs = np.zeros((self.n_uavs, self.obs_dim))
        d_bits = cfg.ue_task.data_bits

        uav_block = np.empty(4 * self.n_uavs)
        for u in range(self.n_uavs):
            uav_block[4 * u:4 * u + 4] = [uav_pos[u, 0] / side, uav_pos[u, 1] / side,
                                          uav_pos[u, 2] / side,
                                          remaining[u] / cfg.energy.battery_j]
        w = self.world
        pj = cfg.radio.jammer_power
        adversary = np.array([
            w.eve_centroid[0] / side, w.eve_centroid[1] / side,
            cfg.radio.eve_region_radius / side,
            w.jam_centroid[0] / side, w.jam_centroid[1] / side,
            cfg.radio.jammer_region_radius / side,
            pj / (1.0 + pj),
        ])

        for u in range(self.n_uavs):
            vec: list[float] = []
            for m in range(self.M):
                dist = math.hypot(uav_pos[u, 0] - w.ue_pos[m, 0],
                                  uav_pos[u, 1] - w.ue_pos[m, 1])
                if dist <= cfg.sensing_range and self.queues[m]:
                    bits = sum(pkt[1] for pkt in self.queues[m])
                    vec.extend([1.0, w.ue_pos[m, 0] / side, w.ue_pos[m, 1] / side,
                                bits / d_bits, self.queues[m][0][0] / horizon])
                else:
                    vec.extend([0.0, 0.0, 0.0, 0.0, 0.0])
            vec.extend(adversary)
            vec.extend(uav_block)
            one_hot = [0.0] * self.n_uavs
            one_hot[u] = 1.0
            vec.extend(one_hot)
            obs[u] = vec
        return obs

    # ------------------------------------------------------------------
    def sample_random_actions(self, rng: np.random.Generator) -> ActionBundle:
        cfg = self.config
        n_splits = offload.split_alphabet_size(self.P, cfg.split_grid)
        return ActionBundle(
            move=np.column_stack([
                rng.integers(0, cfg.n_angle_bins, self.n_uavs),
                rng.integers(0, cfg.n_dist_bins, self.n_uavs),
            ]),
            split=rng.integers(0, n_splits, (self.N, self.M)),
            phase=rng.integers(0, cfg.n_phase_levels, (self.P, self.L)),
        )

    def decode_move(self, angle_idx: int, dist_idx: int) -> tuple[float, float]:
        cfg = self.config
        rho = 2.0 * math.pi * angle_idx / cfg.n_angle_bins
        l = cfg.max_step_m * dist_idx / max(1, cfg.n_dist_bins - 1)
        return rho, l

    # ------------------------------------------------------------------
    def step(self, actions: ActionBundle) -> StepOutcome:
        if self.done:
            raise ContractError("step() called on a finished episode")
        cfg = self.config
        tau = cfg.slot_seconds
        e = cfg.energy
        w = self.world

        # (1) moves + propulsion
        move_time = np.zeros(self.n_uavs)
        for u in range(self.n_uavs):
            rho, l = self.decode_move(int(actions.move[u, 0]), int(actions.move[u, 1]))
            pos = self.cuav_pos[u] if u < self.N else self.iuav_pos[u - self.N]
            res = mobility.apply_move(pos, rho, l, cfg.max_step_m, e.cruise_speed,
                                      cfg.area_side_m, cfg.obstacles, tau)
            if u < self.N:
                self.cuav_pos[u] = res.position
            else:
                self.iuav_pos[u - self.N] = res.position
            move_time[u] = res.move_time
            self._charge(u, mobility.slot_propulsion_energy(
                res.move_time, tau, self.alpha_move, self.alpha_hover))

        # IRS phases: selected at slot 0, held for the episode
        if self.t == 0:
            for p in range(self.P):
                phases = radio.phases_from_indices(actions.phase[p], cfg.n_phase_levels)
                self.reflection[p] = radio.reflection_vector(phases)

        # (2) channels
        self.channels = self._sample_channels()
        ch = self.channels

        # (3) traffic generation at the slot start
        generations = []
        for m in range(self.M):
            if self._rng_traffic.uniform() < cfg.ue_task.arrival_prob:
                if not self.queues[m]:
                    generations.append(m)
                self.queues[m].append([float(self.t), cfg.ue_task.data_bits])

        # (4) association: active UEs to the nearest in-coverage C-UAV
        radii = cfg.coverage_radii()
        assignment = np.full(self.M, -1, dtype=int)
        for m in range(self.M):
            if not self.queues[m]:
                continue
            best, best_d = -1, math.inf
            for n in range(self.N):
                d = math.hypot(w.ue_pos[m, 0] - self.cuav_pos[n, 0],
                               w.ue_pos[m, 1] - self.cuav_pos[n, 1])
                if d <= radii[n] and d < best_d:
                    best, best_d = n, d
            assignment[m] = best

        # (5) rates and secrecy
        report = radio.compute_rate_report(ch, self.reflection, cfg.radio, assignment)
        secrecy_norm = float(np.sum(report.secrecy)) / cfg.radio.bs_bandwidth_hz
        self.secrecy_norm_total += secrecy_norm

        # (6) offloading within the residual slot time
        collected = self._serve(assignment, report, move_time, actions.split)

        # (7) AoI update: generations at slot start, collections at slot end
        viol_before = self.tracker.violation.copy()
        pen_before = self.tracker.penalty.copy()
        collections = {}
        for m in collected:
            collections[m] = self.queues[m][0][0] if self.queues[m] else None
        aoi.advance(self.tracker, self.t, generations, collections)
        weights = cfg.ue_weight_array
        d_chi = float(np.mean(self.tracker.violation - viol_before))
        if cfg.chi_normalize:
            d_chi /= cfg.horizon_slots
        d_q = float(np.mean(weights * (self.tracker.penalty - pen_before)))

        # (8) rewards
        extrinsic = -(d_q + d_chi - secrecy_norm)
        extrinsic = float(np.clip(extrinsic, -cfg.reward_clip, cfg.reward_clip))
        self.extrinsic_total += extrinsic
        remaining = self.remaining_energy()
        flags = self._constraint_flags(remaining, ch)
        rewards = np.empty(self.n_uavs)
        for u in range(self.n_uavs):
            rewards[u] = extrinsic + self._intrinsic(u, flags)

        self.t += 1
        self.done = self.t >= cfg.horizon_slots or bool(np.any(remaining <= 0.0))
        info = {
            "slot": self.t - 1,
            "secrecy_norm": secrecy_norm,
            "secrecy_sum": float(np.sum(report.secrecy)),
            "d_chi": d_chi,
            "d_q": d_q,
            "extrinsic": extrinsic,
            "flags": flags,
            "move_time": move_time,
            "assignment": assignment,
            "collected": sorted(collected),
            "report": report,
        }
        if self._replay_fh is not None:
            self._replay_fh.write(json.dumps({
                "slot": self.t - 1,
                "move": actions.move.tolist(),
                "split": actions.split.tolist(),
                "phase": actions.phase.tolist(),
                "rewards": rewards.tolist(),
            }) + "\n")
            self._replay_fh.flush()
        return StepOutcome(rewards=rewards, observations=self._observations(),
                           done=self.done, info=info)

    # ------------------------------------------------------------------
    def _serve(self, assignment: np.ndarray, report: radio.RateReport,
               move_time: np.ndarray, split_actions: np.ndarray) -> set:
        """Serve queued packets oldest-first within each C-UAV's time budget."""
        cfg = self.config
        e = cfg.energy
        ch = self.channels
        collected: set[int] = set()
        raw_casc_sq = np.empty((self.N, self.P))
        for n in range(self.N):
            for p in range(self.P):
                g = radio.cascaded_gain(ch.h_ib[p], self.reflection[p], ch.h_ci[n, p])
                raw_casc_sq[n, p] = abs(g) ** 2

        for n in range(self.N):
            budget = cfg.slot_seconds - move_time[n]
            assigned = [m for m in range(self.M) if assignment[m] == n]
            served_count = len(assigned)
            if not assigned:
                continue
            f_mn = e.cuav_cpu_hz / served_count
            blocked: set[int] = set()
            while budget > 0.0:
                candidates = [m for m in assigned if self.queues[m] and m not in blocked]
                if not candidates:
                    break
                m = min(candidates, key=lambda mm: self.queues[mm][0][0])
                gen, bits = self.queues[m][0]
                split = offload.decode_split(int(split_actions[n, m]),
                                             self.P, cfg.split_grid)
                try:
                    t_u, e_u = offload.u2c_cost(bits, report.rate_uc[m, n],
                                                abs(ch.h_uc[m, n]) ** 2, cfg.radio.ue_power)
                    t_c, e_c = offload.cuav_compute_cost(
                        split.local_frac, bits, cfg.ue_task.cycles_per_bit, f_mn,
                        e.switch_capacitance)
                    t_relay, e_relay = 0.0, 0.0
                    for p, frac in enumerate(split.relay_fracs):
                        if frac == 0.0:
                            continue
                        t_ci, e_ci = offload.c2i_cost(frac, bits, report.rate_bs[n, p],
                                                      raw_casc_sq[n, p],
                                                      cfg.radio.cuav_tx_power)
                        t_bs = offload.bs_compute_delay(frac, bits,
                                                        cfg.ue_task.cycles_per_bit,
                                                        e.bs_cpu_hz, self.N)
                        t_relay = max(t_relay, t_ci + t_bs)
                        e_relay += e_ci
                except UnreachableLinkError:
                    blocked.add(m)
                    continue
                dt = t_u + max(t_c, t_relay)
                if dt <= 0.0:
                    blocked.add(m)
                    continue
                if dt <= budget:
                    self._charge(n, e_u)
                    self._charge(n, e_c)
                    if e_relay:
                        self._charge(n, e_relay)
                    budget -= dt
                    self.queues[m].pop(0)
                    collected.add(m)
                else:
                    frac_served = budget / dt
                    self._charge(n, frac_served * e_u)
                    self._charge(n, frac_served * e_c)
                    if e_relay:
                        self._charge(n, frac_served * e_relay)
                    self.queues[m][0][1] = (1.0 - frac_served) * bits
                    budget = 0.0
        return collected

    # ------------------------------------------------------------------
    def _constraint_flags(self, remaining: np.ndarray, ch: ChannelRealization) -> dict:
        cfg = self.config
        flags = {
            "c1": [remaining[n] < 0.0 for n in range(self.N)],
            "c2": [remaining[self.N + p] < 0.0 for p in range(self.P)],
            "c3": [radio.eve_rate_cap_violated(ch, n, self.reflection, cfg.radio,
                                               cfg.radio.eve_rate_cap)
                   for n in range(self.N)],
            "c4": set(),
            "c5": set(),
        }
        if self.t >= cfg.grace_slots:
            radii = cfg.coverage_radii()
            for base, pos, rad in ((0, self.cuav_pos, radii[:self.N]),
                                   (self.N, self.iuav_pos, radii[self.N:])):
                for (i, j) in mobility.check_separation(pos, cfg.energy.min_separation):
                    flags["c4"].update({base + i, base + j})
                for (i, j) in mobility.check_coverage_overlap(pos, rad):
                    flags["c5"].update({base + i, base + j})
        return flags

    def _intrinsic(self, u: int, flags: dict) -> float:
        cfg = self.config
        penalty = 0.0
        if u < self.N:
            if flags["c1"][u]:
                penalty += cfg.eta1
            if flags["c3"][u]:
                penalty += cfg.eta3
        else:
            if flags["c2"][u - self.N]:
                penalty += cfg.eta2
        if u in flags["c4"]:
            penalty += cfg.eta4
        if u in flags["c5"]:
            penalty += cfg.eta5
        return -penalty
