"""Scenario configuration, validation, and initial world construction.

A scenario is a single declarative document: geometry, radio parameters,
task statistics, UAV energy model, and learning hyperparameters. World
construction is a pure function of (config, seed).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .rng import substream

CSI_CLASSES = ("CE", "JB", "JI", "IE")


@dataclass(frozen=True)
class TaskSpec:
    """Per-UE task template: size, compute density, arrival probability."""

    data_bits: float = 1.0e6
    cycles_per_bit: float = 100.0
    arrival_prob: float = 0.3  # per-slot Bernoulli generation probability


@dataclass(frozen=True)
class RadioParams:
    uplink_bandwidth_hz: float = 1.0e6
    bs_bandwidth_hz: float = 2.0e6
    ue_power: float = 0.1
    cuav_tx_power: float = 0.5
    jammer_power: float = 0.1
    noise_cuav: float = 1.0e-3
    noise_bs: float = 1.0e-10
    noise_eve: float = 1.0e-10
    pathloss_const: float = 1.0e-3  # A
    pathloss_exp: float = 2.0
    nakagami_m_ground: float = 1.0  # UE-UAV and links touching E/J
    nakagami_m_air: float = 3.0  # UAV-UAV / UAV-BS near-LoS links
    # bounded-CSI error radii per illegitimate link class
    csi_error_bound: dict = field(
        default_factory=lambda: {"CE": 0.05, "JB": 0.05, "JI": 0.05, "IE": 0.05}
    )
    eve_region_radius: float = 50.0
    jammer_region_radius: float = 50.0
    eve_rate_cap: float = 10.0  # R_th
    eve_rate_bandwidth: bool = False  # scale eavesdropper rate by B_BS/N
    worst_case_eve: bool = False  # evaluate R_E at the CSI-ball worst case


@dataclass(frozen=True)
class EnergyParams:
    battery_j: float = 2.0e4  # E_max
    cruise_speed: float = 20.0  # v_move
    c1: float = 79.86
    c2: float = 88.63
    c3: float = 0.037
    rotor_tip_speed: float = 120.0  # v_tip
    induced_velocity: float = 4.03  # v_0
    switch_capacitance: float = 1.0e-28  # kappa
    cuav_cpu_hz: float = 1.0e9  # F_u
    bs_cpu_hz: float = 1.0e10  # F_BS
    min_separation: float = 10.0  # D_min
    coverage_radius: float = 150.0  # C_max, same for every UAV unless overridden
    coverage_radius_per_uav: tuple = ()  # optional, length N+P


@dataclass(frozen=True)
class LearnParams:
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 2
    context_len: int = 8
    ff_width: int = 128
    learning_rate: float = 0.005
    discount: float = 0.95
    rho_bar: float = 1.0
    c_bar: float = 1.0
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    batch_size: int = 256
    queue_capacity: int = 200_000
    broadcast_interval: int = 100
    staleness_cap: int = 10
    episodes: int = 1000
    per_uav_params: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    area_side_m: float = 1500.0
    num_ues: int = 10
    num_cuavs: int = 3
    num_iuavs: int = 6
    irs_elements: int = 4
    slot_seconds: float = 1.0
    horizon_slots: int = 100
    ue_task: TaskSpec = field(default_factory=TaskSpec)
    radio: RadioParams = field(default_factory=RadioParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    learn: LearnParams = field(default_factory=LearnParams)
    aoi_threshold: float = 100.0  # slots
    aoi_exp_cap: float = 50.0
    chi_normalize: bool = False  # optionally divide chi by the horizon X
    ue_weights: tuple = ()  # empty -> all ones
    obstacles: tuple = ()  # ((x, y, radius), ...)
    seed: int = 0
    cuav_altitude: float = 100.0
    iuav_altitude: float = 200.0
    sensing_range: float = 400.0
    max_step_m: float = 20.0  # l_max
    n_angle_bins: int = 8
    n_dist_bins: int = 4
    n_phase_levels: int = 8
    split_grid: int = 4  # G
    eve_center: tuple = ()  # empty -> drawn from the adversary stream
    jam_center: tuple = ()
    eta1: float = 1.0
    eta2: float = 1.0
    eta3: float = 1.0
    eta4: float = 1.0
    eta5: float = 1.0
    grace_slots: int = 5  # C4/C5 penalties inactive this long after reset
    reward_clip: float = 1.0e6

    @property
    def ue_weight_array(self) -> np.ndarray:
        if self.ue_weights:
            return np.asarray(self.ue_weights, dtype=float)
        return np.ones(self.num_ues)

    def coverage_radii(self) -> np.ndarray:
        n_uavs = self.num_cuavs + self.num_iuavs
        if self.energy.coverage_radius_per_uav:
            return np.asarray(self.energy.coverage_radius_per_uav, dtype=float)
        return np.full(n_uavs, self.energy.coverage_radius)


# ---------------------------------------------------------------------------
# JSON round trip


def _from_dict(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(f"unknown key(s) {sorted(unknown)} at {path or 'top level'}")
    kwargs = {}
    for key, value in data.items():
        if key == "ue_task":
            kwargs[key] = _from_dict(TaskSpec, value, f"{path}.{key}")
        elif key == "radio":
            kwargs[key] = _from_dict(RadioParams, value, f"{path}.{key}")
        elif key == "energy":
            kwargs[key] = _from_dict(EnergyParams, value, f"{path}.{key}")
        elif key == "learn":
            kwargs[key] = _from_dict(LearnParams, value, f"{path}.{key}")
        elif isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    return _from_dict(ScenarioConfig, data, "")


def config_to_dict(config: ScenarioConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(config)))


def load_config(path: str, seed_override: Optional[int] = None) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    cfg = config_from_dict(data)
    if seed_override is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed_override))
    violations = validate(cfg)
    if violations:
        raise ConfigurationError("; ".join(violations))
    return cfg


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Validation


def validate(config: ScenarioConfig) -> list[str]:
    """Return every invariant violation as 'field: rule'; empty list iff valid."""
    v: list[str] = []
    c = config
    if c.num_ues < 1:
        v.append("num_ues must be >= 1")
    if c.num_cuavs < 1:
        v.append("num_cuavs must be >= 1")
    if c.num_iuavs < 1:
        v.append("num_iuavs must be >= 1")
    if c.irs_elements < 1:
        v.append("irs_elements must be >= 1")
    if c.horizon_slots < 1:
        v.append("horizon_slots must be >= 1")
    if c.slot_seconds <= 0:
        v.append("slot_length must be > 0")
    if c.area_side_m <= 0:
        v.append("area_side_m must be > 0")
    if c.ue_weights:
        if len(c.ue_weights) != c.num_ues:
            v.append("ue_weights length must equal num_ues")
        elif any(w < 0 for w in c.ue_weights):
            v.append("ue_weights must be nonnegative")
        elif all(w == 0 for w in c.ue_weights):
            v.append("ue_weights must not all be zero")
    t = c.ue_task
    if t.data_bits <= 0:
        v.append("ue_task.data_bits must be > 0")
    if t.cycles_per_bit <= 0:
        v.append("ue_task.cycles_per_bit must be > 0")
    if not 0.0 <= t.arrival_prob <= 1.0:
        v.append("ue_task.arrival_prob must be in [0, 1]")
    r = c.radio
    for name in ("uplink_bandwidth_hz", "bs_bandwidth_hz", "ue_power", "cuav_tx_power",
                 "noise_cuav", "noise_bs", "noise_eve", "pathloss_const"):
        if getattr(r, name) <= 0:
            v.append(f"radio.{name} must be > 0")
    if r.jammer_power < 0:
        v.append("radio.jammer_power must be >= 0")
    if r.pathloss_exp < 2.0:
        v.append("path-loss exponent >= 2")
    if r.nakagami_m_ground < 0.5 or r.nakagami_m_air < 0.5:
        v.append("radio.nakagami_m must be >= 0.5")
    for cls_name in CSI_CLASSES:
        if cls_name not in r.csi_error_bound:
            v.append(f"radio.csi_error_bound missing class {cls_name}")
        elif r.csi_error_bound[cls_name] < 0:
            v.append(f"radio.csi_error_bound[{cls_name}] must be >= 0")
    e = c.energy
    if e.battery_j <= 0:
        v.append("energy.battery_j must be > 0")
    if not e.rotor_tip_speed > e.cruise_speed > 0:
        v.append("energy.rotor_tip_speed > cruise_speed > 0 required")
    if e.switch_capacitance <= 0:
        v.append("energy.switch_capacitance must be > 0")
    if e.cuav_cpu_hz <= 0 or e.bs_cpu_hz <= 0:
        v.append("energy CPU rates must be > 0")
    n_uavs = c.num_cuavs + c.num_iuavs
    if e.coverage_radius_per_uav and len(e.coverage_radius_per_uav) != n_uavs:
        v.append("energy.coverage_radius_per_uav length must equal num_cuavs + num_iuavs")
    for i, obs in enumerate(c.obstacles):
        x, y, rad = obs
        if rad <= 0:
            v.append(f"obstacles[{i}] radius must be > 0")
        if not (rad <= x <= c.area_side_m - rad and rad <= y <= c.area_side_m - rad):
            v.append(f"obstacles[{i}] must lie within the area")
    if c.max_step_m / e.cruise_speed > c.slot_seconds:
        v.append("max_step_m / cruise_speed must not exceed slot_seconds")
    if c.aoi_threshold <= 0:
        v.append("aoi_threshold must be > 0")
    # propulsion radicand must stay nonnegative on [0, cruise_speed]
    v0 = e.induced_velocity
    for vv in np.linspace(0.0, e.cruise_speed, 32):
        if 1.0 + vv**4 / (4 * v0**4) - vv**2 / (2 * v0**2) < 0:
            v.append("energy propulsion radicand negative within speed range")
            break
    return v


# ---------------------------------------------------------------------------
# World construction


@dataclass
class WorldState:
    """Entity state at a timeslot boundary. Built immutable; env copies."""

    ue_pos: np.ndarray  # (M, 2)
    cuav_pos: np.ndarray  # (N, 3)
    iuav_pos: np.ndarray  # (P, 3)
    bs_pos: np.ndarray  # (3,)
    eve_centroid: np.ndarray  # (2,) estimated region center
    jam_centroid: np.ndarray
    eve_pos: np.ndarray  # (3,) true position, fixed for the episode
    jam_pos: np.ndarray
    uav_energy: np.ndarray  # (N + P,) remaining joules
    queues: list  # per-UE list of [gen_time_slots, remaining_bits]


def _inside_obstacle(point: np.ndarray, obstacles: Sequence) -> bool:
    for (ox, oy, rad) in obstacles:
        if (point[0] - ox) ** 2 + (point[1] - oy) ** 2 < rad * rad:
            return True
    return False


def build_world(config: ScenarioConfig) -> WorldState:
    violations = validate(config)
    if violations:
        raise ConfigurationError("; ".join(violations))
    side = config.area_side_m
    rng = substream(config.seed, "world")

    # UEs: truncated normal about the area center, resampled clear of obstacles
    center = side / 2.0
    std = side / 4.0
    ue_pos = np.empty((config.num_ues, 2))
    for m in range(config.num_ues):
        while True:
            cand = rng.normal(center, std, size=2)
            if 0.0 <= cand[0] <= side and 0.0 <= cand[1] <= side and not _inside_obstacle(cand, config.obstacles):
                ue_pos[m] = cand
                break

    adv = substream(config.seed, "adversary")
    eve_centroid = np.array(config.eve_center, dtype=float) if config.eve_center else adv.uniform(0, side, 2)
    jam_centroid = np.array(config.jam_center, dtype=float) if config.jam_center else adv.uniform(0, side, 2)

    def sample_in_disc(centroid: np.ndarray, radius: float) -> np.ndarray:
        ang = adv.uniform(0.0, 2 * math.pi)
        rad = radius * math.sqrt(adv.uniform())
        return np.array([centroid[0] + rad * math.cos(ang), centroid[1] + rad * math.sin(ang), 0.0])

    eve_pos = sample_in_disc(eve_centroid, config.radio.eve_region_radius)
    jam_pos = sample_in_disc(jam_centroid, config.radio.jammer_region_radius)

    # launch positions: evenly spaced on a ring about the area center so a
    # multi-UAV fleet starts spread out (coincident starts would tie-break
    # every UE association to the first UAV and idle the rest)
    n_uavs = config.num_cuavs + config.num_iuavs
    ring = side / 4.0
    launch = np.empty((n_uavs, 2))
    for u in range(n_uavs):
        ang = 2.0 * math.pi * u / n_uavs
        cand = np.array([center + ring * math.cos(ang),
                         center + ring * math.sin(ang)])
        while _inside_obstacle(cand, config.obstacles):
            cand = center + (cand - center) * 1.1
        launch[u] = np.clip(cand, 0.0, side)
    cuav_pos = np.zeros((config.num_cuavs, 3))
    cuav_pos[:, :2] = launch[:config.num_cuavs]
    cuav_pos[:, 2] = config.cuav_altitude
    iuav_pos = np.zeros((config.num_iuavs, 3))
    iuav_pos[:, :2] = launch[config.num_cuavs:]
    iuav_pos[:, 2] = config.iuav_altitude

    return WorldState(
        ue_pos=ue_pos,
        cuav_pos=cuav_pos,
        iuav_pos=iuav_pos,
        bs_pos=np.zeros(3),
        eve_centroid=eve_centroid,
        jam_centroid=jam_centroid,
        eve_pos=eve_pos,
        jam_pos=jam_pos,
        uav_energy=np.full(config.num_cuavs + config.num_iuavs, config.energy.battery_j),
        queues=[[] for _ in range(config.num_ues)],
    )
