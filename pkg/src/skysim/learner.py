"""V-trace targets, decentralized losses, and the actor/learner protocol.

Actors fill episodic buffers with (window, action, behavior log-prob,
reward) tuples and ship them to the learner; the learner computes V-trace
corrected targets, takes one optimizer step over the weighted loss sum, and
broadcasts immutable parameter snapshots on a fixed cadence. A single-thread
sync mode keeps the whole loop deterministic for tests.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import gtr, offload
from .env import ActionBundle, UavMecEnv
from .errors import ContractError
from .rng import substream
from .scenario import LearnParams, ScenarioConfig

KINDS = ("cuav", "iuav")


def head_sizes_for_kind(kind: str, config: ScenarioConfig) -> tuple:
    base = (config.n_angle_bins, config.n_dist_bins)
    if kind == "cuav":
        n_split = offload.split_alphabet_size(config.num_iuavs, config.split_grid)
        return base + (n_split,) * config.num_ues
    return base + (config.n_phase_levels,) * config.irs_elements


def make_param_sets(config: ScenarioConfig, obs_dim: int,
                    rng: np.random.Generator) -> dict:
    l = config.learn
    sets = {}
    for kind in KINDS:
        gcfg = gtr.GtrConfig(obs_dim=obs_dim, head_sizes=head_sizes_for_kind(kind, config),
                             d_model=l.d_model, n_heads=l.n_heads, n_blocks=l.n_blocks,
                             context_len=l.context_len, ff_width=l.ff_width)
        sets[kind] = gtr.init_params(gcfg, rng)
    return sets


# ---------------------------------------------------------------------------
# V-trace


@dataclass
class VTraceResult:
    targets: np.ndarray  # (T,)
    rhos: np.ndarray
    cs: np.ndarray
    advantages: np.ndarray


def vtrace(values: np.ndarray, rewards: np.ndarray, behavior_logp: np.ndarray,
           target_logp: np.ndarray, gamma: float, rho_bar: float = 1.0,
           c_bar: float = 1.0, bootstrap: float = 0.0) -> VTraceResult:
    """Truncated-importance-sampling value targets over one episode."""
    values = np.asarray(values, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    behavior_logp = np.asarray(behavior_logp, dtype=float)
    target_logp = np.asarray(target_logp, dtype=float)
    for arr in (values, rewards, behavior_logp, target_logp):
        if np.any(np.isnan(arr)):
            raise ContractError("NaN input to vtrace")
    T = len(rewards)
    if not (len(values) == len(behavior_logp) == len(target_logp) == T):
        raise ContractError("vtrace sequences must be aligned")
    ratios = np.exp(target_logp - behavior_logp)
    rhos = np.minimum(ratios, rho_bar)
    cs = np.minimum(ratios, c_bar)
    v_next = np.append(values[1:], bootstrap)
    td = rewards + gamma * v_next - values
    acc = 0.0
    targets = np.empty(T)
    for t in reversed(range(T)):
        acc = rhos[t] * td[t] + gamma * cs[t] * acc
        targets[t] = values[t] + acc
    targets_next = np.append(targets[1:], bootstrap)
    advantages = rewards + gamma * targets_next - values
    return VTraceResult(targets=targets, rhos=rhos, cs=cs, advantages=advantages)


# ---------------------------------------------------------------------------
# experience


@dataclass
class UavTrace:
    windows: list = field(default_factory=list)  # (K, obs_dim) each
    masks: list = field(default_factory=list)  # (K,) each
    actions: list = field(default_factory=list)  # per-head index array
    behavior_logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)


@dataclass
class EpisodicBuffer:
    version: int
    traces: list  # one UavTrace per UAV

    def __len__(self) -> int:
        return len(self.traces[0].rewards) if self.traces else 0


# ---------------------------------------------------------------------------
# losses


@dataclass
class LossReport:
    policy_loss: float
    value_loss: float
    entropy: float


def episode_loss_grads(params: gtr.ParameterSet, trace: UavTrace, hyper: LearnParams):
    """Loss scalars and exact parameter gradients for one UAV episode."""
    windows = np.stack(trace.windows)
    masks = np.stack(trace.masks)
    actions = np.stack(trace.actions)  # (T, n_heads)
    rewards = np.asarray(trace.rewards, dtype=float)
    behavior = np.asarray(trace.behavior_logp, dtype=float)
    T = len(rewards)

    logits, values, aux = gtr.forward(params, windows, masks, need_cache=True)
    target_logp = np.zeros(T)
    for h, head_logits in enumerate(logits):
        lsm = gtr.log_softmax(head_logits)
        target_logp += lsm[np.arange(T), actions[:, h]]

    vt = vtrace(values, rewards, behavior, target_logp, hyper.discount,
                hyper.rho_bar, hyper.c_bar)
    adv = vt.advantages  # constant w.r.t. theta
    coef = vt.rhos * adv / T

    policy_loss = float(np.mean(-vt.rhos * target_logp * adv))
    value_loss = float(np.mean((vt.targets - values) ** 2))
    ent_total = np.zeros(T)
    dlogits = []
    for h, head_logits in enumerate(logits):
        p = gtr.softmax(head_logits)
        lsm = gtr.log_softmax(head_logits)
        h_ent = -np.sum(p * lsm, axis=-1, keepdims=True)
        ent_total += h_ent[:, 0]
        onehot = np.zeros_like(p)
        onehot[np.arange(T), actions[:, h]] = 1.0
        d_policy = coef[:, None] * (p - onehot)
        # entropy bonus: minimized term is -beta*mean(H); dH/dz = -p*(log p + H)
        d_entropy = (hyper.entropy_coef / T) * p * (lsm + h_ent)
        dlogits.append(d_policy + d_entropy)
    dvalues = hyper.value_coef * (-2.0 / T) * (vt.targets - values)

    grads = gtr.backward(params, aux["cache"], dlogits, dvalues)
    report = LossReport(policy_loss=policy_loss, value_loss=value_loss,
                        entropy=float(np.mean(ent_total)))
    return report, grads


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, tensors: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / corr1
            vhat = self.v[name] / corr2
            tensors[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# learner


class Learner:
    """Central updater: aggregates buffers, steps Adam, broadcasts snapshots."""

    def __init__(self, param_sets: dict, hyper: LearnParams, kind_of_uav: Sequence[str]):
        self.params = param_sets  # kind -> ParameterSet
        self.hyper = hyper
        self.kind_of_uav = list(kind_of_uav)
        self.optim = {kind: Adam(hyper.learning_rate) for kind in param_sets}
        self.version = 0
        self.buffers_dropped = 0

    def snapshot(self) -> dict:
        snap = {}
        for kind, ps in self.params.items():
            c = ps.copy()
            c.version = self.version
            snap[kind] = c
        return snap

    def step(self, buffers: Sequence[EpisodicBuffer]) -> dict:
        fresh = []
        for buf in buffers:
            if self.version - buf.version > self.hyper.staleness_cap:
                self.buffers_dropped += 1
            else:
                fresh.append(buf)
        if not fresh:
            self.version += 1
            return {"version": self.version, "policy_loss": float("nan"),
                    "value_loss": float("nan"), "entropy": float("nan"),
                    "dropped": self.buffers_dropped, "broadcast": self._broadcast_due()}

        totals = {kind: None for kind in self.params}
        counts = {kind: 0 for kind in self.params}
        pol = val = ent = 0.0
        n_traces = 0
        for buf in fresh:
            for u, trace in enumerate(buf.traces):
                kind = self.kind_of_uav[u]
                report, grads = episode_loss_grads(self.params[kind], trace, self.hyper)
                pol += report.policy_loss
                val += report.value_loss
                ent += report.entropy
                n_traces += 1
                counts[kind] += 1
                if totals[kind] is None:
                    totals[kind] = grads
                else:
                    for name in grads:
                        totals[kind][name] += grads[name]
        for kind, grads in totals.items():
            if grads is None:
                continue
            for name in grads:
                grads[name] /= counts[kind]
            self.optim[kind].step(self.params[kind].tensors, grads)
            self.params[kind].version = self.version + 1
        self.version += 1
        return {"version": self.version, "policy_loss": pol / n_traces,
                "value_loss": val / n_traces, "entropy": ent / n_traces,
                "dropped": self.buffers_dropped, "broadcast": self._broadcast_due()}

    def _broadcast_due(self) -> bool:
        return self.version % self.hyper.broadcast_interval == 0


# ---------------------------------------------------------------------------
# actor


class Actor:
    """Runs episodes under a behavior snapshot and fills episodic buffers."""

    def __init__(self, env: UavMecEnv, params: dict, rng: np.random.Generator):
        self.env = env
        self.params = params  # kind -> ParameterSet (behavior snapshot)
        self.rng = rng
        self.kind_of_uav = ["cuav"] * env.N + ["iuav"] * env.P
        self.K = params["cuav"].config.context_len

    def adopt(self, params: dict) -> None:
        self.params = params

    def _window(self, history: list, obs_dim: int):
        K = self.K
        win = np.zeros((K, obs_dim))
        mask = np.zeros(K)
        tail = history[-K:]
        win[K - len(tail):] = tail
        mask[K - len(tail):] = 1.0
        return win, mask

    def actions_from_obs(self, histories: list) -> tuple[ActionBundle, list, list]:
        """Sample every UAV's action; returns bundle, per-UAV indices, log-probs."""
        env = self.env
        n_uavs = env.n_uavs
        all_indices, all_logp, wins, msks = [], [], [], []
        for u in range(n_uavs):
            win, mask = self._window(histories[u], env.obs_dim)
            wins.append(win)
            msks.append(mask)
            params = self.params[self.kind_of_uav[u]]
            logits, _, _ = gtr.forward(params, win[None], mask[None])
            indices, logp = gtr.sample_action([l[0] for l in logits], self.rng)
            all_indices.append(indices)
            all_logp.append(logp)
        move = np.array([[idx[0], idx[1]] for idx in all_indices], dtype=int)
        split = np.array([all_indices[n][2:] for n in range(env.N)], dtype=int)
        if split.size == 0:
            split = np.zeros((env.N, env.M), dtype=int)
        phase = np.array([all_indices[env.N + p][2:] for p in range(env.P)], dtype=int)
        bundle = ActionBundle(move=move, split=split, phase=phase)
        return bundle, list(zip(all_indices, all_logp)), list(zip(wins, msks))

    def run_episode(self) -> tuple[EpisodicBuffer, float]:
        env = self.env
        obs = env.reset(seed=int(self.rng.integers(0, 2**31 - 1)))
        histories = [[obs[u]] for u in range(env.n_uavs)]
        traces = [UavTrace() for _ in range(env.n_uavs)]
        done = False
        while not done:
            bundle, sampled, windows = self.actions_from_obs(histories)
            outcome = env.step(bundle)
            for u in range(env.n_uavs):
                indices, logp = sampled[u]
                win, mask = windows[u]
                tr = traces[u]
                tr.windows.append(win)
                tr.masks.append(mask)
                tr.actions.append(indices)
                tr.behavior_logp.append(logp)
                tr.rewards.append(float(outcome.rewards[u]))
                histories[u].append(outcome.observations[u])
            done = outcome.done
        buf = EpisodicBuffer(version=self.params["cuav"].version, traces=traces)
        mean_return = float(np.mean([sum(t.rewards) for t in traces]))
        return buf, mean_return


# ---------------------------------------------------------------------------
# training loops


def train_sync(config: ScenarioConfig, episodes: int, seed: int,
               on_update: Optional[Callable[[dict], None]] = None,
               ckpt_cb: Optional[Callable[[dict, int], None]] = None,
               ckpt_every: int = 0) -> dict:
    """Deterministic single-thread loop: one episode, one learner step."""
    env = UavMecEnv(config, seed=seed)
    init_rng = substream(seed, "init")
    params = make_param_sets(config, env.obs_dim, init_rng)
    learner = Learner(params, config.learn, ["cuav"] * env.N + ["iuav"] * env.P)
    actor = Actor(env, learner.snapshot(), substream(seed, "policy"))
    for ep in range(episodes):
        buf, mean_return = actor.run_episode()
        stats = learner.step([buf])
        stats["mean_return"] = mean_return
        stats["episode"] = ep
        if stats["broadcast"]:
            actor.adopt(learner.snapshot())
        if on_update:
            on_update(stats)
        if ckpt_cb and ckpt_every and (ep + 1) % ckpt_every == 0:
            ckpt_cb(learner.snapshot(), learner.version)
    return learner.snapshot()


def train_async(config: ScenarioConfig, episodes: int, seed: int, workers: int,
                on_update: Optional[Callable[[dict], None]] = None,
                ckpt_cb: Optional[Callable[[dict, int], None]] = None,
                ckpt_every: int = 0) -> dict:
    """Threaded actor/learner loop: message passing only, no shared state."""
    env0 = UavMecEnv(config, seed=seed)
    init_rng = substream(seed, "init")
    params = make_param_sets(config, env0.obs_dim, init_rng)
    learner = Learner(params, config.learn, ["cuav"] * env0.N + ["iuav"] * env0.P)
    buffer_queue: queue.Queue = queue.Queue(maxsize=max(2 * workers, 4))
    mailboxes = [{"params": learner.snapshot()} for _ in range(workers)]
    stop = threading.Event()

    def worker(idx: int):
        env = UavMecEnv(config, seed=seed + 1000 * (idx + 1))
        actor = Actor(env, mailboxes[idx]["params"], substream(seed, f"policy{idx}"))
        while not stop.is_set():
            actor.adopt(mailboxes[idx]["params"])
            buf, mean_return = actor.run_episode()
            try:
                buffer_queue.put((buf, mean_return), timeout=1.0)
            except queue.Full:
                continue

    threads = [threading.Thread(target=worker, args=(i,), daemon=True)
               for i in range(workers)]
    for th in threads:
        th.start()
    processed = 0
    try:
        while processed < episodes:
            buf, mean_return = buffer_queue.get()
            stats = learner.step([buf])
            stats["mean_return"] = mean_return
            stats["episode"] = processed
            if stats["broadcast"]:
                snap = learner.snapshot()
                for mb in mailboxes:
                    mb["params"] = snap
            if on_update:
                on_update(stats)
            processed += 1
            if ckpt_cb and ckpt_every and processed % ckpt_every == 0:
                ckpt_cb(learner.snapshot(), learner.version)
    finally:
        stop.set()
    for th in threads:
        th.join(timeout=5.0)
    return learner.snapshot()
