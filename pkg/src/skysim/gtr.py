"""Gated-transformer policy/value network over observation histories.

Pure-numpy forward and exact reverse-mode backward. The trunk (embedding
MLP, positional embeddings, gated attention blocks) is shared between the
per-head categorical policy and the scalar value head.

Each residual connection carries a sigmoid gate conditioned on the residual
stream: out = x + sigmoid(x @ W_g + b_g) * sublayer. With W_g = 0 and
b_g = +40 the gate saturates to exactly 1.0 in float64, recovering the
ungated residual block; the initial bias of -3 keeps early outputs close to
the identity path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError

LN_EPS = 1e-5
GATE_BIAS_INIT = -3.0
GATE_PASS_THROUGH_BIAS = 40.0


@dataclass(frozen=True)
class GtrConfig:
    obs_dim: int
    head_sizes: tuple  # categorical alphabet size per action component
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 2
    context_len: int = 8
    ff_width: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ContractError("d_model must be divisible by n_heads")


@dataclass
class ParameterSet:
    """Immutable-by-convention snapshot of all named tensors."""

    config: GtrConfig
    tensors: dict
    version: int = 0

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.config, {k: v.copy() for k, v in self.tensors.items()},
                            self.version)


def _orthogonal(rng: np.random.Generator, shape) -> np.ndarray:
    a = rng.normal(size=shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return np.ascontiguousarray(q[:shape[0], :shape[1]])


def parameter_names(cfg: GtrConfig) -> list[str]:
    names = ["embed.W1", "embed.b1", "embed.W2", "embed.b2", "embed.W3", "embed.b3", "pos"]
    for i in range(cfg.n_blocks):
        names += [f"block{i}.{n}" for n in (
            "ln1.g", "ln1.b", "attn.Wq", "attn.bq", "attn.Wk", "attn.bk",
            "attn.Wv", "attn.bv", "attn.Wo", "attn.bo", "gate1.W", "gate1.b",
            "ln2.g", "ln2.b", "ff.W1", "ff.b1", "ff.W2", "ff.b2",
            "gate2.W", "gate2.b")]
    names += ["lnf.g", "lnf.b"]
    for h in range(len(cfg.head_sizes)):
        names += [f"head{h}.W", f"head{h}.b"]
    names += ["value.W", "value.b"]
    return names


def init_params(cfg: GtrConfig, rng: np.random.Generator) -> ParameterSet:
    d, F, K, O = cfg.d_model, cfg.ff_width, cfg.context_len, cfg.obs_dim
    t: dict[str, np.ndarray] = {}
    t["embed.W1"] = _orthogonal(rng, (O, d))
    t["embed.b1"] = np.zeros(d)
    t["embed.W2"] = _orthogonal(rng, (d, d))
    t["embed.b2"] = np.zeros(d)
    t["embed.W3"] = _orthogonal(rng, (d, d))
    t["embed.b3"] = np.zeros(d)
    t["pos"] = 0.02 * rng.normal(size=(K, d))
    for i in range(cfg.n_blocks):
        p = f"block{i}."
        t[p + "ln1.g"] = np.ones(d)
        t[p + "ln1.b"] = np.zeros(d)
        for w in ("Wq", "Wk", "Wv", "Wo"):
            t[p + f"attn.{w}"] = _orthogonal(rng, (d, d))
        for b in ("bq", "bk", "bv", "bo"):
            t[p + f"attn.{b}"] = np.zeros(d)
        t[p + "gate1.W"] = np.zeros((d, d))
        t[p + "gate1.b"] = np.full(d, GATE_BIAS_INIT)
        t[p + "ln2.g"] = np.ones(d)
        t[p + "ln2.b"] = np.zeros(d)
        t[p + "ff.W1"] = _orthogonal(rng, (d, F))
        t[p + "ff.b1"] = np.zeros(F)
        t[p + "ff.W2"] = _orthogonal(rng, (F, d))
        t[p + "ff.b2"] = np.zeros(d)
        t[p + "gate2.W"] = np.zeros((d, d))
        t[p + "gate2.b"] = np.full(d, GATE_BIAS_INIT)
    t["lnf.g"] = np.ones(d)
    t["lnf.b"] = np.zeros(d)
    for h, size in enumerate(cfg.head_sizes):
        t[f"head{h}.W"] = np.zeros((d, size))
        t[f"head{h}.b"] = np.zeros(size)
    t["value.W"] = np.zeros((d, 1))
    t["value.b"] = np.zeros(1)
    return ParameterSet(config=cfg, tensors=t, version=0)


def set_gates_pass_through(params: ParameterSet) -> ParameterSet:
    """Copy with every gate saturated open (recovers the ungated block)."""
    out = params.copy()
    for name in out.tensors:
        if name.endswith("gate1.W") or name.endswith("gate2.W"):
            out.tensors[name][:] = 0.0
        if name.endswith("gate1.b") or name.endswith("gate2.b"):
            out.tensors[name][:] = GATE_PASS_THROUGH_BIAS
    return out


# ---------------------------------------------------------------------------
# layer primitives


def _ln_forward(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _ln_backward(dy, cache):
    xhat, inv, g = cache
    dg = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


# ---------------------------------------------------------------------------
# forward / backward


def forward(params: ParameterSet, windows: np.ndarray, masks: np.ndarray,
            need_cache: bool = False):
    """Run the network on a batch of history windows.

    windows: (B, K, obs_dim); masks: (B, K) with 1 marking a real
    observation. Returns (logits_list, values, aux) where logits_list[h] is
    (B, head_sizes[h]), values is (B,), and aux carries the trunk output
    (B, K, d) plus the backward cache when requested.
    """
    cfg = params.config
    t = params.tensors
    windows = np.asarray(windows, dtype=float)
    masks = np.asarray(masks, dtype=float)
    if windows.ndim == 2:
        windows = windows[None]
        masks = masks[None]
    B, K, O = windows.shape
    if K != cfg.context_len or O != cfg.obs_dim:
        raise ContractError(f"window shape {(K, O)} does not match config "
                            f"{(cfg.context_len, cfg.obs_dim)}")
    H, d = cfg.n_heads, cfg.d_model
    dh = d // H
    cache: dict = {"masks": masks}

    x_in = windows * masks[:, :, None]
    h1_pre = x_in @ t["embed.W1"] + t["embed.b1"]
    h1 = np.maximum(h1_pre, 0.0)
    h2_pre = h1 @ t["embed.W2"] + t["embed.b2"]
    h2 = np.maximum(h2_pre, 0.0)
    x = h2 @ t["embed.W3"] + t["embed.b3"] + t["pos"]
    cache.update(x_in=x_in, h1_pre=h1_pre, h1=h1, h2_pre=h2_pre, h2=h2)

    # attention mask: causal, keyed on validity, self always allowed
    idx = np.arange(K)
    causal = idx[None, :] <= idx[:, None]  # (K, K) query i can see key j
    allowed = causal[None] & (masks[:, None, :].astype(bool) | np.eye(K, dtype=bool)[None])
    cache["allowed"] = allowed

    blocks = []
    for i in range(cfg.n_blocks):
        p = f"block{i}."
        bc: dict = {"x": x}
        a, bc["ln1"] = _ln_forward(x, t[p + "ln1.g"], t[p + "ln1.b"])
        bc["a"] = a
        q = (a @ t[p + "attn.Wq"] + t[p + "attn.bq"]).reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        k = (a @ t[p + "attn.Wk"] + t[p + "attn.bk"]).reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        v = (a @ t[p + "attn.Wv"] + t[p + "attn.bv"]).reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
        scores = np.where(allowed[:, None, :, :], scores, -1e30)
        probs = softmax(scores)
        ctx = probs @ v  # (B, H, K, dh)
        concat = ctx.transpose(0, 2, 1, 3).reshape(B, K, d)
        attn_out = concat @ t[p + "attn.Wo"] + t[p + "attn.bo"]
        bc.update(q=q, k=k, v=v, probs=probs, concat=concat)

        g1_pre = x @ t[p + "gate1.W"] + t[p + "gate1.b"]
        g1 = _sigmoid(g1_pre)
        x2 = x + g1 * attn_out
        bc.update(g1=g1, attn_out=attn_out, x2=x2)

        b_ln, bc["ln2"] = _ln_forward(x2, t[p + "ln2.g"], t[p + "ln2.b"])
        f1_pre = b_ln @ t[p + "ff.W1"] + t[p + "ff.b1"]
        f1 = np.maximum(f1_pre, 0.0)
        ff_out = f1 @ t[p + "ff.W2"] + t[p + "ff.b2"]
        g2_pre = x2 @ t[p + "gate2.W"] + t[p + "gate2.b"]
        g2 = _sigmoid(g2_pre)
        x = x2 + g2 * ff_out
        bc.update(b_ln=b_ln, f1_pre=f1_pre, f1=f1, ff_out=ff_out, g2=g2)
        blocks.append(bc)

    trunk, lnf_cache = _ln_forward(x, t["lnf.g"], t["lnf.b"])
    cache.update(blocks=blocks, lnf=lnf_cache, x_final=x)
    feat = trunk[:, -1, :]
    cache["feat"] = feat

    logits = [feat @ t[f"head{h}.W"] + t[f"head{h}.b"]
              for h in range(len(cfg.head_sizes))]
    values = (feat @ t["value.W"] + t["value.b"])[:, 0]
    aux = {"trunk": trunk}
    if need_cache:
        aux["cache"] = cache
    return logits, values, aux


def backward(params: ParameterSet, cache: dict, dlogits: Sequence[np.ndarray],
             dvalues: np.ndarray) -> dict:
    """Exact gradients of sum(upstream . outputs) for every parameter."""
    cfg = params.config
    t = params.tensors
    masks = cache["masks"]
    B, K = masks.shape
    H, d = cfg.n_heads, cfg.d_model
    dh = d // H
    grads = {name: np.zeros_like(arr) for name, arr in t.items()}

    feat = cache["feat"]
    dfeat = np.zeros_like(feat)
    for h, dl in enumerate(dlogits):
        grads[f"head{h}.W"] += feat.T @ dl
        grads[f"head{h}.b"] += dl.sum(axis=0)
        dfeat += dl @ t[f"head{h}.W"].T
    dvalues = np.asarray(dvalues, dtype=float)
    grads["value.W"] += feat.T @ dvalues[:, None]
    grads["value.b"] += np.array([dvalues.sum()])
    dfeat += dvalues[:, None] @ t["value.W"].T

    dtrunk = np.zeros((B, K, d))
    dtrunk[:, -1, :] = dfeat
    dx, dg, db = _ln_backward(dtrunk, cache["lnf"])
    grads["lnf.g"] += dg
    grads["lnf.b"] += db

    for i in reversed(range(cfg.n_blocks)):
        p = f"block{i}."
        bc = cache["blocks"][i]
        # x_out = x2 + g2 * ff_out
        dx2 = dx.copy()
        dg2 = dx * bc["ff_out"]
        dff_out = dx * bc["g2"]
        dg2_pre = dg2 * bc["g2"] * (1.0 - bc["g2"])
        grads[p + "gate2.W"] += np.einsum("bki,bkj->ij", bc["x2"], dg2_pre)
        grads[p + "gate2.b"] += dg2_pre.sum(axis=(0, 1))
        dx2 += dg2_pre @ t[p + "gate2.W"].T
        # ff
        grads[p + "ff.W2"] += np.einsum("bki,bkj->ij", bc["f1"], dff_out)
        grads[p + "ff.b2"] += dff_out.sum(axis=(0, 1))
        df1 = dff_out @ t[p + "ff.W2"].T
        df1_pre = df1 * (bc["f1_pre"] > 0.0)
        grads[p + "ff.W1"] += np.einsum("bki,bkj->ij", bc["b_ln"], df1_pre)
        grads[p + "ff.b1"] += df1_pre.sum(axis=(0, 1))
        db_ln = df1_pre @ t[p + "ff.W1"].T
        dx2_ln, dg, db = _ln_backward(db_ln, bc["ln2"])
        grads[p + "ln2.g"] += dg
        grads[p + "ln2.b"] += db
        dx2 += dx2_ln
        # x2 = x + g1 * attn_out
        dx_res = dx2.copy()
        dg1 = dx2 * bc["attn_out"]
        dattn = dx2 * bc["g1"]
        dg1_pre = dg1 * bc["g1"] * (1.0 - bc["g1"])
        grads[p + "gate1.W"] += np.einsum("bki,bkj->ij", bc["x"], dg1_pre)
        grads[p + "gate1.b"] += dg1_pre.sum(axis=(0, 1))
        dx_res += dg1_pre @ t[p + "gate1.W"].T
        # attention
        grads[p + "attn.Wo"] += np.einsum("bki,bkj->ij", bc["concat"], dattn)
        grads[p + "attn.bo"] += dattn.sum(axis=(0, 1))
        dconcat = dattn @ t[p + "attn.Wo"].T
        dctx = dconcat.reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        dprobs = dctx @ bc["v"].transpose(0, 1, 3, 2)
        dv = bc["probs"].transpose(0, 1, 3, 2) @ dctx
        probs = bc["probs"]
        dscores = probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))
        dscores /= np.sqrt(dh)
        dq = dscores @ bc["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ bc["q"]
        da = np.zeros_like(bc["a"])
        for name, dmat in (("Wq", dq), ("Wk", dk), ("Wv", dv)):
            flat = dmat.transpose(0, 2, 1, 3).reshape(B, K, d)
            grads[p + f"attn.{name}"] += np.einsum("bki,bkj->ij", bc["a"], flat)
            grads[p + f"attn.b{name[-1].lower()}"] += flat.sum(axis=(0, 1))
            da += flat @ t[p + f"attn.{name}"].T
        da_x, dg, db = _ln_backward(da, bc["ln1"])
        grads[p + "ln1.g"] += dg
        grads[p + "ln1.b"] += db
        dx = dx_res + da_x

    # embedding
    grads["pos"] += dx.sum(axis=0)
    dh2 = dx @ t["embed.W3"].T
    grads["embed.W3"] += np.einsum("bki,bkj->ij", cache["h2"], dx)
    grads["embed.b3"] += dx.sum(axis=(0, 1))
    dh2_pre = dh2 * (cache["h2_pre"] > 0.0)
    grads["embed.W2"] += np.einsum("bki,bkj->ij", cache["h1"], dh2_pre)
    grads["embed.b2"] += dh2_pre.sum(axis=(0, 1))
    dh1 = dh2_pre @ t["embed.W2"].T
    dh1_pre = dh1 * (cache["h1_pre"] > 0.0)
    grads["embed.W1"] += np.einsum("bki,bkj->ij", cache["x_in"], dh1_pre)
    grads["embed.b1"] += dh1_pre.sum(axis=(0, 1))
    return grads


# ---------------------------------------------------------------------------
# policy utilities


def sample_action(logits: Sequence[np.ndarray], rng: np.random.Generator):
    """Sample one index per head; returns (indices, joint log-prob)."""
    indices = []
    logp = 0.0
    for head_logits in logits:
        head_logits = np.asarray(head_logits).reshape(-1)
        lsm = log_softmax(head_logits)
        idx = int(rng.choice(len(head_logits), p=np.exp(lsm)))
        indices.append(idx)
        logp += float(lsm[idx])
    return np.array(indices, dtype=int), logp


def log_prob(logits: Sequence[np.ndarray], indices: Sequence[int]) -> float:
    """Joint log-probability: sum over independent heads."""
    total = 0.0
    for head_logits, idx in zip(logits, indices):
        lsm = log_softmax(np.asarray(head_logits).reshape(-1))
        total += float(lsm[int(idx)])
    return total


def entropy(logits: np.ndarray) -> np.ndarray:
    """Per-row categorical entropy of a (B, n) logit array."""
    lsm = log_softmax(logits)
    p = np.exp(lsm)
    return -np.sum(p * lsm, axis=-1)


# ---------------------------------------------------------------------------
# checkpoint I/O: JSON manifest + concatenated little-endian float32 arrays


def save_checkpoint(params: ParameterSet, path_prefix: str, extra: dict | None = None) -> None:
    names = parameter_names(params.config)
    manifest = {
        "version": params.version,
        "config": {
            "obs_dim": params.config.obs_dim,
            "head_sizes": list(params.config.head_sizes),
            "d_model": params.config.d_model,
            "n_heads": params.config.n_heads,
            "n_blocks": params.config.n_blocks,
            "context_len": params.config.context_len,
            "ff_width": params.config.ff_width,
        },
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        "dtype": "<f4",
    }
    if extra:
        manifest.update(extra)
    with open(path_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    with open(path_prefix + ".bin", "wb") as fh:
        for n in names:
            fh.write(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes())


def load_checkpoint(path_prefix: str) -> tuple[ParameterSet, dict]:
    with open(path_prefix + ".json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = GtrConfig(
        obs_dim=manifest["config"]["obs_dim"],
        head_sizes=tuple(manifest["config"]["head_sizes"]),
        d_model=manifest["config"]["d_model"],
        n_heads=manifest["config"]["n_heads"],
        n_blocks=manifest["config"]["n_blocks"],
        context_len=manifest["config"]["context_len"],
        ff_width=manifest["config"]["ff_width"],
    )
    raw = np.fromfile(path_prefix + ".bin", dtype="<f4")
    tensors = {}
    offset = 0
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        tensors[entry["name"]] = raw[offset:offset + size].astype(float).reshape(entry["shape"])
        offset += size
    return ParameterSet(config=cfg, tensors=tensors, version=manifest["version"]), manifest
