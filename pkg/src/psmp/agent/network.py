"""Attention-encoder actor-critic in plain numpy, with a hand-written backward pass.

Layout (pre-norm transformer encoder over the node rows):

    h = X @ W_in + b_in
    repeat n_layers:  h += MHA(LN(h));  h += FFN(LN(h))      FFN = W2 · gelu(W1 ·)
    z = LN_final(h)
    logits[m] = z[m] · w_actor + b_actor          (one Bernoulli per node)
    value     = mean_m(z[m]) · w_critic + b_critic

Self-attention without positional encoding makes the actor permutation
equivariant and the mean-pooled critic permutation invariant over nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import stream

LN_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True)
class NetConfig:
    n_features: int = 11
    embed: int = 128
    heads: int = 8
    layers: int = 3
    ff_mult: int = 4
    head_gain: float = 0.01

    def __post_init__(self):
        if self.embed % self.heads:
            raise ValueError("embedding size must be divisible by the head count")


class NetworkParams(dict):
    """Ordered mapping name -> float64 array, plus the architecture config."""

    def __init__(self, config: NetConfig, arrays=None):
        super().__init__(arrays or {})
        self.config = config

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values()])

    def n_params(self) -> int:
        return sum(v.size for v in self.values())


def param_shapes(cfg: NetConfig) -> dict[str, tuple]:
    D, F, H = cfg.embed, cfg.n_features, cfg.embed * cfg.ff_mult
    shapes = {"W_in": (F, D), "b_in": (D,)}
    for l in range(cfg.layers):
        p = f"L{l}."
        shapes.update({
            p + "ln1_g": (D,), p + "ln1_b": (D,),
            p + "Wq": (D, D), p + "bq": (D,), p + "Wk": (D, D), p + "bk": (D,),
            p + "Wv": (D, D), p + "bv": (D,), p + "Wo": (D, D), p + "bo": (D,),
            p + "ln2_g": (D,), p + "ln2_b": (D,),
            p + "W1": (D, H), p + "b1": (H,), p + "W2": (H, D), p + "b2": (D,),
        })
    shapes.update({"lnf_g": (D,), "lnf_b": (D,), "w_actor": (D,), "b_actor": (1,),
                   "w_critic": (D,), "b_critic": (1,)})
    return shapes


def init_params(seed=0, config: NetConfig | None = None) -> NetworkParams:
    """Glorot-uniform weights, unit LayerNorm gains, zero biases.

    Residual-branch output projections are scaled by 1/sqrt(2·layers) and both
    heads by ``head_gain`` so the initial policy sits near probability 0.5.
    """
    cfg = config or NetConfig()
    rng = stream(seed, "init-params")
    params = NetworkParams(cfg)
    resid = 1.0 / np.sqrt(2 * cfg.layers)
    for name, shape in param_shapes(cfg).items():
        short = name.split(".")[-1]
        if short.endswith("_g"):
            params[name] = np.ones(shape)
        elif short.startswith("b") or short.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
            gain = 1.0
            if short in ("Wo", "W2"):
                gain = resid
            elif short in ("w_actor", "w_critic"):
                gain = cfg.head_gain
            a = gain * np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape)
    return params


# ----------------------------------------------------------------- forward

def _ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xh = xc * inv
    return xh * g + b, (xh, inv, g)


def _ln_back(dy, cache):
    xh, inv, g = cache
    dg = (dy * xh).reshape(-1, xh.shape[-1]).sum(0)
    db = dy.reshape(-1, xh.shape[-1]).sum(0)
    dxh = dy * g
    n = xh.shape[-1]
    dx = inv / n * (n * dxh - dxh.sum(-1, keepdims=True) - xh * (dxh * xh).sum(-1, keepdims=True))
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u ** 3))
    return 0.5 * u * (1.0 + t), t


def _gelu_back(du_out, u, t):
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)
    return du_out * (0.5 * (1.0 + t) + 0.5 * u * dt)


def _softmax(s):
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(-1, keepdims=True)


def forward(params: NetworkParams, X: np.ndarray, keep_cache: bool = False):
    """Batched forward pass. X is (B, M, F) or (M, F); returns (logits, values[, cache])."""
    single = X.ndim == 2
    if single:
        X = X[None]
    B, M, _ = X.shape
    if M == 0:
        raise ValueError("feature matrix has no node rows")
    cfg = params.config
    Hh, D = cfg.heads, cfg.embed
    dh = D // Hh
    scale = 1.0 / np.sqrt(dh)
    caches = []
    h = X @ params["W_in"] + params["b_in"]
    for l in range(cfg.layers):
        p = f"L{l}."
        a, ln1 = _ln(h, params[p + "ln1_g"], params[p + "ln1_b"])
        q = (a @ params[p + "Wq"] + params[p + "bq"]).reshape(B, M, Hh, dh).transpose(0, 2, 1, 3)
        k = (a @ params[p + "Wk"] + params[p + "bk"]).reshape(B, M, Hh, dh).transpose(0, 2, 1, 3)
        v = (a @ params[p + "Wv"] + params[p + "bv"]).reshape(B, M, Hh, dh).transpose(0, 2, 1, 3)
        P = _softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        o = (P @ v).transpose(0, 2, 1, 3).reshape(B, M, D)
        h = h + o @ params[p + "Wo"] + params[p + "bo"]
        f, ln2 = _ln(h, params[p + "ln2_g"], params[p + "ln2_b"])
        u = f @ params[p + "W1"] + params[p + "b1"]
        gu, t = _gelu(u)
        h = h + gu @ params[p + "W2"] + params[p + "b2"]
        if keep_cache:
            caches.append((a, ln1, q, k, v, P, o, f, ln2, u, gu, t))
    z, lnf = _ln(h, params["lnf_g"], params["lnf_b"])
    logits = z @ params["w_actor"] + params["b_actor"][0]
    pooled = z.mean(1)
    values = pooled @ params["w_critic"] + params["b_critic"][0]
    if single:
        logits, values = logits[0], values[0]
    if keep_cache:
        return logits, values, (X, caches, z, lnf, pooled, single)
    return logits, values


def backward(params: NetworkParams, cache, dlogits: np.ndarray, dvalues: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given dL/dlogits (B, M) and dL/dvalues (B,)."""
    X, caches, z, lnf, pooled, single = cache
    if single:
        dlogits, dvalues = dlogits[None], np.atleast_1d(dvalues)
    cfg = params.config
    B, M, _ = X.shape
    Hh, D = cfg.heads, cfg.embed
    dh = D // Hh
    scale = 1.0 / np.sqrt(dh)
    g = {}
    g["w_actor"] = np.einsum("bm,bmd->d", dlogits, z)
    g["b_actor"] = np.array([dlogits.sum()])
    g["w_critic"] = dvalues @ pooled
    g["b_critic"] = np.array([dvalues.sum()])
    dz = dlogits[..., None] * params["w_actor"] + (dvalues[:, None, None] * params["w_critic"]) / M
    dh_, g["lnf_g"], g["lnf_b"] = _ln_back(dz, lnf)
    for l in reversed(range(cfg.layers)):
        p = f"L{l}."
        a, ln1, q, k, v, P, o, f, ln2, u, gu, t = caches[l]
        # feed-forward branch
        g[p + "W2"] = gu.reshape(-1, gu.shape[-1]).T @ dh_.reshape(-1, D)
        g[p + "b2"] = dh_.reshape(-1, D).sum(0)
        dgu = dh_ @ params[p + "W2"].T
        du = _gelu_back(dgu, u, t)
        g[p + "W1"] = f.reshape(-1, D).T @ du.reshape(-1, du.shape[-1])
        g[p + "b1"] = du.reshape(-1, du.shape[-1]).sum(0)
        df = du @ params[p + "W1"].T
        dx, g[p + "ln2_g"], g[p + "ln2_b"] = _ln_back(df, ln2)
        dh_ = dh_ + dx
        # attention branch
        g[p + "Wo"] = o.reshape(-1, D).T @ dh_.reshape(-1, D)
        g[p + "bo"] = dh_.reshape(-1, D).sum(0)
        do = (dh_ @ params[p + "Wo"].T).reshape(B, M, Hh, dh).transpose(0, 2, 1, 3)
        dP = do @ v.transpose(0, 1, 3, 2)
        dv = P.transpose(0, 1, 3, 2) @ do
        dS = P * (dP - (dP * P).sum(-1, keepdims=True)) * scale
        dq = dS @ k
        dk = dS.transpose(0, 1, 3, 2) @ q
        a2 = a.reshape(-1, D)
        da = np.zeros_like(a)
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            dflat = dproj.transpose(0, 2, 1, 3).reshape(B, M, D)
            g[p + "W" + name] = a2.T @ dflat.reshape(-1, D)
            g[p + "b" + name] = dflat.reshape(-1, D).sum(0)
            da += dflat @ params[p + "W" + name].T
        dx, g[p + "ln1_g"], g[p + "ln1_b"] = _ln_back(da, ln1)
        dh_ = dh_ + dx
    g["W_in"] = X.reshape(-1, X.shape[-1]).T @ dh_.reshape(-1, D)
    g["b_in"] = dh_.reshape(-1, D).sum(0)
    return {name: g[name] for name in params}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward_actor(params: NetworkParams, features: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-node probability of action 1 (On). Nodes outside ``mask`` are pinned to 1."""
    if features.shape[0] == 0:
        raise ValueError("feature matrix has no node rows")
    logits, _ = forward(params, features)
    probs = _sigmoid(logits)
    if mask is not None:
        probs = np.where(mask, probs, 1.0)
    return probs


def forward_critic(params: NetworkParams, features: np.ndarray) -> float:
    if features.shape[0] == 0:
        raise ValueError("feature matrix has no node rows")
    return float(forward(params, features)[1])
