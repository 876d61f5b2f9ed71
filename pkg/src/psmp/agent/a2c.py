"""A2C loss, update step and a finite-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import stream
from .network import NetworkParams, backward, forward


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    gamma: float = 0.99
    grad_clip_norm: float = 2.0
    rollout_length: int = 64
    dt: float = 1800.0
    alpha: float = 0.5
    beta: float = 0.5
    epochs_per_stage: int = 10
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" | "adam"
    critic_coef: float = 0.5
    segment_days: float = 7.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.learning_rate <= 0 or self.grad_clip_norm <= 0 or self.rollout_length <= 0:
            raise ValueError("learning rate, clip norm and rollout length must be positive")
        if self.epochs_per_stage < 0:
            raise ValueError("epochs_per_stage must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Rollout:
    features: np.ndarray  # (B, M, F)
    actions: np.ndarray  # (B, M) in {0, 1}
    masks: np.ndarray  # (B, M) True where the action is a real choice
    rewards: np.ndarray  # (B,)
    dones: np.ndarray  # (B,) done flag after each transition
    bootstrap_features: np.ndarray | None = None  # state after the last transition

    def __len__(self):
        return len(self.rewards)


def discounted_returns(rewards, dones, bootstrap: float, gamma: float) -> np.ndarray:
    G = np.empty(len(rewards))
    running = bootstrap
    for k in reversed(range(len(rewards))):
        if dones[k]:
            running = 0.0
        running = rewards[k] + gamma * running
        G[k] = running
    return G


def _softplus(x):
    return np.logaddexp(0.0, x)


def log_prob(logits, actions):
    # log σ(l) for a=1, log(1-σ(l)) for a=0
    return np.where(actions > 0, -_softplus(-logits), -_softplus(logits))


def bootstrap_value(params, rollout: Rollout) -> float:
    if rollout.dones[-1] or rollout.bootstrap_features is None:
        return 0.0
    return float(forward(params, rollout.bootstrap_features)[1])


def loss_and_grads(params: NetworkParams, rollout: Rollout, config: TrainConfig, returns=None, advantages=None):
    """Total loss = critic_coef·mean(A²) − mean_{unmasked}(log π · A).

    ``returns`` and ``advantages`` are treated as constants; pass them to hold
    them fixed while parameters are perturbed.
    """
    logits, values, cache = forward(params, rollout.features, keep_cache=True)
    B = len(rollout)
    if returns is None:
        returns = discounted_returns(rollout.rewards, rollout.dones, bootstrap_value(params, rollout), config.gamma)
    if advantages is None:
        advantages = returns - values
    td = returns - values
    critic_loss = float(np.mean(td * td))
    mask = rollout.masks.astype(np.float64)
    count = mask.sum()
    lp = log_prob(logits, rollout.actions)
    if count > 0:
        actor_obj = float((lp * mask * advantages[:, None]).sum() / count)
        # d log π / d logit = a − σ(logit)
        sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
        dlogits = -(rollout.actions - sig) * mask * advantages[:, None] / count
    else:
        actor_obj = 0.0
        dlogits = np.zeros_like(logits)
    dvalues = -2.0 * config.critic_coef * td / B
    grads = backward(params, cache, dlogits, dvalues)
    total = config.critic_coef * critic_loss - actor_obj
    return total, -actor_obj, critic_loss, grads, returns, advantages


def loss_value(params: NetworkParams, rollout: Rollout, config: TrainConfig, returns, advantages) -> float:
    logits, values = forward(params, rollout.features)
    td = returns - values
    mask = rollout.masks.astype(np.float64)
    count = mask.sum()
    actor_obj = (log_prob(logits, rollout.actions) * mask * advantages[:, None]).sum() / count if count else 0.0
    return float(config.critic_coef * np.mean(td * td) - actor_obj)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_grads(grads, max_norm: float):
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / norm
        grads = {k: g * s for k, g in grads.items()}
    return grads, norm


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + self.eps)


def make_optimizer(config: TrainConfig):
    return Adam(config.learning_rate) if config.optimizer == "adam" else SGD(config.learning_rate)


@dataclass
class UpdateStats:
    actor_loss: float
    critic_loss: float
    grad_norm: float  # before clipping
    clipped_norm: float = field(default=0.0)


def a2c_update(params: NetworkParams, rollout: Rollout, config: TrainConfig, optimizer=None) -> UpdateStats:
    """One clipped gradient step on an n-step bootstrapped rollout; params change in place."""
    if len(rollout) == 0:
        raise ValueError("empty rollout")
    _, actor_loss, critic_loss, grads, _, _ = loss_and_grads(params, rollout, config)
    grads, norm = clip_grads(grads, config.grad_clip_norm)
    (optimizer or SGD(config.learning_rate)).step(params, grads)
    return UpdateStats(actor_loss, critic_loss, norm, global_norm(grads))


# -------------------------------------------------------- gradient checking

def gradient_check(params: NetworkParams, rollout: Rollout, epsilon: float = 1e-4, n_coords: int = 1000,
                   seed=0, config: TrainConfig | None = None, grad_override=None, floor: float = 1e-7) -> float:
    """Max relative error between analytic and central-difference gradients.

    Returns and advantages are frozen at the unperturbed parameters. The
    relative error of a coordinate is |a − n| / max(|a| + |n|, floor).
    ``grad_override`` lets tests inject a corrupted analytic gradient.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    config = config or TrainConfig()
    _, _, _, grads, G, A = loss_and_grads(params, rollout, config)
    if grad_override is not None:
        grads = grad_override(grads)
    names = list(params)
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    rng = stream(seed, "gradcheck")
    n_coords = min(n_coords, total)
    # every tensor gets at least one coordinate, the rest uniformly at random
    picks = [(n, int(rng.integers(params[n].size))) for n in names]
    rest = rng.choice(total, size=max(0, n_coords - len(picks)), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for flat in np.sort(rest):
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        picks.append((names[i], int(flat - offsets[i])))
    worst = 0.0
    for name, idx in picks:
        arr = params[name].reshape(-1)
        old = arr[idx]
        arr[idx] = old + epsilon
        lp = loss_value(params, rollout, config, G, A)
        arr[idx] = old - epsilon
        lm = loss_value(params, rollout, config, G, A)
        arr[idx] = old
        num = (lp - lm) / (2 * epsilon)
        ana = grads[name].reshape(-1)[idx]
        err = abs(ana - num) / max(abs(ana) + abs(num), floor)
        worst = max(worst, err)
    return worst
