"""Rollout collection, per-stage A2C training and curriculum sequencing."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..rlenv import EnvConfig, PsmpEnv, make_episodes
from ..rng import stream
from ..workload import WorkloadTrace
from .a2c import Rollout, TrainConfig, a2c_update, make_optimizer
from .checkpoint import load_checkpoint, save_checkpoint
from .network import NetworkParams, forward, init_params

log = logging.getLogger(__name__)

LABELS = ("sampled", "real", "synthetic")
CURRICULA = tuple(itertools.permutations(LABELS))


@dataclass
class CurriculumPlan:
    stages: list[tuple[str, WorkloadTrace]]

    def __post_init__(self):
        labels = [lab for lab, _ in self.stages]
        if not 1 <= len(labels) <= 3:
            raise ValueError("a curriculum has 1 to 3 stages")
        if len(set(labels)) != len(labels):
            raise ValueError("curriculum stage labels must be distinct")

    @classmethod
    def from_order(cls, order, traces: dict[str, WorkloadTrace]) -> "CurriculumPlan":
        return cls([(lab, traces[lab]) for lab in order])

    @property
    def labels(self) -> list[str]:
        return [lab for lab, _ in self.stages]


def _sample_actions(params, obs, mask, rng):
    logits, _ = forward(params, obs)
    probs = 0.5 * (1.0 + np.tanh(0.5 * logits))
    a = rng.random(probs.shape) < probs
    return np.where(mask, a, True).astype(np.int8)


def run_training_episode(params, trace, env_config, train_config, optimizer, rng):
    env = PsmpEnv(trace, env_config)
    obs = env.reset()
    buf = {"f": [], "a": [], "m": [], "r": [], "d": []}
    stats = []
    rewards = []
    while not env.done:
        mask = env.legal_mask()
        action = _sample_actions(params, obs, mask, rng)
        nxt, terms, done = env.step(action)
        buf["f"].append(obs)
        buf["a"].append(action)
        buf["m"].append(mask)
        buf["r"].append(terms.reward)
        buf["d"].append(done)
        rewards.append(terms.reward)
        obs = nxt
        if len(buf["r"]) == train_config.rollout_length or done:
            ro = Rollout(np.stack(buf["f"]), np.stack(buf["a"]), np.stack(buf["m"]), np.array(buf["r"]),
                         np.array(buf["d"]), None if done else obs)
            stats.append(a2c_update(params, ro, train_config, optimizer))
            buf = {k: [] for k in buf}
    return env.result(), rewards, stats


def train_stage(params: NetworkParams, trace: WorkloadTrace, env_config: EnvConfig, train_config: TrainConfig,
                rng=None, optimizer=None):
    """Train for ``epochs_per_stage`` passes over the trace's episode segments; params change in place."""
    if trace.max_nodes() > env_config.node_count:
        raise ValueError(f"trace has a job larger than the {env_config.node_count}-node cluster")
    if rng is None or not isinstance(rng, np.random.Generator):
        rng = stream(train_config.seed if rng is None else rng, "train-stage", trace.label)
    optimizer = optimizer or make_optimizer(train_config)
    env_config = replace(env_config, dt=train_config.dt, alpha=train_config.alpha, beta=train_config.beta)
    episodes = make_episodes(trace, train_config.segment_days * 86400.0)
    history = []
    for epoch in range(train_config.epochs_per_stage):
        rewards, stats, wasted, waits = [], [], 0.0, []
        for ep in episodes:
            res, r, s = run_training_episode(params, ep, env_config, train_config, optimizer, rng)
            rewards += r
            stats += s
            wasted += res.wasted_energy
            waits += [c.wait for c in res.completed]
        row = {
            "epoch": epoch,
            "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
            "actor_loss": float(np.mean([s.actor_loss for s in stats])) if stats else 0.0,
            "critic_loss": float(np.mean([s.critic_loss for s in stats])) if stats else 0.0,
            "grad_norm": float(np.mean([s.grad_norm for s in stats])) if stats else 0.0,
            "wasted_energy": wasted,
            "avg_wait": float(np.mean(waits)) if waits else 0.0,
            "updates": len(stats),
        }
        log.info("stage %s epoch %d: %s", trace.label, epoch, row)
        history.append(row)
    return params, history


def _stage_path(directory: Path, idx: int, label: str) -> Path:
    return directory / f"stage{idx}_{label}.ckpt"


def train_curriculum(plan: CurriculumPlan, env_config: EnvConfig, train_config: TrainConfig,
                     params: NetworkParams | None = None, checkpoint_dir=None, resume_from=None):
    """Run the stages in order, carrying parameters across them.

    Each stage draws from its own RNG stream and starts a fresh optimizer, so
    resuming from any stage checkpoint reproduces the uninterrupted run.
    """
    start = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        if ck.meta.get("stage_labels") != plan.labels:
            raise ValueError("checkpoint belongs to a different curriculum")
        params = ck.params
        start = ck.meta["stage_index"] + 1
    elif params is None:
        params = init_params(train_config.seed)
    logs = []
    for idx in range(start, len(plan.stages)):
        label, trace = plan.stages[idx]
        rng = stream(train_config.seed, "stage", idx, label)
        params, history = train_stage(params, trace, env_config, train_config, rng=rng)
        logs.append({"stage": idx, "label": label, "epochs": history})
        if checkpoint_dir is not None:
            save_checkpoint(_stage_path(Path(checkpoint_dir), idx, label), params,
                            {"stage_index": idx, "stage_labels": plan.labels}, train_config)
    return params, logs


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
