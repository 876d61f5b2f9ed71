"""MDP wrapper around the simulator: per-node features, reward and Δt stepping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import ACTIVE, SWITCHING_ON
from .policy import PolicyView, legal_mask
from .simcore import ClusterState, Intent, PowerParams, SimConfig, Snapshot, build_result, default_horizon
from .workload import WorkloadTrace, rebase

N_FEATURES = 11
FEATURE_NAMES = (
    "queue_length", "arrival_rate", "mean_queue_wait", "total_wasted_energy", "mean_queue_runtime",
    "power_state", "idle_flag", "idle_time", "release_time", "node_wasted_energy", "node_switch_time",
)


@dataclass(frozen=True)
class FeatureConfig:
    queue_scale: float = 64.0
    rate_scale: float = 1.0 / 60.0  # arrivals per second
    clamp: float = 10.0  # queue length, rate, waiting, idle, release and runtime features
    energy_clamp: float = 10.0
    switch_cap_transitions: float = 100.0
    # "idle": u1*(1-c), the flag-for-idling reading; "literal": u1*c as printed in the feature table
    idle_flag_mode: str = "idle"
    normalize: bool = True


@dataclass(frozen=True)
class RewardTerms:
    r1: float
    r2: float
    j: float
    reward: float


def observe(state: ClusterState, window_arrivals: int | None = None, config: FeatureConfig | None = None,
            dt: float | None = None) -> np.ndarray:
    """Return the M x 11 feature matrix of ``state``."""
    cfg = config or FeatureConfig()
    dt = dt or state.config.dt
    M, p = state.M, state.power
    now = state.clock
    if window_arrivals is None:
        window_arrivals = state.arrivals_between(now - dt, now)
    q = state.queue
    qlen = len(q)
    rate = window_arrivals / dt
    mean_wait = float(np.mean([now - j.submit_time for j in q])) if q else 0.0
    mean_rt = float(np.mean([j.walltime for j in q])) if q else 0.0
    total_waste = float(state.wasted_e.sum())

    idle = state.idle_mask()
    if cfg.idle_flag_mode == "idle":
        flag = idle
    elif cfg.idle_flag_mode == "literal":
        flag = (state.pstate == ACTIVE) & state.computing
    else:
        raise ValueError(f"unknown idle_flag_mode {cfg.idle_flag_mode!r}")
    idle_time = np.where(idle, now - np.nan_to_num(state.idle_since, nan=now), 0.0)
    release = np.zeros(M)
    for rj in state.running.values():
        release[list(rj.node_ids)] = rj.start_time + rj.job.walltime - now
    son = state.pstate == SWITCHING_ON
    release[son] = state.complete_at[son] - now

    X = np.empty((M, N_FEATURES))
    X[:, 0] = qlen
    X[:, 1] = rate
    X[:, 2] = mean_wait
    X[:, 3] = total_waste
    X[:, 4] = mean_rt
    X[:, 5] = state.pstate
    X[:, 6] = flag
    X[:, 7] = idle_time
    X[:, 8] = release
    X[:, 9] = state.wasted_e
    X[:, 10] = state.switch_t
    if not cfg.normalize:
        return X
    c = cfg.clamp
    X[:, 0] = np.minimum(X[:, 0] / cfg.queue_scale, c)
    X[:, 1] = np.minimum(X[:, 1] / cfg.rate_scale, c)
    X[:, 2] = np.minimum(X[:, 2] / dt, c)
    X[:, 3] = np.minimum(X[:, 3] / (M * p.p_active * dt), cfg.energy_clamp) if p.p_active > 0 else 0.0
    X[:, 4] = np.minimum(X[:, 4] / dt, c)
    X[:, 7] = np.minimum(X[:, 7] / dt, c)
    X[:, 8] = np.minimum(X[:, 8] / dt, c)
    X[:, 9] = np.minimum(X[:, 9] / (p.p_active * dt), cfg.energy_clamp) if p.p_active > 0 else 0.0
    cycle = p.t_switch_on + p.t_switch_off
    X[:, 10] = np.minimum(X[:, 10] / cycle, cfg.switch_cap_transitions) if cycle > 0 else 0.0
    return X


def compute_reward(snap_k: Snapshot, snap_k1: Snapshot, alpha: float, beta: float, node_count: int,
                   p_active: float, dt: float) -> RewardTerms:
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0) or not math.isclose(alpha + beta, 1.0, abs_tol=1e-12):
        raise ValueError(f"alpha and beta must lie in [0,1] and sum to 1 (got {alpha}, {beta})")
    r1 = snap_k1.wasted_energy - snap_k.wasted_energy
    r2 = snap_k1.queue_seconds - snap_k.queue_seconds
    j = dt * snap_k1.touched_jobs
    reward = -alpha * r1 / (node_count * p_active * dt)
    if j > 0:
        reward -= beta * r2 / j
    return RewardTerms(r1, r2, j, reward)


@dataclass
class EnvConfig:
    node_count: int = 128
    power: PowerParams = field(default_factory=PowerParams)
    dt: float = 1800.0
    alpha: float = 0.5
    beta: float = 0.5
    features: FeatureConfig = field(default_factory=FeatureConfig)
    failsafe: bool = False
    failsafe_wait: float = 86400.0
    horizon_slack: float = 30 * 86400.0
    backfill: bool = True

    def sim_config(self, trace: WorkloadTrace) -> SimConfig:
        last = trace.jobs[-1].submit_time if trace.jobs else 0.0
        return SimConfig(node_count=self.node_count, power=self.power, dt=self.dt, wakeup_mode="agent",
                         horizon_cap=last + self.horizon_slack, backfill=self.backfill,
                         failsafe=self.failsafe, failsafe_wait=self.failsafe_wait)


class EpisodeDone(RuntimeError):
    pass


class PsmpEnv:
    """Agent-mode episode: observe at k·Δt, apply an action in {0,1}^M, advance Δt."""

    def __init__(self, trace: WorkloadTrace, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.trace = trace
        self.state: ClusterState | None = None
        self.done = True

    def reset(self) -> np.ndarray:
        cfg = self.config
        sim = cfg.sim_config(self.trace)
        self.horizon = sim.horizon_cap
        self.state = ClusterState(cfg.node_count, cfg.power, sim)
        self.state.load(self.trace)
        self.k = 0
        self.truncated = False
        self.snapshots = [self.state.snapshot(0)]
        self.rewards: list[RewardTerms] = []
        self.done = not self.trace.jobs
        if not self.done:
            self.state.advance_to(0.0)
            self.state.settle()
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, config=self.config.features, dt=self.config.dt)

    def legal_mask(self) -> np.ndarray:
        return legal_mask(PolicyView.of(self.state))

    def step(self, action) -> tuple[np.ndarray, RewardTerms, bool]:
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        cfg, st = self.config, self.state
        action = np.asarray(action)
        if action.shape != (st.M,):
            raise ValueError(f"expected action of shape ({st.M},)")
        st.apply_intents(np.where(action > 0, Intent.ON, Intent.OFF).astype(np.int8))
        st.settle()
        target = min((self.k + 1) * cfg.dt, self.horizon)
        st.advance_to(target, stop_when_done=True)
        self.k += 1
        snap = st.snapshot(self.k)
        terms = compute_reward(self.snapshots[-1], snap, cfg.alpha, cfg.beta, st.M, cfg.power.p_active, cfg.dt)
        self.snapshots.append(snap)
        self.rewards.append(terms)
        if st.finished():
            self.done = True
        elif st.clock >= self.horizon:
            self.done = self.truncated = True
        return self.observe(), terms, self.done

    def result(self):
        return build_result(self.state, self.snapshots, self.truncated)


def env_step(env: PsmpEnv, action, alpha: float | None = None, beta: float | None = None):
    if alpha is not None or beta is not None:
        env.config.alpha = env.config.alpha if alpha is None else alpha
        env.config.beta = env.config.beta if beta is None else beta
    return env.step(action)


def make_episodes(trace: WorkloadTrace, segment_length: float = 7 * 86400.0) -> list[WorkloadTrace]:
    """Cut a trace into contiguous time segments, each rebased to t = 0; empty segments are dropped."""
    if segment_length <= 0:
        raise ValueError("segment_length must be positive")
    buckets: dict[int, list] = {}
    for j in trace.jobs:
        buckets.setdefault(int(j.submit_time // segment_length), []).append(j)
    out = []
    for idx in sorted(buckets):
        seg = WorkloadTrace(buckets[idx], trace.origin_timestamp, trace.label)
        out.append(rebase(seg, idx * segment_length))
    return out


TRANSITION_FIELDS = ("step", "time", "reward", "r1", "r2", "j", "n_on", "n_off")


def write_transition_log(path, env: PsmpEnv, actions: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSITION_FIELDS)
        for k, (terms, a) in enumerate(zip(env.rewards, actions), start=1):
            a = np.asarray(a)
            w.writerow((k, env.snapshots[k].time, repr(terms.reward), repr(terms.r1), repr(terms.r2),
                        repr(terms.j), int((a > 0).sum()), int((a == 0).sum())))


def default_env_horizon(trace: WorkloadTrace) -> float:
    return default_horizon(trace)
