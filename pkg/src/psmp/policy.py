"""Power-management policies: always-on, fixed timeout, random and learned agent."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import ACTIVE, SLEEP
from .rng import stream
from .simcore import ClusterState, Intent


@dataclass(frozen=True)
class PolicyView:
    clock: float
    pstate: np.ndarray
    computing: np.ndarray
    reserved: np.ndarray
    idle_since: np.ndarray  # nan when the node is not Active-idle
    queue_length: int
    head_wait: float  # 0 for an empty queue

    @property
    def idle_duration(self) -> np.ndarray:
        return self.clock - self.idle_since

    @classmethod
    def of(cls, state: ClusterState) -> "PolicyView":
        ro = []
        for a in (state.pstate, state.computing, state.reserved, state.idle_since):
            a = a.copy()
            a.flags.writeable = False
            ro.append(a)
        head_wait = state.clock - state.queue[0].submit_time if state.queue else 0.0
        return cls(state.clock, *ro, len(state.queue), head_wait)


@dataclass(frozen=True)
class PolicyDecision:
    intents: np.ndarray

    def __post_init__(self):
        if self.intents.ndim != 1:
            raise ValueError("intents must be a vector")


def _hold(m: int) -> np.ndarray:
    return np.full(m, Intent.HOLD, dtype=np.int8)


def switchable_off(view: PolicyView) -> np.ndarray:
    return (view.pstate == ACTIVE) & ~view.computing & ~view.reserved


def legal_mask(view: PolicyView) -> np.ndarray:
    """Nodes whose on/off choice matters: idle unreserved Active nodes and Sleep nodes."""
    return switchable_off(view) | (view.pstate == SLEEP)


def timeout_decide(view: PolicyView, threshold: float) -> PolicyDecision:
    if threshold <= 0:
        raise ValueError("timeout threshold must be positive")
    intents = _hold(view.pstate.size)
    due = switchable_off(view) & (view.clock >= view.idle_since + threshold)
    intents[due] = Intent.OFF
    return PolicyDecision(intents)


def always_on_decide(view: PolicyView) -> PolicyDecision:
    return PolicyDecision(_hold(view.pstate.size))


def random_decide(view: PolicyView, p_off: float, rng) -> PolicyDecision:
    if not 0.0 <= p_off <= 1.0:
        raise ValueError("p_off must lie in [0, 1]")
    if not isinstance(rng, np.random.Generator):
        rng = stream(rng, "random-policy")
    off = rng.random(view.pstate.size) < p_off
    return PolicyDecision(np.where(off, Intent.OFF, Intent.ON).astype(np.int8))


def agent_decide(view: PolicyView, features: np.ndarray, params, mode: str = "greedy", rng=None) -> PolicyDecision:
    from .agent.network import forward_actor

    if features.shape[0] != view.pstate.size:
        raise ValueError(f"features have {features.shape[0]} rows for {view.pstate.size} nodes")
    probs = forward_actor(params, features, legal_mask(view))
    return PolicyDecision(decide_from_probs(probs, mode, rng))


def decide_from_probs(probs: np.ndarray, mode: str = "greedy", rng=None) -> np.ndarray:
    if mode == "greedy":
        on = probs >= 0.5
    elif mode == "sample":
        if not isinstance(rng, np.random.Generator):
            rng = stream(0 if rng is None else rng, "agent-policy")
        on = rng.random(probs.shape) < probs
    else:
        raise ValueError(f"unknown agent mode {mode!r}")
    return np.where(on, Intent.ON, Intent.OFF).astype(np.int8)


# ------------------------------------------------------------ policy objects
# Each object binds configuration (and its RNG stream) to a decide function and
# knows when the simulator should consult it.

class Policy:
    name = "policy"
    continuous = False
    wakeup_mode = "agent"

    def reset(self, state: ClusterState):
        pass

    def decide(self, view: PolicyView, state: ClusterState) -> PolicyDecision:
        raise NotImplementedError

    def next_check(self, view: PolicyView):
        return None

    def act(self, state: ClusterState):
        view = PolicyView.of(state)
        state.apply_intents(self.decide(view, state).intents)
        return self.next_check(PolicyView.of(state))


class AlwaysOn(Policy):
    name = "always-on"
    continuous = True
    wakeup_mode = "reactive"

    def decide(self, view, state=None):
        return always_on_decide(view)


class Timeout(Policy):
    continuous = True
    wakeup_mode = "reactive"

    def __init__(self, minutes: float):
        if minutes <= 0:
            raise ValueError("timeout must be positive")
        self.minutes = minutes
        self.threshold = minutes * 60.0
        self.name = f"timeout:{minutes:g}"

    def decide(self, view, state=None):
        return timeout_decide(view, self.threshold)

    def next_check(self, view):
        idle = switchable_off(view)
        if not idle.any():
            return None
        due = view.idle_since[idle] + self.threshold
        due = due[due > view.clock]
        return float(due.min()) if due.size else None


class RandomPolicy(Policy):
    def __init__(self, p_off: float, seed=0):
        if not 0.0 <= p_off <= 1.0:
            raise ValueError("p_off must lie in [0, 1]")
        self.p_off = p_off
        self.seed = seed
        self.name = f"random:{p_off:g}"
        self._rng = stream(seed, "random-policy")

    def reset(self, state):
        self._rng = stream(self.seed, "random-policy")

    def decide(self, view, state=None):
        return random_decide(view, self.p_off, self._rng)


class AgentPolicy(Policy):
    def __init__(self, params, mode: str = "greedy", seed=0, feature_config=None, name="agent"):
        self.params = params
        self.mode = mode
        self.seed = seed
        self.feature_config = feature_config
        self.name = name
        self._rng = stream(seed, "agent-policy")

    def reset(self, state):
        self._rng = stream(self.seed, "agent-policy")

    def decide(self, view, state):
        from .rlenv import observe

        feats = observe(state, config=self.feature_config)
        return agent_decide(view, feats, self.params, self.mode, self._rng)


def parse_policy(spec: str, seed=0, feature_config=None) -> Policy:
    """Build a policy from ``always-on``, ``timeout:<minutes>``, ``random:<p_off>`` or ``agent:<path>``."""
    kind, _, arg = spec.partition(":")
    if kind == "always-on" and not arg:
        return AlwaysOn()
    if kind == "timeout":
        return Timeout(float(arg))
    if kind == "random":
        return RandomPolicy(float(arg) if arg else 0.5, seed=seed)
    if kind == "agent":
        from .agent.checkpoint import load_checkpoint

        mode = "greedy"
        for suffix in (":greedy", ":sample"):
            if arg.endswith(suffix) and not Path(arg).exists():
                arg, mode = arg[: -len(suffix)], suffix[1:]
        path = Path(arg)
        if not path.is_file():
            raise FileNotFoundError(f"agent checkpoint not found: {path}")
        ckpt = load_checkpoint(path)
        return AgentPolicy(ckpt.params, mode=mode, seed=seed, feature_config=feature_config, name=f"agent:{arg}")
    raise ValueError(f"unknown policy {spec!r}")
