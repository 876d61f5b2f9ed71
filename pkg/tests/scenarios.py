"""Hand-built small scenarios shared by the oracle comparison tests."""
from __future__ import annotations

from datetime import datetime

import numpy as np

from oracle import OJob, brute_force
from psmp.policy import AlwaysOn, Policy, PolicyDecision, Timeout
from psmp.simcore import Intent, PowerParams, SimConfig, run_episode
from psmp.workload import JobSpec, WorkloadTrace

POWER = (190.0, 9.0, 190.0, 9.0)


class ScriptPolicy(Policy):
    """Applies a fixed intent list at chosen action steps (None means hold)."""

    name = "script"

    def __init__(self, script):
        self.script = script

    def decide(self, view, state=None):
        k = int(round(view.clock / state.config.dt))
        row = self.script.get(k)
        m = view.pstate.size
        if row is None:
            return PolicyDecision(np.full(m, Intent.HOLD, dtype=np.int8))
        return PolicyDecision(np.array([Intent.HOLD if w is None else w for w in row], dtype=np.int8))


J = OJob
# (name, nodes, jobs, t_on, t_off, policy)
SCENARIOS = [
    ("always-on overlap", 2, [J(1, 0, 30, 1), J(2, 5, 20, 2), J(3, 6, 10, 1)], 7, 5, ("always-on",)),
    ("timeout gaps", 3, [J(1, 0, 12, 2), J(2, 40, 9, 3), J(3, 41, 5, 1), J(4, 90, 3, 1)], 7, 5, ("timeout", 10)),
    ("easy backfill before shadow", 4,
     [J(1, 0, 40, 3), J(2, 1, 10, 4), J(3, 2, 25, 1), J(4, 3, 60, 1), J(5, 4, 5, 1)], 6, 4, ("always-on",)),
    ("backfill on spare nodes", 4,
     [J(1, 0, 50, 3), J(2, 1, 10, 2), J(3, 2, 100, 1), J(4, 3, 20, 1)], 6, 4, ("timeout", 3)),
    ("arrival during switch-off", 3, [J(1, 0, 5, 3), J(2, 9, 8, 3), J(3, 30, 4, 2)], 8, 6, ("timeout", 2)),
    ("script off then on", 3, [J(1, 0, 15, 1), J(2, 25, 10, 2), J(3, 47, 6, 3)], 9, 5,
     ("script", 20, {0: [None, 0, 0], 1: [1, 1, 1], 2: [0, 0, 0], 3: [1, 1, 1]})),
    ("script mixed", 4, [J(1, 3, 30, 2), J(2, 4, 12, 4), J(3, 5, 6, 1), J(4, 50, 9, 1), J(5, 51, 3, 2)], 7, 3,
     ("script", 15, {0: [None, None, 0, 0], 1: [1, 1, 1, 1], 3: [0, 0, 0, 0], 4: [1, 1, 1, 1], 6: [1, 1, 1, 1]})),
    ("tie finish and submit", 2, [J(1, 0, 10, 2), J(2, 10, 10, 2), J(3, 20, 1, 1), J(4, 22, 2, 2)], 5, 5,
     ("timeout", 1)),
    ("overestimated walltimes", 4,
     [J(1, 0, 20, 2, 60), J(2, 1, 15, 4, 30), J(3, 2, 10, 2, 50), J(4, 3, 5, 1, 8), J(5, 4, 7, 1, 70)],
     6, 4, ("always-on",)),
    ("script with reservations", 4,
     [J(1, 0, 25, 3, 40), J(2, 2, 10, 4, 20), J(3, 3, 8, 1, 8), J(4, 4, 30, 1, 45), J(5, 60, 4, 2)], 6, 4,
     ("script", 10, {0: [None, None, None, 0], 2: [1, 1, 1, 1], 7: [0, 0, 0, 0], 8: [1, 1, 1, 1]})),
]


def run_engine(n, jobs, t_on, t_off, policy):
    trace = WorkloadTrace([JobSpec(j.id, j.submit, j.runtime, j.nodes, j.walltime) for j in jobs],
                          datetime(2000, 1, 1), "scenario")
    power = PowerParams(*POWER, t_switch_on=t_on, t_switch_off=t_off)
    if policy[0] == "script":
        pol, dt, mode = ScriptPolicy(policy[2]), policy[1], "agent"
    else:
        pol = AlwaysOn() if policy[0] == "always-on" else Timeout(policy[1] / 60.0)
        dt, mode = 1800.0, "reactive"
    return run_episode(trace, pol, SimConfig(node_count=n, power=power, dt=dt, wakeup_mode=mode))


def run_oracle(n, jobs, t_on, t_off, policy):
    return brute_force(n, jobs, POWER, t_on, t_off, policy)
