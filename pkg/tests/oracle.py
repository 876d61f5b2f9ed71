"""Brute-force reference simulator stepping one simulated second at a time.

Written separately from the event-driven engine and deliberately naive: every
second it re-runs the scheduler and the power rules, then charges each node one
second of power. Only integer submit times, runtimes and transition times are
supported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

A, S, ON, OFF = "A", "S", "ON", "OFF"


@dataclass
class OJob:
    id: int
    submit: int
    runtime: int
    nodes: int
    walltime: int | None = None

    def __post_init__(self):
        if self.walltime is None:
            self.walltime = self.runtime


@dataclass
class OResult:
    total: float = 0.0
    wasted: float = 0.0
    compute: float = 0.0
    sleep: float = 0.0
    waits: dict = field(default_factory=dict)
    end: int = 0
    shutdowns: int = 0


def brute_force(n_nodes, jobs, power, t_on, t_off, policy=("always-on",), limit=10**6) -> OResult:
    """policy: ("always-on",) | ("timeout", seconds) | ("script", dt, {step: [0/1/None per node]}).

    The first two wake sleeping nodes for the queue head on their own; under a
    script only the script switches nodes on.
    """
    p1, p2, p3, p4 = power
    state = [A] * n_nodes
    job_on = [None] * n_nodes
    idle_from = [0] * n_nodes
    until = [None] * n_nodes
    queue, running = [], {}  # running: id -> (job, start, nodes)
    res = OResult()
    pending = sorted(jobs, key=lambda j: (j.submit, j.id))
    reactive = policy[0] != "script"

    def free_nodes():
        return [m for m in range(n_nodes) if state[m] == A and job_on[m] is None]

    def start(job, t, nodes):
        for m in nodes:
            job_on[m] = job.id
        running[job.id] = (job, t, nodes)
        res.waits[job.id] = t - job.submit

    def schedule(t):
        free = free_nodes()
        while queue and queue[0].nodes <= len(free):
            job = queue.pop(0)
            start(job, t, free[: job.nodes])
            free = free[job.nodes:]
        if not queue:
            return set()
        head = queue[0]
        if reactive:
            short = head.nodes - len(free) - sum(1 for m in range(n_nodes) if state[m] == ON)
            for m in [m for m in range(n_nodes) if state[m] == S][: max(short, 0)]:
                state[m], until[m] = ON, t + t_on
        # EASY reservation, counting only releases already under way
        rel = [(st + job.walltime, len(nodes)) for job, st, nodes in running.values()]
        rel += [(until[m], 1) for m in range(n_nodes) if state[m] == ON]
        shadow, extra = float("inf"), 0
        for when in sorted(w for w, _ in rel):
            have = len(free) + sum(n for w, n in rel if w <= when)
            if have >= head.nodes:
                shadow, extra = when, have - head.nodes
                break
        waiting = []
        for job in queue[1:]:
            fits = job.nodes <= len(free)
            if fits and t + job.walltime <= shadow:
                start(job, t, free[: job.nodes])
                free = free[job.nodes:]
            elif fits and job.nodes <= extra:
                extra -= job.nodes
                start(job, t, free[: job.nodes])
                free = free[job.nodes:]
            else:
                waiting.append(job)
        queue[1:] = waiting
        return set(free[: head.nodes])

    for t in range(limit):
        # finishes, then completed transitions, then arrivals
        for jid in sorted(running):
            job, st, nodes = running[jid]
            if st + job.runtime == t:
                del running[jid]
                for m in nodes:
                    job_on[m] = None
                    idle_from[m] = t
        for m in range(n_nodes):
            if until[m] == t:
                until[m] = None
                if state[m] == ON:
                    state[m] = A
                    idle_from[m] = t
                else:
                    state[m] = S
        while pending and pending[0].submit == t:
            queue.append(pending.pop(0))

        reserved = schedule(t)
        done = not pending and not queue and not running and all(u is None for u in until)
        if policy[0] == "timeout":
            for m in free_nodes():
                if m not in reserved and t - idle_from[m] >= policy[1]:
                    state[m], until[m] = OFF, t + t_off
                    res.shutdowns += 1
        elif policy[0] == "script":
            dt, script = policy[1], policy[2]
            if t % dt == 0 and t // dt in script and not done:  # a finished run is not consulted
                for m, want in enumerate(script[t // dt]):
                    if want == 0 and state[m] == A and job_on[m] is None and m not in reserved:
                        state[m], until[m] = OFF, t + t_off
                        res.shutdowns += 1
                    elif want == 1 and state[m] == S:
                        state[m], until[m] = ON, t + t_on
                schedule(t)

        if not pending and not queue and not running and all(u is None for u in until):
            res.end = t
            return res

        # charge one second
        for m in range(n_nodes):
            if state[m] == A:
                res.total += p1
                if job_on[m] is None:
                    res.wasted += p1
                else:
                    res.compute += 1
            elif state[m] == S:
                res.total += p2
                res.sleep += 1
            elif state[m] == ON:
                res.total += p3
                res.wasted += p3
            else:
                res.total += p4
                res.wasted += p4
    raise RuntimeError("brute-force simulation did not finish")
