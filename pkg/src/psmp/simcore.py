"""Discrete-event cluster simulator with four-state node power management.

Nodes are Active, Sleep, SwitchingOn or SwitchingOff; Active nodes are either
computing or idle. Jobs are dispatched FCFS with EASY backfilling. Energy is
integrated exactly between events because power only changes at events.

Tie-break at equal timestamps: job finishes, then transition completions, then
submissions, then timers; one settle pass (scheduling, wakeup, continuous
policy) follows each distinct event time.
"""
from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels
from ._kernels import ACTIVE, SLEEP, SWITCHING_OFF, SWITCHING_ON
from .workload import JobSpec, WorkloadTrace

STATE_NAMES = {ACTIVE: "active", SLEEP: "sleep", SWITCHING_ON: "switching_on", SWITCHING_OFF: "switching_off"}


class Intent(IntEnum):
    OFF = 0
    ON = 1
    HOLD = 2


@dataclass(frozen=True)
class PowerParams:
    p_active: float = 190.0
    p_sleep: float = 9.0
    p_switch_on: float = 190.0
    p_switch_off: float = 9.0
    t_switch_on: float = 2700.0
    t_switch_off: float = 1800.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")

    def vector(self) -> np.ndarray:
        return np.array([self.p_active, self.p_sleep, self.p_switch_on, self.p_switch_off])


@dataclass
class SimConfig:
    node_count: int = 128
    power: PowerParams = field(default_factory=PowerParams)
    dt: float = 1800.0
    wakeup_mode: str = "reactive"  # "reactive" | "agent"
    horizon_cap: float | None = None  # absolute time; None -> last submit + 30 days
    backfill: bool = True
    failsafe: bool = False
    failsafe_wait: float = 86400.0

    def __post_init__(self):
        if self.wakeup_mode not in ("reactive", "agent"):
            raise ValueError(f"unknown wakeup_mode {self.wakeup_mode!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class RunningJob:
    job: JobSpec
    start_time: float
    finish_time: float
    node_ids: tuple[int, ...]


@dataclass(frozen=True)
class CompletedJob:
    job: JobSpec
    start_time: float
    finish_time: float

    @property
    def wait(self) -> float:
        return self.start_time - self.job.submit_time


@dataclass
class AppliedReport:
    applied_on: list[int]
    applied_off: list[int]
    masked: list[int]
    noop: list[int]


@dataclass(frozen=True)
class Snapshot:
    step: int
    time: float
    total_energy: float
    wasted_energy: float
    compute_time: float
    idle_time: float
    sleep_time: float
    switch_time: float
    queue_seconds: float
    touched_jobs: int  # jobs with positive queue time since the previous snapshot
    queue_length: int
    running_jobs: int
    completed_jobs: int
    n_active_idle: int
    n_computing: int
    n_sleep: int
    n_switching_on: int
    n_switching_off: int
    shutdowns: int

    FIELDS = ("step", "time", "total_energy", "wasted_energy", "compute_time", "idle_time", "sleep_time",
              "switch_time", "queue_seconds", "touched_jobs", "queue_length", "running_jobs", "completed_jobs",
              "n_active_idle", "n_computing", "n_sleep", "n_switching_on", "n_switching_off", "shutdowns")

    def row(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass
class SimulationResult:
    completed: list[CompletedJob]
    makespan: float
    node_count: int
    power: PowerParams
    total_energy: float
    wasted_energy: float
    compute_time: float
    idle_time: float
    sleep_time: float
    switch_time: float
    shutdowns: int
    failsafe_triggers: int
    truncated: bool
    snapshots: list[Snapshot]
    pending_jobs: int = 0


class ClusterState:
    """Mutable simulation state; one instance per episode."""

    def __init__(self, node_count: int, power: PowerParams | None = None, config: SimConfig | None = None):
        if node_count < 1:
            raise ValueError("node_count must be >= 1")
        self.M = int(node_count)
        self.power = power or PowerParams()
        self.config = config or SimConfig(node_count=node_count, power=self.power)
        self._powers = self.power.vector()
        self.clock = 0.0
        M = self.M
        self.pstate = np.full(M, ACTIVE, dtype=np.int8)
        self.computing = np.zeros(M, dtype=np.bool_)
        self.reserved = np.zeros(M, dtype=np.bool_)
        self.idle_since = np.zeros(M)
        self.complete_at = np.full(M, np.nan)
        self.job_of = np.full(M, -1, dtype=np.int64)
        self.total_e = np.zeros(M)
        self.wasted_e = np.zeros(M)
        self.compute_t = np.zeros(M)
        self.idle_t = np.zeros(M)
        self.sleep_t = np.zeros(M)
        self.switch_t = np.zeros(M)
        self.shutdowns = 0
        self.failsafe_triggers = 0
        self.queue: list[JobSpec] = []
        self.running: dict[int, RunningJob] = {}
        self.completed: list[CompletedJob] = []
        self.queue_seconds = 0.0
        self.touched: set[int] = set()
        self._finish_heap: list = []
        self._trans_heap: list = []
        self._timers: list = []
        self._timer_set: set = set()
        self._seq = 0
        self._pending: list[JobSpec] = []
        self._next_sub = 0
        self._sub_times = np.zeros(0)
        self.hook = None  # callable(state) -> optional next check time
        self.on_event = None  # callable(state, time) for instrumentation

    # ----------------------------------------------------------- workload
    def load(self, trace: WorkloadTrace):
        for j in trace.jobs:
            if j.requested_nodes > self.M:
                raise ValueError(f"job {j.id} requests {j.requested_nodes} nodes but the cluster has {self.M}")
            if j.requested_nodes < 1:
                raise ValueError(f"job {j.id} requests no nodes")
        self._pending = list(trace.jobs)
        self._next_sub = 0
        self._sub_times = trace.submit_times()

    def arrivals_between(self, lo: float, hi: float) -> int:
        """Submissions with lo < submit_time <= hi."""
        return bisect_right(self._sub_times, hi) - bisect_right(self._sub_times, lo)

    @property
    def all_submitted(self) -> bool:
        return self._next_sub >= len(self._pending)

    def finished(self) -> bool:
        return (self.all_submitted and not self.queue and not self.running
                and not np.any((self.pstate == SWITCHING_ON) | (self.pstate == SWITCHING_OFF)))

    # ---------------------------------------------------------- node views
    def idle_mask(self) -> np.ndarray:
        return (self.pstate == ACTIVE) & ~self.computing

    def counts(self) -> dict:
        idle = self.idle_mask()
        return {
            "active_idle": int(idle.sum()),
            "computing": int(self.computing.sum()),
            "sleep": int((self.pstate == SLEEP).sum()),
            "switching_on": int((self.pstate == SWITCHING_ON).sum()),
            "switching_off": int((self.pstate == SWITCHING_OFF).sum()),
        }

    # -------------------------------------------------------- power intents
    def apply_intents(self, intents) -> AppliedReport:
        intents = np.asarray(intents)
        if intents.shape != (self.M,):
            raise ValueError(f"expected {self.M} intents, got shape {intents.shape}")
        rep = AppliedReport([], [], [], [])
        p = self.power
        for m in range(self.M):
            it = int(intents[m])
            if it == Intent.HOLD:
                continue
            s = self.pstate[m]
            if s == SWITCHING_ON or s == SWITCHING_OFF:
                rep.masked.append(m)
            elif it == Intent.OFF:
                if s == SLEEP:
                    rep.noop.append(m)
                elif self.computing[m] or self.reserved[m]:
                    rep.masked.append(m)
                else:
                    self.pstate[m] = SWITCHING_OFF
                    self.idle_since[m] = np.nan
                    self._start_transition(m, self.clock + p.t_switch_off)
                    self.shutdowns += 1
                    rep.applied_off.append(m)
            elif it == Intent.ON:
                if s == SLEEP:
                    self.pstate[m] = SWITCHING_ON
                    self._start_transition(m, self.clock + p.t_switch_on)
                    rep.applied_on.append(m)
                else:
                    rep.noop.append(m)
            else:
                raise ValueError(f"unknown intent {it}")
        return rep

    def _start_transition(self, m: int, when: float):
        self.complete_at[m] = when
        self._seq += 1
        heapq.heappush(self._trans_heap, (when, self._seq, m))

    def add_timer(self, when: float):
        if when is not None and when > self.clock and math.isfinite(when) and when not in self._timer_set:
            self._timer_set.add(when)
            heapq.heappush(self._timers, when)

    # ------------------------------------------------------------ event loop
    def next_event_time(self) -> float:
        t = math.inf
        if self._finish_heap:
            t = self._finish_heap[0][0]
        if self._trans_heap:
            t = min(t, self._trans_heap[0][0])
        if not self.all_submitted:
            t = min(t, self._pending[self._next_sub].submit_time)
        if self._timers:
            t = min(t, self._timers[0])
        return t

    def _integrate(self, t: float):
        dt = t - self.clock
        if dt > 0:
            _kernels.integrate_nodes(self.pstate, self.computing, dt, self._powers, self.total_e, self.wasted_e,
                                     self.compute_t, self.idle_t, self.sleep_t, self.switch_t)
            if self.queue:
                self.queue_seconds += dt * len(self.queue)
                self.touched.update(j.id for j in self.queue)
        self.clock = t

    def advance_to(self, t: float, stop_when_done: bool = False) -> list[tuple]:
        """Process every event with time <= t, then integrate up to t.

        Returns the (time, kind, subject) events handled. With stop_when_done
        the clock stops at the event after which the simulation is finished.
        """
        if t < self.clock:
            raise ValueError(f"cannot move clock backwards ({t} < {self.clock})")
        emitted: list[tuple] = []
        while True:
            tau = self.next_event_time()
            if tau > t:
                break
            self._step_to(tau, emitted)
            if stop_when_done and self.finished():
                return emitted
        self._integrate(t)
        return emitted

    def _step_to(self, tau: float, emitted: list):
        self._integrate(tau)
        while self._finish_heap and self._finish_heap[0][0] <= tau:
            _, _, jid = heapq.heappop(self._finish_heap)
            rj = self.running.pop(jid)
            ids = list(rj.node_ids)
            self.computing[ids] = False
            self.job_of[ids] = -1
            self.idle_since[ids] = tau
            self.completed.append(CompletedJob(rj.job, rj.start_time, rj.finish_time))
            emitted.append((tau, "finish", jid))
        while self._trans_heap and self._trans_heap[0][0] <= tau:
            when, _, m = heapq.heappop(self._trans_heap)
            if self.complete_at[m] != when:
                continue
            self.complete_at[m] = np.nan
            if self.pstate[m] == SWITCHING_ON:
                self.pstate[m] = ACTIVE
                self.idle_since[m] = tau
                emitted.append((tau, "on", m))
            else:
                self.pstate[m] = SLEEP
                emitted.append((tau, "off", m))
        while not self.all_submitted and self._pending[self._next_sub].submit_time <= tau:
            job = self._pending[self._next_sub]
            self._next_sub += 1
            self.queue.append(job)
            emitted.append((tau, "submit", job.id))
        while self._timers and self._timers[0] <= tau:
            self._timer_set.discard(heapq.heappop(self._timers))
        self.settle()
        if self.on_event is not None:
            self.on_event(self, tau)

    def settle(self):
        self.schedule_pass()
        if self.hook is not None:
            self.add_timer(self.hook(self))

    def _wake_for_head(self):
        cfg = self.config
        if cfg.wakeup_mode == "reactive":
            self.apply_intents(self.reactive_wakeup())
        elif cfg.failsafe:
            due = self.queue[0].submit_time + cfg.failsafe_wait
            if self.clock >= due:
                rep = self.apply_intents(self.reactive_wakeup())
                if rep.applied_on:
                    self.failsafe_triggers += 1
            else:
                self.add_timer(due)

    # ------------------------------------------------------------ scheduling
    def _start(self, job: JobSpec, nodes: np.ndarray):
        ids = tuple(int(i) for i in nodes)
        self.computing[list(ids)] = True
        self.idle_since[list(ids)] = np.nan
        self.job_of[list(ids)] = job.id
        rj = RunningJob(job, self.clock, self.clock + job.runtime, ids)
        self.running[job.id] = rj
        self._seq += 1
        heapq.heappush(self._finish_heap, (rj.finish_time, self._seq, job.id))

    def _shadow(self, need: int, free: int) -> tuple[float, int]:
        """Earliest time `need` nodes are certain to be Active-idle, and the surplus then.

        Only committed releases count: running jobs (by walltime) and nodes
        already switching on. Returns (inf, 0) when those cannot cover `need`.
        """
        releases = [(rj.start_time + rj.job.walltime, len(rj.node_ids)) for rj in self.running.values()]
        son = np.flatnonzero(self.pstate == SWITCHING_ON)
        releases += [(float(self.complete_at[m]), 1) for m in son]
        releases.sort(key=lambda r: r[0])
        avail = free
        for i, (when, n) in enumerate(releases):
            avail += n
            if avail >= need:
                for later, n2 in releases[i + 1:]:
                    if later != when:
                        break
                    avail += n2
                return when, avail - need
        return math.inf, 0

    def schedule_pass(self) -> list[JobSpec]:
        """FCFS dispatch with EASY backfilling; marks the head's reserved idle nodes.

        Between the FCFS and backfill phases the head's wakeup (reactive mode or
        the agent-mode failsafe) runs, so the reservation sees woken nodes.
        """
        started = []
        free = np.flatnonzero(self.idle_mask())
        while self.queue and self.queue[0].requested_nodes <= free.size:
            job = self.queue.pop(0)
            self._start(job, free[: job.requested_nodes])
            free = free[job.requested_nodes:]
            started.append(job)
        self.reserved[:] = False
        if not self.queue:
            return started
        self._wake_for_head()
        head = self.queue[0]
        if self.config.backfill and len(self.queue) > 1 and free.size > 0:
            shadow, extra = self._shadow(head.requested_nodes, free.size)
            keep = [head]
            for job in self.queue[1:]:
                n = job.requested_nodes
                if n <= free.size:
                    if self.clock + job.walltime <= shadow:
                        pass
                    elif n <= extra:
                        extra -= n
                    else:
                        keep.append(job)
                        continue
                    self._start(job, free[:n])
                    free = free[n:]
                    started.append(job)
                else:
                    keep.append(job)
            self.queue = keep
        self.reserved[free[: head.requested_nodes]] = True
        return started

    def reactive_wakeup(self) -> np.ndarray:
        intents = np.full(self.M, Intent.HOLD, dtype=np.int8)
        if not self.queue:
            return intents
        need = self.queue[0].requested_nodes
        have = int(self.idle_mask().sum() + (self.pstate == SWITCHING_ON).sum())
        deficit = need - have
        if deficit > 0:
            sleeping = np.flatnonzero(self.pstate == SLEEP)[:deficit]
            intents[sleeping] = Intent.ON
        return intents

    # ------------------------------------------------------------- snapshots
    def snapshot(self, step: int) -> Snapshot:
        c = self.counts()
        snap = Snapshot(
            step=step, time=self.clock,
            total_energy=float(self.total_e.sum()), wasted_energy=float(self.wasted_e.sum()),
            compute_time=float(self.compute_t.sum()), idle_time=float(self.idle_t.sum()),
            sleep_time=float(self.sleep_t.sum()), switch_time=float(self.switch_t.sum()),
            queue_seconds=self.queue_seconds, touched_jobs=len(self.touched),
            queue_length=len(self.queue), running_jobs=len(self.running), completed_jobs=len(self.completed),
            n_active_idle=c["active_idle"], n_computing=c["computing"], n_sleep=c["sleep"],
            n_switching_on=c["switching_on"], n_switching_off=c["switching_off"], shutdowns=self.shutdowns,
        )
        self.touched = set()
        return snap


# ----------------------------------------------------------- functional API

def init_cluster(node_count: int, power: PowerParams | None = None, config: SimConfig | None = None) -> ClusterState:
    return ClusterState(node_count, power, config)


def apply_power_intents(state: ClusterState, intents) -> AppliedReport:
    return state.apply_intents(intents)


def advance_to(state: ClusterState, t: float) -> list[tuple]:
    return state.advance_to(t)


def schedule_pass(state: ClusterState) -> list[JobSpec]:
    return state.schedule_pass()


def reactive_wakeup(state: ClusterState) -> np.ndarray:
    return state.reactive_wakeup()


def default_horizon(trace: WorkloadTrace) -> float:
    last = trace.jobs[-1].submit_time if trace.jobs else 0.0
    return last + 30 * 86400.0


def build_result(state: ClusterState, snapshots: list[Snapshot], truncated: bool) -> SimulationResult:
    pending = len(state.queue) + len(state.running) + (len(state._pending) - state._next_sub)
    return SimulationResult(
        completed=list(state.completed), makespan=state.clock, node_count=state.M, power=state.power,
        total_energy=float(state.total_e.sum()), wasted_energy=float(state.wasted_e.sum()),
        compute_time=float(state.compute_t.sum()), idle_time=float(state.idle_t.sum()),
        sleep_time=float(state.sleep_t.sum()), switch_time=float(state.switch_t.sum()),
        shutdowns=state.shutdowns, failsafe_triggers=state.failsafe_triggers, truncated=truncated,
        snapshots=snapshots, pending_jobs=pending,
    )


def run_episode(trace: WorkloadTrace, policy, config: SimConfig, on_event=None) -> SimulationResult:
    """Simulate a whole trace under a power policy.

    Continuous policies (``policy.continuous``) are consulted after every event
    and may request timers; the others act only at multiples of ``config.dt``.
    """
    state = ClusterState(config.node_count, config.power, config)
    state.load(trace)
    state.on_event = on_event
    horizon = config.horizon_cap if config.horizon_cap is not None else default_horizon(trace)
    if policy is not None:
        policy.reset(state)
    continuous = policy is not None and getattr(policy, "continuous", False)
    if continuous:
        state.hook = lambda s: policy.act(s)
    snapshots = [state.snapshot(0)]
    if not trace.jobs:
        return build_result(state, snapshots, False)
    state.advance_to(0.0)
    state.settle()
    k = 0
    truncated = False
    while True:
        if state.finished():
            break
        if state.clock >= horizon:
            truncated = True
            break
        if policy is not None and not continuous and state.clock == k * config.dt:
            policy.act(state)
            state.settle()  # woken nodes can widen the backfill window
        target = min((k + 1) * config.dt, horizon)
        state.advance_to(target, stop_when_done=True)
        if state.clock == (k + 1) * config.dt:
            k += 1
            snapshots.append(state.snapshot(k))
    if snapshots[-1].time != state.clock:
        snapshots.append(state.snapshot(k + 1))
    return build_result(state, snapshots, truncated)
