"""Single runs, parameter sweeps and curriculum comparisons, with CSV/JSON artifacts."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .metrics import MetricsReport, compute_metrics
from .policy import AgentPolicy, parse_policy
from .simcore import PowerParams, SimConfig, SimulationResult, Snapshot, run_episode
from .workload import WorkloadTrace, read_swf

log = logging.getLogger(__name__)

METRICS_SCHEMA = "psmp-metrics"
METRICS_VERSION = 1
JOB_FIELDS = ("job_id", "submit_time", "start_time", "finish_time", "runtime", "requested_nodes", "wait")
SWEEP_FIELDS = ("axis", "value", "policy", "wasted_energy", "total_energy", "avg_wait", "job_filling_rate",
                "shutdown_count", "truncated", "error")
CURRICULUM_FIELDS = ("model", "order", "seed", "total_energy", "wasted_energy", "avg_wait", "job_filling_rate",
                     "truncated", "failsafe_triggers")
AXES = ("timeout_minutes", "switch_times", "power_levels", "node_counts", "curriculum")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    trace: str
    policy: str = "always-on"
    node_count: int = 128
    power: PowerParams = field(default_factory=PowerParams)
    dt: float = 1800.0
    wakeup_mode: str | None = None  # None -> the policy's own mode
    seed: int = 0
    backfill: bool = True
    failsafe: bool = False
    failsafe_wait: float = 86400.0
    out_dir: str | None = None

    def validate(self):
        if not Path(self.trace).is_file():
            raise ConfigError(f"trace file not found: {self.trace}")
        if self.node_count <= 0:
            raise ConfigError("node_count must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.wakeup_mode not in (None, "reactive", "agent"):
            raise ConfigError(f"unknown wakeup mode {self.wakeup_mode!r}")
        try:
            pol = parse_policy(self.policy, seed=self.seed)
        except (ValueError, FileNotFoundError) as exc:
            raise ConfigError(str(exc)) from exc
        return pol

    def sim_config(self, policy) -> SimConfig:
        return SimConfig(node_count=self.node_count, power=self.power, dt=self.dt,
                         wakeup_mode=self.wakeup_mode or policy.wakeup_mode, backfill=self.backfill,
                         failsafe=self.failsafe, failsafe_wait=self.failsafe_wait)

    def as_dict(self) -> dict:
        return asdict(self)


def _num(x):
    return "" if x is None else repr(x) if isinstance(x, float) else x


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def write_steps_csv(path, result: SimulationResult):
    write_csv(path, Snapshot.FIELDS, (s.row() for s in result.snapshots))


def write_jobs_csv(path, result: SimulationResult):
    rows = sorted(result.completed, key=lambda c: c.job.id)
    write_csv(path, JOB_FIELDS, ((c.job.id, c.job.submit_time, c.start_time, c.finish_time, c.job.runtime,
                                  c.job.requested_nodes, c.wait) for c in rows))


def simulate(trace: WorkloadTrace, config: RunConfig, policy=None) -> SimulationResult:
    policy = policy or config.validate()
    if trace.max_nodes() > config.node_count:
        raise ConfigError(f"trace needs {trace.max_nodes()} nodes but the cluster has {config.node_count}")
    return run_episode(trace, policy, config.sim_config(policy))


def run_simulation(config: RunConfig, effective: dict | None = None) -> tuple[MetricsReport, SimulationResult]:
    """Run one episode; with ``out_dir`` set, write metrics.json, steps.csv and jobs.csv there."""
    policy = config.validate()
    trace = read_swf(config.trace)
    result = simulate(trace, config, policy)
    report = compute_metrics(result)
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(out / "metrics.json", {
            "schema": METRICS_SCHEMA, "version": METRICS_VERSION,
            "config": effective if effective is not None else config.as_dict(),
            "policy": policy.name, "metrics": report.as_dict(),
        })
        write_steps_csv(out / "steps.csv", result)
        write_jobs_csv(out / "jobs.csv", result)
    return report, result


# ---------------------------------------------------------------- sweeps

def parse_pair(text: str) -> tuple[float, float]:
    a, sep, b = str(text).partition("/")
    if not sep:
        raise ConfigError(f"expected a pair like 30/45, got {text!r}")
    return float(a), float(b)


@dataclass
class SweepSpec:
    base: RunConfig
    axis: str
    values: list
    policies: list[str] = field(default_factory=list)  # empty -> [base.policy]

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")

    def entries(self) -> list[tuple[str, RunConfig]]:
        """(value label, config) pairs in row order: values outer, policies inner."""
        out = []
        for v in self.values:
            if self.axis == "timeout_minutes":
                out.append((str(v), replace(self.base, policy=f"timeout:{float(v):g}")))
                continue
            if self.axis == "curriculum":
                out.append((str(v), replace(self.base, policy=f"agent:{v}")))
                continue
            for pol in self.policies or [self.base.policy]:
                cfg = replace(self.base, policy=pol)
                if self.axis == "switch_times":
                    off, on = parse_pair(v)
                    cfg.power = replace(cfg.power, t_switch_off=off * 60.0, t_switch_on=on * 60.0)
                elif self.axis == "power_levels":
                    sleep, active = parse_pair(v)
                    cfg.power = replace(cfg.power, p_sleep=sleep, p_active=active, p_switch_on=active,
                                        p_switch_off=sleep)
                elif self.axis == "node_counts":
                    cfg.node_count = int(v)
                out.append((str(v), cfg))
        return out


def _sweep_row(axis: str, label: str, cfg: RunConfig) -> tuple:
    try:
        policy = cfg.validate()
        rep = compute_metrics(simulate(read_swf(cfg.trace), cfg, policy))
        return (axis, label, policy.name, rep.wasted_energy, rep.total_energy, rep.avg_wait, rep.job_filling_rate,
                rep.shutdown_count, rep.truncated, "")
    except Exception as exc:  # a failed entry becomes a row; the sweep goes on
        log.warning("sweep entry %s=%s (%s) failed: %s", axis, label, cfg.policy, exc)
        return (axis, label, cfg.policy, None, None, None, None, None, None, f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, out_csv=None, workers: int = 1) -> list[tuple]:
    entries = spec.entries()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_row, [spec.axis] * len(entries), *zip(*entries)))
    else:
        rows = [_sweep_row(spec.axis, label, cfg) for label, cfg in entries]
    if out_csv is not None:
        write_csv(out_csv, SWEEP_FIELDS, rows)
    return rows


# ------------------------------------------------------- curriculum study

def evaluate_agent(params, trace: WorkloadTrace, env_config, mode="greedy", seed=0) -> MetricsReport:
    sim = SimConfig(node_count=env_config.node_count, power=env_config.power, dt=env_config.dt,
                    wakeup_mode="agent", backfill=env_config.backfill, failsafe=env_config.failsafe,
                    failsafe_wait=env_config.failsafe_wait)
    pol = AgentPolicy(params, mode=mode, seed=seed, feature_config=env_config.features)
    return compute_metrics(run_episode(trace, pol, sim))


def compare_curricula(traces: dict[str, WorkloadTrace], env_config, train_config, eval_trace: WorkloadTrace,
                      orders=None, include_control: bool = True, out_csv=None, checkpoint_dir=None) -> list[dict]:
    """Train one agent per ordering (plus a real-only control) and evaluate each greedily.

    The control trains on the real trace for as many epochs as a three-stage
    curriculum spends in total.
    """
    from .agent.training import CURRICULA, CurriculumPlan, train_curriculum

    orders = list(CURRICULA if orders is None else orders)
    jobs = [("-".join(o), tuple(o), train_config) for o in orders]
    if include_control:
        jobs.append(("no-CL", ("real",), replace(train_config, epochs_per_stage=3 * train_config.epochs_per_stage)))
    rows = []
    for name, order, tc in jobs:
        ck = None if checkpoint_dir is None else Path(checkpoint_dir) / name
        if ck is not None:
            ck.mkdir(parents=True, exist_ok=True)
        params, _ = train_curriculum(CurriculumPlan.from_order(order, traces), env_config, tc, checkpoint_dir=ck)
        rep = evaluate_agent(params, eval_trace, env_config, seed=tc.seed)
        rows.append({"model": name, "order": "-".join(order), "seed": tc.seed, "total_energy": rep.total_energy,
                     "wasted_energy": rep.wasted_energy, "avg_wait": rep.avg_wait,
                     "job_filling_rate": rep.job_filling_rate, "truncated": rep.truncated,
                     "failsafe_triggers": rep.failsafe_triggers})
        log.info("curriculum %s: wasted %.4g J", name, rep.wasted_energy)
    if out_csv is not None:
        write_csv(out_csv, CURRICULUM_FIELDS, ([r[f] for f in CURRICULUM_FIELDS] for r in rows))
    return rows
