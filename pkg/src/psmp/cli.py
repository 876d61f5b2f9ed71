"""Command-line entry point.

Every flag can also come from an INI file passed with ``--config``: keys in the
``[common]`` section apply to all subcommands, keys in a section named after
the subcommand (``[simulate]``, ``[sweep]``...) apply to that one. Flags on the
command line win. The effective configuration is written next to every output.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import asdict, replace
from datetime import datetime
from pathlib import Path

from . import experiments as ex
from .metrics import METRIC_FIELDS, MetricsReport, normalize_radar
from .simcore import PowerParams
from .workload import (dataset_stats, extract_patterns, generate_sampled, generate_synthetic, read_swf, split_trace,
                       write_swf)

log = logging.getLogger("psmp")

DEFAULT_TIMEOUTS = "5,10,15,20,25,30,35,40,45,50,55,60"
BOOL_KEYS = ("failsafe", "no_backfill", "verbose")


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def effective_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def write_sidecar(path, args):
    """Record the effective configuration as ``<path>.config.ini``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp[args.command] = {k: "" if v is None else str(v) for k, v in effective_config(args).items()}
    with open(f"{path}.config.ini", "w") as fh:
        cp.write(fh)


def _split(text) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


# ------------------------------------------------------------- arguments

def _add_power(p):
    d = PowerParams()
    p.add_argument("--p-active", type=float, default=d.p_active, help="watts while computing or idle")
    p.add_argument("--p-sleep", type=float, default=d.p_sleep)
    p.add_argument("--p-switch-on", type=float, default=d.p_switch_on)
    p.add_argument("--p-switch-off", type=float, default=d.p_switch_off)
    p.add_argument("--t-switch-on", type=float, default=d.t_switch_on, help="seconds")
    p.add_argument("--t-switch-off", type=float, default=d.t_switch_off, help="seconds")


def _add_cluster(p):
    p.add_argument("--nodes", type=int, default=128)
    p.add_argument("--dt", type=float, default=1800.0, help="action step in seconds")
    p.add_argument("--failsafe", action="store_true", help="wake nodes for a head job waiting over a day (agent mode)")
    p.add_argument("--failsafe-wait", type=float, default=86400.0)
    p.add_argument("--no-backfill", action="store_true")
    _add_power(p)


def _power(args) -> PowerParams:
    return PowerParams(args.p_active, args.p_sleep, args.p_switch_on, args.p_switch_off, args.t_switch_on,
                       args.t_switch_off)


def _run_config(args, policy=None) -> ex.RunConfig:
    return ex.RunConfig(trace=args.trace, policy=policy or args.policy, node_count=args.nodes, power=_power(args),
                        dt=args.dt, wakeup_mode=args.wakeup_mode, seed=args.seed, backfill=not args.no_backfill,
                        failsafe=args.failsafe, failsafe_wait=args.failsafe_wait)


def _env_config(args):
    from .rlenv import EnvConfig

    return EnvConfig(node_count=args.nodes, power=_power(args), dt=args.dt, alpha=args.alpha, beta=1.0 - args.alpha,
                     failsafe=args.failsafe, failsafe_wait=args.failsafe_wait, backfill=not args.no_backfill)


def _train_config(args):
    from .agent.a2c import TrainConfig

    return TrainConfig(learning_rate=args.lr, gamma=args.gamma, grad_clip_norm=args.clip, rollout_length=args.rollout,
                       dt=args.dt, alpha=args.alpha, beta=1.0 - args.alpha, epochs_per_stage=args.epochs,
                       seed=args.seed, optimizer=args.optimizer, segment_days=args.segment_days)


def _add_training(p):
    p.add_argument("--real", required=True, help="real (training split) SWF trace")
    p.add_argument("--sampled", help="sampled SWF trace")
    p.add_argument("--synthetic", help="synthetic SWF trace")
    p.add_argument("--epochs", type=int, default=10, help="epochs per curriculum stage")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--clip", type=float, default=2.0)
    p.add_argument("--rollout", type=int, default=64)
    p.add_argument("--alpha", type=float, default=0.5, help="energy weight; the wait weight is 1 - alpha")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--segment-days", type=float, default=7.0)
    _add_cluster(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psmp", description="HPC power-state management: traces, simulation, sweeps and agent training.")
    ap.add_argument("--config", help="INI file with [common] and per-command sections")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sampled", help="resample jobs with exponential inter-arrival times")
    p.add_argument("--source", required=True)
    p.add_argument("--train-ratio", type=float, default=None, help="sample only from the first part of the source")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_sampled)

    p = sub.add_parser("gen-synthetic", help="generate a trace from the source's calendar patterns")
    p.add_argument("--source", required=True)
    p.add_argument("--train-ratio", type=float, default=None)
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--start-date", default=None, help="YYYY-MM-DD; default: the source's start")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("validate-dataset", help="fidelity statistics of generated traces")
    p.add_argument("--source", required=True)
    p.add_argument("--sampled")
    p.add_argument("--synthetic")
    p.add_argument("--out", required=True, help="JSON output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run one policy over a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", default="always-on", help="always-on | timeout:<min> | random:<p> | agent:<ckpt>")
    p.add_argument("--wakeup-mode", choices=("reactive", "agent"), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_cluster(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one row per (axis value, policy)")
    p.add_argument("--trace", required=True)
    p.add_argument("--axis", choices=ex.AXES, default="timeout_minutes")
    p.add_argument("--values", default=None, help=f"comma list; timeout default {DEFAULT_TIMEOUTS}")
    p.add_argument("--policies", default="always-on", help="comma list (ignored for timeout/curriculum axes)")
    p.add_argument("--policy", default="always-on", help=argparse.SUPPRESS)
    p.add_argument("--wakeup-mode", choices=("reactive", "agent"), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output")
    _add_cluster(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="train an agent over a curriculum")
    _add_training(p)
    p.add_argument("--order", default="sampled,real,synthetic", help="comma list of stage labels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", default=None, help="stage checkpoint to resume from")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare-curricula", help="train the six orderings plus a real-only control")
    _add_training(p)
    p.add_argument("--eval-trace", required=True)
    p.add_argument("--orders", default=None, help="semicolon list of orderings; default all six")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="summary and radar normalization of metrics files")
    p.add_argument("metrics", nargs="+", help="metrics.json files")
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=cmd_report)
    ap.subcommands = sub.choices
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Use file values as subcommand defaults, then parse the command line."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("-v", "--verbose", action="store_true")
    known, rest = pre.parse_known_args(argv)
    command = next((t for t in rest if not t.startswith("-")), None)
    if known.config and command in ap.subcommands:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(known.config):
            ap.error(f"cannot read config file {known.config}")
        sp = ap.subcommands[command]
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for section in ("common", command):
            if not cp.has_section(section):
                continue
            for key in cp.options(section):
                dest = key.replace("-", "_")
                if dest not in actions:
                    continue
                defaults[dest] = cp.getboolean(section, key) if dest in BOOL_KEYS else cp.get(section, key)
                actions[dest].required = False
        sp.set_defaults(**defaults)
    return ap.parse_args(argv)


# -------------------------------------------------------------- commands

def _source(args):
    trace = read_swf(args.source)
    if args.train_ratio is not None:
        trace, _ = split_trace(trace, args.train_ratio)
    return trace


def cmd_gen_sampled(args):
    out = generate_sampled(_source(args), count=args.count, seed=args.seed)
    Path(args.out).write_text(write_swf(out))
    write_sidecar(args.out, args)
    log.info("wrote %d jobs to %s", len(out.jobs), args.out)


def cmd_gen_synthetic(args):
    src = _source(args)
    start = datetime.fromisoformat(args.start_date) if args.start_date else src.origin_timestamp
    out = generate_synthetic(extract_patterns(src), start, args.days, seed=args.seed)
    Path(args.out).write_text(write_swf(out))
    write_sidecar(args.out, args)
    log.info("wrote %d jobs to %s", len(out.jobs), args.out)


def cmd_validate(args):
    src = read_swf(args.source)
    sampled = read_swf(args.sampled, "sampled") if args.sampled else None
    synthetic = read_swf(args.synthetic, "synthetic") if args.synthetic else None
    stats = dataset_stats(src, sampled, synthetic)
    ex.dump_json(args.out, _clean({"config": effective_config(args), "stats": asdict(stats)}))


def cmd_simulate(args):
    rep, _ = ex.run_simulation(replace(_run_config(args), out_dir=args.out_dir), effective=effective_config(args))
    print(f"wasted_energy={rep.wasted_energy!r} total_energy={rep.total_energy!r} avg_wait={rep.avg_wait!r}")


def cmd_sweep(args):
    values = _split(args.values) if args.values is not None else (
        _split(DEFAULT_TIMEOUTS) if args.axis == "timeout_minutes" else [])
    spec = ex.SweepSpec(_run_config(args), args.axis, values, _split(args.policies))
    rows = ex.run_sweep(spec, args.out, workers=args.workers)
    write_sidecar(args.out, args)
    print(f"{len(rows)} rows -> {args.out}")


def _traces(args) -> dict:
    traces = {"real": read_swf(args.real, "real")}
    if args.sampled:
        traces["sampled"] = read_swf(args.sampled, "sampled")
    if args.synthetic:
        traces["synthetic"] = read_swf(args.synthetic, "synthetic")
    return traces


def cmd_train(args):
    from .agent.training import CurriculumPlan, train_curriculum

    traces = _traces(args)
    order = _split(args.order)
    missing = [lab for lab in order if lab not in traces]
    if missing:
        raise ex.ConfigError(f"no trace given for stage(s) {missing}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = CurriculumPlan.from_order(order, traces)
    _, logs = train_curriculum(plan, _env_config(args), _train_config(args), checkpoint_dir=out,
                               resume_from=args.resume)
    ex.dump_json(out / "training_log.json", _clean({"config": effective_config(args), "stages": logs}))
    rows = [[s["stage"], s["label"]] + [e[k] for k in ("epoch", "mean_reward", "actor_loss", "critic_loss",
                                                      "grad_norm", "wasted_energy", "avg_wait", "updates")]
            for s in logs for e in s["epochs"]]
    ex.write_csv(out / "training_history.csv", ("stage", "label", "epoch", "mean_reward", "actor_loss",
                                                "critic_loss", "grad_norm", "wasted_energy", "avg_wait", "updates"),
                 rows)
    print(f"{len(plan.stages)} stage(s) trained -> {out}")


def cmd_compare(args):
    traces = _traces(args)
    orders = None if args.orders is None else [tuple(_split(o)) for o in args.orders.split(";")]
    rows = ex.compare_curricula(traces, _env_config(args), _train_config(args), read_swf(args.eval_trace),
                                orders=orders, out_csv=args.out)
    write_sidecar(args.out, args)
    print(f"{len(rows)} models -> {args.out}")


def cmd_report(args):
    import json

    reports, names = [], []
    for path in args.metrics:
        doc = json.loads(Path(path).read_text())
        if doc.get("schema") != ex.METRICS_SCHEMA:
            raise ex.ConfigError(f"{path} is not a metrics file")
        reports.append(MetricsReport(**doc["metrics"]))
        names.append(doc.get("policy", path))
    header = ("source", "policy") + METRIC_FIELDS
    rows = [[p, n] + [getattr(r, f) for f in METRIC_FIELDS] for p, n, r in zip(args.metrics, names, reports)]
    radar = None
    if len(reports) >= 2:
        try:
            radar = normalize_radar(reports)
        except ValueError as exc:
            log.warning("radar normalization skipped: %s", exc)
    if radar is not None:
        header += tuple(f"radar_{k}" for k in radar[0])
        rows = [r + list(v.values()) for r, v in zip(rows, radar)]
    ex.write_csv(args.out, header, rows)
    print(f"{len(rows)} reports -> {args.out}")


def main(argv=None) -> int:
    ap = build_parser()
    args = _apply_config_file(ap, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ex.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"psmp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
