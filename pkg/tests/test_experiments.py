import json

import pytest

from miniworkload import bursty_trace
from psmp.experiments import (CURRICULUM_FIELDS, METRICS_SCHEMA, SWEEP_FIELDS, ConfigError, RunConfig, SweepSpec,
                              compare_curricula, parse_pair, run_simulation, run_sweep)
from psmp.metrics import compute_metrics
from psmp.policy import Timeout
from psmp.simcore import SimConfig, run_episode
from psmp.workload import write_swf

TIMEOUTS = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60]


@pytest.fixture(scope="module")
def swf(tmp_path_factory):
    path = tmp_path_factory.mktemp("tr") / "mini.swf"
    path.write_text(write_swf(bursty_trace(n_jobs=80, days=6, max_nodes=8, seed=5)))
    return str(path)


def base(swf, **kw):
    return RunConfig(trace=swf, **{"node_count": 8, **kw})


class TestRunConfig:
    def test_missing_trace(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig(trace=str(tmp_path / "none.swf")).validate()

    def test_missing_checkpoint_before_run(self, swf, tmp_path):
        out = tmp_path / "o"
        with pytest.raises(ConfigError, match="checkpoint"):
            run_simulation(base(swf, policy=f"agent:{tmp_path / 'x.ckpt'}", out_dir=str(out)))
        assert not out.exists()

    @pytest.mark.parametrize("kw", [{"node_count": 0}, {"dt": -1}, {"wakeup_mode": "eager"}, {"policy": "never"}])
    def test_bad_values(self, swf, kw):
        with pytest.raises(ConfigError):
            base(swf, **kw).validate()

    def test_cluster_too_small(self, swf):
        with pytest.raises(ConfigError, match="nodes"):
            run_simulation(RunConfig(trace=swf, node_count=2))


def test_run_simulation_artifacts(swf, tmp_path):
    rep, res = run_simulation(base(swf, policy="timeout:15", out_dir=str(tmp_path)))
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["schema"] == METRICS_SCHEMA and doc["version"] == 1 and doc["policy"] == "timeout:15"
    assert doc["metrics"]["wasted_energy"] == rep.wasted_energy
    steps = (tmp_path / "steps.csv").read_text().splitlines()
    jobs = (tmp_path / "jobs.csv").read_text().splitlines()
    assert len(steps) == len(res.snapshots) + 1 and len(jobs) == len(res.completed) + 1
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run_simulation(base(swf, policy="timeout:15", out_dir=str(tmp_path)))
    assert first == {p.name: p.read_bytes() for p in tmp_path.iterdir()}


def test_timeout_beats_always_on(swf):
    a, _ = run_simulation(base(swf))
    t, _ = run_simulation(base(swf, policy="timeout:15"))
    assert t.wasted_energy < a.wasted_energy


class TestSweep:
    def test_timeout_rows(self, swf, tmp_path):
        rows = run_sweep(SweepSpec(base(swf), "timeout_minutes", TIMEOUTS), tmp_path / "s.csv")
        assert len(rows) == 12 and [r[1] for r in rows] == [str(v) for v in TIMEOUTS]
        assert all(r[-1] == "" for r in rows)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_FIELDS) and len(lines) == 13

    def test_node_counts(self, swf):
        rows = run_sweep(SweepSpec(base(swf), "node_counts", [8, 10, 16], ["always-on", "timeout:15"]))
        assert len(rows) == 6 and [(r[1], r[2]) for r in rows] == [
            ("8", "always-on"), ("8", "timeout:15"), ("10", "always-on"), ("10", "timeout:15"),
            ("16", "always-on"), ("16", "timeout:15")]

    def test_pairs_are_applied(self, swf):
        spec = SweepSpec(base(swf), "switch_times", ["30/45", "10/15"], ["timeout:15"])
        cfgs = [c for _, c in spec.entries()]
        assert (cfgs[0].power.t_switch_off, cfgs[0].power.t_switch_on) == (1800, 2700)
        assert (cfgs[1].power.t_switch_off, cfgs[1].power.t_switch_on) == (600, 900)
        spec = SweepSpec(base(swf), "power_levels", ["90/190"], ["always-on"])
        p = spec.entries()[0][1].power
        assert (p.p_sleep, p.p_active) == (90, 190)

    def test_matches_direct_simulation(self, swf):
        from psmp.workload import read_swf
        rows = run_sweep(SweepSpec(base(swf), "timeout_minutes", [15]))
        direct = compute_metrics(run_episode(read_swf(swf), Timeout(15), SimConfig(node_count=8)))
        assert rows[0][3] == direct.wasted_energy

    def test_empty_values(self, swf):
        with pytest.raises(ConfigError):
            SweepSpec(base(swf), "timeout_minutes", [])
        with pytest.raises(ConfigError):
            SweepSpec(base(swf), "colour", [1])

    def test_failed_entry_becomes_row(self, swf):
        rows = run_sweep(SweepSpec(base(swf), "node_counts", [2, 8]))
        assert rows[0][-1].startswith("ConfigError") and rows[0][3] is None
        assert rows[1][-1] == "" and rows[1][3] > 0

    def test_workers_same_rows(self, swf):
        spec = SweepSpec(base(swf), "timeout_minutes", [5, 30, 60])
        assert run_sweep(spec, workers=2) == run_sweep(spec)

    def test_bad_pair(self):
        with pytest.raises(ConfigError):
            parse_pair("45")


def test_compare_curricula_shape(tmp_path, monkeypatch):
    import psmp.agent.training as tr
    from psmp.agent.a2c import TrainConfig
    from psmp.agent.network import NetConfig
    from psmp.rlenv import EnvConfig

    small = NetConfig(embed=8, heads=2, layers=1)
    orig = tr.init_params
    monkeypatch.setattr(tr, "init_params", lambda seed=0, config=None: orig(seed, small))
    traces = {lab: bursty_trace(n_jobs=12, days=2, max_nodes=4, seed=i, label=lab)
              for i, lab in enumerate(("sampled", "real", "synthetic"))}
    ev = bursty_trace(n_jobs=12, days=2, max_nodes=4, seed=9)
    tc = TrainConfig(epochs_per_stage=1, rollout_length=8, seed=2)
    env = EnvConfig(node_count=4, failsafe=True)
    rows = compare_curricula(traces, env, tc, ev, out_csv=tmp_path / "c.csv")
    assert len(rows) == 7 and rows[-1]["model"] == "no-CL"
    assert rows == compare_curricula(traces, env, tc, ev)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == ",".join(CURRICULUM_FIELDS)
