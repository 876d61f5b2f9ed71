"""Workload traces: SWF I/O, pattern extraction and dataset generation."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from . import _kernels
from .rng import stream

DEFAULT_WALLTIME_EDGES = (0.0, 60.0, 300.0, 900.0, 3600.0, 10800.0, 43200.0, math.inf)
SWF_FIELDS = 18
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class SWFParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class JobSpec:
    id: int
    submit_time: float
    runtime: float
    requested_nodes: int
    walltime: float | None = None

    def __post_init__(self):
        if self.walltime is None:
            object.__setattr__(self, "walltime", self.runtime)


@dataclass
class WorkloadTrace:
    jobs: list[JobSpec]
    origin_timestamp: datetime | None = None
    label: str = "real"
    dropped: int = 0

    def __post_init__(self):
        subs = [j.submit_time for j in self.jobs]
        if any(b < a for a, b in zip(subs, subs[1:])):
            raise ValueError("jobs must be sorted by submit_time")
        if len({j.id for j in self.jobs}) != len(self.jobs):
            raise ValueError("job ids must be unique")

    def __len__(self):
        return len(self.jobs)

    def submit_times(self) -> np.ndarray:
        return np.array([j.submit_time for j in self.jobs], dtype=np.float64)

    def max_nodes(self) -> int:
        return max((j.requested_nodes for j in self.jobs), default=0)


@dataclass
class WorkloadPatterns:
    weekday_avg_counts: np.ndarray  # Monday..Sunday
    hourly_percentages: np.ndarray  # 24 fractions summing to 1
    jobsize_histogram: dict[int, int]
    walltime_histogram: tuple[tuple[float, ...], np.ndarray]  # (edges, counts)
    mean_interarrival: float
    # exact observed runtimes, used for empirical resampling
    walltime_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class DatasetStats:
    interarrival_cdf_rmse: float
    interarrival_cdf_relative_rmse: float
    jobsize_tv_distance: float
    walltime_tv_distance: float


# --------------------------------------------------------------------- SWF I/O

_START_RE = re.compile(r"^;\s*StartTime:\s*(.+?)\s*$")


def _parse_start_time(value: str) -> datetime:
    value = value.strip()
    for fmt in ("%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"):
        try:
            return datetime.strptime(value, fmt)
        except ValueError:
            pass
    # "Fri Oct 01 00:00:03 PDT 1993": the zone token is dropped, times stay local
    parts = value.split()
    if len(parts) == 6:
        parts = parts[:4] + parts[5:]
    return datetime.strptime(" ".join(parts), "%a %b %d %H:%M:%S %Y")


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise SWFParseError(lineno, f"non-numeric field {tok!r}") from None


def parse_swf(text: str, label: str = "real") -> WorkloadTrace:
    """Parse SWF content, keeping job number, submit, run time and allocated procs.

    Records with a missing (-1) or non-positive runtime/node count are dropped
    and counted in ``trace.dropped``.
    """
    origin = None
    jobs = []
    dropped = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(";"):
            m = _START_RE.match(line)
            if m:
                try:
                    origin = _parse_start_time(m.group(1))
                except ValueError:
                    raise SWFParseError(lineno, f"unreadable StartTime {m.group(1)!r}") from None
            continue
        toks = line.split()
        if len(toks) != SWF_FIELDS:
            raise SWFParseError(lineno, f"expected {SWF_FIELDS} fields, got {len(toks)}")
        job_id, submit, runtime, procs = (_num(toks[i], lineno) for i in (0, 1, 3, 4))
        if -1 in (job_id, submit, runtime, procs) or runtime <= 0 or procs <= 0 or submit < 0:
            dropped += 1
            continue
        jobs.append(JobSpec(int(job_id), _intish(submit), _intish(runtime), int(procs)))
    jobs.sort(key=lambda j: j.submit_time)
    return WorkloadTrace(jobs, origin, label, dropped)


def _intish(x: float):
    return int(x) if float(x).is_integer() else x


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) or float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def write_swf(trace: WorkloadTrace) -> str:
    lines = ["; Version: 2.2", f"; Note: label={trace.label}"]
    if trace.origin_timestamp is not None:
        lines.append("; StartTime: " + trace.origin_timestamp.strftime("%a %b %d %H:%M:%S %Y"))
    lines.append(f"; MaxJobs: {len(trace.jobs)}")
    lines.append(f"; MaxRecords: {len(trace.jobs)}")
    for j in trace.jobs:
        rec = [-1] * SWF_FIELDS
        rec[0] = j.id
        rec[1] = j.submit_time
        rec[3] = j.runtime
        rec[4] = j.requested_nodes
        rec[7] = j.requested_nodes
        rec[8] = j.walltime
        rec[10] = 1
        lines.append(" ".join(_fmt(v) for v in rec))
    return "\n".join(lines) + "\n"


def read_swf(path, label: str = "real") -> WorkloadTrace:
    import gzip

    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        return parse_swf(fh.read(), label=label)


# ------------------------------------------------------------- trace helpers

def rebase(trace: WorkloadTrace, offset: float, label: str | None = None) -> WorkloadTrace:
    jobs = [replace(j, submit_time=_intish(j.submit_time - offset)) for j in trace.jobs]
    origin = trace.origin_timestamp + timedelta(seconds=offset) if trace.origin_timestamp else None
    return WorkloadTrace(jobs, origin, label or trace.label)


def split_trace(trace: WorkloadTrace, ratio: float = 0.8) -> tuple[WorkloadTrace, WorkloadTrace]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    k = int(math.floor(ratio * len(trace.jobs)))
    train = WorkloadTrace(list(trace.jobs[:k]), trace.origin_timestamp, trace.label)
    test_jobs = trace.jobs[k:]
    head = WorkloadTrace(list(test_jobs), trace.origin_timestamp, trace.label)
    test = rebase(head, test_jobs[0].submit_time) if test_jobs else head
    return train, test


def mean_interarrival(trace: WorkloadTrace) -> float:
    n = len(trace.jobs)
    if n < 2:
        raise ValueError("mean inter-arrival time needs at least 2 jobs")
    return (trace.jobs[-1].submit_time - trace.jobs[0].submit_time) / (n - 1)


def walltime_histogram(values, edges=DEFAULT_WALLTIME_EDGES) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    idx = np.searchsorted(np.asarray(edges[1:-1]), values, side="right")
    return np.bincount(idx, minlength=len(edges) - 1)


def extract_patterns(trace: WorkloadTrace, walltime_edges=DEFAULT_WALLTIME_EDGES) -> WorkloadPatterns:
    if trace.origin_timestamp is None:
        raise ValueError("trace has no origin timestamp (SWF StartTime header)")
    if not trace.jobs:
        raise ValueError("cannot extract patterns from an empty trace")
    origin = trace.origin_timestamp
    stamps = [origin + timedelta(seconds=float(j.submit_time)) for j in trace.jobs]
    per_weekday = np.zeros(7)
    hours = np.zeros(24)
    for ts in stamps:
        per_weekday[ts.weekday()] += 1
        hours[ts.hour] += 1
    first, last = stamps[0].date(), stamps[-1].date()
    occurrences = np.zeros(7)
    for d in range((last - first).days + 1):
        occurrences[(first + timedelta(days=d)).weekday()] += 1
    weekday_avg = np.divide(per_weekday, occurrences, out=np.zeros(7), where=occurrences > 0)
    runtimes = np.array([j.walltime for j in trace.jobs], dtype=np.float64)
    mu = mean_interarrival(trace) if len(trace.jobs) >= 2 else 0.0
    return WorkloadPatterns(
        weekday_avg_counts=weekday_avg,
        hourly_percentages=hours / hours.sum(),
        jobsize_histogram=dict(sorted(Counter(j.requested_nodes for j in trace.jobs).items())),
        walltime_histogram=(tuple(walltime_edges), walltime_histogram(runtimes, walltime_edges)),
        mean_interarrival=mu,
        walltime_values=runtimes,
    )


# ------------------------------------------------------------------ generators

def generate_sampled(source: WorkloadTrace, count: int | None = None, seed=0) -> WorkloadTrace:
    """Resample jobs with replacement and rebuild arrivals as a Poisson stream."""
    if count is None:
        count = len(source.jobs)
    if count <= 0:
        raise ValueError("count must be positive")
    if not source.jobs:
        raise ValueError("source trace is empty")
    mu = mean_interarrival(source) if len(source.jobs) >= 2 else 0.0
    rng = stream(seed, "sampled")
    picks = rng.integers(0, len(source.jobs), size=count)
    gaps = rng.exponential(mu, size=count) if mu > 0 else np.zeros(count)
    # integer submission times, rounded from the running float clock
    times = np.rint(np.cumsum(gaps)).astype(np.int64)
    jobs = []
    for i, (p, t) in enumerate(zip(picks, times), start=1):
        src = source.jobs[int(p)]
        jobs.append(JobSpec(i, int(t), src.runtime, src.requested_nodes, src.walltime))
    return WorkloadTrace(jobs, source.origin_timestamp, "sampled")


def generate_synthetic(patterns: WorkloadPatterns, start_date: datetime, duration_days: int, seed=0) -> WorkloadTrace:
    """Day-by-day synthetic trace following weekly, hourly, size and walltime patterns."""
    if duration_days <= 0:
        raise ValueError("duration_days must be positive")
    if start_date is None:
        raise ValueError("synthetic generation needs an explicit start date")
    rng = stream(seed, "synthetic")
    hourly = np.asarray(patterns.hourly_percentages, dtype=np.float64)
    hourly = hourly / hourly.sum()
    sizes = np.array(list(patterns.jobsize_histogram.keys()), dtype=np.int64)
    size_p = np.array(list(patterns.jobsize_histogram.values()), dtype=np.float64)
    size_p /= size_p.sum()
    walls = np.asarray(patterns.walltime_values, dtype=np.float64)
    if walls.size == 0:
        raise ValueError("patterns carry no walltime values to resample")
    day0 = datetime(start_date.year, start_date.month, start_date.day)
    seconds = []
    for d in range(duration_days):
        n = int(math.floor(patterns.weekday_avg_counts[(day0 + timedelta(days=d)).weekday()] + 0.5))
        if n == 0:
            continue
        h = rng.choice(24, size=n, p=hourly)
        mins = rng.integers(0, 60, size=n)
        secs = rng.integers(0, 60, size=n)
        seconds.extend(sorted(int(d * 86400 + hh * 3600 + mm * 60 + ss) for hh, mm, ss in zip(h, mins, secs)))
    if not seconds:
        return WorkloadTrace([], day0, "synthetic")
    n = len(seconds)
    node_draw = sizes[rng.choice(len(sizes), size=n, p=size_p)]
    wall_draw = walls[rng.integers(0, walls.size, size=n)]
    t0 = seconds[0]
    jobs = [
        JobSpec(i, s - t0, _intish(w), int(k))
        for i, (s, w, k) in enumerate(zip(seconds, wall_draw, node_draw), start=1)
    ]
    return WorkloadTrace(jobs, day0 + timedelta(seconds=t0), "synthetic")


# ----------------------------------------------------------------- validation

def interarrival_gaps(trace: WorkloadTrace) -> np.ndarray:
    return np.diff(trace.submit_times())


def validate_exponential(trace: WorkloadTrace) -> tuple[float, float]:
    """RMSE (and relative RMSE) between the inter-arrival ECDF and a fitted exponential CDF."""
    if len(trace.jobs) < 2:
        raise ValueError("need at least 2 jobs")
    gaps = np.sort(interarrival_gaps(trace))
    rmse, emp_mean = _kernels.ecdf_exponential_rmse(gaps, float(gaps.mean()))
    return rmse, rmse / emp_mean


def distribution_distance(a: dict, b: dict) -> float:
    """Total variation distance between two count histograms."""
    ta, tb = float(sum(a.values())), float(sum(b.values()))
    if ta <= 0 or tb <= 0:
        raise ValueError("histograms must be non-empty")
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0) / ta - b.get(k, 0) / tb) for k in keys)


def _bins(counts) -> dict:
    return {i: int(c) for i, c in enumerate(counts)}


def dataset_stats(source: WorkloadTrace, sampled: WorkloadTrace | None, synthetic: WorkloadTrace | None,
                  walltime_edges=DEFAULT_WALLTIME_EDGES) -> DatasetStats:
    rmse = rel = float("nan")
    if sampled is not None:
        rmse, rel = validate_exponential(sampled)
    js = ws = float("nan")
    if synthetic is not None and synthetic.jobs:
        ref = Counter(j.requested_nodes for j in source.jobs)
        js = distribution_distance(ref, Counter(j.requested_nodes for j in synthetic.jobs))
        ws = distribution_distance(
            _bins(walltime_histogram([j.walltime for j in source.jobs], walltime_edges)),
            _bins(walltime_histogram([j.walltime for j in synthetic.jobs], walltime_edges)),
        )
    return DatasetStats(rmse, rel, js, ws)
