"""Per-run metrics and the inverse-normalized comparison used for radar charts."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .simcore import SimulationResult

METRIC_FIELDS = (
    "total_energy", "wasted_energy", "avg_wait", "max_wait", "avg_response", "avg_slowdown",
    "job_filling_rate", "shutdown_count", "truncated", "failsafe_triggers", "completed_jobs", "pending_jobs",
)


@dataclass(frozen=True)
class MetricsReport:
    total_energy: float
    wasted_energy: float
    avg_wait: float | None
    max_wait: float | None
    avg_response: float | None
    avg_slowdown: float | None
    job_filling_rate: float | None
    shutdown_count: int
    truncated: bool
    failsafe_triggers: int
    completed_jobs: int = 0
    pending_jobs: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(result: SimulationResult) -> MetricsReport:
    """Energies come from the accumulators; job metrics are None when nothing completed."""
    done = result.completed
    if done:
        waits = np.array([c.start_time - c.job.submit_time for c in done])
        resp = np.array([c.finish_time - c.job.submit_time for c in done])
        runtimes = np.maximum([c.job.runtime for c in done], 1.0)
        avg_wait, max_wait = float(waits.mean()), float(waits.max())
        avg_resp, avg_sd = float(resp.mean()), float((resp / runtimes).mean())
    else:
        avg_wait = max_wait = avg_resp = avg_sd = None
    busy = result.compute_time + result.idle_time
    fill = result.compute_time / busy if busy > 0 else None
    return MetricsReport(
        total_energy=result.total_energy, wasted_energy=result.wasted_energy,
        avg_wait=avg_wait, max_wait=max_wait, avg_response=avg_resp, avg_slowdown=avg_sd,
        job_filling_rate=fill, shutdown_count=result.shutdowns, truncated=result.truncated,
        failsafe_triggers=result.failsafe_triggers, completed_jobs=len(done), pending_jobs=result.pending_jobs,
    )


RADAR_AXES = ("max_wait", "avg_response", "avg_slowdown", "job_filling_rate")


def normalize_radar(reports: list[MetricsReport]) -> list[dict[str, float]]:
    """Scale each axis so the best report scores 1.

    Lower-is-better metrics are inverted first; utilization is divided by its
    maximum as is.
    """
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    cols = {}
    for ax in RADAR_AXES:
        vals = [getattr(r, ax) for r in reports]
        if any(v is None or v <= 0 for v in vals):
            raise ValueError(f"metric {ax} must be positive in every report")
        vals = np.asarray(vals, dtype=float)
        if ax != "job_filling_rate":
            vals = 1.0 / vals
        cols[ax] = vals / vals.max()
    return [{ax: float(cols[ax][i]) for ax in RADAR_AXES} for i in range(len(reports))]
