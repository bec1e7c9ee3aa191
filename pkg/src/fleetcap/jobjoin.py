"""Attribute aggregated GPU samples to scheduler jobs and integrate energy.

Every 15-s GCD sample lands in exactly one bucket: the job whose interval
[begin_time, end_time) covers the sample's node at that instant, or the
pseudo-job "IDLE" when no job does. Energy integration is a rectangle rule:
each sample contributes watts x 15 s.
"""
from __future__ import annotations

import csv
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from ._util import csv_rows, parse_float, parse_int
from .errors import EmptyProjectId, OverlappingJobsWarning
from .model import (
    AGGREGATION_WINDOW_S,
    JOULES_PER_MWH,
    AggregatedSample,
    JobRecord,
    JobSizeClass,
    classify_job_size,
)

IDLE_JOB_ID = "IDLE"
IDLE_DOMAIN = "IDLE"

JOINED_HEADER = [
    "timestamp", "node_id", "gcd_index", "power_w",
    "job_id", "science_domain", "job_size_class",
]
SUMMARY_HEADER = [
    "job_id", "science_domain", "job_size_class", "gpu_energy_mwh", "gpu_hours",
]


def derive_domain(project_id: str) -> str:
    """Science domain = longest leading alphabetic run of the project id, uppercased.

    'ast137' -> 'AST', 'BIO' -> 'BIO'. An id with no leading alphabetic
    character ('123x') raises EmptyProjectId.
    """
    run = []
    for ch in project_id:
        if ch.isalpha():
            run.append(ch)
        else:
            break
    if not run:
        raise EmptyProjectId(f"project id {project_id!r} has no alphabetic prefix")
    return "".join(run).upper()


@dataclass
class JobPowerSeries:
    """All per-GCD 15-s power series attributed to one job (or to IDLE).

    series maps (node_id, gcd_index) to a timestamp-ordered list of
    (timestamp, watts) pairs; timestamps are unique per key.
    """

    job_id: str
    science_domain: str
    job_size_class: JobSizeClass | None
    series: dict[tuple[str, int], list[tuple[int, float]]] = field(default_factory=dict)

    def add(self, node_id: str, gcd_index: int, timestamp: int, watts: float) -> None:
        self.series.setdefault((node_id, gcd_index), []).append((timestamp, watts))

    def sample_count(self) -> int:
        return sum(len(points) for points in self.series.values())

    def iter_watts(self):
        for points in self.series.values():
            for _, watts in points:
                yield watts


def gpu_hours(series: JobPowerSeries) -> float:
    """GPU-hours attributed to the job: sample_count x 15 s / 3600."""
    return series.sample_count() * AGGREGATION_WINDOW_S / 3600.0


def integrate_energy(series: JobPowerSeries) -> float:
    """Rectangle-rule GPU energy in MWh: sum of watts x 15 s over all samples."""
    return energy_mwh_from_watts(series.iter_watts())


def energy_mwh_from_watts(watts: Iterable[float]) -> float:
    return sum(watts) * AGGREGATION_WINDOW_S / JOULES_PER_MWH


def join(
    samples: Iterable[AggregatedSample], jobs: Iterable[JobRecord]
) -> dict[str, JobPowerSeries]:
    """Attribute every GCD sample to exactly one job, or to IDLE.

    When two jobs claim the same node-second the one with the earlier
    begin_time wins (job_id breaks ties) and an OverlappingJobsWarning is
    emitted once per pair. Insensitive to input ordering.
    """
    jobs = sorted(jobs, key=lambda j: (j.begin_time, j.job_id))
    by_node: dict[str, list[JobRecord]] = {}
    for job in jobs:
        for node_id in job.node_ids:
            by_node.setdefault(node_id, []).append(job)
    _warn_overlaps(by_node)

    out: dict[str, JobPowerSeries] = {}
    order = {job.job_id: i for i, job in enumerate(jobs)}
    begin_times = {
        node_id: [job.begin_time for job in node_jobs]
        for node_id, node_jobs in by_node.items()
    }
    for sample in sorted(samples, key=lambda s: (s.node_id, s.timestamp)):
        job = _owning_job(sample, by_node.get(sample.node_id, []),
                          begin_times.get(sample.node_id, []))
        if job is None:
            bucket = out.get(IDLE_JOB_ID)
            if bucket is None:
                bucket = out[IDLE_JOB_ID] = JobPowerSeries(
                    IDLE_JOB_ID, IDLE_DOMAIN, None
                )
        else:
            bucket = out.get(job.job_id)
            if bucket is None:
                bucket = out[job.job_id] = JobPowerSeries(
                    job.job_id,
                    job.science_domain or derive_domain(job.project_id),
                    classify_job_size(job.num_nodes),
                )
        for gcd_index, watts in enumerate(sample.gcd_power_w):
            bucket.add(sample.node_id, gcd_index, sample.timestamp, watts)
    # deterministic bucket order: (begin_time, job_id), IDLE last
    return dict(
        sorted(out.items(), key=lambda kv: (kv[0] == IDLE_JOB_ID, order.get(kv[0], 0)))
    )


def _owning_job(sample, node_jobs: list[JobRecord], begins: list[int]):
    # node_jobs is begin-time sorted; overlap rule: first matching job wins.
    hi = bisect_right(begins, sample.timestamp)
    for job in node_jobs[:hi]:
        if job.covers(sample.timestamp):
            return job
    return None


def _warn_overlaps(by_node: Mapping[str, list[JobRecord]]) -> None:
    seen: set[tuple[str, str]] = set()
    for node_jobs in by_node.values():
        for earlier, later in zip(node_jobs, node_jobs[1:]):
            if later.begin_time < earlier.end_time:
                pair = (earlier.job_id, later.job_id)
                if pair not in seen:
                    seen.add(pair)
                    warnings.warn(
                        f"jobs {pair[0]!r} and {pair[1]!r} overlap on shared nodes; "
                        f"earlier begin_time wins",
                        OverlappingJobsWarning,
                        stacklevel=3,
                    )


@dataclass(frozen=True)
class JobEnergySummary:
    job_id: str
    science_domain: str
    job_size_class: JobSizeClass | None
    gpu_energy_mwh: float
    gpu_hours: float
    sample_count: int


def summarize(series_map: Mapping[str, JobPowerSeries]) -> list[JobEnergySummary]:
    return [
        JobEnergySummary(
            job_id=s.job_id,
            science_domain=s.science_domain,
            job_size_class=s.job_size_class,
            gpu_energy_mwh=integrate_energy(s),
            gpu_hours=gpu_hours(s),
            sample_count=s.sample_count(),
        )
        for s in series_map.values()
    ]


def write_summaries(summaries: Iterable[JobEnergySummary], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for s in summaries:
        writer.writerow([
            s.job_id,
            s.science_domain,
            s.job_size_class.name if s.job_size_class else "",
            repr(float(s.gpu_energy_mwh)),
            repr(float(s.gpu_hours)),
        ])


def write_joined(series_map: Mapping[str, JobPowerSeries], stream: IO[str]) -> None:
    """Flat per-sample file consumed by the decompose stage."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(JOINED_HEADER)
    rows = []
    for s in series_map.values():
        size = s.job_size_class.name if s.job_size_class else ""
        for (node_id, gcd_index), points in s.series.items():
            for timestamp, watts in points:
                rows.append((timestamp, node_id, gcd_index, watts,
                             s.job_id, s.science_domain, size))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    for timestamp, node_id, gcd_index, watts, job_id, domain, size in rows:
        writer.writerow([timestamp, node_id, gcd_index, repr(watts),
                         job_id, domain, size])


def read_joined(stream) -> dict[str, JobPowerSeries]:
    """Inverse of write_joined."""
    out: dict[str, JobPowerSeries] = {}
    for line, row in csv_rows(stream, JOINED_HEADER):
        timestamp = parse_int(row[0], "timestamp", line)
        gcd_index = parse_int(row[2], "gcd_index", line)
        watts = parse_float(row[3], "power_w", line)
        job_id, domain, size_token = row[4], row[5], row[6].strip()
        bucket = out.get(job_id)
        if bucket is None:
            size = JobSizeClass.from_token(size_token) if size_token else None
            bucket = out[job_id] = JobPowerSeries(job_id, domain, size)
        bucket.add(row[1], gcd_index, timestamp, watts)
    return out
