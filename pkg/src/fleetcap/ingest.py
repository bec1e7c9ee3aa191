"""Parsers for telemetry, scheduler, and allocation files, plus 15-s aggregation.

Telemetry files are CSV with a fixed 12-column header:

    timestamp,node_id,input_power_w,cpu_power_w,gcd0_w,...,gcd7_w

Timestamps may be integer epoch seconds or ISO-8601 (a trailing Z or an
explicit offset); epoch seconds are emitted on output and sub-second
precision is dropped. Scheduler logs are `job_id,project_id,num_nodes,
begin_time,end_time`; allocations are `job_id,node_id`.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable

from ._util import csv_rows, fmt_float, parse_int, text_lines
from .errors import DanglingAllocationWarning, ParseError
from .model import (
    AGGREGATION_WINDOW_S,
    GCDS_PER_NODE,
    AggregatedSample,
    JobRecord,
    PowerSample,
    validate_sample,
)

TELEMETRY_HEADER = ["timestamp", "node_id", "input_power_w", "cpu_power_w"] + [
    f"gcd{i}_w" for i in range(GCDS_PER_NODE)
]
SCHEDULER_HEADER = ["job_id", "project_id", "num_nodes", "begin_time", "end_time"]
ALLOCATION_HEADER = ["job_id", "node_id"]


@dataclass(frozen=True)
class AllocationRow:
    job_id: str
    node_id: str


def parse_timestamp(token: str, line: int) -> int:
    """Epoch-seconds or ISO-8601 timestamp; returns epoch seconds."""
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    iso = token[:-1] + "+00:00" if token.endswith(("Z", "z")) else token
    try:
        parsed = datetime.fromisoformat(iso)
    except ValueError:
        raise ParseError(f"bad timestamp {token!r}", line) from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return int(parsed.timestamp())


def _power_field(token: str, label: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{label} is not numeric: {token!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(f"{label} must be finite and >= 0, got {token!r}", line)
    return value


def parse_telemetry(
    stream: IO | Iterable[str], *, lenient: bool = False
) -> tuple[list[PowerSample], int]:
    """Parse a telemetry stream into PowerSamples.

    Returns (samples, skipped). In strict mode any malformed row aborts with
    ParseError carrying the 1-based line number and skipped is always 0; with
    lenient=True bad rows are skipped and counted instead.
    """
    samples: list[PowerSample] = []
    skipped = 0
    for line, row in _telemetry_rows(stream, lenient):
        try:
            samples.append(_parse_telemetry_row(row, line))
        except ParseError:
            if not lenient:
                raise
            skipped += 1
    return samples, skipped


def _telemetry_rows(stream, lenient):
    """Like csv_rows but defers the column-count check so lenient mode can count it."""
    reader = csv.reader(text_lines(stream))
    for line, row in enumerate(reader, start=1):
        if line == 1:
            got = [cell.strip().lower() for cell in row]
            if got != TELEMETRY_HEADER:
                raise ParseError(f"expected header {','.join(TELEMETRY_HEADER)}", line=1)
            continue
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        yield line, row


def _parse_telemetry_row(row: list[str], line: int) -> PowerSample:
    if len(row) != len(TELEMETRY_HEADER):
        raise ParseError(
            f"expected {len(TELEMETRY_HEADER)} columns, got {len(row)}", line
        )
    node_id = row[1].strip()
    if not node_id:
        raise ParseError("empty node_id", line)
    sample = PowerSample(
        timestamp=parse_timestamp(row[0], line),
        node_id=node_id,
        input_power_w=_power_field(row[2], "input_power_w", line),
        cpu_power_w=_power_field(row[3], "cpu_power_w", line),
        gcd_power_w=tuple(
            _power_field(row[4 + i], f"gcd{i}_w", line) for i in range(GCDS_PER_NODE)
        ),
    )
    try:
        return validate_sample(sample)
    except Exception as exc:
        raise ParseError(str(exc), line) from exc


def aggregate_15s(samples: Iterable[PowerSample]) -> list[AggregatedSample]:
    """Average samples onto the 15-s grid, grouped by (node_id, window).

    Each field is the arithmetic mean of the window's samples; windows with
    no samples are simply absent; partial windows keep their mean. Output is
    sorted by (node_id, timestamp), so aggregation is insensitive to input
    order and idempotent on already-aligned input.
    """
    acc: dict[tuple[str, int], list] = {}
    for s in samples:
        window = (s.timestamp // AGGREGATION_WINDOW_S) * AGGREGATION_WINDOW_S
        slot = acc.get((s.node_id, window))
        if slot is None:
            acc[(s.node_id, window)] = [1, s.input_power_w, s.cpu_power_w,
                                        list(s.gcd_power_w)]
        else:
            slot[0] += 1
            slot[1] += s.input_power_w
            slot[2] += s.cpu_power_w
            for i, w in enumerate(s.gcd_power_w):
                slot[3][i] += w
    out = []
    for (node_id, window), (n, inp, cpu, gcds) in sorted(acc.items()):
        out.append(
            AggregatedSample(
                timestamp=window,
                node_id=node_id,
                input_power_w=inp / n,
                cpu_power_w=cpu / n,
                gcd_power_w=tuple(g / n for g in gcds),
            )
        )
    return out


def write_telemetry(samples: Iterable[PowerSample], stream: IO[str]) -> None:
    """Write samples in the telemetry CSV format (epoch timestamps)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TELEMETRY_HEADER)
    for s in samples:
        writer.writerow(
            [s.timestamp, s.node_id, fmt_float(s.input_power_w),
             fmt_float(s.cpu_power_w)] + [fmt_float(w) for w in s.gcd_power_w]
        )


def read_aggregated(stream: IO | Iterable[str]) -> list[AggregatedSample]:
    """Read a telemetry-format file whose rows sit on the 15-s grid."""
    samples, _ = parse_telemetry(stream)
    out = []
    for s in samples:
        agg = AggregatedSample(s.timestamp, s.node_id, s.input_power_w,
                               s.cpu_power_w, s.gcd_power_w)
        validate_sample(agg)
        out.append(agg)
    return out


def parse_scheduler(stream: IO | Iterable[str]) -> list[dict]:
    """Parse a scheduler log into raw job rows (no allocations joined yet)."""
    rows = []
    for line, row in csv_rows(stream, SCHEDULER_HEADER):
        job_id, project_id = row[0].strip(), row[1].strip()
        if not job_id:
            raise ParseError("empty job_id", line)
        rows.append(
            {
                "job_id": job_id,
                "project_id": project_id,
                "num_nodes": parse_int(row[2], "num_nodes", line),
                "begin_time": parse_timestamp(row[3], line),
                "end_time": parse_timestamp(row[4], line),
            }
        )
    return rows


def parse_allocations(stream: IO | Iterable[str]) -> list[AllocationRow]:
    rows = []
    for line, row in csv_rows(stream, ALLOCATION_HEADER):
        job_id, node_id = row[0].strip(), row[1].strip()
        if not job_id or not node_id:
            raise ParseError("empty job_id or node_id", line)
        rows.append(AllocationRow(job_id, node_id))
    return rows


def build_job_records(
    scheduler_rows: Iterable[dict], allocations: Iterable[AllocationRow]
) -> list[JobRecord]:
    """Join scheduler rows with allocations into validated JobRecords.

    Allocations referencing unknown jobs raise DanglingAllocationWarning and
    are dropped. Zero-length jobs and num_nodes mismatches raise InvalidJob.
    """
    scheduler_rows = list(scheduler_rows)
    nodes_by_job: dict[str, set[str]] = {}
    known = {row["job_id"] for row in scheduler_rows}
    for alloc in allocations:
        if alloc.job_id not in known:
            warnings.warn(
                f"allocation references unknown job {alloc.job_id!r}",
                DanglingAllocationWarning,
                stacklevel=2,
            )
            continue
        nodes_by_job.setdefault(alloc.job_id, set()).add(alloc.node_id)
    records = []
    for row in scheduler_rows:
        record = JobRecord(
            job_id=row["job_id"],
            project_id=row["project_id"],
            num_nodes=row["num_nodes"],
            begin_time=row["begin_time"],
            end_time=row["end_time"],
            node_ids=frozenset(nodes_by_job.get(row["job_id"], set())),
        )
        records.append(record.validate())
    return records


def load_jobs(scheduler_stream, allocation_stream) -> list[JobRecord]:
    return build_job_records(
        parse_scheduler(scheduler_stream), parse_allocations(allocation_stream)
    )
