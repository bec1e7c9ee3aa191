"""Deterministic synthetic fleet generator with a closed-form oracle.

Given a workload spec (JSON), `generate` writes a telemetry file, a
scheduler log, and an allocation file that round-trip through the full
pipeline. `oracle` computes the exact expected modal decomposition (and,
given a characterization table, expected projections via independently
reimplemented arithmetic) without touching the generated files.

Layout rules that make the oracle exact:

* Telemetry rows arrive on a 2-s cadence; job begin/end times and mode
  phase boundaries all sit on the 15-s aggregation grid, so every
  aggregation window is pure (one mode, one job or idle).
* Each job runs its modes as contiguous phases in mode order; phase
  lengths are the mixture fractions of the job duration, snapped to
  15-s multiples (cumulative snapping preserves the total).
* Per-GCD power is drawn uniformly from the mode's configured sub-range
  and rounded to 0.01 W; idle nodes draw a constant idle wattage. Window
  means therefore stay inside the mode band, and expected energy is the
  sub-range midpoint times time.

Randomness is a 64-bit xorshift* stream per node, seeded via a splitmix64
finalizer so generation is reproducible across platforms and languages:

    node_state(i) = mix64((seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64)
    mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31            (all mod 2^64; state 0 -> the constant)
    next(x):   x ^= x >> 12; x ^= x << 25; x ^= x >> 27
               return (x * 0x2545F4914F6CDD1D) mod 2^64
    uniform(lo, hi) = lo + (hi - lo) * ((next() >> 11) / 2^53)
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from .errors import InvalidSpec
from .jobjoin import derive_domain
from .model import (
    AGGREGATION_WINDOW_S,
    GCD_POWER_CEILING_W,
    GCDS_PER_NODE,
    JOULES_PER_MWH,
    CapSetting,
    JobSizeClass,
    OperatingMode,
    cap_key,
    classify_job_size,
)

TICK_S = 2  # telemetry cadence

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

DEFAULT_MODE_RANGES: dict[OperatingMode, tuple[float, float]] = {
    OperatingMode.LATENCY_BOUND: (100.0, 200.0),
    OperatingMode.MEMORY_INTENSIVE: (200.0, 420.0),
    OperatingMode.COMPUTE_INTENSIVE: (420.0, 560.0),
    OperatingMode.BOOSTED: (560.0, 600.0),
}

# closed band bounds each sub-range must sit inside (default thresholds)
_BANDS = {
    OperatingMode.LATENCY_BOUND: (0.0, 200.0),
    OperatingMode.MEMORY_INTENSIVE: (200.0, 420.0),
    OperatingMode.COMPUTE_INTENSIVE: (420.0, 560.0),
    OperatingMode.BOOSTED: (560.0, GCD_POWER_CEILING_W),
}


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    """The documented per-node random stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64 or _GOLDEN

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) / 9007199254740992.0)


def node_stream(seed: int, node_index: int) -> Xorshift64Star:
    return Xorshift64Star(_mix64(seed + (node_index + 1) * _GOLDEN))


@dataclass(frozen=True)
class JobTemplate:
    """One synthetic job: a node span running a mode mixture for a while."""

    job_id: str
    project_id: str
    node_span: tuple[int, int]  # inclusive (first, last) node indices
    start_offset_s: int
    duration_s: int
    mixture: Mapping[OperatingMode, float]
    size_class: JobSizeClass | None = None

    @property
    def num_nodes(self) -> int:
        return self.node_span[1] - self.node_span[0] + 1

    def node_indices(self) -> range:
        return range(self.node_span[0], self.node_span[1] + 1)


@dataclass(frozen=True)
class SynthSpec:
    """Full description of a synthetic fleet run."""

    seed: int
    node_count: int
    duration_s: int
    jobs: tuple[JobTemplate, ...]
    start_time: int = 1_700_000_010  # epoch seconds, on the 15-s grid
    idle_power_w: float = 89.0
    cpu_power_w: float = 250.0
    input_overhead_w: float = 350.0
    mode_power_ranges: Mapping[OperatingMode, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_MODE_RANGES)
    )

    def validate(self) -> "SynthSpec":
        if self.node_count < 1:
            raise InvalidSpec("node_count must be >= 1")
        if self.duration_s < AGGREGATION_WINDOW_S or self.duration_s % AGGREGATION_WINDOW_S:
            raise InvalidSpec("duration_s must be a positive multiple of 15")
        if self.start_time % AGGREGATION_WINDOW_S:
            raise InvalidSpec("start_time must sit on the 15-s grid")
        if not (0 <= self.idle_power_w <= _BANDS[OperatingMode.LATENCY_BOUND][1]):
            raise InvalidSpec("idle_power_w must stay inside the latency-bound band")
        if self.cpu_power_w < 0 or self.input_overhead_w < 0:
            raise InvalidSpec("cpu_power_w and input_overhead_w must be >= 0")
        for mode, (lo, hi) in self.mode_power_ranges.items():
            band_lo, band_hi = _BANDS[mode]
            if not (band_lo <= lo <= hi <= band_hi):
                raise InvalidSpec(
                    f"power range [{lo}, {hi}] for {mode.token} leaves its band "
                    f"[{band_lo}, {band_hi}]"
                )
        seen_ids = set()
        for job in self.jobs:
            self._validate_job(job)
            if job.job_id in seen_ids:
                raise InvalidSpec(f"duplicate job_id {job.job_id!r}")
            seen_ids.add(job.job_id)
        self._check_overlaps()
        return self

    def _validate_job(self, job: JobTemplate) -> None:
        first, last = job.node_span
        if not (0 <= first <= last < self.node_count):
            raise InvalidSpec(
                f"job {job.job_id}: node span ({first}, {last}) outside "
                f"0..{self.node_count - 1}"
            )
        if job.start_offset_s < 0 or job.start_offset_s % AGGREGATION_WINDOW_S:
            raise InvalidSpec(
                f"job {job.job_id}: start offset must be a non-negative multiple of 15"
            )
        if job.duration_s <= 0 or job.duration_s % AGGREGATION_WINDOW_S:
            raise InvalidSpec(
                f"job {job.job_id}: duration must be a positive multiple of 15"
            )
        if job.start_offset_s + job.duration_s > self.duration_s:
            raise InvalidSpec(f"job {job.job_id}: runs past the end of the trace")
        if not job.mixture:
            raise InvalidSpec(f"job {job.job_id}: empty mixture")
        total = 0.0
        for mode, fraction in job.mixture.items():
            if mode not in _BANDS:
                raise InvalidSpec(f"job {job.job_id}: unknown mode {mode!r}")
            if fraction < 0:
                raise InvalidSpec(f"job {job.job_id}: negative mixture fraction")
            total += fraction
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpec(f"job {job.job_id}: mixture sums to {total}, not 1")
        derive_domain(job.project_id)  # raises when no domain can be derived
        if job.size_class is not None:
            actual = classify_job_size(job.num_nodes)
            if job.size_class is not actual:
                raise InvalidSpec(
                    f"job {job.job_id}: size_class {job.size_class.name} does not "
                    f"match {job.num_nodes} nodes (class {actual.name})"
                )

    def _check_overlaps(self) -> None:
        jobs = sorted(self.jobs, key=lambda j: j.start_offset_s)
        for i, a in enumerate(jobs):
            for b in jobs[i + 1:]:
                if b.start_offset_s >= a.start_offset_s + a.duration_s:
                    break
                spans_meet = (a.node_span[0] <= b.node_span[1]
                              and b.node_span[0] <= a.node_span[1])
                if spans_meet:
                    raise InvalidSpec(
                        f"jobs {a.job_id!r} and {b.job_id!r} overlap on shared nodes"
                    )

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {
            "seed", "node_count", "duration_s", "jobs", "start_time",
            "idle_power_w", "cpu_power_w", "input_overhead_w", "mode_power_ranges",
        }
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown spec keys: {sorted(unknown)}")
        for required in ("seed", "node_count", "duration_s", "jobs"):
            if required not in data:
                raise InvalidSpec(f"spec is missing {required!r}")
        ranges = dict(DEFAULT_MODE_RANGES)
        for token, pair in data.get("mode_power_ranges", {}).items():
            mode = OperatingMode.from_token(token)
            if len(pair) != 2:
                raise InvalidSpec(f"power range for {token} must be [lo, hi]")
            ranges[mode] = (float(pair[0]), float(pair[1]))
        jobs = tuple(cls._job_from_dict(j) for j in data["jobs"])
        spec = cls(
            seed=int(data["seed"]),
            node_count=int(data["node_count"]),
            duration_s=int(data["duration_s"]),
            jobs=jobs,
            start_time=int(data.get("start_time", cls.start_time)),
            idle_power_w=float(data.get("idle_power_w", cls.idle_power_w)),
            cpu_power_w=float(data.get("cpu_power_w", cls.cpu_power_w)),
            input_overhead_w=float(data.get("input_overhead_w", cls.input_overhead_w)),
            mode_power_ranges=ranges,
        )
        return spec.validate()

    @staticmethod
    def _job_from_dict(data: dict) -> JobTemplate:
        known = {"job_id", "project_id", "node_span", "start_offset_s",
                 "duration_s", "mixture", "size_class"}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown job keys: {sorted(unknown)}")
        try:
            span = data["node_span"]
            mixture = {
                OperatingMode.from_token(token): float(fraction)
                for token, fraction in data["mixture"].items()
            }
            return JobTemplate(
                job_id=str(data["job_id"]),
                project_id=str(data["project_id"]),
                node_span=(int(span[0]), int(span[1])),
                start_offset_s=int(data["start_offset_s"]),
                duration_s=int(data["duration_s"]),
                mixture=mixture,
                size_class=(JobSizeClass.from_token(data["size_class"])
                            if data.get("size_class") else None),
            )
        except KeyError as exc:
            raise InvalidSpec(f"job is missing {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, stream_or_text) -> "SynthSpec":
        if hasattr(stream_or_text, "read"):
            data = json.load(stream_or_text)
        else:
            data = json.loads(stream_or_text)
        if not isinstance(data, dict):
            raise InvalidSpec("spec must be a JSON object")
        return cls.from_dict(data)


def phase_schedule(job: JobTemplate) -> list[tuple[OperatingMode, int, int]]:
    """(mode, offset within job, seconds) per phase, on the 15-s grid.

    Cumulative boundaries are snapped to the nearest 15-s multiple so the
    phase lengths always sum to the job duration exactly; zero-length
    phases are dropped.
    """
    phases = []
    cumulative = 0.0
    prev_boundary = 0
    ordered = sorted(job.mixture.items(), key=lambda kv: kv[0].value)
    for index, (mode, fraction) in enumerate(ordered):
        cumulative += fraction
        if index == len(ordered) - 1:
            boundary = job.duration_s
        else:
            raw = job.duration_s * cumulative / AGGREGATION_WINDOW_S
            boundary = int(math.floor(raw + 0.5)) * AGGREGATION_WINDOW_S
            boundary = min(max(boundary, prev_boundary), job.duration_s)
        if boundary > prev_boundary:
            phases.append((mode, prev_boundary, boundary - prev_boundary))
        prev_boundary = boundary
    return phases


def _node_timelines(spec: SynthSpec) -> list[list[tuple[int, int, OperatingMode | None]]]:
    """Per node: contiguous (abs_start, abs_end, mode|None) segments; None = idle."""
    timelines: list[list[tuple[int, int, OperatingMode | None]]] = [
        [] for _ in range(spec.node_count)
    ]
    for job in sorted(spec.jobs, key=lambda j: j.start_offset_s):
        begin = spec.start_time + job.start_offset_s
        for mode, offset, seconds in phase_schedule(job):
            for node in job.node_indices():
                timelines[node].append((begin + offset, begin + offset + seconds, mode))
    end_time = spec.start_time + spec.duration_s
    full = []
    for segments in timelines:
        segments.sort()
        cursor = spec.start_time
        padded = []
        for seg_start, seg_end, mode in segments:
            if seg_start > cursor:
                padded.append((cursor, seg_start, None))
            padded.append((seg_start, seg_end, mode))
            cursor = seg_end
        if cursor < end_time:
            padded.append((cursor, end_time, None))
        full.append(padded)
    return full


def node_id(index: int) -> str:
    return f"node{index:04d}"


def _fmt2(value: float) -> str:
    text = f"{value:.2f}"
    return text.rstrip("0").rstrip(".") if "." in text else text


def generate(spec: SynthSpec, out_dir: str) -> dict[str, str]:
    """Write telemetry.csv, jobs.csv, and allocations.csv under out_dir.

    Byte-identical for identical (spec, seed). Returns the written paths.
    """
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "telemetry": os.path.join(out_dir, "telemetry.csv"),
        "scheduler": os.path.join(out_dir, "jobs.csv"),
        "allocations": os.path.join(out_dir, "allocations.csv"),
    }
    timelines = _node_timelines(spec)
    streams = [node_stream(spec.seed, i) for i in range(spec.node_count)]
    cursors = [0] * spec.node_count
    ranges = spec.mode_power_ranges
    with open(paths["telemetry"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["timestamp", "node_id", "input_power_w", "cpu_power_w"]
            + [f"gcd{i}_w" for i in range(GCDS_PER_NODE)]
        )
        end_time = spec.start_time + spec.duration_s
        cpu = spec.cpu_power_w
        for tick in range(spec.start_time, end_time, TICK_S):
            for node in range(spec.node_count):
                timeline = timelines[node]
                while tick >= timeline[cursors[node]][1]:
                    cursors[node] += 1
                mode = timeline[cursors[node]][2]
                if mode is None:
                    gcds = [spec.idle_power_w] * GCDS_PER_NODE
                else:
                    lo, hi = ranges[mode]
                    stream = streams[node]
                    gcds = [round(stream.uniform(lo, hi), 2)
                            for _ in range(GCDS_PER_NODE)]
                input_power = round(spec.input_overhead_w + cpu + sum(gcds), 2)
                writer.writerow(
                    [tick, node_id(node), _fmt2(input_power), _fmt2(cpu)]
                    + [_fmt2(w) for w in gcds]
                )
    with open(paths["scheduler"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["job_id", "project_id", "num_nodes", "begin_time", "end_time"])
        for job in spec.jobs:
            begin = spec.start_time + job.start_offset_s
            writer.writerow([job.job_id, job.project_id, job.num_nodes,
                             begin, begin + job.duration_s])
    with open(paths["allocations"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["job_id", "node_id"])
        for job in spec.jobs:
            for node in job.node_indices():
                writer.writerow([job.job_id, node_id(node)])
    return paths


@dataclass(frozen=True)
class OracleResult:
    decomposition: "ModalDecomposition"
    projections: list[dict] | None = None


def oracle(
    spec: SynthSpec,
    table=None,
    caps: Sequence[CapSetting] | None = None,
) -> OracleResult:
    """Exact expected pipeline output, computed from the spec alone.

    Mode hours count snapped phase windows; expected energy uses each
    sub-range's midpoint (exactly right for degenerate ranges, unbiased
    otherwise). With a characterization table and cap list, also computes
    expected projections with arithmetic deliberately reimplemented here
    rather than imported from the projection module.
    """
    from .modal import ModalDecomposition, ModeStats  # cycle-free local import

    spec.validate()
    counts = {mode: 0 for mode in OperatingMode}
    joules = {mode: 0.0 for mode in OperatingMode}
    busy_per_node = [0] * spec.node_count
    for job in spec.jobs:
        gcds = job.num_nodes * GCDS_PER_NODE
        for mode, _offset, seconds in phase_schedule(job):
            lo, hi = spec.mode_power_ranges[mode]
            counts[mode] += (seconds // AGGREGATION_WINDOW_S) * gcds
            joules[mode] += (lo + hi) / 2.0 * seconds * gcds
        for node in job.node_indices():
            busy_per_node[node] += job.duration_s
    idle_mode = OperatingMode.LATENCY_BOUND
    for node in range(spec.node_count):
        idle_s = spec.duration_s - busy_per_node[node]
        counts[idle_mode] += (idle_s // AGGREGATION_WINDOW_S) * GCDS_PER_NODE
        joules[idle_mode] += spec.idle_power_w * idle_s * GCDS_PER_NODE
    decomposition = ModalDecomposition(
        modes={
            mode: ModeStats(counts[mode], joules[mode] / JOULES_PER_MWH)
            for mode in OperatingMode
        }
    )
    projections = None
    if table is not None:
        if not caps:
            raise InvalidSpec("caps are required when a table is supplied")
        projections = _expected_projections(decomposition, table, caps)
    return OracleResult(decomposition=decomposition, projections=projections)


def _expected_projections(decomposition, table, caps) -> list[dict]:
    # deliberately re-derived here; must not share code with the project module
    e_ci = decomposition.stats(OperatingMode.COMPUTE_INTENSIVE).energy_mwh
    e_mi = decomposition.stats(OperatingMode.MEMORY_INTENSIVE).energy_mwh
    e_total = decomposition.total_energy_mwh
    rows = []
    for cap in caps:
        trow = table.row_for(cap)
        ci = e_ci * (1.0 - trow.vai_energy_pct / 100.0)
        mi = e_mi * (1.0 - trow.mb_energy_pct / 100.0)
        total = ci + mi
        if e_total:
            w_ci, w_mi = e_ci / e_total, e_mi / e_total
        else:
            w_ci = w_mi = 0.0
        delta_t = (w_ci * max(0.0, trow.vai_runtime_pct - 100.0)
                   + w_mi * max(0.0, trow.mb_runtime_pct - 100.0))
        kind, value = cap_key(cap)
        rows.append({
            "cap_type": kind,
            "cap_value": value,
            "ci_mwh": ci,
            "mi_mwh": mi,
            "total_mwh": total,
            "savings_pct": total / e_total * 100.0 if e_total else 0.0,
            "delta_t_pct": delta_t,
            "savings_pct_dt0": mi / e_total * 100.0 if e_total else 0.0,
        })
    return rows


def write_expected(result: OracleResult, stream: IO[str]) -> None:
    """JSON dump of the oracle's expectations (full precision)."""
    decomposition = result.decomposition
    payload = {
        "modes": {
            mode.token: {
                "sample_count": decomposition.stats(mode).sample_count,
                "gpu_hours": decomposition.stats(mode).gpu_hours,
                "energy_mwh": decomposition.stats(mode).energy_mwh,
                "hours_pct": decomposition.hours_pct(mode),
                "energy_pct": decomposition.energy_pct(mode),
            }
            for mode in OperatingMode
        },
        "totals": {
            "sample_count": decomposition.total_count,
            "gpu_hours": decomposition.total_hours,
            "energy_mwh": decomposition.total_energy_mwh,
        },
    }
    if result.projections is not None:
        payload["projections"] = result.projections
    json.dump(payload, stream, indent=2)
    stream.write("\n")
