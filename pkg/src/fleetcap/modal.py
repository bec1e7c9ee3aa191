"""Histogram and operating-mode decomposition of 15-s GCD power samples.

A decomposition buckets every sample into one of the four operating modes
and accounts GPU-hours (count x 15 s) and energy (watts x 15 s) per mode.
Decompositions can be sliced by science domain or (domain, size class) and
merged; the per-mode energies always partition the total exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from ._util import csv_rows, parse_float, parse_int, text_lines
from .errors import ValidationError
from .jobjoin import JobPowerSeries
from .model import (
    AGGREGATION_WINDOW_S,
    GCD_POWER_CEILING_W,
    JOULES_PER_MWH,
    AggregatedSample,
    JobSizeClass,
    ModeThresholds,
    OperatingMode,
)

HISTOGRAM_HEADER = ["bin_start_w", "count"]
DECOMP_HEADER = [
    "mode", "sample_count", "gpu_hours", "energy_mwh", "hours_pct", "energy_pct",
]
SLICED_DECOMP_HEADER = ["science_domain", "job_size_class"] + DECOMP_HEADER

SliceKey = tuple[str, "JobSizeClass | None"]


def classify_sample(watts: float, thresholds: ModeThresholds | None = None) -> OperatingMode:
    """Map one 15-s GCD wattage to its operating mode.

    Bands: w <= t_low latency bound; t_low < w <= t_mid memory intensive;
    t_mid < w < t_tdp compute intensive; w >= t_tdp boosted.
    """
    t = thresholds or ModeThresholds()
    if watts <= t.t_low:
        return OperatingMode.LATENCY_BOUND
    if watts <= t.t_mid:
        return OperatingMode.MEMORY_INTENSIVE
    if watts < t.t_tdp:
        return OperatingMode.COMPUTE_INTENSIVE
    return OperatingMode.BOOSTED


@dataclass(frozen=True)
class PowerHistogram:
    """Fixed-width wattage histogram over [0, 700)."""

    bin_width: float
    counts: tuple[int, ...]

    @property
    def total_count(self) -> int:
        return sum(self.counts)

    def bin_index(self, watts: float) -> int:
        # the 700 W ceiling itself lands in the last bin
        return min(int(watts // self.bin_width), len(self.counts) - 1)


def histogram(watts: Iterable[float], bin_width: float = 5.0) -> PowerHistogram:
    if bin_width <= 0:
        raise ValidationError(f"bin_width must be positive, got {bin_width}")
    nbins = math.ceil(GCD_POWER_CEILING_W / bin_width)
    counts = [0] * nbins
    for w in watts:
        counts[min(int(w // bin_width), nbins - 1)] += 1
    return PowerHistogram(bin_width=bin_width, counts=tuple(counts))


@dataclass(frozen=True)
class ModeStats:
    sample_count: int = 0
    energy_mwh: float = 0.0

    @property
    def gpu_hours(self) -> float:
        return self.sample_count * AGGREGATION_WINDOW_S / 3600.0


@dataclass(frozen=True)
class ModalDecomposition:
    """Per-mode sample counts and energies, plus the slice they describe."""

    modes: Mapping[OperatingMode, ModeStats] = field(default_factory=dict)
    slice_key: SliceKey | None = None

    def stats(self, mode: OperatingMode) -> ModeStats:
        return self.modes.get(mode, ModeStats())

    @property
    def total_count(self) -> int:
        return sum(s.sample_count for s in self.modes.values())

    @property
    def total_hours(self) -> float:
        return self.total_count * AGGREGATION_WINDOW_S / 3600.0

    @property
    def total_energy_mwh(self) -> float:
        return sum(s.energy_mwh for s in self.modes.values())

    def hours_pct(self, mode: OperatingMode) -> float:
        total = self.total_count
        return self.stats(mode).sample_count / total * 100.0 if total else 0.0

    def energy_pct(self, mode: OperatingMode) -> float:
        total = self.total_energy_mwh
        return self.stats(mode).energy_mwh / total * 100.0 if total else 0.0

    def merge(self, other: "ModalDecomposition") -> "ModalDecomposition":
        merged = {}
        for mode in OperatingMode:
            a, b = self.stats(mode), other.stats(mode)
            merged[mode] = ModeStats(
                sample_count=a.sample_count + b.sample_count,
                energy_mwh=a.energy_mwh + b.energy_mwh,
            )
        key = self.slice_key if self.slice_key == other.slice_key else None
        return ModalDecomposition(modes=merged, slice_key=key)

    @classmethod
    def from_mode_totals(
        cls,
        totals: Mapping[OperatingMode, tuple[int, float]],
        slice_key: SliceKey | None = None,
    ) -> "ModalDecomposition":
        """Build directly from per-mode (sample_count, energy_mwh) pairs."""
        return cls(
            modes={m: ModeStats(c, e) for m, (c, e) in totals.items()},
            slice_key=slice_key,
        )


def decompose(
    samples: Iterable[AggregatedSample], thresholds: ModeThresholds | None = None
) -> ModalDecomposition:
    """System-wide decomposition: every GCD reading of every sample."""
    t = thresholds or ModeThresholds()
    counts = {m: 0 for m in OperatingMode}
    watt_sums = {m: 0.0 for m in OperatingMode}
    for sample in samples:
        for w in sample.gcd_power_w:
            mode = classify_sample(w, t)
            counts[mode] += 1
            watt_sums[mode] += w
    return ModalDecomposition(
        modes={
            m: ModeStats(counts[m], watt_sums[m] * AGGREGATION_WINDOW_S / JOULES_PER_MWH)
            for m in OperatingMode
        }
    )


def decompose_series(
    series_set: Iterable[JobPowerSeries],
    thresholds: ModeThresholds | None = None,
    slice_by: str | None = None,
) -> "ModalDecomposition | dict[SliceKey, ModalDecomposition]":
    """Decompose job-attributed samples, optionally sliced.

    slice_by: None for a single system-wide result, "domain" to group by
    science domain, "domain_size" to group by (domain, size class).
    """
    if slice_by not in (None, "domain", "domain_size"):
        raise ValidationError(f"slice_by must be domain or domain_size, got {slice_by!r}")
    t = thresholds or ModeThresholds()
    acc: dict[SliceKey, tuple[dict, dict]] = {}
    for series in series_set:
        if slice_by == "domain":
            key: SliceKey = (series.science_domain, None)
        else:
            key = (series.science_domain, series.job_size_class)
        counts, watt_sums = acc.setdefault(
            key, ({m: 0 for m in OperatingMode}, {m: 0.0 for m in OperatingMode})
        )
        for w in series.iter_watts():
            mode = classify_sample(w, t)
            counts[mode] += 1
            watt_sums[mode] += w
    results = {
        key: ModalDecomposition(
            modes={
                m: ModeStats(c[m], ws[m] * AGGREGATION_WINDOW_S / JOULES_PER_MWH)
                for m in OperatingMode
            },
            slice_key=key,
        )
        for key, (c, ws) in acc.items()
    }
    if slice_by is None:
        merged = ModalDecomposition()
        for part in results.values():
            merged = merged.merge(part)
        return ModalDecomposition(modes=merged.modes, slice_key=None)
    return dict(sorted(results.items(), key=_slice_sort_key))


def _slice_sort_key(item):
    (domain, size), _ = item
    return (domain, size.name if size else "")


def merge_decompositions(parts: Iterable[ModalDecomposition]) -> ModalDecomposition:
    merged = ModalDecomposition()
    for part in parts:
        merged = merged.merge(part)
    return merged


def write_histogram(hist: PowerHistogram, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HISTOGRAM_HEADER)
    for i, count in enumerate(hist.counts):
        writer.writerow([repr(float(i * hist.bin_width)), count])


def write_decomposition(
    decomp: "ModalDecomposition | Mapping[SliceKey, ModalDecomposition]",
    stream: IO[str],
) -> None:
    """Write one decomposition (plain format) or a slice mapping (sliced format)."""
    writer = csv.writer(stream, lineterminator="\n")
    if isinstance(decomp, ModalDecomposition):
        writer.writerow(DECOMP_HEADER)
        for mode in OperatingMode:
            writer.writerow(_mode_row(decomp, mode))
        return
    writer.writerow(SLICED_DECOMP_HEADER)
    for (domain, size), part in sorted(decomp.items(), key=_slice_sort_key):
        for mode in OperatingMode:
            writer.writerow([domain, size.name if size else ""] + _mode_row(part, mode))


def _mode_row(decomp: ModalDecomposition, mode: OperatingMode) -> list:
    stats = decomp.stats(mode)
    return [
        mode.token,
        stats.sample_count,
        repr(float(stats.gpu_hours)),
        repr(float(stats.energy_mwh)),
        repr(float(decomp.hours_pct(mode))),
        repr(float(decomp.energy_pct(mode))),
    ]


def read_decomposition(
    stream,
) -> "ModalDecomposition | dict[SliceKey, ModalDecomposition]":
    """Read either decomposition format back; sliced input returns a mapping."""
    lines = list(text_lines(stream))
    header = next(csv.reader(lines[:1])) if lines else []
    sliced = [c.strip().lower() for c in header] == SLICED_DECOMP_HEADER
    expected = SLICED_DECOMP_HEADER if sliced else DECOMP_HEADER
    acc: dict[SliceKey, dict[OperatingMode, ModeStats]] = {}
    for line, row in csv_rows(lines, expected):
        if sliced:
            domain = row[0].strip()
            size = JobSizeClass.from_token(row[1]) if row[1].strip() else None
            key: SliceKey = (domain, size)
            row = row[2:]
        else:
            key = ("", None)
        mode = OperatingMode.from_token(row[0])
        count = parse_int(row[1], "sample_count", line)
        energy = parse_float(row[3], "energy_mwh", line)
        acc.setdefault(key, {})[mode] = ModeStats(count, energy)
    if sliced:
        return {
            key: ModalDecomposition(modes=modes, slice_key=key)
            for key, modes in acc.items()
        }
    modes = acc.get(("", None), {})
    return ModalDecomposition(modes=modes)
