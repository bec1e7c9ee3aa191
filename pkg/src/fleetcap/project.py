"""Project fleet-wide energy savings from a modal decomposition and a
characterization table.

The projection applies each cap's measured (or modeled) energy ratios to
the energy observed in the two throttleable regions: compute-intensive
samples respond like the high-intensity kernel (vai columns), memory-
intensive samples like the memory sweep (mb columns). Savings:

    ci_mwh = E_CI x (1 - vai_energy_pct / 100)
    mi_mwh = E_MI x (1 - mb_energy_pct / 100)
    savings_pct = (ci_mwh + mi_mwh) / E_total x 100

Negative terms (caps that cost energy) are reported, never clamped.
savings_pct_dt0 is the zero-slowdown variant: memory-intensive savings
only, since those come with no runtime increase. The runtime-impact
estimate is a weighted sum of each region's runtime excess over 100%,
weighted by the region's share of total energy unless overridden.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .errors import UnknownDomain, UnknownSize, ValidationError
from .gpumodel import CharacterizationTable
from .modal import ModalDecomposition, SliceKey
from .model import CapSetting, JobSizeClass, OperatingMode, cap_key

REPORT_HEADER = [
    "cap_type", "cap_value", "ci_mwh", "mi_mwh", "total_mwh",
    "savings_pct", "delta_t_pct", "savings_pct_dt0",
]
HEATMAP_HEADER = ["domain", "size_class", "energy_mwh", "savings_mwh"]


def region_energies(decomp: ModalDecomposition) -> tuple[float, float, float]:
    """(E_CI, E_MI, E_total) in MWh; an empty decomposition gives (0, 0, 0)."""
    return (
        decomp.stats(OperatingMode.COMPUTE_INTENSIVE).energy_mwh,
        decomp.stats(OperatingMode.MEMORY_INTENSIVE).energy_mwh,
        decomp.total_energy_mwh,
    )


@dataclass(frozen=True)
class ProjectionRow:
    """Projected savings for one cap level."""

    cap: CapSetting
    ci_savings_mwh: float
    mi_savings_mwh: float
    total_savings_mwh: float
    savings_pct: float
    delta_t_pct: float
    savings_pct_dt0: float

    def as_dict(self) -> dict:
        kind, value = cap_key(self.cap)
        return {
            "cap_type": kind,
            "cap_value": value,
            "ci_mwh": self.ci_savings_mwh,
            "mi_mwh": self.mi_savings_mwh,
            "total_mwh": self.total_savings_mwh,
            "savings_pct": self.savings_pct,
            "delta_t_pct": self.delta_t_pct,
            "savings_pct_dt0": self.savings_pct_dt0,
        }


def estimate_delta_t(
    decomp: ModalDecomposition,
    table: CharacterizationTable,
    cap: CapSetting,
    weights: tuple[float, float] | None = None,
) -> float:
    """Estimated fleet runtime increase in percent under one cap.

    Sum over the two regions of weight x max(0, runtime_pct - 100). Default
    weights are each region's share of total energy; pass (w_ci, w_mi) to
    override (e.g. when only a known fraction of compute-intensive work is
    actually frequency-sensitive).
    """
    e_ci, e_mi, e_total = region_energies(decomp)
    if weights is None:
        if e_total == 0:
            return 0.0
        weights = (e_ci / e_total, e_mi / e_total)
    w_ci, w_mi = weights
    row = table.row_for(cap)
    return (
        w_ci * max(0.0, row.vai_runtime_pct - 100.0)
        + w_mi * max(0.0, row.mb_runtime_pct - 100.0)
    )


def _project_regions(
    e_ci: float,
    e_mi: float,
    e_total: float,
    table: CharacterizationTable,
    caps: Sequence[CapSetting],
    delta_t_weights: tuple[float, float] | None,
) -> list[ProjectionRow]:
    rows = []
    for cap in caps:
        trow = table.row_for(cap)
        ci = e_ci * (1.0 - trow.vai_energy_pct / 100.0)
        mi = e_mi * (1.0 - trow.mb_energy_pct / 100.0)
        total = ci + mi
        if delta_t_weights is None:
            weights = (e_ci / e_total, e_mi / e_total) if e_total else (0.0, 0.0)
        else:
            weights = delta_t_weights
        delta_t = (
            weights[0] * max(0.0, trow.vai_runtime_pct - 100.0)
            + weights[1] * max(0.0, trow.mb_runtime_pct - 100.0)
        )
        rows.append(
            ProjectionRow(
                cap=cap,
                ci_savings_mwh=ci,
                mi_savings_mwh=mi,
                total_savings_mwh=total,
                savings_pct=total / e_total * 100.0 if e_total else 0.0,
                delta_t_pct=delta_t,
                savings_pct_dt0=mi / e_total * 100.0 if e_total else 0.0,
            )
        )
    return rows


def project_savings(
    decomp: ModalDecomposition,
    table: CharacterizationTable,
    caps: Sequence[CapSetting],
    delta_t_weights: tuple[float, float] | None = None,
) -> list[ProjectionRow]:
    """Projected savings for each cap, fleet-wide."""
    e_ci, e_mi, e_total = region_energies(decomp)
    return _project_regions(e_ci, e_mi, e_total, table, caps, delta_t_weights)


def filtered_projection(
    slices: Mapping[SliceKey, ModalDecomposition],
    table: CharacterizationTable,
    caps: Sequence[CapSetting],
    domains: Iterable[str] | None = None,
    sizes: Iterable[JobSizeClass] | None = None,
    delta_t_weights: tuple[float, float] | None = None,
) -> list[ProjectionRow]:
    """Savings from the selected slices, as a share of the unfiltered total.

    Percentages keep the unfiltered denominator so filtered rows state what
    the selected workloads contribute to fleet-wide savings. Unknown filter
    values raise (a misspelled domain is a real mistake, not an empty set).
    """
    domain_filter = set(domains) if domains is not None else None
    size_filter = set(sizes) if sizes is not None else None
    seen_domains = {key[0] for key in slices}
    seen_sizes = {key[1] for key in slices if key[1] is not None}
    if domain_filter is not None:
        missing = domain_filter - seen_domains
        if missing:
            raise UnknownDomain(f"domains not in decomposition: {sorted(missing)}")
    if size_filter is not None:
        missing_sizes = size_filter - seen_sizes
        if missing_sizes:
            raise UnknownSize(
                f"size classes not in decomposition: "
                f"{sorted(s.name for s in missing_sizes)}"
            )
    e_ci = e_mi = 0.0
    e_total = 0.0
    for (domain, size), part in slices.items():
        ci, mi, total = region_energies(part)
        e_total += total
        if domain_filter is not None and domain not in domain_filter:
            continue
        if size_filter is not None and size not in size_filter:
            continue
        e_ci += ci
        e_mi += mi
    return _project_regions(e_ci, e_mi, e_total, table, caps, delta_t_weights)


@dataclass(frozen=True)
class HeatmapCell:
    domain: str
    size_class: JobSizeClass | None
    energy_mwh: float
    savings_mwh: float


@dataclass(frozen=True)
class HeatmapReport:
    """Per (domain, size class) energy and projected savings at one cap."""

    cap: CapSetting
    cells: tuple[HeatmapCell, ...]

    def total_savings_mwh(self) -> float:
        return sum(cell.savings_mwh for cell in self.cells)

    def total_energy_mwh(self) -> float:
        return sum(cell.energy_mwh for cell in self.cells)


def heatmap(
    slices: Mapping[SliceKey, ModalDecomposition],
    table: CharacterizationTable,
    cap: CapSetting,
) -> HeatmapReport:
    """Savings opportunity per (domain, size class) cell at one cap."""
    trow = table.row_for(cap)
    cells = []
    for (domain, size), part in sorted(
        slices.items(), key=lambda kv: (kv[0][0], kv[0][1].name if kv[0][1] else "")
    ):
        e_ci, e_mi, e_total = region_energies(part)
        savings = (
            e_ci * (1.0 - trow.vai_energy_pct / 100.0)
            + e_mi * (1.0 - trow.mb_energy_pct / 100.0)
        )
        cells.append(HeatmapCell(domain, size, e_total, savings))
    return HeatmapReport(cap=cap, cells=tuple(cells))


def select_hot_cells(
    report: HeatmapReport,
    threshold_mwh: float,
    sizes: Iterable[JobSizeClass] | None = None,
) -> list[str]:
    """Domains with at least one cell whose savings meet the threshold.

    Pass sizes to restrict the scan (e.g. the large classes A, B, C when
    only at-scale workloads are worth engaging).
    """
    if threshold_mwh < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold_mwh}")
    size_filter = set(sizes) if sizes is not None else None
    domains = []
    for cell in report.cells:
        if size_filter is not None and cell.size_class not in size_filter:
            continue
        if cell.savings_mwh >= threshold_mwh and cell.domain not in domains:
            domains.append(cell.domain)
    return sorted(domains)


def write_report(rows: Sequence[ProjectionRow], stream: IO[str]) -> None:
    """Presentation CSV: MWh at 2 decimals, percentages at 1."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        kind, value = cap_key(row.cap)
        writer.writerow([
            kind, f"{value:g}",
            f"{row.ci_savings_mwh:.2f}", f"{row.mi_savings_mwh:.2f}",
            f"{row.total_savings_mwh:.2f}",
            f"{row.savings_pct:.1f}", f"{row.delta_t_pct:.1f}",
            f"{row.savings_pct_dt0:.1f}",
        ])


def write_report_json(rows: Sequence[ProjectionRow], stream: IO[str]) -> None:
    """Machine mirror of the report CSV, full precision, same field names."""
    json.dump([row.as_dict() for row in rows], stream, indent=2)
    stream.write("\n")


def write_heatmap(report: HeatmapReport, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEATMAP_HEADER)
    for cell in report.cells:
        writer.writerow([
            cell.domain,
            cell.size_class.name if cell.size_class else "",
            f"{cell.energy_mwh:.2f}",
            f"{cell.savings_mwh:.2f}",
        ])


def write_heatmap_json(report: HeatmapReport, stream: IO[str]) -> None:
    kind, value = cap_key(report.cap)
    payload = {
        "cap_type": kind,
        "cap_value": value,
        "cells": [
            {
                "domain": cell.domain,
                "size_class": cell.size_class.name if cell.size_class else None,
                "energy_mwh": cell.energy_mwh,
                "savings_mwh": cell.savings_mwh,
            }
            for cell in report.cells
        ],
    }
    json.dump(payload, stream, indent=2)
    stream.write("\n")
