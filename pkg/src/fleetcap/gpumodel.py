"""Analytical models of GCD behavior under frequency and power caps.

Two modeled microbenchmarks:

* A variable-arithmetic-intensity (VAI) kernel: each work item streams
  doubles and performs 2 x loopsize flops per element, so its arithmetic
  intensity is ai = (2 x loopsize) / (4 x element_size) flop/byte
  (loopsize 0 degenerates to a pure copy, ai = 0, 2 x element_size bytes
  per item). Attainable performance follows a roofline:
  perf(f) = min(peak_flops x f/f_max, ai x peak_bw x (f/f_max)^beta).

* A memory-hierarchy sweep (MB): chunks up to 16 MiB are cache resident
  and their bandwidth scales with core frequency; larger chunks stream
  from HBM, whose bandwidth is insensitive to core frequency but costs
  extra power. Power caps below a configurable floor starve the memory
  system and degrade HBM bandwidth.

Sustained power at full clock is piecewise linear in log2(ai) through
configurable anchors (defaults: 380 W at ai 1/16, 540 W at ai 4, 420 W at
ai 1024, clamped at the ends); frequency scales the dynamic part:
P(f) = p_idle + (P_fmax - p_idle) x (f/f_max)^alpha. A power cap is met by
throttling frequency until P(f) equals the cap, which makes the inversion
closed-form.

A characterization table aggregates both models over a grid of cap levels:
per cap, the unweighted mean across the grid of normalized power, runtime,
and energy, times 100 (the uncapped baseline row is exactly 100).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, fields
from typing import IO, Iterable, Sequence

from ._util import csv_rows, parse_float
from .errors import (
    CapBelowIdle,
    EmptyGrid,
    EnergyIdentityWarning,
    MissingCapRow,
    OutOfRange,
    ValidationError,
)
from .model import (
    GCD_MAX_FREQ_MHZ,
    GCD_TDP_W,
    CapSetting,
    FrequencyCap,
    PowerCap,
    Uncapped,
    cap_from_key,
    cap_key,
)

CHARACTERIZATION_HEADER = [
    "cap_type", "cap_value",
    "vai_power_pct", "vai_runtime_pct", "vai_energy_pct",
    "mb_power_pct", "mb_runtime_pct", "mb_energy_pct",
]
ROOFLINE_HEADER = [
    "ai", "perf_flops", "bandwidth_bps", "power_w", "runtime_norm", "energy_norm",
]

IDENTITY_TOLERANCE_PCT = 0.3

DEFAULT_AI_GRID: tuple[float, ...] = (0.0,) + tuple(2.0 ** k for k in range(-4, 11))

_KIB = 1024
_MIB = 1024 * 1024
DEFAULT_SIZE_GRID: tuple[int, ...] = (
    512 * _KIB, 1 * _MIB, 2 * _MIB, 4 * _MIB, 8 * _MIB, 16 * _MIB,
    32 * _MIB, 64 * _MIB, 128 * _MIB, 256 * _MIB, 512 * _MIB, 1024 * _MIB,
)


@dataclass(frozen=True)
class VaiKernelSpec:
    """Shape of one VAI kernel run."""

    loopsize: int
    element_size: int = 8  # bytes; doubles
    global_work_items: int = 1 << 26
    repeat: int = 1

    def __post_init__(self):
        if self.loopsize < 0:
            raise ValidationError(f"loopsize must be >= 0, got {self.loopsize}")
        if self.element_size <= 0 or self.global_work_items <= 0 or self.repeat < 1:
            raise ValidationError("element_size and work items must be positive, repeat >= 1")


def ai_of(spec: VaiKernelSpec) -> float:
    """Arithmetic intensity in flop/byte: (2 x loopsize) / (4 x element_size)."""
    if spec.loopsize == 0:
        return 0.0
    return (2.0 * spec.loopsize) / (4.0 * spec.element_size)


def bytes_per_item(spec: VaiKernelSpec) -> int:
    """Data moved per work item: 3 reads + 1 write, or 1 read + 1 write for a copy."""
    if spec.loopsize == 0:
        return 2 * spec.element_size
    return 4 * spec.element_size


@dataclass(frozen=True)
class PowerAnchor:
    ai: float
    watts: float


@dataclass(frozen=True)
class GcdModelParams:
    """Parameters of one GCD's roofline and power response."""

    f_max_mhz: float = GCD_MAX_FREQ_MHZ
    tdp_w: float = GCD_TDP_W
    p_idle_w: float = 89.0
    peak_flops: float = 23.9e12
    # crossover at ai = 4 puts the memory roof at peak_flops / 4
    peak_bw: float = 23.9e12 / 4.0
    power_anchors: tuple[PowerAnchor, ...] = (
        PowerAnchor(1.0 / 16.0, 380.0),
        PowerAnchor(4.0, 540.0),
        PowerAnchor(1024.0, 420.0),
    )
    alpha: float = 1.0  # power-vs-frequency exponent
    beta_vai: float = 1.0  # bandwidth-vs-frequency exponent

    def __post_init__(self):
        anchors = tuple(
            a if isinstance(a, PowerAnchor) else PowerAnchor(*a)
            for a in self.power_anchors
        )
        object.__setattr__(self, "power_anchors", anchors)
        if self.f_max_mhz <= 0 or self.peak_flops <= 0 or self.peak_bw <= 0:
            raise ValidationError("f_max, peak_flops, and peak_bw must be positive")
        if self.p_idle_w < 0 or self.p_idle_w >= self.tdp_w:
            raise ValidationError("p_idle must be in [0, tdp)")
        if self.alpha <= 0 or self.beta_vai < 0:
            raise ValidationError("alpha must be > 0 and beta_vai >= 0")
        if not anchors:
            raise ValidationError("at least one power anchor is required")
        ais = [a.ai for a in anchors]
        if sorted(ais) != ais or len(set(ais)) != len(ais):
            raise ValidationError("power anchors must have strictly increasing ai")
        for a in anchors:
            if a.ai <= 0:
                raise ValidationError("anchor ai must be positive")
            if a.watts <= self.p_idle_w:
                raise ValidationError("anchor watts must exceed idle power")


def sustained_power_fmax(ai: float, params: GcdModelParams) -> float:
    """Full-clock sustained power, piecewise linear in log2(ai) between anchors.

    ai at or below the first anchor (including ai = 0) clamps to the first
    anchor's wattage; ai at or above the last clamps to the last.
    """
    if ai < 0:
        raise OutOfRange(f"ai must be >= 0, got {ai}")
    anchors = params.power_anchors
    if ai <= anchors[0].ai:
        return anchors[0].watts
    if ai >= anchors[-1].ai:
        return anchors[-1].watts
    x = math.log2(ai)
    for lo, hi in zip(anchors, anchors[1:]):
        if ai <= hi.ai:
            x0, x1 = math.log2(lo.ai), math.log2(hi.ai)
            t = (x - x0) / (x1 - x0)
            return lo.watts + t * (hi.watts - lo.watts)
    raise AssertionError("unreachable")  # pragma: no cover


def power_at(ai: float, f_mhz: float, params: GcdModelParams | None = None) -> float:
    """Modeled power draw at arithmetic intensity ai and core frequency f."""
    p = params or GcdModelParams()
    if not (0 < f_mhz <= p.f_max_mhz):
        raise OutOfRange(f"frequency must be in (0, {p.f_max_mhz:g}] MHz, got {f_mhz}")
    scale = (f_mhz / p.f_max_mhz) ** p.alpha
    return p.p_idle_w + (sustained_power_fmax(ai, p) - p.p_idle_w) * scale


def power_capped_freq(
    ai: float, cap_watts: float, params: GcdModelParams | None = None
) -> float:
    """Highest frequency whose modeled power fits under cap_watts.

    Returns f_max when the cap does not bind. Raises CapBelowIdle when the
    cap is at or below idle power (no frequency can satisfy it).
    """
    p = params or GcdModelParams()
    if cap_watts <= p.p_idle_w:
        raise CapBelowIdle(
            f"cap {cap_watts:g} W is at or below idle power {p.p_idle_w:g} W"
        )
    sustained = sustained_power_fmax(ai, p)
    if sustained <= cap_watts:
        return p.f_max_mhz
    ratio = (cap_watts - p.p_idle_w) / (sustained - p.p_idle_w)
    return p.f_max_mhz * ratio ** (1.0 / p.alpha)


def effective_frequency(
    ai: float, cap: CapSetting, params: GcdModelParams | None = None
) -> float:
    """Core frequency the GCD settles at under the given cap."""
    p = params or GcdModelParams()
    if isinstance(cap, Uncapped):
        return p.f_max_mhz
    if isinstance(cap, FrequencyCap):
        return min(cap.mhz, p.f_max_mhz)
    if isinstance(cap, PowerCap):
        return power_capped_freq(ai, cap.watts, p)
    raise ValidationError(f"not a cap setting: {cap!r}")


def _rates_at(ai: float, f_mhz: float, p: GcdModelParams) -> tuple[float, float]:
    """(perf flops, bandwidth bytes/s) at an explicit frequency."""
    s = f_mhz / p.f_max_mhz
    mem_roof = p.peak_bw * s ** p.beta_vai
    if ai == 0.0:
        return 0.0, mem_roof
    perf = min(p.peak_flops * s, ai * mem_roof)
    return perf, perf / ai


def attainable_perf(
    ai: float, cap: CapSetting, params: GcdModelParams | None = None
) -> tuple[float, float]:
    """Roofline-attainable (perf flops, bandwidth bytes/s) under a cap."""
    p = params or GcdModelParams()
    if ai < 0:
        raise OutOfRange(f"ai must be >= 0, got {ai}")
    return _rates_at(ai, effective_frequency(ai, cap, p), p)


@dataclass(frozen=True)
class RooflinePoint:
    """One simulated VAI operating point under a cap."""

    ai: float
    perf_flops: float
    bandwidth_bps: float
    power_w: float
    runtime_norm: float  # capped runtime / uncapped runtime
    power_norm: float  # capped power / uncapped power
    energy_norm: float  # product of the two


def simulate_vai(
    ai: float, cap: CapSetting, params: GcdModelParams | None = None
) -> RooflinePoint:
    """Simulate the VAI kernel at one arithmetic intensity under one cap.

    Runtime normalization compares work rates (performance, or bandwidth for
    the ai = 0 copy kernel); the uncapped baseline yields exactly (1, 1, 1).
    """
    p = params or GcdModelParams()
    if ai < 0:
        raise OutOfRange(f"ai must be >= 0, got {ai}")
    f = effective_frequency(ai, cap, p)
    perf, bandwidth = _rates_at(ai, f, p)
    perf_base, bw_base = _rates_at(ai, p.f_max_mhz, p)
    rate, rate_base = (perf, perf_base) if ai > 0 else (bandwidth, bw_base)
    runtime_norm = rate_base / rate
    power = power_at(ai, f, p)
    power_base = power_at(ai, p.f_max_mhz, p)
    power_norm = power / power_base
    return RooflinePoint(
        ai=ai,
        perf_flops=perf,
        bandwidth_bps=bandwidth,
        power_w=power,
        runtime_norm=runtime_norm,
        power_norm=power_norm,
        energy_norm=power_norm * runtime_norm,
    )


@dataclass(frozen=True)
class MemModelParams:
    """Parameters of the memory-hierarchy sweep model."""

    l2_size_bytes: int = 16 * _MIB
    l2_bw_at_fmax: float = 4.0e12
    hbm_bw: float = 1.6e12
    hbm_extra_power_w: float = 60.0  # added draw while streaming from HBM
    hbm_cap_floor_w: float = 250.0  # power caps below this degrade HBM bandwidth
    chunk_start_bytes: int = 384 * _KIB
    blocks: int = 100_000
    threads_per_block: int = 1024

    def __post_init__(self):
        if not (self.l2_bw_at_fmax > self.hbm_bw > 0):
            raise ValidationError("need l2_bw_at_fmax > hbm_bw > 0")
        if self.l2_size_bytes <= 0 or self.chunk_start_bytes <= 0:
            raise ValidationError("sizes must be positive")
        if self.chunk_start_bytes > self.l2_size_bytes:
            raise ValidationError("chunk_start must not exceed l2_size")
        if self.hbm_extra_power_w < 0 or self.hbm_cap_floor_w <= 0:
            raise ValidationError("hbm_extra_power must be >= 0, cap floor positive")
        if self.blocks <= 0 or self.threads_per_block <= 0:
            raise ValidationError("blocks and threads_per_block must be positive")


@dataclass(frozen=True)
class MemBenchPoint:
    """Modeled memory-sweep behavior at one working-set size under a cap."""

    data_size_bytes: int
    bandwidth_bps: float
    power_w: float
    runtime_norm: float


def simulate_mb(
    data_size: int,
    cap: CapSetting,
    mem: MemModelParams | None = None,
    gcd: GcdModelParams | None = None,
) -> MemBenchPoint:
    """Simulate the memory sweep at one working-set size under one cap.

    Cache-resident sizes (<= l2_size) behave like the ai = 0 stream: their
    bandwidth and power scale with frequency, so a frequency cap f yields
    runtime_norm exactly f_max / f. HBM-resident sizes hold bandwidth
    constant under any frequency cap (runtime_norm 1.0) while shedding core
    power; under power caps they run at the cap down to hbm_cap_floor_w,
    below which the modeled power stays at the floor (the cap is breached)
    and bandwidth degrades proportionally to cap / floor.
    """
    m = mem or MemModelParams()
    g = gcd or GcdModelParams()
    if data_size < m.chunk_start_bytes:
        raise OutOfRange(
            f"data_size {data_size} is below the modeled minimum "
            f"{m.chunk_start_bytes}"
        )
    if data_size <= m.l2_size_bytes:
        return _mb_l2(data_size, cap, m, g)
    return _mb_hbm(data_size, cap, m, g)


def _mb_l2(data_size, cap, m, g) -> MemBenchPoint:
    if isinstance(cap, PowerCap):
        f = power_capped_freq(0.0, cap.watts, g)
    else:
        f = effective_frequency(0.0, cap, g)
    s = f / g.f_max_mhz
    return MemBenchPoint(
        data_size_bytes=data_size,
        bandwidth_bps=m.l2_bw_at_fmax * s,
        power_w=power_at(0.0, f, g),
        runtime_norm=1.0 / s,
    )


def _mb_hbm(data_size, cap, m, g) -> MemBenchPoint:
    sustained = sustained_power_fmax(0.0, g) + m.hbm_extra_power_w
    if isinstance(cap, FrequencyCap):
        f = min(cap.mhz, g.f_max_mhz)
        power = power_at(0.0, f, g) + m.hbm_extra_power_w
        return MemBenchPoint(data_size, m.hbm_bw, power, 1.0)
    if isinstance(cap, PowerCap):
        c = cap.watts
        if c <= g.p_idle_w:
            raise CapBelowIdle(
                f"cap {c:g} W is at or below idle power {g.p_idle_w:g} W"
            )
        if c >= sustained:
            return MemBenchPoint(data_size, m.hbm_bw, sustained, 1.0)
        if c >= m.hbm_cap_floor_w:
            # core throttling sheds the controllable draw; HBM keeps streaming
            return MemBenchPoint(data_size, m.hbm_bw, c, 1.0)
        floor = min(m.hbm_cap_floor_w, sustained)
        scale = c / m.hbm_cap_floor_w
        return MemBenchPoint(data_size, m.hbm_bw * scale, floor, 1.0 / scale)
    return MemBenchPoint(data_size, m.hbm_bw, sustained, 1.0)


@dataclass(frozen=True)
class ModelConfig:
    """Both model parameter sets bundled for configuration files."""

    gcd: GcdModelParams = field(default_factory=GcdModelParams)
    mem: MemModelParams = field(default_factory=MemModelParams)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        unknown = set(data) - {"gcd", "mem"}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        gcd_kwargs = dict(data.get("gcd", {}))
        if "power_anchors" in gcd_kwargs:
            gcd_kwargs["power_anchors"] = tuple(
                PowerAnchor(*pair) for pair in gcd_kwargs["power_anchors"]
            )
        mem_kwargs = dict(data.get("mem", {}))
        for label, kwargs, params in (("gcd", gcd_kwargs, GcdModelParams),
                                      ("mem", mem_kwargs, MemModelParams)):
            bad = set(kwargs) - {f.name for f in fields(params)}
            if bad:
                raise ValidationError(f"unknown {label} parameters: {sorted(bad)}")
        return cls(
            gcd=GcdModelParams(**gcd_kwargs),
            mem=MemModelParams(**mem_kwargs),
        )


@dataclass(frozen=True)
class CharacterizationRow:
    """One cap level's mean normalized behavior, in percent of uncapped."""

    cap: CapSetting
    vai_power_pct: float
    vai_runtime_pct: float
    vai_energy_pct: float
    mb_power_pct: float
    mb_runtime_pct: float
    mb_energy_pct: float

    def identity_gap(self, kernel: str) -> float:
        """|energy - power x runtime / 100| for one kernel column group."""
        if kernel == "vai":
            return abs(self.vai_energy_pct
                       - self.vai_power_pct * self.vai_runtime_pct / 100.0)
        if kernel == "mb":
            return abs(self.mb_energy_pct
                       - self.mb_power_pct * self.mb_runtime_pct / 100.0)
        raise ValidationError(f"kernel must be vai or mb, got {kernel!r}")


@dataclass(frozen=True)
class CharacterizationTable:
    rows: tuple[CharacterizationRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def row_for(self, cap: CapSetting) -> CharacterizationRow:
        key = cap_key(cap)
        for row in self.rows:
            if cap_key(row.cap) == key:
                return row
        raise MissingCapRow(f"no characterization row for cap {key[0]}:{key[1]:g}")

    def identity_violations(
        self, tolerance: float = IDENTITY_TOLERANCE_PCT
    ) -> list[tuple[CharacterizationRow, str, float]]:
        """Rows whose energy column strays from power x runtime / 100."""
        found = []
        for row in self.rows:
            for kernel in ("vai", "mb"):
                gap = row.identity_gap(kernel)
                if gap > tolerance:
                    found.append((row, kernel, gap))
        return found


def is_baseline(cap: CapSetting, params: GcdModelParams | None = None) -> bool:
    p = params or GcdModelParams()
    if isinstance(cap, Uncapped):
        return True
    if isinstance(cap, FrequencyCap):
        return cap.mhz >= p.f_max_mhz
    if isinstance(cap, PowerCap):
        return cap.watts >= p.tdp_w
    return False


def characterize(
    cap_levels: Sequence[CapSetting],
    config: ModelConfig | None = None,
    ai_grid: Sequence[float] | None = None,
    size_grid: Sequence[int] | None = None,
) -> CharacterizationTable:
    """Run both models over grids and summarize each cap level.

    Columns are the unweighted mean across the grid of normalized power,
    runtime, and energy, times 100. Baseline cap levels (uncapped, f_max,
    or TDP) are forced to exactly 100 so the table is anchored.
    """
    cfg = config or ModelConfig()
    ais = DEFAULT_AI_GRID if ai_grid is None else tuple(ai_grid)
    sizes = DEFAULT_SIZE_GRID if size_grid is None else tuple(size_grid)
    if not ais or not sizes:
        raise EmptyGrid("characterization grids must be non-empty")
    if not cap_levels:
        raise EmptyGrid("need at least one cap level")

    mb_base = {size: simulate_mb(size, Uncapped(), cfg.mem, cfg.gcd) for size in sizes}
    rows = []
    for cap in cap_levels:
        if is_baseline(cap, cfg.gcd):
            rows.append(CharacterizationRow(cap, 100.0, 100.0, 100.0,
                                            100.0, 100.0, 100.0))
            continue
        vai_points = [simulate_vai(ai, cap, cfg.gcd) for ai in ais]
        vai_power = _mean(pt.power_norm for pt in vai_points)
        vai_runtime = _mean(pt.runtime_norm for pt in vai_points)
        vai_energy = _mean(pt.energy_norm for pt in vai_points)
        mb_power_norms = []
        mb_runtime_norms = []
        mb_energy_norms = []
        for size in sizes:
            pt = simulate_mb(size, cap, cfg.mem, cfg.gcd)
            power_norm = pt.power_w / mb_base[size].power_w
            mb_power_norms.append(power_norm)
            mb_runtime_norms.append(pt.runtime_norm)
            mb_energy_norms.append(power_norm * pt.runtime_norm)
        rows.append(
            CharacterizationRow(
                cap=cap,
                vai_power_pct=vai_power * 100.0,
                vai_runtime_pct=vai_runtime * 100.0,
                vai_energy_pct=vai_energy * 100.0,
                mb_power_pct=_mean(mb_power_norms) * 100.0,
                mb_runtime_pct=_mean(mb_runtime_norms) * 100.0,
                mb_energy_pct=_mean(mb_energy_norms) * 100.0,
            )
        )
    return CharacterizationTable(rows=tuple(rows))


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values)


def save_characterization(table: CharacterizationTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CHARACTERIZATION_HEADER)
    for row in table.rows:
        kind, value = cap_key(row.cap)
        writer.writerow([
            kind, f"{value:g}",
            repr(float(row.vai_power_pct)), repr(float(row.vai_runtime_pct)),
            repr(float(row.vai_energy_pct)), repr(float(row.mb_power_pct)),
            repr(float(row.mb_runtime_pct)), repr(float(row.mb_energy_pct)),
        ])


def load_characterization(stream) -> CharacterizationTable:
    """Load a characterization table, warning on inconsistent rows.

    Rows where |energy - power x runtime / 100| exceeds 0.3 percentage
    points raise EnergyIdentityWarning (measured tables contain such rows;
    they load fine and project fine).
    """
    rows = []
    for line, row in csv_rows(stream, CHARACTERIZATION_HEADER):
        cap = cap_from_key(row[0], parse_float(row[1], "cap_value", line))
        values = [parse_float(tok, name, line)
                  for tok, name in zip(row[2:], CHARACTERIZATION_HEADER[2:])]
        rows.append(CharacterizationRow(cap, *values))
    table = CharacterizationTable(rows=tuple(rows))
    for row, kernel, gap in table.identity_violations():
        kind, value = cap_key(row.cap)
        warnings.warn(
            f"{kernel} columns at {kind}:{value:g} break the energy identity "
            f"by {gap:.2f} points (energy != power x runtime / 100)",
            EnergyIdentityWarning,
            stacklevel=2,
        )
    return table


def write_roofline(points: Iterable[RooflinePoint], stream: IO[str]) -> None:
    """Dump simulated VAI points for one cap level (plotting input)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ROOFLINE_HEADER)
    for pt in points:
        writer.writerow([
            repr(float(pt.ai)), repr(float(pt.perf_flops)),
            repr(float(pt.bandwidth_bps)), repr(float(pt.power_w)),
            repr(float(pt.runtime_norm)), repr(float(pt.energy_norm)),
        ])
