"""Core domain types for GPU fleet power analysis.

The unit of accounting is one GCD (Graphics Compute Die); each node carries
8 of them (4 dual-die GPU packages). Telemetry arrives as per-node samples
holding one reading per GCD, gets averaged onto a 15-second grid, and every
15-s GCD reading is then classified into one of four operating modes by the
band its wattage falls in.

All types are plain frozen dataclasses. Validation is explicit (pure
functions, no I/O) so parsers can gate exactly where the spec wants them to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

from .errors import InvalidJob, InvalidPower, OutOfRange, ValidationError, WrongGcdCount

GCDS_PER_NODE = 8
GCD_POWER_CEILING_W = 700.0  # sanity ceiling; boosted samples exceed the 560 W TDP
GCD_TDP_W = 560.0
GCD_MAX_FREQ_MHZ = 1700.0
GCD_IDLE_POWER_W = 89.0
AGGREGATION_WINDOW_S = 15
JOULES_PER_MWH = 3.6e9

MIN_JOB_NODES = 1
MAX_JOB_NODES = 9408  # full-system node count


@dataclass(frozen=True)
class PowerSample:
    """One raw telemetry row: instantaneous power readings for one node."""

    timestamp: int  # epoch seconds
    node_id: str
    input_power_w: float
    cpu_power_w: float
    gcd_power_w: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gcd_power_w", tuple(self.gcd_power_w))


@dataclass(frozen=True)
class AggregatedSample(PowerSample):
    """A PowerSample averaged over a 15-s window; timestamp is the window start."""


def validate_sample(sample: PowerSample) -> PowerSample:
    """Check sample invariants and return the sample unchanged.

    Raises WrongGcdCount unless exactly 8 GCD readings are present,
    InvalidPower for negative/non-finite readings or a GCD reading above
    the 700 W ceiling, and ValidationError for a misaligned aggregate
    timestamp.
    """
    if len(sample.gcd_power_w) != GCDS_PER_NODE:
        raise WrongGcdCount(
            f"expected {GCDS_PER_NODE} gcd readings, got {len(sample.gcd_power_w)}"
        )
    for label, value in (("input_power_w", sample.input_power_w),
                         ("cpu_power_w", sample.cpu_power_w)):
        if not math.isfinite(value) or value < 0:
            raise InvalidPower(f"{label} must be finite and >= 0, got {value!r}")
    for i, value in enumerate(sample.gcd_power_w):
        if not math.isfinite(value) or value < 0:
            raise InvalidPower(f"gcd{i}_w must be finite and >= 0, got {value!r}")
        if value > GCD_POWER_CEILING_W:
            raise InvalidPower(
                f"gcd{i}_w = {value!r} exceeds the {GCD_POWER_CEILING_W:.0f} W ceiling"
            )
    if isinstance(sample, AggregatedSample) and sample.timestamp % AGGREGATION_WINDOW_S:
        raise ValidationError(
            f"aggregated timestamp {sample.timestamp} is not on the "
            f"{AGGREGATION_WINDOW_S}-s grid"
        )
    return sample


class OperatingMode(IntEnum):
    """Power-band classification of one 15-s GCD sample.

    Band edges (default thresholds, watts): <=200 latency bound, (200, 420]
    memory intensive, (420, 560) compute intensive, >=560 boosted. Numeric
    order follows increasing wattage so classification is monotone.
    """

    LATENCY_BOUND = 1
    MEMORY_INTENSIVE = 2
    COMPUTE_INTENSIVE = 3
    BOOSTED = 4

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "OperatingMode":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown operating mode {token!r}") from None


@dataclass(frozen=True)
class ModeThresholds:
    """Band edges for mode classification, in watts."""

    t_low: float = 200.0
    t_mid: float = 420.0
    t_tdp: float = GCD_TDP_W

    def __post_init__(self):
        if not (0 < self.t_low < self.t_mid < self.t_tdp):
            raise ValidationError(
                f"thresholds must satisfy 0 < t_low < t_mid < t_tdp, got "
                f"({self.t_low}, {self.t_mid}, {self.t_tdp})"
            )


class JobSizeClass(Enum):
    """Job size bands by node count (closed ranges)."""

    A = (5645, 9408)
    B = (1882, 5644)
    C = (184, 1881)
    D = (92, 183)
    E = (1, 91)

    @property
    def min_nodes(self) -> int:
        return self.value[0]

    @property
    def max_nodes(self) -> int:
        return self.value[1]

    @classmethod
    def from_token(cls, token: str) -> "JobSizeClass":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown job size class {token!r}") from None


def classify_job_size(num_nodes: int) -> JobSizeClass:
    """Map a node count to its size class; OutOfRange outside [1, 9408]."""
    if not (MIN_JOB_NODES <= num_nodes <= MAX_JOB_NODES):
        raise OutOfRange(
            f"num_nodes must be in [{MIN_JOB_NODES}, {MAX_JOB_NODES}], got {num_nodes}"
        )
    for cls in JobSizeClass:
        lo, hi = cls.value
        if lo <= num_nodes <= hi:
            return cls
    raise AssertionError("size classes cover 1..9408")  # pragma: no cover


@dataclass(frozen=True)
class JobRecord:
    """One scheduler job joined with its node allocations."""

    job_id: str
    project_id: str
    num_nodes: int
    begin_time: int  # epoch seconds, inclusive
    end_time: int  # epoch seconds, exclusive
    node_ids: frozenset[str] = field(default_factory=frozenset)
    science_domain: str | None = None  # derived from project_id by jobjoin

    def __post_init__(self):
        object.__setattr__(self, "node_ids", frozenset(self.node_ids))

    def validate(self) -> "JobRecord":
        if not self.job_id.strip():
            raise InvalidJob("empty job_id")
        if self.begin_time >= self.end_time:
            raise InvalidJob(
                f"job {self.job_id}: begin_time {self.begin_time} is not before "
                f"end_time {self.end_time}"
            )
        if self.num_nodes != len(self.node_ids):
            raise InvalidJob(
                f"job {self.job_id}: num_nodes={self.num_nodes} but "
                f"{len(self.node_ids)} allocated nodes"
            )
        classify_job_size(self.num_nodes)
        return self

    def with_domain(self, domain: str) -> "JobRecord":
        return replace(self, science_domain=domain)

    def covers(self, timestamp: int) -> bool:
        return self.begin_time <= timestamp < self.end_time


@dataclass(frozen=True)
class FrequencyCap:
    """A GCD core-clock cap in MHz; 1700 MHz is the uncapped baseline."""

    mhz: float

    def __post_init__(self):
        if not (0 < self.mhz <= GCD_MAX_FREQ_MHZ):
            raise ValidationError(
                f"frequency cap must be in (0, {GCD_MAX_FREQ_MHZ:.0f}] MHz, got {self.mhz}"
            )


@dataclass(frozen=True)
class PowerCap:
    """A per-GCD power cap in watts; 560 W is the uncapped baseline."""

    watts: float

    def __post_init__(self):
        if not (0 < self.watts <= GCD_TDP_W):
            raise ValidationError(
                f"power cap must be in (0, {GCD_TDP_W:.0f}] W, got {self.watts}"
            )


@dataclass(frozen=True)
class Uncapped:
    """No cap applied; the 1700 MHz / 560 W baseline."""


CapSetting = FrequencyCap | PowerCap | Uncapped


def cap_key(cap: CapSetting) -> tuple[str, float]:
    """Stable (type token, value) key for file rows and dict lookups."""
    if isinstance(cap, FrequencyCap):
        return ("freq", cap.mhz)
    if isinstance(cap, PowerCap):
        return ("power", cap.watts)
    if isinstance(cap, Uncapped):
        return ("uncapped", 0.0)
    raise ValidationError(f"not a cap setting: {cap!r}")


def cap_from_key(cap_type: str, value: float) -> CapSetting:
    token = cap_type.strip().lower()
    if token in ("freq", "frequency", "mhz"):
        return FrequencyCap(value)
    if token in ("power", "watts", "w"):
        return PowerCap(value)
    if token == "uncapped":
        return Uncapped()
    raise ValidationError(f"unknown cap type {cap_type!r}")


def parse_cap(token: str) -> CapSetting:
    """Parse a 'freq:1500' / 'power:300' / 'uncapped' token."""
    token = token.strip()
    if token.lower() == "uncapped":
        return Uncapped()
    kind, sep, value = token.partition(":")
    if not sep:
        raise ValidationError(f"cap must look like freq:1500 or power:300, got {token!r}")
    try:
        num = float(value)
    except ValueError:
        raise ValidationError(f"cap value {value!r} is not a number") from None
    return cap_from_key(kind, num)


def format_cap(cap: CapSetting) -> str:
    kind, value = cap_key(cap)
    if kind == "uncapped":
        return "uncapped"
    return f"{kind}:{value:g}"
