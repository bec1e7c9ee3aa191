"""fleetcap: GPU fleet power telemetry pipeline and cap-savings models.

The package follows the pipeline shape: ingest raw node telemetry,
aggregate it to 15-s windows, join samples to scheduler jobs, decompose
GPU power into operating modes, characterize how capped GPUs behave with
a pair of analytic benchmark models, and project fleet-wide energy
savings under frequency or power caps. A deterministic synthetic
generator with a closed-form oracle exercises the whole chain.
"""

from .errors import (
    CapBelowIdle,
    DanglingAllocationWarning,
    DataQualityWarning,
    EmptyGrid,
    EmptyProjectId,
    EnergyIdentityWarning,
    FleetcapError,
    InvalidJob,
    InvalidPower,
    InvalidSpec,
    MissingCapRow,
    OutOfRange,
    OverlappingJobsWarning,
    ParseError,
    UnknownDomain,
    UnknownSize,
    UsageError,
    ValidationError,
    WrongGcdCount,
)
from .model import (
    AGGREGATION_WINDOW_S,
    GCD_IDLE_POWER_W,
    GCD_MAX_FREQ_MHZ,
    GCD_POWER_CEILING_W,
    GCD_TDP_W,
    GCDS_PER_NODE,
    AggregatedSample,
    CapSetting,
    FrequencyCap,
    JobRecord,
    JobSizeClass,
    ModeThresholds,
    OperatingMode,
    PowerCap,
    PowerSample,
    Uncapped,
    classify_job_size,
    format_cap,
    parse_cap,
    validate_sample,
)
from .ingest import (
    aggregate_15s,
    load_jobs,
    parse_allocations,
    parse_scheduler,
    parse_telemetry,
    read_aggregated,
    write_telemetry,
)
from .jobjoin import (
    JobPowerSeries,
    derive_domain,
    gpu_hours,
    integrate_energy,
    join,
    read_joined,
    summarize,
    write_joined,
    write_summaries,
)
from .modal import (
    ModalDecomposition,
    ModeStats,
    PowerHistogram,
    classify_sample,
    decompose,
    decompose_series,
    histogram,
    merge_decompositions,
    read_decomposition,
    write_decomposition,
    write_histogram,
)
from .gpumodel import (
    CharacterizationRow,
    CharacterizationTable,
    GcdModelParams,
    MemModelParams,
    ModelConfig,
    RooflinePoint,
    VaiKernelSpec,
    ai_of,
    attainable_perf,
    characterize,
    load_characterization,
    power_at,
    power_capped_freq,
    save_characterization,
    simulate_mb,
    simulate_vai,
)
from .project import (
    HeatmapCell,
    HeatmapReport,
    ProjectionRow,
    estimate_delta_t,
    filtered_projection,
    heatmap,
    project_savings,
    region_energies,
    select_hot_cells,
    write_heatmap,
    write_report,
)
from .synth import OracleResult, SynthSpec, JobTemplate, generate, oracle

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
