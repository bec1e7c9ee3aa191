"""Command-line pipeline driver.

Seven subcommands cover the pipeline end to end::

    synth         generate a synthetic fleet corpus plus its expectations
    ingest        parse raw telemetry and aggregate it to 15-s windows
    join          attribute aggregated samples to scheduler jobs
    decompose     classify samples into operating modes, optionally sliced
    characterize  run the GPU cap models and emit a characterization table
    project       combine a decomposition with a table into savings rows
    report        emit a domain x size heatmap of energy and savings

Exit codes: 0 success, 1 validation error, 2 I/O or parse error, 64 usage
error. Console output prints MWh to 2 decimals and percentages to 1; the
JSON twins written next to report/heatmap CSVs carry full precision.

Relative output paths are resolved under $FLEETCAP_OUT_DIR when set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import IO, Sequence

from . import gpumodel, ingest, jobjoin, modal, project, synth
from .errors import FleetcapError, ParseError, UsageError
from .model import (
    CapSetting,
    JobSizeClass,
    ModeThresholds,
    Uncapped,
    cap_from_key,
    format_cap,
)

OUT_DIR_ENV = "FLEETCAP_OUT_DIR"

_CAP_KINDS = {"freq", "frequency", "mhz", "power", "watts", "w"}
_DEFAULT_RANGE_STEP = 200.0


# ---------------------------------------------------------------- helpers

def _out_path(path: str) -> str:
    """Resolve an output path, honoring $FLEETCAP_OUT_DIR for relative ones."""
    base = os.environ.get(OUT_DIR_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _open_out(path: str) -> IO[str]:
    return open(_out_path(path), "w", newline="")


def _json_twin(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root + ".json" if ext.lower() == ".csv" else path + ".json"


def parse_cap_spec(text: str) -> list[CapSetting]:
    """One --caps value -> cap settings.

    Grammar: ``uncapped`` | ``<kind>:<v>[,<v>...]`` |
    ``<kind>:<start>..<stop>[:<step>]`` with kind freq|power (aliases
    frequency/mhz, watts/w). Ranges are endpoint-inclusive; the default
    step is 200.
    """
    text = text.strip()
    if text.lower() == "uncapped":
        return [Uncapped()]
    kind, sep, rest = text.partition(":")
    kind = kind.strip().lower()
    if not sep or not rest:
        raise UsageError(f"cap spec {text!r} must look like freq:1500 or power:300")
    if kind not in _CAP_KINDS:
        raise UsageError(f"unknown cap kind {kind!r} in {text!r}")
    if ".." in rest:
        span, _, step_text = rest.partition(":")
        start_text, _, stop_text = span.partition("..")
        try:
            start, stop = float(start_text), float(stop_text)
            step = float(step_text) if step_text else _DEFAULT_RANGE_STEP
        except ValueError:
            raise UsageError(f"bad cap range {text!r}") from None
        if step <= 0:
            raise UsageError(f"cap range step must be positive in {text!r}")
        count = int(abs(start - stop) / step + 1e-9) + 1
        sign = -1.0 if start >= stop else 1.0
        values = [start + sign * i * step for i in range(count)]
    else:
        try:
            values = [float(v) for v in rest.split(",")]
        except ValueError:
            raise UsageError(f"bad cap value in {text!r}") from None
    return [cap_from_key(kind, v) for v in values]


def parse_cap_specs(specs: Sequence[str]) -> list[CapSetting]:
    caps: list[CapSetting] = []
    for spec in specs:
        caps.extend(parse_cap_spec(spec))
    return caps


def _parse_thresholds(text: str | None) -> ModeThresholds:
    if text is None:
        return ModeThresholds()
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("--thresholds takes three values, e.g. 200,420,560")
    try:
        low, mid, high = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"bad threshold in {text!r}") from None
    return ModeThresholds(low, mid, high)


def _parse_sizes(text: str | None) -> list[JobSizeClass] | None:
    if text is None:
        return None
    return [JobSizeClass.from_token(token) for token in text.split(",")]


def _parse_weights(text: str | None) -> tuple[float, float] | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError("--delta-t-weights takes two values, e.g. 0.135,0")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise UsageError(f"bad weight in {text!r}") from None


def _load_model_config(path: str | None) -> gpumodel.ModelConfig:
    if path is None:
        return gpumodel.ModelConfig()
    with open(path, newline="") as fh:
        data = json.load(fh)
    return gpumodel.ModelConfig.from_dict(data)


def _load_decomposition(path: str):
    with open(path, newline="") as fh:
        return modal.read_decomposition(fh)


def _load_table(path: str) -> gpumodel.CharacterizationTable:
    with open(path, newline="") as fh:
        return gpumodel.load_characterization(fh)


# ------------------------------------------------------------ subcommands

def _cmd_synth(args) -> int:
    with open(args.spec, newline="") as fh:
        spec = synth.SynthSpec.from_json(fh)
    if (args.table is None) != (not args.caps):
        raise UsageError("--table and --caps must be given together")
    out_dir = _out_path(args.out)
    paths = synth.generate(spec, out_dir)
    table = _load_table(args.table) if args.table else None
    caps = parse_cap_specs(args.caps) if args.caps else None
    result = synth.oracle(spec, table=table, caps=caps)
    expected_path = os.path.join(out_dir, "expected.json")
    with open(expected_path, "w", newline="") as fh:
        synth.write_expected(result, fh)
    for label in ("telemetry", "scheduler", "allocations"):
        print(f"wrote {paths[label]}")
    print(f"wrote {expected_path}")
    return 0


def _cmd_ingest(args) -> int:
    with open(args.telemetry, newline="") as fh:
        samples, skipped = ingest.parse_telemetry(fh, lenient=args.lenient)
    aggregated = ingest.aggregate_15s(samples)
    with _open_out(args.out) as fh:
        ingest.write_telemetry(aggregated, fh)
    print(
        f"{len(samples)} rows -> {len(aggregated)} aggregated windows"
        f" ({skipped} skipped)"
    )
    return 0


def _cmd_join(args) -> int:
    with open(args.aggregated, newline="") as fh:
        samples = ingest.read_aggregated(fh)
    with open(args.jobs, newline="") as jobs_fh, \
            open(args.allocations, newline="") as alloc_fh:
        jobs = ingest.load_jobs(jobs_fh, alloc_fh)
    series_map = jobjoin.join(samples, jobs)
    with _open_out(args.out_joined) as fh:
        jobjoin.write_joined(series_map, fh)
    if args.out_summary:
        summaries = jobjoin.summarize(series_map)
        with _open_out(args.out_summary) as fh:
            jobjoin.write_summaries(summaries, fh)
    total = sum(series.sample_count() for series in series_map.values())
    job_count = sum(1 for job_id in series_map if job_id != jobjoin.IDLE_JOB_ID)
    print(f"attributed {total} samples to {job_count} jobs (+ idle)")
    return 0


def _cmd_decompose(args) -> int:
    thresholds = _parse_thresholds(args.thresholds)
    if args.joined:
        with open(args.joined, newline="") as fh:
            series_map = jobjoin.read_joined(fh)
        result = modal.decompose_series(
            series_map.values(), thresholds, slice_by=args.slice_by
        )
        watts = (w for series in series_map.values() for w in series.iter_watts())
    else:
        if args.slice_by:
            raise UsageError("--slice-by needs --joined input (jobs carry the slices)")
        with open(args.aggregated, newline="") as fh:
            samples = ingest.read_aggregated(fh)
        result = modal.decompose(samples, thresholds)
        watts = (w for sample in samples for w in sample.gcd_power_w)
    if args.histogram:
        hist = modal.histogram(watts, bin_width=args.bin_width)
        with _open_out(args.histogram) as fh:
            modal.write_histogram(hist, fh)
    with _open_out(args.out) as fh:
        modal.write_decomposition(result, fh)
    if isinstance(result, modal.ModalDecomposition):
        for mode in modal.OperatingMode:
            print(
                f"{mode.token}: {result.hours_pct(mode):.1f}% hours,"
                f" {result.energy_pct(mode):.1f}% energy"
            )
        print(f"total energy {result.total_energy_mwh:.2f} MWh")
    else:
        total = modal.merge_decompositions(result.values()).total_energy_mwh
        print(f"{len(result)} slices, total energy {total:.2f} MWh")
    return 0


def _cmd_characterize(args) -> int:
    caps = parse_cap_specs(args.caps)
    config = _load_model_config(args.params)
    table = gpumodel.characterize(caps, config)
    with _open_out(args.out) as fh:
        gpumodel.save_characterization(table, fh)
    if args.roofline:
        points = [
            gpumodel.simulate_vai(ai, Uncapped(), config.gcd)
            for ai in gpumodel.DEFAULT_AI_GRID
        ]
        with _open_out(args.roofline) as fh:
            gpumodel.write_roofline(points, fh)
    for row in table.rows:
        print(
            f"{format_cap(row.cap)}: compute-kernel energy {row.vai_energy_pct:.1f}%,"
            f" memory-kernel energy {row.mb_energy_pct:.1f}%"
        )
    return 0


def _cmd_project(args) -> int:
    caps = parse_cap_specs(args.caps)
    if not caps:
        raise UsageError("at least one cap is required")
    table = _load_table(args.table)
    decomp = _load_decomposition(args.decomp)
    weights = _parse_weights(args.delta_t_weights)
    domains = args.domains.split(",") if args.domains else None
    sizes = _parse_sizes(args.sizes)
    if isinstance(decomp, modal.ModalDecomposition):
        if domains or sizes:
            raise UsageError(
                "--domains/--sizes need a sliced decomposition "
                "(decompose --slice-by domain_size)"
            )
        rows = project.project_savings(decomp, table, caps, weights)
    else:
        rows = project.filtered_projection(
            decomp, table, caps, domains=domains, sizes=sizes,
            delta_t_weights=weights,
        )
    out_csv = _out_path(args.out)
    with open(out_csv, "w", newline="") as fh:
        project.write_report(rows, fh)
    with open(_json_twin(out_csv), "w", newline="") as fh:
        project.write_report_json(rows, fh)
    for row in rows:
        print(
            f"{format_cap(row.cap)}: saves {row.total_savings_mwh:.2f} MWh"
            f" ({row.savings_pct:.1f}%), runtime +{row.delta_t_pct:.1f}%,"
            f" {row.savings_pct_dt0:.1f}% at no slowdown"
        )
    return 0


def _cmd_report(args) -> int:
    caps = parse_cap_spec(args.cap)
    if len(caps) != 1:
        raise UsageError("--cap takes exactly one cap level")
    table = _load_table(args.table)
    decomp = _load_decomposition(args.decomp)
    if isinstance(decomp, modal.ModalDecomposition):
        raise UsageError(
            "report needs a sliced decomposition (decompose --slice-by domain_size)"
        )
    report = project.heatmap(decomp, table, caps[0])
    out_csv = _out_path(args.out)
    with open(out_csv, "w", newline="") as fh:
        project.write_heatmap(report, fh)
    with open(_json_twin(out_csv), "w", newline="") as fh:
        project.write_heatmap_json(report, fh)
    print(
        f"{format_cap(report.cap)}: {report.total_energy_mwh():.2f} MWh used,"
        f" {report.total_savings_mwh():.2f} MWh saveable"
    )
    if args.hot_threshold is not None:
        hot = project.select_hot_cells(
            report, args.hot_threshold, sizes=_parse_sizes(args.hot_sizes)
        )
        print("hot domains: " + (", ".join(hot) if hot else "(none)"))
    return 0


# ----------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we reserve 2 for I/O
        raise UsageError(message)


_TELEMETRY_FORMAT = """\
telemetry csv: timestamp,node_id,input_power_w,cpu_power_w,gcd0_w..gcd7_w
  timestamp is epoch seconds or ISO-8601; one row per node per 2 s.
aggregated csv: same columns; one row per node per 15-s window (window means,
  timestamps are the window starts and multiples of 15)."""

_JOIN_FORMAT = """\
jobs csv: job_id,project_id,num_nodes,begin_time,end_time
allocations csv: job_id,node_id (one row per allocated node)
joined csv: timestamp,node_id,gcd_index,power_w,job_id,science_domain,job_size_class
summary csv: job_id,science_domain,job_size_class,gpu_energy_mwh,gpu_hours"""

_DECOMP_FORMAT = """\
decomposition csv: mode,sample_count,gpu_hours,energy_mwh,hours_pct,energy_pct
  (sliced output prepends science_domain,job_size_class)
histogram csv: bin_start_w,count"""

_TABLE_FORMAT = """\
characterization csv: cap_type,cap_value,vai_power_pct,vai_runtime_pct,
  vai_energy_pct,mb_power_pct,mb_runtime_pct,mb_energy_pct
roofline csv: ai,perf_flops,bandwidth_bps,power_w,runtime_norm,energy_norm"""

_REPORT_FORMAT = """\
projection csv: cap_type,cap_value,ci_mwh,mi_mwh,total_mwh,savings_pct,
  delta_t_pct,savings_pct_dt0 (MWh to 2 decimals, percentages to 1; the
  .json twin carries full precision)
heatmap csv: domain,size_class,energy_mwh,savings_mwh (same rounding + twin)"""

_CAPS_HELP = (
    "cap levels: 'freq:1500,1300', 'freq:1700..700[:step]' (step defaults "
    "to 200), 'power:300', or 'uncapped'; repeatable"
)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fleetcap",
        description="GPU fleet power telemetry pipeline and cap-savings models.",
        epilog=f"relative output paths are resolved under ${OUT_DIR_ENV} when set",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser(
        "synth", help="generate a synthetic corpus with known composition",
        epilog="spec json: see the synth module docstring\n" + _TELEMETRY_FORMAT,
        formatter_class=fmt,
    )
    p.add_argument("--spec", required=True, help="synthesis spec (json)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--table", help="characterization table for expected projections")
    p.add_argument("--caps", action="append", default=[],
                   help=_CAPS_HELP + " (with --table)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser(
        "ingest", help="parse telemetry and aggregate to 15-s windows",
        epilog=_TELEMETRY_FORMAT, formatter_class=fmt,
    )
    p.add_argument("--telemetry", required=True, help="raw telemetry csv")
    p.add_argument("--out", required=True, help="aggregated csv to write")
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed rows instead of failing")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser(
        "join", help="attribute aggregated samples to jobs",
        epilog=_JOIN_FORMAT, formatter_class=fmt,
    )
    p.add_argument("--aggregated", required=True, help="aggregated telemetry csv")
    p.add_argument("--jobs", required=True, help="scheduler log csv")
    p.add_argument("--allocations", required=True, help="allocation csv")
    p.add_argument("--out-joined", required=True, help="joined samples csv to write")
    p.add_argument("--out-summary", help="per-job energy summary csv to write")
    p.set_defaults(func=_cmd_join)

    p = sub.add_parser(
        "decompose", help="classify samples into operating modes",
        epilog=_DECOMP_FORMAT, formatter_class=fmt,
    )
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--joined", help="joined samples csv (enables slicing)")
    source.add_argument("--aggregated", help="aggregated telemetry csv")
    p.add_argument("--out", required=True, help="decomposition csv to write")
    p.add_argument("--thresholds", help="mode boundaries in watts, e.g. 200,420,560")
    p.add_argument("--slice-by", choices=("domain", "domain_size"),
                   help="emit one decomposition per slice")
    p.add_argument("--histogram", help="also write a power histogram csv")
    p.add_argument("--bin-width", type=float, default=5.0,
                   help="histogram bin width in watts (default 5)")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser(
        "characterize", help="model cap response and emit a table",
        epilog=_TABLE_FORMAT, formatter_class=fmt,
    )
    p.add_argument("--caps", action="append", required=True, help=_CAPS_HELP)
    p.add_argument("--params", help="model parameter overrides (json)")
    p.add_argument("--out", required=True, help="characterization csv to write")
    p.add_argument("--roofline", help="also write the uncapped roofline sweep csv")
    p.set_defaults(func=_cmd_characterize)

    p = sub.add_parser(
        "project", help="project fleet savings under caps",
        epilog=_REPORT_FORMAT, formatter_class=fmt,
    )
    p.add_argument("--decomp", required=True, help="decomposition csv (plain or sliced)")
    p.add_argument("--table", required=True, help="characterization csv")
    p.add_argument("--caps", action="append", required=True, help=_CAPS_HELP)
    p.add_argument("--domains", help="comma-separated science domains to keep")
    p.add_argument("--sizes", help="comma-separated size classes to keep (A..E)")
    p.add_argument("--delta-t-weights",
                   help="override slowdown weights as w_ci,w_mi (default energy shares)")
    p.add_argument("--out", required=True, help="projection csv to write (+ .json twin)")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser(
        "report", help="emit a domain x size savings heatmap",
        epilog=_REPORT_FORMAT, formatter_class=fmt,
    )
    p.add_argument("--decomp", required=True, help="sliced decomposition csv")
    p.add_argument("--table", required=True, help="characterization csv")
    p.add_argument("--cap", required=True, help="single cap level, e.g. freq:900")
    p.add_argument("--out", required=True, help="heatmap csv to write (+ .json twin)")
    p.add_argument("--hot-threshold", type=float,
                   help="list domains with any cell saving at least this many MWh")
    p.add_argument("--hot-sizes", help="restrict the hot-cell scan to these sizes")
    p.set_defaults(func=_cmd_report)
    return parser


def entry(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"fleetcap: usage error: {exc}", file=sys.stderr)
        return 64
    except ParseError as exc:
        print(f"fleetcap: parse error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"fleetcap: i/o error: {exc}", file=sys.stderr)
        return 2
    except FleetcapError as exc:
        print(f"fleetcap: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entry())
