"""Synthetic fleet generator: PRNG, spec validation, layout, and oracle."""
import csv
import filecmp
import io
import json
import os

import pytest

from fleetcap.errors import EmptyProjectId, InvalidSpec
from fleetcap.gpumodel import CharacterizationRow, CharacterizationTable
from fleetcap.ingest import aggregate_15s, load_jobs, parse_telemetry
from fleetcap.jobjoin import join
from fleetcap.modal import decompose_series
from fleetcap.model import FrequencyCap, JobSizeClass, OperatingMode
from fleetcap.project import project_savings
from fleetcap.synth import (
    DEFAULT_MODE_RANGES,
    JobTemplate,
    SynthSpec,
    Xorshift64Star,
    generate,
    node_stream,
    oracle,
    phase_schedule,
    write_expected,
)

LB = OperatingMode.LATENCY_BOUND
MI = OperatingMode.MEMORY_INTENSIVE
CI = OperatingMode.COMPUTE_INTENSIVE
BOOST = OperatingMode.BOOSTED


class TestRandomStreams:
    def test_node_seeds_follow_splitmix64(self):
        # the documented mix64(seed + (i+1)*golden) chain for seed 0 is the
        # well-known splitmix64 reference sequence
        assert node_stream(0, 0).state == 0xE220A8397B1DCDAF
        assert node_stream(0, 1).state == 0x6E789E6AA1B965F4
        assert node_stream(0, 2).state == 0x06C45D188009454F

    def test_xorshift_first_output(self):
        # x=1: >>12 no-op, <<25 gives 0x2000001, >>27 no-op, then multiply
        expected = (0x2000001 * 0x2545F4914F6CDD1D) & ((1 << 64) - 1)
        assert Xorshift64Star(1).next_u64() == expected

    def test_zero_state_guard(self):
        a, b = Xorshift64Star(0), Xorshift64Star(1 << 64)
        assert a.state != 0
        assert [a.next_u64() for _ in range(4)] == [b.next_u64() for _ in range(4)]

    def test_uniform_stays_in_half_open_interval(self):
        stream = node_stream(7, 3)
        draws = [stream.uniform(420.0, 560.0) for _ in range(2000)]
        assert all(420.0 <= d < 560.0 for d in draws)

    def test_streams_differ_between_nodes(self):
        assert node_stream(1, 0).next_u64() != node_stream(1, 1).next_u64()


def small_spec(**overrides):
    base = dict(
        seed=42,
        node_count=2,
        duration_s=300,
        jobs=(
            JobTemplate("jobA", "CHM001", (0, 0), 0, 300,
                        {LB: 0.2, CI: 0.8}),
            JobTemplate("jobB", "BIO002", (1, 1), 60, 120, {MI: 1.0}),
        ),
    )
    base.update(overrides)
    return SynthSpec(**base)


def spec_dict(**overrides):
    base = {
        "seed": 42,
        "node_count": 2,
        "duration_s": 300,
        "jobs": [
            {"job_id": "jobA", "project_id": "CHM001", "node_span": [0, 0],
             "start_offset_s": 0, "duration_s": 300,
             "mixture": {"latency_bound": 0.2, "compute_intensive": 0.8}},
        ],
    }
    base.update(overrides)
    return base


class TestSpecValidation:
    def test_valid_spec_passes(self):
        small_spec().validate()

    @pytest.mark.parametrize("overrides, message", [
        (dict(node_count=0), "node_count"),
        (dict(duration_s=100), "multiple of 15"),
        (dict(duration_s=0), "multiple of 15"),
        (dict(start_time=1_700_000_001), "15-s grid"),
        (dict(idle_power_w=250.0), "latency-bound band"),
        (dict(idle_power_w=-1.0), "latency-bound band"),
        (dict(cpu_power_w=-5.0), ">= 0"),
    ])
    def test_bad_scalars(self, overrides, message):
        with pytest.raises(InvalidSpec, match=message):
            small_spec(**overrides).validate()

    def test_power_range_must_stay_in_band(self):
        ranges = dict(DEFAULT_MODE_RANGES)
        ranges[MI] = (100.0, 300.0)  # dips below the 200 W floor
        with pytest.raises(InvalidSpec, match="band"):
            small_spec(mode_power_ranges=ranges).validate()

    @pytest.mark.parametrize("job, message", [
        (JobTemplate("x", "CHM1", (0, 5), 0, 300, {MI: 1.0}), "node span"),
        (JobTemplate("x", "CHM1", (1, 0), 0, 300, {MI: 1.0}), "node span"),
        (JobTemplate("x", "CHM1", (0, 0), 7, 150, {MI: 1.0}), "multiple of 15"),
        (JobTemplate("x", "CHM1", (0, 0), 0, 299, {MI: 1.0}), "multiple of 15"),
        (JobTemplate("x", "CHM1", (0, 0), 150, 300, {MI: 1.0}), "past the end"),
        (JobTemplate("x", "CHM1", (0, 0), 0, 300, {}), "empty mixture"),
        (JobTemplate("x", "CHM1", (0, 0), 0, 300, {MI: 0.5}), "sums to"),
        (JobTemplate("x", "CHM1", (0, 0), 0, 300, {MI: 1.5, CI: -0.5}),
         "negative mixture"),
        (JobTemplate("x", "CHM1", (0, 0), 0, 300, {MI: 1.0},
                     size_class=JobSizeClass.A), "size_class"),
    ])
    def test_bad_jobs(self, job, message):
        with pytest.raises(InvalidSpec, match=message):
            small_spec(jobs=(job,)).validate()

    def test_underivable_project_id(self):
        # a domain-less project id surfaces as the specific parse error
        job = JobTemplate("x", "123", (0, 0), 0, 300, {MI: 1.0})
        with pytest.raises(EmptyProjectId):
            small_spec(jobs=(job,)).validate()

    def test_duplicate_job_ids(self):
        jobs = (
            JobTemplate("same", "CHM1", (0, 0), 0, 150, {MI: 1.0}),
            JobTemplate("same", "CHM1", (1, 1), 0, 150, {MI: 1.0}),
        )
        with pytest.raises(InvalidSpec, match="duplicate"):
            small_spec(jobs=jobs).validate()

    def test_overlapping_jobs_on_shared_nodes(self):
        jobs = (
            JobTemplate("a", "CHM1", (0, 1), 0, 300, {MI: 1.0}),
            JobTemplate("b", "BIO1", (1, 1), 150, 150, {CI: 1.0}),
        )
        with pytest.raises(InvalidSpec, match="overlap"):
            small_spec(jobs=jobs).validate()

    def test_back_to_back_jobs_do_not_overlap(self):
        jobs = (
            JobTemplate("a", "CHM1", (0, 1), 0, 150, {MI: 1.0}),
            JobTemplate("b", "BIO1", (1, 1), 150, 150, {CI: 1.0}),
        )
        small_spec(jobs=jobs).validate()


class TestSpecParsing:
    def test_round_trip_from_dict(self):
        spec = SynthSpec.from_dict(spec_dict())
        assert spec.seed == 42
        assert spec.jobs[0].mixture == {LB: 0.2, CI: 0.8}

    def test_from_json_accepts_stream_and_text(self):
        text = json.dumps(spec_dict())
        assert SynthSpec.from_json(text) == SynthSpec.from_json(io.StringIO(text))

    def test_unknown_spec_key(self):
        with pytest.raises(InvalidSpec, match="unknown spec keys"):
            SynthSpec.from_dict(spec_dict(bogus=1))

    def test_missing_required_key(self):
        data = spec_dict()
        del data["seed"]
        with pytest.raises(InvalidSpec, match="seed"):
            SynthSpec.from_dict(data)

    def test_unknown_job_key(self):
        data = spec_dict()
        data["jobs"][0]["nodes"] = 4
        with pytest.raises(InvalidSpec, match="unknown job keys"):
            SynthSpec.from_dict(data)

    def test_missing_job_key(self):
        data = spec_dict()
        del data["jobs"][0]["mixture"]
        with pytest.raises(InvalidSpec, match="mixture"):
            SynthSpec.from_dict(data)

    def test_non_object_spec(self):
        with pytest.raises(InvalidSpec, match="JSON object"):
            SynthSpec.from_json("[1, 2]")

    def test_mode_range_override(self):
        data = spec_dict(mode_power_ranges={"memory_intensive": [300, 300]})
        spec = SynthSpec.from_dict(data)
        assert spec.mode_power_ranges[MI] == (300.0, 300.0)
        assert spec.mode_power_ranges[CI] == DEFAULT_MODE_RANGES[CI]


class TestPhaseSchedule:
    def test_exact_fractions(self):
        job = JobTemplate("j", "CHM1", (0, 0), 0, 7200,
                          {LB: 0.3, MI: 0.5, CI: 0.2})
        assert phase_schedule(job) == [
            (LB, 0, 2160), (MI, 2160, 3600), (CI, 5760, 1440),
        ]

    def test_snapping_preserves_total(self):
        job = JobTemplate("j", "CHM1", (0, 0), 0, 90,
                          {LB: 0.33, MI: 0.33, CI: 0.34})
        schedule = phase_schedule(job)
        assert schedule == [(LB, 0, 30), (MI, 30, 30), (CI, 60, 30)]
        assert sum(seconds for _, _, seconds in schedule) == 90

    def test_tiny_fraction_can_snap_away(self):
        job = JobTemplate("j", "CHM1", (0, 0), 0, 150,
                          {LB: 0.01, CI: 0.99})
        schedule = phase_schedule(job)
        assert schedule == [(CI, 0, 150)]

    def test_phases_follow_mode_order(self):
        job = JobTemplate("j", "CHM1", (0, 0), 0, 300,
                          {BOOST: 0.5, LB: 0.5})
        assert [mode for mode, _, _ in phase_schedule(job)] == [LB, BOOST]


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    spec = small_spec()
    out = tmp_path_factory.mktemp("synthout")
    paths = generate(spec, str(out))
    return spec, paths


class TestGenerate:
    def test_deterministic_output(self, tmp_path):
        spec = small_spec()
        a, b = tmp_path / "a", tmp_path / "b"
        paths_a = generate(spec, str(a))
        paths_b = generate(spec, str(b))
        for key in paths_a:
            assert filecmp.cmp(paths_a[key], paths_b[key], shallow=False), key

    def test_seed_changes_output(self, tmp_path):
        a = generate(small_spec(), str(tmp_path / "a"))
        b = generate(small_spec(seed=43), str(tmp_path / "b"))
        assert not filecmp.cmp(a["telemetry"], b["telemetry"], shallow=False)

    def test_row_cadence_and_count(self, generated):
        spec, paths = generated
        with open(paths["telemetry"]) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == (spec.duration_s // 2) * spec.node_count
        first = rows[0]
        assert first["timestamp"] == str(spec.start_time)
        assert first["node_id"] == "node0000"

    def test_idle_rows_hold_the_idle_wattage(self, generated):
        spec, paths = generated
        # node 1 is idle for the first 60 s (jobB starts at +60)
        with open(paths["telemetry"]) as fh:
            rows = [r for r in csv.DictReader(fh)
                    if r["node_id"] == "node0001"
                    and int(r["timestamp"]) < spec.start_time + 60]
        assert len(rows) == 30
        for row in rows:
            assert all(row[f"gcd{i}_w"] == "89" for i in range(8))

    def test_job_rows_stay_inside_the_mode_range(self, generated):
        spec, paths = generated
        lo, hi = spec.mode_power_ranges[MI]
        with open(paths["telemetry"]) as fh:
            rows = [r for r in csv.DictReader(fh)
                    if r["node_id"] == "node0001"
                    and spec.start_time + 60 <= int(r["timestamp"]) < spec.start_time + 180]
        assert len(rows) == 60
        for row in rows:
            for i in range(8):
                assert lo <= float(row[f"gcd{i}_w"]) < hi

    def test_input_power_is_overhead_plus_cpu_plus_gcds(self, generated):
        _, paths = generated
        with open(paths["telemetry"]) as fh:
            for row in csv.DictReader(fh):
                gcds = sum(float(row[f"gcd{i}_w"]) for i in range(8))
                expected = 350.0 + float(row["cpu_power_w"]) + gcds
                assert float(row["input_power_w"]) == pytest.approx(expected, abs=0.005)

    def test_scheduler_and_allocation_files(self, generated):
        spec, paths = generated
        with open(paths["scheduler"]) as fh:
            sched = list(csv.DictReader(fh))
        assert [r["job_id"] for r in sched] == ["jobA", "jobB"]
        assert sched[1]["begin_time"] == str(spec.start_time + 60)
        assert sched[1]["end_time"] == str(spec.start_time + 180)
        with open(paths["allocations"]) as fh:
            allocs = list(csv.DictReader(fh))
        assert [(r["job_id"], r["node_id"]) for r in allocs] == [
            ("jobA", "node0000"), ("jobB", "node0001"),
        ]


def run_pipeline(paths):
    with open(paths["telemetry"]) as fh:
        samples, _ = parse_telemetry(fh)
    aggregated = aggregate_15s(samples)
    with open(paths["scheduler"]) as sched, open(paths["allocations"]) as alloc:
        jobs = load_jobs(sched, alloc)
    return decompose_series(join(aggregated, jobs).values())


class TestOracle:
    def test_degenerate_ranges_match_the_pipeline_exactly(self, tmp_path):
        ranges = {LB: (150.0, 150.0), MI: (300.0, 300.0),
                  CI: (500.0, 500.0), BOOST: (580.0, 580.0)}
        spec = small_spec(mode_power_ranges=ranges)
        expected = oracle(spec).decomposition
        actual = run_pipeline(generate(spec, str(tmp_path)))
        for mode in OperatingMode:
            assert actual.stats(mode).sample_count == expected.stats(mode).sample_count
            assert actual.stats(mode).energy_mwh == pytest.approx(
                expected.stats(mode).energy_mwh, rel=1e-12
            )

    def test_sample_counts_are_exact_for_random_ranges(self, generated):
        spec, paths = generated
        expected = oracle(spec).decomposition
        actual = run_pipeline(paths)
        for mode in OperatingMode:
            assert actual.stats(mode).sample_count == expected.stats(mode).sample_count

    def test_random_range_energy_tracks_the_midpoint(self, generated):
        spec, paths = generated
        expected = oracle(spec).decomposition
        actual = run_pipeline(paths)
        for mode in OperatingMode:
            want = expected.stats(mode).energy_mwh
            if want:
                assert actual.stats(mode).energy_mwh == pytest.approx(want, rel=0.02)

    def test_idle_energy_booked_as_latency_bound(self):
        spec = SynthSpec(seed=1, node_count=1, duration_s=150, jobs=())
        decomp = oracle(spec).decomposition
        assert decomp.stats(LB).sample_count == 10 * 8
        assert decomp.stats(LB).energy_mwh == pytest.approx(
            89.0 * 150 * 8 / 3.6e9, rel=1e-12
        )
        assert decomp.total_energy_mwh == decomp.stats(LB).energy_mwh

    def test_oracle_projections_match_the_projection_module(self):
        spec = small_spec()
        row_900 = CharacterizationRow(FrequencyCap(900), 53.3, 182.4, 97.3,
                                      79.7, 99.0, 79.7)
        row_full = CharacterizationRow(FrequencyCap(1700), 100.0, 100.0, 100.0,
                                       100.0, 100.0, 100.0)
        table = CharacterizationTable(rows=(row_full, row_900))
        caps = [FrequencyCap(1700), FrequencyCap(900)]
        result = oracle(spec, table=table, caps=caps)
        independent = project_savings(result.decomposition, table, caps)
        assert len(result.projections) == len(independent) == 2
        for got, want in zip(result.projections, independent):
            for key, value in want.as_dict().items():
                if isinstance(value, float):
                    assert got[key] == pytest.approx(value, rel=1e-12), key
                else:
                    assert got[key] == value, key

    def test_table_without_caps_is_rejected(self):
        table = CharacterizationTable(rows=(
            CharacterizationRow(FrequencyCap(1700), 100, 100, 100, 100, 100, 100),
        ))
        with pytest.raises(InvalidSpec, match="caps"):
            oracle(small_spec(), table=table)

    def test_write_expected_schema(self):
        spec = small_spec()
        buf = io.StringIO()
        write_expected(oracle(spec), buf)
        payload = json.loads(buf.getvalue())
        assert set(payload) == {"modes", "totals"}
        assert set(payload["modes"]) == {
            "latency_bound", "memory_intensive", "compute_intensive", "boosted",
        }
        stats = payload["modes"]["memory_intensive"]
        assert set(stats) == {"sample_count", "gpu_hours", "energy_mwh",
                              "hours_pct", "energy_pct"}
        decomp = oracle(spec).decomposition
        assert stats["energy_mwh"] == decomp.stats(MI).energy_mwh
        assert payload["totals"]["sample_count"] == decomp.total_count

    def test_write_expected_includes_projections_when_present(self):
        table = CharacterizationTable(rows=(
            CharacterizationRow(FrequencyCap(900), 53.3, 182.4, 97.3,
                                79.7, 99.0, 79.7),
        ))
        buf = io.StringIO()
        write_expected(oracle(small_spec(), table=table,
                              caps=[FrequencyCap(900)]), buf)
        payload = json.loads(buf.getvalue())
        assert [row["cap_value"] for row in payload["projections"]] == [900.0]


class TestBundledDemoSpec:
    def test_demo_spec_loads_and_validates(self):
        from fleetcap.datafiles import demo_spec
        spec = demo_spec()
        assert spec.node_count == 20
        assert len(spec.jobs) == 6
        spec.validate()

    def test_demo_spec_oracle_covers_all_modes(self):
        from fleetcap.datafiles import demo_spec
        decomp = oracle(demo_spec()).decomposition
        for mode in OperatingMode:
            assert decomp.stats(mode).sample_count > 0
