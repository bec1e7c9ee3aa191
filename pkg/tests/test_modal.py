"""Mode classification, power histograms, and modal decompositions."""
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetcap.errors import ValidationError
from fleetcap.jobjoin import JobPowerSeries, energy_mwh_from_watts
from fleetcap.modal import (
    ModalDecomposition,
    ModeStats,
    classify_sample,
    decompose,
    decompose_series,
    histogram,
    merge_decompositions,
    read_decomposition,
    write_decomposition,
    write_histogram,
)
from fleetcap.model import AggregatedSample, JobSizeClass, ModeThresholds, OperatingMode

LB = OperatingMode.LATENCY_BOUND
MI = OperatingMode.MEMORY_INTENSIVE
CI = OperatingMode.COMPUTE_INTENSIVE
BOOST = OperatingMode.BOOSTED


class TestClassify:
    @pytest.mark.parametrize("watts,mode", [
        (0.0, LB), (89.0, LB), (200.0, LB),         # upper edge inclusive
        (200.001, MI), (310.0, MI), (420.0, MI),    # upper edge inclusive
        (420.001, CI), (500.0, CI), (559.999, CI),
        (560.0, BOOST), (700.0, BOOST),             # boosted includes its floor
    ])
    def test_band_edges(self, watts, mode):
        assert classify_sample(watts) is mode

    def test_custom_thresholds(self):
        t = ModeThresholds(100, 300, 500)
        assert classify_sample(100.0, t) is LB
        assert classify_sample(100.1, t) is MI
        assert classify_sample(500.0, t) is BOOST


class TestHistogram:
    def test_counts_and_bins(self):
        hist = histogram([0.0, 4.9, 5.0, 699.9, 700.0], bin_width=5.0)
        assert hist.total_count == 5
        assert hist.counts[0] == 2      # 0.0 and 4.9
        assert hist.counts[1] == 1      # 5.0
        assert hist.counts[-1] == 2     # 699.9 and the clamped 700.0

    def test_bin_width_must_be_positive(self):
        with pytest.raises(ValidationError):
            histogram([1.0], bin_width=0.0)

    def test_write_format(self):
        buf = io.StringIO()
        write_histogram(histogram([2.0, 7.0], bin_width=5.0), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "bin_start_w,count"
        assert lines[1] == "0.0,1"
        assert lines[2] == "5.0,1"


def agg(ts, node, watts_tuple):
    return AggregatedSample(ts, node, 1000.0, 250.0, tuple(map(float, watts_tuple)))


class TestDecompose:
    def test_hand_computed_counts_and_energy(self):
        samples = [
            agg(0, "n", [100] * 4 + [300] * 2 + [500, 600]),
            agg(15, "n", [100] * 8),
        ]
        decomp = decompose(samples)
        assert decomp.stats(LB).sample_count == 12
        assert decomp.stats(MI).sample_count == 2
        assert decomp.stats(CI).sample_count == 1
        assert decomp.stats(BOOST).sample_count == 1
        # energy oracle: watts x 15 s per sample
        assert decomp.stats(CI).energy_mwh == pytest.approx(500 * 15 / 3.6e9)
        assert decomp.total_count == 16
        assert decomp.hours_pct(LB) == pytest.approx(75.0)

    def test_empty_is_all_zero(self):
        decomp = decompose([])
        assert decomp.total_count == 0
        assert decomp.total_energy_mwh == 0.0
        assert decomp.hours_pct(LB) == 0.0
        assert decomp.energy_pct(LB) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(
        st.floats(min_value=0.0, max_value=700.0, allow_nan=False),
        min_size=1, max_size=64,
    ))
    def test_partition_and_conservation(self, watts):
        series = JobPowerSeries("j", "CHM", JobSizeClass.E)
        for i, w in enumerate(watts):
            series.add("n", i % 8, (i // 8) * 15, w)
        decomp = decompose_series([series])
        assert decomp.total_count == len(watts)
        assert decomp.total_energy_mwh == pytest.approx(
            energy_mwh_from_watts(watts), rel=1e-12
        )
        if watts:
            assert sum(decomp.hours_pct(m) for m in OperatingMode) == pytest.approx(100.0)


def series_of(job_id, domain, size, watts):
    s = JobPowerSeries(job_id, domain, size)
    for i, w in enumerate(watts):
        s.add("n", 0, i * 15, float(w))
    return s


class TestSlicing:
    def test_slice_by_domain(self):
        parts = decompose_series(
            [series_of("a", "CHM", JobSizeClass.E, [300]),
             series_of("b", "BIO", JobSizeClass.E, [500])],
            slice_by="domain",
        )
        assert set(parts) == {("CHM", None), ("BIO", None)}
        assert parts[("CHM", None)].stats(MI).sample_count == 1
        assert parts[("BIO", None)].stats(CI).sample_count == 1

    def test_slice_by_domain_size(self):
        parts = decompose_series(
            [series_of("a", "CHM", JobSizeClass.E, [300]),
             series_of("b", "CHM", JobSizeClass.D, [300])],
            slice_by="domain_size",
        )
        assert set(parts) == {("CHM", JobSizeClass.E), ("CHM", JobSizeClass.D)}

    def test_bad_slice_key_rejected(self):
        with pytest.raises(ValidationError):
            decompose_series([], slice_by="node")

    def test_merge_equals_unsliced(self):
        series = [
            series_of("a", "CHM", JobSizeClass.E, [100, 300]),
            series_of("b", "BIO", JobSizeClass.D, [500, 600]),
        ]
        merged = merge_decompositions(
            decompose_series(series, slice_by="domain_size").values()
        )
        flat = decompose_series(series)
        for mode in OperatingMode:
            assert merged.stats(mode) == flat.stats(mode)


class TestSerialization:
    def test_plain_round_trip_is_exact(self):
        decomp = ModalDecomposition.from_mode_totals({
            LB: (3, 0.125), MI: (2, 0.25), CI: (1, 0.5), BOOST: (0, 0.0),
        })
        buf = io.StringIO()
        write_decomposition(decomp, buf)
        buf.seek(0)
        again = read_decomposition(buf)
        assert isinstance(again, ModalDecomposition)
        for mode in OperatingMode:
            assert again.stats(mode) == decomp.stats(mode)

    def test_sliced_round_trip(self):
        parts = decompose_series(
            [series_of("a", "CHM", JobSizeClass.E, [300, 89]),
             series_of("b", "BIO", JobSizeClass.D, [500])],
            slice_by="domain_size",
        )
        buf = io.StringIO()
        write_decomposition(parts, buf)
        buf.seek(0)
        again = read_decomposition(buf)
        assert isinstance(again, dict)
        assert set(again) == set(parts)
        for key in parts:
            for mode in OperatingMode:
                assert again[key].stats(mode) == parts[key].stats(mode)

    def test_mode_stats_expose_hours(self):
        stats = ModeStats(sample_count=240, energy_mwh=1.0)
        assert stats.gpu_hours == pytest.approx(1.0)
