"""Metrics report: CSV layout, summary aggregation, output files."""

import csv
import io
import json

import pytest

from gshare_sim.metrics import (
    CSV_COLUMNS,
    FunctionWindowRow,
    GlobalWindowRow,
    GpuWindowRow,
    MetricsReport,
)


def tiny_report():
    report = MetricsReport(policy="fast")
    report.global_rows.append(GlobalWindowRow(
        window=0, gpus_in_use=1, placement_failures=0,
        fragmentation_index=0.25))
    report.function_rows.append(FunctionWindowRow(
        window=0, function_id="fn_b", arrivals=10, completions=9,
        slo_violations=1, dropped=0, queue_depth=1))
    report.function_rows.append(FunctionWindowRow(
        window=0, function_id="fn_a", arrivals=4, completions=4,
        slo_violations=0, dropped=0, queue_depth=0))
    report.gpu_rows.append(GpuWindowRow(
        window=0, gpu_id=0, utilization=0.5, sm_occupancy=0.25,
        memory_mb=5080.0))
    return report


class TestCsv:
    def test_header_and_row_grouping(self):
        text = tiny_report().to_csv()
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == list(CSV_COLUMNS)
        kinds = [r[1] for r in rows[1:]]
        assert kinds == ["global", "function", "function", "gpu"]
        # function rows are sorted by id within the window
        assert rows[2][2] == "fn_a"
        assert rows[3][2] == "fn_b"

    def test_numbers_render_without_float_noise(self):
        text = tiny_report().to_csv()
        assert "0.25" in text
        assert "5080" in text
        assert "5080.0" not in text


class TestSummary:
    def test_aggregates(self):
        summary = tiny_report().summary()
        assert summary["policy"] == "fast"
        assert summary["windows"] == 1
        assert summary["gpus_used_peak"] == 1
        assert summary["mean_utilization"] == 0.5
        total = summary["per_function"]["fn_b"]
        assert total["slo_violations"] == 1
        assert summary["slo_violation_pct"] == pytest.approx(100.0 * 1 / 13, abs=1e-6)

    def test_empty_report_has_sane_zeroes(self):
        summary = MetricsReport(policy="fast").summary()
        assert summary["windows"] == 0
        assert summary["gpus_used_peak"] == 0
        assert summary["mean_utilization"] == 0.0
        assert summary["slo_violation_pct"] == 0.0


class TestWrite:
    def test_writes_csv_and_summary_files(self, tmp_path):
        report = tiny_report()
        report.write(str(tmp_path))
        csv_text = (tmp_path / "metrics.csv").read_text()
        assert csv_text == report.to_csv()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary == report.summary()

    def test_write_is_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        tiny_report().write(str(a))
        tiny_report().write(str(b))
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
