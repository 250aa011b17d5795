"""Simulation metrics: per-window rows plus an aggregate summary.

The CSV is deterministic down to the byte for a fixed scenario and seed: rows
are emitted in (window, row kind, entity id) order and numbers use a canonical
shortest-exact format.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

from .util import fmt_num

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "window", "kind", "entity",
    "arrivals", "completions", "slo_violations", "dropped", "queue_depth",
    "utilization", "sm_occupancy", "memory_mb",
    "gpus_in_use", "placement_failures", "fragmentation_index",
)


@dataclass
class FunctionWindowRow:
    window: int
    function_id: str
    arrivals: int
    completions: int
    slo_violations: int
    dropped: int
    queue_depth: int


@dataclass
class GpuWindowRow:
    window: int
    gpu_id: int
    utilization: float   # fraction of the window covered by any token
    sm_occupancy: float  # time-weighted SM usage / 100
    memory_mb: float


@dataclass
class GlobalWindowRow:
    window: int
    gpus_in_use: int
    placement_failures: int  # failures charged during this window
    fragmentation_index: float


@dataclass
class MetricsReport:
    policy: str
    function_rows: list[FunctionWindowRow] = field(default_factory=list)
    gpu_rows: list[GpuWindowRow] = field(default_factory=list)
    global_rows: list[GlobalWindowRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        windows = sorted({r.window for r in self.global_rows}
                         | {r.window for r in self.function_rows}
                         | {r.window for r in self.gpu_rows})
        by_win_global = {r.window: r for r in self.global_rows}
        by_win_fn: dict[int, list[FunctionWindowRow]] = {}
        for r in self.function_rows:
            by_win_fn.setdefault(r.window, []).append(r)
        by_win_gpu: dict[int, list[GpuWindowRow]] = {}
        for r in self.gpu_rows:
            by_win_gpu.setdefault(r.window, []).append(r)
        for w in windows:
            g = by_win_global.get(w)
            if g is not None:
                writer.writerow([w, "global", "", "", "", "", "", "", "", "", "",
                                 g.gpus_in_use, g.placement_failures,
                                 fmt_num(round(g.fragmentation_index, 9))])
            for r in sorted(by_win_fn.get(w, []), key=lambda r: r.function_id):
                writer.writerow([w, "function", r.function_id, r.arrivals,
                                 r.completions, r.slo_violations, r.dropped,
                                 r.queue_depth, "", "", "", "", "", ""])
            for r in sorted(by_win_gpu.get(w, []), key=lambda r: r.gpu_id):
                writer.writerow([w, "gpu", r.gpu_id, "", "", "", "", "",
                                 fmt_num(round(r.utilization, 9)),
                                 fmt_num(round(r.sm_occupancy, 9)),
                                 fmt_num(round(r.memory_mb, 6)),
                                 "", "", ""])
        return out.getvalue()

    def summary(self) -> dict:
        per_function = {}
        fn_ids = sorted({r.function_id for r in self.function_rows})
        for fid in fn_ids:
            rows = [r for r in self.function_rows if r.function_id == fid]
            arrivals = sum(r.arrivals for r in rows)
            completions = sum(r.completions for r in rows)
            violations = sum(r.slo_violations for r in rows)
            dropped = sum(r.dropped for r in rows)
            per_function[fid] = {
                "arrivals": arrivals,
                "completions": completions,
                "slo_violations": violations,
                "dropped": dropped,
                "final_queue_depth": rows[-1].queue_depth if rows else 0,
                "slo_violation_pct": round(100.0 * violations / completions, 6)
                if completions else 0.0,
            }
        total_completions = sum(f["completions"] for f in per_function.values())
        total_violations = sum(f["slo_violations"] for f in per_function.values())
        gpu_rows = self.gpu_rows  # emitted only for in-use GPUs
        return {
            "schema_version": SCHEMA_VERSION,
            "policy": self.policy,
            "windows": len(self.global_rows),
            "gpus_used_peak": max((r.gpus_in_use for r in self.global_rows), default=0),
            "placement_failures": sum(r.placement_failures for r in self.global_rows),
            "mean_utilization": round(
                sum(r.utilization for r in gpu_rows) / len(gpu_rows), 9)
            if gpu_rows else 0.0,
            "mean_sm_occupancy": round(
                sum(r.sm_occupancy for r in gpu_rows) / len(gpu_rows), 9)
            if gpu_rows else 0.0,
            "slo_violation_pct": round(
                100.0 * total_violations / total_completions, 6)
            if total_completions else 0.0,
            "per_function": per_function,
        }

    def write(self, out_dir: str | os.PathLike) -> tuple[str, str]:
        """Write metrics.csv and summary.json under out_dir; returns paths."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "metrics.csv")
        json_path = os.path.join(out_dir, "summary.json")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path
