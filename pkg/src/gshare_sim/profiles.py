"""Throughput/latency profiles of inference functions over the sharing grid.

A profile maps discrete operating points (SM partition percentage, window time
quota fraction) to measured throughput and tail latency, plus one memory spec
and one latency SLO per function.  Lookups are exact: querying a point that was
never profiled is an error, never an interpolation.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    ConflictError,
    MissingConfigurationError,
    ParseError,
    ValidationError,
)
from .memory_model import MemorySpec
from .util import fmt_num

#: Canonical column order of the profile file format (CSV header / JSONL keys).
PROFILE_COLUMNS = (
    "function_id",
    "sm_partition",
    "quota",
    "throughput_rps",
    "p99_ms",
    "slo_ms",
    "mem_noshare_mb",
    "mem_runtime_mb",
    "mem_server_mb",
)

#: Grid used by the bundled synthetic profiles: SM partition percentages and
#: window-quota fractions commonly swept when profiling a function.
DEFAULT_SM_GRID = (6.0, 12.0, 24.0, 50.0, 60.0, 80.0, 100.0)
DEFAULT_QUOTA_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)

_MONOTONE_EPS = 1e-9


@dataclass(frozen=True, order=True)
class ConfigPoint:
    """One spatio-temporal operating point.

    sm_partition is a percentage of the GPU's streaming multiprocessors in
    (0, 100]; quota is the fraction of each scheduling window in (0, 1].
    Ordering is lexicographic (sm_partition, quota), used for deterministic
    tie-breaks.
    """

    sm_partition: float
    quota: float

    def __post_init__(self):
        if not (math.isfinite(self.sm_partition) and 0 < self.sm_partition <= 100):
            raise ValidationError(
                f"sm_partition must be in (0, 100], got {self.sm_partition!r}")
        if not (math.isfinite(self.quota) and 0 < self.quota <= 1):
            raise ValidationError(f"quota must be in (0, 1], got {self.quota!r}")

    @property
    def sm_fraction(self) -> float:
        return self.sm_partition / 100.0

    @property
    def resource_area(self) -> float:
        """Fraction of the whole GPU-window this point occupies (SM x time)."""
        return self.sm_fraction * self.quota


@dataclass(frozen=True)
class ProfileEntry:
    point: ConfigPoint
    throughput_rps: float
    p99_latency_ms: float

    def __post_init__(self):
        if not (math.isfinite(self.throughput_rps) and self.throughput_rps >= 0):
            raise ValidationError(
                f"throughput_rps must be finite and >= 0, got {self.throughput_rps!r}")
        if not (math.isfinite(self.p99_latency_ms) and self.p99_latency_ms > 0):
            raise ValidationError(
                f"p99_latency_ms must be positive, got {self.p99_latency_ms!r}")


@dataclass
class FunctionProfile:
    """All profiled operating points of one function, plus SLO and memory."""

    function_id: str
    entries: dict[ConfigPoint, ProfileEntry]
    slo_latency_ms: float
    mem: MemorySpec
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.function_id:
            raise ValidationError("function_id must be non-empty")
        if not (math.isfinite(self.slo_latency_ms) and self.slo_latency_ms > 0):
            raise ValidationError(
                f"slo_latency_ms must be positive, got {self.slo_latency_ms!r}")

    @classmethod
    def from_entries(
        cls,
        function_id: str,
        entries: Iterable[ProfileEntry],
        slo_latency_ms: float = 1000.0,
        mem: MemorySpec | None = None,
    ) -> "FunctionProfile":
        """Build a profile, rejecting duplicate points and recording
        monotonicity warnings (a dip is suspicious but not fatal)."""
        if mem is None:
            mem = MemorySpec(mem_noshare_mb=1200.0, mem_runtime_mb=900.0,
                             mem_server_mb=600.0)
        table: dict[ConfigPoint, ProfileEntry] = {}
        for entry in entries:
            if entry.point in table:
                raise ConflictError(
                    f"{function_id}: duplicate profile point "
                    f"({fmt_num(entry.point.sm_partition)}, {fmt_num(entry.point.quota)})")
            table[entry.point] = entry
        if not table:
            raise ValidationError(f"{function_id}: profile has no entries")
        warnings = tuple(_monotonicity_warnings(function_id, table))
        return cls(function_id, table, slo_latency_ms, mem, warnings)

    def points(self) -> list[ConfigPoint]:
        return sorted(self.entries)


def _monotonicity_warnings(
    function_id: str, entries: Mapping[ConfigPoint, ProfileEntry]
) -> Iterator[str]:
    by_sm: dict[float, list[ProfileEntry]] = {}
    by_quota: dict[float, list[ProfileEntry]] = {}
    for entry in entries.values():
        by_sm.setdefault(entry.point.sm_partition, []).append(entry)
        by_quota.setdefault(entry.point.quota, []).append(entry)
    for sm in sorted(by_sm):
        column = sorted(by_sm[sm], key=lambda e: e.point.quota)
        for prev, cur in zip(column, column[1:]):
            if cur.throughput_rps < prev.throughput_rps - _MONOTONE_EPS:
                yield (
                    f"{function_id}: throughput dips from "
                    f"{fmt_num(prev.throughput_rps)} to {fmt_num(cur.throughput_rps)} rps "
                    f"as quota grows {fmt_num(prev.point.quota)} -> {fmt_num(cur.point.quota)} "
                    f"at sm={fmt_num(sm)}")
    for quota in sorted(by_quota):
        row = sorted(by_quota[quota], key=lambda e: e.point.sm_partition)
        for prev, cur in zip(row, row[1:]):
            if cur.throughput_rps < prev.throughput_rps - _MONOTONE_EPS:
                yield (
                    f"{function_id}: throughput dips from "
                    f"{fmt_num(prev.throughput_rps)} to {fmt_num(cur.throughput_rps)} rps "
                    f"as sm grows {fmt_num(prev.point.sm_partition)} -> "
                    f"{fmt_num(cur.point.sm_partition)} at quota={fmt_num(quota)}")


def throughput_at(profile: FunctionProfile, point: ConfigPoint) -> float:
    """Exact stored throughput of a profiled point; never interpolates."""
    entry = profile.entries.get(point)
    if entry is None:
        raise MissingConfigurationError(
            f"{profile.function_id}: no profile entry at "
            f"({fmt_num(point.sm_partition)}, {fmt_num(point.quota)})")
    return entry.throughput_rps


def rps_per_resource(profile: FunctionProfile, point: ConfigPoint) -> float:
    """Throughput per unit of 2D resource (SM fraction x quota fraction).

    The autoscaler's efficiency metric: higher means the point converts
    resources into served requests better.
    """
    return throughput_at(profile, point) / point.resource_area


def synth_profile(
    function_id: str,
    t_max: float,
    sm_knee: float,
    grid: Sequence[ConfigPoint],
    *,
    slo_latency_ms: float = 1000.0,
    mem: MemorySpec | None = None,
) -> FunctionProfile:
    """Generate a plausible profile: throughput grows linearly with the SM
    partition up to a knee (beyond which extra SMs are wasted) and is exactly
    proportional to the time quota.

        T(sm, quota) = quota * t_max * min(sm, sm_knee) / sm_knee
    """
    if not (math.isfinite(t_max) and t_max > 0):
        raise ValidationError(f"t_max must be positive, got {t_max!r}")
    if not (math.isfinite(sm_knee) and 0 < sm_knee <= 100):
        raise ValidationError(f"sm_knee must be in (0, 100], got {sm_knee!r}")
    if not grid:
        raise ValidationError("synth_profile requires a non-empty grid")
    if mem is None:
        mem = MemorySpec(mem_noshare_mb=1200.0, mem_runtime_mb=900.0, mem_server_mb=600.0)
    entries = []
    for point in grid:
        rate = point.quota * t_max * min(point.sm_partition, sm_knee) / sm_knee
        p99 = 1000.0 / max(rate, 1e-3)
        entries.append(ProfileEntry(point, rate, p99))
    return FunctionProfile.from_entries(function_id, entries, slo_latency_ms, mem)


def grid_points(
    sm_values: Sequence[float], quota_values: Sequence[float]
) -> list[ConfigPoint]:
    """Cartesian product helper for building profiling grids."""
    return [ConfigPoint(sm, q) for sm in sm_values for q in quota_values]


# ---------------------------------------------------------------------------
# Ingestion / serialization
# ---------------------------------------------------------------------------

def ingest_profiles(source) -> dict[str, FunctionProfile]:
    """Parse a profile stream into one FunctionProfile per function id.

    `source` may be a filesystem path, an open text file, or an iterable of
    lines.  The format is auto-detected: lines starting with '{' are JSON
    records, otherwise the stream must be a CSV with the canonical header.
    Parse failures carry the 1-based line number.
    """
    lines = _read_lines(source)
    records = _parse_records(lines)
    if not records:
        raise ValidationError("profile stream contains no records")

    grouped: dict[str, list[tuple[int, dict]]] = {}
    for line_no, rec in records:
        grouped.setdefault(rec["function_id"], []).append((line_no, rec))

    profiles: dict[str, FunctionProfile] = {}
    for function_id, recs in grouped.items():
        first_no, first = recs[0]
        slo = first["slo_ms"]
        mem = MemorySpec(first["mem_noshare_mb"], first["mem_runtime_mb"],
                         first["mem_server_mb"])
        entries = []
        for line_no, rec in recs:
            if (rec["slo_ms"] != slo
                    or rec["mem_noshare_mb"] != mem.mem_noshare_mb
                    or rec["mem_runtime_mb"] != mem.mem_runtime_mb
                    or rec["mem_server_mb"] != mem.mem_server_mb):
                raise ConflictError(
                    f"line {line_no}: {function_id}: slo/memory columns disagree "
                    f"with line {first_no}")
            point = ConfigPoint(rec["sm_partition"], rec["quota"])
            entries.append(ProfileEntry(point, rec["throughput_rps"], rec["p99_ms"]))
        profiles[function_id] = FunctionProfile.from_entries(
            function_id, entries, slo, mem)
    return profiles


def ingest_profile(source) -> FunctionProfile:
    """Like ingest_profiles but the stream must describe exactly one function."""
    profiles = ingest_profiles(source)
    if len(profiles) != 1:
        raise ValidationError(
            f"expected exactly one function in stream, found {sorted(profiles)}")
    return next(iter(profiles.values()))


def serialize_profiles(profiles: Mapping[str, FunctionProfile] | Iterable[FunctionProfile]) -> str:
    """Canonical CSV text: header, then rows sorted by (function, sm, quota).

    Numbers use the shortest exact decimal form, so serialize -> ingest ->
    serialize is byte-stable.
    """
    if isinstance(profiles, Mapping):
        items = [profiles[k] for k in sorted(profiles)]
    else:
        items = sorted(profiles, key=lambda p: p.function_id)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PROFILE_COLUMNS)
    for profile in items:
        for point in profile.points():
            entry = profile.entries[point]
            writer.writerow([
                profile.function_id,
                fmt_num(point.sm_partition),
                fmt_num(point.quota),
                fmt_num(entry.throughput_rps),
                fmt_num(entry.p99_latency_ms),
                fmt_num(profile.slo_latency_ms),
                fmt_num(profile.mem.mem_noshare_mb),
                fmt_num(profile.mem.mem_runtime_mb),
                fmt_num(profile.mem.mem_server_mb),
            ])
    return out.getvalue()


def serialize_profile(profile: FunctionProfile) -> str:
    return serialize_profiles([profile])


def _read_lines(source) -> list[str]:
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                return fh.read().splitlines()
        except OSError as exc:
            raise ValidationError(f"cannot read profile file {source!r}: {exc}") from exc
    if hasattr(source, "read"):
        return source.read().splitlines()
    return [str(line).rstrip("\n") for line in source]


def _parse_records(lines: list[str]) -> list[tuple[int, dict]]:
    numbered = [(i + 1, line.strip()) for i, line in enumerate(lines)]
    numbered = [(n, line) for n, line in numbered if line]
    if not numbered:
        return []
    if numbered[0][1].startswith("{"):
        return [_parse_json_record(n, line) for n, line in numbered]
    return _parse_csv_records(numbered)


_NUMERIC_COLUMNS = PROFILE_COLUMNS[1:]


def _coerce_record(line_no: int, raw: Mapping[str, object]) -> dict:
    rec: dict = {}
    for col in PROFILE_COLUMNS:
        if col not in raw or raw[col] in (None, ""):
            raise ParseError(f"missing column {col!r}", line_no)
        rec[col] = raw[col]
    rec["function_id"] = str(rec["function_id"])
    for col in _NUMERIC_COLUMNS:
        try:
            rec[col] = float(rec[col])
        except (TypeError, ValueError):
            raise ParseError(f"column {col!r} is not a number: {rec[col]!r}", line_no)
    try:
        ConfigPoint(rec["sm_partition"], rec["quota"])
        if not (math.isfinite(rec["slo_ms"]) and rec["slo_ms"] > 0):
            raise ValidationError(f"slo_ms must be positive, got {rec['slo_ms']!r}")
    except ValidationError as exc:
        raise ParseError(str(exc), line_no)
    return rec


def _parse_json_record(line_no: int, line: str) -> tuple[int, dict]:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_no)
    if not isinstance(raw, dict):
        raise ParseError("JSON record must be an object", line_no)
    return line_no, _coerce_record(line_no, raw)


def _parse_csv_records(numbered: list[tuple[int, str]]) -> list[tuple[int, dict]]:
    header_no, header_line = numbered[0]
    header = next(csv.reader([header_line]))
    header = [h.strip() for h in header]
    if set(header) != set(PROFILE_COLUMNS):
        raise ParseError(
            f"CSV header must contain exactly {', '.join(PROFILE_COLUMNS)}", header_no)
    records = []
    for line_no, line in numbered[1:]:
        values = next(csv.reader([line]))
        if len(values) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(values)}", line_no)
        records.append((line_no, _coerce_record(line_no, dict(zip(header, values)))))
    return records
