"""Per-window request arrival traces.

A trace is just a list of non-negative integer arrival counts, one per
scheduling window.  It can be given explicitly, generated (constant, step,
sinusoid, optionally Poisson-sampled around the rate), or replayed from a
file with one count per line.  Generation is deterministic for a given seed.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class WorkloadTrace:
    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValidationError("arrival counts must be >= 0")

    def count(self, window: int) -> int:
        """Arrivals in the given window; windows beyond the trace are quiet."""
        if window < len(self.counts):
            return self.counts[window]
        return 0

    def __len__(self) -> int:
        return len(self.counts)


def _counts_from_rates(rates: Sequence[float], window_s: float,
                       poisson: bool, seed: int) -> list[int]:
    if poisson:
        rng = np.random.default_rng(seed)
        return [int(rng.poisson(max(r, 0.0) * window_s)) for r in rates]
    # Deterministic rounding with carry, so fractional rates average out
    # exactly instead of being floored every window.
    counts = []
    carry = 0.0
    for r in rates:
        x = max(r, 0.0) * window_s + carry
        c = int(math.floor(x + 1e-9))
        carry = x - c
        counts.append(c)
    return counts


def explicit_trace(counts: Sequence[int]) -> WorkloadTrace:
    return WorkloadTrace(tuple(int(c) for c in counts))


def constant_trace(rps: float, windows: int, window_s: float = 1.0,
                   poisson: bool = False, seed: int = 0) -> WorkloadTrace:
    if rps < 0:
        raise ValidationError(f"rps must be >= 0, got {rps!r}")
    rates = [rps] * windows
    return WorkloadTrace(tuple(_counts_from_rates(rates, window_s, poisson, seed)))


def step_trace(base_rps: float, step_rps: float, step_window: int, windows: int,
               window_s: float = 1.0, poisson: bool = False, seed: int = 0) -> WorkloadTrace:
    """base_rps before step_window, step_rps from it onward."""
    if base_rps < 0 or step_rps < 0:
        raise ValidationError("rates must be >= 0")
    rates = [base_rps if w < step_window else step_rps for w in range(windows)]
    return WorkloadTrace(tuple(_counts_from_rates(rates, window_s, poisson, seed)))


def sinusoid_trace(base_rps: float, amplitude_rps: float, period_windows: int,
                   windows: int, window_s: float = 1.0, poisson: bool = False,
                   seed: int = 0) -> WorkloadTrace:
    if period_windows < 1:
        raise ValidationError(f"period_windows must be >= 1, got {period_windows!r}")
    rates = [max(0.0, base_rps + amplitude_rps * math.sin(2 * math.pi * w / period_windows))
             for w in range(windows)]
    return WorkloadTrace(tuple(_counts_from_rates(rates, window_s, poisson, seed)))


def replay_trace(path) -> WorkloadTrace:
    """One integer count per line; blank lines and '#' comments are skipped."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read trace file {path!r}: {exc}") from exc
    counts = []
    for i, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            counts.append(int(text))
        except ValueError:
            raise ParseError(f"not an integer count: {text!r}", i)
    return WorkloadTrace(tuple(counts))


def trace_from_spec(spec: dict, windows: int, window_s: float, seed: int,
                    base_dir: str | None = None) -> WorkloadTrace:
    """Build a trace from a scenario JSON fragment ({"kind": ..., ...})."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationError(f"trace spec must be an object with a 'kind', got {spec!r}")
    kind = spec["kind"]
    poisson = bool(spec.get("poisson", False))
    seed = int(spec.get("seed", seed))
    if kind == "explicit":
        return explicit_trace(spec.get("counts", []))
    if kind == "constant":
        return constant_trace(float(spec["rps"]), windows, window_s, poisson, seed)
    if kind == "step":
        return step_trace(float(spec["base_rps"]), float(spec["step_rps"]),
                          int(spec["step_window"]), windows, window_s, poisson, seed)
    if kind == "sinusoid":
        return sinusoid_trace(float(spec["base_rps"]), float(spec["amplitude_rps"]),
                              int(spec["period_windows"]), windows, window_s,
                              poisson, seed)
    if kind == "replay":
        path = spec["path"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return replay_trace(path)
    raise ValidationError(f"unknown trace kind {kind!r}")
