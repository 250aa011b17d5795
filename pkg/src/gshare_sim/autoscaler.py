"""Demand-driven horizontal scaling over profiled operating points.

Scaling closes the gap between predicted request rate and the summed
throughput of running pods.  Scale-up fills the bulk of a positive gap with
copies of the most resource-efficient point and tops it off with the smallest
single point that still covers the residual; scale-down retires the least
efficient pods front-to-back but never overshoots below demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .errors import ValidationError
from .profiles import ConfigPoint, FunctionProfile, rps_per_resource, throughput_at


@dataclass(frozen=True)
class DemandEstimate:
    function_id: str
    predicted_rps: float

    def __post_init__(self):
        if not (math.isfinite(self.predicted_rps) and self.predicted_rps >= 0):
            raise ValidationError(
                f"predicted_rps must be finite and >= 0, got {self.predicted_rps!r}")


@dataclass(frozen=True)
class RunningPod:
    pod_id: str
    point: ConfigPoint
    throughput_rps: float

    @property
    def efficiency(self) -> float:
        return self.throughput_rps / self.point.resource_area


class RunningSet:
    """A function's current pods, ordered least-efficient first.

    The front of the set is the first candidate for removal.  Ties in
    efficiency break on pod id, keeping scale-down deterministic.
    """

    def __init__(self, function_id: str, pods: Iterable[RunningPod] = ()):
        self.function_id = function_id
        self._pods: list[RunningPod] = sorted(
            pods, key=lambda p: (p.efficiency, p.pod_id))

    def __len__(self) -> int:
        return len(self._pods)

    def __iter__(self):
        return iter(self._pods)

    def front(self) -> RunningPod:
        if not self._pods:
            raise ValidationError(f"{self.function_id}: running set is empty")
        return self._pods[0]

    def pop_front(self) -> RunningPod:
        front = self.front()
        self._pods.pop(0)
        return front

    def total_throughput(self) -> float:
        return sum(p.throughput_rps for p in self._pods)


@dataclass(frozen=True)
class ScalingDecision:
    function_id: str
    action: Literal["add", "remove"]
    point: ConfigPoint
    pod_id: str | None = None  # set on removals


def rps_gap(profile: FunctionProfile, running: RunningSet, demand: DemandEstimate) -> float:
    """Predicted demand minus the profiled throughput of the running pods.

    Positive means under-provisioned.  Throughputs are re-read from the
    profile, so an unprofiled pod point surfaces as an error here.
    """
    supplied = sum(throughput_at(profile, pod.point) for pod in running)
    return demand.predicted_rps - supplied


def _selection_key(profile: FunctionProfile, point: ConfigPoint):
    # Maximize efficiency; break ties toward the smaller resource footprint,
    # then lexicographic point order.
    return (-rps_per_resource(profile, point), point.resource_area,
            point.sm_partition, point.quota)


def most_efficient_point(profile: FunctionProfile) -> tuple[ConfigPoint, float]:
    point = min(profile.points(), key=lambda p: _selection_key(profile, p))
    return point, throughput_at(profile, point)


def scale_up(profile: FunctionProfile, gap: float) -> list[ScalingDecision]:
    """Cover a positive rps gap with new pods.

    floor(gap / T_eff) copies of the most efficient point, plus (when the
    division leaves a residual) the single point whose throughput most tightly
    exceeds the residual; if no point exceeds it, one more copy of the
    efficient point is used.  All but at most one decision land on the
    efficient point.
    """
    if not (math.isfinite(gap) and gap > 0):
        raise ValidationError(f"scale_up requires gap > 0, got {gap!r}")
    p_eff, t_eff = most_efficient_point(profile)
    if t_eff <= 0:
        raise ValidationError(
            f"{profile.function_id}: no profiled point has positive throughput")
    n = math.floor(gap / t_eff)
    residual = gap - n * t_eff
    decisions = [ScalingDecision(profile.function_id, "add", p_eff) for _ in range(n)]
    if residual > 0:
        covering = [p for p in profile.points()
                    if throughput_at(profile, p) > residual]
        if covering:
            p_ideal = min(covering, key=lambda p: (
                throughput_at(profile, p) - residual, p.resource_area,
                p.sm_partition, p.quota))
        else:
            p_ideal = p_eff
        decisions.append(ScalingDecision(profile.function_id, "add", p_ideal))
    return decisions


def scale_down(running: RunningSet, gap: float) -> list[ScalingDecision]:
    """Retire least-efficient pods while removal cannot push supply below
    demand; stops at the first pod whose throughput is still needed."""
    if not (math.isfinite(gap) and gap < 0):
        raise ValidationError(f"scale_down requires gap < 0, got {gap!r}")
    decisions: list[ScalingDecision] = []
    delta = gap
    while delta < 0 and len(running) > 0:
        front = running.front()
        if delta + front.throughput_rps > 0:
            break
        running.pop_front()
        delta += front.throughput_rps
        decisions.append(ScalingDecision(
            running.function_id, "remove", front.point, front.pod_id))
    return decisions


def predict_demand(function_id: str, history_rps: Sequence[float], k: int = 3) -> DemandEstimate:
    """Peak-of-recent-windows predictor: the max observed rps over the last
    `k` windows.  Deliberately conservative; reacts to bursts immediately and
    forgets them after k quiet windows."""
    if not history_rps:
        raise ValidationError(f"{function_id}: demand history is empty")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k!r}")
    return DemandEstimate(function_id, max(history_rps[-k:]))
