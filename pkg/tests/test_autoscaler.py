"""Demand prediction, gap computation, and the scaling heuristic."""

import math
import random

import pytest

from gshare_sim import (
    ConfigPoint,
    DemandEstimate,
    RunningPod,
    RunningSet,
    ValidationError,
    most_efficient_point,
    predict_demand,
    rps_gap,
    rps_per_resource,
    scale_down,
    scale_up,
    throughput_at,
)
from gshare_sim.profiles import FunctionProfile, ProfileEntry


def profile_from_points(points):
    """points: (sm, quota, throughput) triples."""
    return FunctionProfile.from_entries(
        "fn", [ProfileEntry(ConfigPoint(sm, q), t, 100.0) for sm, q, t in points])


def running_from(profile, *points):
    pods = [RunningPod(f"fn-{i:04d}", ConfigPoint(sm, q),
                       throughput_at(profile, ConfigPoint(sm, q)))
            for i, (sm, q) in enumerate(points)]
    return RunningSet("fn", pods)


TWO_POINT = profile_from_points([(12, 0.4, 10.0), (24, 0.4, 15.0)])


class TestRpsGap:
    def test_demand_above_supply(self):
        running = running_from(TWO_POINT, (12, 0.4), (12, 0.4))
        gap = rps_gap(TWO_POINT, running, DemandEstimate("fn", 25.0))
        assert gap == pytest.approx(5.0)

    def test_no_pods_no_demand(self):
        running = RunningSet("fn", [])
        assert rps_gap(TWO_POINT, running, DemandEstimate("fn", 0.0)) == 0.0

    def test_demand_below_supply(self):
        running = running_from(TWO_POINT, (12, 0.4), (12, 0.4))
        gap = rps_gap(TWO_POINT, running, DemandEstimate("fn", 5.0))
        assert gap == pytest.approx(-15.0)


class TestScaleUp:
    def test_worked_example_three_adds_at_the_efficient_point(self):
        # rpr(12,0.4)=208.33 beats rpr(24,0.4)=156.25; gap 25 = 2x10 + r=5;
        # residual pod: T>5 candidates are both, argmin(T-5) is the 10-rps point
        decisions = scale_up(TWO_POINT, 25.0)
        assert [d.action for d in decisions] == ["add"] * 3
        assert [d.point for d in decisions] == [ConfigPoint(12, 0.4)] * 3

    def test_exact_multiple_of_efficient_throughput_skips_residual(self):
        decisions = scale_up(TWO_POINT, 20.0)
        assert len(decisions) == 2
        assert all(d.point == ConfigPoint(12, 0.4) for d in decisions)

    def test_single_point_exact_gap(self):
        prof = profile_from_points([(12, 0.4, 10.0)])
        decisions = scale_up(prof, 10.0)
        assert len(decisions) == 1

    def test_residual_prefers_smallest_sufficient_throughput(self):
        # gap 12: n=1 at T=10, r=2; both points exceed 2; 10 is closer
        decisions = scale_up(TWO_POINT, 12.0)
        assert [d.point for d in decisions] == [ConfigPoint(12, 0.4)] * 2

    def test_nonpositive_gap_rejected(self):
        with pytest.raises(ValidationError):
            scale_up(TWO_POINT, 0.0)

    def test_covers_gap_with_at_most_one_off_efficient_pod(self):
        rng = random.Random(5)
        for _ in range(300):
            prof = random_profile(rng)
            gap = rng.uniform(0.1, 120.0)
            decisions = scale_up(prof, gap)
            total = sum(throughput_at(prof, d.point) for d in decisions)
            assert total >= gap - 1e-9
            p_eff, _ = most_efficient_point(prof)
            off_efficient = [d for d in decisions if d.point != p_eff]
            assert len(off_efficient) <= 1


def random_profile(rng):
    points = []
    seen = set()
    for _ in range(rng.randint(1, 8)):
        sm = rng.choice([6, 12, 24, 50, 60, 80, 100])
        quota = rng.choice([0.2, 0.4, 0.5, 0.6, 0.8, 1.0])
        if (sm, quota) in seen:
            continue
        seen.add((sm, quota))
        points.append((sm, quota, rng.uniform(0.5, 60.0)))
    if not points:
        points.append((24, 0.5, 10.0))
    return profile_from_points(points)


def oracle_scale_up(profile, gap):
    """Brute-force restatement of the planning loop: pick the best-RPR point,
    add floor(gap/T) pods of it, then cover any remainder with the profiled
    point whose throughput most tightly exceeds it."""
    best = None
    for point in profile.points():
        key = (-rps_per_resource(profile, point), point.resource_area,
               point.sm_partition, point.quota)
        if best is None or key < best[0]:
            best = (key, point)
    p_eff = best[1]
    t_eff = throughput_at(profile, p_eff)
    n = math.floor(gap / t_eff)
    out = [p_eff] * n
    residual = gap - n * t_eff
    if residual > 0:
        candidates = [p for p in profile.points()
                      if throughput_at(profile, p) > residual]
        if candidates:
            ideal = min(candidates,
                        key=lambda p: (throughput_at(profile, p) - residual,
                                       p.sm_partition, p.quota))
        else:
            ideal = p_eff
        out.append(ideal)
    return out


class TestScaleUpOracle:
    def test_matches_brute_force_on_random_cases(self):
        rng = random.Random(17)
        for _ in range(1000):
            prof = random_profile(rng)
            gap = rng.uniform(0.1, 150.0)
            got = [d.point for d in scale_up(prof, gap)]
            assert got == oracle_scale_up(prof, gap)


class TestScaleDown:
    def test_removes_low_efficiency_pod_then_stops(self):
        # two pods with distinct efficiencies: T=5 at rpr 100 vs T=10 at rpr 200;
        # removing the first leaves a -7 gap, removing the second would overshoot
        prof = profile_from_points([(10, 0.5, 5.0), (20, 0.25, 10.0)])
        running = running_from(prof, (10, 0.5), (20, 0.25))
        decisions = scale_down(running, -12.0)
        assert len(decisions) == 1
        removed = decisions[0]
        assert removed.action == "remove"
        assert removed.point == ConfigPoint(10, 0.5)

    def test_exact_match_removes_the_front(self):
        prof = profile_from_points([(10, 0.5, 5.0)])
        running = running_from(prof, (10, 0.5))
        decisions = scale_down(running, -5.0)
        assert len(decisions) == 1

    def test_small_gap_removes_nothing(self):
        prof = profile_from_points([(10, 0.5, 5.0)])
        running = running_from(prof, (10, 0.5))
        assert scale_down(running, -3.0) == []

    def test_never_removes_more_than_the_gap_and_terminates(self):
        rng = random.Random(31)
        for _ in range(500):
            prof = random_profile(rng)
            points = prof.points()
            pods = [rng.choice(points) for _ in range(rng.randint(0, 10))]
            running = running_from(prof, *[(p.sm_partition, p.quota) for p in pods])
            gap = -rng.uniform(0.1, 100.0)
            decisions = scale_down(running, gap)
            removed_t = sum(throughput_at(prof, d.point) for d in decisions)
            assert removed_t <= -gap + 1e-9


class TestPredictDemand:
    def test_max_of_recent_history(self):
        assert predict_demand("fn", [10.0, 20.0, 15.0]).predicted_rps == 20.0

    def test_single_sample(self):
        assert predict_demand("fn", [7.0]).predicted_rps == 7.0

    def test_all_zero(self):
        assert predict_demand("fn", [0.0, 0.0, 0.0]).predicted_rps == 0.0

    def test_only_last_k_samples_count(self):
        estimate = predict_demand("fn", [100.0, 1.0, 2.0, 3.0], k=3)
        assert estimate.predicted_rps == 3.0

    def test_empty_history_is_an_error(self):
        with pytest.raises(ValidationError):
            predict_demand("fn", [])
