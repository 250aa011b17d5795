"""End-to-end simulator behavior on small constructed scenarios."""

import json

import pytest

from gshare_sim import (
    ConfigPoint,
    Request,
    Scenario,
    ValidationError,
    compare_policies,
    latency_of,
    run,
    violates_slo,
)
from gshare_sim.sim_engine import FunctionSpec, InitialPod, _Engine
from gshare_sim.profiles import grid_points, synth_profile
from gshare_sim.traces import constant_trace, explicit_trace


def make_scenario(*, t_max=10.0, knee=24.0, rps=10.0, windows=8,
                  fleet_size=1, epoch_windows=5, cold_start_windows=2,
                  initial=((24, 1.0),), slo_ms=250.0, grid_sm=(6, 12, 24, 50, 100),
                  grid_quota=(0.2, 0.4, 0.6, 0.8, 1.0), trace=None,
                  function_id="fn", max_queue=None):
    profile = synth_profile(function_id, t_max, knee,
                            grid_points(grid_sm, grid_quota),
                            slo_latency_ms=slo_ms)
    if trace is None:
        trace = constant_trace(rps, windows, 1.0)
    spec = FunctionSpec(
        profile, trace,
        initial_pods=[InitialPod(ConfigPoint(sm, q)) for sm, q in initial],
        max_queue=max_queue)
    return Scenario(fleet_size=fleet_size, windows=windows, functions=[spec],
                    epoch_windows=epoch_windows,
                    cold_start_windows=cold_start_windows)


class TestRequestHelpers:
    def test_latency_is_completion_minus_arrival(self):
        req = Request(arrival_s=1.0, completed_s=1.25)
        assert latency_of(req) == pytest.approx(250.0)

    def test_incomplete_request_has_no_latency(self):
        with pytest.raises(ValidationError):
            latency_of(Request(arrival_s=1.0))

    def test_slo_check_is_strict(self):
        req = Request(arrival_s=0.0, completed_s=0.25)
        assert not violates_slo(req, 250.0)
        assert violates_slo(req, 249.0)


def engine_with_pod(t_max=100.0):
    engine = _Engine(make_scenario(t_max=t_max, rps=1.0, windows=1), "fast")
    fn = engine.functions["fn"]
    pod = engine._make_pod(fn, ConfigPoint(24, 1.0), None, warm_at=0)
    fn.pods[pod.pod_id] = pod
    return engine, fn, pod


class TestServiceDiscipline:
    def test_idle_pod_serves_in_one_service_time(self):
        """At 100 rps, a lone request takes 10 ms: no queueing."""
        engine, fn, pod = engine_with_pod()
        req = Request(arrival_s=0.0)
        fn.queue.append(req)
        engine._serve(pod, 0.0, 1.0, window=0)
        assert latency_of(req) == pytest.approx(10.0)

    def test_fifo_backlog_adds_service_times(self):
        """A request behind 4 others at 100 rps completes at 50 ms."""
        engine, fn, pod = engine_with_pod()
        reqs = [Request(arrival_s=0.0) for _ in range(5)]
        fn.queue.extend(reqs)
        engine._serve(pod, 0.0, 1.0, window=0)
        assert latency_of(reqs[-1]) == pytest.approx(50.0)
        assert [latency_of(r) for r in reqs] == pytest.approx(
            [10.0, 20.0, 30.0, 40.0, 50.0])


class TestSteadyState:
    def test_matched_capacity_has_zero_violations_and_no_queue_growth(self):
        report = run(make_scenario(), "fast")
        summary = report.summary()
        assert summary["slo_violation_pct"] == 0.0
        depths = [row.queue_depth for row in report.function_rows]
        assert max(depths) <= 1

    def test_identical_runs_are_byte_identical(self):
        a = run(make_scenario(), "fast").to_csv()
        b = run(make_scenario(), "fast").to_csv()
        assert a == b


class TestZeroArrivals:
    def test_pods_scale_away_and_nothing_runs(self):
        report = run(make_scenario(rps=0.0, windows=6, epoch_windows=2), "fast")
        for row in report.gpu_rows:
            assert row.utilization == 0.0
        # the idle pod is removed at the first epoch (window 2)
        in_use = {row.window: row.gpus_in_use for row in report.global_rows}
        assert in_use[0] == 1
        assert in_use[5] == 0
        assert report.summary()["slo_violation_pct"] == 0.0


class TestOverload:
    def test_demand_beyond_fleet_capacity_fails_placements_and_grows_queue(self):
        scenario = make_scenario(
            t_max=10.0, knee=24.0, rps=100.0, windows=8, fleet_size=1,
            epoch_windows=2, cold_start_windows=0, grid_sm=(24,),
            grid_quota=(1.0,), slo_ms=10000.0)
        report = run(scenario, "fast")
        assert report.summary()["placement_failures"] > 0
        depths = [row.queue_depth for row in report.function_rows]
        assert all(b >= a for a, b in zip(depths, depths[1:]))
        assert depths[-1] > depths[0]


class TestColdStart:
    def test_no_initial_pods_delays_first_completions(self):
        scenario = make_scenario(
            rps=5.0, windows=6, epoch_windows=1, cold_start_windows=2,
            initial=(), slo_ms=100.0)
        report = run(scenario, "fast")
        by_window = {row.window: row for row in report.function_rows}
        # scaled up at the window-1 epoch, warm 2 windows later
        assert by_window[0].completions == 0
        assert by_window[1].completions == 0
        assert by_window[2].completions == 0
        assert by_window[3].completions > 0
        # every early request waited out the cold start, far past its SLO
        assert by_window[3].slo_violations > 0


class TestComparePolicies:
    def test_empty_workload_uses_no_gpus_under_either_policy(self):
        scenario = make_scenario(rps=0.0, windows=4, epoch_windows=2,
                                 initial=())
        reports = compare_policies(scenario)
        for report in reports.values():
            assert report.summary()["gpus_used_peak"] == 0

    def test_full_gpu_pod_makes_the_policies_coincide(self):
        scenario = make_scenario(rps=5.0, windows=4, initial=((100, 1.0),))
        reports = compare_policies(scenario)
        assert reports["fast"].to_csv() == reports["timeshare"].to_csv()


class TestScenarioValidation:
    def test_zero_fleet_rejected(self):
        with pytest.raises(ValidationError):
            make_scenario(fleet_size=0).validate()

    def test_unprofiled_initial_pod_rejected(self):
        with pytest.raises(ValidationError):
            make_scenario(initial=((24, 0.3),)).validate()

    def test_missing_full_quota_point_rejected(self):
        profile = synth_profile("fn", 10.0, 24.0,
                                grid_points((24,), (0.4, 0.8)))
        spec = FunctionSpec(profile, explicit_trace([1]))
        with pytest.raises(ValidationError):
            Scenario(fleet_size=1, windows=1, functions=[spec]).validate()

    def test_quantum_must_divide_the_window(self):
        scenario = make_scenario()
        scenario.quantum = 0.03
        with pytest.raises(ValidationError):
            scenario.validate()

    def test_from_dict_round_trip(self, scenario_dir):
        scenario = Scenario.from_json(str(scenario_dir / "steady.json"))
        assert scenario.fleet_size == 1
        assert scenario.windows == 8
        assert scenario.functions[0].function_id == "imgnet_small"

    def test_missing_field_is_a_validation_error(self):
        with pytest.raises(ValidationError):
            Scenario.from_dict({"fleet_size": 1})


class TestDroppedRequests:
    def test_bounded_queue_drops_overflow(self):
        scenario = make_scenario(
            t_max=10.0, rps=50.0, windows=3, grid_sm=(24,), grid_quota=(1.0,),
            slo_ms=10000.0, max_queue=5, epoch_windows=10)
        report = run(scenario, "fast")
        summary = report.summary()["per_function"]["fn"]
        assert summary["dropped"] > 0
        depths = [row.queue_depth for row in report.function_rows]
        assert max(depths) <= 5 + 1  # one request may be pinned mid-service
