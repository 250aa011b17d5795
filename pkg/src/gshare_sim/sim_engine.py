"""Deterministic discrete-event simulation of the full sharing stack.

Time advances in fixed scheduling windows subdivided into token quanta.  At
every epoch boundary the autoscaler re-plans pod counts from observed demand
and the packer moves pods on and off GPUs; within each window the token
backend arbitrates GPU time and pods drain their function's FIFO request
queue at the profiled full-quota rate while they hold a token.

Everything is a pure function of (scenario, policy): arrival generation is
seeded, all iteration orders are explicit, and two runs produce byte-identical
metrics.
"""
from __future__ import annotations

import json
import logging
import math
import os
from collections import deque
from dataclasses import dataclass, field

from .autoscaler import (
    DemandEstimate,
    RunningPod,
    RunningSet,
    predict_demand,
    rps_gap,
    scale_down,
    scale_up,
)
from .errors import MissingConfigurationError, ValidationError
from .memory_model import DEFAULT_GPU_MEMORY_MB, MemorySpec
from .metrics import (
    FunctionWindowRow,
    GlobalWindowRow,
    GpuWindowRow,
    MetricsReport,
)
from .packer import (
    DEFAULT_RESTRUCTURE_THRESHOLD,
    GpuNode,
    PodRequest,
    best_match,
    new_node,
    place,
    release,
    restructure,
)
from .profiles import (
    ConfigPoint,
    DEFAULT_QUOTA_GRID,
    DEFAULT_SM_GRID,
    FunctionProfile,
    grid_points,
    ingest_profiles,
    synth_profile,
    throughput_at,
)
from .memory_model import footprint
from .token_backend import (
    BackendTable,
    ResourceConfig,
    build_queue,
    complete_token,
    dispatch,
    filter_pods,
    reset_window,
)
from .traces import WorkloadTrace, trace_from_spec

logger = logging.getLogger(__name__)

POLICIES = ("fast", "timeshare")

_TIME_EPS = 1e-12


@dataclass(eq=False)
class Request:
    """One inference request flowing through the simulator."""

    arrival_s: float
    server: str | None = None        # pod currently working on it
    remaining_s: float | None = None  # service time left once started
    started_s: float | None = None
    completed_s: float | None = None


def latency_of(request: Request) -> float:
    """End-to-end latency in milliseconds (queueing plus service)."""
    if request.completed_s is None:
        raise ValidationError("request has not completed")
    return (request.completed_s - request.arrival_s) * 1000.0


def violates_slo(request: Request, slo_latency_ms: float) -> bool:
    return latency_of(request) > slo_latency_ms


@dataclass
class InitialPod:
    point: ConfigPoint
    quota_request: float | None = None  # defaults to the point's quota


@dataclass
class FunctionSpec:
    profile: FunctionProfile
    trace: WorkloadTrace
    initial_pods: list[InitialPod] = field(default_factory=list)
    max_queue: int | None = None

    @property
    def function_id(self) -> str:
        return self.profile.function_id


@dataclass
class Scenario:
    fleet_size: int
    windows: int
    functions: list[FunctionSpec]
    window_ms: float = 1000.0
    epoch_windows: int = 5
    quantum: float = 0.02
    cold_start_windows: int = 2
    seed: int = 0
    model_sharing: bool = True
    gpu_capacity_mb: float = DEFAULT_GPU_MEMORY_MB
    restructure_threshold: int = DEFAULT_RESTRUCTURE_THRESHOLD

    def validate(self) -> None:
        if self.fleet_size < 1:
            raise ValidationError(f"fleet_size must be >= 1, got {self.fleet_size!r}")
        if self.windows < 1:
            raise ValidationError(f"windows must be >= 1, got {self.windows!r}")
        if self.epoch_windows < 1:
            raise ValidationError(f"epoch_windows must be >= 1, got {self.epoch_windows!r}")
        if not (math.isfinite(self.window_ms) and self.window_ms > 0):
            raise ValidationError(f"window_ms must be positive, got {self.window_ms!r}")
        if not (0 < self.quantum <= 1):
            raise ValidationError(f"quantum must be in (0, 1], got {self.quantum!r}")
        steps = round(1.0 / self.quantum)
        if steps < 1 or abs(steps * self.quantum - 1.0) > 1e-9:
            raise ValidationError(
                f"quantum {self.quantum!r} must divide the window evenly")
        if self.cold_start_windows < 0:
            raise ValidationError(
                f"cold_start_windows must be >= 0, got {self.cold_start_windows!r}")
        if self.gpu_capacity_mb <= 0:
            raise ValidationError(
                f"gpu_capacity_mb must be positive, got {self.gpu_capacity_mb!r}")
        if self.restructure_threshold < 0:
            raise ValidationError("restructure_threshold must be >= 0")
        seen: set[str] = set()
        for fn in self.functions:
            fid = fn.function_id
            if fid in seen:
                raise ValidationError(f"duplicate function id {fid!r}")
            seen.add(fid)
            for sm in sorted({p.sm_partition for p in fn.profile.entries}):
                if ConfigPoint(sm, 1.0) not in fn.profile.entries:
                    raise ValidationError(
                        f"{fid}: profile needs the full-quota point ({sm:g}, 1.0) "
                        f"to derive the serving rate")
            for init in fn.initial_pods:
                if init.point not in fn.profile.entries:
                    raise ValidationError(
                        f"{fid}: initial pod point ({init.point.sm_partition:g}, "
                        f"{init.point.quota:g}) is not profiled")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | None = None) -> "Scenario":
        if not isinstance(data, dict):
            raise ValidationError("scenario must be a JSON object")
        try:
            functions = [
                _function_spec_from_dict(f, data, base_dir)
                for f in data.get("functions", [])
            ]
            scenario = cls(
                fleet_size=int(data["fleet_size"]),
                windows=int(data["windows"]),
                functions=functions,
                window_ms=float(data.get("window_ms", 1000.0)),
                epoch_windows=int(data.get("epoch_windows", 5)),
                quantum=float(data.get("quantum", 0.02)),
                cold_start_windows=int(data.get("cold_start_windows", 2)),
                seed=int(data.get("seed", 0)),
                model_sharing=bool(data.get("model_sharing", True)),
                gpu_capacity_mb=float(data.get("gpu_capacity_mb", DEFAULT_GPU_MEMORY_MB)),
                restructure_threshold=int(
                    data.get("restructure_threshold", DEFAULT_RESTRUCTURE_THRESHOLD)),
            )
        except KeyError as exc:
            raise ValidationError(f"scenario is missing required field {exc.args[0]!r}")
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"scenario field has wrong type: {exc}")
        scenario.validate()
        return scenario

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read scenario {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario {path!r} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def _function_spec_from_dict(data: dict, scenario: dict, base_dir: str | None) -> FunctionSpec:
    fid = data.get("function_id")
    if not fid:
        raise ValidationError("function entry needs a function_id")
    prof_spec = data.get("profile")
    if not isinstance(prof_spec, dict):
        raise ValidationError(f"{fid}: function entry needs a profile object")
    if "synth" in prof_spec:
        s = prof_spec["synth"]
        mem_spec = s.get("mem")
        mem = MemorySpec(**mem_spec) if mem_spec else None
        grid = grid_points(s.get("grid_sm", DEFAULT_SM_GRID),
                           s.get("grid_quota", DEFAULT_QUOTA_GRID))
        profile = synth_profile(
            fid, float(s["t_max"]), float(s["sm_knee"]), grid,
            slo_latency_ms=float(s.get("slo_ms", 1000.0)),
            mem=mem)
    elif "csv" in prof_spec:
        path = prof_spec["csv"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        profiles = ingest_profiles(path)
        if fid not in profiles:
            raise ValidationError(f"{fid}: not found in profile file {path!r}")
        profile = profiles[fid]
    else:
        raise ValidationError(f"{fid}: profile must have a 'synth' or 'csv' key")

    windows = int(scenario["windows"])
    window_s = float(scenario.get("window_ms", 1000.0)) / 1000.0
    seed = int(scenario.get("seed", 0))
    trace = trace_from_spec(data.get("trace", {"kind": "constant", "rps": 0.0}),
                            windows, window_s, seed, base_dir)
    initial = []
    for p in data.get("initial_pods", []):
        point = ConfigPoint(float(p["sm"]), float(p["quota"]))
        q_req = p.get("quota_request")
        initial.append(InitialPod(point, None if q_req is None else float(q_req)))
    max_queue = data.get("max_queue")
    return FunctionSpec(profile, trace,
                        initial_pods=initial,
                        max_queue=None if max_queue is None else int(max_queue))


# ---------------------------------------------------------------------------
# Engine internals
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Pod:
    pod_id: str
    function_id: str
    point: ConfigPoint        # profiled point (autoscaler's view)
    config: ResourceConfig    # effective scheduling config (policy applied)
    request: PodRequest
    service_rate: float       # requests/s while holding a token
    gpu_id: int | None = None
    warm_at: int | None = None
    registered: bool = False
    busy_until: float = 0.0
    current: Request | None = None


class _FunctionState:
    def __init__(self, spec: FunctionSpec):
        self.spec = spec
        self.profile = spec.profile
        self.queue: deque[Request] = deque()   # arrived, not yet completed
        self.future: deque[Request] = deque()  # generated, not yet arrived
        self.pinned = 0
        self.pods: dict[str, _Pod] = {}
        self.history: list[float] = []         # observed rps per window
        self.pod_counter = 0
        # window accumulators
        self.win_arrivals = 0
        self.win_completions = 0
        self.win_violations = 0
        self.win_dropped = 0
        self.total_arrivals = 0
        self.total_completions = 0
        self.total_violations = 0
        self.total_dropped = 0

    @property
    def unpinned(self) -> int:
        return len(self.queue) - self.pinned


class _Engine:
    def __init__(self, scenario: Scenario, policy: str = "fast"):
        if policy not in POLICIES:
            raise ValidationError(f"policy must be one of {POLICIES}, got {policy!r}")
        scenario.validate()
        self.scenario = scenario
        self.policy = policy
        self.window_s = scenario.window_ms / 1000.0
        self.quantum_s = self.window_s * scenario.quantum
        self.steps = round(1.0 / scenario.quantum)
        self.nodes: list[GpuNode] = [
            new_node(g, capacity_mb=scenario.gpu_capacity_mb,
                     sharing=scenario.model_sharing)
            for g in range(scenario.fleet_size)
        ]
        self.tables: dict[int, BackendTable] = {
            g: BackendTable(scenario.window_ms, scenario.quantum)
            for g in range(scenario.fleet_size)
        }
        self.functions: dict[str, _FunctionState] = {}
        for spec in scenario.functions:
            self.functions[spec.function_id] = _FunctionState(spec)
        self.specs: dict[str, MemorySpec] = {
            fid: st.profile.mem for fid, st in self.functions.items()
        }
        self.retry: list[_Pod] = []
        self.win_failures = 0
        if policy == "timeshare":
            for fid, st in sorted(self.functions.items()):
                if ConfigPoint(100.0, 1.0) not in st.profile.entries:
                    raise ValidationError(
                        f"{fid}: timeshare policy needs the (100, 1.0) profile point")

    # -- pod construction ---------------------------------------------------

    def _effective_sm(self, point: ConfigPoint) -> float:
        return 100.0 if self.policy == "timeshare" else point.sm_partition

    def _service_rate(self, profile: FunctionProfile, point: ConfigPoint) -> float:
        rate_point = ConfigPoint(self._effective_sm(point), 1.0)
        try:
            rate = throughput_at(profile, rate_point)
        except MissingConfigurationError as exc:
            raise ValidationError(str(exc)) from exc
        if rate <= 0:
            raise ValidationError(
                f"{profile.function_id}: zero serving rate at "
                f"({rate_point.sm_partition:g}, 1.0)")
        return rate

    def _make_pod(self, fn: _FunctionState, point: ConfigPoint,
                  quota_request: float | None, warm_at: int) -> _Pod:
        pod_id = f"{fn.spec.function_id}-{fn.pod_counter:04d}"
        fn.pod_counter += 1
        sm = self._effective_sm(point)
        config = ResourceConfig(
            sm_partition=sm,
            quota_request=point.quota if quota_request is None else quota_request,
            quota_limit=point.quota,
        )
        req = PodRequest.from_limits(pod_id, fn.spec.function_id,
                                     quota_limit=point.quota, sm_partition=sm)
        rate = self._service_rate(fn.profile, point)
        return _Pod(pod_id, fn.spec.function_id, point, config, req, rate,
                    warm_at=warm_at)

    # -- epoch plumbing -----------------------------------------------------

    def _running_pods(self, fn: _FunctionState) -> list[RunningPod]:
        pods = [RunningPod(p.pod_id, p.point, throughput_at(fn.profile, p.point))
                for p in fn.pods.values()]
        pods += [RunningPod(p.pod_id, p.point, throughput_at(fn.profile, p.point))
                 for p in self.retry if p.function_id == fn.spec.function_id]
        return pods

    def _remove_pod(self, fn: _FunctionState, pod_id: str) -> None:
        for i, pod in enumerate(self.retry):
            if pod.pod_id == pod_id:
                del self.retry[i]
                return
        pod = fn.pods.pop(pod_id)
        if pod.current is not None:
            # the in-flight request restarts from scratch on another pod
            pod.current.server = None
            pod.current.remaining_s = None
            pod.current.started_s = None
            pod.current = None
            fn.pinned -= 1
        if pod.registered:
            self.tables[pod.gpu_id].unregister_pod(pod_id)
        release(self.nodes[pod.gpu_id], pod_id)

    def _place_batch(self, batch: list[_Pod], window: int) -> None:
        batch = sorted(batch, key=lambda p: (-p.request.area, p.pod_id))
        for pod in batch:
            found = best_match(self.nodes, pod.request, self.specs)
            if found is None:
                self.win_failures += 1
                self.retry.append(pod)
                logger.debug("window %d: no placement for %s (%s x %s)",
                             window, pod.pod_id, pod.request.w, pod.request.h)
                continue
            gpu_id, chosen = found
            place(self.nodes[gpu_id], chosen, pod.request)
            pod.gpu_id = gpu_id
            self.functions[pod.function_id].pods[pod.pod_id] = pod

    def _run_epoch(self, window: int) -> None:
        additions: list[_Pod] = []
        for fid in sorted(self.functions):
            fn = self.functions[fid]
            estimate = predict_demand(fid, fn.history)
            running = self._running_pods(fn)
            running_set = RunningSet(fid, running)
            gap = rps_gap(fn.profile, running_set, estimate)
            logger.debug("window %d: %s demand=%.3f gap=%.3f pods=%d",
                         window, fid, estimate.predicted_rps, gap, len(running))
            if gap > 0:
                for decision in scale_up(fn.profile, gap):
                    additions.append(self._make_pod(
                        fn, decision.point, None,
                        warm_at=window + self.scenario.cold_start_windows))
            elif gap < 0:
                for decision in scale_down(running_set, gap):
                    self._remove_pod(fn, decision.pod_id)
        retry, self.retry = self.retry, []
        self._place_batch(retry + additions, window)
        for node in self.nodes:
            restructure(node, self.scenario.restructure_threshold)

    # -- window loop --------------------------------------------------------

    def run(self) -> MetricsReport:
        report = MetricsReport(policy=self.policy)
        initial: list[_Pod] = []
        for fid in sorted(self.functions):
            fn = self.functions[fid]
            initial.extend(self._make_pod(fn, init.point, init.quota_request, warm_at=0)
                           for init in fn.spec.initial_pods)
        self._place_batch(initial, 0)

        for window in range(self.scenario.windows):
            if window > 0 and window % self.scenario.epoch_windows == 0:
                self._run_epoch(window)
            self._warm_up(window)
            for gpu_id in sorted(self.tables):
                reset_window(self.tables[gpu_id])
            self._generate_arrivals(window)
            self._run_window_steps(window)
            self._close_window(window, report)
        return report

    def _warm_up(self, window: int) -> None:
        for fid in sorted(self.functions):
            for pod_id in sorted(self.functions[fid].pods):
                pod = self.functions[fid].pods[pod_id]
                if not pod.registered and pod.warm_at is not None and pod.warm_at <= window:
                    self.tables[pod.gpu_id].register_pod(pod.pod_id, pod.config)
                    pod.registered = True

    def _generate_arrivals(self, window: int) -> None:
        start = window * self.window_s
        for fid in sorted(self.functions):
            fn = self.functions[fid]
            n = fn.spec.trace.count(window)
            fn.win_arrivals = n
            fn.total_arrivals += n
            for i in range(n):
                fn.future.append(Request(arrival_s=start + i * self.window_s / n))

    def _admit_arrivals(self, fn: _FunctionState, now: float) -> None:
        limit = fn.spec.max_queue
        while fn.future and fn.future[0].arrival_s <= now + _TIME_EPS:
            req = fn.future.popleft()
            if limit is not None and len(fn.queue) >= limit:
                fn.win_dropped += 1
                fn.total_dropped += 1
            else:
                fn.queue.append(req)

    def _complete_live_tokens(self) -> None:
        for gpu_id in sorted(self.tables):
            table = self.tables[gpu_id]
            for token_id in sorted(table.live_tokens):
                complete_token(table, table.live_tokens[token_id])

    def _run_window_steps(self, window: int) -> None:
        coverage = {g: 0.0 for g in self.tables}
        occupancy = {g: 0.0 for g in self.tables}
        all_pods = {p.pod_id: p
                    for fn in self.functions.values() for p in fn.pods.values()}
        for step in range(self.steps):
            t0 = window * self.window_s + step * self.quantum_s
            self._complete_live_tokens()
            for fid in sorted(self.functions):
                self._admit_arrivals(self.functions[fid], t0)
            step_tokens: list[tuple[int, list]] = []
            for gpu_id in sorted(self.tables):
                table = self.tables[gpu_id]
                _blocked, candidates = filter_pods(table)
                requesting = []
                for pod_id in candidates:
                    pod = all_pods.get(pod_id)
                    if pod is None:
                        continue
                    fn = self.functions[pod.function_id]
                    if pod.current is not None or fn.unpinned > 0:
                        requesting.append(pod_id)
                queue = build_queue(requesting, table)
                tokens = dispatch(queue, table, now=step * self.scenario.quantum)
                if tokens:
                    step_tokens.append((gpu_id, tokens))
            for gpu_id, tokens in step_tokens:
                coverage[gpu_id] += max(t.duration for t in tokens)
                occupancy[gpu_id] += sum(
                    t.sm_partition * t.duration for t in tokens) / 100.0
                for token in sorted(tokens, key=lambda t: t.pod_id):
                    pod = all_pods[token.pod_id]
                    self._serve(pod, t0, t0 + token.duration * self.window_s, window)
        self._complete_live_tokens()
        self._window_coverage = coverage
        self._window_occupancy = occupancy

    def _serve(self, pod: _Pod, t_start: float, t_end: float, window: int) -> None:
        fn = self.functions[pod.function_id]
        t = max(t_start, pod.busy_until)
        while t < t_end - _TIME_EPS:
            req = pod.current
            if req is None:
                req = next((r for r in fn.queue if r.server is None), None)
                if req is None:
                    break
                req.server = pod.pod_id
                req.remaining_s = 1.0 / pod.service_rate
                req.started_s = t
                fn.pinned += 1
                pod.current = req
            span = min(t_end - t, req.remaining_s)
            req.remaining_s -= span
            t += span
            if req.remaining_s <= _TIME_EPS:
                req.completed_s = t
                fn.queue.remove(req)
                fn.pinned -= 1
                pod.current = None
                fn.win_completions += 1
                fn.total_completions += 1
                if violates_slo(req, fn.profile.slo_latency_ms):
                    fn.win_violations += 1
                    fn.total_violations += 1
        pod.busy_until = t

    def _close_window(self, window: int, report: MetricsReport) -> None:
        for fid in sorted(self.functions):
            fn = self.functions[fid]
            fn.history.append(fn.win_arrivals / self.window_s)
            report.function_rows.append(FunctionWindowRow(
                window=window,
                function_id=fid,
                arrivals=fn.win_arrivals,
                completions=fn.win_completions,
                slo_violations=fn.win_violations,
                dropped=fn.win_dropped,
                queue_depth=len(fn.queue) + len(fn.future),
            ))
            fn.win_arrivals = fn.win_completions = 0
            fn.win_violations = fn.win_dropped = 0
        in_use = 0
        for node in self.nodes:
            if node.placements:
                in_use += 1
                report.gpu_rows.append(GpuWindowRow(
                    window=window,
                    gpu_id=node.gpu_id,
                    utilization=min(1.0, self._window_coverage[node.gpu_id]),
                    sm_occupancy=min(1.0, self._window_occupancy[node.gpu_id]),
                    memory_mb=footprint(node.mem, self.specs),
                ))
        total_free = sum(r.area for node in self.nodes for r in node.free_rects)
        largest = max((r.area for node in self.nodes for r in node.free_rects),
                      default=None)
        frag = 0.0 if not total_free or largest is None else float(1 - largest / total_free)
        report.global_rows.append(GlobalWindowRow(
            window=window,
            gpus_in_use=in_use,
            placement_failures=self.win_failures,
            fragmentation_index=frag,
        ))
        self.win_failures = 0
        if logger.isEnabledFor(logging.DEBUG):
            for gpu_id in sorted(self.tables):
                for line in self.tables[gpu_id].debug_lines():
                    logger.debug("window %d gpu %d: %s", window, gpu_id, line)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def run(scenario: Scenario, policy: str = "fast") -> MetricsReport:
    """Simulate one scenario under one policy."""
    return _Engine(scenario, policy).run()


def compare_policies(scenario: Scenario,
                     policies: tuple[str, ...] = POLICIES) -> dict[str, MetricsReport]:
    """Run the same scenario under each policy (same seed, fresh state)."""
    for policy in policies:
        if policy not in POLICIES:
            raise ValidationError(f"unknown policy {policy!r}")
    return {policy: run(scenario, policy) for policy in policies}
