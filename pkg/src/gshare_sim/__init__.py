"""Spatio-temporal GPU-sharing scheduler engine and cluster simulator.

The package models inference functions that share GPUs along two axes at
once: a spatial slice (fraction of streaming multiprocessors) and a temporal
slice (fraction of each scheduling window, enforced through a token
mechanism).  On top of that sit a throughput-profile store, a resource-aware
autoscaler, a rectangle-packing placement engine with a model-sharing memory
account, and a deterministic discrete-event simulator that ties the pieces
together behind a small CLI.
"""
from .autoscaler import (
    DemandEstimate,
    RunningPod,
    RunningSet,
    ScalingDecision,
    most_efficient_point,
    predict_demand,
    rps_gap,
    scale_down,
    scale_up,
)
from .errors import (
    ConflictError,
    GShareError,
    InvariantError,
    MissingConfigurationError,
    ParseError,
    ValidationError,
)
from .memory_model import (
    DEFAULT_GPU_MEMORY_MB,
    GpuMemoryState,
    MemorySpec,
    admit,
    footprint,
)
from .metrics import MetricsReport
from .packer import (
    GpuNode,
    Placement,
    PodRequest,
    Rect,
    best_match,
    check_node,
    new_node,
    place,
    rect,
    release,
    restructure,
)
from .profiles import (
    ConfigPoint,
    FunctionProfile,
    ProfileEntry,
    grid_points,
    ingest_profile,
    ingest_profiles,
    rps_per_resource,
    serialize_profile,
    serialize_profiles,
    synth_profile,
    throughput_at,
)
from .sim_engine import (
    POLICIES,
    FunctionSpec,
    Request,
    Scenario,
    compare_policies,
    latency_of,
    run,
    violates_slo,
)
from .token_backend import (
    DEFAULT_QUANTUM,
    DEFAULT_WINDOW_MS,
    SM_GLOBAL_LIMIT,
    BackendTable,
    PodQuotaState,
    ResourceConfig,
    Token,
    build_queue,
    complete_token,
    dispatch,
    filter_pods,
    reset_window,
)
from .traces import (
    WorkloadTrace,
    constant_trace,
    explicit_trace,
    replay_trace,
    sinusoid_trace,
    step_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BackendTable",
    "ConfigPoint",
    "ConflictError",
    "DEFAULT_GPU_MEMORY_MB",
    "DEFAULT_QUANTUM",
    "DEFAULT_WINDOW_MS",
    "DemandEstimate",
    "FunctionProfile",
    "FunctionSpec",
    "GShareError",
    "GpuMemoryState",
    "GpuNode",
    "InvariantError",
    "MemorySpec",
    "MetricsReport",
    "MissingConfigurationError",
    "POLICIES",
    "ParseError",
    "Placement",
    "PodQuotaState",
    "PodRequest",
    "ProfileEntry",
    "Rect",
    "Request",
    "ResourceConfig",
    "RunningPod",
    "RunningSet",
    "SM_GLOBAL_LIMIT",
    "Scenario",
    "ScalingDecision",
    "Token",
    "ValidationError",
    "WorkloadTrace",
    "admit",
    "best_match",
    "build_queue",
    "check_node",
    "compare_policies",
    "complete_token",
    "constant_trace",
    "dispatch",
    "explicit_trace",
    "filter_pods",
    "footprint",
    "grid_points",
    "ingest_profile",
    "ingest_profiles",
    "latency_of",
    "most_efficient_point",
    "new_node",
    "place",
    "predict_demand",
    "rect",
    "release",
    "replay_trace",
    "reset_window",
    "restructure",
    "rps_gap",
    "rps_per_resource",
    "run",
    "scale_down",
    "scale_up",
    "serialize_profile",
    "serialize_profiles",
    "sinusoid_trace",
    "step_trace",
    "synth_profile",
    "throughput_at",
    "violates_slo",
]
