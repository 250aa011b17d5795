"""GPU memory accounting with and without cross-pod model sharing.

With sharing enabled, the first pod of a model on a GPU pays the model server
cost (parameters plus storage context, loaded once per GPU) and every pod pays
its private runtime cost.  Without sharing each pod carries a full private
copy.  Admission is a pure capacity check against the footprint after adding
one pod.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import MissingConfigurationError, ValidationError

#: Default GPU memory capacity in MB (16 GB-class accelerator).
DEFAULT_GPU_MEMORY_MB = 16384.0


@dataclass(frozen=True)
class MemorySpec:
    """Per-model memory costs in MB."""

    mem_noshare_mb: float  # per pod, private copy of model + runtime
    mem_runtime_mb: float  # per pod when the model itself is shared
    mem_server_mb: float   # once per (model, GPU): parameters + storage context

    def __post_init__(self):
        for name in ("mem_noshare_mb", "mem_runtime_mb", "mem_server_mb"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {v!r}")


@dataclass
class GpuMemoryState:
    """Resident pod counts per model on one GPU."""

    capacity_mb: float = DEFAULT_GPU_MEMORY_MB
    sharing: bool = True
    resident: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.capacity_mb) and self.capacity_mb > 0):
            raise ValidationError(f"capacity_mb must be positive, got {self.capacity_mb!r}")

    def add_pod(self, function_id: str) -> None:
        self.resident[function_id] = self.resident.get(function_id, 0) + 1

    def remove_pod(self, function_id: str) -> None:
        count = self.resident.get(function_id, 0)
        if count <= 0:
            raise ValidationError(f"no resident pod of {function_id!r} to remove")
        if count == 1:
            del self.resident[function_id]
        else:
            self.resident[function_id] = count - 1


def footprint(state: GpuMemoryState, specs: Mapping[str, MemorySpec]) -> float:
    """Total MB used by the resident pods under the state's sharing mode."""
    total = 0.0
    for function_id, count in state.resident.items():
        if count <= 0:
            continue
        spec = specs.get(function_id)
        if spec is None:
            raise MissingConfigurationError(f"no memory spec for model {function_id!r}")
        if state.sharing:
            total += spec.mem_server_mb + count * spec.mem_runtime_mb
        else:
            total += count * spec.mem_noshare_mb
    return total


def admit(state: GpuMemoryState, specs: Mapping[str, MemorySpec], function_id: str) -> bool:
    """Would one more pod of `function_id` fit on this GPU?"""
    spec = specs.get(function_id)
    if spec is None:
        raise MissingConfigurationError(f"no memory spec for model {function_id!r}")
    if state.sharing:
        delta = spec.mem_runtime_mb
        if state.resident.get(function_id, 0) <= 0:
            delta += spec.mem_server_mb
    else:
        delta = spec.mem_noshare_mb
    return footprint(state, specs) + delta <= state.capacity_mb
