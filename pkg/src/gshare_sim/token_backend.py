"""Window-based token scheduler for one GPU.

Each pod declares an SM partition and a requested/limit share of every
scheduling window.  The backend tracks consumed quota per window, blocks pods
that hit their limit, orders the rest by how far they are behind their request,
and grants short run tokens while the sum of SM partitions of live tokens
stays within the global cap.  Dispatch is strictly head-blocking: the first
pod that does not fit stops the round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConflictError, ValidationError

#: Hard cap on the summed SM partitions of concurrently live tokens (percent).
SM_GLOBAL_LIMIT = 100.0

#: Default scheduling window and token quantum (quantum is a window fraction).
DEFAULT_WINDOW_MS = 1000.0
DEFAULT_QUANTUM = 0.02

# Guard against float dust from repeated quantum grants; far below the quantum.
QUOTA_EPS = 1e-9
_SM_EPS = 1e-9


@dataclass(frozen=True)
class ResourceConfig:
    """Per-pod sharing configuration."""

    sm_partition: float   # percent of SMs, (0, 100]
    quota_request: float  # soft target share of each window, (0, 1]
    quota_limit: float    # hard ceiling per window, (0, 1], >= request
    gpu_mem_mb: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sm_partition) and 0 < self.sm_partition <= SM_GLOBAL_LIMIT):
            raise ValidationError(f"sm_partition must be in (0, 100], got {self.sm_partition!r}")
        for name in ("quota_request", "quota_limit"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0 < v <= 1):
                raise ValidationError(f"{name} must be in (0, 1], got {v!r}")
        if self.quota_request > self.quota_limit + QUOTA_EPS:
            raise ValidationError(
                f"quota_request {self.quota_request!r} exceeds quota_limit {self.quota_limit!r}")
        if not (math.isfinite(self.gpu_mem_mb) and self.gpu_mem_mb >= 0):
            raise ValidationError(f"gpu_mem_mb must be >= 0, got {self.gpu_mem_mb!r}")


@dataclass
class PodQuotaState:
    pod_id: str
    config: ResourceConfig
    quota_used: float = 0.0

    @property
    def quota_remaining(self) -> float:
        """Window time left before the hard limit blocks this pod."""
        return self.config.quota_limit - self.quota_used

    @property
    def quota_deficit(self) -> float:
        """How far behind its requested share the pod is (may go negative)."""
        return self.config.quota_request - self.quota_used


@dataclass(frozen=True)
class Token:
    token_id: int
    pod_id: str
    sm_partition: float
    duration: float   # window fraction actually granted, <= quantum
    issued_at: float  # window-relative issue time (fraction of the window)


class BackendTable:
    """Quota ledger plus live-token accounting for one GPU."""

    def __init__(self, window_length_ms: float = DEFAULT_WINDOW_MS,
                 quantum: float = DEFAULT_QUANTUM):
        if not (math.isfinite(window_length_ms) and window_length_ms > 0):
            raise ValidationError(f"window_length_ms must be positive, got {window_length_ms!r}")
        if not (math.isfinite(quantum) and 0 < quantum <= 1):
            raise ValidationError(f"quantum must be in (0, 1], got {quantum!r}")
        self.window_length_ms = window_length_ms
        self.quantum = quantum
        self.pods: dict[str, PodQuotaState] = {}
        self.live_tokens: dict[int, Token] = {}
        self._holders: set[str] = set()
        self._sm_running = 0.0
        self._next_token_id = 0

    @property
    def sm_running(self) -> float:
        """Summed SM partitions of live tokens."""
        return self._sm_running

    def recomputed_sm_running(self) -> float:
        """Slow recomputation from the live token set; used by invariant checks."""
        return sum(t.sm_partition for t in self.live_tokens.values())

    def register_pod(self, pod_id: str, config: ResourceConfig) -> PodQuotaState:
        if pod_id in self.pods:
            raise ConflictError(f"pod {pod_id!r} already registered")
        state = PodQuotaState(pod_id, config)
        self.pods[pod_id] = state
        return state

    def unregister_pod(self, pod_id: str) -> None:
        if pod_id not in self.pods:
            raise ConflictError(f"pod {pod_id!r} not registered")
        if pod_id in self._holders:
            raise ConflictError(f"pod {pod_id!r} still holds a live token")
        del self.pods[pod_id]

    def debug_lines(self) -> list[str]:
        lines = [f"window={fmt(self.window_length_ms)}ms quantum={fmt(self.quantum)} "
                 f"sm_running={fmt(self._sm_running)} live={len(self.live_tokens)}"]
        for pod_id in sorted(self.pods):
            p = self.pods[pod_id]
            lines.append(
                f"  {pod_id}: sm={fmt(p.config.sm_partition)} "
                f"used={p.quota_used:.4f}/{fmt(p.config.quota_limit)} "
                f"req={fmt(p.config.quota_request)}"
                f"{' [token]' if pod_id in self._holders else ''}")
        return lines


def fmt(x: float) -> str:
    return f"{x:g}"


def filter_pods(table: BackendTable) -> tuple[set[str], set[str]]:
    """Split registered pods into (blocked, candidates).

    A pod is blocked exactly when its remaining window quota is exhausted.
    Pure with respect to the table.
    """
    blocked: set[str] = set()
    candidates: set[str] = set()
    for pod_id, state in table.pods.items():
        if state.quota_remaining <= QUOTA_EPS:
            blocked.add(pod_id)
        else:
            candidates.add(pod_id)
    return blocked, candidates


def build_queue(candidates: set[str] | list[str], table: BackendTable) -> list[str]:
    """Order candidates by quota deficit, most starved first; ties break on
    pod id so the order is reproducible."""
    for pod_id in candidates:
        if pod_id not in table.pods:
            raise ValidationError(f"pod {pod_id!r} not registered")
    return sorted(candidates, key=lambda pid: (-table.pods[pid].quota_deficit, pid))


def dispatch(queue: list[str], table: BackendTable, now: float = 0.0) -> list[Token]:
    """Grant tokens down the queue until the SM cap stops the head.

    Each grant covers min(quantum, remaining quota).  There is no skip-ahead:
    the first pod whose SM partition does not fit under the cap ends the round
    even if a later, smaller pod would fit.  Queued pods must not already hold
    a live token.
    """
    tokens: list[Token] = []
    for pod_id in queue:
        state = table.pods.get(pod_id)
        if state is None:
            raise ValidationError(f"pod {pod_id!r} not registered")
        if pod_id in table._holders:
            raise ConflictError(f"pod {pod_id!r} already holds a live token")
        sm = state.config.sm_partition
        if sm + table._sm_running > SM_GLOBAL_LIMIT + _SM_EPS:
            break
        duration = min(table.quantum, state.quota_remaining)
        if duration <= QUOTA_EPS:
            raise ValidationError(f"pod {pod_id!r} has no remaining quota; filter first")
        token = Token(table._next_token_id, pod_id, sm, duration, now)
        table._next_token_id += 1
        table.live_tokens[token.token_id] = token
        table._holders.add(pod_id)
        table._sm_running += sm
        tokens.append(token)
    return tokens


def complete_token(table: BackendTable, token: Token, elapsed: float | None = None) -> None:
    """Retire a live token, charging `elapsed` window time (default: the full
    granted duration) to the pod's window quota."""
    live = table.live_tokens.get(token.token_id)
    if live is None or live != token:
        raise ConflictError(f"token {token.token_id} is not live")
    if elapsed is None:
        elapsed = token.duration
    if elapsed < 0:
        raise ValidationError(f"elapsed must be >= 0, got {elapsed!r}")
    if elapsed > token.duration + QUOTA_EPS:
        raise ValidationError(
            f"elapsed {elapsed!r} exceeds granted duration {token.duration!r}")
    del table.live_tokens[token.token_id]
    table._holders.discard(token.pod_id)
    table._sm_running -= token.sm_partition
    if table._sm_running < 0 and table._sm_running > -_SM_EPS:
        table._sm_running = 0.0
    state = table.pods.get(token.pod_id)
    if state is not None:
        state.quota_used += elapsed


def reset_window(table: BackendTable) -> None:
    """Start a fresh window: zero consumed quota for every pod.  Live tokens
    are untouched; a token straddling the boundary charges its elapsed time to
    the new window when it completes."""
    for state in table.pods.values():
        state.quota_used = 0.0
