"""2D packing of pod footprints onto GPUs via maximal free rectangles.

A pod occupies a rectangle on each GPU's (time quota x SM partition) plane:
width is its per-window quota limit in percent units, height its SM share.
The packer keeps, per GPU, a list of *maximal* free rectangles: rectangles
may overlap each other, none contains another, and their union is exactly the
GPU area not covered by placements.  Placing a pod carves it out of every
overlapping free rectangle, leaving the largest possible residual on each
side; releasing a pod returns its exact rectangle for cheap reuse, and a
restructure pass rebuilds the free list from scratch once fragmentation makes
it noisy.

All geometry is exact rational arithmetic (fractions of the 100x100 percent
grid); float inputs are snapped to nearby small rationals on construction so
no float comparison ever decides a fit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import ConflictError, ValidationError
from .memory_model import GpuMemoryState, MemorySpec, admit

logger = logging.getLogger(__name__)

#: Side length of the GPU plane in percent units (both axes).
FULL_SIDE = Fraction(100)

#: Free-list length beyond which restructure rebuilds the node.
DEFAULT_RESTRUCTURE_THRESHOLD = 16

Numeric = int | float | Fraction


def as_frac(value: Numeric) -> Fraction:
    """Exact coordinate from a possibly-floaty input.

    Floats are snapped to the nearest rational with a small denominator, so
    artifacts like 100 * 0.14 == 14.000000000000002 become exactly 14.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValidationError(f"coordinate must be finite, got {value!r}")
        return Fraction(value).limit_denominator(10 ** 6)
    raise ValidationError(f"cannot interpret {value!r} as a coordinate")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; x spans quota, y spans SM, percent units."""

    x: Fraction
    y: Fraction
    w: Fraction
    h: Fraction

    @property
    def x2(self) -> Fraction:
        return self.x + self.w

    @property
    def y2(self) -> Fraction:
        return self.y + self.h

    @property
    def area(self) -> Fraction:
        return self.w * self.h

    def contains(self, other: "Rect") -> bool:
        return (other.x >= self.x and other.y >= self.y
                and other.x2 <= self.x2 and other.y2 <= self.y2)

    def intersects(self, other: "Rect") -> bool:
        """Positive-area overlap; touching edges do not count."""
        return (self.x < other.x2 and other.x < self.x2
                and self.y < other.y2 and other.y < self.y2)

    def intersection(self, other: "Rect") -> "Rect | None":
        x = max(self.x, other.x)
        y = max(self.y, other.y)
        x2 = min(self.x2, other.x2)
        y2 = min(self.y2, other.y2)
        if x >= x2 or y >= y2:
            return None
        return Rect(x, y, x2 - x, y2 - y)

    def as_tuple(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return (self.x, self.y, self.w, self.h)


def rect(x: Numeric, y: Numeric, w: Numeric, h: Numeric) -> Rect:
    """Validated Rect constructor; accepts ints, floats, or Fractions."""
    r = Rect(as_frac(x), as_frac(y), as_frac(w), as_frac(h))
    if r.w <= 0 or r.h <= 0:
        raise ValidationError(f"rectangle sides must be positive, got {r.w} x {r.h}")
    if r.x < 0 or r.y < 0 or r.x2 > FULL_SIDE or r.y2 > FULL_SIDE:
        raise ValidationError(
            f"rectangle ({r.x}, {r.y}, {r.w}, {r.h}) leaves the {FULL_SIDE}x{FULL_SIDE} plane")
    return r


def full_rect() -> Rect:
    return Rect(Fraction(0), Fraction(0), FULL_SIDE, FULL_SIDE)


@dataclass(frozen=True)
class PodRequest:
    """Footprint a pod asks the packer for."""

    pod_id: str
    function_id: str
    w: Fraction  # 100 * quota_limit
    h: Fraction  # sm_partition
    mem_demand_mb: float = 0.0

    def __post_init__(self):
        if not (0 < self.w <= FULL_SIDE) or not (0 < self.h <= FULL_SIDE):
            raise ValidationError(
                f"pod footprint must lie in (0, 100], got {self.w} x {self.h}")

    @classmethod
    def from_limits(cls, pod_id: str, function_id: str, quota_limit: Numeric,
                    sm_partition: Numeric, mem_demand_mb: float = 0.0) -> "PodRequest":
        return cls(pod_id, function_id, as_frac(quota_limit) * 100,
                   as_frac(sm_partition), mem_demand_mb)

    @property
    def area(self) -> Fraction:
        return self.w * self.h


@dataclass(frozen=True)
class Placement:
    pod_id: str
    function_id: str
    rect: Rect


@dataclass
class GpuNode:
    gpu_id: int
    free_rects: list[Rect] = field(default_factory=lambda: [full_rect()])
    placements: dict[str, Placement] = field(default_factory=dict)
    mem: GpuMemoryState = field(default_factory=GpuMemoryState)


def new_node(gpu_id: int, capacity_mb: float | None = None, sharing: bool = True) -> GpuNode:
    mem = GpuMemoryState(sharing=sharing) if capacity_mb is None else \
        GpuMemoryState(capacity_mb=capacity_mb, sharing=sharing)
    return GpuNode(gpu_id=gpu_id, mem=mem)


def area(r: Rect) -> Fraction:
    return r.area


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def best_match(
    nodes: Sequence[GpuNode],
    req: PodRequest,
    specs: Mapping[str, MemorySpec] | None = None,
) -> tuple[int, Rect] | None:
    """Tightest-fitting free rectangle across the fleet, or None.

    Fit requires full containment of the request and, when memory specs are
    given, that the pod's model still fits in the GPU's memory.  The winner
    minimizes wasted area; ties go to the lower GPU id, then the lower-left
    rectangle (y before x).  None means a fresh GPU (or a restructure) is
    needed.
    """
    best: tuple | None = None
    chosen: tuple[int, Rect] | None = None
    for node in sorted(nodes, key=lambda n: n.gpu_id):
        if specs is not None and not admit(node.mem, specs, req.function_id):
            continue
        for r in node.free_rects:
            if req.w <= r.w and req.h <= r.h:
                key = (r.area - req.area, node.gpu_id, r.y, r.x)
                if best is None or key < best:
                    best = key
                    chosen = (node.gpu_id, r)
    return chosen


def _subdivide(r: Rect, hole: Rect) -> list[Rect]:
    """Maximal residuals of `r` after carving out `hole` (which overlaps it).

    Up to four rectangles, one per side of the hole, each stretched across the
    full extent of `r` in its free direction; they may overlap each other.
    """
    inter = r.intersection(hole)
    if inter is None:
        return [r]
    parts = []
    if inter.x > r.x:
        parts.append(Rect(r.x, r.y, inter.x - r.x, r.h))
    if inter.x2 < r.x2:
        parts.append(Rect(inter.x2, r.y, r.x2 - inter.x2, r.h))
    if inter.y > r.y:
        parts.append(Rect(r.x, r.y, r.w, inter.y - r.y))
    if inter.y2 < r.y2:
        parts.append(Rect(r.x, inter.y2, r.w, r.y2 - inter.y2))
    return parts


def _prune_contained(rects: list[Rect]) -> list[Rect]:
    """Drop every rectangle contained in another; exact duplicates keep their
    first occurrence."""
    kept: list[Rect] = []
    for i, r in enumerate(rects):
        redundant = False
        for j, other in enumerate(rects):
            if i == j or not other.contains(r):
                continue
            if r == other and i < j:
                continue  # the later duplicate is the one dropped
            redundant = True
            break
        if not redundant:
            kept.append(r)
    return kept


def _carve(free_rects: list[Rect], placed: Rect) -> list[Rect]:
    out: list[Rect] = []
    for r in free_rects:
        if r.intersects(placed):
            out.extend(_subdivide(r, placed))
        else:
            out.append(r)
    return _prune_contained(out)


def place(node: GpuNode, chosen: Rect, req: PodRequest) -> Rect:
    """Put `req` at the bottom-left corner of `chosen` (which must currently
    be free on this node) and update the free list."""
    if chosen not in node.free_rects:
        raise ConflictError(
            f"gpu {node.gpu_id}: rectangle {chosen.as_tuple()} is not in the free list")
    if req.w > chosen.w or req.h > chosen.h:
        raise ValidationError(
            f"pod {req.pod_id!r} ({req.w} x {req.h}) does not fit in "
            f"{chosen.w} x {chosen.h}")
    if req.pod_id in node.placements:
        raise ConflictError(f"pod {req.pod_id!r} already placed on gpu {node.gpu_id}")
    placed = Rect(chosen.x, chosen.y, req.w, req.h)
    node.free_rects = _carve(node.free_rects, placed)
    node.placements[req.pod_id] = Placement(req.pod_id, req.function_id, placed)
    node.mem.add_pod(req.function_id)
    return placed


def release(node: GpuNode, pod_id: str) -> Rect:
    """Remove a pod and append its exact rectangle to the free list verbatim.

    No merging happens here: the next same-shape pod reuses the slot with
    zero waste, and restructure handles long-run fragmentation.
    """
    placement = node.placements.pop(pod_id, None)
    if placement is None:
        raise ConflictError(f"pod {pod_id!r} is not placed on gpu {node.gpu_id}")
    node.free_rects.append(placement.rect)
    node.mem.remove_pod(placement.function_id)
    return placement.rect


def _best_fit_in_node(free_rects: list[Rect], w: Fraction, h: Fraction) -> Rect | None:
    best: Rect | None = None
    best_key = None
    for r in free_rects:
        if w <= r.w and h <= r.h:
            key = (r.area - w * h, r.y, r.x)
            if best_key is None or key < best_key:
                best_key = key
                best = r
    return best


def restructure(node: GpuNode, threshold: int = DEFAULT_RESTRUCTURE_THRESHOLD) -> bool:
    """Rebuild the free list when it has grown past `threshold` rectangles.

    Placements are re-packed into an empty plane in descending area order
    (ties by pod id); their rectangles may move.  Returns True when a rebuild
    happened.  If re-placement ever fails the node is left untouched and the
    abort is logged.
    """
    if threshold < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold!r}")
    if len(node.free_rects) <= threshold:
        return False
    order = sorted(node.placements.values(),
                   key=lambda p: (-p.rect.area, p.pod_id))
    free: list[Rect] = [full_rect()]
    moved: dict[str, Placement] = {}
    for placement in order:
        w, h = placement.rect.w, placement.rect.h
        target = _best_fit_in_node(free, w, h)
        if target is None:
            logger.warning(
                "gpu %s: restructure aborted, %r no longer fits; node unchanged",
                node.gpu_id, placement.pod_id)
            return False
        placed = Rect(target.x, target.y, w, h)
        free = _carve(free, placed)
        moved[placement.pod_id] = Placement(
            placement.pod_id, placement.function_id, placed)
    node.free_rects = free
    node.placements = moved
    return True


# ---------------------------------------------------------------------------
# Invariant checking (exact + rasterized)
# ---------------------------------------------------------------------------

def check_node(node: GpuNode) -> list[str]:
    """Audit one node's geometry; returns human-readable breach descriptions.

    Placement disjointness, free/placement disjointness, and the
    no-containment rule are checked with exact arithmetic.  Coverage (union of
    free rectangles == plane minus placements) is checked by painting both
    sides onto an integer grid scaled to make every coordinate integral, so
    the verdict is independent of the free-list algebra.
    """
    breaches: list[str] = []
    placements = list(node.placements.values())
    for i, a in enumerate(placements):
        for b in placements[i + 1:]:
            if a.rect.intersects(b.rect):
                breaches.append(f"placements {a.pod_id!r} and {b.pod_id!r} overlap")
    for r in node.free_rects:
        for p in placements:
            if r.intersects(p.rect):
                breaches.append(
                    f"free rect {r.as_tuple()} overlaps placement {p.pod_id!r}")
    for i, r in enumerate(node.free_rects):
        for j, other in enumerate(node.free_rects):
            if i != j and other.contains(r) and not (r == other and i < j):
                breaches.append(
                    f"free rect {r.as_tuple()} is contained in {other.as_tuple()}")

    coords = [full_rect()] + node.free_rects + [p.rect for p in placements]
    scale = 1
    for c in coords:
        for v in c.as_tuple():
            scale = scale * v.denominator // math.gcd(scale, v.denominator)
        if scale > 20:
            breaches.append(
                "coverage check skipped: coordinates need a raster finer than 20x")
            return breaches

    import numpy as np

    side = int(FULL_SIDE) * scale
    free_mask = np.zeros((side, side), dtype=bool)
    placed_mask = np.zeros((side, side), dtype=bool)

    def paint(mask, r: Rect):
        x0 = int(r.x * scale)
        y0 = int(r.y * scale)
        x1 = int(r.x2 * scale)
        y1 = int(r.y2 * scale)
        mask[y0:y1, x0:x1] = True

    for r in node.free_rects:
        paint(free_mask, r)
    for p in placements:
        paint(placed_mask, p.rect)
    uncovered = ~(free_mask | placed_mask)
    if uncovered.any():
        breaches.append(
            f"coverage gap: {int(uncovered.sum())} raster cells are neither free nor placed")
    double = free_mask & placed_mask
    if double.any():
        breaches.append(
            f"coverage overlap: {int(double.sum())} raster cells are both free and placed")
    return breaches
