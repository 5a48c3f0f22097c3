"""
utils/iwp.py
------------
Narrow-passage detection and intermediate waypoints (IWPs).

An IWP sits at the midpoint of the gap between two neighbouring cylinders when
the gap is too narrow for the rigid triangle but wide enough for a single UAV:

    2·r_Q + margin  ≤  d_pq  <  2·(r_F + r_Q + margin)

Each IWP lists the reconfiguration shapes that fit through its gap (alignment,
rotation, shrink), the fitted parameters of each, and the radius of its
passage zone: the disk around C_j inside which the rigid formation could touch
either obstacle of the pair.
"""

# =========================
# Imports & Setup
# =========================
from __future__ import annotations

import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from logging_setup import set_iwp_id
from utils.errors import ContractViolationError
from utils.formation import (
    FormationState,
    ShapeSpec,
    horizontal_radius,
    max_separation,
    min_separation,
    shape_from_settings,
    shape_offsets,
    vertical_extent,
)
from utils.scenario import (
    CylinderObstacle,
    InspectionSurface,
    ReconfigSettings,
    SafetyConstraints,
    Scenario,
    ShapeKind,
    Vec2,
    distance_to_surface,
)

log = logging.getLogger("utils.iwp")

# Surface standoff applies to gaps closer to the facade than d_s_max + this.
INSPECTION_RANGE_EXTRA_M = 5.0

_RECONFIG_SHAPES: Tuple[ShapeKind, ...] = ("alignment", "rotation", "shrink")


class IntermediateWaypoint(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    index: int
    center_m: Vec2
    gap_m: float
    pair: Tuple[int, int]
    feasible_shapes: List[ShapeKind]
    shapes: Dict[str, ShapeSpec]
    zone_radius_m: float


# =========================
# Geometry
# =========================
def gap_geometry(p: CylinderObstacle, q: CylinderObstacle) -> tuple[np.ndarray, np.ndarray, float]:
    """Facing boundary points P_p, P_q on the centre line and the gap width d_pq."""
    cp = np.asarray(p.center_m, dtype=float)
    cq = np.asarray(q.center_m, dtype=float)
    dist = float(np.linalg.norm(cq - cp))
    if dist == 0.0:
        raise ContractViolationError("obstacles with coincident centres have no gap direction")
    u = (cq - cp) / dist
    pp = cp + p.radius_m * u
    pq = cq - q.radius_m * u
    return pp, pq, max(dist - p.radius_m - q.radius_m, 0.0)

def _segment_hits_obstacle(a: np.ndarray, b: np.ndarray, k: CylinderObstacle) -> bool:
    c = np.asarray(k.center_m, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(max(float((c - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(a + t * ab - c)) < k.radius_m

def passage_band(safety: SafetyConstraints, formation_radius: float) -> tuple[float, float]:
    """[lower, upper) gap widths that call for a reconfiguration."""
    lower = 2.0 * safety.r_q_m + safety.clearance_margin_m
    upper = 2.0 * (formation_radius + safety.r_q_m + safety.clearance_margin_m)
    return lower, upper


# =========================
# Shape feasibility
# =========================
def _fits(offsets: np.ndarray, gap: float, safety: SafetyConstraints) -> bool:
    span = 2.0 * (horizontal_radius(offsets) + safety.r_q_m + safety.clearance_margin_m)
    return span <= gap + 1e-12

def _separation_ok(offsets: np.ndarray, safety: SafetyConstraints) -> bool:
    return 2.0 * safety.r_q_m - 1e-12 <= min_separation(offsets) and max_separation(offsets) <= safety.d_com_m

def _standoff_ok(offsets: np.ndarray, center: Optional[Vec2], surface: Optional[InspectionSurface],
                 safety: SafetyConstraints) -> bool:
    if surface is None or center is None:
        return True
    d_c = distance_to_surface((center[0], center[1], 0.0), surface)
    if d_c > safety.standoff_max_m + INSPECTION_RANGE_EXTRA_M:
        return True
    h = horizontal_radius(offsets)
    return d_c - h >= safety.standoff_min_m and d_c + h <= safety.standoff_max_m

def shape_feasibility(
    gap: float | IntermediateWaypoint,
    constraints: SafetyConstraints,
    base: FormationState | Any,
    settings: ReconfigSettings,
    *,
    band: tuple[float, float] = (0.0, math.inf),
    center: Optional[Vec2] = None,
    surface: Optional[InspectionSurface] = None,
) -> Dict[str, ShapeSpec]:
    """Shapes that pass a gap of width ``gap``, keyed by kind, with fitted parameters.

    A shape qualifies when its horizontal footprint (UAV bodies and margin
    included) fits the gap, all pairwise distances lie in [2·r_Q, d_com], it fits
    the altitude band ``band`` and, near the inspection surface, every UAV keeps
    its standoff in [d_s_min, d_s_max]. Shrink uses the configured α when that
    fits and otherwise the largest α that does.
    """
    width = gap.gap_m if isinstance(gap, IntermediateWaypoint) else float(gap)
    if isinstance(gap, IntermediateWaypoint) and center is None:
        center = gap.center_m
    b = base.offsets if isinstance(base, FormationState) else np.asarray(base, dtype=float)
    band_height = band[1] - band[0]
    out: Dict[str, ShapeSpec] = {}

    for kind in _RECONFIG_SHAPES:
        spec = shape_from_settings(kind, settings, band_height)
        offsets = shape_offsets(spec, b)
        if kind == "shrink" and not _fits(offsets, width, constraints):
            room = width / 2.0 - constraints.r_q_m - constraints.clearance_margin_m
            h_base = horizontal_radius(b)
            if room <= 0.0 or h_base <= 0.0:
                continue
            spec = ShapeSpec(kind="shrink", scale=min(room / h_base, 1.0))
            offsets = shape_offsets(spec, b)
        if not _fits(offsets, width, constraints):
            continue
        if not _separation_ok(offsets, constraints):
            continue
        if 2.0 * vertical_extent(offsets) > band_height:
            continue
        if not _standoff_ok(offsets, center, surface, constraints):
            continue
        out[kind] = spec
    return out

def choose_shape(iwp: IntermediateWaypoint, settings: ReconfigSettings) -> ShapeSpec:
    """Forced shape when feasible, else the first feasible shape in priority order."""
    if settings.forced_shape is not None:
        if settings.forced_shape in iwp.shapes:
            return iwp.shapes[settings.forced_shape]
        log.warning("forced_shape_infeasible", extra={"kv": {
            "iwp": iwp.index, "forced": settings.forced_shape, "feasible": iwp.feasible_shapes,
        }})
    for kind in settings.shape_priority:
        if kind in iwp.shapes:
            return iwp.shapes[kind]
    # feasible_shapes is never empty, so a kind outside the priority list remains
    return iwp.shapes[iwp.feasible_shapes[0]]


# =========================
# Detection
# =========================
def detect_iwps(scenario: Scenario, formation_radius: float) -> List[IntermediateWaypoint]:
    """IWPs of every adjacent obstacle pair whose gap lies in the passage band.

    ``formation_radius`` is r_F (UAV centres). Pairs farther apart than the
    neighbourhood radius, gaps crossed by a third obstacle and gaps no shape can
    pass are skipped. Obstacles lower than z_min take no part in detection.
    Output is ordered by (p, q).
    """
    safety = scenario.safety
    settings = scenario.reconfig
    base = FormationState.from_offsets(scenario.mission.offsets_array())
    lower, upper = passage_band(safety, formation_radius)
    band = (scenario.workspace.z_min_m, scenario.workspace.z_max_m)
    obstacles = scenario.obstacles
    # Obstacles whose top lies below z_min are flown over and bound no passage.
    tall = [k for k, o in enumerate(obstacles) if o.height_m >= band[0]]
    found: List[IntermediateWaypoint] = []

    for p, q in itertools.combinations(tall, 2):
        op, oq = obstacles[p], obstacles[q]
        if math.dist(op.center_m, oq.center_m) >= settings.neighborhood_radius_m:
            continue
        if math.dist(op.center_m, oq.center_m) == 0.0:
            continue
        pp, pq, gap = gap_geometry(op, oq)
        if not (lower <= gap < upper):
            continue
        if any(_segment_hits_obstacle(pp, pq, obstacles[k]) for k in tall if k not in (p, q)):
            log.debug("iwp_gap_blocked", extra={"kv": {"pair": (p, q), "gap_m": gap}})
            continue

        center = 0.5 * (pp + pq)
        c = (float(center[0]), float(center[1]))
        shapes = shape_feasibility(gap, safety, base, settings, band=band, center=c, surface=scenario.surface)
        if not shapes:
            log.warning("iwp_impassable", extra={"kv": {"pair": (p, q), "gap_m": gap}})
            continue

        index = len(found)
        set_iwp_id(f"iwp-{index}")
        zone = gap / 2.0 + max(op.radius_m, oq.radius_m) + formation_radius + safety.r_q_m + safety.clearance_margin_m
        iwp = IntermediateWaypoint(
            index=index,
            center_m=c,
            gap_m=gap,
            pair=(p, q),
            feasible_shapes=[k for k in _RECONFIG_SHAPES if k in shapes],
            shapes=shapes,
            zone_radius_m=zone,
        )
        log.info("iwp_detected", extra={"kv": {
            "pair": (p, q), "center": c, "gap_m": gap, "shapes": iwp.feasible_shapes,
        }})
        set_iwp_id(None)
        found.append(iwp)
    return found
