"""
utils/formation.py
------------------
Triangular three-UAV formation: frames, reconfiguration shapes and the phase
schedule around an intermediate waypoint (IWP).

Conventions
- Formation frame: x along the direction of travel, y to the left, z up.
  ``rotation_matrix(ψ)`` maps it to the inertial ENU frame (yaw only).
- Offsets are always a ``(3, 3)`` array, row n holding ΔP_n of UAV n+1.
  Every shape keeps Σ ΔP_n = 0, so the UAV mean stays on the centroid path.
- A reconfiguration window is described by arc lengths s1..s4 along the
  centroid path and the matching times t1..t4 at the nominal speed:
  [t1,t2] transformation, [t2,t3] hold, [t3,t4] reconfiguration back.
"""

from __future__ import annotations

import logging
import itertools
import math
from dataclasses import dataclass
from typing import Any, Iterable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import (
    InfeasibleShapeError,
    PassageMissedError,
    SchedulingConflictError,
    SchedulingError,
)
from utils.scenario import Point3, ReconfigSettings, ShapeKind

log = logging.getLogger("utils.formation")

AxisName = Literal["leader", "path", "lateral", "vertical", "along_path"]

_AXES = {
    "path": np.array([1.0, 0.0, 0.0]),
    "along_path": np.array([1.0, 0.0, 0.0]),
    "lateral": np.array([0.0, 1.0, 0.0]),
    "vertical": np.array([0.0, 0.0, 1.0]),
}


# =========================
# Types
# =========================
@dataclass(frozen=True)
class FormationState:
    """Centroid P_F, formation-frame offsets ΔP_n and heading ψ."""

    centroid: np.ndarray
    offsets: np.ndarray
    heading_rad: float = 0.0

    def __post_init__(self) -> None:
        if np.asarray(self.offsets).shape != (3, 3):
            raise ValueError("a formation has exactly three UAV offsets")
        if float(np.max(np.abs(np.sum(self.offsets, axis=0)))) > 1e-9:
            raise ValueError("formation offsets must sum to the zero vector")

    @classmethod
    def from_offsets(cls, offsets: Any, centroid: Any = (0.0, 0.0, 0.0), heading_rad: float = 0.0) -> "FormationState":
        return cls(
            centroid=np.asarray(centroid, dtype=float),
            offsets=np.asarray(offsets, dtype=float),
            heading_rad=heading_rad,
        )

    @property
    def radius(self) -> float:
        """r_F = max_n ‖ΔP_n‖."""
        return float(np.max(np.linalg.norm(self.offsets, axis=1)))

    def swept_radius(self, r_q: float) -> float:
        """Radius of the disk swept by the UAV bodies around the centroid."""
        return self.radius + r_q

    def positions(self) -> np.ndarray:
        return self.centroid + self.offsets @ rotation_matrix(self.heading_rad).T


class ShapeSpec(BaseModel):
    """A formation shape and its parameters (formation frame)."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: ShapeKind
    axis: Optional[AxisName] = None
    spacing_m: Optional[float] = Field(default=None, gt=0)
    angle_rad: Optional[float] = None
    scale: Optional[float] = Field(default=None, gt=0, le=1)

    @model_validator(mode="after")
    def _check(self) -> "ShapeSpec":
        if self.kind == "alignment" and (self.axis is None or self.spacing_m is None):
            raise ValueError("alignment needs an axis and a spacing")
        if self.kind == "rotation" and (self.axis is None or self.angle_rad is None):
            raise ValueError("rotation needs an axis and an angle")
        if self.kind == "shrink" and self.scale is None:
            raise ValueError("shrink needs a scale α")
        return self


class ReconfigPlan(BaseModel):
    """Shape change around one IWP, as arc lengths and times on the centroid path."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    iwp_index: int
    shape: ShapeSpec
    s1_m: float
    s2_m: float
    s3_m: float
    s4_m: float
    t1_s: float
    t2_s: float
    t3_s: float
    t4_s: float

    @model_validator(mode="after")
    def _check(self) -> "ReconfigPlan":
        if not (self.t1_s < self.t2_s <= self.t3_s < self.t4_s):
            raise ValueError("phase times must satisfy t1 < t2 ≤ t3 < t4")
        return self

    @property
    def transformation_time_s(self) -> float:
        """t_t = t2 − t1."""
        return self.t2_s - self.t1_s

    @property
    def reconfiguration_time_s(self) -> float:
        """t_r = t4 − t3."""
        return self.t4_s - self.t3_s

    @classmethod
    def from_times(cls, iwp_index: int, shape: ShapeSpec, times: Sequence[float], speed_mps: float) -> "ReconfigPlan":
        t1, t2, t3, t4 = (float(t) for t in times)
        return cls(
            iwp_index=iwp_index, shape=shape,
            s1_m=t1 * speed_mps, s2_m=t2 * speed_mps, s3_m=t3 * speed_mps, s4_m=t4 * speed_mps,
            t1_s=t1, t2_s=t2, t3_s=t3, t4_s=t4,
        )


# =========================
# Frames
# =========================
def centroid(p1: Any, p2: Any, p3: Any) -> Point3:
    """P_F = ⅓ Σ P_n."""
    pts = [p.as_array() if isinstance(p, Point3) else np.asarray(p, dtype=float) for p in (p1, p2, p3)]
    return Point3.from_array((pts[0] + pts[1] + pts[2]) / 3.0)

def rotation_matrix(psi: float) -> np.ndarray:
    """R_IF: yaw ψ about the vertical axis, formation frame → inertial frame."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

def axis_rotation(axis: Any, angle: float) -> np.ndarray:
    """Rotation by ``angle`` about the unit vector ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)

def pairwise_distances(offsets: np.ndarray) -> np.ndarray:
    diff = offsets[:, None, :] - offsets[None, :, :]
    return np.linalg.norm(diff, axis=-1)

def min_separation(offsets: np.ndarray) -> float:
    d = pairwise_distances(offsets)
    return float(np.min(d[np.triu_indices(3, k=1)]))

def max_separation(offsets: np.ndarray) -> float:
    d = pairwise_distances(offsets)
    return float(np.max(d[np.triu_indices(3, k=1)]))

def horizontal_radius(offsets: np.ndarray) -> float:
    return float(np.max(np.hypot(offsets[:, 0], offsets[:, 1])))

def vertical_extent(offsets: np.ndarray) -> float:
    return float(np.max(np.abs(offsets[:, 2])))


# =========================
# Shapes
# =========================
def _axis_vector(axis: str, base: np.ndarray) -> np.ndarray:
    if axis == "leader":
        lead = base[0]
        n = float(np.linalg.norm(lead))
        return lead / n if n > 0 else _AXES["path"]
    return _AXES[axis]

def _base_offsets(base: FormationState | Any) -> np.ndarray:
    if isinstance(base, FormationState):
        return np.asarray(base.offsets, dtype=float)
    return np.asarray(base, dtype=float)

def shape_offsets(spec: ShapeSpec, base: FormationState | Any, r_q: float | None = None) -> np.ndarray:
    """Offsets of the three UAVs in ``spec``'s shape, derived from ``base``.

    Alignment keeps UAV1 at the centre and UAV2/UAV3 at −s/+s so nobody crosses
    paths while blending. With ``r_q`` given, the 2·r_Q minimum separation is
    enforced.
    """
    b = _base_offsets(base)
    if spec.kind == "triangle":
        out = b.copy()
    elif spec.kind == "alignment":
        a = _axis_vector(spec.axis, b)
        s = float(spec.spacing_m)
        out = np.array([0.0 * a, -s * a, s * a])
    elif spec.kind == "rotation":
        r = axis_rotation(_axis_vector(spec.axis, b), float(spec.angle_rad))
        out = b @ r.T
    else:
        out = float(spec.scale) * b

    if r_q is not None and min_separation(out) < 2.0 * r_q - 1e-12:
        raise InfeasibleShapeError(
            f"{spec.kind} shape puts UAVs {min_separation(out):.3f} m apart, below 2·r_Q={2 * r_q:.3f} m"
        )
    return out

def resolve_alignment_axis(settings: ReconfigSettings, band_height_m: float) -> str:
    """``auto`` stacks vertically when the altitude band has room, else single file."""
    if settings.alignment_axis != "auto":
        return settings.alignment_axis
    if band_height_m >= 2.0 * settings.alignment_spacing_m:
        return "vertical"
    return "along_path"

def shape_from_settings(kind: ShapeKind, settings: ReconfigSettings, band_height_m: float) -> ShapeSpec:
    if kind == "alignment":
        return ShapeSpec(kind="alignment", axis=resolve_alignment_axis(settings, band_height_m),
                         spacing_m=settings.alignment_spacing_m)
    if kind == "rotation":
        return ShapeSpec(kind="rotation", axis=settings.rotation_axis, angle_rad=settings.rotation_angle_rad)
    if kind == "shrink":
        return ShapeSpec(kind="shrink", scale=settings.shrink_scale)
    return ShapeSpec(kind="triangle")


# =========================
# Centroid path helpers
# =========================
def arc_lengths(path: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])

def interpolate_path(path: np.ndarray, cum: np.ndarray, s: Any) -> np.ndarray:
    """Points at arc lengths ``s`` along the polyline ``path``."""
    s = np.asarray(s, dtype=float)
    return np.stack([np.interp(s, cum, path[:, i]) for i in range(3)], axis=-1)

def zone_crossing(path: np.ndarray, cum: np.ndarray, center: Any, radius: float) -> Optional[tuple[float, float]]:
    """First and last arc length where the path's ground track lies within ``radius`` of ``center``."""
    c = np.asarray(center, dtype=float)
    first: Optional[float] = None
    last: Optional[float] = None
    for i in range(path.shape[0] - 1):
        a = path[i, :2] - c
        d = path[i + 1, :2] - path[i, :2]
        dd = float(d @ d)
        if dd < 1e-18:
            if float(a @ a) > radius * radius:
                continue
            lo, hi = 0.0, 1.0
        else:
            # |a + u·d|² = r², solved for u and clipped to the segment
            b = float(a @ d) / dd
            disc = b * b - (float(a @ a) - radius * radius) / dd
            if disc < 0.0:
                continue
            root = math.sqrt(disc)
            lo, hi = max(-b - root, 0.0), min(-b + root, 1.0)
            if lo > hi:
                continue
        seg = cum[i + 1] - cum[i]
        if first is None:
            first = float(cum[i] + lo * seg)
        last = float(cum[i] + hi * seg)
    if first is None:
        return None
    return first, last


# =========================
# Scheduling
# =========================
def schedule(
    path: Any,
    iwp: Any,
    shape: ShapeSpec,
    nominal_speed: float,
    settings: ReconfigSettings,
) -> ReconfigPlan:
    """Place the transformation / hold / reconfiguration windows for one IWP.

    ``iwp`` needs ``index``, ``center_m`` and ``zone_radius_m``; ``path`` is the
    centroid polyline (control waypoints). The hold interval covers the part of
    the path inside the IWP's passage zone plus the lead/lag buffers; the
    transformation and reconfiguration distances default to two path spans.
    """
    pts = np.asarray(path, dtype=float)
    cum = arc_lengths(pts)
    total = float(cum[-1])
    cx, cy = iwp.center_m
    crossing = zone_crossing(pts, cum, (cx, cy), iwp.zone_radius_m)
    if crossing is None:
        raise PassageMissedError(f"IWP {iwp.index} at ({cx:.2f}, {cy:.2f}) is outside the reach of the path")

    s_in, s_out = crossing
    span = total / max(len(pts) - 1, 1)
    d_t = settings.transformation_distance_m or 2.0 * span
    d_r = settings.reconfiguration_distance_m or d_t

    s2 = max(s_in - settings.lead_buffer_m, 0.0)
    s3 = min(s_out + settings.lag_buffer_m, total)
    s1 = max(s2 - d_t, 0.0)
    s4 = min(s3 + d_r, total)
    if not (s1 < s2 <= s3 < s4):
        raise SchedulingError(
            f"IWP {iwp.index}: window s1={s1:.2f} s2={s2:.2f} s3={s3:.2f} s4={s4:.2f} does not fit a "
            f"{total:.2f} m path"
        )

    v = float(nominal_speed)
    plan = ReconfigPlan(
        iwp_index=iwp.index, shape=shape,
        s1_m=s1, s2_m=s2, s3_m=s3, s4_m=s4,
        t1_s=s1 / v, t2_s=s2 / v, t3_s=s3 / v, t4_s=s4 / v,
    )
    log.info("schedule_ok", extra={"kv": {
        "iwp": iwp.index, "shape": shape.kind,
        "t1": plan.t1_s, "t2": plan.t2_s, "t3": plan.t3_s, "t4": plan.t4_s,
    }})
    return plan

def check_conflicts(plans: Iterable[ReconfigPlan]) -> list[ReconfigPlan]:
    """Return plans sorted by t1; raise if any two windows overlap, listing every pair."""
    ordered = sorted(plans, key=lambda p: p.t1_s)
    conflicts = [
        (a.iwp_index, b.iwp_index)
        for a, b in itertools.combinations(ordered, 2)
        if b.t1_s < a.t4_s
    ]
    if conflicts:
        listing = ", ".join(f"IWP {a} / IWP {b}" for a, b in conflicts)
        raise SchedulingConflictError(f"overlapping reconfiguration windows: {listing}", conflicts)
    return ordered
