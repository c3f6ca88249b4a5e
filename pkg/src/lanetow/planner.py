"""Waypoint extraction from the lane mask and conversion to the global frame.

BEV pixel coordinates are ``(u, v)`` with ``v`` growing downwards, so the
vehicle sits below the image and drives "up" the image. Waypoint headings in
the BEV frame are ``atan2(dv, du)`` in those pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import FrameId, Pose2, Transform2, pose_to_transform, wrap_angles


class NoLaneError(RuntimeError):
    """The mask contains no lane pixels."""


class DegenerateLaneError(RuntimeError):
    """The lane start run is too narrow to locate a centre."""


TURN_PREFERENCES = ("straight", "left", "right")


@dataclass(frozen=True)
class CameraExtrinsics:
    """BEV pixel -> camera-frame metres (``scale * p + bias``) and camera mount.

    ``flip_v`` negates the row coordinate before scaling. A top-down image with
    rows growing towards the vehicle is a mirror image of the ground, and a
    positive scalar scale cannot undo that on its own.
    """
    scale: float
    bias: tuple
    t_c2_c1: Transform2 = field(default_factory=Transform2.identity)
    flip_v: bool = False

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("extrinsic scale must be positive")
        object.__setattr__(self, "bias", tuple(float(b) for b in self.bias))
        if len(self.bias) != 2:
            raise ValueError("extrinsic bias must be a 2-vector")

    def linear(self) -> np.ndarray:
        """2x2 linear part of the BEV -> camera map."""
        return np.diag([self.scale, -self.scale if self.flip_v else self.scale])


@dataclass(frozen=True)
class PlannerParams:
    r: float = 50.0
    r_arc: float = 120.0
    n_max: int = 10
    turn_threshold: float = math.pi / 4
    turn_preference: str = "straight"
    min_area: int = 64

    def __post_init__(self):
        if self.r <= 0 or self.r_arc <= 0:
            raise ValueError("r and r_arc must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not 0.0 < self.turn_threshold < math.pi:
            raise ValueError("turn_threshold must lie in (0, pi)")
        if self.turn_preference not in TURN_PREFERENCES:
            raise ValueError(f"turn_preference must be one of {TURN_PREFERENCES}")


@dataclass(frozen=True)
class WaypointArray:
    points: np.ndarray  # (n, 2)
    psi: np.ndarray  # (n,) lane direction at each waypoint, in ``frame``
    frame: FrameId
    on_arc: np.ndarray = None  # (n,) bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).reshape(-1))
        if self.on_arc is None:
            object.__setattr__(self, "on_arc", np.zeros(len(pts), dtype=bool))
        else:
            object.__setattr__(self, "on_arc", np.asarray(self.on_arc, dtype=bool))
        if not (len(self.psi) == len(pts) == len(self.on_arc)):
            raise ValueError("waypoint arrays must have matching lengths")

    def __len__(self):
        return len(self.points)


# --------------------------------------------------------------------------
# waypoint extraction


def _runs(flags: np.ndarray):
    """Contiguous True runs of a circular boolean sequence as (start, length)."""
    n = len(flags)
    if flags.all():
        return [(0, n)]
    if not flags.any():
        return []
    # rotate so the sequence starts on a False sample
    offset = int(np.argmin(flags))
    rolled = np.roll(flags, -offset).astype(np.int8)
    edges = np.diff(np.concatenate([[0], rolled, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [((s + offset) % n, e - s) for s, e in zip(starts, ends)]


def _circle_candidates(mask, valid, center, r):
    """Arc midpoints of the lane runs crossed by a circle around ``center``.

    Returns a list of ``(point, clipped)`` where ``clipped`` marks runs that
    touch the image border or the invalid (out-of-view) region.
    """
    h, w = mask.shape
    n = max(64, int(math.ceil(4.0 * math.pi * r)))
    theta = np.arange(n) * (2.0 * math.pi / n)
    px = center[0] + r * np.cos(theta)
    py = center[1] + r * np.sin(theta)
    iu = np.rint(px).astype(np.intp)
    iv = np.rint(py).astype(np.intp)
    inside = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
    iu_c = np.clip(iu, 0, w - 1)
    iv_c = np.clip(iv, 0, h - 1)
    fg = inside & mask[iv_c, iu_c]
    blocked = ~inside
    if valid is not None:
        blocked |= ~valid[iv_c, iu_c]
    out = []
    for start, length in _runs(fg):
        if length == n:
            continue  # lane wider than the circle: no crossing
        mid = theta[start] + (length - 1) * math.pi / n
        point = np.array([center[0] + r * math.cos(mid), center[1] + r * math.sin(mid)])
        before = blocked[(start - 1) % n]
        after = blocked[(start + length) % n]
        out.append((point, bool(before or after)))
    return out


def _signed_turn(a: np.ndarray, b: np.ndarray) -> float:
    return math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])


def lane_start(mask: np.ndarray):
    """Centre of the widest run in the lowermost row containing lane pixels."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise NoLaneError("mask contains no lane pixels")
    v = int(rows[-1])
    best = None
    for start, length in _runs(np.concatenate([mask[v], [False]])):
        if best is None or length > best[1]:
            best = (start, length)
    if best[1] < 2:
        raise DegenerateLaneError(f"lane start run is {best[1]} px wide")
    return np.array([best[0] + (best[1] - 1) / 2.0, float(v)])


def extract_waypoints(mask: np.ndarray, r: float = 50.0, n_max: int = 10, *,
                      valid: Optional[np.ndarray] = None,
                      turn_preference: str = "straight",
                      max_turn: float = 3 * math.pi / 4) -> WaypointArray:
    """Walk up the lane in steps of ``r`` pixels (BEV frame).

    Each new waypoint is the midpoint of a lane run crossed by a circle of
    radius ``r`` around the previous one. Among the runs ahead (turn smaller
    than ``max_turn``) the one with the smallest turn is taken, unless a
    left/right preference is configured for forks.
    """
    mask = np.asarray(mask, dtype=bool)
    points = [lane_start(mask)]
    heading = np.array([0.0, -1.0])
    while len(points) < n_max:
        cands = []
        for point, clipped in _circle_candidates(mask, valid, points[-1], r):
            step = (point - points[-1]) / r
            turn = _signed_turn(heading, step)
            if abs(turn) < max_turn:
                cands.append((turn, point, clipped))
        if not cands:
            break
        if turn_preference == "left":
            # screen-left is a negative turn because v grows downwards
            turn, point, clipped = min(cands, key=lambda c: (c[0], abs(c[0])))
        elif turn_preference == "right":
            turn, point, clipped = max(cands, key=lambda c: (c[0], -abs(c[0])))
        else:
            turn, point, clipped = min(cands, key=lambda c: abs(c[0]))
        if clipped:
            break
        heading = (point - points[-1]) / np.linalg.norm(point - points[-1])
        points.append(point)
    pts = np.array(points)
    if len(pts) == 1:
        psi = np.array([-math.pi / 2])
    else:
        d = np.diff(pts, axis=0)
        psi = np.arctan2(d[:, 1], d[:, 0])
        psi = np.append(psi, psi[-1])
    return WaypointArray(pts, psi, FrameId.BEV)


# --------------------------------------------------------------------------
# intersections and virtual arcs


class Intersection(NamedTuple):
    q: np.ndarray  # corner point
    d1: np.ndarray  # incoming unit direction
    d2: np.ndarray  # outgoing unit direction
    last_in: int  # index of the last waypoint on the incoming leg
    first_out: int  # index of the first waypoint on the outgoing leg
    turn: float  # signed turn from d1 to d2


def _fit_line(points: np.ndarray):
    """Total least squares line through ``points`` oriented first -> last."""
    c = points.mean(axis=0)
    if len(points) == 2:
        d = points[1] - points[0]
    else:
        _, _, vt = np.linalg.svd(points - c)
        d = vt[0]
        if np.dot(d, points[-1] - points[0]) < 0:
            d = -d
    return c, d / np.linalg.norm(d)


def _line_intersection(c1, d1, c2, d2) -> Optional[np.ndarray]:
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-9:
        return None
    diff = c2 - c1
    t = (diff[0] * d2[1] - diff[1] * d2[0]) / den
    return c1 + t * d1


def detect_intersection(mask: Optional[np.ndarray], wp: WaypointArray, r: float = 50.0,
                        turn_threshold: float = math.pi / 4,
                        zone_turn: float = 0.15) -> Optional[Intersection]:
    """Find a sharp change of waypoint direction and the two lane legs around it.

    An intersection is reported when a single turn between consecutive
    waypoint steps exceeds ``turn_threshold``. The turning zone is grown over
    neighbouring waypoints whose turn exceeds ``zone_turn``; lines fitted to
    the waypoints before and after that zone give ``q``, ``d1`` and ``d2``.
    """
    pts = wp.points
    if len(pts) < 3:
        return None
    steps = np.diff(pts, axis=0)
    turns = np.array([_signed_turn(steps[j - 1], steps[j]) for j in range(1, len(steps))])
    j_max = int(np.argmax(np.abs(turns)))
    if abs(turns[j_max]) <= turn_threshold:
        return None
    # turns[j - 1] is the turn at waypoint j
    a = b = j_max + 1
    while a - 1 >= 1 and abs(turns[a - 2]) > zone_turn:
        a -= 1
    while b + 1 <= len(pts) - 2 and abs(turns[b]) > zone_turn:
        b += 1
    incoming = pts[: a + 1]
    outgoing = pts[b:]
    if len(incoming) < 2 or len(outgoing) < 2:
        return None
    c1, d1 = _fit_line(incoming)
    c2, d2 = _fit_line(outgoing)
    q = _line_intersection(c1, d1, c2, d2)
    if q is None:
        return None
    return Intersection(q, d1, d2, a, b, _signed_turn(d1, d2))


@dataclass(frozen=True)
class IntersectionArc:
    center: np.ndarray
    radius: float
    start_angle: float
    end_angle: float
    direction: int  # +1 counterclockwise, -1 clockwise (in the arc's frame)

    @property
    def sweep(self) -> float:
        s = (self.end_angle - self.start_angle) * self.direction
        return s % (2.0 * math.pi)

    def point(self, offset: float) -> np.ndarray:
        a = self.start_angle + self.direction * offset
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def tangent(self, offset: float) -> np.ndarray:
        a = self.start_angle + self.direction * offset
        return self.direction * np.array([-math.sin(a), math.cos(a)])

    @property
    def start(self) -> np.ndarray:
        return self.point(0.0)

    @property
    def end(self) -> np.ndarray:
        return self.point(self.sweep)


def build_virtual_arc(q, d1, d2, r_arc: float,
                      turn_threshold: float = math.pi / 4) -> IntersectionArc:
    """Fillet of radius ``r_arc`` tangent to the incoming and outgoing legs."""
    q = np.asarray(q, dtype=float)
    d1 = np.asarray(d1, dtype=float) / np.linalg.norm(d1)
    d2 = np.asarray(d2, dtype=float) / np.linalg.norm(d2)
    delta = _signed_turn(d1, d2)
    if not turn_threshold < abs(delta) < math.pi - 1e-3:
        raise ValueError(f"turn of {delta:.4f} rad is outside ({turn_threshold:.4f}, pi - 1e-3)")
    if r_arc <= 0:
        raise ValueError("r_arc must be positive")
    t = r_arc * math.tan(abs(delta) / 2.0)
    t1 = q - t * d1
    t2 = q + t * d2
    direction = 1 if delta > 0 else -1
    normal = direction * np.array([-d1[1], d1[0]])
    center = t1 + r_arc * normal
    return IntersectionArc(center, float(r_arc),
                           math.atan2(t1[1] - center[1], t1[0] - center[0]),
                           math.atan2(t2[1] - center[1], t2[0] - center[0]),
                           direction)


def arc_step_angle(r: float, r_arc: float) -> float:
    if r > 2.0 * r_arc:
        raise ValueError(f"chord {r} cannot fit a circle of radius {r_arc}")
    return 2.0 * math.asin(r / (2.0 * r_arc))


def sample_arc_waypoints(arc: IntersectionArc, r: float) -> WaypointArray:
    """Waypoints along the arc spaced by chord ``r``, starting at the arc start."""
    step = arc_step_angle(r, arc.radius)
    count = int(math.floor(arc.sweep / step + 1e-9))
    offsets = np.arange(count + 1) * step
    pts = np.array([arc.point(o) for o in offsets])
    tangents = np.array([arc.tangent(o) for o in offsets])
    psi = np.arctan2(tangents[:, 1], tangents[:, 0])
    return WaypointArray(pts, psi, FrameId.BEV, np.ones(len(pts), dtype=bool))


def splice_arc(wp: WaypointArray, inter: Intersection, arc: IntersectionArc,
               r: float) -> WaypointArray:
    """Replace the waypoints around the corner by waypoints on the arc.

    Incoming waypoints before the first tangent point are kept, then the arc
    samples and the arc end point, then outgoing waypoints beyond the second
    tangent point.
    """
    arc_wp = sample_arc_waypoints(arc, r)
    t = float(np.linalg.norm(arc.start - inter.q))
    margin = r / 4.0
    if np.linalg.norm(arc_wp.points[-1] - arc.end) > margin:
        end_dir = arc.tangent(arc.sweep)
        arc_wp = WaypointArray(np.vstack([arc_wp.points, arc.end]),
                               np.append(arc_wp.psi, math.atan2(end_dir[1], end_dir[0])),
                               FrameId.BEV, np.append(arc_wp.on_arc, True))
    pin = wp.points[: inter.last_in + 1]
    pre = pin[(pin - inter.q) @ inter.d1 < -t - margin]
    pout = wp.points[inter.first_out:]
    post = pout[(pout - inter.q) @ inter.d2 > t + margin]
    psi1 = math.atan2(inter.d1[1], inter.d1[0])
    psi2 = math.atan2(inter.d2[1], inter.d2[0])
    points = np.concatenate([pre, arc_wp.points, post])
    psi = np.concatenate([np.full(len(pre), psi1), arc_wp.psi, np.full(len(post), psi2)])
    on_arc = np.concatenate([np.zeros(len(pre), bool), arc_wp.on_arc, np.zeros(len(post), bool)])
    return WaypointArray(points, psi, FrameId.BEV, on_arc)


# --------------------------------------------------------------------------
# frame chain


def bev_to_camera(p_bev, e: CameraExtrinsics) -> np.ndarray:
    p = np.array(p_bev, dtype=float)
    if e.flip_v:
        p[..., 1] = -p[..., 1]
    return e.scale * p + np.asarray(e.bias)


def camera_to_bev(p_c1, e: CameraExtrinsics) -> np.ndarray:
    p = (np.asarray(p_c1, dtype=float) - np.asarray(e.bias)) / e.scale
    if e.flip_v:
        p[..., 1] = -p[..., 1]
    return p


def camera_transform(pose_estimate: Pose2, e: CameraExtrinsics) -> Transform2:
    """``G_T_C1`` = pose transform of the pose sensor composed with the mount."""
    return pose_to_transform(pose_estimate) @ e.t_c2_c1


def camera_to_global(p_c1, pose_estimate: Pose2, e: CameraExtrinsics) -> np.ndarray:
    return camera_transform(pose_estimate, e).apply(p_c1)


def global_to_bev(p_g, pose: Pose2, e: CameraExtrinsics) -> np.ndarray:
    return camera_to_bev(camera_transform(pose, e).inverse().apply(p_g), e)


def waypoints_to_global(wp: WaypointArray, pose_estimate: Pose2,
                        e: CameraExtrinsics) -> WaypointArray:
    if wp.frame is not FrameId.BEV:
        raise ValueError(f"expected BEV waypoints, got {wp.frame}")
    tf = camera_transform(pose_estimate, e)
    pts = tf.apply(bev_to_camera(wp.points, e))
    dirs = np.stack([np.cos(wp.psi), np.sin(wp.psi)], axis=1)
    dirs = tf.apply_vector(dirs @ e.linear().T)
    psi = np.arctan2(dirs[:, 1], dirs[:, 0])
    return WaypointArray(pts, psi, FrameId.GLOBAL, wp.on_arc)


# --------------------------------------------------------------------------
# stateful planner


class FramePlan(NamedTuple):
    outcome: str  # "adopted", "ignored" (arc latch) or "lost"
    bev: Optional[WaypointArray]
    waypoints: Optional[WaypointArray]  # global frame, set when adopted
    intersection: Optional[Intersection]
    arc: Optional[IntersectionArc]


class LanePlanner:
    """Turns lane masks into global waypoint arrays and owns the arc latch.

    Once a virtual arc has been planned, later frames are ignored until one
    of them shows a lane without an intersection running along the arc's
    exit direction.
    """

    def __init__(self, params: PlannerParams, extrinsics: CameraExtrinsics):
        self.params = params
        self.extrinsics = extrinsics
        self.arc_latch = False
        self.exit_heading: Optional[float] = None  # global, set while latched

    def plan_bev(self, mask, valid=None):
        p = self.params
        wp = extract_waypoints(mask, p.r, p.n_max, valid=valid,
                               turn_preference=p.turn_preference)
        inter = detect_intersection(mask, wp, p.r, p.turn_threshold)
        arc = None
        if inter is not None:
            try:
                arc = build_virtual_arc(inter.q, inter.d1, inter.d2, p.r_arc, p.turn_threshold)
            except ValueError:
                inter = None
        return wp, inter, arc

    def _leaves_latch(self, wp_global: WaypointArray) -> bool:
        # a straight stretch of at least two steps, all along the exit direction
        if len(wp_global) < 3:
            return False
        d = np.diff(wp_global.points, axis=0)
        off = wrap_angles(np.arctan2(d[:, 1], d[:, 0]) - self.exit_heading)
        return bool(np.all(np.abs(off) < self.params.turn_threshold / 2))

    def process(self, mask: np.ndarray, pose_estimate: Pose2, *,
                valid: Optional[np.ndarray] = None, force: bool = False) -> FramePlan:
        """Plan from one lane mask; ``force`` bypasses the arc latch."""
        try:
            wp, inter, arc = self.plan_bev(mask, valid)
        except (NoLaneError, DegenerateLaneError):
            return FramePlan("lost", None, None, None, None)
        if self.arc_latch and not force:
            if inter is not None or not self._leaves_latch(
                    waypoints_to_global(wp, pose_estimate, self.extrinsics)):
                return FramePlan("ignored", wp, None, inter, arc)
        if arc is not None:
            wp = splice_arc(wp, inter, arc, self.params.r)
            self.arc_latch = True
        else:
            self.arc_latch = False
            self.exit_heading = None
        wp_global = waypoints_to_global(wp, pose_estimate, self.extrinsics)
        if arc is not None:
            d2 = self.extrinsics.linear() @ inter.d2
            d2 = camera_transform(pose_estimate, self.extrinsics).apply_vector(d2)
            self.exit_heading = math.atan2(d2[1], d2[0])
        return FramePlan("adopted", wp, wp_global, inter, arc)
