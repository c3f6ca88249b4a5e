"""Closed-loop scenario runner, trajectory log, metrics and SVG overlay."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .control import TrackingState, control_step
from .geometry import Pose2, signed_distance_to_polyline
from .mecanum import tow_twist_from_wheelchair_command, wheel_speeds_from_twist
from .perception import (binarize_hue, extract_contours, lane_region, quantize_colors,
                         rgb_to_hsv, valid_region, warp_to_bev)
from .planner import FramePlan, LanePlanner, bev_to_camera, camera_to_global
from .scenario import ScenarioConfig
from .sim import (TOWING, VehicleState, WorldMap, read_pose_sensor, render_ground_view,
                  slip_check, step_towing)

CSV_HEADER = ("t,true_x,true_y,true_psi,est_x,est_y,est_psi,target_x,target_y,"
              "target_index,psi1,psi2,cross_track,v_w,omega_w,w1,w2,w3,w4,arc_latch,frame_id")
SLIP_TOL = 1e-9
SETTLE_BAND = 0.03
SETTLE_LENGTH = 1.0

OK = "ok"
LANE_NOT_FOUND = "lane_not_found"
INVARIANT_VIOLATION = "invariant_violation"


class StepRecord(NamedTuple):
    t: float
    true_x: float
    true_y: float
    true_psi: float
    est_x: float
    est_y: float
    est_psi: float
    target_x: float
    target_y: float
    target_index: int
    psi1: float
    psi2: float
    cross_track: float
    v_w: float
    omega_w: float
    w1: float
    w2: float
    w3: float
    w4: float
    arc_latch: bool
    frame_id: int
    # not logged to CSV
    wheel_x: float = math.nan  # true wheelchair reference point
    wheel_y: float = math.nan
    frame_event: Optional[str] = None  # planner outcome on camera ticks
    advanced: int = 0


@dataclass
class RunReport:
    records: List[StepRecord] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    world: Optional[WorldMap] = None
    status: str = OK
    message: str = ""
    arcs: List[np.ndarray] = field(default_factory=list)  # sampled global polylines

    @property
    def exit_code(self) -> int:
        return {OK: 0, LANE_NOT_FOUND: 3, INVARIANT_VIOLATION: 4}[self.status]


class FrameData(NamedTuple):
    index: int
    raw: np.ndarray
    bev: np.ndarray
    mask: np.ndarray
    plan: FramePlan


def nearest_lane_offset(world: WorldMap, point) -> float:
    """Signed distance (left positive) to the closest lane centreline."""
    best = math.nan
    for lane in world.lanes:
        d = float(signed_distance_to_polyline(np.asarray(point, dtype=float)[None, :],
                                              lane.centerline)[0])
        if math.isnan(best) or abs(d) < abs(best):
            best = d
    return best


def perceive(cfg: ScenarioConfig, raw: np.ndarray):
    """Raw camera image -> (bev, lane mask, validity) via the colour pipeline."""
    r = cfg.render
    bev = warp_to_bev(raw, r.bev_homography, r.bev_width, r.bev_height)
    valid = valid_region(bev)
    img = quantize_colors(bev, cfg.color_model.k, cfg.seed).image if cfg.quantize else bev
    mask = binarize_hue(rgb_to_hsv(img), cfg.color_model)
    contours = extract_contours(mask, cfg.planner.min_area)
    return bev, lane_region(mask, cfg.planner.min_area, contours), valid


def run_scenario(cfg: ScenarioConfig,
                 frame_sink: Optional[Callable[[FrameData], None]] = None) -> RunReport:
    """Drive the scenario to completion and return the logged report.

    A camera frame is processed every ``control_steps_per_frame`` control
    ticks. Waypoints found in a frame are converted to the global frame with
    the drifting pose estimate and tracked until the next adopted frame; with
    the array used up the command is a stop.
    """
    g = cfg.geometry
    planner = LanePlanner(cfg.planner, cfg.extrinsics)
    state = VehicleState(cfg.initial, TOWING)
    tracking = TrackingState()
    report = RunReport(world=cfg.world)
    for k in range(cfg.steps):
        robot_true = state.robot_pose(g)
        est = read_pose_sensor(robot_true, cfg.sensor, k)
        event = None
        if k % cfg.control_steps_per_frame == 0:
            index = k // cfg.control_steps_per_frame
            raw = render_ground_view(cfg.world, robot_true, cfg.render, index)
            bev, mask, valid = perceive(cfg, raw)
            plan = planner.process(mask, est, valid=valid, force=tracking.exhausted)
            event = plan.outcome
            if frame_sink is not None:
                frame_sink(FrameData(index, raw, bev, mask, plan))
            if event == "lost" and k == 0:
                report.status = LANE_NOT_FOUND
                report.message = "no lane visible in the first camera frame"
                break
            if event == "adopted":
                tracking = TrackingState.from_waypoints(plan.waypoints, planner.arc_latch, index)
                if plan.arc is not None:
                    report.arcs.append(_arc_polyline(plan, est, cfg))
        step = control_step(tracking, est, cfg.gains, g.l_v)
        tracking = step.state
        cmd = step.command
        slip = slip_check(cmd, g)
        if not slip < SLIP_TOL:
            report.status = INVARIANT_VIOLATION
            report.message = f"main-wheel slip {slip:.3e} m/s at step {k}"
            break
        wheels = wheel_speeds_from_twist(tow_twist_from_wheelchair_command(cmd, g), g)
        wc = state.pose.position
        target = _logged_target(tracking)
        report.records.append(StepRecord(
            k * cfg.dt, robot_true.x, robot_true.y, robot_true.psi, est.x, est.y, est.psi,
            target[0], target[1], tracking.target_index if tracking.waypoints is not None else 0,
            step.psi1, step.psi2, nearest_lane_offset(cfg.world, wc),
            cmd.v_w, cmd.omega_w, *wheels, planner.arc_latch, tracking.frame_id,
            float(wc[0]), float(wc[1]), event, step.advanced))
        state = step_towing(state, cmd, cfg.dt)
    if report.records:
        report.metrics = compute_metrics(report.records)
    return report


def _logged_target(tracking: TrackingState):
    wp = tracking.waypoints
    if wp is None or len(wp) == 0:
        return (math.nan, math.nan)
    p = wp.points[min(tracking.target_index, len(wp)) - 1]
    return (float(p[0]), float(p[1]))


def _arc_polyline(plan: FramePlan, est: Pose2, cfg: ScenarioConfig, n: int = 33):
    arc = plan.arc
    s = np.linspace(0.0, arc.sweep, n)
    pts = np.array([arc.point(x) for x in s])
    return camera_to_global(bev_to_camera(pts, cfg.extrinsics), est, cfg.extrinsics)


def compute_metrics(records: Sequence[StepRecord]) -> Dict[str, float]:
    if not records:
        raise ValueError("cannot compute metrics of an empty run")
    e = np.array([r.cross_track for r in records], dtype=float)
    pts = np.array([(r.wheel_x, r.wheel_y) for r in records], dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T) if len(pts) > 1 else np.zeros(0)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return {
        "cross_track_rms": float(np.sqrt(np.mean(e ** 2))),
        "max_cross_track": float(np.max(np.abs(e))),
        "settle_distance": settle_distance(e, s),
        "final_heading": float(records[-1].true_psi),
        "waypoint_updates": int(sum(r.advanced for r in records)),
        "frames_processed": int(sum(r.frame_event is not None for r in records)),
        "lane_lost_events": int(sum(r.frame_event == "lost" for r in records)),
    }


def settle_distance(e, s, band: float = SETTLE_BAND, length: float = SETTLE_LENGTH) -> float:
    """Travel at the first sample from which ``|e| < band`` holds for at
    least ``length`` metres; the total travel if that never happens."""
    e = np.abs(np.asarray(e, dtype=float))
    s = np.asarray(s, dtype=float)
    n = len(e)
    inside = e < band
    last_in = n - 1  # last index of the current inside streak, scanning backwards
    best = None
    for j in range(n - 1, -1, -1):
        if not inside[j]:
            last_in = j - 1
            continue
        if s[last_in] - s[j] >= length:
            best = j
    return float(s[best]) if best is not None else float(s[-1])


# --------------------------------------------------------------------------
# output files


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    out = f"{float(x):.6f}"
    return "0.000000" if out == "-0.000000" else out


def csv_lines(report: RunReport) -> List[str]:
    n = len(CSV_HEADER.split(","))
    return [CSV_HEADER] + [",".join(_fmt(v) for v in r[:n]) for r in report.records]


def emit_trajectory_csv(report: RunReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(csv_lines(report)) + "\n")


def _svg_extent(report: RunReport):
    ext = report.world.extents() if report.world is not None else None
    boxes = [] if ext is None else [ext]
    if report.records:
        xy = np.array([(r.true_x, r.true_y, r.est_x, r.est_y) for r in report.records])
        boxes.append((xy[:, [0, 2]].min(), xy[:, [1, 3]].min(),
                      xy[:, [0, 2]].max(), xy[:, [1, 3]].max()))
    if not boxes:
        return (-1.0, -1.0, 1.0, 1.0)
    b = np.array(boxes)
    lo, hi = b[:, :2].min(axis=0) - 0.5, b[:, 2:].max(axis=0) + 0.5
    return (lo[0], lo[1], hi[0], hi[1])


def _num(x: float) -> str:
    out = f"{x:.4f}"
    return "0.0000" if out == "-0.0000" else out


def _polyline(pts, cls: str, color: str, width: float) -> str:
    coords = " ".join(f"{_num(x)},{_num(-y)}" for x, y in pts
                      if math.isfinite(x) and math.isfinite(y))
    return (f'  <polyline class="{cls}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}" points="{coords}"><title>{cls}</title></polyline>')


def svg_text(report: RunReport) -> str:
    x0, y0, x1, y1 = _svg_extent(report)
    w, h = x1 - x0, y1 - y0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.4f} {-y1:.4f} {w:.4f} {h:.4f}" '
        f'width="{800}" height="{max(1, round(800 * h / w))}">',
    ]
    if not report.records:
        stroke = 0.01 * max(w, h)
        lines += [
            f'  <line class="axis" x1="{x0:.4f}" y1="0" x2="{x1:.4f}" y2="0" '
            f'stroke="#888" stroke-width="{stroke:.4f}"/>',
            f'  <line class="axis" x1="0" y1="{-y1:.4f}" x2="0" y2="{-y0:.4f}" '
            f'stroke="#888" stroke-width="{stroke:.4f}"/>',
        ]
    else:
        for lane in report.world.lanes if report.world is not None else ():
            r, g, b = lane.color
            lines.append(_polyline(lane.centerline, "lane", f"rgb({r},{g},{b})", lane.width))
        rec = report.records
        desired = []
        for r in rec:
            p = (r.target_x, r.target_y)
            if math.isfinite(p[0]) and (not desired or desired[-1] != p):
                desired.append(p)
        lines.append(_polyline(desired, "desired", "#2a7fff", 0.02))
        lines.append(_polyline([(r.true_x, r.true_y) for r in rec], "true", "#111111", 0.02))
        lines.append(_polyline([(r.est_x, r.est_y) for r in rec], "estimated", "#e08000", 0.02))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_svg_plot(report: RunReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg_text(report))


def metrics_text(report: RunReport) -> str:
    lines = [f"status={report.status}"]
    for key, val in report.metrics.items():
        lines.append(f"{key}={val}" if isinstance(val, int) else f"{key}={val:.6f}")
    return "\n".join(lines) + "\n"


def emit_metrics(report: RunReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(metrics_text(report))
