"""Stanley-style heading blending and waypoint sequencing for towing mode."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Pose2, wrap_angle
from .mecanum import STOP, RobotGeometry, TowCommand
from .planner import WaypointArray

SIGN_POLICIES = ("absolute", "signed")


@dataclass(frozen=True)
class ControlGains:
    v_cruise: float = 0.5
    k_psi: float = 1.5
    omega_max: float = 1.0
    d_scale: float = 5.0
    sign_policy: str = "absolute"

    def __post_init__(self):
        for name in ("v_cruise", "k_psi", "omega_max", "d_scale"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.sign_policy not in SIGN_POLICIES:
            raise ValueError(f"sign_policy must be one of {SIGN_POLICIES}")


@dataclass(frozen=True)
class TrackingState:
    waypoints: Optional[WaypointArray] = None
    target_index: int = 1  # 1-based
    arc_latch: bool = False
    exhausted: bool = True
    frame_id: int = -1

    @classmethod
    def from_waypoints(cls, wp: WaypointArray, arc_latch: bool = False,
                       frame_id: int = -1) -> TrackingState:
        return cls(wp, 1, arc_latch, len(wp) == 0, frame_id)

    @property
    def target(self) -> Optional[np.ndarray]:
        if self.waypoints is None or self.exhausted:
            return None
        return self.waypoints.points[self.target_index - 1]


def cross_track(p_i, x_w, psi1: float, psi2: float) -> float:
    """Signed lateral offset; positive when the waypoint lies left of the lane
    line through the wheelchair."""
    diff = np.asarray(p_i, dtype=float) - np.asarray(x_w, dtype=float)
    return float(math.hypot(diff[0], diff[1]) * math.sin(psi1 - psi2))


def blend(d: float, d_scale: float, signed: bool = False) -> float:
    """Weight of the waypoint direction: ``0.5 (1 + tanh(d_scale * d))``.

    With ``signed=False`` the magnitude of ``d`` is used so the blend is the
    same on both sides of the lane.
    """
    if not math.isfinite(d):
        raise ValueError("cross-track error must be finite")
    x = d if signed else abs(d)
    return 0.5 * (1.0 + math.tanh(d_scale * x))


def desired_heading(psi1: float, psi2: float, d: float, g: ControlGains) -> float:
    k = blend(d, g.d_scale, g.sign_policy == "signed")
    # blend along the short way round from the lane direction
    return wrap_angle(psi2 + k * wrap_angle(psi1 - psi2))


def heading_to_command(psi_des: float, psi_r: float, g: ControlGains) -> TowCommand:
    omega = g.k_psi * wrap_angle(psi_des - psi_r)
    return TowCommand(g.v_cruise, min(max(omega, -g.omega_max), g.omega_max))


def should_advance(psi1: float, psi2: float) -> bool:
    """True once the wheelchair has crossed the line through the waypoint
    perpendicular to the lane."""
    return abs(wrap_angle(psi2 - psi1)) > math.pi / 2


class ControlStep(NamedTuple):
    command: TowCommand
    state: TrackingState
    psi1: float
    psi2: float
    advanced: int  # number of target updates in this step


def wheelchair_reference(pose: Pose2, l_v: float) -> np.ndarray:
    """Main-wheel axle midpoint for a robot pose (``l_v`` behind the robot)."""
    return np.array([pose.x - l_v * math.cos(pose.psi), pose.y - l_v * math.sin(pose.psi)])


def control_step(state: TrackingState, pose_estimate: Pose2, g: ControlGains,
                 l_v: float = RobotGeometry.l_v) -> ControlStep:
    """One tick of the driving loop.

    Advances the target while the wheelchair is past it, stops once the
    array is used up, and otherwise steers towards the blended heading.
    """
    if state.exhausted or state.waypoints is None:
        return ControlStep(STOP, replace(state, exhausted=True), math.nan, math.nan, 0)
    wp = state.waypoints
    x_w = wheelchair_reference(pose_estimate, l_v)
    i = state.target_index
    advanced = 0
    while True:
        p_i = wp.points[i - 1]
        psi1 = math.atan2(p_i[1] - x_w[1], p_i[0] - x_w[0])
        psi2 = float(wp.psi[i - 1])
        if not should_advance(psi1, psi2):
            break
        i += 1
        advanced += 1
        if i > len(wp):
            new_state = replace(state, target_index=len(wp), exhausted=True)
            return ControlStep(STOP, new_state, psi1, psi2, advanced)
    d = cross_track(p_i, x_w, psi1, psi2)
    psi_des = desired_heading(psi1, psi2, d, g)
    cmd = heading_to_command(psi_des, pose_estimate.psi, g)
    return ControlStep(cmd, replace(state, target_index=i), psi1, psi2, advanced)
