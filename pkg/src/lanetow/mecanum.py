"""Mecanum wheel allocation and the towing-mode motion constraint.

Body twists are expressed in the robot frame ``R``: ``vx`` along ``e_1R``
(to the right), ``vy`` along ``e_2R`` (forward) and ``omega`` counterclockwise.
The wheelchair main-wheel axle midpoint sits at ``(0, -l_v)`` in that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

ICR_EPS = 1e-9


class MinimumTurnRadiusError(ValueError):
    """Raised when a turn command asks for an ICR closer than ``l_h_min``."""


@dataclass(frozen=True)
class RobotGeometry:
    r_wheel: float = 0.05
    l_x: float = 0.2
    l_y: float = 0.15
    l_v: float = 0.4
    l_h_min: float = 0.3

    def __post_init__(self):
        for name in ("r_wheel", "l_x", "l_y", "l_v", "l_h_min"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be a positive length, got {value!r}")


class Twist2(NamedTuple):
    vx: float
    vy: float
    omega: float


class WheelSpeeds(NamedTuple):
    """Wheel speeds in rad/s, ordered as the allocation matrix rows.

    w1 front-left, w2 front-right, w3 rear-left, w4 rear-right.
    """
    w1: float
    w2: float
    w3: float
    w4: float


class TurnCommand(NamedTuple):
    speed: float
    l_h: float


class TowCommand(NamedTuple):
    v_w: float
    omega_w: float


STOP = TowCommand(0.0, 0.0)


def allocation_matrix(g: RobotGeometry) -> Tuple[Tuple[float, float, float], ...]:
    """Rows of the 4x3 wheel allocation matrix, already divided by ``r_wheel``."""
    inv_r = 1.0 / g.r_wheel
    lw = (g.l_x + g.l_y) * inv_r
    return (
        (inv_r, inv_r, -lw),
        (-inv_r, inv_r, lw),
        (-inv_r, inv_r, -lw),
        (inv_r, inv_r, lw),
    )


def wheel_speeds_from_twist(t: Twist2, g: RobotGeometry) -> WheelSpeeds:
    vx, vy, om = t
    return WheelSpeeds(*(m0 * vx + m1 * vy + m2 * om
                         for m0, m1, m2 in allocation_matrix(g)))


def _sgn(x: float) -> float:
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


def _check_turn(c: TurnCommand, g: RobotGeometry) -> float:
    if not abs(c.l_h) >= g.l_h_min:
        raise MinimumTurnRadiusError(
            f"|l_h| = {abs(c.l_h):.4g} m is below the minimum turning radius {g.l_h_min:.4g} m")
    if c.speed < 0.0:
        raise ValueError("turn command speed must be non-negative")
    return math.hypot(g.l_v, c.l_h)


def twist_from_turn_command(c: TurnCommand, g: RobotGeometry) -> Twist2:
    """Body twist placing the ICR at ``(l_h, -l_v)`` on the main-wheel axis.

    The forward component uses ``|l_h|`` so the platform never backs up;
    the turn side is carried by ``sgn(l_h)`` alone.
    """
    l_d = _check_turn(c, g)
    s = _sgn(c.l_h)
    f = c.speed / l_d
    return Twist2(f * g.l_v * s, f * abs(c.l_h), -f * s)


def wheelchair_command_from_turn(c: TurnCommand, g: RobotGeometry) -> TowCommand:
    l_d = _check_turn(c, g)
    cos_t = abs(c.l_h) / l_d
    sin_t = g.l_v / l_d
    return TowCommand(c.speed * cos_t, -_sgn(c.l_h) * c.speed * sin_t / g.l_v)


def tow_twist_from_wheelchair_command(c: TowCommand, g: RobotGeometry) -> Twist2:
    """Allocate a wheelchair-level command to a slip-free robot twist."""
    return Twist2(-g.l_v * c.omega_w, c.v_w, c.omega_w)


def icr_of_twist(t: Twist2) -> Optional[Tuple[float, float]]:
    """Robot-frame instantaneous centre of rotation, ``None`` for translation."""
    if abs(t.omega) <= ICR_EPS:
        return None
    return (-t.vy / t.omega, t.vx / t.omega)


def main_wheel_slip(t: Twist2, g: RobotGeometry) -> float:
    """Signed velocity of the axle midpoint along the main-wheel axis (m/s)."""
    # v + omega x p with p = (0, -l_v); only the e_1R component can slip
    return t.vx + t.omega * g.l_v
