"""World model, exact kinematic integration, camera rendering and pose drift."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .geometry import Pose2, body_to_global
from .mecanum import RobotGeometry, TowCommand, Twist2, main_wheel_slip, \
    tow_twist_from_wheelchair_command
from .perception import apply_homography, homography_from_points, normalize_homography
from .planner import CameraExtrinsics, bev_to_camera, camera_to_bev, camera_transform

TOWING = "towing"
STANDALONE = "standalone"


@dataclass(frozen=True)
class Lane:
    centerline: np.ndarray  # (m, 2) metres, global frame
    width: float
    color: Tuple[int, int, int]

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("lane centerline needs at least two points")
        if not self.width > 0:
            raise ValueError("lane width must be positive")
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))


@dataclass(frozen=True)
class WorldMap:
    floor_color: Tuple[int, int, int] = (150, 140, 130)
    lanes: Tuple[Lane, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "floor_color", tuple(int(c) for c in self.floor_color))
        object.__setattr__(self, "lanes", tuple(self.lanes))

    def extents(self):
        """``(xmin, ymin, xmax, ymax)`` of all lane geometry, or ``None``."""
        if not self.lanes:
            return None
        pts = np.concatenate([ln.centerline for ln in self.lanes])
        pad = max(ln.width for ln in self.lanes) / 2.0
        return (pts[:, 0].min() - pad, pts[:, 1].min() - pad,
                pts[:, 0].max() + pad, pts[:, 1].max() + pad)


@dataclass(frozen=True)
class VehicleState:
    """Vehicle pose and drive mode.

    In towing mode ``pose`` is the wheelchair frame (origin on the main-wheel
    axle midpoint); in standalone mode it is the robot pose.
    """
    pose: Pose2
    mode: str = TOWING

    def robot_pose(self, g: RobotGeometry) -> Pose2:
        if self.mode == TOWING:
            return self.pose.advanced(g.l_v)
        return self.pose


def step_towing(s: VehicleState, c: TowCommand, dt: float) -> VehicleState:
    """Exact unicycle step of the wheelchair frame under ``(v_w, omega_w)``."""
    if s.mode != TOWING:
        raise ValueError("step_towing requires towing mode")
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = s.pose
    v, om = c.v_w, c.omega_w
    if abs(om) < 1e-9:
        x = p.x + v * dt * math.cos(p.psi)
        y = p.y + v * dt * math.sin(p.psi)
        psi = p.psi + om * dt
    else:
        psi = p.psi + om * dt
        x = p.x + v / om * (math.sin(psi) - math.sin(p.psi))
        y = p.y - v / om * (math.cos(psi) - math.cos(p.psi))
    return VehicleState(Pose2(x, y, psi), TOWING)


def step_standalone(s: VehicleState, t: Twist2, dt: float) -> VehicleState:
    """Exact screw-motion step for a constant body twist."""
    if s.mode != STANDALONE:
        raise ValueError("step_standalone requires standalone mode")
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = t.omega * dt
    if abs(th) < 1e-12:
        a, b = dt, 0.0
    else:
        a = math.sin(th) / t.omega
        b = (1.0 - math.cos(th)) / t.omega
    body = np.array([a * t.vx - b * t.vy, b * t.vx + a * t.vy])
    dx, dy = body_to_global(Pose2(0.0, 0.0, s.pose.psi)).apply_vector(body)
    return VehicleState(Pose2(s.pose.x + dx, s.pose.y + dy, s.pose.psi + th), STANDALONE)


def slip_check(c: TowCommand, g: RobotGeometry) -> float:
    """Main-wheel slip speed of the twist allocated for ``c`` (m/s)."""
    return abs(main_wheel_slip(tow_twist_from_wheelchair_command(c, g), g))


# --------------------------------------------------------------------------
# camera rendering


@dataclass(frozen=True)
class Glare:
    """Additive brightness ellipse in camera image pixels."""
    cx: float
    cy: float
    ax: float
    ay: float
    angle: float = 0.0
    gain: float = 60.0

    def __post_init__(self):
        if not (self.ax > 0 and self.ay > 0):
            raise ValueError("glare axes must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    hue_jitter_sigma: float = 0.0
    glare: Tuple[Glare, ...] = ()
    shadow_gradient: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "glare", tuple(self.glare))
        if self.hue_jitter_sigma < 0:
            raise ValueError("hue_jitter_sigma must be non-negative")
        if not 0.0 <= self.shadow_gradient < 1.0:
            raise ValueError("shadow_gradient must lie in [0, 1)")

    @property
    def silent(self) -> bool:
        return self.hue_jitter_sigma == 0 and not self.glare and self.shadow_gradient == 0


@dataclass(frozen=True)
class RenderConfig:
    """Camera model for the synthetic ground view.

    ``footprint`` holds the robot-frame corners (metres) of the visible ground
    trapezoid in the order near-left, near-right, far-right, far-left; they map
    to the image corners bottom-left, bottom-right, top-right, top-left.
    ``extrinsics`` and the BEV size describe the top-down raster the camera
    warp is defined against.
    """
    width: int
    height: int
    footprint: Tuple[Tuple[float, float], ...]
    extrinsics: CameraExtrinsics
    bev_width: int
    bev_height: int
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        if fp.shape != (4, 2):
            raise ValueError("footprint needs four corner points")
        cross = []
        for i in range(4):
            a, b, c = fp[i], fp[(i + 1) % 4], fp[(i + 2) % 4]
            cross.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
        if not (all(x > 0 for x in cross) or all(x < 0 for x in cross)):
            raise ValueError("footprint corners must be in convex position")
        object.__setattr__(self, "footprint", tuple(map(tuple, fp.tolist())))
        normalize_homography(self.warp)

    @functools.cached_property
    def warp(self) -> np.ndarray:
        """Homography from BEV pixels (ground patch) to camera image pixels."""
        src = camera_to_bev(np.asarray(self.footprint), self.extrinsics)
        w, h = self.width - 1, self.height - 1
        dst = np.array([[0, h], [w, h], [w, 0], [0, 0]], dtype=float)
        return homography_from_points(src, dst)

    @functools.cached_property
    def bev_homography(self) -> np.ndarray:
        """Homography from camera image pixels to BEV pixels (perception side)."""
        return normalize_homography(np.linalg.inv(self.warp))


def lane_distance(lane: Lane, points: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to the lane centreline."""
    best = np.full(len(points), np.inf)
    poly = lane.centerline
    for a, b in zip(poly[:-1], poly[1:]):
        seg = b - a
        t = np.clip(((points - a) @ seg) / (seg @ seg), 0.0, 1.0)
        diff = points - (a + t[:, None] * seg)
        best = np.minimum(best, np.hypot(diff[:, 0], diff[:, 1]))
    return best


def paint_ground(world: WorldMap, points_g: np.ndarray) -> np.ndarray:
    """Floor or lane colour at each global point, ``(n, 3)`` float."""
    out = np.empty((len(points_g), 3))
    out[:] = world.floor_color
    for lane in world.lanes:
        on = lane_distance(lane, points_g) <= lane.width / 2.0
        out[on] = lane.color
    return out


def bev_pixels_to_global(u, v, pose: Pose2, e: CameraExtrinsics) -> np.ndarray:
    pts = np.stack([np.ravel(u), np.ravel(v)], axis=1).astype(float)
    return camera_transform(pose, e).apply(bev_to_camera(pts, e))


def render_ground_view(world: WorldMap, robot_true_pose: Pose2, cfg: RenderConfig,
                       frame_index: int = 0) -> np.ndarray:
    """Perspective camera image of the ground ahead of the robot.

    Every image pixel centre is mapped back through the camera warp onto the
    ground, coloured by the lane test, then the configured noise is added:
    per-channel Gaussian colour jitter, glare ellipses and a horizontal
    shadow gradient. Noise is seeded by ``(cfg.seed, frame_index)``.
    """
    hinv = np.linalg.inv(cfg.warp)
    x, y = np.meshgrid(np.arange(cfg.width, dtype=float), np.arange(cfg.height, dtype=float))
    den = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
    u = (hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]) / den
    v = (hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]) / den
    ground = bev_pixels_to_global(u, v, robot_true_pose, cfg.extrinsics)
    img = paint_ground(world, ground).reshape(cfg.height, cfg.width, 3)
    noise = cfg.noise
    if not noise.silent:
        rng = np.random.default_rng([cfg.seed, 0, frame_index])
        if noise.shadow_gradient:
            img *= (1.0 - noise.shadow_gradient * x / max(cfg.width - 1, 1))[..., None]
        for gl in noise.glare:
            c, s = math.cos(gl.angle), math.sin(gl.angle)
            dx, dy = x - gl.cx, y - gl.cy
            rho2 = ((c * dx + s * dy) / gl.ax) ** 2 + ((-s * dx + c * dy) / gl.ay) ** 2
            img += (gl.gain * np.clip(1.0 - rho2, 0.0, None))[..., None]
        if noise.hue_jitter_sigma:
            img += rng.normal(0.0, noise.hue_jitter_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def glare_mask(cfg: RenderConfig) -> np.ndarray:
    """Camera pixels touched by any glare ellipse."""
    x, y = np.meshgrid(np.arange(cfg.width, dtype=float), np.arange(cfg.height, dtype=float))
    hit = np.zeros((cfg.height, cfg.width), dtype=bool)
    for gl in cfg.noise.glare:
        c, s = math.cos(gl.angle), math.sin(gl.angle)
        dx, dy = x - gl.cx, y - gl.cy
        hit |= ((c * dx + s * dy) / gl.ax) ** 2 + ((-s * dx + c * dy) / gl.ay) ** 2 < 1.0
    return hit


def ground_truth_bev_mask(world: WorldMap, robot_pose: Pose2, cfg: RenderConfig,
                          color=None) -> np.ndarray:
    """Lane pixels of the BEV raster from the true geometry.

    Only ground inside the camera footprint is counted, and only lanes of
    ``color`` when it is given.
    """
    u, v = np.meshgrid(np.arange(cfg.bev_width), np.arange(cfg.bev_height))
    ground = bev_pixels_to_global(u, v, robot_pose, cfg.extrinsics)
    img = apply_homography(cfg.warp, np.stack([u.ravel(), v.ravel()], axis=1))
    seen = ((img[:, 0] >= 0) & (img[:, 0] <= cfg.width - 1)
            & (img[:, 1] >= 0) & (img[:, 1] <= cfg.height - 1))
    mask = np.zeros(len(ground), dtype=bool)
    for lane in world.lanes:
        if color is not None and tuple(lane.color) != tuple(color):
            continue
        mask |= lane_distance(lane, ground) <= lane.width / 2.0
    return (mask & seen).reshape(cfg.bev_height, cfg.bev_width)


# --------------------------------------------------------------------------
# pose sensor


@dataclass(frozen=True)
class PoseSensorModel:
    """Bias random walk added to the true pose; intensities per sqrt(step)."""
    sigma_xy: float = 0.0
    sigma_psi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_xy < 0 or self.sigma_psi < 0:
            raise ValueError("pose sensor sigmas must be non-negative")


_CHUNK = 4096


@functools.lru_cache(maxsize=4096)
def _increments(seed: int, chunk: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1, chunk])
    return rng.standard_normal((_CHUNK, 3))


def pose_bias(model: PoseSensorModel, step: int) -> np.ndarray:
    """Accumulated ``(bx, by, bpsi)`` after ``step`` random-walk increments."""
    if step < 0:
        raise ValueError("step must be non-negative")
    scale = np.array([model.sigma_xy, model.sigma_xy, model.sigma_psi])
    if step == 0 or not scale.any():
        return np.zeros(3)
    full, rest = divmod(step, _CHUNK)
    total = np.zeros(3)
    for c in range(full):
        total += _chunk_sum(model.seed, c)
    if rest:
        total += _increments(model.seed, full)[:rest].sum(axis=0)
    return total * scale


@functools.lru_cache(maxsize=4096)
def _chunk_sum(seed: int, chunk: int) -> np.ndarray:
    return _increments(seed, chunk).sum(axis=0)


def read_pose_sensor(true_pose: Pose2, model: PoseSensorModel, step: int) -> Pose2:
    b = pose_bias(model, step)
    return Pose2(true_pose.x + b[0], true_pose.y + b[1], true_pose.psi + b[2])
