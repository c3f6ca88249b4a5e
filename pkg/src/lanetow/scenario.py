"""Scenario files: INI-style sections of ``key = value`` pairs.

Sections and keys (all optional unless noted, defaults in brackets)::

    [scenario]   name, seed [0], dt [0.02], duration (required),
                 control_steps_per_frame [10]
    [initial]    x [0], y [0], psi [0]          wheelchair pose
    [geometry]   r_wheel, l_x, l_y, l_v, l_h_min
    [camera]     width [320], height [240], bev_width [320], bev_height [240],
                 scale [0.01], bias [-1.595 2.85], mount [0 0 -90deg],
                 flip_v [true], footprint (four "x y" lines, robot frame)
    [noise]      hue_jitter_sigma [0], shadow_gradient [0]
    [glare NAME] cx, cy, ax, ay, angle [0], gain [60]   (repeatable)
    [color]      k [3], hue_min [340], hue_max [20], sat_min, val_min,
                 quantize [true]
    [planner]    r, r_arc, n_max, turn_threshold, turn_preference, min_area
    [gains]      v_cruise, k_psi, omega_max, d_scale, sign_policy
    [sensor]     sigma_xy [0], sigma_psi [0], seed [scenario seed]
    [world]      floor_color [150 140 130]
    [lane NAME]  width, color, points (one "x y" per line)   (repeatable)

Angles are radians unless suffixed with ``deg``. Lengths are metres except
the planner's ``r`` and ``r_arc``, which are BEV pixels.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, replace
from typing import Dict, Optional

from .control import ControlGains
from .geometry import Pose2, Transform2
from .mecanum import RobotGeometry
from .perception import ColorModel
from .planner import CameraExtrinsics, PlannerParams
from .sim import Glare, Lane, NoiseConfig, PoseSensorModel, RenderConfig, WorldMap

DEFAULT_FOOTPRINT = ((-0.6, 0.45), (0.6, 0.45), (1.6, 2.85), (-1.6, 2.85))

_KEYS = {
    "scenario": {"name", "seed", "dt", "duration", "control_steps_per_frame"},
    "initial": {"x", "y", "psi"},
    "geometry": {"r_wheel", "l_x", "l_y", "l_v", "l_h_min"},
    "camera": {"width", "height", "bev_width", "bev_height", "scale", "bias", "mount",
               "flip_v", "footprint"},
    "noise": {"hue_jitter_sigma", "shadow_gradient"},
    "glare": {"cx", "cy", "ax", "ay", "angle", "gain"},
    "color": {"k", "hue_min", "hue_max", "sat_min", "val_min", "quantize"},
    "planner": {"r", "r_arc", "n_max", "turn_threshold", "turn_preference", "min_area"},
    "gains": {"v_cruise", "k_psi", "omega_max", "d_scale", "sign_policy"},
    "sensor": {"sigma_xy", "sigma_psi", "seed"},
    "world": {"floor_color"},
    "lane": {"width", "color", "points"},
}
_REPEATED = ("glare", "lane")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    world: WorldMap
    geometry: RobotGeometry
    extrinsics: CameraExtrinsics
    color_model: ColorModel
    quantize: bool
    planner: PlannerParams
    gains: ControlGains
    sensor: PoseSensorModel
    render: RenderConfig
    dt: float
    duration: float
    control_steps_per_frame: int
    seed: int
    initial: Pose2

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_seed(self, seed: int) -> ScenarioConfig:
        """Same scenario with every seeded stream re-keyed on ``seed``."""
        return replace(self, seed=seed, sensor=replace(self.sensor, seed=seed),
                       render=replace(self.render, seed=seed))


def _number(text: str, what: str) -> float:
    t = text.strip()
    try:
        if t.endswith("deg"):
            return math.radians(float(t[:-3]))
        return float(t)
    except ValueError:
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None


def _numbers(text: str, what: str, n: Optional[int] = None):
    vals = tuple(_number(t, what) for t in text.split())
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def _points(text: str, what: str):
    pts = [_numbers(line, what, 2) for line in text.strip().splitlines() if line.strip()]
    if not pts:
        raise ConfigError(f"{what}: no points given")
    return tuple(pts)


def _int(text: str, what: str) -> int:
    v = _number(text, what)
    if v != int(v):
        raise ConfigError(f"{what}: expected an integer, got {text!r}")
    return int(v)


def _bool(text: str, what: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {text!r}")


def _color(text: str, what: str):
    c = _numbers(text, what, 3)
    if any(v != int(v) or not 0 <= v <= 255 for v in c):
        raise ConfigError(f"{what}: colour channels must be integers in [0, 255]")
    return tuple(int(v) for v in c)


def _floats(sec: Dict[str, str], prefix: str, keys) -> Dict[str, float]:
    return {k: _number(sec[k], f"{prefix}.{k}") for k in keys if k in sec}


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   empty_lines_in_values=False)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    single: Dict[str, Dict[str, str]] = {}
    repeated: Dict[str, list] = {k: [] for k in _REPEATED}
    for name in cp.sections():
        kind, _, label = name.partition(" ")
        if kind not in _KEYS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        sec = dict(cp[name])
        unknown = set(sec) - _KEYS[kind]
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
        if kind in _REPEATED:
            repeated[kind].append((label.strip() or kind, sec))
        elif label:
            raise ConfigError(f"{source}: section [{kind}] takes no label")
        else:
            single[kind] = sec

    try:
        return _build(single, repeated, source)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(single, repeated, source) -> ScenarioConfig:
    get = lambda kind: single.get(kind, {})  # noqa: E731

    sc = get("scenario")
    if "duration" not in sc:
        raise ConfigError(f"{source}: [scenario] duration is required")
    seed = _int(sc.get("seed", "0"), "scenario.seed")
    dt = _number(sc.get("dt", "0.02"), "scenario.dt")
    duration = _number(sc["duration"], "scenario.duration")
    cpf = _int(sc.get("control_steps_per_frame", "10"), "scenario.control_steps_per_frame")
    if not dt > 0 or not duration > 0:
        raise ConfigError("dt and duration must be positive")
    steps = round(duration / dt)
    if abs(steps * dt - duration) > 1e-9 * max(1.0, duration):
        raise ConfigError(f"duration {duration} is not a whole number of dt={dt} steps")
    if cpf < 1:
        raise ConfigError("control_steps_per_frame must be >= 1")

    init = _floats(get("initial"), "initial", ("x", "y", "psi"))
    initial = Pose2(init.get("x", 0.0), init.get("y", 0.0), init.get("psi", 0.0))
    geometry = RobotGeometry(**_floats(get("geometry"), "geometry", _KEYS["geometry"]))

    cam = get("camera")
    mount = _numbers(cam.get("mount", "0 0 -90deg"), "camera.mount", 3)
    extrinsics = CameraExtrinsics(
        _number(cam.get("scale", "0.01"), "camera.scale"),
        _numbers(cam.get("bias", "-1.595 2.85"), "camera.bias", 2),
        Transform2.translation(mount[0], mount[1]) @ Transform2.rotation(mount[2]),
        _bool(cam.get("flip_v", "true"), "camera.flip_v"))
    footprint = (_points(cam["footprint"], "camera.footprint")
                 if "footprint" in cam else DEFAULT_FOOTPRINT)
    sizes = {k: _int(cam.get(k, d), f"camera.{k}") for k, d in
             (("width", "320"), ("height", "240"), ("bev_width", "320"), ("bev_height", "240"))}
    if min(sizes.values()) < 2:
        raise ConfigError("camera and BEV sizes must be at least 2 px")

    noise_sec = get("noise")
    glares = []
    for label, sec in repeated["glare"]:
        missing = {"cx", "cy", "ax", "ay"} - set(sec)
        if missing:
            raise ConfigError(f"[glare {label}] missing {', '.join(sorted(missing))}")
        try:
            glares.append(Glare(**_floats(sec, f"glare {label}", _KEYS["glare"])))
        except ValueError as exc:
            raise ConfigError(f"[glare {label}] {exc}") from None
    noise = NoiseConfig(glare=tuple(glares),
                        **_floats(noise_sec, "noise", ("hue_jitter_sigma", "shadow_gradient")))
    render = RenderConfig(sizes["width"], sizes["height"], footprint, extrinsics,
                          sizes["bev_width"], sizes["bev_height"], noise, seed)

    col = get("color")
    cm_kw = _floats(col, "color", ("hue_min", "hue_max", "sat_min", "val_min"))
    if "k" in col:
        cm_kw["k"] = _int(col["k"], "color.k")
    color_model = ColorModel(**cm_kw)
    quantize = _bool(col.get("quantize", "true"), "color.quantize")

    pl = get("planner")
    pl_kw = _floats(pl, "planner", ("r", "r_arc", "turn_threshold"))
    for key in ("n_max", "min_area"):
        if key in pl:
            pl_kw[key] = _int(pl[key], f"planner.{key}")
    if "turn_preference" in pl:
        pl_kw["turn_preference"] = pl["turn_preference"].strip()
    planner = PlannerParams(**pl_kw)

    gn = get("gains")
    g_kw = _floats(gn, "gains", ("v_cruise", "k_psi", "omega_max", "d_scale"))
    if "sign_policy" in gn:
        g_kw["sign_policy"] = gn["sign_policy"].strip()
    gains = ControlGains(**g_kw)

    se = get("sensor")
    sensor = PoseSensorModel(
        **_floats(se, "sensor", ("sigma_xy", "sigma_psi")),
        seed=_int(se["seed"], "sensor.seed") if "seed" in se else seed)

    floor = _color(get("world").get("floor_color", "150 140 130"), "world.floor_color")
    lanes = []
    for label, sec in repeated["lane"]:
        if "points" not in sec:
            raise ConfigError(f"[lane {label}] needs points")
        lanes.append(Lane(_points(sec["points"], f"lane {label}.points"),
                          _number(sec.get("width", "0.2"), f"lane {label}.width"),
                          _color(sec.get("color", "200 40 40"), f"lane {label}.color")))
    world = WorldMap(floor, tuple(lanes))

    return ScenarioConfig(sc.get("name", "scenario").strip(), world, geometry, extrinsics,
                          color_model, quantize, planner, gains, sensor, render, dt, duration,
                          cpf, seed, initial)


def load_scenario(path: str | os.PathLike) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, str(path))


def builtin_scenario_path(name: str) -> str:
    """Path of a scenario shipped with the package (``name`` with or without .cfg)."""
    base = name if name.endswith(".cfg") else name + ".cfg"
    return os.path.join(os.path.dirname(__file__), "scenarios", base)
