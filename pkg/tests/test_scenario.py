import math

import pytest

from lanetow.scenario import (ConfigError, builtin_scenario_path, load_scenario,
                              parse_scenario)

BASE = "[scenario]\nduration = 1\n"


def test_defaults():
    cfg = parse_scenario(BASE)
    assert cfg.dt == 0.02 and cfg.steps == 50 and cfg.control_steps_per_frame == 10
    assert cfg.seed == 0 and cfg.world.lanes == ()
    assert cfg.extrinsics.flip_v and cfg.extrinsics.scale == 0.01
    assert cfg.extrinsics.t_c2_c1.angle == pytest.approx(-math.pi / 2)
    assert cfg.render.width == 320 and cfg.quantize and cfg.color_model.k == 3


def test_full_file():
    cfg = parse_scenario(BASE + """
[initial]
psi = 90deg   # facing +y
[sensor]
sigma_xy = 0.01
[glare g1]
cx = 10
cy = 20
ax = 5
ay = 3
[lane one]
color = 10 200 10
points =
    0 0
    5 0
    5 5
""")
    assert cfg.initial.psi == pytest.approx(math.pi / 2)
    assert cfg.sensor.sigma_xy == 0.01 and cfg.sensor.seed == 0
    assert len(cfg.render.noise.glare) == 1
    lane = cfg.world.lanes[0]
    assert lane.color == (10, 200, 10) and lane.width == 0.2 and len(lane.centerline) == 3


def test_with_seed_rekeys_all_streams():
    cfg = parse_scenario(BASE).with_seed(42)
    assert cfg.seed == cfg.sensor.seed == cfg.render.seed == 42


@pytest.mark.parametrize("text", [
    "[scenario]\nseed = 1\n",                         # no duration
    BASE + "dt = 0.03\n",                             # 1 / 0.03 not integral
    BASE + "control_steps_per_frame = 0\n",
    BASE + "[bogus]\nx = 1\n",
    BASE + "[initial]\nz = 1\n",
    BASE + "[initial]\nx = abc\n",
    BASE + "[lane a]\nwidth = 0.2\n",                  # no points
    BASE + "[lane a]\npoints = 0 0\n",                 # single point
    BASE + "[lane a]\ncolor = 300 0 0\npoints =\n  0 0\n  1 0\n",
    BASE + "[glare g]\ncx = 1\ncy = 1\nax = 1\n",
    BASE + "[glare g]\ncx = 1\ncy = 1\nax = 1\nay = -1\n",
    BASE + "[camera]\nwidth = 1\n",
    BASE + "[color]\nk = 1\n",
    BASE + "[planner]\nturn_preference = up\n",
    BASE + "[gains]\nv_cruise = 0\n",
    BASE + "[color]\nquantize = maybe\n",
    BASE + "[initial]\nx = 1\n[initial]\ny = 2\n",
    "not an ini file",
])
def test_errors(text):
    with pytest.raises(ConfigError):
        parse_scenario(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.cfg")


@pytest.mark.parametrize("name", ["straight", "straight_then_corner", "drift", "noisy"])
def test_builtin_scenarios_load(name):
    cfg = load_scenario(builtin_scenario_path(name))
    assert cfg.name == name and cfg.world.lanes
