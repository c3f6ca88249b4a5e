import math
import os
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lanetow import harness
from lanetow.harness import (CSV_HEADER, RunReport, StepRecord, compute_metrics, csv_lines,
                             emit_metrics, emit_svg_plot, emit_trajectory_csv, run_scenario,
                             settle_distance, svg_text)

from conftest import GOLDEN, short_scenario

SVG_NS = "{http://www.w3.org/2000/svg}"


def synthetic_records(e, s):
    """Records along the x axis at arc lengths ``s`` with cross-track ``e``."""
    out = []
    for k, (ek, sk) in enumerate(zip(e, s)):
        out.append(StepRecord(0.02 * k, sk, 0.0, 0.0, sk, 0.0, 0.0, sk + 1, 0.0, 1, 0.0, 0.0,
                              float(ek), 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, False, 0,
                              wheel_x=float(sk), wheel_y=0.0))
    return out


# ------------------------------------------------------------------ metrics

def test_metrics_all_zero():
    s = np.linspace(0, 3, 301)
    m = compute_metrics(synthetic_records(np.zeros_like(s), s))
    assert m["cross_track_rms"] == 0 and m["max_cross_track"] == 0
    assert m["settle_distance"] == 0


def test_metrics_constant_offset_never_settles():
    s = np.linspace(0, 3, 301)
    m = compute_metrics(synthetic_records(np.full_like(s, 0.1), s))
    assert m["cross_track_rms"] == pytest.approx(0.1)
    assert m["settle_distance"] == pytest.approx(3.0)


def test_metrics_decaying_exponential():
    length, total, e0 = 0.8, 6.0, 0.3
    s = np.linspace(0, total, 6001)
    e = e0 * np.exp(-s / length)
    m = compute_metrics(synthetic_records(e, s))
    analytic = math.sqrt(e0 ** 2 * length / (2 * total) * (1 - math.exp(-2 * total / length)))
    assert m["cross_track_rms"] == pytest.approx(analytic, rel=0.01)
    # |e| drops below 0.03 at s = L ln 10
    assert m["settle_distance"] == pytest.approx(length * math.log(10), abs=2e-3)


def test_settle_requires_a_full_metre():
    s = np.linspace(0, 4, 401)
    e = np.where((s > 1) & (s < 1.5), 0.0, 0.1)
    e[s >= 2.0] = 0.0
    assert settle_distance(e, s) == pytest.approx(2.0)
    e[s >= 3.5] = 0.1  # last inside stretch is only 1.5 m long, still enough
    assert settle_distance(e, s) == pytest.approx(2.0)
    e[s >= 2.9] = 0.1
    assert settle_distance(e, s) == pytest.approx(4.0)


def test_metrics_empty_raises():
    with pytest.raises(ValueError):
        compute_metrics([])


# ------------------------------------------------------------------ files

def test_csv_header_only(tmp_path):
    emit_trajectory_csv(RunReport(), tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == CSV_HEADER + "\n"


def test_csv_three_steps(tmp_path):
    rep = RunReport(records=synthetic_records([0.0, -0.0, 0.1], [0, 0.01, 0.02]))
    emit_trajectory_csv(rep, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0] == CSV_HEADER
    fields = lines[2].split(",")
    assert len(fields) == 21
    assert fields[12] == "0.000000" and fields[19] == "0" and fields[9] == "1"
    assert all(re.fullmatch(r"-?\d+\.\d{6}", f) for f in fields[:9])


def test_empty_svg_has_axes_only():
    root = ET.fromstring(svg_text(RunReport()))
    assert root.tag == SVG_NS + "svg"
    assert len(root.findall(SVG_NS + "polyline")) == 0
    assert len(root.findall(SVG_NS + "line")) == 2


def test_metrics_file(tmp_path):
    rep = RunReport(records=synthetic_records([0.0, 0.0], [0, 0.01]))
    rep.metrics = compute_metrics(rep.records)
    emit_metrics(rep, tmp_path / "m.txt")
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[0] == "status=ok"
    assert dict(x.split("=") for x in lines)["frames_processed"] == "0"


# ------------------------------------------------------------------ closed loop

def test_no_lane_stops_at_first_frame():
    from lanetow.scenario import parse_scenario
    rep = run_scenario(parse_scenario("[scenario]\nduration = 2\n"))
    assert rep.status == harness.LANE_NOT_FOUND and rep.exit_code == 3
    assert rep.records == []


def test_zero_offset_straight_run():
    cfg = short_scenario(duration=6)
    rep = run_scenario(cfg)
    assert rep.status == harness.OK and len(rep.records) == cfg.steps
    assert rep.metrics["cross_track_rms"] < 0.01
    assert rep.metrics == compute_metrics(rep.records)
    assert rep.metrics["frames_processed"] == cfg.steps // cfg.control_steps_per_frame


def test_run_invariants():
    cfg = short_scenario(duration=6, y=0.2)
    rep = run_scenario(cfg)
    g = cfg.geometry
    vmax = math.hypot(cfg.gains.v_cruise, cfg.gains.omega_max * g.l_v)
    xy = np.array([(r.true_x, r.true_y) for r in rep.records])
    assert np.hypot(*np.diff(xy, axis=0).T).max() <= vmax * cfg.dt + 1e-12
    # logged wheel speeds come from a twist with no main-wheel slip
    for r in rep.records[::25]:
        assert r.v_w in (0.0, cfg.gains.v_cruise)
        assert abs(r.omega_w) <= cfg.gains.omega_max


def test_slip_violation_is_reported(monkeypatch):
    monkeypatch.setattr(harness, "slip_check", lambda c, g: 1.0)
    rep = run_scenario(short_scenario(duration=1))
    assert rep.status == harness.INVARIANT_VIOLATION and rep.exit_code == 4
    assert "slip" in rep.message


def test_run_is_deterministic():
    a = run_scenario(short_scenario(duration=2, y=0.1))
    b = run_scenario(short_scenario(duration=2, y=0.1))
    assert csv_lines(a) == csv_lines(b) and svg_text(a) == svg_text(b)


def test_straight_svg_has_four_polylines():
    rep = run_scenario(short_scenario(duration=2))
    root = ET.fromstring(svg_text(rep))
    classes = [p.get("class") for p in root.findall(SVG_NS + "polyline")]
    assert classes == ["lane", "desired", "true", "estimated"]


def test_golden_reference_run(builtin_run, tmp_path):
    _, rep = builtin_run("straight_then_corner")
    emit_trajectory_csv(rep, tmp_path / "t.csv")
    emit_svg_plot(rep, tmp_path / "t.svg")
    for name, ext in (("t.csv", "csv"), ("t.svg", "svg")):
        with open(os.path.join(GOLDEN, f"straight_then_corner.{ext}"), "rb") as f:
            assert (tmp_path / name).read_bytes() == f.read()
