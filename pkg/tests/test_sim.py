from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sixwheel.geo import Pose2D, ReferencePath
from sixwheel.scenario import CameraConfig, Obstacle, RobotParams, Scenario, load_preset
from sixwheel.sim import (CSV_HEADER, Simulation, WorldState, analytic_vanishing_point, lane_line_columns,
                          ray_circle_ranges, render_lane_camera, run_scenario, sense_gps, sense_lidar,
                          step_kinematics, summarize, true_lateral)
from sixwheel.vision import LaneDetector

ROBOT = RobotParams(track_width=0.5)


def fine_integrate(pose, vl, vr, track, T, h=1e-5):
    """Semi-implicit small-step integration of the unicycle ODE."""
    x, y, th = pose.x, pose.y, math.radians(pose.heading)
    v, w = 0.5 * (vl + vr), (vr - vl) / track
    n = int(round(T / h))
    for _ in range(n):
        mid = th + 0.5 * w * h
        x += v * h * math.cos(mid)
        y += v * h * math.sin(mid)
        th += w * h
    return x, y, math.degrees(th)


def ray_march(origin, bearing, centers, radii, max_range, step=1e-4):
    t = np.arange(0.0, max_range + step, step)
    px = origin[0] + t * math.cos(bearing)
    py = origin[1] + t * math.sin(bearing)
    inside = np.zeros_like(t, dtype=bool)
    for (cx, cy), r in zip(centers, radii):
        inside |= (px - cx) ** 2 + (py - cy) ** 2 <= r * r
    hit = np.flatnonzero(inside)
    return float(t[hit[0]]) if len(hit) else max_range


def scenario_on(path, **kw) -> Scenario:
    return Scenario(path=path, **kw)


# ------------------------------------------------------------------ kinematics

def test_straight_step():
    s = step_kinematics(WorldState(Pose2D(0, 0, 0)), 1.0, 1.0, ROBOT, 1.0)
    assert (s.pose.x, s.pose.y, s.pose.heading) == (1.0, 0.0, 0.0)
    assert s.t == 1.0 and s.tick == 1


def test_pivot_about_left_wheel_matches_fine_integration():
    s = step_kinematics(WorldState(Pose2D(0, 0, 0)), 0.0, 1.0, ROBOT, 0.3)
    x, y, h = fine_integrate(Pose2D(0, 0, 0), 0.0, 1.0, 0.5, 0.3)
    assert s.pose.x == pytest.approx(x, abs=1e-6) and s.pose.y == pytest.approx(y, abs=1e-6)
    assert s.pose.heading == pytest.approx(h, abs=1e-6)
    # omega = 2 rad/s, turning radius v / omega = 0.25 about the left wheel at (0, 0.25)
    assert math.hypot(s.pose.x, s.pose.y - 0.25) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("vl,vr", [(0.0, 1.0), (0.3, 0.9), (1.2, 0.4), (0.5, 0.51)])
def test_circle_closure(vl, vr):
    omega = (vr - vl) / ROBOT.track_width
    T = 2 * math.pi / abs(omega)
    n = 1000
    s = WorldState(Pose2D(1.5, -2.0, 33.0))
    for _ in range(n):
        s = step_kinematics(s, vl, vr, ROBOT, T / n)
    assert math.hypot(s.pose.x - 1.5, s.pose.y + 2.0) < 1e-9


@settings(max_examples=200)
@given(st.floats(0, 1.6), st.floats(0, 1.6), st.floats(-180, 180), st.floats(0.01, 0.2))
def test_step_displacement_is_the_arc_chord(vl, vr, h, dt):
    s0 = WorldState(Pose2D(0.0, 0.0, h))
    s1 = step_kinematics(s0, vl, vr, ROBOT, dt)
    v, w = 0.5 * (vl + vr), (vr - vl) / ROBOT.track_width
    chord = v * dt if abs(w) <= 1e-9 else abs(2 * v / w * math.sin(w * dt / 2))
    d = math.hypot(s1.pose.x, s1.pose.y)
    assert d == pytest.approx(chord, abs=1e-9)
    assert d <= 1.6 * dt + 1e-12
    assert -180.0 < s1.pose.heading <= 180.0


# ------------------------------------------------------------------ sensors

STRAIGHT = ReferencePath([[0, 0], [50, 0]])


def test_gps_noiseless_and_dropout():
    sc = scenario_on(STRAIGHT, sigma_gps=0.0, sigma_heading=0.0, gps_dropouts=[[1.0, 2.0]])
    rng = np.random.default_rng(0)
    st0 = WorldState(Pose2D(3.0, 1.0, 12.0), t=0.5)
    assert sense_gps(st0, sc, rng) == Pose2D(3.0, 1.0, 12.0)
    assert sense_gps(dataclasses.replace(st0, t=1.5), sc, rng) is None
    assert sense_gps(dataclasses.replace(st0, t=2.0), sc, rng) is not None


def test_gps_noise_level():
    sc = scenario_on(STRAIGHT, sigma_gps=0.01)
    rng = np.random.default_rng(7)
    s = WorldState(Pose2D(0.0, 0.0, 0.0))
    xs = np.array([sense_gps(s, sc, rng).x for _ in range(10_000)])
    assert 0.009 <= xs.std() <= 0.011


def test_lidar_no_obstacles():
    scan = sense_lidar(WorldState(Pose2D(0, 0, 0)), scenario_on(STRAIGHT))
    assert np.all(scan.ranges == scan.max_range)


def test_lidar_dead_ahead():
    sc = scenario_on(STRAIGHT, obstacles=[Obstacle((5.0, 0.0), 0.5)])
    scan = sense_lidar(WorldState(Pose2D(0, 0, 0)), sc, n_beams=181, fov=180.0)
    assert scan.ranges[90] == pytest.approx(4.5, abs=1e-12)
    turned = sense_lidar(WorldState(Pose2D(0, 0, 90.0)), sc, n_beams=181, fov=180.0)
    assert turned.ranges[0] == pytest.approx(4.5, abs=1e-12)


def test_lidar_tangent_beam():
    # the beam along +x grazes a circle of radius 1 centred at (4, 1)
    r = ray_circle_ranges((0.0, 0.0), np.array([0.0]), np.array([[4.0, 1.0]]), np.array([1.0]), 20.0)
    assert r[0] == pytest.approx(4.0, abs=1e-6)


def test_lidar_obstacle_time_window():
    sc = scenario_on(STRAIGHT, obstacles=[Obstacle((5.0, 0.0), 0.5, 0.0, 1.0)])
    assert np.all(sense_lidar(WorldState(Pose2D(0, 0, 0), t=1.0), sc).ranges == 20.0)


def test_lidar_matches_ray_march():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        centers = rng.uniform(-6, 6, (m, 2))
        radii = rng.uniform(0.1, 1.0, m)
        origin = rng.uniform(-1, 1, 2)
        if np.any(np.hypot(*(centers - origin).T) <= radii):
            continue  # the scanner never sits inside an obstacle
        # aim at a random obstacle so most rays hit something
        k = int(rng.integers(m))
        aim = math.atan2(*(centers[k] - origin)[::-1]) + rng.uniform(-0.2, 0.2)
        got = ray_circle_ranges(origin, np.array([aim]), centers, radii, 8.0)[0]
        worst = max(worst, abs(got - ray_march(origin, aim, centers, radii, 8.0)))
    assert worst < 1e-3


# ------------------------------------------------------------------ camera

CAM = CameraConfig()


def test_camera_centred_is_symmetric():
    (u0l, sl), (u0r, sr) = lane_line_columns(CAM, 0.0, 0.0)
    assert u0l == u0r == CAM.cx and sl == -sr
    img = render_lane_camera(WorldState(Pose2D(5.0, 0.0, 0.0)), scenario_on(STRAIGHT, camera=CAM))
    est = LaneDetector(focal_px=CAM.focal_px).detect(img)
    assert est.vanishing_point[0] == pytest.approx(CAM.cx, abs=2.0)
    assert est.offsets.heading == pytest.approx(0.0, abs=0.5)


def test_camera_heading_shifts_vanishing_point():
    u, v = analytic_vanishing_point(CAM, 5.0)
    assert u == pytest.approx(CAM.cx - CAM.focal_px * math.tan(math.radians(5.0)), abs=1e-12)
    # robot heading 5 degrees right of the path: the path appears to the left
    img = render_lane_camera(WorldState(Pose2D(5.0, 0.0, -5.0)), scenario_on(STRAIGHT, camera=CAM))
    est = LaneDetector(focal_px=CAM.focal_px).detect(img)
    assert est.vanishing_point[0] == pytest.approx(u, abs=2.0)
    assert est.offsets.heading == pytest.approx(5.0, abs=0.5)


def test_camera_lateral_offset_shifts_lane_centre():
    off = 0.3  # robot right of the path
    bottom = CAM.img_h - 1 - CAM.cy
    cols = [u0 + s * bottom for u0, s in lane_line_columns(CAM, off, 0.0)]
    assert 0.5 * sum(cols) == pytest.approx(CAM.cx - off / CAM.meters_per_pixel, abs=1e-9)
    img = render_lane_camera(WorldState(Pose2D(5.0, -off, 0.0)), scenario_on(STRAIGHT, camera=CAM))
    est = LaneDetector(focal_px=CAM.focal_px, meters_per_pixel=CAM.meters_per_pixel).detect(img)
    assert est.offsets.lateral == pytest.approx(off, abs=0.03)


def test_camera_noise_is_seeded():
    sc = scenario_on(STRAIGHT, camera=CAM)
    s = WorldState(Pose2D(5.0, 0.0, 0.0))
    a = render_lane_camera(s, sc, np.random.default_rng(1))
    b = render_lane_camera(s, sc, np.random.default_rng(1))
    assert np.array_equal(a, b) and a.min() >= 0 and a.max() <= 255
    assert not np.array_equal(a, render_lane_camera(s, sc))


# ------------------------------------------------------------------ closed loop

def test_on_path_equilibrium():
    sc = dataclasses.replace(load_preset("straight"), initial_lateral=0.0)
    lat = run_scenario(sc).column("lat_off")
    assert np.abs(lat).max() < 1e-6


def test_same_seed_same_csv():
    sc = load_preset("obstacle")
    assert run_scenario(sc).to_csv() == run_scenario(sc).to_csv()
    other = run_scenario(sc, seed=8).to_csv()
    assert other != run_scenario(sc).to_csv()


def test_csv_layout():
    log = run_scenario(dataclasses.replace(load_preset("straight"), duration=1.0))
    lines = log.to_csv().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 21
    row = lines[1].split(",")
    assert row[6] == "GPS" and row[10] == ""  # no obstacles in the scenario


def test_log_times_advance_by_dt():
    sc = load_preset("s_curve")
    t = run_scenario(sc).column("t")
    assert np.allclose(np.diff(t), sc.dt, atol=1e-12) and t[0] == pytest.approx(sc.dt)


def test_pose_continuity():
    sc = load_preset("campus_loop")
    log = run_scenario(dataclasses.replace(sc, duration=30.0))
    x, y = log.column("x"), log.column("y")
    assert np.hypot(np.diff(x), np.diff(y)).max() <= sc.robot.v_max * sc.dt + 1e-12


def test_campus_loop_stability():
    sc = load_preset("campus_loop")
    log = run_scenario(sc)
    lat = true_lateral(log, sc.path)
    assert np.abs(lat).max() < 0.5
    assert abs(lat[-1]) < 0.05
    stats = summarize(log, sc.path)
    assert stats["ticks"] == sc.n_ticks and stats["min_obstacle"] is None


def test_vision_carries_gps_dropout():
    sc = load_preset("gps_dropout")
    log = run_scenario(sc)
    t, src = log.column("t"), log.column("src")
    inside = (t > 10.05) & (t < 20.0)
    assert set(src[inside]) == {"VISION"}
    assert src[-1] == "GPS"
    lat = true_lateral(log, sc.path)
    assert np.abs(lat[t > 5.0]).max() < 0.1


def test_no_source_holds_last_offsets():
    sc = dataclasses.replace(load_preset("gps_dropout"), camera=None)
    sim = Simulation(sc)
    while not sim.done:
        sim.step()
    src = sim.log.column("src")
    lat = sim.log.column("lat_off")
    t = sim.log.column("t")
    idx = np.flatnonzero(src == "NONE")
    assert len(idx) > 0 and np.all((t[idx] > 10.0) & (t[idx] <= 20.0 + sc.dt))
    assert np.all(lat[idx] == lat[idx[0] - 1])


def test_obstacle_run_stops_and_resumes():
    sc = load_preset("obstacle")
    log = run_scenario(sc)
    gov, obst = log.column("gov"), log.column("obst")
    stop = int(np.argmax(gov == 0.0))
    assert gov[stop] == 0.0 and obst[stop] > sc.guard.d_stop
    assert np.nanmin(obst) > sc.guard.d_stop
    assert gov[-1] == sc.guard.cruise
