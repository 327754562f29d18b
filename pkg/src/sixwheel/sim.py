"""Fixed-step 2D world: unicycle kinematics, sensor models and the closed loop."""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .balance import KalmanBelief, RockerState, ScalarKalman, balance_tick, pitch_model
from .fuzzy import ControllerConfig, ZeroMembershipError, control_step
from .geo import (NoSourceError, OffsetArbiter, OffsetPair, Pose2D, ReferencePath,
                  nearest_segment, offsets_from_path, wrap_deg)
from .guard import LidarScan, dbscan, govern_speed, nearest_obstacle, scan_to_points
from .scenario import CameraConfig, RobotParams, Scenario
from .vision import BoundaryNotFound, LaneDetector, ParallelLinesError

log = logging.getLogger(__name__)

CSV_HEADER = "t,x,y,heading,lat_off,head_off,src,vl,vr,gov,obst,pitch,pitch_est,arm"


@dataclass(frozen=True)
class WorldState:
    pose: Pose2D
    v_left: float = 0.0
    v_right: float = 0.0
    pitch: float = 0.0
    arm_angle: float = 0.0
    t: float = 0.0
    tick: int = 0


def step_kinematics(state: WorldState, v_left: float, v_right: float,
                    params: RobotParams, dt: float) -> WorldState:
    """Exact-arc unicycle update driven by the middle wheel pair."""
    v = 0.5 * (v_left + v_right)
    omega = (v_right - v_left) / params.track_width
    h = math.radians(state.pose.heading)
    x, y = state.pose.x, state.pose.y
    if abs(omega) > 1e-9:
        h1 = h + omega * dt
        x += v / omega * (math.sin(h1) - math.sin(h))
        y += v / omega * (-math.cos(h1) + math.cos(h))
    else:
        h1 = h
        x += v * dt * math.cos(h)
        y += v * dt * math.sin(h)
    tick = state.tick + 1
    return replace(state, pose=Pose2D(x, y, math.degrees(h1)), v_left=v_left,
                   v_right=v_right, t=tick * dt, tick=tick)


def sense_gps(state: WorldState, scenario: Scenario, rng: np.random.Generator) -> Optional[Pose2D]:
    """Noisy local position fix, or None inside a dropout window."""
    if not scenario.gps_available(state.t):
        return None
    n = rng.standard_normal(3)
    return Pose2D(state.pose.x + scenario.sigma_gps * n[0],
                  state.pose.y + scenario.sigma_gps * n[1],
                  state.pose.heading + scenario.sigma_heading * n[2])


def ray_circle_ranges(origin, bearings_rad: np.ndarray, centers: np.ndarray,
                      radii: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each ray to the nearest circle, capped at ``max_range``."""
    ranges = np.full(len(bearings_rad), max_range, dtype=float)
    if len(centers) == 0:
        return ranges
    d = np.column_stack([np.cos(bearings_rad), np.sin(bearings_rad)])  # (n, 2)
    oc = np.asarray(origin, dtype=float)[None, :] - centers            # (m, 2)
    b = d @ oc.T                                                        # (n, m)
    c = np.sum(oc * oc, axis=1)[None, :] - radii[None, :] ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    near, far = -b - root, -b + root
    t = np.where(near >= 0, near, np.where(far >= 0, far, np.nan))
    t = np.where(disc >= 0, t, np.nan)
    best = np.nanmin(np.where(np.isnan(t), np.inf, t), axis=1)
    return np.minimum(ranges, best)


def sense_lidar(state: WorldState, scenario: Scenario, n_beams: Optional[int] = None,
                fov: Optional[float] = None, max_range: Optional[float] = None) -> LidarScan:
    n_beams = n_beams or scenario.lidar.n_beams
    fov = scenario.lidar.fov if fov is None else fov
    max_range = max_range or scenario.lidar.max_range
    if n_beams < 2:
        raise ValueError("need at least 2 beams")
    bearings = np.linspace(-fov / 2.0, fov / 2.0, n_beams)
    active = [ob for ob in scenario.obstacles if ob.active(state.t)]
    centers = np.array([ob.center for ob in active], dtype=float).reshape(-1, 2)
    radii = np.array([ob.radius for ob in active], dtype=float)
    world = np.radians(bearings + state.pose.heading)
    ranges = ray_circle_ranges((state.pose.x, state.pose.y), world, centers, radii, max_range)
    return LidarScan(bearings, np.maximum(ranges, 1e-9), max_range)


def lane_geometry(pose: Pose2D, path: ReferencePath) -> tuple[float, float]:
    """(lateral right-positive metres, path direction relative to robot heading in degrees)
    for the path segment nearest the pose, treated as an infinite straight line."""
    a, b = nearest_segment(path, pose)
    start, end = (a, b) if path.successor(a) == b else (b, a)
    pa, pb = path.points[start], path.points[end]
    seg = pb - pa
    seg_heading = math.degrees(math.atan2(seg[1], seg[0]))
    u = seg / np.hypot(*seg)
    rel = np.array([pose.x, pose.y]) - pa
    lateral = -(u[0] * rel[1] - u[1] * rel[0])
    return float(lateral), wrap_deg(seg_heading - pose.heading)


def lane_line_columns(cam: CameraConfig, lateral: float, rel_heading_deg: float) -> list:
    """Per boundary line, (u at horizon, du/dv) with u(v) = u0 + slope * (v - cy)."""
    phi = math.radians(rel_heading_deg)
    u_vp = cam.cx - cam.focal_px * math.tan(phi)
    out = []
    for side in (-1.0, 1.0):
        o = lateral + side * cam.lane_width_m / 2.0  # left-normal offset of the boundary
        out.append((u_vp, -o / (cam.cam_height_m * math.cos(phi))))
    return out


def render_lane_camera(state: WorldState, scenario: Scenario,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Synthetic forward camera view of the two lane boundaries around the path."""
    cam = scenario.camera or CameraConfig()
    lateral, rel = lane_geometry(state.pose, scenario.path)
    h, w = cam.img_h, cam.img_w
    img = np.full((h, w), 30.0)
    rows = np.arange(h, dtype=float)[:, None]
    cols = np.arange(w, dtype=float)[None, :]
    ground = rows > cam.cy
    for u0, slope in lane_line_columns(cam, lateral, rel):
        u = u0 + slope * (rows - cam.cy)
        on_line = (cols > u - 1.0) & (cols <= u + 1.0) & ground
        img[on_line] = 255.0
    img[~np.broadcast_to(ground, img.shape)] = 60.0
    if rng is not None and cam.pixel_noise > 0:
        img = img + cam.pixel_noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 255.0)


def analytic_vanishing_point(cam: CameraConfig, rel_heading_deg: float) -> tuple[float, float]:
    return cam.cx - cam.focal_px * math.tan(math.radians(rel_heading_deg)), cam.cy


def initial_pose(scenario: Scenario) -> Pose2D:
    p0 = scenario.path.points[0]
    h = float(scenario.path.headings[0])
    hr = math.radians(h)
    e = scenario.initial_lateral
    return Pose2D(p0[0] + e * math.sin(hr), p0[1] - e * math.cos(hr), h - scenario.initial_heading)


@dataclass
class RunLog:
    rows: list = field(default_factory=list)

    def append(self, row: tuple) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        idx = CSV_HEADER.split(",").index(name)
        if name == "src":
            return np.array([r[idx] for r in self.rows])
        return np.array([np.nan if r[idx] is None else r[idx] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{v:.6f}"


class Simulation:
    """One closed-loop run. Call :meth:`observe` then :meth:`step` per tick."""

    def __init__(self, scenario: Scenario, controller: Optional[ControllerConfig] = None,
                 seed: Optional[int] = None):
        self.scenario = scenario
        self.controller = controller or scenario.controller
        seed = scenario.seed if seed is None else seed
        self.seed = seed
        gps_ss, cam_ss, imu_ss = np.random.SeedSequence(seed).spawn(3)
        self.rng_gps = np.random.default_rng(gps_ss)
        self.rng_cam = np.random.default_rng(cam_ss)
        self.rng_imu = np.random.default_rng(imu_ss)
        self.state = WorldState(initial_pose(scenario))
        self.arbiter = OffsetArbiter()
        self.detector = None
        if scenario.camera is not None:
            cam = scenario.camera
            self.detector = LaneDetector(focal_px=cam.focal_px, meters_per_pixel=cam.meters_per_pixel)
        self.vision: Optional[OffsetPair] = None
        bal = scenario.balance
        self.pitch_model = pitch_model(scenario.dt, bal.q_pitch, bal.q_rate, bal.r)
        self.belief = KalmanBelief([0.0, 0.0], np.diag([1.0, 1.0]))
        self.rocker = RockerState(0.0, bal.max_rate, bal.gain, bal.deadband, tuple(bal.limits))
        sm = scenario.smoother
        self.smoothers = (ScalarKalman(sm.q, sm.r), ScalarKalman(sm.q, sm.r)) if sm.enabled else None
        self.gov = scenario.guard.cruise
        self.last_offsets = OffsetPair(0.0, 0.0)
        self.last_src = "NONE"
        self.last_command = (0.0, 0.0)
        self.log = RunLog()
        self._observed: Optional[OffsetPair] = None

    @property
    def done(self) -> bool:
        return self.state.tick >= self.scenario.n_ticks

    def observe(self) -> OffsetPair:
        """Sense and arbitrate the offsets used for the coming tick."""
        if self._observed is not None:
            return self._observed
        sc, st = self.scenario, self.state
        fix = sense_gps(st, sc, self.rng_gps)
        gps = offsets_from_path(sc.path, fix) if fix is not None else None
        if self.detector is not None and st.tick % sc.camera.every == 0:
            img = render_lane_camera(st, sc, self.rng_cam)
            try:
                self.vision = self.detector.detect(img).offsets
            except (BoundaryNotFound, ParallelLinesError):
                self.vision = None
        try:
            off = self.arbiter.select(gps, self.vision)
            self.last_src = off.source.value
        except NoSourceError:
            log.debug("t=%.2f: no offset source, holding last offsets", st.t)
            off = self.last_offsets
            self.last_src = "NONE"
        self.last_offsets = off
        self._observed = off
        return off

    def step(self, controller: Optional[ControllerConfig] = None) -> WorldState:
        sc = self.scenario
        cfg = controller or self.controller
        off = self.observe()
        self._observed = None
        try:
            vl, vr = control_step(off, cfg)
        except ZeroMembershipError:
            vl, vr = self.last_command
        self.last_command = (vl, vr)
        if self.smoothers is not None:
            vl = self.smoothers[0].update(vl)
            vr = self.smoothers[1].update(vr)

        dist = None
        if sc.obstacles:
            scan = sense_lidar(self.state, sc)
            g = sc.guard
            dist = nearest_obstacle(dbscan(scan_to_points(scan), g.eps, g.min_pts))
        self.gov = govern_speed(dist, self.gov, sc.guard, sc.dt)
        scale = self.gov / sc.guard.cruise
        vmax = sc.robot.v_max
        vl = min(max(vl * scale, 0.0), vmax)
        vr = min(max(vr * scale, 0.0), vmax)

        st = step_kinematics(self.state, vl, vr, sc.robot, sc.dt)
        pitch = sc.slope_at(st.pose.x) + self.rocker.arm_angle
        est = pitch
        if sc.balance.active:
            meas = pitch + sc.balance.sigma_imu * float(self.rng_imu.standard_normal())
            self.belief, self.rocker, _ = balance_tick(meas, self.belief, self.rocker, sc.dt, self.pitch_model)
            est = float(self.belief.x[0])
        self.state = replace(st, pitch=pitch, arm_angle=self.rocker.arm_angle)
        p = self.state.pose
        self.log.append((self.state.t, p.x, p.y, p.heading, off.lateral, off.heading, self.last_src,
                         vl, vr, self.gov, dist, pitch, est, self.rocker.arm_angle))
        return self.state


def run_scenario(scenario: Scenario, controller: Optional[ControllerConfig] = None,
                 seed: Optional[int] = None) -> RunLog:
    sim = Simulation(scenario, controller, seed)
    while not sim.done:
        sim.step()
    return sim.log


def integrated_square_error(log: RunLog, dt: float) -> float:
    """Sum of squared lateral offsets (as seen by the controller) times dt."""
    lat = log.column("lat_off")
    return float(np.sum(lat * lat) * dt)


def true_lateral(log: RunLog, path: ReferencePath) -> np.ndarray:
    xs, ys, hs = log.column("x"), log.column("y"), log.column("heading")
    return np.array([offsets_from_path(path, Pose2D(x, y, h)).lateral for x, y, h in zip(xs, ys, hs)])


def summarize(log: RunLog, path: Optional[ReferencePath] = None) -> dict:
    lat = true_lateral(log, path) if path is not None else log.column("lat_off")
    obst = log.column("obst")
    pitch = log.column("pitch")
    return {
        "ticks": len(log.rows),
        "max_lateral": float(np.max(np.abs(lat))) if len(lat) else 0.0,
        "final_lateral": float(abs(lat[-1])) if len(lat) else 0.0,
        "min_obstacle": float(np.nanmin(obst)) if np.any(~np.isnan(obst)) else None,
        "max_pitch": float(np.max(np.abs(pitch))) if len(pitch) else 0.0,
    }
