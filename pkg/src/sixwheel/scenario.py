"""Scenario files: JSON schema, validation with field paths, and presets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .fuzzy import ControllerConfig, MembershipTriple
from .geo import ReferencePath
from .guard import GuardConfig


class ScenarioError(ValueError):
    """Malformed scenario; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.field = path


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float
    t_start: float = -math.inf
    t_end: float = math.inf

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class CameraConfig:
    focal_px: float = 240.0
    img_w: int = 160
    img_h: int = 120
    cam_height_m: float = 1.0
    lane_width_m: float = 2.0
    every: int = 5
    pixel_noise: float = 5.0

    @property
    def cx(self) -> float:
        return self.img_w / 2.0

    @property
    def cy(self) -> float:
        return self.img_h / 2.0

    @property
    def meters_per_pixel(self) -> float:
        """Lateral ground distance per pixel along the bottom image row."""
        return self.cam_height_m / (self.img_h - 1 - self.cy)


@dataclass(frozen=True)
class RobotParams:
    track_width: float = 0.5
    v_max: float = 1.6
    load_mass: float = 0.0


@dataclass(frozen=True)
class LidarConfig:
    n_beams: int = 181
    fov: float = 180.0
    max_range: float = 20.0


@dataclass(frozen=True)
class BalanceConfig:
    active: bool = True
    max_rate: float = 15.0
    gain: float = 1.0
    deadband: float = 0.5
    limits: tuple = (-20.0, 20.0)
    q_pitch: float = 1e-4
    q_rate: float = 1e-3
    r: float = 0.25
    sigma_imu: float = 0.5


@dataclass(frozen=True)
class SmootherConfig:
    enabled: bool = True
    q: float = 0.05
    r: float = 0.01


@dataclass(frozen=True)
class TunerConfig:
    alpha: float = 0.3
    gamma: float = 0.9
    epsilon: float = 0.2
    epsilon_decay: float = 0.99
    delta_x: float = 0.5
    delta_theta: float = 0.05
    reward_gain: float = 1.0
    n_lat_bins: int = 5
    n_head_bins: int = 5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.delta_x <= 0 or self.delta_theta <= 0:
            raise ValueError("deltas must be > 0")
        if self.n_lat_bins < 1 or self.n_head_bins < 1:
            raise ValueError("bin counts must be >= 1")

    @property
    def n_states(self) -> int:
        return self.n_lat_bins * self.n_head_bins


@dataclass
class Scenario:
    path: ReferencePath
    dt: float = 0.05
    duration: float = 60.0
    seed: int = 0
    name: str = "scenario"
    obstacles: list = field(default_factory=list)
    slope_profile: list = field(default_factory=list)  # [[x, pitch_deg], ...]
    gps_dropouts: list = field(default_factory=list)   # [[t_start, t_end], ...]
    sigma_gps: float = 0.01
    sigma_heading: float = 0.5
    camera: Optional[CameraConfig] = None
    initial_lateral: float = 0.0
    initial_heading: float = 0.0
    robot: RobotParams = RobotParams()
    controller: ControllerConfig = ControllerConfig()
    guard: GuardConfig = GuardConfig()
    lidar: LidarConfig = LidarConfig()
    balance: BalanceConfig = BalanceConfig()
    smoother: SmootherConfig = SmootherConfig()
    tuner: TunerConfig = TunerConfig()

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def slope_at(self, x: float) -> float:
        if not self.slope_profile:
            return 0.0
        xs, ps = zip(*self.slope_profile)
        return float(np.interp(x, xs, ps))

    def gps_available(self, t: float) -> bool:
        return not any(a <= t < b for a, b in self.gps_dropouts)


# ---------------------------------------------------------------- parsing

def _num(d: dict, key: str, where: str, default=None, *, positive=False, nonneg=False, integer=False):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{where}.{key}", "required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"{where}.{key}", f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ScenarioError(f"{where}.{key}", f"expected an integer, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(f"{where}.{key}", f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ScenarioError(f"{where}.{key}", f"must be >= 0, got {v!r}")
    return int(v) if integer else float(v)


def _section(d: dict, key: str, where: str) -> dict:
    v = d.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ScenarioError(f"{where}.{key}", "expected an object")
    return v


def _build(cls, data: dict, where: str, **extra):
    """Construct a config dataclass, turning its validation errors into field-path errors."""
    allowed = set(cls.__dataclass_fields__)
    for k in data:
        if k not in allowed:
            raise ScenarioError(f"{where}.{k}", "unknown field")
    kw = dict(data)
    kw.update(extra)
    for k, v in kw.items():
        if isinstance(v, list) and k == "limits":
            kw[k] = tuple(v)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(where, str(exc)) from exc


def _pairs(d: dict, key: str, where: str) -> list:
    v = d.get(key, [])
    if not isinstance(v, list):
        raise ScenarioError(f"{where}.{key}", "expected a list")
    out = []
    for i, item in enumerate(v):
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in item)):
            raise ScenarioError(f"{where}.{key}[{i}]", "expected a pair of numbers")
        out.append([float(item[0]), float(item[1])])
    return out


def scenario_from_json(data: dict, base_dir: Optional[Path] = None) -> Scenario:
    w = "scenario"
    if not isinstance(data, dict):
        raise ScenarioError(w, "expected a JSON object")
    known = set(Scenario.__dataclass_fields__) | {"initial", "path"}
    known -= {"initial_lateral", "initial_heading"}
    for k in data:
        if k not in known:
            raise ScenarioError(f"{w}.{k}", "unknown field")

    raw_path = data.get("path")
    if raw_path is None:
        raise ScenarioError(f"{w}.path", "required field missing")
    if isinstance(raw_path, str):
        p = Path(raw_path)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        try:
            raw_path = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ScenarioError(f"{w}.path", f"cannot read {p}: {exc}") from exc
    if not isinstance(raw_path, dict):
        raise ScenarioError(f"{w}.path", "expected an object or a file name")
    try:
        path = ReferencePath.from_json(raw_path)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{w}.path", str(exc)) from exc

    dt = _num(data, "dt", w, 0.05, positive=True)
    if dt > 0.2:
        raise ScenarioError(f"{w}.dt", f"must lie in (0, 0.2], got {dt}")
    duration = _num(data, "duration", w, 60.0, positive=True)

    obstacles = []
    raw_obs = data.get("obstacles", [])
    if not isinstance(raw_obs, list):
        raise ScenarioError(f"{w}.obstacles", "expected a list")
    for i, ob in enumerate(raw_obs):
        ow = f"{w}.obstacles[{i}]"
        if not isinstance(ob, dict):
            raise ScenarioError(ow, "expected an object")
        c = ob.get("center")
        if not isinstance(c, list) or len(c) != 2:
            raise ScenarioError(f"{ow}.center", "expected [x, y]")
        obstacles.append(Obstacle((float(c[0]), float(c[1])), _num(ob, "radius", ow, positive=True),
                                  _num(ob, "t_start", ow, -math.inf), _num(ob, "t_end", ow, math.inf)))

    slope = _pairs(data, "slope_profile", w)
    if any(b[0] <= a[0] for a, b in zip(slope, slope[1:])):
        raise ScenarioError(f"{w}.slope_profile", "x breakpoints must be strictly increasing")
    dropouts = _pairs(data, "gps_dropouts", w)
    for i, (a, b) in enumerate(dropouts):
        if b <= a:
            raise ScenarioError(f"{w}.gps_dropouts[{i}]", "end must be after start")

    camera = None
    if data.get("camera") is not None:
        camera = _build(CameraConfig, _section(data, "camera", w), f"{w}.camera")
        if camera.focal_px <= 0 or camera.cam_height_m <= 0 or camera.lane_width_m <= 0:
            raise ScenarioError(f"{w}.camera", "focal_px, cam_height_m and lane_width_m must be > 0")
        if camera.img_w < 16 or camera.img_h < 16 or camera.every < 1:
            raise ScenarioError(f"{w}.camera", "image must be at least 16x16 and every >= 1")

    init = _section(data, "initial", w)
    robot = _build(RobotParams, _section(data, "robot", w), f"{w}.robot")
    if robot.track_width <= 0 or robot.v_max <= 0:
        raise ScenarioError(f"{w}.robot", "track_width and v_max must be > 0")
    if robot.load_mass > 8.0:
        raise ScenarioError(f"{w}.robot.load_mass", "cargo must not exceed 8 kg")

    ctrl_raw = dict(_section(data, "controller", w))
    ctrl_raw.setdefault("v_max", robot.v_max)
    for key in ("x_params", "theta_params", "v_params"):
        if key in ctrl_raw:
            try:
                v = ctrl_raw[key]
                ctrl_raw[key] = MembershipTriple(*v) if isinstance(v, list) else MembershipTriple(**v)
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{w}.controller.{key}", str(exc)) from exc
    controller = _build(ControllerConfig, ctrl_raw, f"{w}.controller")

    return Scenario(
        path=path, dt=dt, duration=duration,
        seed=_num(data, "seed", w, 0, integer=True, nonneg=True),
        name=str(data.get("name", "scenario")),
        obstacles=obstacles, slope_profile=slope, gps_dropouts=dropouts,
        sigma_gps=_num(data, "sigma_gps", w, 0.01, nonneg=True),
        sigma_heading=_num(data, "sigma_heading", w, 0.5, nonneg=True),
        camera=camera,
        initial_lateral=_num(init, "lateral", f"{w}.initial", 0.0),
        initial_heading=_num(init, "heading", f"{w}.initial", 0.0),
        robot=robot, controller=controller,
        guard=_build(GuardConfig, _section(data, "guard", w), f"{w}.guard"),
        lidar=_build(LidarConfig, _section(data, "lidar", w), f"{w}.lidar"),
        balance=_build(BalanceConfig, _section(data, "balance", w), f"{w}.balance"),
        smoother=_build(SmootherConfig, _section(data, "smoother", w), f"{w}.smoother"),
        tuner=_build(TunerConfig, _section(data, "tuner", w), f"{w}.tuner"),
    )


def load_scenario(path) -> Scenario:
    """Load a scenario file. Raises OSError on I/O problems, ScenarioError on bad content."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"invalid JSON: {exc}") from exc
    return scenario_from_json(data, p.parent)


PRESETS = ("straight", "s_curve", "campus_loop", "obstacle", "slope", "gps_dropout")


def preset_path(name: str) -> Path:
    return Path(str(resources.files("sixwheel") / "scenarios" / f"{name}.json"))


def load_preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return load_scenario(preset_path(name))
