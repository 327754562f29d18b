"""LiDAR obstacle clustering and the forward-speed safety governor."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class LidarScan:
    bearings: np.ndarray  # degrees, scanner frame, strictly increasing
    ranges: np.ndarray    # metres, 0 < r <= max_range
    max_range: float

    def __post_init__(self):
        self.bearings = np.asarray(self.bearings, dtype=float)
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.bearings.shape != self.ranges.shape:
            raise ValueError("bearings and ranges must have the same length")
        if np.any(np.diff(self.bearings) <= 0):
            raise ValueError("bearings must be strictly increasing")
        if np.any(self.ranges <= 0) or np.any(self.ranges > self.max_range):
            raise ValueError("ranges must lie in (0, max_range]")

    @classmethod
    def from_json(cls, beams: Sequence[Sequence[float]], max_range: float) -> "LidarScan":
        arr = np.asarray(beams, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], max_range)

    def to_json(self) -> list:
        return [[float(b), float(r)] for b, r in zip(self.bearings, self.ranges)]


@dataclass
class ClusterSet:
    clusters: list = field(default_factory=list)  # list of (k, 2) arrays
    noise: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))  # -1 for noise


@dataclass(frozen=True)
class GuardConfig:
    eps: float = 0.5
    min_pts: int = 3
    d_stop: float = 1.0
    d_slow: float = 2.5
    cruise: float = 0.8
    accel: float = 0.5
    decel: float = 1.0
    creep: float = 0.05  # floor of the slow-down ramp so the stop is reached in finite time

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 2:
            raise ValueError("need eps > 0 and min_pts >= 2")
        if not 0 < self.d_stop < self.d_slow:
            raise ValueError("need 0 < d_stop < d_slow")
        if self.cruise <= 0 or self.accel <= 0 or self.decel <= 0:
            raise ValueError("cruise, accel and decel must be > 0")
        if not 0 <= self.creep <= self.cruise:
            raise ValueError("creep must lie in [0, cruise]")


def scan_to_points(scan: LidarScan) -> np.ndarray:
    """Cartesian returns; beams at max range carry no return and are dropped."""
    hit = scan.ranges < scan.max_range
    b = np.radians(scan.bearings[hit])
    r = scan.ranges[hit]
    return np.column_stack([r * np.cos(b), r * np.sin(b)])


def dbscan(points, eps: float, min_pts: int) -> ClusterSet:
    """Brute-force DBSCAN over Euclidean closed eps-balls, deterministic in input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return ClusterSet([], pts.copy(), labels)
    diff = pts[:, None, :] - pts[None, :, :]
    adj = np.hypot(diff[..., 0], diff[..., 1]) <= eps
    core = adj.sum(axis=1) >= min_pts
    cluster_id = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster_id
        frontier = [i]
        while frontier:
            j = frontier.pop(0)
            for k in np.flatnonzero(adj[j]):
                if labels[k] == -1:
                    labels[k] = cluster_id
                    if core[k]:
                        frontier.append(k)
        cluster_id += 1
    clusters = [pts[labels == c] for c in range(cluster_id)]
    return ClusterSet(clusters, pts[labels == -1], labels)


def nearest_obstacle(cs: ClusterSet) -> Optional[float]:
    if not cs.clusters:
        return None
    return float(min(np.hypot(c[:, 0], c[:, 1]).min() for c in cs.clusters))


def govern_speed(distance: Optional[float], current: float, cfg: GuardConfig, dt: float) -> float:
    """Rate-limited forward speed given the nearest obstacle distance.

    Returns 0 immediately when the obstacle is inside ``d_stop`` or when
    moving for one more tick would bring it inside. A stopped robot stays
    stopped while the obstacle remains inside ``d_slow``.
    """
    if distance is not None and distance <= cfg.d_stop:
        return 0.0
    if current <= 0.0 and distance is not None and distance < cfg.d_slow:
        # stay stopped until the obstacle leaves the slow-down zone
        return 0.0
    if distance is None or distance >= cfg.d_slow:
        target = cfg.cruise
    else:
        ramp = cfg.cruise * (distance - cfg.d_stop) / (cfg.d_slow - cfg.d_stop)
        target = max(ramp, cfg.creep)
    if target >= current:
        speed = min(current + cfg.accel * dt, target)
    else:
        speed = max(current - cfg.decel * dt, target)
    if abs(speed - target) <= 1e-12:
        speed = target
    if distance is not None and distance - speed * dt <= cfg.d_stop:
        return 0.0
    return speed


def resume_ticks(cfg: GuardConfig, dt: float) -> int:
    return math.ceil(cfg.cruise / (cfg.accel * dt))
