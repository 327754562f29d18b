"""Local coordinates, reference paths and path-relative offsets.

Offsets use a right-of-travel-positive convention for both the lateral and
the heading component, so a positive lateral offset means the robot sits to
the right of the path and a positive heading offset means the robot points
clockwise of the path direction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
MIN_SEPARATION_M = 1e-9


class InvalidFixError(ValueError):
    pass


class NoSourceError(RuntimeError):
    """Neither GPS nor vision offsets are available for this tick."""


def wrap_deg(angle: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    a = math.fmod(angle + 180.0, 360.0)
    if a <= 0.0:
        a += 360.0
    return a - 180.0


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_deg(self.heading))


@dataclass(frozen=True)
class GeodeticFix:
    lat: float
    lon: float
    heading: float = 0.0
    valid: bool = True

    def __post_init__(self):
        if abs(self.lat) > 90.0 or abs(self.lon) > 180.0:
            raise ValueError(f"lat/lon out of range: ({self.lat}, {self.lon})")


class Source(str, Enum):
    GPS = "GPS"
    VISION = "VISION"


@dataclass(frozen=True)
class OffsetPair:
    lateral: float
    heading: float
    source: Source = Source.GPS

    def __post_init__(self):
        if not math.isfinite(self.lateral):
            raise ValueError("lateral offset must be finite")
        object.__setattr__(self, "heading", wrap_deg(self.heading))


def latlon_to_local(fix: GeodeticFix, origin: GeodeticFix) -> Pose2D:
    """Equirectangular projection of ``fix`` around ``origin`` (east, north)."""
    if not origin.valid:
        raise InvalidFixError("origin fix is not valid")
    if not fix.valid:
        raise InvalidFixError("fix is not valid")
    if abs(fix.lat - origin.lat) >= 1.0:
        raise ValueError("fix too far from origin for a local tangent plane")
    k = EARTH_RADIUS_M * math.pi / 180.0
    x = k * (fix.lon - origin.lon) * math.cos(math.radians(origin.lat))
    y = k * (fix.lat - origin.lat)
    return Pose2D(x, y, fix.heading)


def local_to_latlon(pose: Pose2D, origin: GeodeticFix) -> GeodeticFix:
    """Inverse of :func:`latlon_to_local`."""
    k = EARTH_RADIUS_M * math.pi / 180.0
    lat = origin.lat + pose.y / k
    lon = origin.lon + pose.x / (k * math.cos(math.radians(origin.lat)))
    return GeodeticFix(lat, lon, pose.heading, True)


@dataclass
class ReferencePath:
    """Waypoint polyline. Headings are always recomputed from the geometry."""

    points: np.ndarray
    closed: bool = False
    headings: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise ValueError("path points must be a list of (x, y[, heading])")
        pts = pts[:, :2].copy()
        if len(pts) < 2:
            raise ValueError("path needs at least 2 points")
        nxt = np.roll(pts, -1, axis=0)
        seg = nxt - pts
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        check = lengths if self.closed else lengths[:-1]
        if np.any(check <= MIN_SEPARATION_M):
            raise ValueError("consecutive path points must not coincide")
        headings = np.degrees(np.arctan2(seg[:, 1], seg[:, 0]))
        if not self.closed:
            # the last point has no outgoing segment; reuse the incoming one
            headings[-1] = headings[-2]
        self.points = pts
        self.headings = np.array([wrap_deg(h) for h in headings])

    def __len__(self) -> int:
        return len(self.points)

    def successor(self, i: int) -> Optional[int]:
        if i + 1 < len(self):
            return i + 1
        return 0 if self.closed else None

    def predecessor(self, i: int) -> Optional[int]:
        if i > 0:
            return i - 1
        return len(self) - 1 if self.closed else None

    def mirrored(self) -> "ReferencePath":
        """Reflection across the x axis."""
        return ReferencePath(self.points * np.array([1.0, -1.0]), self.closed)

    @classmethod
    def from_json(cls, data: dict) -> "ReferencePath":
        if "points_geodetic" in data:
            lat0, lon0 = data["origin"]
            origin = GeodeticFix(lat0, lon0)
            pts = [latlon_to_local(GeodeticFix(lat, lon), origin) for lat, lon in data["points_geodetic"]]
            return cls(np.array([[p.x, p.y] for p in pts]), bool(data.get("closed", False)))
        return cls(np.asarray(data["points"], dtype=float), bool(data.get("closed", False)))

    @classmethod
    def load(cls, path) -> "ReferencePath":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {"closed": self.closed, "points": self.points.tolist()}


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(a + t * ab - p)))


def nearest_segment(path: ReferencePath, pose: Pose2D) -> tuple[int, int]:
    """Nearest waypoint A and the neighbour B whose segment lies closer to the pose."""
    p = np.array([pose.x, pose.y])
    d = np.hypot(path.points[:, 0] - p[0], path.points[:, 1] - p[1])
    a = int(np.argmin(d))
    succ, pred = path.successor(a), path.predecessor(a)
    if succ is None:
        return a, pred
    if pred is None:
        return a, succ
    ds = _segment_distance(p, path.points[a], path.points[succ])
    dp = _segment_distance(p, path.points[pred], path.points[a])
    return (a, succ) if ds <= dp else (a, pred)


def offsets_from_path(path: ReferencePath, pose: Pose2D) -> OffsetPair:
    a, b = nearest_segment(path, pose)
    # orient the segment along the direction of travel
    start, end = (a, b) if path.successor(a) == b else (b, a)
    pa, pb = path.points[start], path.points[end]
    p = np.array([pose.x, pose.y])
    ab = pb - pa
    t = min(1.0, max(0.0, float(np.dot(p - pa, ab) / np.dot(ab, ab))))
    foot = pa + t * ab
    dist = float(np.hypot(*(p - foot)))
    cross = ab[0] * (p[1] - pa[1]) - ab[1] * (p[0] - pa[0])
    lateral = -dist if cross > 0 else dist
    if dist == 0.0:
        lateral = 0.0
    heading = -wrap_deg(pose.heading - float(path.headings[a]))
    return OffsetPair(lateral, heading, Source.GPS)


class OffsetArbiter:
    """GPS-first source selection with a hold-off before returning to GPS.

    After a GPS dropout the vision source stays in control until GPS has been
    continuously available for ``hold_ticks`` ticks.
    """

    def __init__(self, hold_ticks: int = 3):
        self.hold_ticks = hold_ticks
        self.current: Optional[Source] = None
        self._gps_streak = hold_ticks

    def select(self, gps: Optional[OffsetPair], vision: Optional[OffsetPair]) -> OffsetPair:
        if gps is None and vision is None:
            self._gps_streak = 0
            raise NoSourceError("no GPS or vision offsets this tick")
        self._gps_streak = self._gps_streak + 1 if gps is not None else 0
        if gps is None:
            self.current = Source.VISION
        elif vision is None or self.current is None or self._gps_streak >= self.hold_ticks:
            self.current = Source.GPS
        return gps if self.current is Source.GPS else vision


def select_offset_source(gps: Optional[OffsetPair], vision: Optional[OffsetPair],
                         arbiter: Optional[OffsetArbiter] = None) -> OffsetPair:
    """Stateless convenience wrapper; pass an arbiter to get hysteresis."""
    return (arbiter or OffsetArbiter()).select(gps, vision)

