"""Lane boundary detection: Canny edges, Hough lines and vanishing-point offsets.

Images are 2-D float arrays indexed ``img[row, col]``; pixel coordinates
``(u, v)`` are (column, row) with the pixel centre at the integer index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .geo import OffsetPair, Source


class DimensionError(ValueError):
    pass


class BoundaryNotFound(LookupError):
    pass


class ParallelLinesError(ValueError):
    pass


@dataclass(frozen=True)
class CannyParams:
    sigma: float = 1.0
    kernel_size: int = 5
    low_threshold: float = 40.0
    high_threshold: float = 100.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 3")
        if not 0 < self.low_threshold < self.high_threshold:
            raise ValueError("need 0 < low_threshold < high_threshold")


@dataclass(frozen=True)
class LineRT:
    rho: float
    theta: float  # degrees in [0, 180)
    votes: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta < 180.0:
            raise ValueError(f"theta {self.theta} outside [0, 180)")

    def u_at(self, v: float) -> float:
        """Column where the line crosses row ``v``."""
        t = math.radians(self.theta)
        c = math.cos(t)
        if abs(c) < 1e-12:
            return math.inf
        return (self.rho - v * math.sin(t)) / c


@dataclass(frozen=True)
class GradientField:
    magnitude: np.ndarray
    angle: np.ndarray  # degrees in (-180, 180]


def check_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2:
        raise DimensionError("gray images must be 2-D")
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise DimensionError("gray images must be at least 3x3")
    return arr


def gaussian_kernel(sigma: float, kernel_size: int) -> np.ndarray:
    r = kernel_size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x ** 2 + y ** 2) / (2.0 * sigma ** 2)) / (2.0 * math.pi * sigma)
    return k / k.sum()


def _correlate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = kernel.shape[0] // 2
    padded = np.pad(img, r, mode="edge")
    h, w = img.shape
    out = np.zeros_like(img, dtype=float)
    for dy in range(kernel.shape[0]):
        for dx in range(kernel.shape[1]):
            k = kernel[dy, dx]
            if k != 0.0:
                out += k * padded[dy:dy + h, dx:dx + w]
    return out


def gaussian_blur(img, sigma: float, kernel_size: int) -> np.ndarray:
    arr = check_image(img)
    if sigma <= 0 or kernel_size < 3 or kernel_size % 2 == 0:
        raise ValueError("need sigma > 0 and an odd kernel_size >= 3")
    if kernel_size > min(arr.shape):
        raise DimensionError(f"kernel {kernel_size} exceeds image size {arr.shape}")
    return np.clip(_correlate(arr, gaussian_kernel(sigma, kernel_size)), 0.0, 255.0)


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=float)


def gradient_field(img) -> GradientField:
    arr = check_image(img)
    gx = _correlate(arr, SOBEL_X)
    gy = _correlate(arr, SOBEL_Y)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx))
    ang[ang <= -180.0] = 180.0
    return GradientField(mag, ang)


# neighbour offsets (drow, dcol) along each quantized gradient direction
_NMS_OFFSETS = {0: (0, 1), 45: (1, 1), 90: (1, 0), 135: (1, -1)}


def quantize_direction(angle: np.ndarray) -> np.ndarray:
    a = np.mod(angle, 180.0)
    q = (np.floor((a + 22.5) / 45.0).astype(int) % 4) * 45
    return q


def non_maximum_suppression(grad: GradientField) -> np.ndarray:
    """Thin the gradient magnitude to ridge pixels along the quantized direction.

    A pixel survives when it is >= its forward neighbour and > its backward
    neighbour; the asymmetric tie rule keeps plateaus of even width one pixel
    thin.
    """
    mag = grad.magnitude
    h, w = mag.shape
    q = quantize_direction(grad.angle)
    padded = np.pad(mag, 1, mode="edge")
    keep = np.zeros_like(mag, dtype=bool)
    for d, (dr, dc) in _NMS_OFFSETS.items():
        fwd = padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        bwd = padded[1 - dr:1 - dr + h, 1 - dc:1 - dc + w]
        keep |= (q == d) & (mag >= fwd) & (mag > bwd)
    keep &= mag > 0
    return np.where(keep, mag, 0.0)


def hysteresis(thin: np.ndarray, low: float, high: float) -> np.ndarray:
    strong = thin >= high
    candidate = thin >= low
    labels, n = ndimage.label(candidate, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros_like(thin, dtype=bool)
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels]


def canny_edges(img, params: CannyParams = CannyParams()) -> np.ndarray:
    """Binary edge map with values 0 / 255."""
    blurred = gaussian_blur(img, params.sigma, params.kernel_size)
    thin = non_maximum_suppression(gradient_field(blurred))
    edges = hysteresis(thin, params.low_threshold, params.high_threshold)
    return np.where(edges, 255.0, 0.0)


@dataclass(frozen=True)
class HoughParams:
    rho_res: float = 1.0
    theta_res: float = 1.0
    vote_threshold: Optional[int] = None  # default: 0.3 * image height


def hough_geometry(shape, rho_res: float, theta_res: float):
    h, w = shape
    diag = math.hypot(w, h)
    n_rho_half = int(math.ceil(diag / rho_res))
    n_theta = int(round(180.0 / theta_res))
    thetas = [k * theta_res for k in range(n_theta)]
    return thetas, n_rho_half


def hough_accumulator(edges, rho_res: float = 1.0, theta_res: float = 1.0):
    """Vote every edge pixel once per theta bin.

    Returns ``(acc, thetas, rho_offset)`` where ``acc[t, r]`` counts votes for
    ``rho = (r - rho_offset) * rho_res`` at ``thetas[t]`` degrees.
    """
    if rho_res <= 0 or theta_res <= 0:
        raise ValueError("rho_res and theta_res must be > 0")
    e = np.asarray(edges)
    thetas, half = hough_geometry(e.shape, rho_res, theta_res)
    cos_t = np.array([math.cos(math.radians(t)) for t in thetas])
    sin_t = np.array([math.sin(math.radians(t)) for t in thetas])
    rows, cols = np.nonzero(e > 0)
    acc = np.zeros((len(thetas), 2 * half + 1), dtype=np.int64)
    if len(rows) == 0:
        return acc, thetas, half
    x = cols.astype(float)[None, :]
    y = rows.astype(float)[None, :]
    rho = x * cos_t[:, None] + y * sin_t[:, None]
    idx = np.floor(rho / rho_res + 0.5).astype(np.int64) + half
    t_idx = np.broadcast_to(np.arange(len(thetas))[:, None], idx.shape)
    np.add.at(acc, (t_idx.ravel(), idx.ravel()), 1)
    return acc, thetas, half


def accumulator_peaks(acc: np.ndarray, threshold: int) -> list[tuple[int, int]]:
    """Local maxima over the 8-neighbourhood; equal-valued plateaus report their first cell."""
    padded = np.pad(acc, 1, mode="constant", constant_values=-1)
    nt, nr = acc.shape
    shifts = [(dt, dr) for dt in (-1, 0, 1) for dr in (-1, 0, 1) if (dt, dr) != (0, 0)]
    is_max = acc >= max(threshold, 1)
    for dt, dr in shifts:
        is_max &= acc >= padded[1 + dt:1 + dt + nt, 1 + dr:1 + dr + nr]
    max_pad = np.pad(is_max, 1, mode="constant", constant_values=False)
    shadowed = np.zeros_like(is_max)
    for dt, dr in shifts:
        if (dt, dr) < (0, 0):
            nb = padded[1 + dt:1 + dt + nt, 1 + dr:1 + dr + nr]
            shadowed |= (acc == nb) & max_pad[1 + dt:1 + dt + nt, 1 + dr:1 + dr + nr]
    t_idx, r_idx = np.nonzero(is_max & ~shadowed)
    return list(zip(t_idx.tolist(), r_idx.tolist()))


def hough_lines(edges, rho_res: float = 1.0, theta_res: float = 1.0,
                vote_threshold: Optional[int] = None) -> list[LineRT]:
    e = np.asarray(edges)
    if vote_threshold is None:
        vote_threshold = max(1, int(math.ceil(0.3 * e.shape[0])))
    if vote_threshold < 1:
        raise ValueError("vote_threshold must be >= 1")
    acc, thetas, half = hough_accumulator(e, rho_res, theta_res)
    lines = [LineRT((r - half) * rho_res, thetas[t], int(acc[t, r]))
             for t, r in accumulator_peaks(acc, vote_threshold)]
    lines.sort(key=lambda ln: (-ln.votes, ln.theta, ln.rho))
    return lines


def refine_line(edges, line: LineRT, band: float = 3.0, iterations: int = 1,
                min_row: int = 0) -> LineRT:
    """Total-least-squares refit of ``line`` to the edge pixels within ``band`` px of it.

    Repeating the fit lets the band re-centre on a painted stripe whose two
    edges the coarse Hough line only half covers. Rows above ``min_row`` are ignored.
    """
    for _ in range(iterations):
        line = _refit(edges, line, band, min_row)
    return line


def _refit(edges, line: LineRT, band: float, min_row: int) -> LineRT:
    rows, cols = np.nonzero(np.asarray(edges) > 0)
    keep = rows >= min_row
    rows, cols = rows[keep], cols[keep]
    t = math.radians(line.theta)
    dist = cols * math.cos(t) + rows * math.sin(t) - line.rho
    sel = np.abs(dist) <= band
    if sel.sum() < 3:
        return line
    pts = np.column_stack([cols[sel], rows[sel]]).astype(float)
    centre = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centre, full_matrices=False)
    normal = vt[-1]
    if normal @ np.array([math.cos(t), math.sin(t)]) < 0:
        normal = -normal
    theta = math.degrees(math.atan2(normal[1], normal[0]))
    rho = float(centre @ normal)
    if theta < 0.0:
        theta, rho = theta + 180.0, -rho
    elif theta >= 180.0:
        theta, rho = theta - 180.0, -rho
    return LineRT(rho, theta, line.votes)


DEFAULT_THETA_WINDOW = ((15.0, 75.0), (105.0, 165.0))
REFINE_BAND = 3.0
REFINE_ITERATIONS = 3
REFINE_ROW_MARGIN = 4


def select_boundaries(lines, img_w: int, img_h: int,
                      window=DEFAULT_THETA_WINDOW) -> tuple[LineRT, LineRT]:
    """Pick the strongest left and right lane boundary candidates.

    Ground lines on either side of the camera lean opposite ways in the
    image: the left boundary has its normal angle below 90 degrees and the
    right one above. Candidates are split on that, then the pair must keep
    its left/right order along the bottom row.
    """
    if len(lines) < 2:
        raise BoundaryNotFound("need at least two candidate lines")
    left = right = None
    for ln in sorted(lines, key=lambda l: (-l.votes, l.theta, l.rho)):
        if not any(lo <= ln.theta <= hi for lo, hi in window):
            continue
        if ln.theta < 90.0 and left is None:
            left = ln
        elif ln.theta > 90.0 and right is None:
            right = ln
    if left is None or right is None:
        raise BoundaryNotFound("no boundary candidate on the "
                               + ("left" if left is None else "right"))
    bottom = img_h - 1
    if left.u_at(bottom) >= right.u_at(bottom):
        raise BoundaryNotFound("boundary candidates cross above the bottom row")
    return left, right


def intersect(a: LineRT, b: LineRT) -> tuple[float, float]:
    ta, tb = math.radians(a.theta), math.radians(b.theta)
    m = np.array([[math.cos(ta), math.sin(ta)], [math.cos(tb), math.sin(tb)]])
    det = float(np.linalg.det(m))
    if abs(det) < 1e-12:
        raise ParallelLinesError("lines are parallel")
    u, v = np.linalg.solve(m, [a.rho, b.rho])
    return float(u), float(v)


@dataclass(frozen=True)
class LaneEstimate:
    offsets: OffsetPair
    vanishing_point: tuple[float, float]
    lateral_px: float


def vanishing_and_offsets(left: LineRT, right: LineRT, img_w: int, img_h: int,
                          focal_px: float, meters_per_pixel: float = 1.0) -> LaneEstimate:
    """Offsets from the vanishing point and the bottom-row lane centre.

    Both offsets follow the right-positive robot convention: a vanishing
    point left of the image centre means the robot points right of the lane.
    The lane-centre shift is measured from the vanishing-point column rather
    than the image centre, which removes the heading's contribution to it.
    """
    d = abs(left.theta - right.theta)
    if min(d, 180.0 - d) <= 0.5:
        raise ParallelLinesError("boundary lines are (nearly) parallel")
    u_vp, v_vp = intersect(left, right)
    cx = img_w / 2.0
    bottom = img_h - 1
    lane_centre = 0.5 * (left.u_at(bottom) + right.u_at(bottom))
    heading = math.degrees(math.atan((cx - u_vp) / focal_px))
    lateral_px = u_vp - lane_centre
    lateral = lateral_px * meters_per_pixel * math.cos(math.radians(heading))
    return LaneEstimate(OffsetPair(lateral, heading, Source.VISION), (u_vp, v_vp), lateral_px)


@dataclass(frozen=True)
class LaneDetector:
    canny: CannyParams = CannyParams()
    hough: HoughParams = HoughParams()
    focal_px: float = 240.0
    meters_per_pixel: float = 1.0
    window: tuple = DEFAULT_THETA_WINDOW
    refine: bool = True

    def detect(self, img) -> LaneEstimate:
        return self.detect_lines(img)[0]

    def detect_lines(self, img) -> tuple[LaneEstimate, LineRT, LineRT]:
        """Estimate plus the (refined) left and right boundary lines."""
        arr = check_image(img)
        h, w = arr.shape
        edges = canny_edges(arr, self.canny)
        lines = hough_lines(edges, self.hough.rho_res, self.hough.theta_res, self.hough.vote_threshold)
        left, right = select_boundaries(lines, w, h, self.window)
        if self.refine:
            # lane boundaries lie on the ground, below the coarse vanishing point
            v0 = intersect(left, right)[1]
            min_row = int(min(max(math.ceil(v0) + REFINE_ROW_MARGIN, 0), h))
            left = refine_line(edges, left, REFINE_BAND, REFINE_ITERATIONS, min_row)
            right = refine_line(edges, right, REFINE_BAND, REFINE_ITERATIONS, min_row)
        est = vanishing_and_offsets(left, right, w, h, self.focal_px, self.meters_per_pixel)
        return est, left, right

    @classmethod
    def from_json(cls, data: dict) -> "LaneDetector":
        window = data.get("theta_window")
        return cls(
            canny=CannyParams(**data.get("canny", {})),
            hough=HoughParams(**data.get("hough", {})),
            focal_px=float(data.get("focal_px", cls.focal_px)),
            meters_per_pixel=float(data.get("meters_per_pixel", cls.meters_per_pixel)),
            window=tuple(tuple(w) for w in window) if window else DEFAULT_THETA_WINDOW,
            refine=bool(data.get("refine", True)),
        )


def draw_line(img: np.ndarray, line: LineRT, value: float = 255.0) -> None:
    """Rasterise an infinite line into ``img`` in place."""
    h, w = img.shape
    t = math.radians(line.theta)
    c, s = math.cos(t), math.sin(t)
    if abs(s) >= abs(c):
        u = np.arange(w)
        v = np.rint((line.rho - u * c) / s).astype(int)
        ok = (v >= 0) & (v < h)
        img[v[ok], u[ok]] = value
    else:
        v = np.arange(h)
        u = np.rint((line.rho - v * s) / c).astype(int)
        ok = (u >= 0) & (u < w)
        img[v[ok], u[ok]] = value


def annotate(img, left: LineRT, right: LineRT, vp: tuple[float, float]) -> np.ndarray:
    out = np.array(check_image(img), copy=True)
    draw_line(out, left)
    draw_line(out, right)
    h, w = out.shape
    cu, cv = int(round(vp[0])), int(round(vp[1]))
    out[max(cv - 1, 0):max(min(cv + 2, h), 0), max(cu - 1, 0):max(min(cu + 2, w), 0)] = 255.0
    return out
