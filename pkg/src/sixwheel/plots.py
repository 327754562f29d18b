"""SVG figures from run logs."""
from __future__ import annotations

import csv
import io
from typing import Optional

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .geo import ReferencePath
from .sim import CSV_HEADER

KINDS = ("trajectory", "speed", "pitch", "error")
_NUMERIC = [c for c in CSV_HEADER.split(",") if c != "src"]


class PlotError(ValueError):
    pass


def read_run_csv(text: str) -> dict[str, np.ndarray]:
    """Parse a run log; empty cells (no obstacle) become NaN."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise PlotError("empty file")
    header = rows[0]
    missing = [c for c in CSV_HEADER.split(",") if c not in header]
    if missing:
        raise PlotError(f"missing column(s): {', '.join(missing)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise PlotError("log has a header but no rows")
    cols = {}
    for name in header:
        j = header.index(name)
        vals = [r[j] if j < len(r) else "" for r in body]
        if name in _NUMERIC:
            try:
                cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
            except ValueError as exc:
                raise PlotError(f"column {name}: {exc}") from exc
        else:
            cols[name] = np.array(vals)
    return cols


def figure_series(cols: dict, kind: str, path: Optional[ReferencePath] = None) -> list:
    """(label, x, y) series for ``kind``; the plotted data, independent of styling."""
    t = cols["t"]
    if kind == "trajectory":
        out = []
        if path is not None:
            pts = path.points
            if path.closed:
                pts = np.vstack([pts, pts[:1]])
            out.append(("path", pts[:, 0], pts[:, 1]))
        out.append(("robot", cols["x"], cols["y"]))
        return out
    if kind == "speed":
        return [("governed speed", t, cols["gov"])]
    if kind == "pitch":
        return [("true pitch", t, cols["pitch"]), ("estimated pitch", t, cols["pitch_est"])]
    if kind == "error":
        return [("|lateral|", t, np.abs(cols["lat_off"]))]
    raise PlotError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")


_AXES = {
    "trajectory": ("x [m]", "y [m]"),
    "speed": ("t [s]", "speed [m/s]"),
    "pitch": ("t [s]", "pitch [deg]"),
    "error": ("t [s]", "|lateral offset| [m]"),
}


def render_svg(cols: dict, kind: str, path: Optional[ReferencePath] = None,
               title: Optional[str] = None) -> bytes:
    series = figure_series(cols, kind, path)
    with matplotlib.rc_context({"svg.hashsalt": "sixwheel", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot()
        for i, (label, x, y) in enumerate(series):
            style = "--" if label == "path" else "-"
            ax.plot(x, y, style, lw=1.2, label=label, gid=f"series{i}")
        xl, yl = _AXES[kind]
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        if kind == "trajectory":
            ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, alpha=0.3)
        if len(series) > 1:
            ax.legend(loc="best")
        ax.set_title(title or kind)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
