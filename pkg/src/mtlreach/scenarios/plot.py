"""Deterministic SVG rendering of a planar map and planned trajectories."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from ..zonoset import HPolytope

# role -> fill colour; documented in the README
PALETTE = {
    "free": "#e6e6e6",
    "obstacle": "#7f7f7f",
    "goal": "#2ca02c",
    "key": "#1f77b4",
    "door": "#d62728",
    "charge": "#ff7f0e",
    "exchange": "#9467bd",
}
TRACE_COLORS = ("#000000", "#8c564b", "#17becf", "#bcbd22")
HOLE_COLOR = "#4d4d4d"
CANVAS = 640.0
MARGIN = 20.0


def polygon(P: HPolytope) -> np.ndarray:
    """Vertices of a bounded 2-D polytope in counter-clockwise order starting at the lowest-leftmost one."""
    if P.dim != 2:
        raise ValueError("only planar polytopes can be drawn")
    L, r = P.ineq_matrix, P.ineq_rhs
    norms = np.linalg.norm(L, axis=1)
    res = linprog([0, 0, -1], A_ub=np.hstack([L, norms[:, None]]), b_ub=r, bounds=[(None, None)] * 2 + [(0, None)], method="highs")
    if res.status != 0 or res.x[2] <= 1e-12:
        return np.zeros((0, 2))
    hs = HalfspaceIntersection(np.hstack([L, -r[:, None]]), res.x[:2])
    pts = hs.intersections
    hull = ConvexHull(pts)
    V = pts[hull.vertices]  # counter-clockwise for 2-D hulls
    start = np.lexsort((V[:, 0], V[:, 1]))[0]
    return np.roll(V, -start, axis=0)


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Frame:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        span = np.maximum(self.hi - self.lo, 1e-9)
        self.scale = (CANVAS - 2 * MARGIN) / float(span.max())
        self.w = span[0] * self.scale + 2 * MARGIN
        self.h = span[1] * self.scale + 2 * MARGIN

    def xy(self, p) -> tuple[str, str]:
        x = MARGIN + (p[0] - self.lo[0]) * self.scale
        y = self.h - MARGIN - (p[1] - self.lo[1]) * self.scale
        return _fmt(x), _fmt(y)


def render_svg(
    workspace_lo,
    workspace_hi,
    regions: Sequence[tuple[str, str, HPolytope, bool]] = (),
    holes: Sequence[HPolytope] = (),
    traces: Sequence[np.ndarray] = (),
    title: str = "",
) -> str:
    """SVG text; ``regions`` holds (id, role, polytope, overlay) in drawing order."""
    f = _Frame(workspace_lo, workspace_hi)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(f.w)}" height="{_fmt(f.h)}" viewBox="0 0 {_fmt(f.w)} {_fmt(f.h)}">',
    ]
    if title:
        out.append(f"<title>{title}</title>")
    x0, y1 = f.xy(f.lo)
    x1, y0 = f.xy(f.hi)
    out.append(f'<rect x="{x0}" y="{y0}" width="{_fmt(float(x1) - float(x0))}" height="{_fmt(float(y1) - float(y0))}" fill="#ffffff" stroke="#000000" stroke-width="1"/>')
    ordered = [r for r in regions if not r[3]] + [r for r in regions if r[3]]
    for rid, role, P, overlay in ordered:
        V = polygon(P)
        if len(V) == 0:
            continue
        pts = " ".join(",".join(f.xy(v)) for v in V)
        op = "0.6" if overlay else "1"
        out.append(f'<polygon id="{rid}" points="{pts}" fill="{PALETTE.get(role, PALETTE["free"])}" fill-opacity="{op}" stroke="#333333" stroke-width="0.5"/>')
        c = V.mean(axis=0)
        cx, cy = f.xy(c)
        out.append(f'<text x="{cx}" y="{cy}" font-size="10" text-anchor="middle">{rid}</text>')
    for H in holes:
        V = polygon(H)
        if len(V):
            pts = " ".join(",".join(f.xy(v)) for v in V)
            out.append(f'<polygon points="{pts}" fill="{HOLE_COLOR}" stroke="none"/>')
    for i, T in enumerate(traces):
        T = np.asarray(T, float)
        if T.size == 0:
            continue
        color = TRACE_COLORS[i % len(TRACE_COLORS)]
        pts = " ".join(",".join(f.xy(p)) for p in T)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for k, p in enumerate(T):
            cx, cy = f.xy(p)
            out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"><title>k={k}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
