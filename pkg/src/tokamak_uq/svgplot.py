"""Static SVG figures: flux contours and feature scatter over the geometry.

Hand-rolled SVG keeps the artifact chain dependency-free; the figures are
batch outputs, so there is nothing interactive here. Output is deterministic
for fixed inputs.
"""

from __future__ import annotations

import numpy as np

from .fields import extract_contour
from .geometry import ReactorGeometry
from .mesh import NodalField

_SCALE = 55.0        # pixels per meter
_PAD = 30.0


class SvgCanvas:
    """Minimal y-up drawing surface in physical coordinates."""

    def __init__(self, x0, x1, y0, y1):
        self.x0, self.y1 = x0, y1
        self.w = (x1 - x0) * _SCALE + 2 * _PAD
        self.h = (y1 - y0) * _SCALE + 2 * _PAD
        self.parts = []

    def _map(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        sx = (pts[:, 0] - self.x0) * _SCALE + _PAD
        sy = (self.y1 - pts[:, 1]) * _SCALE + _PAD
        return sx, sy

    def polyline(self, pts, stroke="#444", width=1.0, fill="none",
                 closed=False, dash=None):
        sx, sy = self._map(pts)
        if len(sx) < 2:
            return
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(sx, sy))
        tag = "polygon" if closed else "polyline"
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<{tag} points="{d}" fill="{fill}" stroke="{stroke}" '
            f'stroke-width="{width}"{extra}/>')

    def scatter(self, pts, r=2.5, fill="#c33", stroke="none", marker="circle"):
        sx, sy = self._map(pts)
        for x, y in zip(sx, sy):
            if marker == "cross":
                self.parts.append(
                    f'<path d="M{x - r:.2f} {y - r:.2f}L{x + r:.2f} {y + r:.2f}'
                    f'M{x - r:.2f} {y + r:.2f}L{x + r:.2f} {y - r:.2f}" '
                    f'stroke="{fill}" stroke-width="1.4" fill="none"/>')
            else:
                self.parts.append(
                    f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill}" '
                    f'stroke="{stroke}"/>')

    def text(self, p, s, size=12, fill="#222"):
        sx, sy = self._map([p])
        self.parts.append(
            f'<text x="{sx[0]:.2f}" y="{sy[0]:.2f}" font-size="{size}" '
            f'font-family="sans-serif" fill="{fill}">{s}</text>')

    def to_string(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{self.w:.0f}" height="{self.h:.0f}" '
                f'viewBox="0 0 {self.w:.0f} {self.h:.0f}">\n'
                f'<rect width="100%" height="100%" fill="white"/>\n'
                f'{body}\n</svg>\n')

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_string())


def _geometry_canvas(g: ReactorGeometry) -> SvgCanvas:
    r = g.gamma_radius
    c = SvgCanvas(0.0, r * 1.02, -r * 1.02, r * 1.02)
    draw_geometry(c, g)
    return c


def draw_geometry(c: SvgCanvas, g: ReactorGeometry):
    th = np.linspace(-np.pi / 2, np.pi / 2, 121)
    arc = np.column_stack([g.gamma_radius * np.cos(th),
                           g.gamma_radius * np.sin(th)])
    c.polyline(arc, stroke="#999", width=1.0, dash="6,4")
    c.polyline([[0, -g.gamma_radius], [0, g.gamma_radius]],
               stroke="#999", width=1.0, dash="6,4")
    c.polyline(g.vessel_outer, stroke="#bbb", width=1.0, closed=True)
    c.polyline(g.limiter, stroke="#222", width=1.8, closed=True)
    for plate in g.divertor:
        c.polyline(plate, stroke="#06c", width=2.2)
    for coil in g.coils:
        x0, x1, y0, y1 = coil.bounds()
        c.polyline([[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
                   stroke="#777", width=1.2, closed=True, fill="#eee")


def contour_figure(g: ReactorGeometry, f: NodalField, psi_bd=None,
                   boundary=None, n_levels: int = 13, extras=()) -> str:
    """Flux map with the plasma boundary and separatrix level emphasized."""
    c = _geometry_canvas(g)
    vals = f.values
    levels = np.linspace(vals.min(), vals.max(), n_levels + 2)[1:-1]
    for lev in levels:
        for line in extract_contour(f, float(lev)):
            c.polyline(line.points, stroke="#b8b8d0", width=0.7,
                       closed=line.closed)
    if psi_bd is not None:
        for line in extract_contour(f, float(psi_bd)):
            c.polyline(line.points, stroke="#c60", width=1.6,
                       closed=line.closed)
    if boundary is not None:
        # accept a classification, a polyline object, or bare points
        pts = getattr(boundary, "polyline", boundary)
        pts = getattr(pts, "points", pts)
        if pts is not None:
            c.polyline(pts, stroke="#a00", width=2.2)
    for pts, style in extras:
        c.scatter(pts, **style)
    return c.to_string()


def scatter_figure(g: ReactorGeometry, clouds: dict,
                   reference: dict | None = None) -> str:
    """Feature point clouds (x-points, strikes, contacts) over the geometry.

    `clouds` maps a label to an (n, 2) array; `reference` marks single
    reference points with crosses.
    """
    palette = {"xpoint": "#c33", "strike": "#06c", "contact": "#2a2",
               "axis": "#a3a"}
    c = _geometry_canvas(g)
    y = g.gamma_radius * 0.95
    for label, pts in clouds.items():
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if not len(pts):
            continue
        color = palette.get(label.split("_")[0], "#555")
        c.scatter(pts, r=2.0, fill=color)
        c.text((0.4, y), f"{label}: {len(pts)}", size=11, fill=color)
        y -= 0.55
    for label, p in (reference or {}).items():
        color = palette.get(label.split("_")[0], "#000")
        c.scatter([p], r=5.0, fill=color, marker="cross")
    return c.to_string()
