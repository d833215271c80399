"""Reactor cross-section geometry: coils, walls, and the coupling circle.

Everything lives in the poloidal half-plane with coordinates (x, y), where x
is the distance from the machine axis of symmetry and y the height, both in
meters. A model consists of

* rectangular poloidal-field coils carrying prescribed currents,
* a closed inner-wall polyline (the limiter) bounding the vacuum chamber,
* one or more open divertor plate polylines inside the chamber,
* a closed outer vessel polyline,
* a circular artificial boundary of radius ``gamma_radius`` centred at the
  origin (restricted to x >= 0) on which the far-field coupling acts.

Conventions
-----------
- Closed polylines are stored without repeating the first point.
- Coils are axis-aligned rectangles given by centre, width and height.
- Points are classified into exactly one region tag; points within
  ``SNAP_TOL`` of a wall or plate polyline get the dedicated tag
  ``on_structure``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

SNAP_TOL = 1e-9

# region tag names
COIL = "coil"
INSIDE_LIMITER = "inside_limiter"
BETWEEN_WALLS = "between_walls"
EXTERIOR = "exterior_of_gamma"
ON_STRUCTURE = "on_structure"


class GeometryError(ValueError):
    pass


class Region(NamedTuple):
    """Region tag for a classified point. ``coil_id`` is -1 unless kind == COIL."""

    kind: str
    coil_id: int = -1


@dataclass(frozen=True)
class Coil:
    """Axis-aligned rectangular coil cross section."""

    coil_id: int
    center: tuple[float, float]
    width: float
    height: float
    reference_current: float

    @property
    def area(self) -> float:
        return self.width * self.height

    def bounds(self):
        cx, cy = self.center
        return (cx - 0.5 * self.width, cx + 0.5 * self.width,
                cy - 0.5 * self.height, cy + 0.5 * self.height)

    def contains(self, p) -> bool:
        x0, x1, y0, y1 = self.bounds()
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


@dataclass(frozen=True, eq=False)
class CurrentVector:
    """Coil currents in amperes, one entry per coil of the paired geometry."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise GeometryError("current vector must be one dimensional")
        if not np.all(np.isfinite(v)):
            raise GeometryError("current vector contains non-finite entries")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(eq=False)
class ReactorGeometry:
    coils: tuple[Coil, ...]
    limiter: np.ndarray
    divertor: tuple[np.ndarray, ...]
    vessel_outer: np.ndarray
    gamma_radius: float

    def __post_init__(self):
        self.limiter = np.asarray(self.limiter, dtype=float)
        self.divertor = tuple(np.asarray(d, dtype=float) for d in self.divertor)
        self.vessel_outer = np.asarray(self.vessel_outer, dtype=float)
        _validate_geometry(self)

    @property
    def n_coils(self) -> int:
        return len(self.coils)

    def coil_areas(self) -> np.ndarray:
        return np.array([c.area for c in self.coils])

    def reference_currents(self) -> CurrentVector:
        return CurrentVector(np.array([c.reference_current for c in self.coils]))

    def structure_polylines(self):
        """All wall and plate polylines with their closed flags."""
        out = [(self.limiter, True)]
        out.extend((d, False) for d in self.divertor)
        out.append((self.vessel_outer, True))
        return out


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _closed_polyline_ok(poly: np.ndarray) -> bool:
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        return False
    # consecutive duplicate points would make segments degenerate
    d = np.linalg.norm(np.diff(np.vstack([poly, poly[:1]]), axis=0), axis=1)
    return bool(np.all(d > 0.0))


def _validate_geometry(g: ReactorGeometry) -> None:
    if g.gamma_radius <= 0.0:
        raise GeometryError("gamma_radius must be positive")
    r = g.gamma_radius
    for c in g.coils:
        if c.width <= 0.0 or c.height <= 0.0:
            raise GeometryError(f"coil {c.coil_id}: width and height must be positive")
        x0, x1, y0, y1 = c.bounds()
        if x0 <= 0.0:
            raise GeometryError(
                f"coil {c.coil_id} extends to x = {x0:.6g}, outside the half-plane x > 0")
        corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
        if np.any(np.hypot(corners[:, 0], corners[:, 1]) >= r):
            raise GeometryError(f"coil {c.coil_id} is not strictly inside the coupling circle")
    ids = [c.coil_id for c in g.coils]
    if len(set(ids)) != len(ids):
        raise GeometryError("duplicate coil ids")
    for a in range(len(g.coils)):
        for b in range(a + 1, len(g.coils)):
            ax0, ax1, ay0, ay1 = g.coils[a].bounds()
            bx0, bx1, by0, by1 = g.coils[b].bounds()
            if ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1:
                raise GeometryError(
                    f"coils {g.coils[a].coil_id} and {g.coils[b].coil_id} overlap")
    for name, poly in (("limiter", g.limiter), ("vessel_outer", g.vessel_outer)):
        if not _closed_polyline_ok(poly):
            raise GeometryError(f"{name} is not a valid closed polyline")
        if np.any(poly[:, 0] <= 0.0):
            raise GeometryError(f"{name} leaves the half-plane x > 0")
        if np.any(np.hypot(poly[:, 0], poly[:, 1]) >= r):
            raise GeometryError(f"{name} is not strictly inside the coupling circle")
        if abs(_polygon_area(poly)) <= 0.0:
            raise GeometryError(f"{name} has zero enclosed area")
    for k, d in enumerate(g.divertor):
        if d.ndim != 2 or d.shape[1] != 2 or len(d) < 2:
            raise GeometryError(f"divertor polyline {k} needs at least two points")
        if np.any(d[:, 0] <= 0.0):
            raise GeometryError(f"divertor polyline {k} leaves the half-plane x > 0")
    # the limiter must sit inside the outer vessel
    if not all(point_in_polygon(p, g.vessel_outer) for p in g.limiter):
        raise GeometryError("limiter is not contained in vessel_outer")


# ---------------------------------------------------------------------------
# point predicates

def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd rule crossing test. Points on the boundary are not guaranteed
    either way; callers needing boundary awareness snap first."""
    x, y = float(p[0]), float(p[1])
    vx, vy = poly[:, 0], poly[:, 1]
    wx, wy = np.roll(vx, -1), np.roll(vy, -1)
    cond = (vy > y) != (wy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = vx + (y - vy) * (wx - vx) / (wy - vy)
    hits = cond & (x < xs)
    return bool(np.count_nonzero(hits) % 2)


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorised even-odd test for an (n, 2) array of points."""
    pts = np.asarray(pts, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    vx, vy = poly[None, :, 0], poly[None, :, 1]
    wx, wy = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cond = (vy > y) != (wy > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = vx + (y - vy) * (wx - vx) / (wy - vy)
    hits = cond & (x < xs)
    return (np.count_nonzero(hits, axis=1) % 2).astype(bool)


def segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(p - (a + t * ab))))


def polyline_distance(p, poly: np.ndarray, closed: bool) -> float:
    n = len(poly)
    last = n if closed else n - 1
    best = np.inf
    for i in range(last):
        d = segment_distance(p, poly[i], poly[(i + 1) % n])
        if d < best:
            best = d
    return best


def on_any_structure(g: ReactorGeometry, p, tol: float = SNAP_TOL) -> bool:
    for poly, closed in g.structure_polylines():
        if polyline_distance(p, poly, closed) <= tol:
            return True
    return False


def classify_point(g: ReactorGeometry, p) -> Region:
    """Assign exactly one region tag to a point.

    Precedence: outside the coupling circle, then structure snap, then coil
    membership, then limiter interior, and between_walls for everything else
    inside the circle.
    """
    x, y = float(p[0]), float(p[1])
    if x < 0.0:
        raise GeometryError(f"point ({x:.6g}, {y:.6g}) lies outside the half-plane x >= 0")
    if np.hypot(x, y) > g.gamma_radius:
        return Region(EXTERIOR)
    if on_any_structure(g, (x, y)):
        return Region(ON_STRUCTURE)
    for c in g.coils:
        if c.contains((x, y)):
            return Region(COIL, c.coil_id)
    if point_in_polygon((x, y), g.limiter):
        return Region(INSIDE_LIMITER)
    return Region(BETWEEN_WALLS)


def coil_current_density(g: ReactorGeometry, currents) -> np.ndarray:
    """Per-coil source density I_i / S_i in A/m^2, in coil order."""
    vals = np.asarray(currents, dtype=float)
    if vals.shape != (g.n_coils,):
        raise GeometryError(
            f"current vector has length {vals.size}, geometry has {g.n_coils} coils")
    if not np.all(np.isfinite(vals)):
        raise GeometryError("current vector contains non-finite entries")
    return vals / g.coil_areas()


# ---------------------------------------------------------------------------
# serialisation

def geometry_to_dict(g: ReactorGeometry) -> dict:
    return {
        "gamma_radius": g.gamma_radius,
        "coils": [
            {
                "id": c.coil_id,
                "center": [c.center[0], c.center[1]],
                "width": c.width,
                "height": c.height,
                "current": c.reference_current,
            }
            for c in g.coils
        ],
        "limiter": g.limiter.tolist(),
        "divertor": [d.tolist() for d in g.divertor],
        "vessel_outer": g.vessel_outer.tolist(),
    }


def geometry_from_dict(data: dict) -> ReactorGeometry:
    try:
        coils = tuple(
            Coil(
                coil_id=int(c["id"]),
                center=(float(c["center"][0]), float(c["center"][1])),
                width=float(c["width"]),
                height=float(c["height"]),
                reference_current=float(c["current"]),
            )
            for c in data["coils"]
        )
        divertor = data.get("divertor", [])
        if divertor and np.asarray(divertor[0]).ndim == 1:
            divertor = [divertor]  # a single flat polyline
        return ReactorGeometry(
            coils=coils,
            limiter=np.asarray(data["limiter"], dtype=float),
            divertor=tuple(np.asarray(d, dtype=float) for d in divertor),
            vessel_outer=np.asarray(data["vessel_outer"], dtype=float),
            gamma_radius=float(data["gamma_radius"]),
        )
    except KeyError as e:
        raise GeometryError(f"geometry file is missing field {e.args[0]!r}") from None


def load_geometry(path) -> ReactorGeometry:
    with open(path) as f:
        data = json.load(f)
    return geometry_from_dict(data)


def save_geometry(g: ReactorGeometry, path) -> None:
    with open(path, "w") as f:
        json.dump(geometry_to_dict(g), f, indent=1, sort_keys=True)
        f.write("\n")
