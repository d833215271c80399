"""Generate the bundled reactor geometry, coarse mesh, and reference solve.

Development tool, not part of the installed package. Builds an ITER-like
cross-section from public machine dimensions, meshes the half-disk with a
graded Delaunay triangulation whose edges conform to every structure
polyline, and calibrates the plasma current scale so the reference currents
produce a diverted equilibrium. Outputs land in src/tokamak_uq/data/.

Usage:
    python scripts/make_reference_data.py build          # geometry + mesh
    python scripts/make_reference_data.py calibrate      # lambda sweep
    python scripts/make_reference_data.py solve LAMBDA   # one detailed solve
"""

import sys
import time
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tokamak_uq.geometry import (Coil, ReactorGeometry, points_in_polygon,
                                 save_geometry, load_geometry)
from tokamak_uq.mesh import (R_BETWEEN, R_CHAMBER, R_COIL, TriMesh, audit_mesh,
                             read_mesh, write_mesh)

DATA = Path(__file__).resolve().parents[1] / "src" / "tokamak_uq" / "data"
GAMMA_RADIUS = 14.5

REFERENCE_CURRENTS = np.array([
    -1.4e6, -9.5e6, -2.0388e7, -2.0388e7, -9.0e6, 3.564e6,     # CS stack
    5.469e6, -2.266e6, -6.426e6, -4.82e6, -7.504e6, 1.724e7,   # PF1..PF6
])


def build_coils():
    # central solenoid stack top to bottom, then the outer ring coils
    cs = [5.444, 3.266, 1.089, -1.089, -3.266, -5.444]
    pf = [(3.943, 7.557, 0.959, 0.984),
          (8.285, 6.530, 0.580, 0.715),
          (11.992, 3.265, 0.696, 0.954),
          (11.963, -2.244, 0.638, 0.954),
          (8.391, -6.735, 0.813, 0.954),
          (4.287, -7.559, 1.559, 1.107)]
    rects = [((1.687, z), 0.740, 2.093) for z in cs]
    rects += [((x, z), w, h) for x, z, w, h in pf]
    return [Coil(k + 1, c, w, h, float(i))
            for k, ((c, w, h), i) in enumerate(zip(rects, REFERENCE_CURRENTS))]


def _miller(theta, r0, z0, a, kappa, delta):
    x = r0 + a * np.cos(theta + delta * np.sin(theta))
    y = z0 + kappa * a * np.sin(theta)
    return np.column_stack([x, y])


def build_limiter():
    """First wall: D-shaped main chamber spliced onto a lower divertor bay."""
    # main chamber arc from the outboard side over the top to the inboard side
    th = np.linspace(np.deg2rad(-45.0), np.deg2rad(232.0), 56)
    arc = _miller(th, 6.20, 0.50, 2.35, 1.68, 0.50)
    bay = np.array([
        [7.00, -3.10],
        [6.75, -3.90],
        [6.30, -4.45],
        [5.60, -4.75],
        [4.75, -4.75],
        [4.12, -4.35],
        [3.88, -3.62],
        [3.95, -2.98],
    ])
    return np.vstack([arc, bay[::-1]])


def build_divertor():
    inner = np.array([[4.12, -3.30], [4.58, -4.15]])
    outer = np.array([[5.20, -4.50], [6.05, -3.95]])
    return inner, outer


def _offset_polygon(poly, dist):
    """Push each vertex outward along its averaged edge normal."""
    p = np.asarray(poly, float)
    nxt = np.roll(p, -1, axis=0)
    edge = nxt - p
    # outward normal of a counterclockwise polygon
    en = np.column_stack([edge[:, 1], -edge[:, 0]])
    en /= np.linalg.norm(en, axis=1)[:, None]
    vn = en + np.roll(en, 1, axis=0)
    nrm = np.linalg.norm(vn, axis=1)
    vn[nrm > 1e-12] /= nrm[nrm > 1e-12, None]
    return p + dist * vn


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def resample(poly, closed, hmax):
    """Subdivide so no segment exceeds hmax; closed loops drop the repeat."""
    p = np.asarray(poly, float)
    seq = np.vstack([p, p[:1]]) if closed else p
    out = []
    for a, b in zip(seq[:-1], seq[1:]):
        n = max(1, int(np.ceil(np.hypot(*(b - a)) / hmax)))
        for k in range(n):
            out.append(a + (b - a) * (k / n))
    if not closed:
        out.append(seq[-1])
    return np.array(out)


def build_vessel(limiter):
    dense = resample(limiter, True, 0.45)
    if _signed_area(dense) < 0:
        dense = dense[::-1]
    vessel = _offset_polygon(dense, 0.42)
    return vessel[::2]


def build_geometry():
    limiter = build_limiter()
    if _signed_area(limiter) < 0:
        limiter = limiter[::-1]
    vessel = build_vessel(limiter)
    return ReactorGeometry(
        coils=tuple(build_coils()),
        limiter=limiter,
        divertor=build_divertor(),
        vessel_outer=vessel,
        gamma_radius=GAMMA_RADIUS,
    )


# ---------------------------------------------------------------------------
# meshing

H_STRUCT = 0.28      # wall and plate sample spacing
H_VESSEL = 0.32
H_COIL = 0.34
H_CHAMBER = 0.33     # lattice inside the limiter
H_EXT0 = 0.55        # exterior lattice floor
EXT_GRADE = 0.15     # growth per meter beyond r = 9.5
PROTECT = 0.58       # protection radius in units of local spacing


def _hex_lattice(x0, x1, y0, y1, h):
    rows = []
    dy = h * np.sqrt(3.0) / 2.0
    ny = int(np.ceil((y1 - y0) / dy)) + 1
    for j in range(ny):
        y = y0 + j * dy
        off = 0.5 * h if j % 2 else 0.0
        xs = np.arange(x0 + off, x1 + 1e-9, h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    return np.vstack(rows)


def _jitter(pts, h, scale=1e-3):
    # deterministic, tiny: breaks cocircular lattice degeneracies
    rng = np.random.default_rng(20260816)
    return pts + scale * h * (rng.random(pts.shape) - 0.5)


def _coil_points(c, h):
    x0, x1, y0, y1 = c.bounds()
    per = resample(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]), True, h)
    m = 0.55 * h
    xs = np.linspace(x0 + m, x1 - m, max(1, int(round((x1 - x0 - 2 * m) / h)) + 1))
    ys = np.linspace(y0 + m, y1 - m, max(1, int(round((y1 - y0 - 2 * m) / h)) + 1))
    gx, gy = np.meshgrid(xs, ys)
    inner = np.column_stack([gx.ravel(), gy.ravel()])
    return per, inner


def build_mesh(geom, n_arc=38):
    rho = geom.gamma_radius
    blocks = []          # (points, protect radius, edges required, loop closed)
    th = np.linspace(-np.pi / 2, np.pi / 2, n_arc)
    arc = np.column_stack([rho * np.cos(th), rho * np.sin(th)])
    arc[0] = (0.0, -rho)
    arc[-1] = (0.0, rho)
    arc_spacing = np.pi * rho / (n_arc - 1)
    blocks.append((arc, 0.55 * arc_spacing, True, False))

    # axis chord, graded like the nearby exterior lattice, endpoints excluded
    ys, y = [], -rho
    while y < rho:
        hloc = H_EXT0 + EXT_GRADE * max(0.0, abs(y) - 9.5)
        y += hloc
        if y < rho - 0.45 * hloc:
            ys.append(y)
    chord = np.column_stack([np.zeros(len(ys)), ys])
    blocks.append((chord, 0.55 * H_EXT0, True, False))

    lim_s = resample(geom.limiter, True, H_STRUCT)
    blocks.append((lim_s, PROTECT * H_STRUCT, True, True))
    for d in geom.divertor:
        blocks.append((resample(d, False, H_STRUCT), PROTECT * H_STRUCT, True, False))
    ves_s = resample(geom.vessel_outer, True, H_VESSEL)
    blocks.append((ves_s, PROTECT * H_VESSEL, True, True))

    for c in geom.coils:
        per, inner = _coil_points(c, H_COIL)
        blocks.append((per, PROTECT * H_COIL, True, True))
        if len(inner):
            blocks.append((inner, PROTECT * H_COIL, False, False))

    # lattice candidates
    lim_poly = lim_s
    ves_poly = ves_s
    bb = lim_poly.min(axis=0), lim_poly.max(axis=0)
    cham = _hex_lattice(bb[0][0], bb[1][0], bb[0][1], bb[1][1], H_CHAMBER)
    cham = cham[points_in_polygon(cham, lim_poly)]
    cham = _jitter(cham, H_CHAMBER)

    ext = _hex_lattice(0.0, rho, -rho, rho, H_EXT0)
    r = np.hypot(ext[:, 0], ext[:, 1])
    hloc = H_EXT0 + EXT_GRADE * np.maximum(0.0, r - 9.5)
    # thin the base lattice to the graded density
    rng = np.random.default_rng(4712)
    keep = rng.random(len(ext)) < (H_EXT0 / hloc) ** 2
    ext = ext[keep]
    r = r[keep]
    hloc = hloc[keep]
    ok = (ext[:, 0] > 0.35) & (r < rho - 0.55 * arc_spacing)
    ok &= ~points_in_polygon(ext, ves_poly)
    for c in geom.coils:
        x0, x1, y0, y1 = c.bounds()
        m = 0.45 * H_COIL
        ok &= ~((ext[:, 0] > x0 - m) & (ext[:, 0] < x1 + m)
                & (ext[:, 1] > y0 - m) & (ext[:, 1] < y1 + m))
    ext = _jitter(ext[ok], H_EXT0)
    hloc = hloc[ok]

    forced = np.vstack([b[0] for b in blocks])
    prot = np.concatenate([np.full(len(b[0]), b[1]) for b in blocks])
    tree = cKDTree(forced)

    def admit(pts, own):
        d, i = tree.query(pts)
        return pts[(d > prot[i]) & (d > 0.45 * own)]

    cham = admit(cham, H_CHAMBER)
    dist, idx = tree.query(ext)
    ext = ext[(dist > prot[idx]) & (dist > 0.45 * hloc)]

    pts = np.vstack([forced, cham, ext])
    tri = Delaunay(pts)
    simp = tri.simplices.copy()

    # enforce counterclockwise orientation
    p0, p1, p2 = pts[simp[:, 0]], pts[simp[:, 1]], pts[simp[:, 2]]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) \
        - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    flip = det < 0
    simp[flip] = simp[flip][:, [0, 2, 1]]
    if np.any(np.abs(det) < 1e-12):
        raise RuntimeError("Delaunay produced a degenerate triangle")

    # region tags from centroids
    cent = pts[simp].mean(axis=1)
    kind = np.full(len(simp), R_BETWEEN, dtype=np.int8)
    coil_of = np.full(len(simp), -1, dtype=np.int32)
    for k, c in enumerate(geom.coils):
        x0, x1, y0, y1 = c.bounds()
        m = (cent[:, 0] > x0) & (cent[:, 0] < x1) & (cent[:, 1] > y0) & (cent[:, 1] < y1)
        kind[m] = R_COIL
        coil_of[m] = k
    inside = points_in_polygon(cent, lim_poly) & (kind != R_COIL)
    kind[inside] = R_CHAMBER

    axis_flag = pts[:, 0] == 0.0
    rr = np.hypot(pts[:, 0], pts[:, 1])
    gamma_flag = np.zeros(len(pts), dtype=bool)
    gamma_flag[:n_arc] = True
    if not np.all(np.abs(rr[gamma_flag] - rho) < 1e-9):
        raise RuntimeError("gamma ring coordinates drifted")

    mesh = TriMesh(pts, simp, axis_flag, gamma_flag, kind, coil_of)

    # every structure segment must be recovered as a mesh edge
    edge_set = {tuple(e) for e in mesh.edges}
    off = 0
    for bpts, _, required, closed in blocks:
        n = len(bpts)
        if required and n > 1:
            idx = np.arange(off, off + n)
            pairs = list(zip(idx[:-1], idx[1:]))
            if closed:
                pairs.append((idx[-1], idx[0]))
            missing = [e for e in pairs if tuple(sorted(e)) not in edge_set]
            if missing:
                a, b = missing[0]
                raise RuntimeError(
                    f"structure edge not recovered near {pts[a]}..{pts[b]} "
                    f"({len(missing)} missing)")
        off += n

    audit_mesh(mesh)
    return mesh


def cmd_build():
    DATA.mkdir(exist_ok=True)
    geom = build_geometry()
    save_geometry(geom, DATA / "iter_like.geom")
    print(f"geometry: {geom.n_coils} coils, limiter {len(geom.limiter)} pts, "
          f"vessel {len(geom.vessel_outer)} pts")
    t0 = time.perf_counter()
    mesh = build_mesh(geom)
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles "
          f"({time.perf_counter() - t0:.2f} s)")
    for name, kid in (("chamber", R_CHAMBER), ("between", R_BETWEEN), ("coil", R_COIL)):
        print(f"  {name}: {int(np.sum(mesh.region_kind == kid))} tris")
    q = mesh.areas
    print(f"  area range [{q.min():.4f}, {q.max():.4f}]")
    write_mesh(mesh, DATA / "iter_like_coarse.mesh")
    again = read_mesh(DATA / "iter_like_coarse.mesh")
    audit_mesh(again)
    print("round-trip audit ok")


def _report(geom, mesh, lam, x0, R=0):
    from tokamak_uq.solver import ProfileParams, SolverOptions, solve_free_boundary
    from tokamak_uq.fields import feature_record, shaping

    p = ProfileParams(lambda_s=lam, x0=x0)
    t0 = time.perf_counter()
    sol = solve_free_boundary(geom, mesh, REFERENCE_CURRENTS, p, R=R)
    dt = time.perf_counter() - t0
    st = sol.state
    line = (f"lam={lam:.4g} R={R} iters={sol.iterations} conv={sol.converged} "
            f"type={st.boundary_type} t={dt:.1f}s")
    if st.confined:
        line += (f" axis=({st.axis[0]:.3f},{st.axis[1]:.3f}) "
                 f"psi_ma={st.psi_ma:.4g} psi_bd={st.psi_bd:.4g}")
        if st.xpoint is not None:
            line += f" xpt=({st.xpoint[0]:.3f},{st.xpoint[1]:.3f})"
    print(line)
    if sol.analysis is not None and sol.analysis.boundary.polyline is not None:
        try:
            sh = shaping(sol.analysis.boundary.polyline)
            print(f"    shape: Rgeo={sh.r_geo:.3f} a={sh.a_minor:.3f} eps={sh.eps:.3f} "
                  f"kappa={sh.kappa_e:.3f} du={sh.delta_u:.3f} dl={sh.delta_l:.3f}")
        except Exception as e:
            print(f"    shaping failed: {e}")
        rec = feature_record(sol.field, geom, sol.analysis)
        print(f"    strikes: ({rec.strike1_x:.3f},{rec.strike1_y:.3f}) "
              f"({rec.strike2_x:.3f},{rec.strike2_y:.3f}) n_x={rec.n_xpoints}")
    if sol.residual_history:
        tail = ", ".join(f"{r:.2e}" for r in sol.residual_history[-1][-4:])
        print(f"    level residuals tail: {tail}")
    return sol


def cmd_calibrate(lams):
    geom = load_geometry(DATA / "iter_like.geom")
    mesh = read_mesh(DATA / "iter_like_coarse.mesh")
    x0 = float(geom.limiter[:, 0].max())
    print(f"x0 = {x0:.3f}")
    for lam in lams:
        try:
            _report(geom, mesh, lam, x0)
        except Exception as e:
            print(f"lam={lam:.4g}: FAILED {type(e).__name__}: {e}")


def cmd_solve(lam, R):
    geom = load_geometry(DATA / "iter_like.geom")
    mesh = read_mesh(DATA / "iter_like_coarse.mesh")
    x0 = float(geom.limiter[:, 0].max())
    _report(geom, mesh, lam, x0, R=R)


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "build"
    if mode == "build":
        cmd_build()
    elif mode == "calibrate":
        lams = [float(a) for a in sys.argv[2:]] or \
            [4e5, 8e5, 1.2e6, 1.8e6, 2.4e6, 3.2e6]
        cmd_calibrate(lams)
    elif mode == "solve":
        cmd_solve(float(sys.argv[2]), int(sys.argv[3]) if len(sys.argv) > 3 else 0)
    else:
        raise SystemExit(f"unknown mode {mode}")
