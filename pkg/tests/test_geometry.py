import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString

from tokamak_uq.geometry import (Coil, CurrentVector, GeometryError,
                                 ReactorGeometry, classify_point,
                                 coil_current_density, load_geometry,
                                 point_in_polygon, save_geometry)

from conftest import DATA, make_box_geometry, unit_coil


def test_bundled_geometry_invariants(geom):
    assert geom.n_coils == 12
    assert geom.gamma_radius == 14.5
    # every structure vertex strictly inside Gamma
    for poly, _closed in geom.structure_polylines():
        assert np.all(np.hypot(poly[:, 0], poly[:, 1]) < geom.gamma_radius)
    for c in geom.coils:
        x0, x1, y0, y1 = c.bounds()
        corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        assert np.all(np.hypot(corners[:, 0], corners[:, 1]) < geom.gamma_radius)
        assert x0 > 0.0
        assert c.area == c.width * c.height > 0.0


def test_limiter_simple_closed(geom):
    ring = LineString(np.vstack([geom.limiter, geom.limiter[:1]]))
    assert ring.is_simple
    assert ring.is_closed


def test_roundtrip_bit_exact(geom, tmp_path):
    p = tmp_path / "copy.geom"
    save_geometry(geom, p)
    again = load_geometry(p)
    assert np.array_equal(again.limiter, geom.limiter)
    assert np.array_equal(again.vessel_outer, geom.vessel_outer)
    assert len(again.divertor) == len(geom.divertor)
    for a, b in zip(again.divertor, geom.divertor):
        assert np.array_equal(a, b)
    for ca, cb in zip(again.coils, geom.coils):
        assert ca == cb
    assert again.gamma_radius == geom.gamma_radius


def test_coil_left_of_axis_rejected():
    g = make_box_geometry()
    bad = Coil(coil_id=0, center=(-1.0, 0.0), width=0.5, height=0.5,
               reference_current=1.0)
    with pytest.raises(GeometryError, match="half-plane|x"):
        ReactorGeometry(coils=(bad,), limiter=g.limiter, divertor=g.divertor,
                        vessel_outer=g.vessel_outer,
                        gamma_radius=g.gamma_radius)


def test_empty_coil_list_is_valid():
    g = make_box_geometry()
    assert g.n_coils == 0
    assert len(g.coil_areas()) == 0


def test_current_density_examples():
    g = make_box_geometry()
    g2 = ReactorGeometry(coils=(unit_coil(current=-1.4e6),),
                         limiter=g.limiter, divertor=g.divertor,
                         vessel_outer=g.vessel_outer,
                         gamma_radius=g.gamma_radius)
    d = coil_current_density(g2, CurrentVector([-1.4e6]))
    assert d[0] == -1.4e6          # unit area coil

    wide = Coil(coil_id=0, center=(2.0, 0.0), width=2.0, height=1.0,
                reference_current=3.0)
    g3 = ReactorGeometry(coils=(wide,), limiter=g.limiter,
                         divertor=g.divertor, vessel_outer=g.vessel_outer,
                         gamma_radius=g.gamma_radius)
    assert coil_current_density(g3, CurrentVector([3.0]))[0] == 1.5
    assert coil_current_density(g3, CurrentVector([0.0]))[0] == 0.0


def test_current_density_length_mismatch(geom):
    with pytest.raises(GeometryError):
        coil_current_density(geom, CurrentVector([1.0, 2.0]))


@given(a=st.floats(-1e3, 1e3, allow_nan=False))
def test_current_density_linear_in_current(a):
    g = make_box_geometry()
    g2 = ReactorGeometry(coils=(unit_coil(), unit_coil(coil_id=1, center=(3.0, 1.0))),
                         limiter=g.limiter, divertor=g.divertor,
                         vessel_outer=g.vessel_outer, gamma_radius=g.gamma_radius)
    base = coil_current_density(g2, CurrentVector([2.0, -5.0]))
    scaled = coil_current_density(g2, CurrentVector([2.0 * a, -5.0 * a]))
    assert np.allclose(scaled, a * np.asarray(base), rtol=1e-13, atol=1e-300)


def test_classify_point_examples(geom, reference_solution):
    c0 = geom.coils[0]
    tag = classify_point(geom, c0.center)
    assert tag.kind == "coil" and tag.coil_id == c0.coil_id
    far = classify_point(geom, (2.0 * geom.gamma_radius, 0.0))
    assert far.kind == "exterior_of_gamma"
    snap = classify_point(geom, tuple(geom.limiter[0]))
    assert snap.kind == "on_structure"
    # the reference magnetic axis lands inside the limiter
    axis = reference_solution.analysis.crit.axis_point
    assert classify_point(geom, axis).kind == "inside_limiter"
    assert point_in_polygon(axis, geom.limiter)


@settings(max_examples=300)
@given(x=st.floats(0.0, 20.0, allow_nan=False),
       y=st.floats(-20.0, 20.0, allow_nan=False))
def test_classify_point_partition(x, y):
    g = make_box_geometry()
    tag = classify_point(g, (x, y))
    assert tag.kind in {"coil", "inside_limiter", "between_walls",
                        "exterior_of_gamma", "on_structure"}


def test_current_vector_validation():
    with pytest.raises(GeometryError):
        CurrentVector([[1.0, 2.0]])
    with pytest.raises(GeometryError):
        CurrentVector([1.0, float("nan")])
    v = CurrentVector([1.0, 2.0, 3.0])
    assert len(v) == 3
    assert np.array_equal(np.asarray(v), [1.0, 2.0, 3.0])


def test_load_geometry_missing_file(tmp_path):
    with pytest.raises((GeometryError, OSError)):
        load_geometry(tmp_path / "nope.geom")


def test_bundled_files_present():
    assert (DATA / "iter_like.geom").is_file()
    assert (DATA / "iter_like_coarse.mesh").is_file()
