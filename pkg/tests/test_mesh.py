import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from otmesh import geometry as geo
from otmesh import io
from otmesh.generators import channel_mesh, mapped_mesh, tensor_mesh, unit_square_mesh
from otmesh.master_element import build_master, gauss_lobatto_points
from otmesh.mesh import InvalidMesh, Mesh, NotFound, element_size, h_min, jacobians, validate


def single_square(k=1):
    return mapped_mesh([0.0, 1.0], [0.0, 1.0], k)


def test_single_element_counts():
    m = single_square()
    assert m.n_elements == 1
    assert m.n_nodes_per_element == 4
    assert len(m.boundary_faces) == 4


@pytest.mark.parametrize("n", [2, 5, 8])
def test_hmin_k1(n):
    m, _ = unit_square_mesh(n, 1)
    assert h_min(m) == pytest.approx(1.0 / n, abs=1e-12)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_hmin_gll_spacing(k):
    n = 4
    m, _ = unit_square_mesh(n, k)
    r = gauss_lobatto_points(k)
    assert h_min(m) == pytest.approx(np.diff(r).min() / 2.0 / n, abs=1e-12)


def test_hmin_thin_row():
    delta = 1e-3
    m, _ = tensor_mesh(np.linspace(0, 1, 5), [0.0, delta, 0.5, 1.0], 2)
    assert h_min(m) <= delta
    assert element_size(m).shape == (m.n_elements,)


def test_unit_element_jacobian():
    m = single_square(3)
    det, jinv = jacobians(m, 0)
    assert np.allclose(det, 0.25, atol=1e-14)
    assert np.allclose(jinv, 2.0 * np.eye(2), atol=1e-13)


def test_swapped_corners_flagged():
    coords = single_square(1).coords.copy()
    coords[0, [0, 1]] = coords[0, [1, 0]]
    m = Mesh(1, coords)
    rep = validate(m)
    assert rep.invalid == [0]
    assert rep.min_det < 0


def test_quarter_annulus_jacobian():
    k = 6
    r0, r1, t0, t1 = 1.0, 2.0, 0.0, math.pi / 2

    def polar(X, Y):
        r = r0 + X * (r1 - r0)
        t = t0 + Y * (t1 - t0)
        return r * np.cos(t), r * np.sin(t)

    m = mapped_mesh([0.0, 1.0], [0.0, 1.0], k, polar)
    g = m.volume_geometry
    r = np.hypot(g.points[0, :, 0], g.points[0, :, 1])
    exact = r * (r1 - r0) / 2 * (t1 - t0) / 2
    assert g.det.min() > 0
    assert np.max(np.abs(g.det[0] / exact - 1.0)) < 1e-5
    assert m.area == pytest.approx(math.pi / 4 * (r1**2 - r0**2), rel=1e-7)


@pytest.mark.parametrize("k", [1, 3])
def test_square_area(k):
    m, _ = unit_square_mesh(7, k)
    assert m.area == pytest.approx(1.0, rel=1e-12)


def test_channel_area_and_bbox():
    m, g = channel_mesh(18, 6, 4)
    chord, sag = 1.0, 0.04
    radius = (0.25 * chord**2 + sag**2) / (2 * sag)
    half = math.asin(0.5 * chord / radius)
    cap = 0.5 * radius**2 * (2 * half - math.sin(2 * half))
    assert m.area == pytest.approx(3.0 - cap, rel=1e-10)
    assert np.allclose(m.bbox, [[0, 0], [3, 1]], atol=1e-12)
    assert g.bbox[1, 1] == pytest.approx(1.0)


def test_shared_nodes_agree():
    m, _ = unit_square_mesh(4, 3)
    ids = m.node_ids.ravel()
    pts = m.coords.reshape(-1, 2)
    for gid in np.unique(ids)[::7]:
        same = pts[ids == gid]
        assert np.ptp(same, axis=0).max() <= 1e-10
    assert m.n_global_nodes == (4 * 3 + 1) ** 2


def test_every_boundary_face_tagged():
    m, g = unit_square_mesh(3, 2)
    tags = m.boundary_faces[:, 2]
    assert np.all((tags >= 0) & (tags < len(g)))


def test_locate_cell_centre():
    m, _ = unit_square_mesh(4, 2)
    e, xi, ext = m.locate_point([0.375, 0.625])
    assert e == 1 + 4 * 2
    assert np.allclose(xi, 0.0, atol=1e-12)
    assert not ext


def test_locate_on_shared_edge_continuity():
    from otmesh.fields import ScalarFieldDG, eval as feval

    m, _ = unit_square_mesh(4, 2)
    f = ScalarFieldDG.from_function(m, lambda x, y: x * y + x)
    x = np.array([0.5, 0.3])
    e, xi, _ = m.locate_point(x)
    assert np.allclose(m.master.forward_map(m.coords[e], xi), x, atol=1e-12)
    assert feval(f, x) == pytest.approx(0.5 * 0.3 + 0.5, abs=1e-10)


def test_locate_slightly_outside():
    m, _ = unit_square_mesh(4, 2)
    e, xi, ext = m.locate_point([1.0 + 1e-8, 0.4])
    assert ext
    assert np.all(np.abs(xi) <= 1.0)
    assert m.coords[e][:, 0].max() == pytest.approx(1.0)


def test_locate_far_outside():
    m, _ = unit_square_mesh(2, 1)
    with pytest.raises(NotFound):
        m.locate_point([3.0, 3.0])


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_locate_forward_consistency(a, b):
    m, _ = _curved_mesh()
    x = np.array([a, b])
    e, xi, _ = m.locate_point(x)
    assert np.linalg.norm(m.master.forward_map(m.coords[e], xi)[0] - x) <= 1e-9


_CURVED = {}


def _curved_mesh():
    if "m" not in _CURVED:
        def warp(X, Y):
            return X + 0.05 * np.sin(np.pi * X) * np.sin(np.pi * Y), Y - 0.04 * np.sin(np.pi * X) * np.sin(2 * np.pi * Y)

        _CURVED["m"] = (mapped_mesh(np.linspace(0, 1, 6), np.linspace(0, 1, 6), 3, warp), None)
    return _CURVED["m"]


def test_locator_mean_candidates():
    m, _ = unit_square_mesh(16, 2)
    assert m.locator.mean_candidates <= 4.0


# geometry ------------------------------------------------------------------


def test_line_levelset_normalised():
    s = geo.LineSegment((0.0, 0.0), (2.0, 1.0))
    assert np.linalg.norm(s.grad_c(np.array([[0.3, 0.2]]))[0]) == pytest.approx(1.0)
    assert s.c(np.array([[1.0, 0.5]]))[0] == pytest.approx(0.0, abs=1e-15)


def test_arc_levelset():
    a = geo.ArcSegment((0.0, 0.0), 2.0, 0.0, math.pi / 2)
    x = np.array([[3.0, 0.0], [0.0, 2.0]])
    assert abs(a.c(x)[0]) == pytest.approx(1.0)
    assert a.c(x)[1] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("name", sorted(geo.PRESETS))
def test_corners_are_roots_of_both_segments(name):
    g = geo.PRESETS[name]()
    for p, (i, j) in zip(g.corners, g.corner_segments):
        assert abs(g.segments[i].c(p[None])[0]) <= 1e-10
        assert abs(g.segments[j].c(p[None])[0]) <= 1e-10


def test_slide_interior_point_keeps_segment():
    g = geo.unit_square()
    assert g.slide_one([0.4, 0.0], 0) == 0


def test_slide_past_corner():
    g = geo.unit_square()
    # bottom edge runs (0,0)->(1,0); a point beyond x=1 belongs to the right edge
    assert g.slide_one([1.05, 0.2], 0) == 1
    assert g.slide_one([-0.05, 0.2], 0) == 3


def test_double_ramp_angles():
    g = geo.double_ramp()
    d1 = g.segments[1].end - g.segments[1].start
    d2 = g.segments[2].end - g.segments[2].start
    assert math.degrees(math.atan2(d1[1], d1[0])) == pytest.approx(25.0)
    assert math.degrees(math.atan2(d2[1], d2[0])) == pytest.approx(37.0)
    assert len(g.corners) == 6


def test_closest_point():
    g = geo.unit_square()
    p, s, d = g.closest(np.array([[0.5, 0.1], [0.95, 0.5]]))
    assert np.allclose(p, [[0.5, 0.0], [1.0, 0.5]])
    assert list(s) == [0, 1]
    assert np.allclose(d, [0.1, 0.05])


def test_segment_record_roundtrip():
    for s in geo.bump_channel().segments:
        t = geo.parse_segment(s.to_record())
        x = np.array([[1.2, 0.3]])
        assert t.c(x)[0] == pytest.approx(s.c(x)[0], abs=1e-14)


# io ------------------------------------------------------------------------


def test_save_load_roundtrip(tmp_path):
    m, _ = channel_mesh(6, 2, 3)
    io.save_mesh(m, tmp_path / "c.otm")
    back = io.load_mesh(tmp_path / "c.otm")
    assert np.array_equal(back.coords, m.coords)
    assert np.array_equal(back.boundary_faces, m.boundary_faces)
    assert np.array_equal(back.interior_faces, m.interior_faces)


def test_load_single_element(tmp_path):
    io.save_mesh(single_square(), tmp_path / "one.otm")
    m = io.load_mesh(tmp_path / "one.otm")
    assert m.n_elements == 1 and m.n_nodes_per_element == 4


def test_parse_error_bad_connectivity(tmp_path):
    path = tmp_path / "bad.otm"
    io.save_mesh(single_square(), path)
    lines = path.read_text().splitlines()
    lines[3] = "7 0 -1 0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.ParseError) as exc:
        io.load_mesh(path)
    assert "face record 0" in str(exc.value)
    assert exc.value.lineno == 4


@pytest.mark.parametrize(
    "text, fragment",
    [("", "empty"), ("otm 2 1 1 4\n", "header"), ("otm 1 1 1 9\n", "inconsistent"), ("otm 1 1 1 4\n0 0 1 0\n", "expected 8")],
)
def test_parse_errors(tmp_path, text, fragment):
    path = tmp_path / "x.otm"
    path.write_text(text)
    with pytest.raises(io.ParseError, match=fragment):
        io.load_mesh(path)


def test_load_invalid_mesh_names_element(tmp_path):
    coords = single_square().coords.copy()
    coords[0, [0, 1]] = coords[0, [1, 0]]
    io.save_mesh(Mesh(1, coords), tmp_path / "inv.otm")
    with pytest.raises(InvalidMesh, match="element 0"):
        io.load_mesh(tmp_path / "inv.otm")


def test_field_roundtrip(tmp_path, rng):
    vals = rng.normal(size=(3, 9, 4))
    io.save_field_array(vals, 2, tmp_path / "f.otf")
    k, back = io.load_field_array(tmp_path / "f.otf")
    assert k == 2 and np.array_equal(back, vals)


def test_vtk_writer(tmp_path):
    m, _ = unit_square_mesh(2, 3)
    io.write_vtk(m, tmp_path / "m.vtk", {"x": m.coords[..., 0], "v": m.coords})
    text = (tmp_path / "m.vtk").read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "CELLS 36" in text
    assert "VECTORS v" in text
