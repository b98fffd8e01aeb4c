"""Geometry layer tests: supports, widths, faces, triangulation, volumes.

Reference values are computed by hand or by an independent method (vertex
maxima for supports, shoelace for areas) and then asserted against the LP /
triangulation implementations.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polybracket import geometry as geo
from polybracket.errors import (
    BoundednessError,
    DegenerateInputError,
    DomainError,
)

SQRT2 = math.sqrt(2.0)


def box(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    eye = np.eye(d)
    return geo.Polytope(np.vstack([eye, -eye]), np.concatenate([lo, -hi]))


class TestConstruction:
    def test_normalization(self):
        p = geo.Polytope([[2.0, 0.0], [0.0, 3.0], [-1.0, 0.0], [0.0, -1.0]],
                         [0.0, 0.0, -1.0, -1.0])
        assert np.allclose(np.linalg.norm(p.normals, axis=1), 1.0)
        # offset scaled with the normal: 2x >= 0 is x >= 0
        assert np.isclose(p.offsets[0], 0.0)

    def test_empty_interior_rejected(self):
        with pytest.raises(DegenerateInputError):
            geo.Polytope([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                         [0.0, 0.0, 0.0, 0.0])

    def test_unbounded_rejected(self):
        with pytest.raises(BoundednessError):
            geo.Polytope([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])

    def test_contains_vectorized(self):
        p = geo.unit_box(2)
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [0.0, 0.0]])
        assert list(p.contains(pts)) == [True, False, True]
        assert p.contains(np.array([0.25, 0.75]))


class TestSupportAndWidth:
    def test_square_support_matches_vertex_maximum(self):
        p = geo.unit_box(2)
        for u in [(3.0, 4.0), (-1.0, 2.0), (0.0, -1.0), (1.0, 1.0)]:
            u = np.array(u)
            expected = max(float(u @ v) for v in p.vertices())
            assert geo.support(p, u) == pytest.approx(expected, abs=1e-9)

    def test_width_of_square(self):
        p = geo.unit_box(2)
        assert geo.width(p, np.array([1.0, 0.0])) == pytest.approx(1.0)
        u = np.array([1.0, 1.0]) / SQRT2
        assert geo.width(p, u) == pytest.approx(SQRT2)

    def test_max_width_thin_box(self):
        p = box([0.0, 0.0], [1.0, 1e-3])
        val, direction = geo.max_width(p)
        assert val == pytest.approx(math.sqrt(1.0 + 1e-6), abs=1e-12)
        assert abs(direction[0]) == pytest.approx(1.0 / math.sqrt(1 + 1e-6))

    def test_max_width_square_is_diagonal(self):
        val, _ = geo.max_width(geo.unit_box(2))
        assert val == pytest.approx(SQRT2)


class TestVertices:
    def test_square_vertices(self):
        v = geo.unit_box(2).vertices()
        expected = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        assert np.allclose(v, expected)

    def test_polygon_vertices_on_circumcircle(self):
        p = geo.regular_polygon(6, radius=2.0)
        v = p.vertices()
        assert len(v) == 6
        assert np.allclose(np.linalg.norm(v, axis=1), 2.0, atol=1e-9)

    def test_redundant_constraint_ignored(self):
        p = geo.Polytope([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1]],
                         [0, -1, 0, -1, -5])
        assert len(p.vertices()) == 4


class TestDirectionalDistance:
    def test_axis_direction(self):
        p = geo.unit_box(2)
        x = np.array([0.25, 0.25])
        assert geo.directional_distance(p, x, np.array([1.0, 0.0])) == \
            pytest.approx(0.75)

    def test_diagonal_direction(self):
        p = geo.unit_box(2)
        x = np.array([0.25, 0.25])
        d = geo.directional_distance(p, x, np.array([1.0, 1.0]))
        assert d == pytest.approx(0.75 * SQRT2)

    def test_outside_point_raises(self):
        p = geo.unit_box(2)
        with pytest.raises(DomainError):
            geo.directional_distance(p, np.array([2.0, 0.5]),
                                     np.array([1.0, 0.0]))


class TestProjection:
    def test_outside_point_axis(self):
        p = geo.unit_box(2)
        y, dist = geo.project_onto(p, np.array([2.0, 0.5]))
        assert np.allclose(y, [1.0, 0.5])
        assert dist == pytest.approx(1.0)

    def test_corner_projection(self):
        p = geo.unit_box(2)
        y, dist = geo.project_onto(p, np.array([2.0, 2.0]))
        assert np.allclose(y, [1.0, 1.0])
        assert dist == pytest.approx(SQRT2)

    def test_inside_point_is_fixed(self):
        p = geo.unit_box(2)
        y, dist = geo.project_onto(p, np.array([0.3, 0.8]))
        assert np.allclose(y, [0.3, 0.8])
        assert dist == 0.0

    def test_weighted_projection(self):
        # min 4(y1-2)^2 + (y2-2)^2 over the unit square is at (1, 1).
        p = geo.unit_box(2)
        y, dist = geo.project_onto(p, np.array([2.0, 2.0]),
                                   weights=np.array([4.0, 1.0]))
        assert np.allclose(y, [1.0, 1.0])
        assert dist == pytest.approx(math.sqrt(5.0))


class TestHausdorff:
    def test_translate_distance(self):
        p = geo.unit_box(2)
        q = box([3.0, 4.0], [4.0, 5.0])
        assert geo.hausdorff(p, q) == pytest.approx(5.0)

    def test_nested_boxes(self):
        p = geo.unit_box(2)
        q = box([0.25, 0.25], [0.75, 0.75])
        # farthest point of p from q is a corner of p
        assert geo.hausdorff(p, q) == pytest.approx(0.25 * SQRT2)

    def test_identical_is_zero(self):
        p = geo.unit_box(2)
        assert geo.hausdorff(p, p) == pytest.approx(0.0, abs=1e-12)


class TestFaces:
    def test_square_facets(self):
        p = geo.unit_box(2)
        faces = geo.enumerate_faces(p, 1)
        assert len(faces) == 4
        assert all(f.dim == 1 for f in faces)
        assert faces[0].j_tuple == (0,)

    def test_square_vertices_as_faces(self):
        faces = geo.enumerate_faces(geo.unit_box(2), 2)
        assert len(faces) == 4
        pts = sorted(tuple(np.round(f.affine_point, 9)) for f in faces)
        assert pts == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_tetrahedron_edge_count(self):
        # conv{0, e1, e2, e3}: x,y,z >= 0 and x+y+z <= 1
        p = geo.Polytope(np.vstack([np.eye(3), [[-1, -1, -1]]]),
                         [0, 0, 0, -1])
        assert len(geo.enumerate_faces(p, 2)) == 6
        assert len(geo.enumerate_faces(p, 1)) == 4
        assert len(geo.enumerate_faces(p, 3)) == 4

    def test_codim_zero_is_whole_polytope(self):
        p = geo.unit_box(3)
        faces = geo.enumerate_faces(p, 0)
        assert len(faces) == 1
        assert faces[0].j_tuple == ()
        assert faces[0].dim == 3

    def test_face_polytope_is_unit_segment(self):
        p = geo.unit_box(2)
        face = [f for f in geo.enumerate_faces(p, 1) if f.j_tuple == (0,)][0]
        fp = geo.face_polytope(p, face)
        assert fp.dim == 1
        v = np.sort(fp.vertices().ravel())
        assert v[1] - v[0] == pytest.approx(1.0)
        assert geo.volume(fp) == pytest.approx(1.0)
        # mapping back to ambient coordinates recovers the edge endpoints
        ambient = face.affine_point + v[:, None] * face.tangent_basis
        assert np.allclose(sorted(ambient[:, 1]), [0.0, 1.0])

    def test_cube_is_simple(self):
        ok, violations = geo.check_simple(geo.unit_box(3))
        assert ok
        assert violations == []

    def test_square_pyramid_is_not_simple(self):
        s = 1.0 / SQRT2
        p = geo.Polytope(
            [[0, 0, 1], [-s, 0, -s], [s, 0, -s], [0, -s, -s], [0, s, -s]],
            [0.0, -s, -s, -s, -s])
        apex = np.array([0.0, 0.0, 1.0])
        assert p.contains(apex)
        ok, violations = geo.check_simple(p)
        assert not ok
        assert any(n_tight == 4 for _, n_tight in violations)


class TestTriangulationAndVolume:
    def test_hexagon_fan(self):
        p = geo.regular_polygon(6, radius=1.0)
        sims = geo.triangulate(p)
        assert len(sims) == 4
        total = sum(geo.volume(s) for s in sims)
        assert total == pytest.approx(3.0 * math.sqrt(3.0) / 2.0, abs=1e-9)

    def test_square_volume(self):
        assert geo.volume(geo.unit_box(2)) == pytest.approx(1.0)

    def test_triangle_volume(self):
        assert geo.volume(geo.standard_triangle()) == pytest.approx(0.5)

    def test_cube_volume(self):
        assert geo.volume(geo.unit_box(3)) == pytest.approx(1.0)

    def test_tetrahedron_volume(self):
        p = geo.Polytope(np.vstack([np.eye(3), [[-1, -1, -1]]]),
                         [0, 0, 0, -1])
        assert geo.volume(p) == pytest.approx(1.0 / 6.0)

    def test_simplices_tile_the_polytope(self):
        p = geo.regular_polygon(5, radius=1.3)
        sims = geo.triangulate(p)
        assert sum(geo.volume(s) for s in sims) == \
            pytest.approx(geo.volume(p), abs=1e-9)
        for s in sims:
            assert np.all(p.contains(s.vertices(), tol=1e-7))

    def test_vertex_face_volume_is_one(self):
        p = geo.unit_box(2)
        f = geo.enumerate_faces(p, 2)[0]
        assert geo.face_volume(p, f) == 1.0

    def test_monte_carlo_agrees(self):
        p = geo.regular_polygon(5, radius=1.0)
        est = geo.monte_carlo_volume(p, 200_000, seed=7)
        assert est == pytest.approx(geo.volume(p), rel=0.02)


class TestChebyshev:
    def test_square_center(self):
        c, r = geo.unit_box(2).chebyshev()
        assert np.allclose(c, [0.5, 0.5])
        assert r == pytest.approx(0.5)

    def test_triangle_incenter(self):
        c, r = geo.standard_triangle().chebyshev()
        expected_r = (2.0 - SQRT2) / 2.0
        assert r == pytest.approx(expected_r, abs=1e-9)
        assert np.allclose(c, [expected_r, expected_r], atol=1e-8)


class TestSerialization:
    def test_round_trip(self):
        p = geo.regular_polygon(5, radius=2.0, center=(0.5, -0.25))
        q = geo.from_json(geo.to_json(p))
        assert geo.hausdorff(p, q) == pytest.approx(0.0, abs=1e-9)

    def test_json_fields(self):
        data = json.loads(geo.to_json(geo.unit_box(2)))
        assert data["dim"] == 2
        assert len(data["normals"]) == 4


@st.composite
def boxes(draw, d):
    lo = draw(st.lists(st.floats(-5, 5), min_size=d, max_size=d))
    side = draw(st.lists(st.floats(0.1, 5), min_size=d, max_size=d))
    lo = np.array(lo)
    return box(lo, lo + np.array(side))


class TestBoxProperties:
    @settings(max_examples=25, deadline=None)
    @given(boxes(2))
    def test_volume_is_side_product(self, p):
        b = p.bbox()
        assert geo.volume(p) == pytest.approx(
            float(np.prod(b[:, 1] - b[:, 0])), rel=1e-7)

    @settings(max_examples=25, deadline=None)
    @given(boxes(2), st.floats(-3, 3), st.floats(-3, 3))
    def test_projection_lands_inside(self, p, x0, x1):
        y, dist = geo.project_onto(p, np.array([x0, x1]))
        assert p.contains(y, tol=1e-6)
        assert dist >= 0.0

    @settings(max_examples=25, deadline=None)
    @given(boxes(3))
    def test_max_width_dominates_axis_widths(self, p):
        val, _ = geo.max_width(p)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            assert val >= geo.width(p, e) - 1e-9
