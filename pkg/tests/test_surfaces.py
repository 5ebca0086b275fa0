import math

import numpy as np
import pytest

import bandtopo as bt
from bandtopo.exceptions import SurfaceError
from bandtopo.surfaces import loop_clearance


class TestSphere:
    def test_quad_count_and_poles(self):
        s = bt.sphere_around([0, 0, math.pi / 2], 0.3, 32, 32)
        assert s.n_u == 32 and s.n_v == 32
        # poles are single vertices: unique points = 32*31 + 2
        assert len(s.points) == 32 * 31 + 2
        assert len(list(s.plaquettes())) == 32 * 32

    def test_solid_angle_outward(self):
        s = bt.sphere_around([0.5, -0.2, 0.1], 0.4, 24, 24)
        omega = s.signed_solid_angle([0.5, -0.2, 0.1])
        assert abs(omega - 4 * math.pi) < 1e-6

    def test_reversed_orientation(self):
        s = bt.sphere_around([0, 0, 0], 0.4, 16, 16)
        omega = s.reversed().signed_solid_angle([0, 0, 0])
        assert abs(omega + 4 * math.pi) < 1e-6

    def test_validation_excludes_center(self, weyl2):
        s = bt.sphere_around([0, 0, math.pi / 2], 0.3, 32, 32)
        assert bt.validate(s, weyl2) > 0.1

    def test_box_exit_error(self, four_band):
        with pytest.raises(SurfaceError):
            bt.sphere_around([2.9, 0, 0], 0.5, 16, 16, domain=four_band.domain)

    def test_torus_radius_cap(self):
        with pytest.raises(SurfaceError):
            bt.sphere_around([0, 0, 0], 3.5, 16, 16)

    def test_edges_shared_by_two_quads(self):
        s = bt.sphere_around([0, 0, 0], 0.3, 12, 12)
        counts = s.edge_quad_count()
        assert set(counts.values()) == {2}


class TestTube:
    def test_closed_mesh(self, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        t = bt.tube_around(loop, 0.15, 32, 32)
        assert len(t.points) == 32 * 32
        counts = t.edge_quad_count()
        assert set(counts.values()) == {2}

    def test_validation_positive(self, nodal_loop2, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        t = bt.tube_around(loop, 0.15, 32, 32)
        assert bt.validate(t, nodal_loop2) > 0.05

    def test_radius_too_large(self, nodal_loop2_locus):
        with pytest.raises(SurfaceError):
            bt.tube_around(nodal_loop2_locus.loops[0], 10.0, 16, 16)

    def test_meridian_extraction(self, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        t = bt.tube_around(loop, 0.15, 32, 48)
        mer = t.meridian(0)
        assert len(mer) == 48
        # the meridian encircles the nodal line once: winding of the local
        # (h1, h3) field around it is +-1 (checked in invariants tests); here
        # check geometry: all meridian points at tube-radius distance from
        # the loop polyline
        d = np.linalg.norm(
            mer.vertices[:, None, :] - loop.vertices[None, :, :], axis=-1
        ).min(axis=1)
        assert np.max(np.abs(d - 0.15)) < 0.02

    def test_outward_orientation(self, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        t = bt.tube_around(loop, 0.15, 24, 24)
        # plaquette normals point away from the loop core
        iu, iv = 3, 5
        ids = t.plaquette_vertex_ids(iu, iv)
        quad = t.points[ids]
        center = quad.mean(axis=0)
        normal = np.cross(quad[1] - quad[0], quad[3] - quad[0])
        core = loop.vertices[
            np.argmin(np.linalg.norm(loop.vertices - center, axis=1))
        ]
        assert np.dot(normal, center - core) > 0

    def test_gap_decreases_with_radius(self, nodal_loop2, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        gaps = [
            bt.validate(bt.tube_around(loop, r, 24, 24), nodal_loop2)
            for r in (0.20, 0.12, 0.06)
        ]
        assert gaps[0] > gaps[1] > gaps[2] > 0

    def test_clearance_accounts_for_other_components(self, four_band_locus):
        loop = [l for l in four_band_locus.loops if l.gap_index == 2][0]
        arc = four_band_locus.open_arcs[0]
        solo = loop_clearance(loop)
        with_arc = loop_clearance(loop, [arc.vertices])
        assert with_arc <= solo
        assert abs(with_arc - 1.0) < 0.05  # circle radius 1 around the axis
        with pytest.raises(SurfaceError):
            bt.tube_around(loop, 0.4, 16, 16, other_components=[arc.vertices])


class TestSliceTorus:
    def test_valid_slice(self, weyl2):
        s = bt.slice_torus("z", 0.0, 32, 32)
        assert bt.validate(s, weyl2) > 1.0

    def test_slice_through_weyl_point(self, weyl2):
        s = bt.slice_torus("z", math.pi / 2, 32, 32)
        assert bt.validate(s, weyl2) < 0.2

    def test_axis_x_slice(self, weyl2):
        s = bt.slice_torus("x", 1.0, 32, 32)
        assert bt.validate(s, weyl2) > 0.1

    def test_unknown_axis(self):
        with pytest.raises(SurfaceError):
            bt.slice_torus("w", 0.0)

    def test_closed(self):
        s = bt.slice_torus("y", 0.3, 16, 16)
        assert len(s.points) == 16 * 16
        assert set(s.edge_quad_count().values()) == {2}


class TestLoopPath:
    def test_circle_loop(self):
        c = bt.circle_loop([0, 0, 0], 0.5, [0, 0, 1], 100)
        assert len(c) == 100
        assert np.allclose(np.linalg.norm(c.vertices[:, :2], axis=1), 0.5)
        assert np.allclose(c.vertices[:, 2], 0.0)

    def test_reversed(self):
        c = bt.circle_loop([0, 0, 0], 0.5, [0, 0, 1], 10)
        r = c.reversed()
        assert np.allclose(r.vertices, c.vertices[::-1])
        assert r.orientation == -c.orientation

    def test_surface_export(self, weyl2):
        s = bt.sphere_around([0, 0, 0], 0.3, 8, 8)
        bt.validate(s, weyl2)
        payload = s.to_json()
        assert payload["schema_version"] == 1
        assert payload["kind"] == "sphere"
        assert len(payload["vertices"]) == len(s.points)
        assert payload["min_gap_on_surface"] is not None
