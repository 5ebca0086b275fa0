import math

import numpy as np
import pytest

import bandtopo as bt
from bandtopo.exceptions import LocusAmbiguityError, RefinementError
from bandtopo.locus import scan_grid, split_components, trace_loops
from bandtopo.model import CoefficientSpec, TwoBandField, model_from_field, torus_delta

from conftest import dense_zero_count, gapped_model, random_two_band


def cluster_count(scan, gap_index=1):
    from bandtopo.locus import _cluster_cells

    return len(
        _cluster_cells(scan.flagged[gap_index], scan.grid.n_cells, scan.grid.torus)
    )


class TestScanGrid:
    def test_gapped_model_empty(self):
        scan = scan_grid(gapped_model(), resolution=16, gap_threshold=0.5)
        assert scan.flagged[1] == []

    def test_weyl_two_clusters(self, weyl2):
        scan = scan_grid(weyl2, resolution=32, gap_threshold=0.3)
        assert cluster_count(scan) == 2
        # clusters sit around (0, 0, +-pi/2)
        from bandtopo.locus import _cluster_cells

        clusters = _cluster_cells(scan.flagged[1], 32, True)
        centers = []
        for cl in clusters:
            pts = np.array([scan.grid.cell_center(c) for c in cl])
            centers.append(pts.mean(axis=0))
        zs = sorted(c[2] for c in centers)
        assert abs(zs[0] + math.pi / 2) < 0.3
        assert abs(zs[1] - math.pi / 2) < 0.3

    def test_nodal_ring_cluster(self, nodal_loop2):
        scan = scan_grid(nodal_loop2, resolution=32, gap_threshold=0.3)
        assert cluster_count(scan) == 1
        cells = np.array(scan.flagged[1])
        centers = np.array([scan.grid.cell_center(c) for c in cells])
        assert np.max(np.abs(centers[:, 2])) < 0.5  # confined to the kz = 0 plane

    def test_determinism(self, weyl2):
        a = scan_grid(weyl2, resolution=16, gap_threshold=0.4)
        b = scan_grid(weyl2, resolution=16, gap_threshold=0.4)
        assert a.flagged == b.flagged

    def test_threads_do_not_change_result(self, weyl2):
        a = scan_grid(weyl2, resolution=16, gap_threshold=0.4, threads=1)
        b = scan_grid(weyl2, resolution=16, gap_threshold=0.4, threads=4)
        assert a.flagged == b.flagged

    def test_resolution_floor(self, weyl2):
        with pytest.raises(ValueError):
            scan_grid(weyl2, resolution=4)


class TestRefinePoint:
    def test_weyl_seed(self, weyl2):
        p = bt.refine_point(weyl2, [0.1, -0.1, 1.5])
        assert np.linalg.norm(p.position - np.array([0, 0, math.pi / 2])) < 1e-6
        assert p.residual_gap < 1e-8

    def test_gapped_seed_fails(self):
        with pytest.raises(RefinementError) as info:
            bt.refine_point(gapped_model(), [0.3, 0.3, 0.3])
        assert info.value.residual is not None

    def test_exact_zero_zero_iterations(self, weyl2):
        p = bt.refine_point(weyl2, [0.0, 0.0, math.pi / 2])
        assert p.refinement_iterations == 0
        assert p.residual_gap < 1e-10


class TestTraceLoops:
    def test_nodal_loop_planar(self, nodal_loop2):
        scan = scan_grid(nodal_loop2, resolution=32)
        loops, arcs = trace_loops(nodal_loop2, scan)
        assert len(loops) == 1 and not arcs
        loop = loops[0]
        assert np.max(np.abs(loop.vertices[:, 2])) < 1e-6
        assert loop.max_vertex_gap < 1e-6

    def test_four_band_loop_and_arc(self, four_band_locus):
        loops = [l for l in four_band_locus.loops]
        arcs = four_band_locus.open_arcs
        assert len(loops) == 1 and len(arcs) == 1
        loop = loops[0]
        # circle of radius |m| = 1 in the kx = 0 plane
        assert np.max(np.abs(loop.vertices[:, 0])) < 1e-6
        radii = np.linalg.norm(loop.vertices[:, 1:], axis=1)
        assert np.max(np.abs(radii - 1.0)) < 1e-6
        # the open arc runs along the kx axis and hits the box boundary
        arc = arcs[0]
        assert np.max(np.abs(arc.vertices[:, 1:])) < 1e-6
        assert np.max(np.abs(arc.vertices[:, 0])) > 2.5

    def test_weyl_zero_loops(self, weyl2):
        scan = scan_grid(weyl2, resolution=32)
        loops, arcs = trace_loops(weyl2, scan)
        assert loops == [] and arcs == []

    def test_nodal_surface_is_ambiguous(self):
        # gap vanishes on the 2D sheets cos kz = 0.3: dimension must be
        # rejected loudly
        h1 = CoefficientSpec([("cos", (0, 0, 1), 1.0), ("cos", (0, 0, 0), -0.3)])
        field = TwoBandField([h1, CoefficientSpec([]), CoefficientSpec([])])
        m = model_from_field("nodal-surface", field, reality=True)
        with pytest.raises(LocusAmbiguityError):
            bt.extract_locus(m, resolution=16)

    def test_consecutive_vertex_spacing(self, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        spacing = 2 * math.pi / 32
        deltas = np.linalg.norm(
            np.roll(loop.vertices, -1, axis=0) - loop.vertices, axis=1
        )
        assert np.max(deltas) < 2 * spacing

    def test_orientation_convention(self, nodal_loop2_locus):
        loop = nodal_loop2_locus.loops[0]
        t = loop.vertices[1] - loop.vertices[0]
        t = t / np.linalg.norm(t)
        lead = next(c for c in t if abs(c) > 1e-6)
        assert lead > 0


class TestSplitComponents:
    def test_empty(self):
        assert split_components(bt.NodalLocus()) == []

    def test_two_points(self, weyl2_locus):
        comps = split_components(weyl2_locus)
        assert [c.kind for c in comps] == ["point", "point"]
        assert [c.id for c in comps] == ["P0", "P1"]

    def test_linked_loops_two_components(self, four_band_locus):
        comps = split_components(four_band_locus)
        kinds = sorted(c.kind for c in comps)
        assert kinds == ["arc", "loop"]

    def test_lattice_component_split(self, four_band_lattice_locus):
        comps = split_components(four_band_lattice_locus)
        fermi = [c for c in comps if c.kind == "loop" and c.gap_index == 2]
        lines = [c for c in comps if c.kind == "loop" and c.gap_index == 1]
        assert len(fermi) == 8
        assert len(lines) == 4
        assert all(c.item.is_contractible for c in fermi)
        assert all(not c.item.is_contractible for c in lines)


class TestLocusInvariants:
    def test_reported_gaps_below_tolerance(self, weyl2_locus, nodal_loop2_locus):
        for p in weyl2_locus.points:
            assert p.residual_gap < 1e-8
        for l in nodal_loop2_locus.loops:
            assert l.max_vertex_gap < 1e-6

    def test_resolution_doubling_points(self, weyl2):
        a = bt.extract_locus(weyl2, resolution=16)
        b = bt.extract_locus(weyl2, resolution=32)
        pa = sorted(tuple(np.round(p.position, 9)) for p in a.points)
        pb = sorted(tuple(np.round(p.position, 9)) for p in b.points)
        assert len(pa) == len(pb) == 2
        for x, y in zip(pa, pb):
            assert np.linalg.norm(np.array(x) - np.array(y)) < 1e-6

    def test_resolution_doubling_loops_hausdorff(self, nodal_loop2):
        a = bt.extract_locus(nodal_loop2, resolution=16).loops[0].vertices
        b = bt.extract_locus(nodal_loop2, resolution=32).loops[0].vertices
        d = 0.0
        for p in a:
            d = max(d, np.linalg.norm(torus_delta(b, p), axis=-1).min())
        for p in b:
            d = max(d, np.linalg.norm(torus_delta(a, p), axis=-1).min())
        assert d < 2 * math.pi / 16

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_counts_match_dense_oracle(self, seed):
        model = random_two_band(seed)
        locus = bt.extract_locus(model, resolution=24)
        oracle = dense_zero_count(model.two_band_field, 96)
        assert len(locus.points) == oracle
        assert len(locus.loops) == 0

    def test_export_round_trip(self, four_band_locus):
        payload = four_band_locus.to_json()
        assert payload["schema_version"] == 1
        kinds = sorted(c["type"] for c in payload["components"])
        assert kinds == ["arc", "loop"]
        ids = [c["id"] for c in payload["components"]]
        assert len(set(ids)) == len(ids)
