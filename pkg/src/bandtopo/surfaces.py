"""Closed oriented quadrilateral meshes in the Brillouin zone.

Three parametric families: spheres around points, tube tori around nodal
loops, and coordinate slice tori.  Meshes are stored as (n_u+1) x (n_v+1)
vertex grids with explicit identifications (seams, poles) so that every
gauge-theoretic computation uses one frame per geometric vertex and the
mesh closes exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, SurfaceError
from .model import TWO_PI, as_k_array, reduce_torus, torus_delta

SPHERE = "sphere"
TUBE = "tube-torus"
SLICE = "slice-torus"


@dataclass
class LoopPath:
    """A closed discretized 1-cycle (closure implied, first != last)."""

    vertices: np.ndarray
    orientation: int = 1
    label: str = ""

    def __len__(self):
        return len(self.vertices)

    def reversed(self):
        return LoopPath(self.vertices[::-1].copy(), -self.orientation, self.label)


def circle_loop(center, radius, normal, n=200, label=""):
    """A planar circle of given center, radius and plane normal."""
    center = as_k_array(center)
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(normal)))] = 1.0
    a = np.cross(normal, ref)
    a /= np.linalg.norm(a)
    b = np.cross(normal, a)
    theta = TWO_PI * np.arange(n) / n
    verts = center + radius * (np.cos(theta)[:, None] * a + np.sin(theta)[:, None] * b)
    return LoopPath(verts, 1, label or f"circle(r={radius:g})")


class ClosedSurface:
    """Oriented closed 2-manifold mesh with explicit vertex identifications.

    ``grid`` has shape (n_u+1, n_v+1, 3); ``index_map`` sends each grid slot
    to its unique geometric vertex in ``points`` (shape (N, 3)).  Plaquettes
    are traversed counterclockwise as seen from the outward (or +axis)
    normal when ``orientation`` is +1.
    """

    def __init__(self, kind, grid, index_map, points, surface_id, meta=None):
        self.kind = kind
        self.grid = grid
        self.index_map = index_map
        self.points = points
        self.surface_id = surface_id
        self.meta = meta or {}
        self.orientation = 1
        self.min_gap_on_surface = None
        self.n_u = grid.shape[0] - 1
        self.n_v = grid.shape[1] - 1
        self._check_quads()

    def _check_quads(self):
        degenerate = 0
        for iu, iv in self.plaquettes():
            ids = {self.index_map[c] for c in self.plaquette_corners(iu, iv)}
            if len(ids) < 3:
                raise SurfaceError("mesh has a fully collapsed quad")
            if len(ids) == 3:
                degenerate += 1
        if self.kind == SPHERE:
            expected = 2 * self.n_u
            if degenerate != expected:
                raise SurfaceError("sphere pole triangles inconsistent")
        elif degenerate:
            raise SurfaceError(f"{self.kind} mesh has degenerate quads")

    # -- combinatorics ---------------------------------------------------

    def plaquettes(self):
        for iu in range(self.n_u):
            for iv in range(self.n_v):
                yield iu, iv

    def plaquette_corners(self, iu, iv):
        """Corner grid slots in traversal order for orientation +1."""
        if self.kind == SLICE:
            order = [(iu, iv), (iu + 1, iv), (iu + 1, iv + 1), (iu, iv + 1)]
        else:
            order = [(iu, iv), (iu, iv + 1), (iu + 1, iv + 1), (iu + 1, iv)]
        if self.orientation < 0:
            order = list(reversed(order))
        return order

    def plaquette_vertex_ids(self, iu, iv):
        return [self.index_map[c] for c in self.plaquette_corners(iu, iv)]

    def reversed(self):
        import copy

        twin = copy.copy(self)
        twin.orientation = -self.orientation
        return twin

    # -- sampled geometry --------------------------------------------------

    def quad_centers(self):
        g = self.grid
        return 0.25 * (g[:-1, :-1] + g[1:, :-1] + g[:-1, 1:] + g[1:, 1:])

    def meridian(self, iu=0, label=None):
        """The v-cycle at fixed u (tube/slice only): a closed LoopPath."""
        if self.kind == SPHERE:
            raise SurfaceError("sphere meshes have no closed meridian cycle")
        verts = self.grid[iu % self.n_u, : self.n_v]
        return LoopPath(
            verts.copy(), 1, label or f"{self.surface_id}:meridian(u={iu})"
        )

    def u_cycle(self, iv=0, label=None):
        if self.kind == SPHERE:
            raise SurfaceError("sphere u-cycles are not closed at the poles")
        verts = self.grid[: self.n_u, iv % self.n_v]
        return LoopPath(verts.copy(), 1, label or f"{self.surface_id}:u-cycle(v={iv})")

    def edge_quad_count(self):
        """Multiset check data: each undirected edge with its quad count."""
        counts = {}
        for iu, iv in self.plaquettes():
            ids = self.plaquette_vertex_ids(iu, iv)
            for a, b in zip(ids, ids[1:] + ids[:1]):
                if a == b:
                    continue  # collapsed pole edge of a degenerate quad
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def signed_solid_angle(self, about):
        """Total signed solid angle of the mesh about a point (4 pi for an
        outward sphere)."""
        about = as_k_array(about)
        total = 0.0
        for iu, iv in self.plaquettes():
            ids = self.plaquette_vertex_ids(iu, iv)
            vecs = [self.points[i] - about for i in ids]
            units = [v / np.linalg.norm(v) for v in vecs]
            total += _solid_angle_triangle(units[0], units[1], units[2])
            total += _solid_angle_triangle(units[0], units[2], units[3])
        return total

    def to_json(self):
        return {
            "schema_version": 1,
            "kind": self.kind,
            "surface_id": self.surface_id,
            "n_u": self.n_u,
            "n_v": self.n_v,
            "orientation": int(self.orientation),
            "vertices": [[float(x) for x in p] for p in self.points],
            "index_map": [[int(i) for i in row] for row in self.index_map],
            "min_gap_on_surface": (
                None
                if self.min_gap_on_surface is None
                else float(self.min_gap_on_surface)
            ),
            "meta": self.meta,
        }


def _solid_angle_triangle(a, b, c):
    """Signed spherical area of a unit-vector triangle (van Oosterom-Strackee)."""
    num = float(np.dot(a, np.cross(b, c)))
    den = 1.0 + float(np.dot(a, b)) + float(np.dot(b, c)) + float(np.dot(c, a))
    return 2.0 * math.atan2(num, den)


def _unique_grid(grid, identify):
    """Build points/index_map from a full grid and an identification rule."""
    n_u1, n_v1 = grid.shape[0], grid.shape[1]
    index_map = np.zeros((n_u1, n_v1), dtype=int)
    points = []
    seen = {}
    for iu in range(n_u1):
        for iv in range(n_v1):
            key = identify(iu, iv)
            if key not in seen:
                seen[key] = len(points)
                points.append(grid[iu, iv])
            index_map[iu, iv] = seen[key]
    return np.array(points), index_map


def sphere_around(center, radius, n_u=64, n_v=64, domain=None, surface_id=None):
    """Latitude-longitude sphere mesh with outward orientation.

    Pole rows are collapsed to single vertices; pole quads degenerate to
    triangles, which downstream flux sums handle natively.
    """
    center = as_k_array(center)
    if radius <= 0:
        raise SurfaceError("sphere radius must be positive")
    if domain is not None and not domain.is_torus:
        if np.any(np.abs(center) + radius > domain.extent + 1e-12):
            raise SurfaceError("sphere exits the continuum box")
    if (domain is None or domain.is_torus) and radius >= math.pi:
        raise SurfaceError("sphere radius must be below pi on the torus")
    phi = TWO_PI * np.arange(n_u + 1) / n_u
    theta = math.pi * np.arange(n_v + 1) / n_v
    st, ct = np.sin(theta), np.cos(theta)
    grid = np.empty((n_u + 1, n_v + 1, 3))
    grid[..., 0] = center[0] + radius * st[None, :] * np.cos(phi)[:, None]
    grid[..., 1] = center[1] + radius * st[None, :] * np.sin(phi)[:, None]
    grid[..., 2] = center[2] + radius * ct[None, :]

    def identify(iu, iv):
        if iv == 0:
            return ("N",)
        if iv == n_v:
            return ("S",)
        return (iu % n_u, iv)

    points, index_map = _unique_grid(grid, identify)
    sid = surface_id or (
        f"sphere(c=({center[0]:.4f},{center[1]:.4f},{center[2]:.4f}),r={radius:g})"
    )
    return ClosedSurface(
        SPHERE, grid, index_map, points, sid,
        meta={"center": [float(x) for x in center], "radius": float(radius)},
    )


def loop_clearance(loop, others=()):
    """Geometric clearance of a loop: min(self-approach, curvature radius,
    distance to other components)."""
    verts = np.asarray(loop.vertices, dtype=float)
    n = len(verts)
    clearance = math.inf
    arc = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(arc)])
    total = cum[-1]
    for i in range(n):
        for j in range(i + 2, n):
            s = min(cum[j] - cum[i], total - (cum[j] - cum[i]))
            chord = np.linalg.norm(verts[j] - verts[i])
            if chord < 0.5 * s:
                clearance = min(clearance, chord)
    # curvature radius from vertex triples
    for i in range(n):
        a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
        r = _circumradius(a, b, c)
        clearance = min(clearance, 2.0 * r)
    for other in others:
        overts = np.asarray(getattr(other, "vertices", other), dtype=float)
        d = np.linalg.norm(verts[:, None, :] - overts[None, :, :], axis=-1).min()
        clearance = min(clearance, d)
    return clearance


def _circumradius(a, b, c):
    ab, ac, bc = b - a, c - a, c - b
    cross = np.linalg.norm(np.cross(ab, ac))
    if cross < 1e-14:
        return math.inf
    return (
        np.linalg.norm(ab) * np.linalg.norm(ac) * np.linalg.norm(bc) / (2.0 * cross)
    )


def _resample_loop(verts, n):
    verts = np.asarray(verts, dtype=float)
    seg = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = total * np.arange(n) / n
    out = np.empty((n, 3))
    j = 0
    closed = np.vstack([verts, verts[:1]])
    for i, s in enumerate(targets):
        while cum[j + 1] < s:
            j += 1
        t = (s - cum[j]) / max(cum[j + 1] - cum[j], 1e-30)
        out[i] = (1 - t) * closed[j] + t * closed[j + 1]
    return out


def _parallel_frames(verts):
    """Rotation-minimizing normal frames along a closed polyline, with the
    closure mismatch spread as a uniform counter-twist."""
    n = len(verts)
    tangents = np.roll(verts, -1, axis=0) - np.roll(verts, 1, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(tangents[0])))] = 1.0
    n0 = ref - np.dot(ref, tangents[0]) * tangents[0]
    n0 /= np.linalg.norm(n0)
    normals = [n0]
    for i in range(1, n):
        v = normals[-1] - np.dot(normals[-1], tangents[i]) * tangents[i]
        normals.append(v / np.linalg.norm(v))
    # closure mismatch in the plane normal to t0
    v = normals[-1] - np.dot(normals[-1], tangents[0]) * tangents[0]
    v /= np.linalg.norm(v)
    cosang = float(np.clip(np.dot(v, n0), -1.0, 1.0))
    sinang = float(np.dot(np.cross(v, n0), tangents[0]))
    alpha = math.atan2(sinang, cosang)
    out_n = np.empty((n, 3))
    out_b = np.empty((n, 3))
    for i in range(n):
        t = tangents[i]
        b = np.cross(t, normals[i])
        ang = alpha * i / n
        out_n[i] = math.cos(ang) * normals[i] + math.sin(ang) * b
        out_b[i] = np.cross(t, out_n[i])
    return out_n, out_b


def tube_around(loop, radius, n_u=64, n_v=64, other_components=(), surface_id=None):
    """Torus mesh around a nodal loop: u along the loop, v around the
    meridian, outward orientation.

    The framing is parallel-transported (rotation-minimizing) so meridians
    carry no spurious twist.  Raises SurfaceError when the radius exceeds a
    third of the loop's clearance (self-approach, curvature, or distance to
    other components).
    """
    verts = np.asarray(loop.vertices, dtype=float)
    clearance = loop_clearance(loop, other_components)
    if radius <= 0:
        raise SurfaceError("tube radius must be positive")
    if radius >= clearance / 3.0:
        raise SurfaceError(
            f"tube radius {radius:g} too large: loop clearance is {clearance:g} "
            "(needs radius < clearance / 3)"
        )
    center = _resample_loop(verts, n_u)
    normals, binormals = _parallel_frames(center)
    vang = TWO_PI * np.arange(n_v + 1) / n_v
    grid = np.empty((n_u + 1, n_v + 1, 3))
    ring = (
        center[:, None, :]
        + radius * np.cos(vang)[None, :, None] * normals[:, None, :]
        + radius * np.sin(vang)[None, :, None] * binormals[:, None, :]
    )
    grid[:n_u] = ring
    grid[n_u] = ring[0]

    def identify(iu, iv):
        return (iu % n_u, iv % n_v)

    points, index_map = _unique_grid(grid, identify)
    sid = surface_id or f"tube(r={radius:g},n={n_u}x{n_v})"
    return ClosedSurface(
        TUBE, grid, index_map, points, sid,
        meta={"radius": float(radius), "loop_length": int(len(verts))},
    )


AXES = {"x": 0, "y": 1, "z": 2}


def slice_torus(axis, value, n_u=64, n_v=64, surface_id=None):
    """Coordinate 2-torus at a fixed momentum component (lattice models).

    Oriented so the plaquette normal points along the +axis direction.
    """
    if axis not in AXES:
        raise SurfaceError(f"slice axis must be one of x, y, z, got {axis!r}")
    a = AXES[axis]
    u_axis, v_axis = (a + 1) % 3, (a + 2) % 3
    us = -math.pi + TWO_PI * np.arange(n_u + 1) / n_u
    vs = -math.pi + TWO_PI * np.arange(n_v + 1) / n_v
    grid = np.empty((n_u + 1, n_v + 1, 3))
    grid[..., a] = float(value)
    grid[..., u_axis] = us[:, None]
    grid[..., v_axis] = vs[None, :]

    def identify(iu, iv):
        return (iu % n_u, iv % n_v)

    points, index_map = _unique_grid(grid, identify)
    sid = surface_id or f"slice({axis}={value:.6g},n={n_u}x{n_v})"
    return ClosedSurface(
        SLICE, grid, index_map, points, sid,
        meta={"axis": axis, "value": float(value)},
    )


def validate(surface, model, threads=1):
    """Sample the direct gap on vertices and quad centers; store the minimum.

    Returns the minimum gap.  Downstream invariants refuse surfaces whose
    stored minimum is too small for their tolerance.
    """
    pts = surface.points
    centers = surface.quad_centers().reshape(-1, 3)
    sample = np.vstack([pts, centers])
    if model.domain.is_torus:
        sample = reduce_torus(sample)
    else:
        model.domain.check(sample)
    gaps = model.direct_gap(sample)
    mg = float(np.min(gaps))
    surface.min_gap_on_surface = mg
    return mg
