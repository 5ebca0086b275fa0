"""Extraction of the band-crossing locus: isolated points and nodal curves.

The pipeline is scan (coarse grid flagging), cluster (torus-aware connected
components of flagged cells), classify (point-like vs curve-like), then
refine (Newton / gap minimization) or trace (predictor-corrector marching
along the zero curve).  Degenerate clusters fail loudly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .exceptions import LocusAmbiguityError, RefinementError
from .model import TWO_PI, as_k_array, reduce_torus, torus_delta

POINT_TOL = 1e-8
VERTEX_TOL = 1e-6
SCAN_CHUNKS = 16


# -- grid geometry -----------------------------------------------------------


class ScanGrid:
    """Uniform sampling grid over the torus or a continuum box."""

    def __init__(self, model, resolution):
        if resolution < 8:
            raise ValueError("scan resolution must be at least 8 per axis")
        self.resolution = int(resolution)
        self.torus = model.domain.is_torus
        if self.torus:
            self.origin = np.full(3, -math.pi)
            self.spacing = TWO_PI / self.resolution
            self.npoints = self.resolution
        else:
            ext = model.domain.extent
            self.origin = np.full(3, -ext)
            self.spacing = 2.0 * ext / self.resolution
            self.npoints = self.resolution + 1

    def points(self):
        axes = [self.origin[a] + self.spacing * np.arange(self.npoints) for a in range(3)]
        kx, ky, kz = np.meshgrid(*axes, indexing="ij")
        return np.stack([kx, ky, kz], axis=-1)

    def cell_center(self, idx):
        return self.origin + self.spacing * (np.asarray(idx, dtype=float) + 0.5)

    def cell_corner_indices(self, idx):
        i, j, l = idx
        corners = []
        for di in (0, 1):
            for dj in (0, 1):
                for dl in (0, 1):
                    corners.append(
                        (
                            (i + di) % self.npoints if self.torus else i + di,
                            (j + dj) % self.npoints if self.torus else j + dj,
                            (l + dl) % self.npoints if self.torus else l + dl,
                        )
                    )
        return corners

    @property
    def n_cells(self):
        return self.resolution


@dataclass
class ScanResult:
    """Flagged cells per gap index, plus their sampled minimal gaps."""

    model: object
    resolution: int
    grid: ScanGrid
    gap_threshold: dict
    flagged: dict  # gap_index -> list of (i, j, l) cell index triples
    cell_min_gap: dict  # gap_index -> {cell: min sampled gap}

    def cells(self, gap_index=None):
        if gap_index is None:
            out = []
            for g in sorted(self.flagged):
                out.extend((g, c) for c in self.flagged[g])
            return out
        return [(gap_index, c) for c in self.flagged.get(gap_index, [])]


def _gap_on_grid(model, pts, gap_index, threads=1):
    """Direct gap sampled on a full grid, chunked for thread-level parallelism."""
    flat = pts.reshape(-1, 3)
    chunks = np.array_split(np.arange(flat.shape[0]), SCAN_CHUNKS)

    def job(sel):
        return model.direct_gap(flat[sel], gap_index=gap_index)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(sel) for sel in chunks]
    return np.concatenate(parts).reshape(pts.shape[:-1])


def scan_grid(model, resolution=48, gap_threshold=None, gap_index=None, threads=1):
    """Flag grid cells whose minimal sampled direct gap is below threshold.

    ``gap_index=None`` scans every gap between bands 1..occupied_count, so
    crossings inside the occupied set (companion nodal lines) are found
    along with the Fermi-level locus.  With no explicit threshold, one is
    derived per gap from the largest neighbor-to-neighbor gap variation on
    the scan grid (a Lipschitz estimate), which guarantees cells containing
    a zero are flagged.
    """
    grid = ScanGrid(model, resolution)
    pts = grid.points()
    gaps = range(1, model.occupied_count + 1) if gap_index is None else [int(gap_index)]
    flagged = {}
    thresholds = {}
    min_gaps = {}
    for g in gaps:
        gap = _gap_on_grid(model, pts, g, threads=threads)
        n = grid.n_cells
        mins = np.full((n, n, n), np.inf)
        maxs = np.full((n, n, n), -np.inf)
        for di in (0, 1):
            for dj in (0, 1):
                for dl in (0, 1):
                    if grid.torus:
                        block = np.roll(np.roll(np.roll(gap, -di, 0), -dj, 1), -dl, 2)
                    else:
                        block = gap[di : di + n, dj : dj + n, dl : dl + n]
                    mins = np.minimum(mins, block)
                    maxs = np.maximum(maxs, block)
        spread = maxs - mins
        if gap_threshold is None:
            # a cell containing a zero has min corner gap below its own
            # corner spread; the absolute floor catches zeros centered so
            # symmetrically that their own cell's corner spread vanishes
            floor = 0.12 * float(np.max(spread))
            mask = mins < np.maximum(1.35 * spread, floor)
            thresholds[g] = float(np.max(spread)) * 1.35
        else:
            mask = mins < float(gap_threshold)
            thresholds[g] = float(gap_threshold)
        idx = np.argwhere(mask)
        flagged[g] = [tuple(map(int, t)) for t in idx]
        min_gaps[g] = {tuple(map(int, t)): float(mins[tuple(t)]) for t in idx}
    return ScanResult(model, resolution, grid, thresholds, flagged, min_gaps)


# -- clustering --------------------------------------------------------------


def _cluster_cells(cells, n, torus):
    """Connected components of cell index triples under 26-adjacency.

    Returns clusters as lists of unwrapped integer triples (torus clusters
    are unwrapped from a seed so their bounding boxes are meaningful).
    """
    remaining = set(cells)
    clusters = []
    offsets = [
        (di, dj, dl)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        for dl in (-1, 0, 1)
        if (di, dj, dl) != (0, 0, 0)
    ]
    while remaining:
        seed = min(remaining)
        remaining.discard(seed)
        frontier = [seed]
        unwrapped = {seed: seed}
        while frontier:
            cur = frontier.pop()
            ux, uy, uz = unwrapped[cur]
            for off in offsets:
                if torus:
                    nb = tuple((cur[a] + off[a]) % n for a in range(3))
                else:
                    nb = tuple(cur[a] + off[a] for a in range(3))
                if nb in remaining:
                    remaining.discard(nb)
                    unwrapped[nb] = (ux + off[0], uy + off[1], uz + off[2])
                    frontier.append(nb)
        clusters.append(sorted(unwrapped.values()))
    return clusters


def _bbox_diameter(cluster):
    arr = np.array(cluster)
    return float(np.max(arr.max(axis=0) - arr.min(axis=0)))


# -- refinement --------------------------------------------------------------


def _gap_value(model, k, gap_index):
    return float(model.direct_gap(np.asarray(k, dtype=float), gap_index=gap_index))


def refine_point(model, seed, gap_index=None, tol=POINT_TOL, max_iter=60):
    """Refine a gap zero to a WeylPoint with residual gap below tol.

    Two-band models use damped Newton on h(k) = 0; multiband models
    minimize the squared gap.  Raises RefinementError on non-convergence.
    """
    g = model.occupied_count if gap_index is None else int(gap_index)
    k = np.array(as_k_array(seed), dtype=float)
    field = model.two_band_field if model.band_count == 2 else None

    gap0 = _gap_value(model, k, g)
    if gap0 < tol:
        return WeylPoint(_canonical_position(model, k), gap0, 0, gap_index=g)

    if field is not None:
        k, iterations = _newton_on_field(field, k, tol / 2.0, max_iter)
    else:
        k, iterations = _minimize_gap(model, k, g, tol, max_iter)

    gap = _gap_value(model, k, g)
    if gap >= tol or not np.all(np.isfinite(k)):
        raise RefinementError(
            f"refinement did not reach gap < {tol:g} (residual {gap:.3e})",
            residual=gap,
            position=k,
            iterations=iterations,
        )
    return WeylPoint(_canonical_position(model, k), gap, iterations, gap_index=g)


def _canonical_position(model, k):
    return reduce_torus(k) if model.domain.is_torus else np.asarray(k, dtype=float)


def _newton_on_field(field, k, htol, max_iter):
    step_fd = 1e-6
    for it in range(1, max_iter + 1):
        h = field(k)
        if np.linalg.norm(h) < htol:
            return k, it - 1
        jac = np.empty((3, 3))
        for a in range(3):
            dk = np.zeros(3)
            dk[a] = step_fd
            jac[:, a] = (field(k + dk) - field(k - dk)) / (2 * step_fd)
        try:
            delta = np.linalg.solve(jac, -h)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        norm0 = np.linalg.norm(h)
        for _ in range(20):
            trial = k + scale * delta
            if np.linalg.norm(field(trial)) < norm0:
                k = trial
                break
            scale *= 0.5
        else:
            break
    return k, max_iter


def _minimize_gap(model, k, gap_index, tol, max_iter):
    def q(x):
        return _gap_value(model, x, gap_index) ** 2

    res = minimize(
        q,
        k,
        method="Nelder-Mead",
        options={
            "xatol": 1e-12,
            "fatol": (tol / 4.0) ** 4,
            "maxiter": 400 * max_iter,
            "maxfev": 400 * max_iter,
        },
    )
    return np.asarray(res.x, dtype=float), int(res.nit)


# -- curve tracing ------------------------------------------------------------


def _gap_tangent(model, k, gap_index, fd):
    """Unit tangent of the nodal curve from the null space of Hess(gap^2)."""
    hess = np.empty((3, 3))
    base = _gap_value(model, k, gap_index) ** 2
    for a in range(3):
        for b in range(a, 3):
            da = np.zeros(3)
            db = np.zeros(3)
            da[a] = fd
            db[b] = fd
            qpp = _gap_value(model, k + da + db, gap_index) ** 2
            qpm = _gap_value(model, k + da - db, gap_index) ** 2
            qmp = _gap_value(model, k - da + db, gap_index) ** 2
            qmm = _gap_value(model, k - da - db, gap_index) ** 2
            hess[a, b] = hess[b, a] = (qpp - qpm - qmp + qmm) / (4 * fd * fd)
    _ = base
    w, v = np.linalg.eigh(hess)
    return v[:, 0], w


def _correct_to_curve(model, k, tangent, gap_index, tol, fd, max_iter=40):
    """Pull a point onto the zero curve: Newton on gap^2 in the plane normal
    to the tangent, re-estimating the tangent plane as the point closes in."""
    total_it = 0
    for _outer in range(8):
        basis = _normal_basis(tangent)
        for _ in range(max_iter):
            gap = _gap_value(model, k, gap_index)
            if gap < tol:
                return k, total_it
            total_it += 1
            # finite-difference step tracks the distance to the zero so the
            # truncation bias shrinks quadratically as the corrector closes in
            h = float(np.clip(gap, 1e-7, fd))
            grad = np.empty(2)
            hess = np.empty((2, 2))

            def q(u, v_):
                return (
                    _gap_value(model, k + u * basis[0] + v_ * basis[1], gap_index)
                    ** 2
                )

            q0 = q(0, 0)
            qp0, qm0 = q(h, 0), q(-h, 0)
            q0p, q0m = q(0, h), q(0, -h)
            qpp, qpm = q(h, h), q(h, -h)
            qmp, qmm = q(-h, h), q(-h, -h)
            grad[0] = (qp0 - qm0) / (2 * h)
            grad[1] = (q0p - q0m) / (2 * h)
            hess[0, 0] = (qp0 - 2 * q0 + qm0) / (h * h)
            hess[1, 1] = (q0p - 2 * q0 + q0m) / (h * h)
            hess[0, 1] = hess[1, 0] = (qpp - qpm - qmp + qmm) / (4 * h * h)
            try:
                delta = np.linalg.solve(hess + 1e-14 * np.eye(2), -grad)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None:
                break
            step = delta[0] * basis[0] + delta[1] * basis[1]
            norm = np.linalg.norm(step)
            if norm < 1e-14:
                break
            if norm > 4 * fd:
                step = step * (4 * fd / norm)
            k = k + step
        if _gap_value(model, k, gap_index) < tol:
            return k, total_it
        # the plane missed the curve: re-aim with a fresh tangent estimate
        tangent, _ = _gap_tangent(model, k, gap_index, fd)
    gap = _gap_value(model, k, gap_index)
    if gap < tol:
        return k, total_it
    raise RefinementError(
        f"curve corrector stalled at gap {gap:.3e}", residual=gap, position=k
    )


def _normal_basis(tangent):
    t = tangent / np.linalg.norm(tangent)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(t)))] = 1.0
    u = np.cross(t, ref)
    u /= np.linalg.norm(u)
    v = np.cross(t, u)
    return u, v


def _march_curve(model, start, gap_index, step, tol, torus, box_extent):
    """March along the zero curve; returns (vertices, closed, winding)."""
    fd = max(step / 8.0, 1e-5)
    k = np.array(start, dtype=float)
    tangent, _ = _gap_tangent(model, k, gap_index, fd)
    direction = tangent / np.linalg.norm(tangent)

    def inside(p):
        return torus or np.all(np.abs(p) <= box_extent + 1e-9)

    max_steps = int(60.0 * TWO_PI / step)

    def march(k0, d0):
        verts = [np.array(k0)]
        d = np.array(d0)
        for _ in range(max_steps):
            pred = verts[-1] + step * d
            if not inside(pred):
                return verts, False, None
            t, _w = _gap_tangent(model, pred, gap_index, fd)
            t = t / np.linalg.norm(t)
            if np.dot(t, d) < 0:
                t = -t
            cur, _ = _correct_to_curve(model, pred, t, gap_index, tol, fd)
            if not inside(cur):
                return verts, False, None
            d_new = cur - verts[-1]
            n_new = np.linalg.norm(d_new)
            if n_new < step * 0.05:
                raise RefinementError("curve tracing stalled (no progress)")
            d = d_new / n_new
            verts.append(cur)
            disp = verts[-1] - verts[0]
            if torus:
                winding = np.round(disp / TWO_PI)
                near = np.linalg.norm(disp - TWO_PI * winding) < 0.75 * step
            else:
                winding = np.zeros(3)
                near = np.linalg.norm(disp) < 0.75 * step
            if len(verts) > 4 and near:
                return verts[:-1], True, winding.astype(int)
        raise RefinementError("curve tracing exceeded maximum length")

    verts, closed, winding = march(k, direction)
    if closed:
        return np.array(verts), True, winding
    # open arc: march the other way from the start and join
    back, closed_back, _ = march(k, -direction)
    if closed_back:
        return np.array(back), True, np.zeros(3, dtype=int)
    verts = list(reversed(back[1:])) + verts
    return np.array(verts), False, None


# -- result types -------------------------------------------------------------


@dataclass
class WeylPoint:
    """An isolated gap zero after refinement."""

    position: np.ndarray
    residual_gap: float
    refinement_iterations: int
    gap_index: int = 1

    def to_record(self):
        return {
            "type": "point",
            "position": [float(x) for x in self.position],
            "residual_gap": float(self.residual_gap),
            "refinement_iterations": int(self.refinement_iterations),
            "gap_index": int(self.gap_index),
        }


@dataclass
class NodalLoop:
    """A closed nodal curve as an oriented polyline (closure implied)."""

    vertices: np.ndarray
    orientation: int = 1
    max_vertex_gap: float = 0.0
    gap_index: int = 1
    winding: tuple = (0, 0, 0)

    def __len__(self):
        return len(self.vertices)

    @property
    def is_contractible(self):
        return tuple(self.winding) == (0, 0, 0)

    def reversed(self):
        return NodalLoop(
            vertices=self.vertices[::-1].copy(),
            orientation=-self.orientation,
            max_vertex_gap=self.max_vertex_gap,
            gap_index=self.gap_index,
            winding=tuple(-w for w in self.winding),
        )

    def to_record(self):
        return {
            "type": "loop",
            "vertices": [[float(x) for x in v] for v in self.vertices],
            "orientation": int(self.orientation),
            "max_vertex_gap": float(self.max_vertex_gap),
            "gap_index": int(self.gap_index),
            "winding": [int(w) for w in self.winding],
        }


@dataclass
class OpenArc:
    """A nodal curve hitting the continuum box boundary (open polyline)."""

    vertices: np.ndarray
    max_vertex_gap: float = 0.0
    gap_index: int = 1

    def __len__(self):
        return len(self.vertices)

    def to_record(self):
        return {
            "type": "arc",
            "vertices": [[float(x) for x in v] for v in self.vertices],
            "max_vertex_gap": float(self.max_vertex_gap),
            "gap_index": int(self.gap_index),
        }


@dataclass
class NodalLocus:
    """The full band-crossing locus split into connected components."""

    points: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    open_arcs: list = field(default_factory=list)
    model_name: str = ""
    resolution: int = 0

    @property
    def is_empty(self):
        return not (self.points or self.loops or self.open_arcs)

    def components(self):
        return split_components(self)

    def to_json(self):
        return {
            "schema_version": 1,
            "model": self.model_name,
            "resolution": self.resolution,
            "components": [c.to_record() for c in split_components(self)],
        }


@dataclass
class Component:
    """A labeled connected component of the locus."""

    id: str
    kind: str  # "point" | "loop" | "arc"
    item: object
    gap_index: int

    def to_record(self):
        rec = self.item.to_record()
        rec["id"] = self.id
        return rec


def split_components(locus):
    """Deterministically labeled components: points, loops, then arcs."""
    comps = []
    pts = sorted(locus.points, key=lambda p: tuple(np.round(p.position, 9)))
    for i, p in enumerate(pts):
        comps.append(Component(f"P{i}", "point", p, p.gap_index))
    loops = sorted(
        locus.loops, key=lambda l: tuple(np.round(np.min(l.vertices, axis=0), 9))
    )
    for i, l in enumerate(loops):
        comps.append(Component(f"L{i}", "loop", l, l.gap_index))
    arcs = sorted(
        locus.open_arcs, key=lambda a: tuple(np.round(np.min(a.vertices, axis=0), 9))
    )
    for i, a in enumerate(arcs):
        comps.append(Component(f"A{i}", "arc", a, a.gap_index))
    return comps


# -- classification and assembly ----------------------------------------------


def _canonicalize_loop(vertices, torus):
    """Fix the traversal convention: start at the lexicographic minimum and
    orient so the initial tangent has a positive leading component
    (x, then y, then z tie-break)."""
    verts = np.asarray(vertices)
    if torus:
        reduced = reduce_torus(verts)
    else:
        reduced = verts
    keys = [tuple(np.round(v, 6)) for v in reduced]
    start = min(range(len(keys)), key=lambda i: keys[i])
    verts = np.roll(verts, -start, axis=0)
    if torus:
        # re-anchor the rolled polyline in the fundamental domain
        verts = verts - verts[0] + reduce_torus(verts[0])
    tangent = verts[1] - verts[0]
    tangent = tangent / np.linalg.norm(tangent)
    flip = False
    for a in range(3):
        if abs(tangent[a]) > 1e-6:
            flip = tangent[a] < 0
            break
    if flip:
        verts = np.roll(verts[::-1], 1, axis=0)
    return verts


SPURIOUS_GAP_FLOOR = 1e-3


def _cluster_seed(model, grid, cluster, gap_index):
    centers = np.array([grid.cell_center(c) for c in cluster])
    if grid.torus:
        centers = reduce_torus(centers)
    else:
        centers = np.clip(centers, grid.origin, -grid.origin)
    gaps = model.direct_gap(centers, gap_index=gap_index)
    return centers, centers[int(np.argmin(gaps))], float(np.min(gaps))


def _point_from_cluster(model, grid, cluster, centers, seed, gap_index, gap_bound):
    point = refine_point(model, seed, gap_index=gap_index)
    # a resolved isolated zero has a full-rank squared-gap Hessian
    _, eigs = _gap_tangent(model, point.position, gap_index, max(grid.spacing / 8, 1e-5))
    if eigs[-1] <= 0 or eigs[0] / eigs[-1] < 1e-3:
        raise LocusAmbiguityError(
            f"zero near {np.round(point.position, 4).tolist()} is not point-like "
            "(rank-deficient crossing); increase the scan resolution"
        )
    slope = math.sqrt(max(eigs[0], 1e-30) / 2.0)
    limit = _coverage_limit(grid, gap_bound, slope)
    _check_coverage(
        np.asarray([point.position]), centers, grid, grid.torus, cluster,
        gap_index, limit,
    )
    return point


def _curve_from_cluster(model, grid, cluster, centers, seed, gap_index,
                        step_factor, vertex_tol, gap_bound):
    step = step_factor * grid.spacing
    corrected, _ = _correct_seed(model, seed, gap_index, vertex_tol, grid.spacing)
    verts, closed, winding = _march_curve(
        model, corrected, gap_index, step, vertex_tol,
        grid.torus, None if grid.torus else model.domain.extent,
    )
    slope_min, slope_max = _transverse_slope(model, verts, gap_index, grid.spacing)
    if slope_min < max(1e-4, 0.03 * slope_max):
        raise LocusAmbiguityError(
            f"zero set traced near {np.round(verts[0], 3).tolist()} is not a "
            f"transversally isolated curve (gap slope {slope_min:.2e} in some "
            "normal direction); locus dimension ambiguous"
        )
    limit = _coverage_limit(grid, gap_bound, slope_min)
    _check_coverage(verts, centers, grid, grid.torus, cluster, gap_index, limit)
    max_gap = float(
        np.max(
            model.direct_gap(
                reduce_torus(verts) if grid.torus else verts, gap_index=gap_index
            )
        )
    )
    if closed:
        canon = _canonicalize_loop(verts, grid.torus)
        return NodalLoop(
            vertices=canon,
            orientation=1,
            max_vertex_gap=max_gap,
            gap_index=gap_index,
            winding=tuple(int(w) for w in winding),
        )
    ends = sorted([tuple(np.round(verts[0], 6)), tuple(np.round(verts[-1], 6))])
    if tuple(np.round(verts[0], 6)) != ends[0]:
        verts = verts[::-1]
    return OpenArc(vertices=verts, max_vertex_gap=max_gap, gap_index=gap_index)


def _coverage_limit(grid, gap_bound, slope):
    """How far a flagged cell may legitimately sit from the extracted zero
    set: its sampled gap divided by the local gap slope, padded by cell
    diagonals."""
    reach = gap_bound / max(slope, 1e-12)
    return min(reach, 12.0 * grid.spacing) + 2.5 * grid.spacing * math.sqrt(3.0)


def _transverse_slope(model, verts, gap_index, spacing):
    """(min, max) transverse gap slope sampled along a traced curve.

    A vanishing minimum means the zero set extends beyond the curve (a
    nodal surface or a crossing network): not a transversally isolated
    curve."""
    n = len(verts)
    tangents = np.gradient(np.asarray(verts), axis=0)
    slopes = []
    for i in range(0, n, max(1, n // 8)):
        t = tangents[i]
        nrm = np.linalg.norm(t)
        if nrm < 1e-12:
            continue
        u, v = _normal_basis(t / nrm)
        for ang in (0.0, 0.25 * math.pi, 0.5 * math.pi, 0.75 * math.pi):
            d = math.cos(ang) * u + math.sin(ang) * v
            probe = verts[i] + spacing * d
            if model.domain.is_torus:
                probe = reduce_torus(probe)
            elif not np.all(model.domain.contains(probe)):
                continue
            hi = model.direct_gap(probe, gap_index=gap_index)
            slopes.append(float(hi) / spacing)
    if not slopes:
        return 1.0, 1.0
    return min(slopes), max(slopes)


def _classify_cluster(model, grid, cluster, gap_index, step_factor, vertex_tol,
                      gap_bound):
    """Resolve one flagged-cell cluster into a point, loop, arc, or None
    (spurious near-gap region with no actual zero)."""
    centers, seed, _ = _cluster_seed(model, grid, cluster, gap_index)
    if _bbox_diameter(cluster) < 3:
        try:
            return _point_from_cluster(
                model, grid, cluster, centers, seed, gap_index, gap_bound
            )
        except RefinementError:
            # refinement bottomed out above tolerance: near-gap but no zero
            return None
    try:
        # ambiguity errors mean zeros were found but are not a clean curve:
        # those always propagate; refinement errors mean no zero was reached
        # and the cluster may still be an isolated point or spurious
        return _curve_from_cluster(
            model, grid, cluster, centers, seed, gap_index, step_factor,
            vertex_tol, gap_bound,
        )
    except RefinementError as curve_exc:
        try:
            return _point_from_cluster(
                model, grid, cluster, centers, seed, gap_index, gap_bound
            )
        except RefinementError:
            return None
        except LocusAmbiguityError:
            raise LocusAmbiguityError(
                f"cluster of {len(cluster)} cells near {np.round(seed, 3).tolist()} "
                f"(gap {gap_index}) is neither point-like nor curve-like: {curve_exc}"
            ) from curve_exc


def _cluster_gap_bound(scan, cluster, gap_index):
    n = scan.grid.npoints
    table = scan.cell_min_gap[gap_index]
    vals = []
    for c in cluster:
        key = tuple(x % n for x in c) if scan.grid.torus else c
        if key in table:
            vals.append(table[key])
    return max(vals) if vals else scan.gap_threshold[gap_index]


def trace_loops(model, scan, step_factor=0.6, vertex_tol=VERTEX_TOL):
    """Trace curve-like clusters of a scan into loops and open arcs.

    Point-like and spurious clusters are skipped here; a cluster that is
    neither point-like nor traceable as a single covered curve raises
    LocusAmbiguityError naming the cluster.
    """
    grid = scan.grid
    loops, arcs = [], []
    for g in sorted(scan.flagged):
        clusters = _cluster_cells(scan.flagged[g], grid.n_cells, grid.torus)
        for cluster in clusters:
            item = _classify_cluster(
                model, grid, cluster, g, step_factor, vertex_tol,
                _cluster_gap_bound(scan, cluster, g),
            )
            if isinstance(item, NodalLoop):
                loops.append(item)
            elif isinstance(item, OpenArc):
                arcs.append(item)
    return loops, arcs


def _correct_seed(model, k, gap_index, tol, spacing):
    fd = max(spacing / 10.0, 1e-5)
    tangent, _ = _gap_tangent(model, k, gap_index, fd)
    return _correct_to_curve(model, k, tangent, gap_index, tol, fd)


def _check_coverage(verts, centers, grid, torus, cluster, gap_index, limit):
    """Every flagged cell of the cluster must hug the extracted locus."""
    for c in centers:
        if torus:
            d = np.linalg.norm(torus_delta(verts, c), axis=-1).min()
        else:
            d = np.linalg.norm(verts - c, axis=-1).min()
        if d > limit:
            raise LocusAmbiguityError(
                f"cluster of {len(cluster)} cells (gap {gap_index}) is not covered by "
                f"the extracted locus: cell at {np.round(c, 3).tolist()} lies "
                f"{d:.3f} away; locus dimension ambiguous"
            )


def extract_locus(model, resolution=48, gap_threshold=None, gap_index=None,
                  threads=1, step_factor=0.6, vertex_tol=VERTEX_TOL):
    """Scan, classify, refine and trace: the full locus of a model."""
    scan = scan_grid(
        model, resolution=resolution, gap_threshold=gap_threshold,
        gap_index=gap_index, threads=threads,
    )
    grid = scan.grid
    points, loops, arcs = [], [], []
    for g in sorted(scan.flagged):
        clusters = _cluster_cells(scan.flagged[g], grid.n_cells, grid.torus)
        for cluster in clusters:
            item = _classify_cluster(
                model, grid, cluster, g, step_factor, vertex_tol,
                _cluster_gap_bound(scan, cluster, g),
            )
            if isinstance(item, WeylPoint):
                points.append(item)
            elif isinstance(item, NodalLoop):
                loops.append(item)
            elif isinstance(item, OpenArc):
                arcs.append(item)
    points = _dedupe_points(points, model.domain.is_torus)
    return NodalLocus(
        points=points,
        loops=loops,
        open_arcs=arcs,
        model_name=model.name,
        resolution=resolution,
    )


def _dedupe_points(points, torus, tol=1e-5):
    unique = []
    for p in sorted(points, key=lambda q: tuple(np.round(q.position, 9))):
        dup = False
        for u in unique:
            if u.gap_index != p.gap_index:
                continue
            delta = torus_delta(u.position, p.position) if torus else u.position - p.position
            if np.linalg.norm(delta) < tol:
                dup = True
                break
        if not dup:
            unique.append(p)
    return unique
