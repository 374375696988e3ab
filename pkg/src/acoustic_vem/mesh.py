"""Polygonal meshes: topology, geometry, shape regularity and refinement.

Cells are counterclockwise vertex loops.  A vertex lying inside a geometric
side of a neighbouring cell (a hanging node left behind by local refinement)
is always spliced into that neighbour's loop, so the edge topology stays
manifold: every topological edge belongs to one or two cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .errors import (
    DanglingVertex,
    DuplicateVertex,
    MeshError,
    NegativeArea,
    NonManifoldEdge,
    NonSimplePolygon,
    NotStarShapedAtBarycenter,
)

BOUNDARY = -1

# relative tolerance used to decide that three vertices are collinear
COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class EdgeGeometry:
    length: float
    midpoint: tuple
    normal: tuple
    tangent: tuple


@dataclass(frozen=True)
class CellGeometry:
    area: float
    centroid: tuple
    diameter: float
    edges: tuple
    vertices: np.ndarray


@dataclass
class QualityReport:
    min_edge_ratio: np.ndarray
    star_radius_ratio: np.ndarray
    C_T: float

    @property
    def cell_pass(self):
        return (self.min_edge_ratio >= self.C_T) & (self.star_radius_ratio >= self.C_T)

    @property
    def passed(self):
        return bool(np.all(self.cell_pass))


class MeshGeometry:
    """Vectorized per-cell and per-half-edge geometric quantities."""

    def __init__(self, mesh):
        nc = mesh.n_cells
        nh = len(mesh.conn)
        self.area = np.empty(nc)
        self.centroid = np.empty((nc, 2))
        self.diameter = np.empty(nc)
        self.he_length = np.empty(nh)
        self.he_midpoint = np.empty((nh, 2))
        self.he_normal = np.empty((nh, 2))

        for n, cells in mesh.groups.items():
            pos = mesh.offsets[cells][:, None] + np.arange(n)
            V = mesh.vertices[mesh.conn[pos]]
            # local frame keeps the shoelace sums well conditioned for tiny cells
            origin = V.mean(axis=1, keepdims=True)
            X = V - origin
            Y = np.roll(X, -1, axis=1)
            cross = X[..., 0] * Y[..., 1] - Y[..., 0] * X[..., 1]
            area = 0.5 * cross.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                cx = ((X[..., 0] + Y[..., 0]) * cross).sum(axis=1) / (6.0 * area)
                cy = ((X[..., 1] + Y[..., 1]) * cross).sum(axis=1) / (6.0 * area)
            self.area[cells] = area
            self.centroid[cells, 0] = cx + origin[:, 0, 0]
            self.centroid[cells, 1] = cy + origin[:, 0, 1]
            diff = X[:, :, None, :] - X[:, None, :, :]
            self.diameter[cells] = np.sqrt((diff**2).sum(axis=-1)).reshape(len(cells), -1).max(axis=1)

            E = Y - X
            length = np.hypot(E[..., 0], E[..., 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                normal = np.stack([E[..., 1], -E[..., 0]], axis=-1) / length[..., None]
            self.he_length[pos] = length
            self.he_midpoint[pos] = 0.5 * (V + np.roll(V, -1, axis=1))
            self.he_normal[pos] = normal

    @property
    def he_tangent(self):
        n = self.he_normal
        return np.stack([-n[:, 1], n[:, 0]], axis=1)


class PolygonalMesh:
    """Immutable polygonal mesh.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cells : sequence of int sequences
        Counterclockwise vertex loops.
    generation : int
        Refinement step counter.
    parent : array_like, optional
        For a refined mesh, the index of the cell of the previous mesh each
        cell was cut from.
    validate : bool
        Run the full invariant check (simplicity, orientation, manifold
        edges, dangling and duplicate vertices).
    """

    def __init__(self, vertices, cells, generation=0, parent=None, validate=True):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        vertices.setflags(write=False)
        self.vertices = vertices
        self.cells = tuple(np.array(c, dtype=np.int64) for c in cells)
        self.generation = int(generation)
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)

        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        sizes = np.array([len(c) for c in self.cells], dtype=np.int64)
        if len(sizes) == 0:
            raise MeshError("mesh has no cells")
        if np.any(sizes < 3):
            raise NonSimplePolygon("cells need at least 3 vertices")
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.conn = np.concatenate(self.cells)
        if self.conn.min() < 0 or self.conn.max() >= len(vertices):
            raise MeshError("cell loop references a vertex index out of range")
        self.sizes = sizes
        self.groups = {int(n): np.flatnonzero(sizes == n) for n in np.unique(sizes)}

        self._build_topology()
        if validate:
            self.validate()
        elif np.any(self.geometry.area <= 0.0):
            raise NegativeArea("cell with non-positive area")

    # ------------------------------------------------------------------ topology
    def _build_topology(self):
        nc = self.n_cells
        nh = len(self.conn)
        he_cell = np.repeat(np.arange(nc), self.sizes)
        local = np.arange(nh) - self.offsets[he_cell]
        nxt = np.arange(nh) + 1
        last = self.offsets[1:] - 1
        nxt[last] = self.offsets[:-1]
        a = self.conn
        b = self.conn[nxt]
        if np.any(a == b):
            raise NonSimplePolygon("repeated consecutive vertex in a cell loop")

        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        key = lo * len(self.vertices) + hi
        _, first, inv, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise NonManifoldEdge("edge shared by more than two cells")
        ne = len(counts)

        # the half-edge seen first (lowest cell index) defines the edge direction
        fwd = np.zeros(nh, dtype=bool)
        fwd[first] = True
        ev = np.stack([a[first], b[first]], axis=1)
        same_dir = a == ev[inv, 0]
        if np.any(same_dir & ~fwd):
            raise NonManifoldEdge("edge traversed twice in the same direction (overlapping cells)")

        edge_cells = np.full((ne, 2), BOUNDARY, dtype=np.int64)
        edge_cells[inv[fwd], 0] = he_cell[fwd]
        edge_cells[inv[~fwd], 1] = he_cell[~fwd]

        self.he_cell = he_cell
        self.he_local = local
        self.he_next = nxt
        self.he_edge = inv
        self.he_sign = np.where(fwd, 1, -1)
        self.edge_vertices = ev
        self.edge_cells = edge_cells

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def boundary_edges(self):
        return self.edge_cells[:, 1] == BOUNDARY

    @property
    def edges(self):
        """Edges as ``(v_a, v_b, left_cell, right_cell)`` tuples."""
        return [
            (int(a), int(b), int(l), int(r))
            for (a, b), (l, r) in zip(self.edge_vertices, self.edge_cells)
        ]

    @cached_property
    def geometry(self):
        return MeshGeometry(self)

    @property
    def total_area(self):
        return float(self.geometry.area.sum())

    @cached_property
    def diameter(self):
        v = self.vertices
        return float(np.hypot(*(v.max(axis=0) - v.min(axis=0))))

    def cell_vertices(self, i):
        return self.vertices[self.cells[i]]

    def cell_edges(self, i):
        """Global edge indices of cell ``i`` in loop order."""
        return self.he_edge[self.offsets[i]:self.offsets[i + 1]]

    def cell_signs(self, i):
        return self.he_sign[self.offsets[i]:self.offsets[i + 1]]

    # --------------------------------------------------------------- validation
    def validate(self):
        geo = self.geometry
        if np.any(geo.area <= 0.0):
            bad = int(np.flatnonzero(geo.area <= 0.0)[0])
            raise NegativeArea(f"cell {bad} has non-positive signed area (clockwise or degenerate)")
        for n, cells in self.groups.items():
            loops = self.conn[self.offsets[cells][:, None] + np.arange(n)]
            srt = np.sort(loops, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise NonSimplePolygon("cell loop visits a vertex twice")
            _check_simple(self.vertices[loops], cells)
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.conn] = True
        if not used.all():
            raise DanglingVertex(f"vertex {int(np.flatnonzero(~used)[0])} is not referenced by any cell")
        tol = 1e-12 * self.diameter
        pairs = cKDTree(self.vertices).query_pairs(tol)
        if pairs:
            raise DuplicateVertex(f"vertices {sorted(pairs)[0]} coincide")


def _check_simple(V, cells):
    """Raise if any loop in the (m, n, 2) batch self-intersects."""
    m, n, _ = V.shape
    W = np.roll(V, -1, axis=1)
    E = W - V
    scale = np.abs(E).max(axis=(1, 2))[:, None]
    # a loop that doubles back on itself
    cross = E[:, :, 0] * np.roll(E, -1, axis=1)[:, :, 1] - E[:, :, 1] * np.roll(E, -1, axis=1)[:, :, 0]
    dot = (E * np.roll(E, -1, axis=1)).sum(axis=-1)
    fold = (np.abs(cross) <= COLLINEAR_TOL * scale**2) & (dot < 0)
    if np.any(fold):
        raise NonSimplePolygon(f"cell {int(cells[np.argwhere(fold)[0, 0]])} folds back on itself")
    if n < 4:
        return
    ii, jj = np.triu_indices(n, k=2)
    keep = ~((ii == 0) & (jj == n - 1))
    ii, jj = ii[keep], jj[keep]
    p1, p2 = V[:, ii], W[:, ii]
    q1, q2 = V[:, jj], W[:, jj]

    def orient(a, b, c):
        o = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
        o[np.abs(o) <= COLLINEAR_TOL * scale**2] = 0.0
        return np.sign(o)

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    lo_p, hi_p = np.minimum(p1, p2), np.maximum(p1, p2)
    lo_q, hi_q = np.minimum(q1, q2), np.maximum(q1, q2)
    boxes = np.all((lo_p <= hi_q) & (lo_q <= hi_p), axis=-1)
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0) & boxes
    if np.any(hit):
        raise NonSimplePolygon(f"cell {int(cells[np.argwhere(hit)[0, 0]])} is self-intersecting")


def build_mesh(vertices, cells, generation=0):
    """Build a mesh from vertex coordinates and CCW loops, validating all invariants."""
    return PolygonalMesh(vertices, cells, generation=generation, validate=True)


def cell_geometry(mesh, cell):
    geo = mesh.geometry
    lo, hi = mesh.offsets[cell], mesh.offsets[cell + 1]
    edges = tuple(
        EdgeGeometry(
            length=float(geo.he_length[h]),
            midpoint=tuple(geo.he_midpoint[h]),
            normal=tuple(geo.he_normal[h]),
            tangent=(float(-geo.he_normal[h, 1]), float(geo.he_normal[h, 0])),
        )
        for h in range(lo, hi)
    )
    return CellGeometry(
        area=float(geo.area[cell]),
        centroid=tuple(geo.centroid[cell]),
        diameter=float(geo.diameter[cell]),
        edges=edges,
        vertices=mesh.cell_vertices(cell),
    )


def star_radius(points):
    """Radius of the largest disc contained in the kernel of a CCW polygon.

    The kernel is the intersection of the inner half-planes of all edges;
    the largest disc inside it is found as a Chebyshev-centre LP.  Returns 0
    for an empty or degenerate kernel.
    """
    P = np.asarray(points, dtype=float)
    E = np.roll(P, -1, axis=0) - P
    L = np.hypot(E[:, 0], E[:, 1])
    # inside:  n . x <= n . p  with n the outward unit normal
    N = np.stack([E[:, 1], -E[:, 0]], axis=1) / L[:, None]
    b = (N * P).sum(axis=1)
    A = np.hstack([N, np.ones((len(P), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b, bounds=[(None, None), (None, None), (0, None)], method="highs")
    if res.status != 0:
        return 0.0
    return max(float(res.x[2]), 0.0)


def check_regularity(mesh, C_T):
    """Per-cell shape-regularity ratios: shortest edge and kernel disc radius over h_K."""
    if not 0.0 < C_T < 1.0:
        raise ValueError("C_T must lie in (0, 1)")
    geo = mesh.geometry
    min_edge = np.minimum.reduceat(geo.he_length, mesh.offsets[:-1])
    edge_ratio = min_edge / geo.diameter
    radius = np.array([star_radius(mesh.cell_vertices(i)) for i in range(mesh.n_cells)])
    return QualityReport(min_edge_ratio=edge_ratio, star_radius_ratio=radius / geo.diameter, C_T=C_T)


# ---------------------------------------------------------------- refinement
def _corner_positions(P):
    """Loop positions of the geometric corners (non-straight vertices)."""
    prev = P - np.roll(P, 1, axis=0)
    nxt = np.roll(P, -1, axis=0) - P
    cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    scale = np.hypot(prev[:, 0], prev[:, 1]) * np.hypot(nxt[:, 0], nxt[:, 1])
    return np.flatnonzero(np.abs(cross) > COLLINEAR_TOL * scale)


def barycenter_star_violations(mesh, cells):
    """Cells among ``cells`` whose barycenter is not strictly inside every edge half-plane."""
    geo = mesh.geometry
    cells = np.asarray(sorted(cells), dtype=np.int64)
    he = np.concatenate([np.arange(mesh.offsets[c], mesh.offsets[c + 1]) for c in cells]) if len(cells) else np.array([], int)
    a = mesh.vertices[mesh.conn[he]]
    b = mesh.vertices[mesh.conn[mesh.he_next[he]]]
    c = geo.centroid[mesh.he_cell[he]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    bad = cross <= COLLINEAR_TOL * geo.he_length[he] ** 2
    return np.unique(mesh.he_cell[he][bad])


def refine_cells(mesh, marked):
    """Split every marked cell into quadrilaterals by joining its barycenter to side midpoints.

    An n-sided cell (n counts geometric sides, so collinear hanging vertices
    do not add sides) yields n children.  Side midpoints that fall inside an
    edge of a neighbour are spliced into the neighbour's loop.
    """
    marked = {int(c) for c in marked}
    if not marked:
        raise ValueError("no cells marked for refinement")
    if min(marked) < 0 or max(marked) >= mesh.n_cells:
        raise IndexError("marked cell index out of range")
    bad = barycenter_star_violations(mesh, marked)
    if len(bad):
        raise NotStarShapedAtBarycenter(f"cell {int(bad[0])} is not star-shaped with respect to its barycenter")

    geo = mesh.geometry
    verts = [tuple(v) for v in mesh.vertices]
    new_vertices = []

    def add_vertex(p):
        new_vertices.append(p)
        return len(verts) + len(new_vertices) - 1

    # edge (lo, hi) -> list of (parameter from lo, vertex id)
    inserts = {}
    plans = {}
    for c in sorted(marked):
        loop = mesh.cells[c]
        P = mesh.vertices[loop]
        n = len(loop)
        corners = _corner_positions(P)
        sides = []
        for k in range(len(corners)):
            i0 = corners[k]
            i1 = corners[(k + 1) % len(corners)]
            p0, p1 = P[i0], P[i1]
            m = 0.5 * (p0 + p1)
            side_len = float(np.hypot(*(p1 - p0)))
            tol = 1e-9 * side_len
            # walk the topological edges of this side
            mid_vid = None
            j = i0
            while j != i1:
                jn = (j + 1) % n
                if jn != i1 and np.hypot(*(P[jn] - m)) <= tol:
                    mid_vid = int(loop[jn])
                    break
                a, b = P[j], P[jn]
                seg = b - a
                t = float(np.dot(m - a, seg) / np.dot(seg, seg))
                if 0.0 < t < 1.0:
                    va, vb = int(loop[j]), int(loop[jn])
                    key = (min(va, vb), max(va, vb))
                    t_lo = t if va < vb else 1.0 - t
                    slot = inserts.setdefault(key, [])
                    for tt, vid in slot:
                        if abs(tt - t_lo) * np.hypot(*seg) <= tol:
                            mid_vid = vid
                            break
                    else:
                        mid_vid = add_vertex((float(m[0]), float(m[1])))
                        slot.append((t_lo, mid_vid))
                    break
                j = jn
            if mid_vid is None:
                raise MeshError(f"could not place the midpoint of a side of cell {c}")
            sides.append((int(loop[i0]), mid_vid))
        plans[c] = sides

    # splice inserted vertices into every loop that uses the split edges
    loops = [list(map(int, l)) for l in mesh.cells]
    if inserts:
        touched = set()
        edge_lookup = {tuple(sorted(map(int, mesh.edge_vertices[e]))): e for e in range(mesh.n_edges)}
        for key in inserts:
            e = edge_lookup[key]
            for cc in mesh.edge_cells[e]:
                if cc != BOUNDARY:
                    touched.add(int(cc))
        for cc in sorted(touched):
            old = loops[cc]
            out = []
            for j, va in enumerate(old):
                vb = old[(j + 1) % len(old)]
                out.append(va)
                key = (min(va, vb), max(va, vb))
                if key in inserts:
                    pts = sorted(inserts[key])
                    ids = [vid for _, vid in pts]
                    out.extend(ids if va < vb else ids[::-1])
            loops[cc] = out

    new_cells = []
    parent = []
    for c, loop in enumerate(loops):
        if c not in marked:
            new_cells.append(loop)
            parent.append(c)
            continue
        centre = geo.centroid[c]
        cid = add_vertex((float(centre[0]), float(centre[1])))
        pos = {v: j for j, v in enumerate(loop)}
        sides = plans[c]
        n = len(loop)
        k = len(sides)
        for s in range(k):
            m_prev = sides[s - 1][1]
            m_next = sides[s][1]
            j = pos[m_prev]
            child = []
            while True:
                child.append(loop[j])
                if loop[j] == m_next:
                    break
                j = (j + 1) % n
            child.append(cid)
            new_cells.append(child)
            parent.append(c)

    all_vertices = np.array(verts + new_vertices, dtype=float)
    return PolygonalMesh(all_vertices, new_cells, generation=mesh.generation + 1, parent=parent, validate=False)


def uniform_refine(mesh):
    return refine_cells(mesh, range(mesh.n_cells))
