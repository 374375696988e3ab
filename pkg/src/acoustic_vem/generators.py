"""Domains and initial mesh generators.

The polygonal domains (unit square, L-shape, H-shape) are unions of squares
of a background grid, so every structured pattern is built from a boolean
cell mask.  The circle with square obstacles is only meshed with Voronoi
cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import split

from .errors import UnsupportedCombination
from .mesh import BOUNDARY, PolygonalMesh

PATTERNS = ("triangles", "squares", "hexagons", "trapezoids", "square_triangle_mix", "voronoi")
LLOYD_ITERATIONS = 3
CIRCLE_SEGMENTS = 64


@dataclass(frozen=True)
class DomainSpec:
    name: str
    outer: tuple
    holes: tuple = field(default=())
    # side of the coarsest background square that tiles the domain
    grid_unit: float | None = None
    origin: tuple = (0.0, 0.0)
    extent: tuple = (1.0, 1.0)

    @property
    def polygon(self):
        return Polygon(self.outer, [list(h) for h in self.holes])

    @property
    def area(self):
        return float(self.polygon.area)

    @property
    def reentrant_corners(self):
        """Vertices of the boundary where the interior angle exceeds pi."""
        out = []
        for ring, sign in [(self.outer, 1.0)] + [(h, -1.0) for h in self.holes]:
            P = np.asarray(ring, dtype=float)
            if _signed_area(P) * sign < 0:
                P = P[::-1]
            prev = P - np.roll(P, 1, axis=0)
            nxt = np.roll(P, -1, axis=0) - P
            # domain on the left of every ring, so a right turn is re-entrant
            cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
            out.extend(tuple(p) for p in P[cross < -1e-12])
        return out


def _signed_area(P):
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _square_hole(x0, x1, y0, y1):
    return ((x0, y0), (x0, y1), (x1, y1), (x1, y0))


def get_domain(name):
    if name == "unit_square":
        return DomainSpec(name, ((0, 0), (1, 0), (1, 1), (0, 1)), grid_unit=1.0, extent=(1.0, 1.0))
    if name == "l_shape":
        outer = ((0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1))
        return DomainSpec(name, outer, grid_unit=0.5, extent=(1.0, 1.0))
    if name == "h_shape":
        outer = (
            (0, 0), (0.5, 0), (0.5, 1.25), (1, 1.25), (1, 0), (1.5, 0),
            (1.5, 3), (1, 3), (1, 1.875), (0.5, 1.875), (0.5, 3), (0, 3),
        )
        return DomainSpec(name, outer, grid_unit=0.125, extent=(1.5, 3.0))
    if name == "circle_obstacles":
        t = 2.0 * np.pi * np.arange(CIRCLE_SEGMENTS) / CIRCLE_SEGMENTS
        outer = tuple((float(np.cos(a)), float(np.sin(a))) for a in t)
        holes = (
            _square_hole(0.2, 0.6, 0.2, 0.6),
            _square_hole(-0.6, -0.2, 0.2, 0.6),
            _square_hole(-0.6, -0.2, -0.6, -0.2),
            _square_hole(0.2, 0.6, -0.6, -0.2),
        )
        return DomainSpec(name, outer, holes=holes, origin=(-1.0, -1.0), extent=(2.0, 2.0))
    raise ValueError(f"unknown domain {name!r}")


DOMAINS = ("unit_square", "l_shape", "h_shape", "circle_obstacles")


def generate_mesh(domain, pattern, resolution, seed=0):
    """Initial mesh of ``domain``.

    ``resolution`` is the number of background squares per unit length for
    the structured patterns and the number of cells for ``voronoi``.
    """
    if isinstance(domain, str):
        domain = get_domain(domain)
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}")
    resolution = int(resolution)
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if pattern == "voronoi":
        return _voronoi_with_count(domain, resolution, seed)
    if domain.grid_unit is None:
        raise UnsupportedCombination(f"pattern {pattern!r} cannot tile domain {domain.name!r}")

    h = 1.0 / resolution
    per_unit = domain.grid_unit / h
    if abs(per_unit - round(per_unit)) > 1e-9:
        raise UnsupportedCombination(
            f"resolution {resolution} does not align with the {domain.grid_unit} grid of {domain.name!r}"
        )
    nx = int(round(domain.extent[0] / h))
    ny = int(round(domain.extent[1] / h))
    centres_x = (np.arange(nx) + 0.5) * h
    centres_y = (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(centres_x, centres_y, indexing="ij")
    mask = shapely.contains_xy(domain.polygon, X, Y)

    builder = {
        "squares": _squares,
        "triangles": _triangles,
        "square_triangle_mix": _square_triangle_mix,
        "trapezoids": _trapezoids,
        "hexagons": _hexagons,
    }[pattern]
    if pattern == "hexagons" and nx < 2:
        raise UnsupportedCombination("hexagons need at least two background columns")
    coords, cells = builder(mask, h)
    return _compact(coords, cells, domain)


def _grid_vertex_ids(nx, ny):
    return np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)


def _grid_coords(nx, ny, h):
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    return np.stack([I.ravel() * h, J.ravel() * h], axis=1)


def _squares(mask, h):
    nx, ny = mask.shape
    vid = _grid_vertex_ids(nx, ny)
    cells = []
    for j in range(ny):
        for i in range(nx):
            if mask[i, j]:
                cells.append([vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]])
    return _grid_coords(nx, ny, h), cells


def _split_square(vid, i, j):
    a, b, c, d = vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]
    # alternate the diagonal so the triangulation has no preferred direction
    if (i + j) % 2 == 0:
        return [[a, b, c], [a, c, d]]
    return [[a, b, d], [b, c, d]]


def _triangles(mask, h):
    nx, ny = mask.shape
    vid = _grid_vertex_ids(nx, ny)
    cells = []
    for j in range(ny):
        for i in range(nx):
            if mask[i, j]:
                cells.extend(_split_square(vid, i, j))
    return _grid_coords(nx, ny, h), cells


def _square_triangle_mix(mask, h):
    nx, ny = mask.shape
    vid = _grid_vertex_ids(nx, ny)
    cells = []
    for j in range(ny):
        for i in range(nx):
            if not mask[i, j]:
                continue
            if (i + j) % 2 == 0:
                cells.append([vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]])
            else:
                cells.extend(_split_square(vid, i, j))
    return _grid_coords(nx, ny, h), cells


def _vertex_masks(mask):
    """Flags per grid vertex: inside the closed domain, and free to move along x / y."""
    nx, ny = mask.shape
    pad = np.zeros((nx + 2, ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = mask
    # squares around vertex (i, j): SW, SE, NW, NE
    sw = pad[:-1, :-1]
    se = pad[1:, :-1]
    nw = pad[:-1, 1:]
    ne = pad[1:, 1:]
    used = sw | se | nw | ne
    interior = sw & se & nw & ne
    # a vertical line through the vertex is not part of the boundary
    slide_x = (sw == se) & (nw == ne) & used
    slide_y = (sw == nw) & (se == ne) & used
    return used, interior, slide_x, slide_y


def _trapezoids(mask, h):
    nx, ny = mask.shape
    coords = _grid_coords(nx, ny, h).reshape(nx + 1, ny + 1, 2).copy()
    used, interior, slide_x, _ = _vertex_masks(mask)
    delta = 0.25 * h
    for i in range(nx + 1):
        for j in range(ny + 1):
            if not slide_x[i, j] or i in (0, nx):
                continue
            # congruent trapezoids: the tilt alternates by column and by row
            s = delta * (1 if i % 2 else -1)
            coords[i, j, 0] += s if j % 2 else 0.0
    vid = _grid_vertex_ids(nx, ny)
    cells = []
    for j in range(ny):
        for i in range(nx):
            if mask[i, j]:
                cells.append([vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]])
    return coords.reshape(-1, 2), cells


def _hexagons(mask, h):
    nx, ny = mask.shape
    coords = _grid_coords(nx, ny, h).reshape(nx + 1, ny + 1, 2).copy()
    vid = _grid_vertex_ids(nx, ny)
    used, interior, _, slide_y = _vertex_masks(mask)
    cells = []
    brick_mid = np.zeros((nx + 1, ny + 1), dtype=np.int8)
    for j in range(ny):
        i = j % 2
        if i == 1 and mask[0, j]:
            cells.append([vid[0, j], vid[1, j], vid[1, j + 1], vid[0, j + 1]])
        while i < nx:
            if i + 1 < nx and mask[i, j] and mask[i + 1, j]:
                cells.append([
                    vid[i, j], vid[i + 1, j], vid[i + 2, j],
                    vid[i + 2, j + 1], vid[i + 1, j + 1], vid[i, j + 1],
                ])
                brick_mid[i + 1, j] -= 1      # bottom middle goes down
                brick_mid[i + 1, j + 1] += 1  # top middle goes up
                i += 2
            else:
                if mask[i, j]:
                    cells.append([vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]])
                i += 1
    eps = 0.2 * h
    move = slide_y & (brick_mid != 0)
    coords[..., 1] += np.where(move, np.sign(brick_mid) * eps, 0.0)
    return coords.reshape(-1, 2), cells


def _compact(coords, cells, domain):
    """Drop unused vertices, merge collinear duplicates and check coverage."""
    coords = np.asarray(coords, dtype=float)
    used = np.unique(np.concatenate([np.asarray(c) for c in cells]))
    remap = -np.ones(len(coords), dtype=np.int64)
    remap[used] = np.arange(len(used))
    cells = [remap[np.asarray(c)] for c in cells]
    mesh = PolygonalMesh(coords[used], cells)
    _check_coverage(mesh, domain)
    return mesh


def _check_coverage(mesh, domain, rtol=1e-10):
    if abs(mesh.total_area - domain.area) > rtol * domain.area:
        raise UnsupportedCombination(
            f"mesh area {mesh.total_area!r} does not match the domain area {domain.area!r}"
        )
    per = mesh.geometry.he_length[np.isin(mesh.he_edge, np.flatnonzero(mesh.boundary_edges))].sum()
    expected = domain.polygon.length
    if abs(per - expected) > 1e-8 * expected:
        raise UnsupportedCombination("mesh boundary does not match the domain boundary (non-conforming cells)")


# ------------------------------------------------------------------- Voronoi
def _sample_sites(poly, n, rng):
    minx, miny, maxx, maxy = poly.bounds
    sites = np.empty((0, 2))
    while len(sites) < n:
        batch = rng.uniform((minx, miny), (maxx, maxy), size=(4 * n, 2))
        inside = shapely.contains_xy(poly, batch[:, 0], batch[:, 1])
        sites = np.vstack([sites, batch[inside]])
    return sites[:n]


def _clipped_cells(poly, sites):
    minx, miny, maxx, maxy = poly.bounds
    span = max(maxx - minx, maxy - miny)
    cx, cy = 0.5 * (minx + maxx), 0.5 * (miny + maxy)
    far = np.array([[cx - 10 * span, cy - 10 * span], [cx + 10 * span, cy - 10 * span],
                    [cx + 10 * span, cy + 10 * span], [cx - 10 * span, cy + 10 * span]])
    vor = Voronoi(np.vstack([sites, far]))
    regions = []
    for k in range(len(sites)):
        region = vor.regions[vor.point_region[k]]
        if -1 in region or len(region) < 3:
            raise UnsupportedCombination("unbounded Voronoi region for an interior site")
        cell = Polygon(vor.vertices[region]).convex_hull
        regions.append(cell.intersection(poly))
    return regions


def _resolve_fragments(pieces, sites):
    """Keep the fragment holding the site; glue stray fragments onto a neighbour."""
    cells = []
    strays = []
    for k, geom in enumerate(pieces):
        parts = [g for g in getattr(geom, "geoms", [geom]) if isinstance(g, Polygon) and g.area > 0]
        if not parts:
            raise UnsupportedCombination("Voronoi cell vanished after clipping")
        site = shapely.Point(sites[k])
        main = max(parts, key=lambda g: (g.distance(site) == 0, g.area))
        cells.append(main)
        strays.extend(p for p in parts if p is not main)
    for s in strays:
        shared = [(s.boundary.intersection(c.boundary).length, k) for k, c in enumerate(cells)]
        length, k = max(shared)
        if length <= 0:
            raise UnsupportedCombination("isolated Voronoi fragment")
        merged = cells[k].union(s)
        if isinstance(merged, MultiPolygon):
            raise UnsupportedCombination("could not merge Voronoi fragment")
        cells[k] = merged
    return cells


def _reflex_vertices(P):
    prev = P - np.roll(P, 1, axis=0)
    nxt = np.roll(P, -1, axis=0) - P
    cross = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
    scale = np.hypot(prev[:, 0], prev[:, 1]) * np.hypot(nxt[:, 0], nxt[:, 1])
    return np.flatnonzero(cross < -1e-10 * scale), prev, nxt


def _convexify(poly, reach):
    """Cut a clipped cell at its reflex corners until every piece is convex.

    Each cut runs from a reflex vertex along the continuation of one of its
    two sides, whichever gives the more balanced split.
    """
    P = np.asarray(orient(poly, 1.0).exterior.coords)[:-1]
    reflex, prev, nxt = _reflex_vertices(P)
    if len(reflex) == 0:
        return [poly]
    i = reflex[0]
    best = None
    for d in (prev[i], -nxt[i]):
        d = d / np.hypot(*d)
        line = shapely.LineString([P[i], P[i] + reach * d])
        parts = [g for g in split(poly, line).geoms if g.area > 0]
        if len(parts) < 2:
            continue
        score = min(g.area for g in parts)
        if best is None or score > best[0]:
            best = (score, parts)
    if best is None:
        raise UnsupportedCombination("could not split a non-convex Voronoi cell")
    out = []
    for part in best[1]:
        out.extend(_convexify(part, reach))
    return out


COLLAPSE_PASSES = 4
COUNT_ATTEMPTS = 6


def _voronoi_with_count(domain, n_cells, seed):
    """Voronoi mesh whose final cell count is as close to ``n_cells`` as possible.

    Convexification adds cells near reflex corners, so the number of sites is
    lowered by the surplus and the mesh rebuilt.  The closest mesh wins; ties
    go to the earlier attempt.
    """
    n_sites = n_cells
    tried = set()
    best = None
    for _ in range(COUNT_ATTEMPTS):
        tried.add(n_sites)
        try:
            mesh = _voronoi_mesh(domain, n_sites, seed)
        except UnsupportedCombination:
            if best is None:
                raise
            break
        if best is None or abs(mesh.n_cells - n_cells) < abs(best.n_cells - n_cells):
            best = mesh
        if mesh.n_cells == n_cells:
            break
        n_sites = max(1, n_sites - (mesh.n_cells - n_cells))
        if n_sites in tried:
            break
    return best


def _voronoi_mesh(domain, n_cells, seed):
    poly = domain.polygon
    rng = np.random.default_rng(seed)
    sites = _sample_sites(poly, n_cells, rng)
    for _ in range(LLOYD_ITERATIONS):
        cells = _resolve_fragments(_clipped_cells(poly, sites), sites)
        sites = np.array([[c.centroid.x, c.centroid.y] for c in cells])
    cells = _resolve_fragments(_clipped_cells(poly, sites), sites)
    for c in cells:
        if len(c.interiors):
            raise UnsupportedCombination("Voronoi cell encloses an obstacle; increase the resolution")
    diam = float(np.hypot(*(np.array(poly.bounds[2:]) - poly.bounds[:2])))
    cells = [piece for c in cells for piece in _convexify(c, 2.0 * diam)]
    loops = [np.asarray(orient(c, 1.0).exterior.coords)[:-1] for c in cells]
    mesh = _merge_polygons(loops, 1e-9 * diam)
    for _ in range(COLLAPSE_PASSES):
        collapsed = _collapse_short_edges(mesh, domain, ratio=0.05)
        if collapsed is mesh:
            break
        mesh = collapsed
    _check_coverage(mesh, domain)
    return mesh


def _merge_polygons(loops, tol):
    """Weld independent polygons into a mesh: merge close points, split T-junctions."""
    pts = np.vstack(loops)
    tree = cKDTree(pts)
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(pts))])
    uniq, ids = np.unique(roots, return_inverse=True)
    coords = pts[uniq]
    cells = []
    k = 0
    for loop in loops:
        ids_loop = ids[k:k + len(loop)]
        k += len(loop)
        cells.append(_dedup_loop(list(ids_loop)))
    cells = _split_t_junctions(coords, cells, tol)
    return PolygonalMesh(coords, cells)


def _dedup_loop(loop):
    out = []
    for v in loop:
        if not out or out[-1] != v:
            out.append(int(v))
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _split_t_junctions(coords, cells, tol):
    """Insert vertices that lie inside a cell edge into that cell's loop."""
    tree = cKDTree(coords)
    changed = True
    while changed:
        changed = False
        for c, loop in enumerate(cells):
            out = []
            for j, a in enumerate(loop):
                b = loop[(j + 1) % len(loop)]
                out.append(a)
                pa, pb = coords[a], coords[b]
                seg = pb - pa
                L = float(np.hypot(*seg))
                cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * L + tol)
                inner = []
                for v in cand:
                    if v in (a, b):
                        continue
                    d = coords[v] - pa
                    t = float(np.dot(d, seg)) / (L * L)
                    off = abs(d[0] * seg[1] - d[1] * seg[0]) / L
                    if 0.0 < t < 1.0 and off <= tol:
                        inner.append((t, v))
                if inner:
                    changed = True
                    out.extend(v for _, v in sorted(inner))
            cells[c] = out
    return cells


def _collapse_short_edges(mesh, domain, ratio):
    """Collapse edges shorter than ``ratio`` times the smaller adjacent cell diameter.

    Domain corners never move; a boundary vertex only merges along the
    boundary.  A collapse that would leave an incident cell non-convex is
    skipped.
    """
    geo = mesh.geometry
    coords = mesh.vertices.copy()
    corners = np.array(
        [np.asarray(p) for p in domain.polygon.exterior.coords[:-1]]
        + [np.asarray(p) for ring in domain.polygon.interiors for p in ring.coords[:-1]]
    )
    corner_tree = cKDTree(corners)
    is_corner = corner_tree.query(coords)[0] <= 1e-9 * mesh.diameter
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[mesh.edge_vertices[mesh.boundary_edges].ravel()] = True

    he_len = geo.he_length
    lengths = np.empty(mesh.n_edges)
    lengths[mesh.he_edge] = he_len
    cell_h = np.full(mesh.n_edges, np.inf)
    for side in (0, 1):
        ok = mesh.edge_cells[:, side] != BOUNDARY
        cell_h[ok] = np.minimum(cell_h[ok], geo.diameter[mesh.edge_cells[ok, side]])

    vertex_cells = [[] for _ in range(mesh.n_vertices)]
    for c, loop in enumerate(mesh.cells):
        for v in loop:
            vertex_cells[v].append(c)

    def stays_convex(a, b, keep):
        for c in set(vertex_cells[a]) | set(vertex_cells[b]):
            loop = _dedup_loop([a if v == b else int(v) for v in mesh.cells[c]])
            if len(loop) < 3:
                return False
            P = coords[loop].copy()
            P[[i for i, v in enumerate(loop) if v == a]] = keep
            if len(_reflex_vertices(P)[0]):
                return False
        return True

    target = np.arange(mesh.n_vertices)
    locked = np.zeros(mesh.n_vertices, dtype=bool)
    for e in np.argsort(lengths / cell_h, kind="stable"):
        if lengths[e] >= ratio * cell_h[e]:
            break
        a, b = mesh.edge_vertices[e]
        if locked[a] or locked[b]:
            continue
        if is_corner[a] and is_corner[b]:
            continue
        if on_boundary[a] and on_boundary[b] and not mesh.boundary_edges[e]:
            continue
        if is_corner[b] or (on_boundary[b] and not on_boundary[a]):
            a, b = b, a
        if is_corner[a] or on_boundary[a]:
            options = [coords[a]]
        else:
            options = [0.5 * (coords[a] + coords[b]), coords[a].copy(), coords[b].copy()]
        keep = next((q for q in options if stays_convex(a, b, q)), None)
        if keep is None:
            continue
        coords[a] = keep
        target[b] = a
        locked[a] = locked[b] = True
    if np.all(target == np.arange(mesh.n_vertices)):
        return mesh
    cells = []
    for loop in mesh.cells:
        new = _dedup_loop([int(target[v]) for v in loop])
        if len(new) < 3:
            raise UnsupportedCombination("edge collapse destroyed a cell")
        cells.append(new)
    used = np.unique(np.concatenate(cells))
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return PolygonalMesh(coords[used], [remap[np.asarray(c)] for c in cells])
