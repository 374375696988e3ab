"""Lowest-order H(div) virtual elements.

One degree of freedom per edge: the edge average of the normal trace,

    dof_l(tau) = (1/|l|) * int_l tau . n ds,

with ``n`` the global edge normal (outward for the edge's left cell).  On a
cell the local DOF vector is the global one times the orientation signs.
Every local quantity follows from the divergence theorem:

* ``div tau|_K = sum_l |l| dof_l / |K|``
* the L2 projection onto constant vectors,
  ``Pi tau = sum_l |l| (m_l - x_K) dof_l / |K|``
* ``a_h^K = |K| Pi^T Pi + stab * |K| (I - N Pi)^T (I - N Pi)`` where the
  rows of ``N`` are the outward edge normals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCell, DimensionMismatch, UnsupportedDegree, ZeroEigenvalue

# scale of the stabilization relative to |K| times the Euclidean DOF product
DEFAULT_STABILIZATION = 1.0


@dataclass
class DofMap:
    k: int
    n_total: int
    edge_dof: np.ndarray      # edge -> global dof (identity for k = 0)
    he_sign: np.ndarray       # per half-edge orientation sign
    boundary: np.ndarray      # bool mask over global dofs
    free: np.ndarray          # global indices of free dofs
    free_index: np.ndarray    # global dof -> position among free dofs, or -1
    flipped: bool = False

    @property
    def n_free(self):
        return len(self.free)

    def extend(self, w_free):
        """Zero-extend a free-DOF vector to all DOFs."""
        w_free = np.asarray(w_free, dtype=float)
        if w_free.shape != (self.n_free,):
            raise DimensionMismatch(f"expected {self.n_free} free DOFs, got {w_free.shape}")
        w = np.zeros(self.n_total)
        w[self.free] = w_free
        return w

    def restrict(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_total,):
            raise DimensionMismatch(f"expected {self.n_total} DOFs, got {w.shape}")
        return w[self.free]


def build_dof_map(mesh, k=0, flip=False):
    """One DOF per edge; ``flip`` reverses every global edge normal."""
    if k != 0:
        raise UnsupportedDegree(f"only k = 0 is implemented, got k = {k}")
    ne = mesh.n_edges
    boundary = mesh.boundary_edges.copy()
    free = np.flatnonzero(~boundary)
    free_index = -np.ones(ne, dtype=np.int64)
    free_index[free] = np.arange(len(free))
    sign = -mesh.he_sign if flip else mesh.he_sign.copy()
    return DofMap(
        k=0,
        n_total=ne,
        edge_dof=np.arange(ne),
        he_sign=sign,
        boundary=boundary,
        free=free,
        free_index=free_index,
        flipped=bool(flip),
    )


@dataclass
class LocalOperators:
    d: np.ndarray       # (n,)   div as functional of local dofs
    P: np.ndarray       # (2, n) projection onto constants
    Pi_dof: np.ndarray  # (n, n) dofs of the projection
    S: np.ndarray       # (n, n) stabilization matrix
    M_K: np.ndarray     # (n, n) local a_h^K
    B_K: np.ndarray     # (n, n) |K| d^T d


def _batch_operators(area, centroid, length, midpoint, normal, stab=DEFAULT_STABILIZATION):
    """Local matrices for a batch of m cells with n edges each."""
    d = length / area[:, None]
    rel = midpoint - centroid[:, None, :]
    P = np.transpose(length[..., None] * rel, (0, 2, 1)) / area[:, None, None]
    Pi_dof = normal @ P
    R = np.eye(length.shape[1])[None] - Pi_dof
    S = stab * area[:, None, None] * np.transpose(R, (0, 2, 1)) @ R
    M = area[:, None, None] * np.transpose(P, (0, 2, 1)) @ P + S
    B = area[:, None, None] * d[:, :, None] * d[:, None, :]
    return d, P, Pi_dof, S, M, B


def _check_degenerate(area, diameter):
    bad = area < 1e-14 * diameter**2
    if np.any(bad):
        raise DegenerateCell(f"cell area {area[bad][0]!r} below 1e-14 h_K^2")


def local_operators(geom, stab=DEFAULT_STABILIZATION):
    """Local operators of one cell from its :class:`~acoustic_vem.mesh.CellGeometry`."""
    area = np.array([geom.area])
    _check_degenerate(area, np.array([geom.diameter]))
    length = np.array([[e.length for e in geom.edges]])
    mid = np.array([[e.midpoint for e in geom.edges]])
    normal = np.array([[e.normal for e in geom.edges]])
    d, P, Pi_dof, S, M, B = _batch_operators(area, np.array([geom.centroid]), length, mid, normal, stab)
    return LocalOperators(d=d[0], P=P[0], Pi_dof=Pi_dof[0], S=S[0], M_K=M[0], B_K=B[0])


class CellOperators:
    """Local operators for every cell, stored per vertex-count group."""

    def __init__(self, mesh, stab=DEFAULT_STABILIZATION):
        geo = mesh.geometry
        _check_degenerate(geo.area, geo.diameter)
        self.stab = stab
        self.groups = {}
        for n, cells in mesh.groups.items():
            pos = mesh.offsets[cells][:, None] + np.arange(n)
            ops = _batch_operators(
                geo.area[cells], geo.centroid[cells],
                geo.he_length[pos], geo.he_midpoint[pos], geo.he_normal[pos], stab,
            )
            self.groups[n] = (cells, pos, ops)


@dataclass
class GlobalSystem:
    B: sp.csr_matrix
    M: sp.csr_matrix
    dofmap: DofMap
    mesh: object
    B_all: sp.csr_matrix
    M_all: sp.csr_matrix
    ops: CellOperators

    @property
    def n(self):
        return self.B.shape[0]


def assemble(mesh, dofmap, stab=DEFAULT_STABILIZATION):
    """Global div-div stiffness and stabilized mass, boundary DOFs eliminated."""
    ops = CellOperators(mesh, stab)
    rows, cols, bv, mv = [], [], [], []
    for n, (cells, pos, (d, P, Pi_dof, S, M, B)) in sorted(ops.groups.items()):
        dof = dofmap.edge_dof[mesh.he_edge[pos]]
        s = dofmap.he_sign[pos].astype(float)
        ss = s[:, :, None] * s[:, None, :]
        rows.append(np.broadcast_to(dof[:, :, None], ss.shape).ravel())
        cols.append(np.broadcast_to(dof[:, None, :], ss.shape).ravel())
        bv.append((ss * B).ravel())
        mv.append((ss * M).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (dofmap.n_total, dofmap.n_total)
    B_all = sp.coo_matrix((np.concatenate(bv), (rows, cols)), shape=shape).tocsr()
    M_all = sp.coo_matrix((np.concatenate(mv), (rows, cols)), shape=shape).tocsr()
    # exact symmetry regardless of summation order
    B_all = 0.5 * (B_all + B_all.T)
    M_all = 0.5 * (M_all + M_all.T)
    free = dofmap.free
    B = B_all[free][:, free].tocsr()
    M = M_all[free][:, free].tocsr()
    return GlobalSystem(B=B, M=M, dofmap=dofmap, mesh=mesh, B_all=B_all.tocsr(), M_all=M_all.tocsr(), ops=ops)


def divergence_matrix(mesh, dofmap):
    """Sparse (n_cells x n_total) matrix with entries sign * |l|, i.e. int_K div tau."""
    geo = mesh.geometry
    vals = dofmap.he_sign * geo.he_length
    return sp.coo_matrix(
        (vals, (mesh.he_cell, dofmap.edge_dof[mesh.he_edge])),
        shape=(mesh.n_cells, dofmap.n_total),
    ).tocsr()


def interpolate_constant(mesh, dofmap, c):
    """Global DOF vector of the constant field ``c`` (boundary DOFs included)."""
    ev = mesh.edge_vertices
    E = mesh.vertices[ev[:, 1]] - mesh.vertices[ev[:, 0]]
    L = np.hypot(E[:, 0], E[:, 1])
    normal = np.stack([E[:, 1], -E[:, 0]], axis=1) / L[:, None]
    w = normal @ np.asarray(c, dtype=float)
    return -w if dofmap.flipped else w


def interpolate_field(mesh, dofmap, field, order=3):
    """Edge averages of ``field(x, y) -> (fx, fy)`` by Gauss-Legendre quadrature."""
    ev = mesh.edge_vertices
    A = mesh.vertices[ev[:, 0]]
    B = mesh.vertices[ev[:, 1]]
    E = B - A
    L = np.hypot(E[:, 0], E[:, 1])
    normal = np.stack([E[:, 1], -E[:, 0]], axis=1) / L[:, None]
    t, wq = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    wq = 0.5 * wq
    total = np.zeros(mesh.n_edges)
    for ti, wi in zip(t, wq):
        x = A + ti * E
        fx, fy = field(x[:, 0], x[:, 1])
        total += wi * (np.asarray(fx) * normal[:, 0] + np.asarray(fy) * normal[:, 1])
    return -total if dofmap.flipped else total


@dataclass
class FieldReconstruction:
    projection: np.ndarray   # (n_cells, 2) Pi_h w_h
    pressure: np.ndarray     # (n_cells,) -div w_h
    u: np.ndarray | None     # (n_cells,) -div w_h / lambda_h


def local_dofs(mesh, dofmap, w):
    """Per half-edge local DOF values of a full global vector."""
    return dofmap.he_sign * w[dofmap.edge_dof[mesh.he_edge]]


def reconstruct_fields(mesh, dofmap, w, lam=None, ops=None, tol=1e-12):
    """Cellwise projection, pressure ``-div w`` and ``u = -div w / lambda``.

    ``w`` may be the free-DOF vector or the full vector.
    """
    w = np.asarray(w, dtype=float)
    if w.shape == (dofmap.n_free,) and dofmap.n_free != dofmap.n_total:
        w = dofmap.extend(w)
    elif w.shape != (dofmap.n_total,):
        raise DimensionMismatch(f"DOF vector of shape {w.shape} does not match the mesh")
    ops = ops or CellOperators(mesh)
    loc = local_dofs(mesh, dofmap, w)
    proj = np.empty((mesh.n_cells, 2))
    div = np.empty(mesh.n_cells)
    for n, (cells, pos, (d, P, *_)) in ops.groups.items():
        x = loc[pos]
        proj[cells] = np.einsum("mkn,mn->mk", P, x)
        div[cells] = np.einsum("mn,mn->m", d, x)
    u = None
    if lam is not None:
        if lam <= tol:
            raise ZeroEigenvalue(f"eigenvalue {lam!r} too small to recover u = -div w / lambda")
        u = -div / lam
    return FieldReconstruction(projection=proj, pressure=-div, u=u)


def write_triplets(A, path):
    """Write a sparse matrix as ``row col value`` lines."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
