"""Residual a posteriori indicators for the discrete eigenfunction.

Per cell K the squared indicator is

    eta_K^2 = h_K^2 ||rot Pi w_h||^2_K + S^K(w_h - Pi w_h, w_h - Pi w_h)
              + sum_{l in E_K} h_K ||[[Pi w_h . t]]||^2_l

and the global estimator is ``eta = (sum_K eta_K^2)^(1/2)``.  At k = 0 the
projection is constant per cell, so the rot term vanishes identically and
the tangential jump is constant along each edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyIndicators, ZeroEstimator
from .mesh import BOUNDARY
from .vem import CellOperators, local_dofs

ROT_TOL = 1e-14


@dataclass
class LocalIndicator:
    cell: int
    R_sq: float
    theta_sq: float
    jump_sq: float

    @property
    def eta_sq(self):
        return self.R_sq + self.theta_sq + self.jump_sq


@dataclass
class EstimatorReport:
    R_sq: np.ndarray
    theta_sq: np.ndarray
    jump_sq: np.ndarray

    @property
    def eta_sq_cells(self):
        return self.R_sq + self.theta_sq + self.jump_sq

    @property
    def eta_cells(self):
        return np.sqrt(self.eta_sq_cells)

    @property
    def eta_sq(self):
        return float(self.eta_sq_cells.sum())

    @property
    def eta(self):
        return float(np.sqrt(self.eta_sq))

    @property
    def theta_total(self):
        return float(self.theta_sq.sum())

    @property
    def jump_total(self):
        return float(self.jump_sq.sum())

    @property
    def indicators(self):
        return [
            LocalIndicator(cell=i, R_sq=float(r), theta_sq=float(t), jump_sq=float(j))
            for i, (r, t, j) in enumerate(zip(self.R_sq, self.theta_sq, self.jump_sq))
        ]


def rot_of_projection(mesh, proj):
    """Cell average of rot(Pi w_h) through ``int_K rot v = int_dK v . t``.

    The edge vectors of a closed loop sum to zero; summing the sorted
    coordinates of start and end points makes that cancellation exact.
    """
    rot = np.empty(mesh.n_cells)
    area = mesh.geometry.area
    for n, cells in mesh.groups.items():
        pos = mesh.offsets[cells][:, None] + np.arange(n)
        V = mesh.vertices[mesh.conn[pos]]
        W = mesh.vertices[mesh.conn[mesh.he_next[pos]]]
        # int_dK c . t ds = c . sum(W - V); equal multisets cancel exactly once sorted
        tx = np.sort(W[..., 0], axis=1).sum(axis=1) - np.sort(V[..., 0], axis=1).sum(axis=1)
        ty = np.sort(W[..., 1], axis=1).sum(axis=1) - np.sort(V[..., 1], axis=1).sum(axis=1)
        rot[cells] = (proj[cells, 0] * tx + proj[cells, 1] * ty) / area[cells]
    return rot


def jump_terms(mesh, proj):
    """Per-cell sum of h_K |l| ([[Pi w . t]])^2 over interior edges, and the per-edge jumps."""
    proj = np.asarray(proj, dtype=float)
    if proj.shape != (mesh.n_cells, 2):
        raise DimensionMismatch(f"projection must have shape ({mesh.n_cells}, 2)")
    ev = mesh.edge_vertices
    E = mesh.vertices[ev[:, 1]] - mesh.vertices[ev[:, 0]]
    L = np.hypot(E[:, 0], E[:, 1])
    t = E / L[:, None]
    left, right = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    interior = right != BOUNDARY
    J = np.zeros(mesh.n_edges)
    diff = proj[left[interior]] - proj[right[interior]]
    J[interior] = (diff * t[interior]).sum(axis=1)
    h = mesh.geometry.diameter
    contrib = L * J**2
    out = np.zeros(mesh.n_cells)
    np.add.at(out, left[interior], h[left[interior]] * contrib[interior])
    np.add.at(out, right[interior], h[right[interior]] * contrib[interior])
    return out, J


def local_indicators(mesh, dofmap, w, ops=None):
    """Indicator components for the eigenfunction with DOF vector ``w`` (free or full)."""
    w = np.asarray(w, dtype=float)
    if w.shape == (dofmap.n_free,) and dofmap.n_free != dofmap.n_total:
        w = dofmap.extend(w)
    elif w.shape != (dofmap.n_total,):
        raise DimensionMismatch(f"DOF vector of shape {w.shape} does not match the mesh")
    ops = ops or CellOperators(mesh)
    loc = local_dofs(mesh, dofmap, w)
    proj = np.empty((mesh.n_cells, 2))
    theta = np.empty(mesh.n_cells)
    area = mesh.geometry.area
    for n, (cells, pos, (d, P, Pi_dof, S, M, B)) in ops.groups.items():
        x = loc[pos]
        proj[cells] = np.einsum("mkn,mn->mk", P, x)
        # S = stab |K| (I - Pi)^T (I - Pi); the factored form avoids cancellation
        r = x - np.einsum("mij,mj->mi", Pi_dof, x)
        theta[cells] = ops.stab * area[cells] * np.einsum("mi,mi->m", r, r)

    rot = rot_of_projection(mesh, proj)
    scale = max(1.0, float(np.abs(proj).max()))
    if np.abs(rot).max() > ROT_TOL * scale:
        raise AssertionError(f"rot of a constant projection evaluated to {np.abs(rot).max():.3e}")
    R_sq = np.zeros(mesh.n_cells)

    jump, _ = jump_terms(mesh, proj)
    return EstimatorReport(R_sq=R_sq, theta_sq=theta, jump_sq=jump)


def mark_cells(indicators, theta_mark=0.5, quantity="eta"):
    """Maximum strategy: cells with indicator >= theta_mark * max.

    ``indicators`` is an :class:`EstimatorReport` or an array of per-cell
    values of ``eta_K`` (``quantity='eta'``) or ``eta_K^2``
    (``quantity='eta_sq'``).  Arrays are taken as already being the chosen
    quantity.
    """
    if not 0.0 < theta_mark <= 1.0:
        raise ValueError("theta_mark must lie in (0, 1]")
    if isinstance(indicators, EstimatorReport):
        values = indicators.eta_cells if quantity == "eta" else indicators.eta_sq_cells
    elif quantity in ("eta", "eta_sq"):
        values = np.asarray(indicators, dtype=float)
    else:
        raise ValueError(f"unknown marking quantity {quantity!r}")
    if values.size == 0:
        raise EmptyIndicators("no indicators to mark")
    top = values.max()
    marked = np.flatnonzero(values >= theta_mark * top)
    if marked.size == 0:
        marked = np.array([int(np.argmax(values))])
    return set(int(i) for i in marked)


def effectivity(lambda_ref, lambda_h, eta):
    """``|lambda_ref - lambda_h| / eta^2``."""
    if not eta > 0.0:
        raise ZeroEstimator("estimator is zero")
    return abs(lambda_ref - lambda_h) / eta**2
