"""Mixed (velocity, pressure) form of the discrete problem and its equivalence with the primal one.

With piecewise-constant pressures the mixed pencil is

    [[A, Bt^T], [Bt, 0]] (w, u) = lambda [[0, 0], [0, -C]] (w, u)

where ``A`` is the stabilized mass, ``Bt[K, l] = sign * |l|`` integrates the
divergence over each cell and ``C = diag(|K|)``.  Eliminating ``w`` gives
``Bt A^-1 Bt^T u = lambda C u`` and, since div is cellwise constant, the
primal stiffness is exactly ``Bt^T C^-1 Bt``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .eig import SolverConfig, count_positive, solve_smallest_positive
from .errors import SolveFailure, UnsupportedDegree
from .vem import DEFAULT_STABILIZATION, assemble, divergence_matrix, reconstruct_fields

SADDLE_POINT_LIMIT = 200


@dataclass
class MixedSystem:
    A: sp.csr_matrix
    Bt: sp.csr_matrix     # n_cells x n_free
    C: sp.dia_matrix      # diag(|K|)

    def primal_stiffness(self):
        """``Bt^T C^-1 Bt``."""
        Cinv = sp.diags(1.0 / self.C.diagonal())
        return (self.Bt.T @ Cinv @ self.Bt).tocsr()


@dataclass
class EquivalenceReport:
    eigenvalue_discrepancy: float
    u_relation_residual: float
    n_positive_primal: int
    n_positive_mixed: int
    saddle_point_discrepancy: float | None = None

    def ok(self, tol):
        return (
            self.eigenvalue_discrepancy <= tol
            and self.u_relation_residual <= tol
            and self.n_positive_primal == self.n_positive_mixed
            and (self.saddle_point_discrepancy is None or self.saddle_point_discrepancy <= max(tol, 1e-8))
        )


def assemble_mixed(mesh, dofmap, stab=DEFAULT_STABILIZATION):
    if dofmap.k != 0:
        raise UnsupportedDegree("mixed assembly is implemented for k = 0 only")
    system = assemble(mesh, dofmap, stab)
    Bt = divergence_matrix(mesh, dofmap)[:, dofmap.free].tocsr()
    C = sp.diags(mesh.geometry.area)
    return MixedSystem(A=system.M, Bt=Bt, C=C)


def mixed_spectrum(mixed):
    """Positive eigenvalues of the Schur-reduced pencil ``Bt A^-1 Bt^T u = lambda C u`` (dense)."""
    A = mixed.A.toarray()
    Bt = mixed.Bt.toarray()
    try:
        X = sla.solve(A, Bt.T, assume_a="pos")
    except (sla.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"mass block solve failed: {exc}") from exc
    S = Bt @ X
    S = 0.5 * (S + S.T)
    lam, U = sla.eigh(S, np.diag(mixed.C.diagonal()))
    keep = lam > 1e-8 * lam.max()
    return lam[keep], U[:, keep]


def saddle_point_spectrum(mixed):
    """Finite eigenvalues of the full indefinite mixed pencil via QZ; small systems only."""
    n = mixed.A.shape[0]
    m = mixed.Bt.shape[0]
    if n > SADDLE_POINT_LIMIT:
        raise SolveFailure(f"{n} DOFs exceed the saddle-point limit {SADDLE_POINT_LIMIT}")
    Bt = mixed.Bt.toarray()
    K = np.block([[mixed.A.toarray(), Bt.T], [Bt, np.zeros((m, m))]])
    Mb = np.zeros_like(K)
    Mb[n:, n:] = -np.diag(mixed.C.diagonal())
    alpha, beta = sla.eig(K, Mb, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.abs(alpha).max()
    lam = (alpha[finite] / beta[finite])
    lam = lam[np.abs(lam.imag) <= 1e-8 * np.abs(lam).max()].real
    lam = np.sort(lam)
    return lam[lam > 1e-8 * lam.max()]


def check_equivalence(mesh, dofmap, primal_pairs=None, n_modes=5, stab=DEFAULT_STABILIZATION):
    """Compare the primal and mixed spectra and the recovered pressure relation.

    ``primal_pairs`` defaults to the first ``n_modes`` primal eigenpairs.
    The direct saddle-point solve is added when the mesh has at most
    ``SADDLE_POINT_LIMIT`` free DOFs.
    """
    system = assemble(mesh, dofmap, stab)
    if primal_pairs is None:
        n_modes = min(n_modes, mesh.n_cells - 1)
        primal_pairs = solve_smallest_positive(system, SolverConfig(n_eigs=n_modes))
    n = len(primal_pairs)
    mixed = assemble_mixed(mesh, dofmap, stab)
    lam_mixed, U = mixed_spectrum(mixed)
    if len(lam_mixed) < n:
        raise SolveFailure(f"mixed pencil has only {len(lam_mixed)} positive eigenvalues")
    lam_primal = np.array([p.lam for p in primal_pairs])
    disc = float(np.max(np.abs(lam_mixed[:n] - lam_primal) / lam_primal))

    # primal u_h = -div w_h / lambda_h must lie in the mixed pressure eigenspace of lambda_h
    area = mesh.geometry.area
    resid = 0.0
    for p in primal_pairs:
        u = reconstruct_fields(mesh, dofmap, p.w, p.lam, ops=system.ops).u
        cluster = np.abs(lam_mixed - p.lam) <= 1e-8 * p.lam
        if not cluster.any():
            raise SolveFailure(f"no mixed eigenvalue matches {p.lam!r}")
        V = U[:, cluster]              # C-orthonormal columns
        u_proj = V @ (V.T @ (area * u))
        resid = max(resid, float(np.sqrt(np.sum(area * (u - u_proj) ** 2))))

    sp_disc = None
    if dofmap.n_free <= SADDLE_POINT_LIMIT:
        lam_sp = saddle_point_spectrum(mixed)
        if len(lam_sp) < n:
            raise SolveFailure("saddle-point pencil returned too few finite eigenvalues")
        sp_disc = float(np.max(np.abs(lam_sp[:n] - lam_primal) / lam_primal))

    return EquivalenceReport(
        eigenvalue_discrepancy=disc,
        u_relation_residual=resid,
        n_positive_primal=count_positive(system) if system.n <= 2000 else mesh.n_cells - 1,
        n_positive_mixed=len(lam_mixed),
        saddle_point_discrepancy=sp_disc,
    )

