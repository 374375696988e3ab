"""Smallest positive eigenpairs of ``B w = lambda M w``.

The div-div stiffness ``B`` annihilates every discrete divergence-free
field, so the pencil has a zero eigenvalue of multiplicity
``n_free - (n_cells - 1)``.  Two routes skip it:

* dense: full generalized decomposition of the shifted pencil
  ``(B + sigma M) x = mu M x``, then ``lambda = mu - sigma`` and the zero
  cluster is dropped;
* sparse: ``B = D^T C^-1 D`` with ``D`` the cellwise divergence integrals and
  ``C = diag(|K|)``, so the nonzero spectrum is that of the pressure pencil
  ``D M^-1 D^T p = lambda C p`` whose only zero mode is the constant.
  Shift-invert on that pencil uses one sparse LU of the quasi-definite
  saddle-point matrix ``[[M, D^T], [D, -sigma C]]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, InsufficientSpectrum, SizeExceeded
from .vem import divergence_matrix

RESIDUAL_TOL = 1e-8


@dataclass
class SolverConfig:
    n_eigs: int = 1
    shift: float = 1.0
    dense_threshold: int = 2000
    zero_tol: float = 1e-8
    max_iter: int | None = None
    krylov_dim: int | None = None

    def __post_init__(self):
        if self.shift <= 0:
            raise ValueError("shift must be positive")
        if not 0.0 < self.zero_tol < 1.0:
            raise ValueError("zero_tol must lie in (0, 1)")
        if self.n_eigs < 1:
            raise ValueError("n_eigs must be >= 1")


@dataclass
class EigenPair:
    lam: float
    w: np.ndarray         # free-DOF vector
    residual: float
    multiplicity: int = 1


def _cell_divergence(system):
    D = divergence_matrix(system.mesh, system.dofmap)[:, system.dofmap.free]
    area = system.mesh.geometry.area
    return D.tocsr(), area


def _finish(system, lams, W, D, area):
    """Normalize to ||u_h|| = 1, fix signs, measure residuals, flag clusters."""
    pairs = []
    for lam, w in zip(lams, W.T):
        Bw = system.B @ w
        Mw = system.M @ w
        lam = float(w @ Bw) / float(w @ Mw)
        div = (D @ w) / area
        norm_u = np.sqrt(np.sum(area * div**2)) / lam
        w = w / norm_u
        div = div / norm_u
        p = -div
        big = np.flatnonzero(np.abs(p) > 1e-8 * np.abs(p).max())
        if p[big[0]] < 0:
            w = -w
        Bw = system.B @ w
        res = float(np.linalg.norm(Bw - lam * (system.M @ w)) / np.linalg.norm(Bw))
        pairs.append(EigenPair(lam=lam, w=w, residual=res))
    # multiplicities of clustered eigenvalues
    i = 0
    while i < len(pairs):
        j = i + 1
        while j < len(pairs) and abs(pairs[j].lam - pairs[i].lam) <= 1e-8 * abs(pairs[i].lam):
            j += 1
        for k in range(i, j):
            pairs[k].multiplicity = j - i
        i = j
    return pairs


def _dense(system, config, n_eigs):
    B = system.B.toarray()
    M = system.M.toarray()
    sigma = config.shift
    mu, X = sla.eigh(B + sigma * M, M)
    lam = mu - sigma
    positive = np.flatnonzero(lam > config.zero_tol * mu.max())
    if len(positive) < n_eigs:
        raise InsufficientSpectrum(f"only {len(positive)} positive eigenvalues, {n_eigs} requested")
    sel = positive[:n_eigs]
    return lam[sel], X[:, sel]


def _sparse(system, config, n_eigs):
    D, area = _cell_divergence(system)
    nf = system.n
    nc = len(area)
    sigma = config.shift
    C = sp.diags(area)
    K = sp.bmat([[system.M, D.T], [D, -sigma * C]], format="csc")
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise ConvergenceFailure(f"saddle-point factorization failed: {exc}") from exc
    sq = np.sqrt(area)

    def solve_pressure(rhs_cells):
        rhs = np.concatenate([np.zeros(nf), -rhs_cells])
        sol = lu.solve(rhs)
        return sol[:nf], sol[nf:]

    def matvec(x):
        _, q = solve_pressure(sq * np.ravel(x))
        return sq * q

    op = spla.LinearOperator((nc, nc), matvec=matvec, dtype=float)
    k = min(n_eigs + 1, nc - 1)
    ncv = config.krylov_dim or min(nc, max(2 * k + 1, 20))
    # the constant is an exact eigenvector, so it must not be the start vector
    v0 = np.random.default_rng(12345).standard_normal(nc)
    try:
        nu, Y = spla.eigsh(op, k=k, which="LA", v0=v0, ncv=ncv, maxiter=config.max_iter, tol=1e-13)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(-nu)
    nu, Y = nu[order], Y[:, order]
    lam = 1.0 / nu - sigma
    scale = max(sigma, float(np.abs(lam).max()))
    keep = np.flatnonzero(lam > config.zero_tol * scale)
    if len(keep) < n_eigs:
        raise InsufficientSpectrum(f"only {len(keep)} positive eigenvalues found, {n_eigs} requested")
    keep = keep[:n_eigs]
    W = np.empty((nf, len(keep)))
    for col, i in enumerate(keep):
        p = Y[:, i] / sq
        x, _ = solve_pressure(area * p)
        W[:, col] = -(lam[i] + sigma) * x
    return lam[keep], W


def solve_smallest_positive(system, config=None):
    """Ascending smallest positive eigenpairs, normalized so that ``||u_h||_0 = 1``."""
    config = config or SolverConfig()
    n_cells = system.mesh.n_cells
    if system.n == 0:
        raise InsufficientSpectrum("system has no free degrees of freedom")
    n_eigs = config.n_eigs
    if n_eigs > n_cells - 1:
        raise InsufficientSpectrum(f"at most {n_cells - 1} positive eigenvalues exist, {n_eigs} requested")
    if system.n <= config.dense_threshold:
        lams, W = _dense(system, config, n_eigs)
    else:
        lams, W = _sparse(system, config, n_eigs)
    D, area = _cell_divergence(system)
    pairs = _finish(system, lams, W, D, area)
    worst = max(p.residual for p in pairs)
    if worst > RESIDUAL_TOL:
        raise ConvergenceFailure(f"eigenpair residual {worst:.3e} exceeds {RESIDUAL_TOL}")
    return pairs


def generalized_spectrum(system, shift=1.0):
    """All eigenvalues of the pencil (dense)."""
    B = system.B.toarray()
    M = system.M.toarray()
    mu = sla.eigh(B + shift * M, M, eigvals_only=True)
    return mu - shift, mu


def kernel_dimension(system, zero_tol=1e-8, dense_threshold=2000):
    """Number of (numerically) zero eigenvalues of the pencil, relative to the largest one."""
    if system.n == 0:
        return 0
    if system.n > dense_threshold:
        raise SizeExceeded(f"{system.n} DOFs exceed the dense limit {dense_threshold}")
    lam, mu = generalized_spectrum(system)
    return int(np.sum(np.abs(lam) < zero_tol * mu.max()))


def count_positive(system, zero_tol=1e-8):
    lam, mu = generalized_spectrum(system)
    return int(np.sum(lam >= zero_tol * mu.max()))
