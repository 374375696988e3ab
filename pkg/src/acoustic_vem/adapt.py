"""Solve -> estimate -> mark -> refine loops and their post-processing."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eig import SolverConfig, solve_smallest_positive
from .errors import InsufficientData, VemError
from .estimator import effectivity, local_indicators, mark_cells
from .generators import generate_mesh, get_domain
from .mesh import refine_cells, uniform_refine
from .vem import DEFAULT_STABILIZATION, assemble, build_dof_map, reconstruct_fields

log = logging.getLogger(__name__)

ALPHA_GRID = np.round(np.arange(0.3, 2.0 + 1e-9, 0.005), 10)


@dataclass
class RunConfig:
    domain: str = "l_shape"
    pattern: str = "triangles"
    resolution: int = 10
    seed: int = 0
    mode: str = "adaptive"
    eig_index: int = 1
    theta_mark: float = 0.5
    max_ndof: int = 20000
    max_steps: int = 30
    marking: str = "eta"
    stabilization: float = DEFAULT_STABILIZATION
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.eig_index < 1:
            raise ValueError("eig_index must be >= 1")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.theta_mark <= 1.0:
            raise ValueError("theta_mark must lie in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class StepRecord:
    N: int
    lambda_h: float
    eta_sq: float
    theta_sq: float
    jump_sq: float
    n_cells: int = 0
    n_total: int = 0
    error: float | None = None
    effectivity: float | None = None


@dataclass
class ConvergenceHistory:
    steps: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    eta_cells: list = field(default_factory=list)
    marked: list = field(default_factory=list)
    final_w: np.ndarray | None = None
    final_dofmap: object = None
    config: RunConfig | None = None

    def __len__(self):
        return len(self.steps)

    @property
    def N(self):
        return np.array([s.N for s in self.steps], dtype=float)

    @property
    def lambdas(self):
        return np.array([s.lambda_h for s in self.steps])

    def attach_reference(self, lambda_ref):
        for s in self.steps:
            s.error = abs(lambda_ref - s.lambda_h)
            s.effectivity = effectivity(lambda_ref, s.lambda_h, np.sqrt(s.eta_sq)) if s.eta_sq > 0 else None


@dataclass
class ExtrapolationResult:
    lambda_star: float
    C: float
    alpha: float
    fit_residual: float


def _transfer(u_old, parent):
    """Cellwise-constant injection from the parent mesh."""
    return u_old[parent]


def _select_mode(pairs, mesh, dofmap, ops, eig_index, previous_u):
    """Index of the mode to follow: by position on the first step, by correlation afterwards."""
    if previous_u is None or mesh.parent is None:
        return eig_index - 1
    area = mesh.geometry.area
    ref = _transfer(previous_u, mesh.parent)
    best, best_corr = eig_index - 1, -1.0
    for i, pair in enumerate(pairs):
        u = reconstruct_fields(mesh, dofmap, pair.w, pair.lam, ops=ops).u
        corr = abs(np.sum(area * u * ref)) / np.sqrt(np.sum(area * u * u) * np.sum(area * ref * ref))
        if corr > best_corr + 1e-12:
            best, best_corr = i, corr
    return best


def run(config):
    """Run a uniform or adaptive refinement sequence.

    On failure the exception carries the steps completed so far as
    ``exc.partial_history``.
    """
    history = ConvergenceHistory(config=config)
    domain = get_domain(config.domain)
    try:
        mesh = generate_mesh(domain, config.pattern, config.resolution, config.seed)
        previous_u = None
        n_modes = config.eig_index + 3
        for step in range(config.max_steps):
            dofmap = build_dof_map(mesh)
            system = assemble(mesh, dofmap, config.stabilization)
            solver = SolverConfig(
                n_eigs=min(n_modes, mesh.n_cells - 1),
                shift=config.solver.shift,
                dense_threshold=config.solver.dense_threshold,
                zero_tol=config.solver.zero_tol,
                max_iter=config.solver.max_iter,
                krylov_dim=config.solver.krylov_dim,
            )
            pairs = solve_smallest_positive(system, solver)
            k = _select_mode(pairs, mesh, dofmap, system.ops, config.eig_index, previous_u)
            pair = pairs[k]
            if k != config.eig_index - 1:
                log.info("step %d: followed mode %d instead of %d", step, k + 1, config.eig_index)
            report = local_indicators(mesh, dofmap, pair.w, ops=system.ops)
            fields = reconstruct_fields(mesh, dofmap, pair.w, pair.lam, ops=system.ops)
            previous_u = fields.u

            history.steps.append(StepRecord(
                N=dofmap.n_free,
                lambda_h=pair.lam,
                eta_sq=report.eta_sq,
                theta_sq=report.theta_total,
                jump_sq=report.jump_total,
                n_cells=mesh.n_cells,
                n_total=dofmap.n_total,
            ))
            history.meshes.append(mesh)
            history.eta_cells.append(report.eta_cells)
            history.final_w = dofmap.extend(pair.w)
            history.final_dofmap = dofmap
            log.info("step %d  N=%d  lambda_h=%.10f  eta^2=%.4e", step, dofmap.n_free, pair.lam, report.eta_sq)

            if config.mode == "adaptive" and len(history) > 3:
                prev = history.steps[-2].eta_sq
                if report.eta_sq >= prev:
                    warnings.warn(f"estimator did not decrease at step {step}", RuntimeWarning, stacklevel=2)

            if step == config.max_steps - 1:
                break
            if config.mode == "uniform":
                marked = set(range(mesh.n_cells))
                new_mesh = uniform_refine(mesh)
            else:
                marked = mark_cells(report, config.theta_mark, config.marking)
                new_mesh = refine_cells(mesh, marked)
            history.marked.append(sorted(marked))
            if int((~new_mesh.boundary_edges).sum()) > config.max_ndof:
                break
            mesh = new_mesh
    except VemError as exc:
        exc.partial_history = history
        raise

    if len(history) >= 4:
        history.attach_reference(extrapolate(history).lambda_star)
    return history


def _fit_fixed_alpha(N, lam, alpha):
    X = np.stack([np.ones_like(N), N**-alpha], axis=1)
    coef, *_ = np.linalg.lstsq(X, lam, rcond=None)
    r = lam - X @ coef
    return coef, float(r @ r)


def extrapolate(history, n_last=None):
    """Least-squares fit ``lambda_h(N) = lambda* + C N^-alpha`` over the tail of the history.

    ``alpha`` is found by grid search on [0.3, 2.0] (step 0.005) with the
    linear coefficients solved in closed form for each candidate.
    """
    N = history.N if isinstance(history, ConvergenceHistory) else np.asarray(history[0], dtype=float)
    lam = history.lambdas if isinstance(history, ConvergenceHistory) else np.asarray(history[1], dtype=float)
    if len(N) < 4:
        raise InsufficientData("extrapolation needs at least 4 steps")
    if n_last is None:
        n_last = max(4, (len(N) + 1) // 2)
    N, lam = N[-n_last:], lam[-n_last:]
    best = None
    for alpha in ALPHA_GRID:
        coef, rss = _fit_fixed_alpha(N, lam, alpha)
        if best is None or rss < best[2]:
            best = (alpha, coef, rss)
    alpha, (lam_star, C), rss = best
    return ExtrapolationResult(lambda_star=float(lam_star), C=float(C), alpha=float(alpha), fit_residual=float(np.sqrt(rss)))


def estimate_rate(history, lambda_ref):
    """Least-squares slope of log|lambda_ref - lambda_h| against log N over the last half."""
    N = history.N if isinstance(history, ConvergenceHistory) else np.asarray(history[0], dtype=float)
    lam = history.lambdas if isinstance(history, ConvergenceHistory) else np.asarray(history[1], dtype=float)
    err = np.abs(lambda_ref - lam)
    ok = err > 0
    N, err = N[ok], err[ok]
    if len(N) < 3:
        raise InsufficientData("rate estimation needs at least 3 steps with nonzero error")
    tail = max(3, (len(N) + 1) // 2)
    slope, _ = np.polyfit(np.log(N[-tail:]), np.log(err[-tail:]), 1)
    return float(slope)
