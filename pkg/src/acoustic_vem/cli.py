"""Command-line driver: run a refinement sequence and write its artifacts."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .adapt import RunConfig, estimate_rate, extrapolate, run
from .errors import InsufficientData
from .io import write_history_csv, write_mesh_json, write_summary_json
from .plotting import render_convergence, render_fields_svg, render_svg
from .vem import reconstruct_fields

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

DOMAIN_ALIASES = {
    "square": "unit_square",
    "lshape": "l_shape",
    "hshape": "h_shape",
    "circle": "circle_obstacles",
}
PATTERN_ALIASES = {
    "triangles": "triangles",
    "squares": "squares",
    "hexagons": "hexagons",
    "trapezoids": "trapezoids",
    "mix": "square_triangle_mix",
    "voronoi": "voronoi",
}
DEFAULT_PATTERN = {"unit_square": "squares", "circle_obstacles": "voronoi"}
# squares per unit length, or number of cells for voronoi
DEFAULT_RESOLUTION = {"unit_square": 8, "l_shape": 10, "h_shape": 8, "circle_obstacles": 8}
DEFAULT_VORONOI_CELLS = {"unit_square": 64, "l_shape": 100, "h_shape": 200, "circle_obstacles": 200}


def build_parser():
    p = argparse.ArgumentParser(
        prog="acoustic-vem",
        description="Adaptive lowest-order virtual element solver for the acoustic eigenproblem.",
    )
    p.add_argument("--domain", choices=sorted(DOMAIN_ALIASES), default="lshape")
    p.add_argument("--pattern", choices=sorted(PATTERN_ALIASES), default=None,
                   help="initial mesh pattern (default: squares on the square, voronoi on the circle, else triangles)")
    p.add_argument("--resolution", type=int, default=None,
                   help="squares per unit length, or number of cells for voronoi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("uniform", "adaptive"), default="adaptive")
    p.add_argument("--eig-index", type=int, default=1, help="1-based index among positive eigenvalues")
    p.add_argument("--theta", type=float, default=0.5, help="marking fraction of the largest indicator")
    p.add_argument("--max-ndof", type=int, default=20000)
    p.add_argument("--max-steps", type=int, default=30)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--svg", action="store_true", help="also write per-step mesh and final field SVGs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    domain = DOMAIN_ALIASES[args.domain]
    pattern = PATTERN_ALIASES[args.pattern] if args.pattern else DEFAULT_PATTERN.get(domain, "triangles")
    resolution = args.resolution
    if resolution is None:
        resolution = DEFAULT_VORONOI_CELLS[domain] if pattern == "voronoi" else DEFAULT_RESOLUTION[domain]
    return RunConfig(
        domain=domain,
        pattern=pattern,
        resolution=resolution,
        seed=args.seed,
        mode=args.mode,
        eig_index=args.eig_index,
        theta_mark=args.theta,
        max_ndof=args.max_ndof,
        max_steps=args.max_steps,
    )


def summarize(history):
    summary = {
        "config": {k: v for k, v in vars(history.config).items() if k != "solver"},
        "steps": len(history),
        "final": None,
        "extrapolation": None,
        "rate": None,
        "effectivity_band": None,
    }
    if len(history):
        last = history.steps[-1]
        summary["final"] = {"N": last.N, "n_cells": last.n_cells, "lambda_h": last.lambda_h, "eta_sq": last.eta_sq}
    try:
        ex = extrapolate(history)
    except InsufficientData:
        return summary
    summary["extrapolation"] = {"lambda_star": ex.lambda_star, "C": ex.C, "alpha": ex.alpha, "fit_residual": ex.fit_residual}
    try:
        summary["rate"] = estimate_rate(history, ex.lambda_star)
    except InsufficientData:
        pass
    eff = [s.effectivity for s in history.steps if s.effectivity is not None and s.error > 0]
    if eff:
        summary["effectivity_band"] = {"min": min(eff), "max": max(eff)}
    return summary


def format_table(history):
    lines = [f"{'step':>4} {'N':>8} {'lambda_h':>16} {'theta_sq':>11} {'jump_sq':>11} {'eta_sq':>11} {'error':>11} {'eff':>8}"]
    for i, s in enumerate(history.steps):
        err = f"{s.error:11.4e}" if s.error is not None else f"{'':>11}"
        eff = f"{s.effectivity:8.4f}" if s.effectivity is not None else f"{'':>8}"
        lines.append(
            f"{i:>4d} {s.N:>8d} {s.lambda_h:>16.10f} {s.theta_sq:>11.4e} {s.jump_sq:>11.4e} {s.eta_sq:>11.4e} {err} {eff}"
        )
    return "\n".join(lines)


def write_artifacts(history, out, svg=False):
    out.mkdir(parents=True, exist_ok=True)
    if len(history) == 0:
        return
    write_history_csv(history, out / "history.csv")
    for i, mesh in enumerate(history.meshes):
        write_mesh_json(mesh, out / f"mesh_step_{i}.json")
    summary = summarize(history)
    write_summary_json(summary, out / "summary.json")
    lam_ref = summary["extrapolation"]["lambda_star"] if summary["extrapolation"] else None
    render_convergence(history, out / "convergence.svg", lambda_ref=lam_ref)
    if svg:
        for i, (mesh, eta) in enumerate(zip(history.meshes, history.eta_cells)):
            render_svg(mesh, eta, out / f"mesh_step_{i}.svg", label="eta_K")
        mesh = history.meshes[-1]
        lam = history.steps[-1].lambda_h
        fields = reconstruct_fields(mesh, history.final_dofmap, history.final_w, lam)
        render_fields_svg(mesh, fields.pressure, fields.projection, out / "fields_final.svg")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = config_from_args(args)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        history = run(config)
    except (ValueError, RuntimeError) as exc:
        partial = getattr(exc, "partial_history", None)
        if partial is not None and len(partial):
            write_artifacts(partial, args.out, svg=False)
        if isinstance(exc, ValueError) and not (partial is not None and len(partial)):
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    write_artifacts(history, args.out, svg=args.svg)
    print(format_table(history))
    ex = summarize(history)["extrapolation"]
    if ex is not None and math.isfinite(ex["lambda_star"]):
        print(f"extrapolated lambda* = {ex['lambda_star']:.6f} (alpha = {ex['alpha']:.3f})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
