"""SVG figures: meshes colored by a per-cell scalar, reconstructed fields, convergence curves.

Mesh and field figures are written as plain SVG text so the bytes depend
only on the inputs.  The convergence plot goes through matplotlib with the
SVG hash salt and date metadata pinned for the same reason.
"""
from __future__ import annotations

import io

import numpy as np

from .io import atomic_write

WIDTH = 640.0
MARGIN = 12.0
LEGEND_HEIGHT = 44.0
COLORMAP = "viridis"
SVG_SALT = "acoustic-vem"


def _colormap():
    from matplotlib import colormaps
    return colormaps[COLORMAP]


def _hex(rgba):
    r, g, b = (int(round(255 * c)) for c in rgba[:3])
    return f"#{r:02x}{g:02x}{b:02x}"


def scalar_colors(values):
    """Hex colors on a linear scale; a constant field maps to the middle color."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        t = (values - lo) / (hi - lo)
    else:
        t = np.full_like(values, 0.5)
    cmap = _colormap()
    return [_hex(cmap(float(x))) for x in t], lo, hi


class _Frame:
    """Maps mesh coordinates to SVG pixels (y axis flipped)."""

    def __init__(self, vertices, legend):
        lo = vertices.min(axis=0)
        hi = vertices.max(axis=0)
        span = np.maximum(hi - lo, 1e-300)
        self.scale = (WIDTH - 2 * MARGIN) / span[0]
        self.lo = lo
        self.plot_h = span[1] * self.scale
        self.height = self.plot_h + 2 * MARGIN + (LEGEND_HEIGHT if legend else 0.0)

    def xy(self, P):
        P = np.atleast_2d(P)
        x = MARGIN + (P[:, 0] - self.lo[0]) * self.scale
        y = MARGIN + self.plot_h - (P[:, 1] - self.lo[1]) * self.scale
        return x, y


def _path_d(x, y):
    pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
    return f"M{pts}Z"


def _header(frame):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0f}" height="{frame.height:.0f}" '
        f'viewBox="0 0 {WIDTH:.0f} {frame.height:.0f}">',
        f'<rect width="{WIDTH:.0f}" height="{frame.height:.0f}" fill="#ffffff"/>',
    ]


def _legend(frame, lo, hi, label):
    cmap = _colormap()
    y0 = frame.plot_h + 2 * MARGIN + 4
    w = WIDTH - 2 * MARGIN
    out = ['<defs><linearGradient id="scale" x1="0" x2="1" y1="0" y2="0">']
    for k in range(11):
        t = k / 10
        out.append(f'<stop offset="{t:.1f}" stop-color="{_hex(cmap(t))}"/>')
    out.append("</linearGradient></defs>")
    out.append(f'<rect class="legend" x="{MARGIN:.0f}" y="{y0:.3f}" width="{w:.0f}" height="14" fill="url(#scale)"/>')
    ty = y0 + 30
    out.append(f'<text x="{MARGIN:.0f}" y="{ty:.3f}" font-size="11" font-family="sans-serif">{lo:.6g}</text>')
    out.append(
        f'<text x="{WIDTH / 2:.0f}" y="{ty:.3f}" font-size="11" font-family="sans-serif" '
        f'text-anchor="middle">{label}</text>'
    )
    out.append(
        f'<text x="{WIDTH - MARGIN:.0f}" y="{ty:.3f}" font-size="11" font-family="sans-serif" '
        f'text-anchor="end">{hi:.6g}</text>'
    )
    return out


def _cell_paths(mesh, frame, fills, stroke_width):
    out = []
    for c in range(mesh.n_cells):
        x, y = frame.xy(mesh.vertices[mesh.cells[c]])
        fill = fills[c] if fills is not None else "none"
        out.append(f'<path d="{_path_d(x, y)}" fill="{fill}" stroke="#000000" stroke-width="{stroke_width}"/>')
    return out


def _stroke_width(mesh):
    return "0.6" if mesh.n_cells < 2000 else "0.2"


def render_svg(mesh, per_cell_scalar=None, path=None, label=""):
    """Mesh figure; cells filled by ``per_cell_scalar`` with a min/max legend, or a wireframe.

    Returns the SVG text and writes it to ``path`` when given.
    """
    fills = None
    if per_cell_scalar is not None:
        per_cell_scalar = np.asarray(per_cell_scalar, dtype=float)
        if per_cell_scalar.shape != (mesh.n_cells,):
            raise ValueError(f"expected {mesh.n_cells} cell values, got {per_cell_scalar.shape}")
        fills, lo, hi = scalar_colors(per_cell_scalar)
    frame = _Frame(mesh.vertices, legend=fills is not None)
    out = _header(frame)
    out.extend(_cell_paths(mesh, frame, fills, _stroke_width(mesh)))
    if fills is not None:
        out.extend(_legend(frame, lo, hi, label))
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        atomic_write(path, text)
    return text


MAX_ARROWS = 4000


def render_fields_svg(mesh, pressure, projection, path=None):
    """Cell fill by the pressure, one arrow per cell for the projected displacement."""
    pressure = np.asarray(pressure, dtype=float)
    projection = np.asarray(projection, dtype=float)
    fills, lo, hi = scalar_colors(pressure)
    frame = _Frame(mesh.vertices, legend=True)
    out = _header(frame)
    out.extend(_cell_paths(mesh, frame, fills, "0.15"))

    geo = mesh.geometry
    step = max(1, int(np.ceil(mesh.n_cells / MAX_ARROWS)))
    cells = np.arange(0, mesh.n_cells, step)
    mag = np.hypot(projection[:, 0], projection[:, 1])
    big = float(mag.max()) if mag.size else 0.0
    if big > 0:
        # longest arrow spans ~0.9 of a typical cell diameter
        length = 0.9 * np.sqrt(geo.area[cells]) * frame.scale
        v = projection[cells] / big
        x0, y0 = frame.xy(geo.centroid[cells])
        dx = v[:, 0] * length
        dy = -v[:, 1] * length
        segs = []
        for a, b, u, w in zip(x0, y0, dx, dy):
            ax, ay = a - 0.5 * u, b - 0.5 * w
            bx, by = a + 0.5 * u, b + 0.5 * w
            # two-stroke head at 25% of the shaft
            hx, hy = -0.25 * u, -0.25 * w
            segs.append(
                f"M{ax:.3f},{ay:.3f}L{bx:.3f},{by:.3f}"
                f"M{bx + hx - 0.5 * hy:.3f},{by + hy + 0.5 * hx:.3f}L{bx:.3f},{by:.3f}"
                f"L{bx + hx + 0.5 * hy:.3f},{by + hy - 0.5 * hx:.3f}"
            )
        out.append(f'<path class="arrows" d="{"".join(segs)}" fill="none" stroke="#d62728" stroke-width="0.8"/>')
    out.extend(_legend(frame, lo, hi, "pressure"))
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        atomic_write(path, text)
    return text


def render_convergence(history, path=None, lambda_ref=None):
    """Log-log plot of the error (when a reference is known) and of eta^2 against N."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    N = history.N
    eta_sq = np.array([s.eta_sq for s in history.steps])
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        ax.loglog(N, eta_sq, "s-", label=r"$\eta^2$")
        if lambda_ref is not None:
            err = np.abs(lambda_ref - history.lambdas)
            ok = err > 0
            ax.loglog(N[ok], err[ok], "o-", label=r"$|\lambda^* - \lambda_h|$")
        if len(N) > 1:
            ref = eta_sq[0] * (N / N[0]) ** -1.0
            ax.loglog(N, ref, "k--", linewidth=0.8, label=r"$N^{-1}$")
        ax.set_xlabel("N (free DOFs)")
        ax.grid(True, which="both", linewidth=0.3)
        ax.legend()
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text
