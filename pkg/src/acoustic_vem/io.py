"""Serialization of meshes, convergence histories and run summaries."""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .mesh import PolygonalMesh

HISTORY_COLUMNS = ("step", "N", "lambda_h", "theta_sq", "jump_sq", "eta_sq", "error", "effectivity")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write(path, data):
    """Write text or bytes to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        if isinstance(data, bytes):
            tmp.write_bytes(data)
        else:
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def mesh_to_dict(mesh):
    return {
        "generation": int(mesh.generation),
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [[int(v) for v in mesh.cells[c]] for c in range(mesh.n_cells)],
        "parent": None if mesh.parent is None else [int(p) for p in mesh.parent],
    }


def mesh_from_dict(data):
    return PolygonalMesh(
        np.asarray(data["vertices"], dtype=float),
        [np.asarray(c, dtype=np.int64) for c in data["cells"]],
        generation=int(data.get("generation", 0)),
        parent=data.get("parent"),
    )


def write_mesh_json(mesh, path):
    atomic_write(path, json.dumps(mesh_to_dict(mesh), separators=(",", ":")) + "\n")


def read_mesh_json(path):
    with open(path, encoding="utf-8") as fh:
        return mesh_from_dict(json.load(fh))


def history_rows(history):
    for i, s in enumerate(history.steps):
        yield {
            "step": i,
            "N": s.N,
            "lambda_h": s.lambda_h,
            "theta_sq": s.theta_sq,
            "jump_sq": s.jump_sq,
            "eta_sq": s.eta_sq,
            "error": s.error,
            "effectivity": s.effectivity,
        }


def write_history_csv(history, path):
    """One row per step; optional columns left empty when unavailable."""
    if len(history) == 0:
        raise ValueError("empty history")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history_rows(history):
        writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])
    atomic_write(path, buf.getvalue())


def read_history_csv(path):
    """Rows as dicts of int/float/None."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                elif k in ("step", "N"):
                    rec[k] = int(v)
                else:
                    rec[k] = float(v)
            out.append(rec)
    return out


def write_summary_json(summary, path):
    atomic_write(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
