"""Report and field exports: flat JSON, per-vertex CSV, legacy VTK."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import Mesh


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def solution_csv(mesh: Mesh, u: np.ndarray) -> str:
    lines = ["vertex_index,x,y,u"]
    lines += [f"{i},{x!r},{y!r},{v!r}" for i, ((x, y), v) in enumerate(zip(mesh.vertices.tolist(), np.asarray(u).tolist()))]
    return "\n".join(lines) + "\n"


def vtk_legacy(mesh: Mesh, u: np.ndarray, title: str = "wentzell solution") -> str:
    """ASCII legacy VTK unstructured grid of triangles with point scalar ``u``."""
    n, m = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {m} {4 * m}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {m}")
    out += ["5"] * m
    out += [f"POINT_DATA {n}", "SCALARS u double 1", "LOOKUP_TABLE default"]
    out += [repr(v) for v in np.asarray(u, dtype=float).tolist()]
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
