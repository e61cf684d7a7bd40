"""Mesh and metric file formats.

Native mesh format (plain text, documented in the README):

    adaptix-mesh 1
    <num_vertices> <num_elements>
    x y            (one line per vertex)
    a b c          (one line per element, 0-based ccw vertex ids)
    t0 t1          (one line per vertex: boundary-side tags, -1 = unset)

A legacy-ASCII VTK unstructured-grid export is provided for visual
inspection, and metric fields dump/load as (m00,m01,m11) CSV rows
aligned with vertex ids.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import MeshStructureError
from .mesh import Mesh
from .metric import MetricField

MAGIC = "adaptix-mesh 1"


def write_mesh(mesh: Mesh, path) -> None:
    """Write the alive part of a mesh (compact ids) to the native format."""
    keep = np.nonzero(mesh.v_alive[:mesh.nv])[0]
    renum = np.full(mesh.nv, -1, np.int64)
    renum[keep] = np.arange(len(keep))
    tris = renum[mesh.alive_elements()]
    lines = [MAGIC, f"{len(keep)} {len(tris)}"]
    for v in keep:
        lines.append(f"{mesh.coords[v, 0]:.17g} {mesh.coords[v, 1]:.17g}")
    for a, b, c in tris:
        lines.append(f"{a} {b} {c}")
    for v in keep:
        lines.append(f"{mesh.btag[v, 0]} {mesh.btag[v, 1]}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read a native-format mesh file."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or raw[0] != MAGIC:
        raise MeshStructureError(f"{path}: not a native mesh file (missing '{MAGIC}')")
    try:
        nv, ne = (int(x) for x in raw[1].split())
        rows = raw[2:]
        if len(rows) != 2 * nv + ne:
            raise ValueError(f"expected {2 * nv + ne} data lines, found {len(rows)}")
        coords = np.array([[float(x) for x in rows[i].split()] for i in range(nv)])
        tris = np.array([[int(x) for x in rows[nv + i].split()] for i in range(ne)],
                        np.int64).reshape(ne, 3)
        btag = np.array([[int(x) for x in rows[nv + ne + i].split()] for i in range(nv)],
                        np.int32).reshape(nv, 2)
    except (ValueError, IndexError) as exc:
        raise MeshStructureError(f"{path}: malformed mesh file: {exc}") from exc
    return Mesh(coords, tris, btag)


def write_vtk(mesh: Mesh, path, point_data: dict | None = None) -> None:
    """Legacy-ASCII VTK unstructured grid of the alive mesh."""
    keep = np.nonzero(mesh.v_alive[:mesh.nv])[0]
    renum = np.full(mesh.nv, -1, np.int64)
    renum[keep] = np.arange(len(keep))
    tris = renum[mesh.alive_elements()]
    out = ["# vtk DataFile Version 2.0", "adaptix mesh", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(keep)} double"]
    for v in keep:
        out.append(f"{mesh.coords[v, 0]:.9g} {mesh.coords[v, 1]:.9g} 0")
    out.append(f"CELLS {len(tris)} {4 * len(tris)}")
    for a, b, c in tris:
        out.append(f"3 {a} {b} {c}")
    out.append(f"CELL_TYPES {len(tris)}")
    out.extend(["5"] * len(tris))
    if point_data:
        out.append(f"POINT_DATA {len(keep)}")
        for name, values in point_data.items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            vals = np.asarray(values)[keep]
            out.extend(f"{x:.9g}" for x in vals)
    _atomic_write(path, "\n".join(out) + "\n")


def write_metric_csv(metric: MetricField, mesh: Mesh, path) -> None:
    """Per-vertex tensor dump (rows aligned with the alive vertex order)."""
    keep = np.nonzero(mesh.v_alive[:mesh.nv])[0]
    lines = ["m00,m01,m11"]
    for v in keep:
        m = metric.m[v]
        lines.append(f"{m[0]:.17g},{m[1]:.17g},{m[2]:.17g}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_metric_csv(path, mesh: Mesh, eta: float | None = None,
                    h_min: float | None = None, h_max: float | None = None) -> MetricField:
    """Load a tensor CSV written by :func:`write_metric_csv`."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    nv = mesh.num_vertices
    if rows.shape != (nv, 3):
        raise MeshStructureError(
            f"{path}: expected {nv} tensor rows for this mesh, found {rows.shape[0]}")
    kwargs = {}
    if eta is not None:
        kwargs["eta"] = eta
    if h_min is not None:
        kwargs["h_min"] = h_min
    if h_max is not None:
        kwargs["h_max"] = h_max
    metric = MetricField(mesh, **kwargs)
    metric.m[mesh.alive_vertex_ids()] = rows
    return metric


def _atomic_write(path, text: str) -> None:
    """Write via a temp file and rename so reruns never leave partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
