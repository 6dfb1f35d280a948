"""Plain-text mesh interchange format.

The file is a sequence of sections.  A section starts with ``[name]`` on
its own line; every following non-blank line is one row of
whitespace-separated decimal tokens.  Floats are written with 17
significant digits so a round trip is exact.

Sections, in order:

``[meta]``
    ``key = value`` lines: ``kind``, ``domain``, ``total_area``,
    ``orthogonality`` and ``params`` (JSON).
``[counts]``
    ``cells``, ``edges``, ``vertices``.
``[cell_centers]``, ``[vertex_points]``, ``[edge_points]``
    one row of 2 (plane) or 3 (sphere) coordinates per entity.
``[cell_vertices]``, ``[cell_edges]``, ``[cell_edge_signs]``
    one row per cell, counter-clockwise; ``cell_edges`` row ``k`` entry
    joins vertex ``k`` to vertex ``k+1``; signs are n(e, i).
``[edge_cells]``, ``[edge_cell_sign]``, ``[edge_vertices]``, ``[edge_vertex_sign]``
    one row of two entries per edge.
``[vertex_edges]``, ``[vertex_edge_signs]``, ``[vertex_cells]``
    one row per vertex; signs are t(e, v).
``[cell_area]``, ``[vertex_area]``, ``[le]``, ``[de]``
    one value per row.
``[cell_edge_area]``, ``[cell_vertex_area]``
    one row per cell, aligned with ``cell_edges`` / ``cell_vertices``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import Mesh

_DENSE_FLOAT = ["cell_centers", "vertex_points", "edge_points"]
_RAGGED_INT = ["cell_vertices", "cell_edges", "cell_edge_signs"]
_DENSE_INT = ["edge_cells", "edge_cell_sign", "edge_vertices", "edge_vertex_sign"]
_RAGGED_INT_V = ["vertex_edges", "vertex_edge_signs", "vertex_cells"]
_VECTORS = ["cell_area", "vertex_area", "le", "de"]
_RAGGED_FLOAT = ["cell_edge_area", "cell_vertex_area"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_mesh(mesh: Mesh, path) -> None:
    out = ["# mimetic_swe mesh v1", "[meta]"]
    out.append(f"kind = {mesh.kind}")
    out.append(f"domain = {mesh.domain}")
    out.append(f"total_area = {_fmt(mesh.total_area)}")
    out.append(f"orthogonality = {_fmt(mesh.orthogonality)}")
    out.append(f"params = {json.dumps(mesh.params)}")
    out += ["[counts]", f"cells = {mesh.n_cells}", f"edges = {mesh.n_edges}", f"vertices = {mesh.n_vertices}"]
    for name in _DENSE_FLOAT:
        out.append(f"[{name}]")
        out += [" ".join(_fmt(x) for x in row) for row in getattr(mesh, name)]
    for name in _RAGGED_INT + _DENSE_INT + _RAGGED_INT_V:
        out.append(f"[{name}]")
        out += [" ".join(str(int(x)) for x in row) for row in getattr(mesh, name)]
    for name in _VECTORS:
        out.append(f"[{name}]")
        out += [_fmt(x) for x in getattr(mesh, name)]
    for name in _RAGGED_FLOAT:
        out.append(f"[{name}]")
        out += [" ".join(_fmt(x) for x in row) for row in getattr(mesh, name)]
    Path(path).write_text("\n".join(out) + "\n")


def _sections(text: str) -> dict:
    secs, cur = {}, None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1]
            secs[cur] = []
        elif cur is None:
            raise ValueError("mesh file: data before first section")
        else:
            secs[cur].append(line)
    return secs


def read_mesh(path) -> Mesh:
    secs = _sections(Path(path).read_text())
    meta = dict(line.split(" = ", 1) for line in secs["meta"])
    kw = {
        "kind": meta["kind"],
        "domain": meta["domain"],
        "params": json.loads(meta["params"]),
        "total_area": float(meta["total_area"]),
        "orthogonality": float(meta["orthogonality"]),
    }
    for name in _DENSE_FLOAT:
        kw[name] = np.array([[float(x) for x in r.split()] for r in secs[name]])
    for name in _RAGGED_INT + _RAGGED_INT_V:
        kw[name] = tuple(np.array([int(x) for x in r.split()], dtype=np.int64) for r in secs[name])
    for name in _DENSE_INT:
        kw[name] = np.array([[int(x) for x in r.split()] for r in secs[name]], dtype=np.int64)
    for name in _VECTORS:
        kw[name] = np.array([float(r) for r in secs[name]])
    for name in _RAGGED_FLOAT:
        kw[name] = tuple(np.array([float(x) for x in r.split()]) for r in secs[name])
    mesh = Mesh(**kw)
    counts = dict(line.split(" = ", 1) for line in secs["counts"])
    if (int(counts["cells"]), int(counts["edges"]), int(counts["vertices"])) != (
        mesh.n_cells, mesh.n_edges, mesh.n_vertices,
    ):
        raise ValueError("mesh file: counts section disagrees with tables")
    return mesh
