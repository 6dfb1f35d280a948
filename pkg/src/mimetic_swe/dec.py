"""Discrete exterior derivatives as integer sparse matrices.

``D1``: primal 0-forms (vertices) -> primal 1-forms (edges), tangential difference.
``D1bar``: dual 0-forms (cells) -> dual 1-forms (edges), normal difference.
``D2``: primal 1-forms -> primal 2-forms (cells), outward sum.
``D2bar``: dual 1-forms -> dual 2-forms (vertices), circulation.

``D2`` and ``D2bar`` are assembled from the per-cell and per-vertex
orientation tables, ``D1`` and ``D1bar`` from the per-edge tables, so the
transpose identities checked by the validator compare two independently
stored representations of the orientation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

# (site, form, degree) combinations that exist on a primal/dual pair
_SITES = {
    ("vertex", "primal", 0),
    ("edge", "primal", 1),
    ("cell", "primal", 2),
    ("cell", "dual", 0),
    ("edge", "dual", 1),
    ("vertex", "dual", 2),
}


class FormError(TypeError):
    pass


@dataclass(frozen=True)
class Field:
    values: np.ndarray
    site: str
    form: str
    degree: int

    def __post_init__(self):
        if (self.site, self.form, self.degree) not in _SITES:
            raise FormError(f"no {self.form} {self.degree}-form lives on {self.site}s")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def check(self, mesh: Mesh) -> "Field":
        if self.values.shape != (mesh.count(self.site),):
            raise FormError(f"{self.site} field has {self.values.shape} values, mesh has {mesh.count(self.site)}")
        return self


def primal0(v): return Field(v, "vertex", "primal", 0)
def primal1(v): return Field(v, "edge", "primal", 1)
def primal2(v): return Field(v, "cell", "primal", 2)
def dual0(v): return Field(v, "cell", "dual", 0)
def dual1(v): return Field(v, "edge", "dual", 1)
def dual2(v): return Field(v, "vertex", "dual", 2)


@dataclass(frozen=True)
class Incidence:
    D1: sp.csr_matrix
    D1bar: sp.csr_matrix
    D2: sp.csr_matrix
    D2bar: sp.csr_matrix


def _csr(rows, cols, vals, shape):
    m = sp.csr_matrix((np.asarray(vals, dtype=np.int64), (rows, cols)), shape=shape)
    m.sum_duplicates()
    return m


@lru_cache(maxsize=64)
def incidence(mesh: Mesh) -> Incidence:
    ne, nc, nv = mesh.n_edges, mesh.n_cells, mesh.n_vertices
    e2 = np.repeat(np.arange(ne), 2)
    D1 = _csr(e2, mesh.edge_vertices.ravel(), mesh.edge_vertex_sign.ravel(), (ne, nv))
    D1bar = _csr(e2, mesh.edge_cells.ravel(), -mesh.edge_cell_sign.ravel(), (ne, nc))
    rows = np.repeat(np.arange(nc), mesh.cell_degree)
    D2 = _csr(rows, np.concatenate(mesh.cell_edges), np.concatenate(mesh.cell_edge_signs), (nc, ne))
    vdeg = [len(x) for x in mesh.vertex_edges]
    rows = np.repeat(np.arange(nv), vdeg)
    D2bar = _csr(rows, np.concatenate(mesh.vertex_edges), np.concatenate(mesh.vertex_edge_signs), (nv, ne))
    return Incidence(D1, D1bar, D2, D2bar)


def _apply(mesh, op, f, src, dst):
    if isinstance(f, Field):
        f.check(mesh)
        if (f.site, f.form, f.degree) != src:
            raise FormError(f"expected a {src[1]} {src[2]}-form on {src[0]}s, got {f.form} {f.degree}-form on {f.site}s")
        return Field(op @ f.values, *dst)
    return op @ np.asarray(f)


def d1(mesh: Mesh, f):
    """Tangential difference along each edge: head value minus tail value."""
    return _apply(mesh, incidence(mesh).D1, f, ("vertex", "primal", 0), ("edge", "primal", 1))


def d1bar(mesh: Mesh, f):
    return _apply(mesh, incidence(mesh).D1bar, f, ("cell", "dual", 0), ("edge", "dual", 1))


def d2(mesh: Mesh, f):
    return _apply(mesh, incidence(mesh).D2, f, ("edge", "primal", 1), ("cell", "primal", 2))


def d2bar(mesh: Mesh, f):
    """Circulation of a dual 1-form around each dual cell."""
    return _apply(mesh, incidence(mesh).D2bar, f, ("edge", "dual", 1), ("vertex", "dual", 2))
