"""Hodge stars and remaps, plus the linear Coriolis operator W for the C-grid."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .dec import incidence
from .mesh import Mesh

W_RTOL = 1e-12


class HodgeError(ValueError):
    pass


def hodge_I(mesh: Mesh, f):
    """Primal 2-form -> dual 0-form: divide by cell area."""
    return np.asarray(f) / mesh.cell_area


def hodge_J(mesh: Mesh, f):
    """Dual 2-form -> primal 0-form: divide by dual cell area."""
    return np.asarray(f) / mesh.vertex_area


def hodge_H_diagonal(mesh: Mesh) -> np.ndarray:
    if not mesh.orthogonal:
        raise HodgeError(
            f"mesh is not orthogonal (defect {mesh.orthogonality:.2e} rad); "
            "only the diagonal le/de Hodge star is available"
        )
    return mesh.le / mesh.de


def hodge_H(mesh: Mesh, f):
    """Dual 1-form -> primal 1-form on orthogonal meshes: ``(le/de) * f``."""
    return hodge_H_diagonal(mesh) * np.asarray(f)


@lru_cache(maxsize=64)
def remap_R_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Cells -> vertices with weights R_iv = A_iv / A_i."""
    c, v, a = mesh.kites
    return sp.csr_matrix((a / mesh.cell_area[c], (v, c)), shape=(mesh.n_vertices, mesh.n_cells))


def remap_R(mesh: Mesh, f):
    return remap_R_matrix(mesh) @ np.asarray(f)


@lru_cache(maxsize=64)
def remap_phi_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Cells -> edges with weights A_ie / A_e; rows sum to one."""
    c, e, a = mesh.wings
    return sp.csr_matrix((a / mesh.edge_area[e], (e, c)), shape=(mesh.n_edges, mesh.n_cells))


def remap_phi(mesh: Mesh, f):
    return remap_phi_matrix(mesh) @ np.asarray(f)


def remap_phi_T(mesh: Mesh, g):
    """Transpose of phi: edges -> cells."""
    return remap_phi_matrix(mesh).T @ np.asarray(g)


@dataclass(frozen=True)
class WOperator:
    """Antisymmetric edge-to-edge weights on the ECP stencil."""

    matrix: sp.csr_matrix
    residual: float

    def __matmul__(self, F):
        return self.matrix @ F

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)


def _cell_walk_weights(R_local: np.ndarray, n_local: np.ndarray):
    """Per-cell weights W(E_j, E_k) from the boundary walk.

    Walking counter-clockwise from edge j to edge k, the weight is
    n_j n_k (1/2 - sum of R over the vertices passed).
    """
    m = len(R_local)
    out = np.zeros((m, m))
    for j in range(m):
        acc = 0.5
        for step in range(1, m):
            k = (j + step) % m
            acc -= R_local[k]
            out[j, k] = n_local[j] * n_local[k] * acc
    return out


def constraint_residual(mesh: Mesh, W) -> float:
    """max |D2bar W + R D2| / max |R D2|."""
    inc = incidence(mesh)
    W = W.matrix if isinstance(W, WOperator) else W
    rd2 = remap_R_matrix(mesh) @ inc.D2
    diff = (inc.D2bar @ W + rd2).tocsr()
    return float(abs(diff).max() / abs(rd2).max()) if diff.nnz else 0.0


@lru_cache(maxsize=64)
def build_W(mesh: Mesh) -> WOperator:
    rows, cols, vals = [], [], []
    for i in range(mesh.n_cells):
        vs, es = mesh.cell_vertices[i], mesh.cell_edges[i]
        R_local = mesh.cell_vertex_area[i] / mesh.cell_area[i]
        w = _cell_walk_weights(R_local, mesh.cell_edge_signs[i])
        m = len(es)
        for j in range(m):
            for k in range(m):
                if j != k:
                    rows.append(es[j])
                    cols.append(es[k])
                    vals.append(w[j, k])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_edges, mesh.n_edges))
    # the walk is antisymmetric up to rounding; make it exact
    W = (0.5 * (W - W.T)).tocsr()
    res = constraint_residual(mesh, W)
    if res > W_RTOL:
        raise HodgeError(f"W constraint residual {res:.3e} exceeds {W_RTOL}")
    return WOperator(W, res)
