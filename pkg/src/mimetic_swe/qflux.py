"""Nonlinear PV flux operator Q(q) with energy and enstrophy conservation.

Q(q) acts on a primal 1-form F and returns a dual 1-form:

    (Q(q) F)_e = sum_{e' in ECP(e)} sum_{v in CVE(e)} alpha[e, e', v] q_v F_e'

``alpha`` is antisymmetric in (e, e'), which conserves energy for any q.
The coefficients are chosen cell by cell so that, for every q,

    Q(q)^T D1 q = D1bar R^T (q^2 / 2),

which conserves potential enstrophy.  Each cell contributes a quadratic
polynomial identity in the vertex values of q; matching monomials gives
a small linear system per cell, solved in the least-squares sense.  The
terms that cancel between the two cells of an edge are fixed to
``C (q_a^2 + q_a q_b + q_b^2)`` over the edge's end vertices, with
``C = -1/6`` the value that makes every cell system consistent at q = 1.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dec import incidence
from .hodge import build_W, remap_R_matrix
from .mesh import Mesh

EDGE_TERM = -1.0 / 6.0
CELL_RESIDUAL_TOL = 1e-10
COUPLED_MAX_CELLS = 2000
VARIANTS = ("conserving", "energy_only", "enstrophy_only")


class QFluxError(RuntimeError):
    pass


@dataclass
class CellSystem:
    cell: int
    edges: np.ndarray
    vertices: np.ndarray
    pairs: list
    A: np.ndarray
    b: np.ndarray


@dataclass
class AlphaCoefficients:
    """Sparse triplet storage: (Q F)_e += coef * q[vert] * F[col] at e = row."""

    n_edges: int
    row: np.ndarray
    col: np.ndarray
    vert: np.ndarray
    coef: np.ndarray
    cell_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mode: str = "per_cell"

    @property
    def max_residual(self) -> float:
        return float(self.cell_residuals.max()) if self.cell_residuals.size else 0.0

    def matrix(self, q) -> sp.csr_matrix:
        q = np.asarray(q)
        return sp.csr_matrix(
            (self.coef * q[self.vert], (self.row, self.col)), shape=(self.n_edges, self.n_edges)
        )

    def q_equals_one(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.coef, (self.row, self.col)), shape=(self.n_edges, self.n_edges))


def _cell_layout(mesh: Mesh, i: int):
    es = np.asarray(mesh.cell_edges[i])
    vs = np.asarray(mesh.cell_vertices[i])
    # unordered edge pairs ordered by global edge id
    order = np.argsort(es)
    pairs = list(combinations(es[order].tolist(), 2))
    return es, vs, pairs


def _monomials(vs):
    vs = sorted(int(v) for v in vs)
    return {m: k for k, m in enumerate([(a, b) for a in vs for b in vs if a <= b])}


def assemble_cell_system(mesh: Mesh, i: int) -> CellSystem:
    es, vs, pairs = _cell_layout(mesh, i)
    nv = len(vs)
    vpos = {int(v): k for k, v in enumerate(vs)}
    mono = _monomials(vs)
    nm = len(mono)
    epos = {int(e): k for k, e in enumerate(es)}
    A = np.zeros((len(es) * nm, len(pairs) * nv))
    b = np.zeros(len(es) * nm)
    R = mesh.cell_vertex_area[i] / mesh.cell_area[i]
    for p, (ea, eb) in enumerate(pairs):
        for e, e2, s in ((ea, eb, 1.0), (eb, ea, -1.0)):
            base = epos[e] * nm
            for v2, t in zip(mesh.edge_vertices[e2], mesh.edge_vertex_sign[e2]):
                for v in vs:
                    key = (min(v, v2), max(v, v2))
                    A[base + mono[key], p * nv + vpos[int(v)]] += s * t
    signs = dict(zip(mesh.cell_edges[i], mesh.cell_edge_signs[i]))
    for e in es:
        base = epos[int(e)] * nm
        n = signs[e]
        for v, r in zip(vs, R):
            b[base + mono[(v, v)]] += n * r / 2
        va, vb = sorted(mesh.edge_vertices[e])
        b[base + mono[(va, va)]] += n * EDGE_TERM
        b[base + mono[(vb, vb)]] += n * EDGE_TERM
        b[base + mono[(va, vb)]] += n * EDGE_TERM
    return CellSystem(i, es, vs, pairs, A, b)


def _triplets_for_cell(sysm: CellSystem, x: np.ndarray):
    nv = len(sysm.vertices)
    rows, cols, verts, coefs = [], [], [], []
    for p, (ea, eb) in enumerate(sysm.pairs):
        a = x[p * nv:(p + 1) * nv]
        for e, e2, s in ((ea, eb, 1.0), (eb, ea, -1.0)):
            rows.append(np.full(nv, e))
            cols.append(np.full(nv, e2))
            verts.append(sysm.vertices)
            coefs.append(s * a)
    return rows, cols, verts, coefs


def _solve_per_cell(mesh: Mesh) -> AlphaCoefficients:
    rows, cols, verts, coefs = [], [], [], []
    res = np.zeros(mesh.n_cells)
    for i in range(mesh.n_cells):
        s = assemble_cell_system(mesh, i)
        x, *_ = sla.lstsq(s.A, s.b, lapack_driver="gelsd")
        res[i] = np.abs(s.A @ x - s.b).max()
        r, c, v, a = _triplets_for_cell(s, x)
        rows += r
        cols += c
        verts += v
        coefs += a
    return AlphaCoefficients(
        mesh.n_edges,
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(verts).astype(np.int64),
        np.concatenate(coefs),
        res,
        "per_cell",
    )


def _solve_coupled(mesh: Mesh) -> AlphaCoefficients:
    """All cells at once, without prescribing the cancelling edge terms."""
    if mesh.n_cells > COUPLED_MAX_CELLS:
        raise QFluxError(f"coupled solve limited to {COUPLED_MAX_CELLS} cells, mesh has {mesh.n_cells}")
    systems = [assemble_cell_system(mesh, i) for i in range(mesh.n_cells)]
    row_of = {}
    A_r, A_c, A_v = [], [], []
    col0 = 0
    for s in systems:
        mono = _monomials(s.vertices)
        inv = {k: m for m, k in mono.items()}
        nm = len(mono)
        rr, cc = np.nonzero(s.A)
        for r, c in zip(rr, cc):
            e = int(s.edges[r // nm])
            key = (e,) + inv[r % nm]
            A_r.append(row_of.setdefault(key, len(row_of)))
            A_c.append(col0 + c)
            A_v.append(s.A[r, c])
        col0 += s.A.shape[1]
    rhs = defaultdict(float)
    for s in systems:
        R = mesh.cell_vertex_area[s.cell] / mesh.cell_area[s.cell]
        for e, n in zip(mesh.cell_edges[s.cell], mesh.cell_edge_signs[s.cell]):
            for v, r in zip(s.vertices, R):
                rhs[row_of.setdefault((int(e), int(v), int(v)), len(row_of))] += n * r / 2
    b = np.zeros(len(row_of))
    for k, val in rhs.items():
        b[k] = val
    A = sp.csr_matrix((A_v, (A_r, A_c)), shape=(len(row_of), col0))
    x = spla.lsqr(A, b, atol=1e-15, btol=1e-15, iter_lim=50 * col0)[0]
    resid = np.abs(A @ x - b)
    rows, cols, verts, coefs = [], [], [], []
    col0 = 0
    for s in systems:
        n = s.A.shape[1]
        r, c, v, a = _triplets_for_cell(s, x[col0:col0 + n])
        col0 += n
        rows += r
        cols += c
        verts += v
        coefs += a
    return AlphaCoefficients(
        mesh.n_edges,
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(verts).astype(np.int64),
        np.concatenate(coefs),
        np.array([resid.max() if resid.size else 0.0]),
        "coupled",
    )


def solve_alpha(mesh: Mesh, coupled: bool = False, strict: bool = True) -> AlphaCoefficients:
    alpha = _solve_coupled(mesh) if coupled else _solve_per_cell(mesh)
    if strict and alpha.max_residual > CELL_RESIDUAL_TOL:
        raise QFluxError(f"alpha system residual {alpha.max_residual:.3e} exceeds {CELL_RESIDUAL_TOL}")
    return alpha


def apply_Q(alpha: AlphaCoefficients, q, F) -> np.ndarray:
    q, F = np.asarray(q), np.asarray(F)
    return np.bincount(alpha.row, weights=alpha.coef * q[alpha.vert] * F[alpha.col], minlength=alpha.n_edges)


def edge_q(mesh: Mesh, q) -> np.ndarray:
    """Arithmetic mean of q over the two end vertices of each edge."""
    q = np.asarray(q)
    return 0.5 * (q[mesh.edge_vertices[:, 0]] + q[mesh.edge_vertices[:, 1]])


def apply_Q_variant(mesh: Mesh, variant: str, q, F, alpha: AlphaCoefficients | None = None) -> np.ndarray:
    """Q(q) F for the full operator or one of the W-based reduced forms.

    ``energy_only``: Q = (q_e W + W q_e) / 2, antisymmetric, no enstrophy.
    ``enstrophy_only``: Q = q_e W, conserves enstrophy but not energy.
    """
    if variant == "conserving":
        if alpha is None:
            raise ValueError("full variant needs alpha coefficients")
        return apply_Q(alpha, q, F)
    W = build_W(mesh).matrix
    qe = edge_q(mesh, q)
    if variant == "energy_only":
        return 0.5 * (qe * (W @ F) + W @ (qe * F))
    if variant == "enstrophy_only":
        return qe * (W @ F)
    raise ValueError(f"unknown Q variant {variant!r}; expected one of {VARIANTS}")


def variant_matrix(mesh: Mesh, variant: str, q, alpha: AlphaCoefficients | None = None) -> sp.csr_matrix:
    if variant == "conserving":
        return alpha.matrix(q)
    W = build_W(mesh).matrix
    Dq = sp.diags(edge_q(mesh, q))
    if variant == "energy_only":
        return (0.5 * (Dq @ W + W @ Dq)).tocsr()
    if variant == "enstrophy_only":
        return (Dq @ W).tocsr()
    raise ValueError(f"unknown Q variant {variant!r}")


def enstrophy_defect(mesh: Mesh, Q: sp.spmatrix, q) -> np.ndarray:
    """Q^T D1 q - D1bar R^T (q^2/2); zero when Q conserves potential enstrophy."""
    inc = incidence(mesh)
    q = np.asarray(q)
    return Q.T @ (inc.D1 @ q) - inc.D1bar @ (remap_R_matrix(mesh).T @ (0.5 * q * q))


@dataclass
class QVerification:
    enstrophy_rel: float
    antisymmetry: float
    adjoint_rel: float
    q1_minus_W: float

    def lines(self):
        return [
            f"enstrophy_condition_rel  {self.enstrophy_rel:.3e}",
            f"antisymmetry             {self.antisymmetry:.3e}",
            f"adjoint_rel              {self.adjoint_rel:.3e}",
            f"Q(1)-W                   {self.q1_minus_W:.3e}",
        ]


def verify_alpha(mesh: Mesh, alpha: AlphaCoefficients, trials: int = 10, seed: int = 0) -> QVerification:
    rng = np.random.default_rng(seed)
    inc = incidence(mesh)
    Rt = remap_R_matrix(mesh).T
    ens, adj, asym = 0.0, 0.0, 0.0
    for _ in range(trials):
        q = rng.standard_normal(mesh.n_vertices)
        Q = alpha.matrix(q)
        scale = np.abs(Q.T @ (inc.D1 @ q)).max() + np.abs(inc.D1bar @ (Rt @ (0.5 * q * q))).max()
        ens = max(ens, np.abs(enstrophy_defect(mesh, Q, q)).max() / scale)
        d = (Q + Q.T).tocsr()
        asym = max(asym, abs(d).max() if d.nnz else 0.0)
        F, G = rng.standard_normal((2, mesh.n_edges))
        a, b = G @ (Q @ F), F @ (Q @ G)
        adj = max(adj, abs(a + b) / (abs(a) + abs(b)))
    d = (alpha.q_equals_one() - build_W(mesh).matrix).tocsr()
    q1 = abs(d).max() if d.nnz else 0.0
    return QVerification(float(ens), float(asym), float(adj), float(q1))


def write_alpha(alpha: AlphaCoefficients, path, mesh_path: str | None = None) -> None:
    head = [
        "# mimetic_swe alpha v1",
        f"# mesh = {mesh_path or ''}",
        f"# mode = {alpha.mode}",
        f"# n_edges = {alpha.n_edges}",
        f"# max_residual = {alpha.max_residual:.17g}",
        "# row col vertex coef",
    ]
    body = [f"{r} {c} {v} {a:.17g}" for r, c, v, a in zip(alpha.row, alpha.col, alpha.vert, alpha.coef)]
    Path(path).write_text("\n".join(head + body) + "\n")


def read_alpha(path):
    """Returns (alpha, mesh_path) where mesh_path may be empty."""
    meta, data = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if " = " in line:
                k, v = line[1:].split(" = ", 1)
                meta[k.strip()] = v.strip()
        elif line.strip():
            data.append(line.split())
    arr = np.array(data, dtype=object).reshape(-1, 4)
    alpha = AlphaCoefficients(
        int(meta["n_edges"]),
        arr[:, 0].astype(np.int64),
        arr[:, 1].astype(np.int64),
        arr[:, 2].astype(np.int64),
        arr[:, 3].astype(float),
        np.array([float(meta.get("max_residual", 0.0))]),
        meta.get("mode", "per_cell"),
    )
    return alpha, meta.get("mesh", "")
