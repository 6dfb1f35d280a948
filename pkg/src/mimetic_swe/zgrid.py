"""Energy and potential enstrophy conserving Z-grid scheme.

All prognostic variables live at cell centres: depth ``h``, relative
vorticity ``zeta`` and divergence ``mu``.  The mass flux is split into a
divergent part (velocity potential ``chi``) and a rotational part (mass
streamfunction ``psi``), recovered each step from a coupled elliptic
problem whose coefficients depend on ``h``.

Kinetic energy is the quadratic form ``K = x^T M(h) x / 2`` in
``x = (chi, psi)`` with

    M = [[ Dbar^T S Dbar,  B            ],
         [ B^T,            Dbar^T S Dbar ]],

``S = le / (de h_e)`` and ``B`` the edge Jacobian weighted by
``D1 (1/h_v) / 2``.  The Helmholtz constraint ``A (mu, zeta) = -M x``
makes ``(1/A) dK/dmu = -chi`` and ``(1/A) dK/dzeta = -psi``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dec import incidence
from .hodge import HodgeError
from .mesh import Mesh

HELMHOLTZ_RTOL = 1e-11


class ZGridError(RuntimeError):
    pass


@dataclass(frozen=True)
class ZOperators:
    A: np.ndarray
    w: np.ndarray           # le/de
    D1: sp.csr_matrix
    D1bar: sp.csr_matrix
    D2: sp.csr_matrix
    D2bar: sp.csr_matrix
    P: sp.csr_matrix        # cells -> vertices, mean over CV(v)
    E: sp.csr_matrix        # cells -> edges, mean over the two cells
    Lmat: sp.csr_matrix


@lru_cache(maxsize=64)
def operators(mesh: Mesh) -> ZOperators:
    if not mesh.orthogonal:
        raise HodgeError(f"Z-grid needs an orthogonal mesh (defect {mesh.orthogonality:.2e} rad)")
    inc = incidence(mesh)
    D1, D1bar, D2, D2bar = (x.astype(float).tocsr() for x in (inc.D1, inc.D1bar, inc.D2, inc.D2bar))
    w = mesh.le / mesh.de
    rows = np.repeat(np.arange(mesh.n_vertices), [len(c) for c in mesh.vertex_cells])
    vals = np.concatenate([np.full(len(c), 1.0 / len(c)) for c in mesh.vertex_cells])
    P = sp.csr_matrix((vals, (rows, np.concatenate(mesh.vertex_cells))), shape=(mesh.n_vertices, mesh.n_cells))
    E = sp.csr_matrix(
        (np.full(2 * mesh.n_edges, 0.5), (np.repeat(np.arange(mesh.n_edges), 2), mesh.edge_cells.ravel())),
        shape=(mesh.n_edges, mesh.n_cells),
    )
    Lmat = sp.diags(1.0 / mesh.cell_area) @ D2 @ sp.diags(w) @ D1bar
    return ZOperators(mesh.cell_area, w, D1, D1bar, D2, D2bar, P, E, Lmat.tocsr())


def laplacian_L(mesh: Mesh, a) -> np.ndarray:
    # applied factor by factor so that constants map to exactly zero
    op = operators(mesh)
    return (op.D2 @ (op.w * (op.D1bar @ np.asarray(a)))) / op.A


def flux_div_FD(mesh: Mesh, a, b) -> np.ndarray:
    """(1/A) D2 [a_e (le/de) D1bar b]."""
    op = operators(mesh)
    return (op.D2 @ ((op.E @ a) * op.w * (op.D1bar @ b))) / op.A


def jacobian_delta(mesh: Mesh, q, chi) -> np.ndarray:
    """-(1/A) D2 [(D1 P q) chi_e]."""
    op = operators(mesh)
    return -(op.D2 @ ((op.D1 @ (op.P @ q)) * (op.E @ chi))) / op.A


def _edge_jacobian(mesh: Mesh, a, b) -> np.ndarray:
    """a_c0 b_c1 - a_c1 b_c0 on each edge."""
    c0, c1 = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    a, b = np.asarray(a), np.asarray(b)
    return a[c0] * b[c1] - a[c1] * b[c0]


def jacobian_zeta(mesh: Mesh, q, psi) -> np.ndarray:
    """Average of the three flux forms of the cell Jacobian of (q, psi).

    Two forms put the vertex difference on one argument and the edge
    mean on the other; the third circulates the edge Jacobian around
    vertices and gathers it back to cells.
    """
    op = operators(mesh)
    j1 = -(op.D2 @ ((op.D1 @ (op.P @ q)) * (op.E @ psi))) / op.A
    j3 = (op.D2 @ ((op.D1 @ (op.P @ psi)) * (op.E @ q))) / op.A
    j2 = (op.P.T @ (op.D2bar @ (0.5 * _edge_jacobian(mesh, q, psi)))) / op.A
    return (j1 + j2 + j3) / 3.0


@dataclass
class ZGridState:
    h: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    g: float
    f: np.ndarray
    b: np.ndarray

    def with_fields(self, h=None, zeta=None, mu=None) -> "ZGridState":
        return replace(
            self,
            h=self.h if h is None else h,
            zeta=self.zeta if zeta is None else zeta,
            mu=self.mu if mu is None else mu,
        )

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.h**2) + np.sum(self.zeta**2) + np.sum(self.mu**2)))


def make_state(mesh: Mesh, h, zeta, mu, g=9.80616, f=0.0, b=None) -> ZGridState:
    if callable(f):
        fi = np.asarray(f(mesh.cell_centers), dtype=float)
    else:
        fi = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_cells,)).copy()
    b = np.zeros(mesh.n_cells) if b is None else np.asarray(b, dtype=float)
    return ZGridState(np.asarray(h, float), np.asarray(zeta, float), np.asarray(mu, float), float(g), fi, b)


@dataclass
class HelmholtzSolution:
    chi: np.ndarray
    psi: np.ndarray
    iterations: int
    residual: float


def _vertex_h(mesh: Mesh, h) -> np.ndarray:
    hv = operators(mesh).P @ h
    if np.any(hv <= 0):
        raise ZGridError("nonpositive vertex depth")
    return hv


def kinetic_matrix(mesh: Mesh, h) -> sp.csr_matrix:
    op = operators(mesh)
    h = np.asarray(h)
    if np.any(h <= 0):
        raise ZGridError(f"nonpositive depth {h.min():.3e}")
    S = op.w / (op.E @ h)
    K = (op.D1bar.T @ sp.diags(S) @ op.D1bar).tocsr()
    ge = op.D1 @ (1.0 / _vertex_h(mesh, h))
    c0, c1 = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    n = mesh.n_cells
    B = sp.csr_matrix(
        (np.concatenate([0.5 * ge, -0.5 * ge]), (np.concatenate([c0, c1]), np.concatenate([c1, c0]))),
        shape=(n, n),
    )
    return sp.bmat([[K, B], [B.T, K]], format="csr")


def _project(mesh: Mesh, x):
    A = mesh.cell_area
    return x - np.sum(A * x) / np.sum(A)


def helmholtz_solve(mesh: Mesh, s: ZGridState) -> HelmholtzSolution:
    """Solve A (mu, zeta) = -M(h) (chi, psi) with zero-mean gauge.

    The right-hand side is projected onto zero area-weighted mean and the
    singular system is bordered by the two gauge constraints, then
    factorized directly.
    """
    n = mesh.n_cells
    A = mesh.cell_area
    M = kinetic_matrix(mesh, s.h)
    rhs = -np.concatenate([A * _project(mesh, s.mu), A * _project(mesh, s.zeta)])
    G = sp.csr_matrix(
        (np.concatenate([A, A]), (np.concatenate([np.arange(n), n + np.arange(n)]), np.repeat([0, 1], n))),
        shape=(2 * n, 2),
    )
    big = sp.bmat([[M, G], [G.T, None]], format="csc")
    sol = spla.splu(big).solve(np.concatenate([rhs, [0.0, 0.0]]))
    x = sol[: 2 * n]
    r = M @ x - rhs
    scale = np.abs(rhs).max()
    res = float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())
    if res > HELMHOLTZ_RTOL:
        raise ZGridError(f"Helmholtz residual {res:.3e} exceeds {HELMHOLTZ_RTOL}")
    return HelmholtzSolution(x[:n], x[n:], 1, res)


@lru_cache(maxsize=64)
def _poisson_factor(mesh: Mesh):
    op = operators(mesh)
    A = mesh.cell_area
    n = mesh.n_cells
    K = (sp.diags(A) @ op.Lmat).tocsr()
    G = sp.csr_matrix((A, (np.arange(n), np.zeros(n, dtype=int))), shape=(n, 1))
    return spla.splu(sp.bmat([[K, G], [G.T, None]], format="csc"))


def poisson_solve(mesh: Mesh, rhs) -> np.ndarray:
    """Zero-mean x with L x = rhs (rhs projected to zero mean first)."""
    r = mesh.cell_area * _project(mesh, np.asarray(rhs, dtype=float))
    return _poisson_factor(mesh).solve(np.append(r, 0.0))[:-1]


def hamiltonian_terms(mesh: Mesh, s: ZGridState, helm: HelmholtzSolution | None = None):
    """(H_FD, H_J, H_PE)."""
    helm = helmholtz_solve(mesh, s) if helm is None else helm
    op = operators(mesh)
    he = op.E @ s.h
    dchi, dpsi = op.D1bar @ helm.chi, op.D1bar @ helm.psi
    h_fd = 0.5 * np.sum(op.w * (dchi**2 + dpsi**2) / he)
    ge = op.D1 @ (1.0 / _vertex_h(mesh, s.h))
    h_j = 0.5 * np.sum(ge * _edge_jacobian(mesh, helm.chi, helm.psi))
    h_pe = 0.5 * np.sum(mesh.cell_area * s.g * s.h * (s.h + 2.0 * s.b))
    return float(h_fd), float(h_j), float(h_pe)


def hamiltonian(mesh: Mesh, s: ZGridState, helm: HelmholtzSolution | None = None) -> float:
    return float(sum(hamiltonian_terms(mesh, s, helm)))


def bernoulli_and_pv(mesh: Mesh, s: ZGridState, helm: HelmholtzSolution | None = None):
    """(Phi, q) with Phi = (1/A) dH/dh at fixed (zeta, mu) and q = eta/h."""
    helm = helmholtz_solve(mesh, s) if helm is None else helm
    op = operators(mesh)
    he = op.E @ s.h
    hv = _vertex_h(mesh, s.h)
    X = op.w * ((op.D1bar @ helm.chi) ** 2 + (op.D1bar @ helm.psi) ** 2) / he**2
    k_fd = 0.25 * (abs(op.D2) @ X)
    k_j = 0.5 * (op.P.T @ ((op.D2bar @ _edge_jacobian(mesh, helm.chi, helm.psi)) / hv**2))
    Phi = s.g * (s.h + s.b) + (k_fd + k_j) / op.A
    q = (s.zeta + s.f) / s.h
    return Phi, q


def potential_enstrophy(mesh: Mesh, s: ZGridState) -> float:
    return float(0.5 * np.sum(mesh.cell_area * (s.zeta + s.f) ** 2 / s.h))


def tendency(mesh: Mesh, s: ZGridState, helm: HelmholtzSolution | None = None):
    helm = helmholtz_solve(mesh, s) if helm is None else helm
    Phi, q = bernoulli_and_pv(mesh, s, helm)
    dh = -laplacian_L(mesh, helm.chi)
    dzeta = jacobian_zeta(mesh, q, helm.psi) - flux_div_FD(mesh, q, helm.chi)
    dmu = -laplacian_L(mesh, Phi) + jacobian_delta(mesh, q, helm.chi) + flux_div_FD(mesh, q, helm.psi)
    return dh, dzeta, dmu


def linear_tendency(mesh: Mesh, h, zeta, mu, H_mean: float, f: float, g: float):
    """Linearization about rest with depth ``H_mean``; ``h`` is the perturbation."""
    return -H_mean * np.asarray(mu), -f * np.asarray(mu), -g * laplacian_L(mesh, h) + f * np.asarray(zeta)


def linear_energy(mesh: Mesh, h, zeta, mu, H_mean: float, g: float) -> float:
    A = mesh.cell_area
    chi = H_mean * poisson_solve(mesh, mu)
    psi = H_mean * poisson_solve(mesh, zeta)
    return float(0.5 * np.sum(A * g * h**2) - 0.5 * np.sum(A * (chi * mu + psi * zeta)))


def linear_energy_derivatives(mesh: Mesh, h, zeta, mu, H_mean: float, g: float):
    """(1/A) dE/d(h, zeta, mu) = (g h, -psi, -chi)."""
    return g * np.asarray(h), -H_mean * poisson_solve(mesh, zeta), -H_mean * poisson_solve(mesh, mu)


def geostrophic_perturbation(mesh: Mesh, h, f: float, g: float):
    """(h, zeta, mu) with zeta = (g/f) L h and mu = 0."""
    h = np.asarray(h, dtype=float)
    return h, (g / f) * laplacian_L(mesh, h), np.zeros_like(h)
