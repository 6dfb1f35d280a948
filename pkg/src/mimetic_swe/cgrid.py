"""Energy and potential enstrophy conserving C-grid shallow-water scheme.

Prognostic variables are the cell mass ``m`` (primal 2-form, depth times
area) and the edge wind ``u`` (dual 1-form, velocity times dual edge
length).  Planetary vorticity enters as the dual 2-form ``f_v = f A_v``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse.linalg as spla

from .dec import incidence
from .hodge import build_W, hodge_H_diagonal, remap_phi_matrix, remap_R_matrix
from .mesh import Mesh
from .qflux import AlphaCoefficients, apply_Q_variant


class CGridError(RuntimeError):
    pass


@dataclass
class CGridState:
    m: np.ndarray
    u: np.ndarray
    g: float
    b: np.ndarray
    f_v: np.ndarray

    def with_fields(self, m=None, u=None) -> "CGridState":
        return replace(self, m=self.m if m is None else m, u=self.u if u is None else u)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.m**2) + np.sum(self.u**2)))


@dataclass
class CGridDiagnostics:
    m_e: np.ndarray
    C: np.ndarray
    F: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    m_v: np.ndarray
    q: np.ndarray
    K: np.ndarray
    Phi: np.ndarray
    mu: np.ndarray


def coriolis_dual2(mesh: Mesh, f) -> np.ndarray:
    """Planetary vorticity integrated over dual cells.

    ``f`` is a scalar, an array of vertex values, or a callable of the
    vertex coordinates.
    """
    if callable(f):
        fv = np.asarray(f(mesh.vertex_points), dtype=float)
    else:
        fv = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_vertices,))
    return fv * mesh.vertex_area


def make_state(mesh: Mesh, m, u, g=9.80616, f=0.0, b=None) -> CGridState:
    b = np.zeros(mesh.n_cells) if b is None else np.asarray(b, dtype=float)
    return CGridState(np.asarray(m, dtype=float), np.asarray(u, dtype=float), float(g), b, coriolis_dual2(mesh, f))


def compute_diagnostics(mesh: Mesh, s: CGridState) -> CGridDiagnostics:
    inc = incidence(mesh)
    H = hodge_H_diagonal(mesh)
    m_v = remap_R_matrix(mesh) @ s.m
    if np.any(m_v <= 0):
        v = int(np.argmin(m_v))
        raise CGridError(f"nonpositive dual mass m_v={m_v[v]:.3e} at vertex {v}")
    m_e = remap_phi_matrix(mesh) @ (s.m / mesh.cell_area)
    C = m_e * s.u
    F = H * C
    zeta = inc.D2bar @ s.u
    eta = zeta + s.f_v
    K = remap_phi_matrix(mesh).T @ (0.5 * H * s.u**2)
    A = mesh.cell_area
    Phi = K / A + s.g * (s.m / A + s.b / A)
    mu = inc.D2 @ (H * s.u)
    return CGridDiagnostics(m_e, C, F, zeta, eta, m_v, eta / m_v, K, Phi, mu)


def hamiltonian_terms(mesh: Mesh, s: CGridState):
    """(potential, kinetic, topographic) parts of the energy."""
    H = hodge_H_diagonal(mesh)
    m_e = remap_phi_matrix(mesh) @ (s.m / mesh.cell_area)
    pe = 0.5 * s.g * np.sum(s.m**2 / mesh.cell_area)
    ke = 0.5 * np.sum(s.u * H * m_e * s.u)
    te = s.g * np.sum(s.m * s.b / mesh.cell_area)
    return pe, ke, te


def hamiltonian(mesh: Mesh, s: CGridState) -> float:
    return float(sum(hamiltonian_terms(mesh, s)))


def functional_derivatives(mesh: Mesh, s: CGridState, diag: CGridDiagnostics | None = None):
    """(dH/dm, dH/du) = (Phi, F)."""
    d = compute_diagnostics(mesh, s) if diag is None else diag
    return d.Phi, d.F


def potential_enstrophy(mesh: Mesh, s: CGridState) -> float:
    d = compute_diagnostics(mesh, s)
    return float(0.5 * np.sum(d.m_v * d.q**2))


def enstrophy_derivatives(mesh: Mesh, s: CGridState, diag: CGridDiagnostics | None = None):
    """(dZ/dm, dZ/du) = (-R^T q^2/2, D1 q)."""
    d = compute_diagnostics(mesh, s) if diag is None else diag
    return -(remap_R_matrix(mesh).T @ (0.5 * d.q**2)), incidence(mesh).D1 @ d.q


def tendency(
    mesh: Mesh,
    s: CGridState,
    alpha: AlphaCoefficients | None,
    variant: str = "conserving",
    diag: CGridDiagnostics | None = None,
):
    d = compute_diagnostics(mesh, s) if diag is None else diag
    inc = incidence(mesh)
    dm = -(inc.D2 @ d.F)
    du = apply_Q_variant(mesh, variant, d.q, d.F, alpha) - inc.D1bar @ d.Phi
    return dm, du


def linear_tendency(mesh: Mesh, m, u, H_mean: float, f: float, g: float):
    """Linearization about rest with depth ``H_mean`` and constant ``f``.

    ``m`` is the mass perturbation.
    """
    inc = incidence(mesh)
    Hu = hodge_H_diagonal(mesh) * u
    dm = -H_mean * (inc.D2 @ Hu)
    du = f * (build_W(mesh).matrix @ Hu) - g * (inc.D1bar @ (np.asarray(m) / mesh.cell_area))
    return dm, du


def linear_energy(mesh: Mesh, m, u, H_mean: float, g: float) -> float:
    H = hodge_H_diagonal(mesh)
    return float(0.5 * g * np.sum(m**2 / mesh.cell_area) + 0.5 * H_mean * np.sum(H * u**2))


def linear_energy_derivatives(mesh: Mesh, m, u, H_mean: float, g: float):
    return g * m / mesh.cell_area, H_mean * hodge_H_diagonal(mesh) * u


def _mean_zero_cg(A, rhs, weights, tol):
    rhs = rhs - rhs.sum() / len(rhs)
    x, info = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=20 * len(rhs))
    if info != 0:
        raise CGridError(f"conjugate gradient did not converge (info={info})")
    return x - np.sum(weights * x) / np.sum(weights)


def streamfunction(mesh: Mesh, zeta, tol: float = 1e-13) -> np.ndarray:
    """psi_v with -D2bar H^-1 D1 psi = zeta and zero area-weighted mean."""
    inc = incidence(mesh)
    # D2bar H^-1 D1 = D1^T H^-1 D1 is positive semidefinite
    A = (inc.D2bar @ (inc.D1.multiply(1.0 / hodge_H_diagonal(mesh)[:, None]))).tocsr()
    return _mean_zero_cg(A.astype(float), -np.asarray(zeta, dtype=float), mesh.vertex_area, tol)


def velocity_potential(mesh: Mesh, mu, tol: float = 1e-13) -> np.ndarray:
    """chi_i with D2 H D1bar chi = mu and zero area-weighted mean."""
    inc = incidence(mesh)
    A = -(inc.D2 @ (inc.D1bar.multiply(hodge_H_diagonal(mesh)[:, None]))).tocsr()
    return _mean_zero_cg(A.astype(float), -np.asarray(mu, dtype=float), mesh.cell_area, tol)


def geostrophic_perturbation(mesh: Mesh, psi, f: float, g: float):
    """(m', u) in exact discrete geostrophic balance for the linear scheme.

    The wind is rotational, ``u = H^-1 D1 psi``; the mass perturbation
    balances it through ``W D1 = -D1bar R^T``.
    """
    u = (incidence(mesh).D1 @ psi) / hodge_H_diagonal(mesh)
    m = -mesh.cell_area * (f / g) * (remap_R_matrix(mesh).T @ psi)
    return m, u
