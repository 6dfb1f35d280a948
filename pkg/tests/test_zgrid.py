import numpy as np
import pytest

from mimetic_swe import zgrid
from mimetic_swe.hodge import HodgeError
from mimetic_swe.mesh import build_mesh

from conftest import MESH_SPECS, get_mesh, random_zgrid_state, relative

G, F0 = 9.80616, 1e-4


@pytest.fixture(scope="module")
def square16():
    return build_mesh("square", nx=16, ny=16, Lx=1.0, Ly=1.0)


@pytest.fixture(scope="module")
def square8():
    return build_mesh("square", nx=8, ny=8, Lx=1.0, Ly=1.0)


def test_rejects_non_orthogonal():
    m = get_mesh("square").with_tables(orthogonality=1e-3)
    with pytest.raises(HodgeError):
        zgrid.laplacian_L(m, np.ones(m.n_cells))


# operators -----------------------------------------------------------------


def test_L_constant(any_mesh):
    assert np.all(zgrid.laplacian_L(any_mesh, np.full(any_mesh.n_cells, 2.5)) == 0)


def test_L_eigenvalue_square(square16):
    dx = 1.0 / 16
    a = np.cos(2 * np.pi * square16.cell_centers[:, 0])
    lam = -(2 / dx**2) * (1 - np.cos(2 * np.pi * dx))
    np.testing.assert_allclose(zgrid.laplacian_L(square16, a), lam * a, atol=1e-12 * abs(lam))


def test_L_area_symmetry(any_mesh):
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, any_mesh.n_cells))
    A = any_mesh.cell_area
    lhs, rhs = np.sum(A * b * zgrid.laplacian_L(any_mesh, a)), np.sum(A * a * zgrid.laplacian_L(any_mesh, b))
    assert abs(lhs - rhs) < 1e-13 * (abs(lhs) + 1)


def test_FD_examples(any_mesh):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, any_mesh.n_cells))
    A = any_mesh.cell_area
    np.testing.assert_allclose(
        zgrid.flux_div_FD(any_mesh, np.full(any_mesh.n_cells, 3.0), b), 3.0 * zgrid.laplacian_L(any_mesh, b),
        rtol=1e-13, atol=1e-13 * np.abs(zgrid.laplacian_L(any_mesh, b)).max(),
    )
    assert np.all(zgrid.flux_div_FD(any_mesh, a, np.full(any_mesh.n_cells, -1.0)) == 0)
    fd = zgrid.flux_div_FD(any_mesh, a, b)
    assert abs(np.sum(A * fd)) < 1e-14 * np.sum(A * np.abs(fd))


def test_jacobians_of_constant(any_mesh):
    rng = np.random.default_rng(2)
    s = rng.standard_normal(any_mesh.n_cells)
    c = np.full(any_mesh.n_cells, 1.7)
    scale = np.abs(zgrid.laplacian_L(any_mesh, s)).max()
    assert np.abs(zgrid.jacobian_delta(any_mesh, c, s)).max() < 1e-13 * scale
    assert np.abs(zgrid.jacobian_zeta(any_mesh, c, s)).max() < 1e-13 * scale


def test_jacobians_flux_form(any_mesh):
    rng = np.random.default_rng(3)
    q, s = rng.standard_normal((2, any_mesh.n_cells))
    A = any_mesh.cell_area
    for J in (zgrid.jacobian_delta(any_mesh, q, s), zgrid.jacobian_zeta(any_mesh, q, s)):
        assert abs(np.sum(A * J)) < 1e-14 * np.sum(A * np.abs(J))


@pytest.mark.parametrize("name", ["hex", "icos0", "icos1", "icos2", "voronoi"])
def test_J_delta_equals_J_zeta_on_triangular_duals(name):
    m = get_mesh(name)
    assert all(len(c) == 3 for c in m.vertex_cells)
    rng = np.random.default_rng(4)
    for _ in range(5):
        q, s = rng.standard_normal((2, m.n_cells))
        assert np.abs(zgrid.jacobian_delta(m, q, s) - zgrid.jacobian_zeta(m, q, s)).max() < 1e-13


def test_J_zeta_antisymmetric():
    m = get_mesh("square")
    rng = np.random.default_rng(5)
    a, b, c = rng.standard_normal((3, m.n_cells))
    A = m.cell_area
    # sum A c J(a, b) is antisymmetric under any swap
    t = np.sum(A * c * zgrid.jacobian_zeta(m, a, b))
    assert abs(t + np.sum(A * c * zgrid.jacobian_zeta(m, b, a))) < 1e-12
    assert abs(t + np.sum(A * b * zgrid.jacobian_zeta(m, a, c))) < 1e-12


# Helmholtz -------------------------------------------------------------------


def test_helmholtz_manufactured(small_mesh):
    _, m = small_mesh
    H = 2.0
    s_true = np.random.default_rng(6).standard_normal(m.n_cells)
    st = zgrid.make_state(m, np.full(m.n_cells, H), np.zeros(m.n_cells), zgrid.laplacian_L(m, s_true) / H)
    sol = zgrid.helmholtz_solve(m, st)
    A = m.cell_area
    expected = s_true - np.sum(A * s_true) / np.sum(A)
    np.testing.assert_allclose(sol.chi, expected, atol=1e-10 * np.abs(expected).max())
    assert np.abs(sol.psi).max() < 1e-10 * np.abs(expected).max()


def test_helmholtz_zero():
    m = get_mesh("hex")
    sol = zgrid.helmholtz_solve(m, zgrid.make_state(m, np.ones(m.n_cells), np.zeros(m.n_cells), np.zeros(m.n_cells)))
    assert np.all(sol.chi == 0) and np.all(sol.psi == 0)


def test_helmholtz_random_residual(any_mesh):
    rng = np.random.default_rng(7)
    s = random_zgrid_state(any_mesh, rng)
    sol = zgrid.helmholtz_solve(any_mesh, s)
    assert sol.residual < 1e-11
    A = any_mesh.cell_area
    assert abs(np.sum(A * sol.chi)) < 1e-12 * np.sum(A * np.abs(sol.chi))
    assert abs(np.sum(A * sol.psi)) < 1e-12 * np.sum(A * np.abs(sol.psi))


def test_helmholtz_constant_depth_matches_poisson(small_mesh):
    _, m = small_mesh
    H = 3.0
    rng = np.random.default_rng(8)
    s = zgrid.make_state(m, np.full(m.n_cells, H), rng.standard_normal(m.n_cells), rng.standard_normal(m.n_cells))
    sol = zgrid.helmholtz_solve(m, s)
    chi = H * zgrid.poisson_solve(m, s.mu)
    psi = H * zgrid.poisson_solve(m, s.zeta)
    np.testing.assert_allclose(sol.chi, chi, atol=1e-11 * np.abs(chi).max())
    np.testing.assert_allclose(sol.psi, psi, atol=1e-11 * np.abs(psi).max())


def test_helmholtz_rejects_negative_depth():
    m = get_mesh("hex")
    s = zgrid.make_state(m, -np.ones(m.n_cells), np.zeros(m.n_cells), np.zeros(m.n_cells))
    with pytest.raises(zgrid.ZGridError):
        zgrid.helmholtz_solve(m, s)


# Hamiltonian and derivatives ------------------------------------------------


def test_hamiltonian_rest():
    m = get_mesh("icos1")
    b = 0.1 * np.random.default_rng(9).random(m.n_cells)
    s = zgrid.make_state(m, np.full(m.n_cells, 5.0), np.zeros(m.n_cells), np.zeros(m.n_cells), G, F0, b)
    fd, j, pe = zgrid.hamiltonian_terms(m, s)
    assert fd == 0 and j == 0
    assert pe == pytest.approx(0.5 * G * np.sum(m.cell_area * 5.0 * (5.0 + 2 * b)), rel=1e-14)


def test_hamiltonian_uniform_depth_has_no_jacobian_term():
    m = get_mesh("voronoi")
    rng = np.random.default_rng(10)
    s = zgrid.make_state(m, np.full(m.n_cells, 2.0), rng.standard_normal(m.n_cells), rng.standard_normal(m.n_cells))
    assert zgrid.hamiltonian_terms(m, s)[1] == 0.0


def test_hamiltonian_oracle():
    m = get_mesh("hex")
    s = random_zgrid_state(m, np.random.default_rng(11))
    sol = zgrid.helmholtz_solve(m, s)
    fd, j, pe = zgrid.hamiltonian_terms(m, s, sol)
    total = 0.0
    for e in range(m.n_edges):
        c0, c1 = m.edge_cells[e]
        he = 0.5 * (s.h[c0] + s.h[c1])
        w = m.le[e] / m.de[e]
        total += 0.5 * w * ((sol.chi[c1] - sol.chi[c0]) ** 2 + (sol.psi[c1] - sol.psi[c0]) ** 2) / he
        tail, head = m.edge_vertices[e]
        inv = [1.0 / np.mean(s.h[list(m.vertex_cells[v])]) for v in (tail, head)]
        total += 0.5 * (inv[1] - inv[0]) * (sol.chi[c0] * sol.psi[c1] - sol.chi[c1] * sol.psi[c0])
    for i in range(m.n_cells):
        total += 0.5 * m.cell_area[i] * s.g * s.h[i] * (s.h[i] + 2 * s.b[i])
    assert fd + j + pe == pytest.approx(total, rel=1e-14)
    assert fd + j + pe >= pe - abs(j)


def test_kinetic_energy_equals_helmholtz_pairing():
    m = get_mesh("icos1")
    s = random_zgrid_state(m, np.random.default_rng(12))
    sol = zgrid.helmholtz_solve(m, s)
    fd, j, _ = zgrid.hamiltonian_terms(m, s, sol)
    A = m.cell_area
    mu = s.mu - np.sum(A * s.mu) / np.sum(A)
    zeta = s.zeta - np.sum(A * s.zeta) / np.sum(A)
    assert fd + j == pytest.approx(-0.5 * np.sum(A * (sol.chi * mu + sol.psi * zeta)), rel=1e-12)
    assert fd + j > 0


def test_bernoulli_rest():
    m = get_mesh("hex")
    b = 0.1 * np.random.default_rng(13).random(m.n_cells)
    h = 1.0 + np.random.default_rng(14).random(m.n_cells)
    s = zgrid.make_state(m, h, np.zeros(m.n_cells), np.zeros(m.n_cells), G, F0, b)
    Phi, q = zgrid.bernoulli_and_pv(m, s)
    np.testing.assert_array_equal(Phi, G * (h + b))
    np.testing.assert_allclose(q, F0 / h, rtol=1e-15)


def test_uniform_q_reproduced():
    m = get_mesh("icos1")
    h = 1.0 + np.random.default_rng(15).random(m.n_cells)
    s = zgrid.make_state(m, h, 0.3 * h - F0, np.zeros(m.n_cells), G, F0)
    _, q = zgrid.bernoulli_and_pv(m, s)
    np.testing.assert_allclose(q, 0.3, rtol=1e-14)


def _fd_oracle(m, s, n_cells=None):
    A = m.cell_area
    sol = zgrid.helmholtz_solve(m, s)
    Phi, _ = zgrid.bernoulli_and_pv(m, s, sol)
    targets = {"h": Phi, "zeta": -sol.psi, "mu": -sol.chi}
    err = 0.0
    cells = range(m.n_cells) if n_cells is None else range(n_cells)
    for field, target in targets.items():
        x = getattr(s, field)
        step = 1e-6 * np.abs(x).max()
        for i in cells:
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            d = (zgrid.hamiltonian(m, s.with_fields(**{field: xp})) - zgrid.hamiltonian(m, s.with_fields(**{field: xm}))) / (2 * step * A[i])
            err = max(err, abs(d - target[i]) / max(abs(target[i]), 1e-3 * np.abs(target).max()))
    return err


def test_functional_derivatives_fd_square8(square8):
    assert _fd_oracle(square8, random_zgrid_state(square8, np.random.default_rng(16))) < 1e-5


@pytest.mark.parametrize("name", ["hex", "voronoi", "icos1"])
def test_functional_derivatives_fd(name):
    m = get_mesh(name)
    assert _fd_oracle(m, random_zgrid_state(m, np.random.default_rng(17))) < 1e-5


# tendencies ----------------------------------------------------------------------


@pytest.mark.parametrize("name", list(MESH_SPECS))
def test_rest_is_steady(name):
    m = get_mesh(name)
    s = zgrid.make_state(m, np.full(m.n_cells, 7.0), np.zeros(m.n_cells), np.zeros(m.n_cells), G, F0)
    for t in zgrid.tendency(m, s):
        assert np.all(t == 0)


@pytest.mark.parametrize("name", list(MESH_SPECS))
def test_semi_discrete_conservation(name):
    m = get_mesh(name)
    A = m.cell_area
    rng = np.random.default_rng(18)
    for _ in range(5):
        s = random_zgrid_state(m, rng)
        sol = zgrid.helmholtz_solve(m, s)
        Phi, q = zgrid.bernoulli_and_pv(m, s, sol)
        dh, dz, dmu = zgrid.tendency(m, s, sol)
        assert relative([A * Phi * dh, -A * sol.psi * dz, -A * sol.chi * dmu]) < 1e-11
        assert relative([-0.5 * A * q * q * dh, A * q * dz]) < 1e-11
        assert abs(np.sum(A * dh)) < 1e-14 * np.sum(A * np.abs(dh))
        assert abs(np.sum(A * dz)) < 1e-14 * np.sum(A * np.abs(dz))


def test_pv_compatibility():
    m = get_mesh("voronoi")
    rng = np.random.default_rng(19)
    psi, chi = rng.standard_normal((2, m.n_cells))
    c = np.full(m.n_cells, 0.7)
    L = zgrid.laplacian_L(m, chi)
    assert np.abs(zgrid.jacobian_zeta(m, c, psi)).max() < 1e-13 * np.abs(zgrid.laplacian_L(m, psi)).max()
    np.testing.assert_allclose(zgrid.flux_div_FD(m, c, chi), 0.7 * L, atol=1e-13 * np.abs(L).max())


def test_uniform_pv_stays_uniform():
    # q = c: d(h q)/dt = c dh/dt, so dzeta/dt = c dh/dt
    m = get_mesh("icos1")
    rng = np.random.default_rng(20)
    h = 1.0 + 0.5 * rng.random(m.n_cells)
    s = zgrid.make_state(m, h, 0.4 * h - 1.0, rng.standard_normal(m.n_cells), 1.0, 1.0)
    dh, dz, _ = zgrid.tendency(m, s)
    np.testing.assert_allclose(dz, 0.4 * dh, atol=1e-12 * np.abs(dh).max())


# linear scheme and enstrophy ------------------------------------------------------


def test_linear_zero():
    m = get_mesh("hex")
    z = np.zeros(m.n_cells)
    for t in zgrid.linear_tendency(m, z, z, z, 1.0, F0, G):
        assert np.all(t == 0)


@pytest.mark.parametrize("name", list(MESH_SPECS))
def test_linear_geostrophic(name):
    m = get_mesh(name)
    h, zeta, mu = zgrid.geostrophic_perturbation(m, np.random.default_rng(21).standard_normal(m.n_cells), F0, G)
    tend = zgrid.linear_tendency(m, h, zeta, mu, 100.0, F0, G)
    norm = np.sqrt(np.sum(h**2) + np.sum(zeta**2) + np.sum(mu**2))
    assert np.sqrt(sum(np.sum(t**2) for t in tend)) < 1e-10 * norm


def test_linear_energy_contraction(small_mesh):
    _, m = small_mesh
    A = m.cell_area
    rng = np.random.default_rng(22)
    h, zeta, mu = rng.standard_normal((3, m.n_cells))
    zeta -= np.sum(A * zeta) / np.sum(A)
    mu -= np.sum(A * mu) / np.sum(A)
    tend = zgrid.linear_tendency(m, h, zeta, mu, 2.0, 1.0, 1.0)
    ders = zgrid.linear_energy_derivatives(m, h, zeta, mu, 2.0, 1.0)
    assert relative([A * d * t for d, t in zip(ders, tend)]) < 1e-12
    assert zgrid.linear_energy(m, h, zeta, mu, 2.0, 1.0) > 0


def test_potential_enstrophy_examples():
    m = get_mesh("icos1")
    n = m.n_cells
    s = zgrid.make_state(m, np.ones(n), -np.full(n, F0), np.zeros(n), G, F0)
    assert zgrid.potential_enstrophy(m, s) == 0.0
    s = zgrid.make_state(m, np.full(n, 4.0), np.full(n, 0.5), np.zeros(n), G, 0.0)
    assert zgrid.potential_enstrophy(m, s) == pytest.approx(0.5 * 0.25 * m.total_area / 4.0, rel=1e-14)
    s = random_zgrid_state(m, np.random.default_rng(23))
    oracle = sum(0.5 * m.cell_area[i] * (s.zeta[i] + s.f[i]) ** 2 / s.h[i] for i in range(n))
    assert zgrid.potential_enstrophy(m, s) == pytest.approx(oracle, rel=1e-14)
