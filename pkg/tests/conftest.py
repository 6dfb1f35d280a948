import numpy as np
import pytest

from mimetic_swe.mesh import build_mesh
from mimetic_swe.qflux import solve_alpha

MESH_SPECS = {
    "square": ("square", dict(nx=4, ny=4, Lx=1.0, Ly=1.0)),
    "hex": ("hex", dict(n=4, L=1.0)),
    "voronoi": ("voronoi", dict(n_seeds=16, Lx=1.0, Ly=1.0, seed=1)),
    "icos0": ("icos", dict(level=0, radius=1.0)),
    "icos1": ("icos", dict(level=1, radius=1.0)),
    "icos2": ("icos", dict(level=2, radius=1.0)),
}

_MESHES = {}
_ALPHAS = {}


def get_mesh(name):
    if name not in _MESHES:
        kind, kw = MESH_SPECS[name]
        _MESHES[name] = build_mesh(kind, **kw)
    return _MESHES[name]


def get_alpha(name):
    if name not in _ALPHAS:
        _ALPHAS[name] = solve_alpha(get_mesh(name))
    return _ALPHAS[name]


@pytest.fixture(params=list(MESH_SPECS))
def any_mesh(request):
    return get_mesh(request.param)


@pytest.fixture(params=["square", "hex", "voronoi", "icos1"])
def small_mesh(request):
    return request.param, get_mesh(request.param)


def relative(terms) -> float:
    terms = np.concatenate([np.ravel(t) for t in terms])
    return abs(terms.sum()) / np.abs(terms).sum()


def random_cgrid_state(mesh, rng, f=1.0):
    from mimetic_swe.cgrid import make_state

    return make_state(
        mesh,
        mesh.cell_area * (1.0 + 0.5 * rng.random(mesh.n_cells)),
        mesh.de * rng.standard_normal(mesh.n_edges),
        g=1.0,
        f=f,
        b=0.1 * mesh.cell_area * rng.random(mesh.n_cells),
    )


def random_zgrid_state(mesh, rng, f=1.0):
    from mimetic_swe.zgrid import make_state

    n = mesh.n_cells
    return make_state(
        mesh,
        1.0 + 0.5 * rng.random(n),
        rng.standard_normal(n),
        rng.standard_normal(n),
        g=1.0,
        f=f,
        b=0.1 * rng.random(n),
    )


# acceptance report: one PASS/FAIL line per criterion, printed after the run
ACCEPTANCE_LINES = {}


def report(criterion: int, passed: bool, text: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion:2d}: {text}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
