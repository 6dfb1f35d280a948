import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mimetic_swe.dec import FormError, Field, d1, d1bar, d2, d2bar, dual0, dual1, incidence, primal0, primal1

from conftest import MESH_SPECS, get_mesh


@pytest.mark.parametrize("name", list(MESH_SPECS))
def test_exact_integer_identities(name):
    inc = incidence(get_mesh(name))
    for mat in (inc.D1, inc.D1bar, inc.D2, inc.D2bar):
        assert mat.dtype == np.int64
    assert (inc.D2 @ inc.D1).count_nonzero() == 0
    assert (inc.D2bar @ inc.D1bar).count_nonzero() == 0
    assert (inc.D2.T + inc.D1bar).count_nonzero() == 0
    assert (inc.D2bar.T - inc.D1).count_nonzero() == 0


def test_gradient_of_constant_vanishes(any_mesh):
    assert np.all(d1bar(any_mesh, np.full(any_mesh.n_cells, 3.0)) == 0)
    assert np.all(d1(any_mesh, np.full(any_mesh.n_vertices, -2.0)) == 0)


def test_divergence_and_curl_sum_to_zero(any_mesh):
    rng = np.random.default_rng(0)
    F = rng.standard_normal(any_mesh.n_edges)
    assert abs(d2(any_mesh, F).sum()) < 1e-13
    assert abs(d2bar(any_mesh, F).sum()) < 1e-13


def test_d1_is_head_minus_tail():
    m = get_mesh("hex")
    q = np.arange(m.n_vertices, dtype=float) ** 2
    tail, head = m.edge_vertices[:, 0], m.edge_vertices[:, 1]
    np.testing.assert_array_equal(d1(m, q), q[head] - q[tail])


def test_d1bar_points_along_normal():
    m = get_mesh("square")
    a = np.arange(m.n_cells, dtype=float)
    c0, c1 = m.edge_cells[:, 0], m.edge_cells[:, 1]
    np.testing.assert_array_equal(d1bar(m, a), a[c1] - a[c0])


def test_field_type_checks():
    m = get_mesh("square")
    out = d1(m, primal0(np.ones(m.n_vertices)))
    assert (out.site, out.form, out.degree) == ("edge", "primal", 1)
    with pytest.raises(FormError):
        d1(m, dual0(np.ones(m.n_cells)))
    with pytest.raises(FormError):
        d2(m, dual1(np.ones(m.n_edges)))
    with pytest.raises(FormError):
        d2(m, primal1(np.ones(m.n_edges + 1)))
    with pytest.raises(FormError):
        Field(np.ones(3), "vertex", "primal", 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_exactness_random_forms(seed):
    rng = np.random.default_rng(seed)
    for name in ("square", "voronoi", "icos0"):
        m = get_mesh(name)
        q = rng.standard_normal(m.n_vertices)
        a = rng.standard_normal(m.n_cells)
        assert np.abs(d2(m, d1(m, q))).max() < 1e-12
        assert np.abs(d2bar(m, d1bar(m, a))).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 32, elements=st.floats(-1e3, 1e3)), arrays(np.float64, 16, elements=st.floats(-1e3, 1e3)))
def test_property_summation_by_parts(F, a):
    # <D2 F, a> = -<F, D1bar a>
    m = get_mesh("square")
    lhs = d2(m, F) @ a
    rhs = -(F @ d1bar(m, a))
    assert abs(lhs - rhs) <= 1e-9 * (1 + np.abs(F).sum() * np.abs(a).max())
