import numpy as np
import pytest

from mimetic_swe import cgrid, zgrid
from mimetic_swe.conserve import (
    CSV_FIELDS,
    DiagnosticsRecord,
    SeriesWriter,
    cgrid_record,
    contraction,
    read_series,
    with_drifts,
    write_series,
    zgrid_record,
)
from mimetic_swe.driver import integrate

from conftest import get_alpha, get_mesh, random_cgrid_state, random_zgrid_state


def test_contraction_value_and_scale():
    c = contraction([np.array([1.0, 2.0]), np.array([3.0])], [np.array([1.0, -1.0]), np.array([2.0])])
    assert c.value == 5.0 and c.scale == 9.0
    assert c.relative == pytest.approx(5 / 9)


def test_contraction_measures():
    c = contraction([np.ones(2)], [np.ones(2)], [np.array([2.0, 3.0])])
    assert c.value == 5.0


def test_contraction_zero_scale():
    assert contraction([np.zeros(3)], [np.ones(3)]).relative == 0.0


def test_cgrid_record():
    m = get_mesh("hex")
    s = random_cgrid_state(m, np.random.default_rng(0), f=1.0)
    r = cgrid_record(m, s, get_alpha("hex"), step=3, time=1.5)
    assert r.scheme == "cgrid" and r.step == 3 and r.time == 1.5
    assert r.mass == pytest.approx(s.m.sum())
    assert r.energy == pytest.approx(cgrid.hamiltonian(m, s))
    assert r.enstrophy == pytest.approx(cgrid.potential_enstrophy(m, s))
    assert r.dHdt_rel < 1e-12 and r.dZdt_rel < 1e-10


def test_zgrid_record():
    m = get_mesh("icos1")
    s = random_zgrid_state(m, np.random.default_rng(1))
    r = zgrid_record(m, s)
    assert r.scheme == "zgrid"
    assert r.mass == pytest.approx(np.sum(m.cell_area * s.h))
    assert r.enstrophy == pytest.approx(zgrid.potential_enstrophy(m, s))
    assert r.dHdt_rel < 1e-11 and r.dZdt_rel < 1e-11


def test_drifts():
    recs = [DiagnosticsRecord("cgrid", i, float(i), 2.0 + i, 0.0, 4.0, 0.0, 0, 0, 0, 0) for i in range(3)]
    with_drifts(recs)
    assert [r.mass_drift for r in recs] == [0.0, 0.5, 1.0]
    assert all(r.energy_drift == 0.0 for r in recs)
    # zero reference falls back to the absolute difference
    assert recs[1].enstrophy_drift == 0.0


def test_csv_round_trip_17_digits(tmp_path):
    x = 0.1 + 0.2
    recs = [DiagnosticsRecord("zgrid", 0, 0.0, x, 1 / 3, np.pi, np.e, 1e-300, 1e-17, -2.5, 0.0)]
    p = tmp_path / "d.csv"
    write_series(recs, p)
    header = p.read_text().splitlines()[0].split(",")
    assert header == CSV_FIELDS
    back = read_series(p)[0]
    assert back.mass == x and back.circulation == 1 / 3 and back.energy == np.pi and back.dHdt == 1e-300
    assert "0.30000000000000004" in p.read_text()


def test_series_length_and_rest_drift(tmp_path):
    m = get_mesh("hex")
    s = cgrid.make_state(m, m.cell_area, np.zeros(m.n_edges), 9.80616, 1e-4)
    a = get_alpha("hex")
    p = tmp_path / "d.csv"
    with SeriesWriter(p) as w:
        integrate(m, s, 0.01, 100, "cgrid", a, callback=lambda n, st: w.append(cgrid_record(m, st, a, step=n, time=0.01 * n)))
    recs = read_series(p)
    assert len(recs) == 101
    assert [r.step for r in recs] == list(range(101))
    assert all(r.mass_drift == 0 and r.energy_drift == 0 and r.enstrophy_drift == 0 for r in recs)
