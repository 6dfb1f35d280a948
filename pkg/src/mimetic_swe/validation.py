"""Runtime checks of the mesh invariants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dec import incidence
from .mesh import Mesh, geometry_of

AREA_RTOL = 1e-12


@dataclass
class Check:
    name: str
    passed: bool
    residual: float


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, residual, tol):
        self.checks.append(Check(name, bool(residual <= tol), float(residual)))

    def lines(self):
        return [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<28s} residual={c.residual:.3e}" for c in self.checks]


def _int_max(m) -> int:
    m = m.tocsr()
    m.eliminate_zeros()
    return int(abs(m).max()) if m.nnz else 0


def validate_mesh(mesh: Mesh) -> ValidationReport:
    rep = ValidationReport()
    ec, ev = mesh.edge_cells, mesh.edge_vertices

    bad = int(np.sum(ec[:, 0] == ec[:, 1]) + np.sum(ev[:, 0] == ev[:, 1]))
    rep.add("two_cells_two_vertices", bad, 0)
    bad = int(np.sum(np.sort(mesh.edge_cell_sign, axis=1) != [-1, 1]))
    bad += int(np.sum(np.sort(mesh.edge_vertex_sign, axis=1) != [-1, 1]))
    rep.add("one_plus_one_minus", bad, 0)

    inc = incidence(mesh)
    rep.add("D2_D1_zero", _int_max(inc.D2 @ inc.D1), 0)
    rep.add("D2bar_D1bar_zero", _int_max(inc.D2bar @ inc.D1bar), 0)
    rep.add("D2T_eq_minus_D1bar", _int_max(inc.D2.T + inc.D1bar), 0)
    rep.add("D2barT_eq_D1", _int_max(inc.D2bar.T - inc.D1), 0)

    tot = mesh.total_area
    rep.add("cell_area_partition", abs(mesh.cell_area.sum() - tot) / tot, AREA_RTOL)
    rep.add("vertex_area_partition", abs(mesh.vertex_area.sum() - tot) / tot, AREA_RTOL)
    kite_sum = np.array([a.sum() for a in mesh.cell_vertex_area])
    wing_sum = np.array([a.sum() for a in mesh.cell_edge_area])
    scale = mesh.cell_area.max()
    rep.add("kites_sum_to_cell", np.abs(kite_sum - mesh.cell_area).max() / scale, AREA_RTOL)
    rep.add("wings_sum_to_cell", np.abs(wing_sum - mesh.cell_area).max() / scale, AREA_RTOL)
    c, v, a = mesh.kites
    dual_sum = np.bincount(v, weights=a, minlength=mesh.n_vertices)
    rep.add("kites_sum_to_dual_cell", np.abs(dual_sum - mesh.vertex_area).max() / mesh.vertex_area.max(), AREA_RTOL)

    positive = min(mesh.cell_area.min(), mesh.vertex_area.min(), mesh.le.min(), mesh.de.min())
    rep.add("positive_measures", 0.0 if positive > 0 else 1.0, 0.0)
    rep.add("orthogonality_radians", mesh.orthogonality, 1e-10)

    # tangent is the normal rotated +90 degrees
    geom = geometry_of(mesh)
    s = geom.turn_sign(
        mesh.cell_centers[ec[:, 0]], mesh.cell_centers[ec[:, 1]],
        mesh.vertex_points[ev[:, 0]], mesh.vertex_points[ev[:, 1]],
    )
    rep.add("tangent_left_of_normal", int(np.sum(s <= 0)), 0)

    # derived stencils against their set definitions
    bad = 0
    for e in range(mesh.n_edges):
        c0, c1 = ec[e]
        ecp = set(mesh.cell_edges[c0]) | set(mesh.cell_edges[c1])
        bad += set(mesh.ECP(e)) != ecp - {e}
        bad += set(mesh.CVE(e)) != set(mesh.cell_vertices[c0]) | set(mesh.cell_vertices[c1])
        for i in (c0, c1):
            for vv in mesh.cell_vertices[i]:
                ref = (set(mesh.cell_edges[i]) & set(mesh.vertex_edges[vv])) - {e}
                bad += set(mesh.EVE(vv, e, i)) != ref
    rep.add("derived_stencils", bad, 0)
    return rep
