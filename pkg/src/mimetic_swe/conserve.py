"""Conservation bookkeeping shared by both schemes.

The core is :func:`contraction`, the discrete chain rule
``dF/dt = sum (dF/dx) (dx/dt)`` reported together with the sum of the
absolute values of its terms, so that a relative residual is always
well defined.  The two ``*_record`` helpers only gather the derivatives
and tendencies of a scheme and hand them to the same code path.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import cgrid, zgrid
from .mesh import Mesh


@dataclass(frozen=True)
class Contraction:
    value: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.value) / self.scale if self.scale > 0 else 0.0


def contraction(derivatives, tendencies, measures=None) -> Contraction:
    """Sum over variables of measure * derivative * tendency.

    ``measures`` (one per variable, or None) multiplies each product;
    the Z-grid uses the cell areas, the C-grid forms carry their own.
    """
    measures = measures or [None] * len(derivatives)
    terms = []
    for d, t, w in zip(derivatives, tendencies, measures):
        p = np.asarray(d) * np.asarray(t)
        terms.append(p if w is None else np.asarray(w) * p)
    terms = np.concatenate(terms)
    return Contraction(float(terms.sum()), float(np.abs(terms).sum()))


def contraction_residuals(dH, dZ, tendencies, measures=None):
    """(dH/dt, dZ/dt) contractions for one state."""
    return contraction(dH, tendencies, measures), contraction(dZ, tendencies, measures)


@dataclass
class DiagnosticsRecord:
    scheme: str
    step: int
    time: float
    mass: float
    circulation: float
    energy: float
    enstrophy: float
    dHdt: float
    dHdt_rel: float
    dZdt: float
    dZdt_rel: float
    mass_drift: float = 0.0
    energy_drift: float = 0.0
    enstrophy_drift: float = 0.0


def cgrid_record(mesh: Mesh, s, alpha, variant="conserving", step=0, time=0.0) -> DiagnosticsRecord:
    d = cgrid.compute_diagnostics(mesh, s)
    tend = cgrid.tendency(mesh, s, alpha, variant, d)
    dH = cgrid.functional_derivatives(mesh, s, d)
    dZ = cgrid.enstrophy_derivatives(mesh, s, d)
    eH, eZ = contraction_residuals(dH, dZ, tend)
    return DiagnosticsRecord(
        "cgrid", step, time,
        float(s.m.sum()), float(d.eta.sum()),
        cgrid.hamiltonian(mesh, s), float(0.5 * np.sum(d.m_v * d.q**2)),
        eH.value, eH.relative, eZ.value, eZ.relative,
    )


def zgrid_record(mesh: Mesh, s, step=0, time=0.0) -> DiagnosticsRecord:
    A = mesh.cell_area
    helm = zgrid.helmholtz_solve(mesh, s)
    Phi, q = zgrid.bernoulli_and_pv(mesh, s, helm)
    tend = zgrid.tendency(mesh, s, helm)
    dH = (Phi, -helm.psi, -helm.chi)
    dZ = (-0.5 * q * q, q, np.zeros_like(q))
    eH, eZ = contraction_residuals(dH, dZ, tend, [A, A, A])
    return DiagnosticsRecord(
        "zgrid", step, time,
        float(np.sum(A * s.h)), float(np.sum(A * (s.zeta + s.f))),
        zgrid.hamiltonian(mesh, s, helm), zgrid.potential_enstrophy(mesh, s),
        eH.value, eH.relative, eZ.value, eZ.relative,
    )


def _drift(x, x0):
    return (x - x0) / abs(x0) if x0 != 0 else x - x0


def with_drifts(records: list, reference: DiagnosticsRecord | None = None) -> list:
    """Fill the drift columns relative to ``reference`` (default: first record)."""
    if not records:
        return records
    r0 = reference or records[0]
    for r in records:
        r.mass_drift = _drift(r.mass, r0.mass)
        r.energy_drift = _drift(r.energy, r0.energy)
        r.enstrophy_drift = _drift(r.enstrophy, r0.enstrophy)
    return records


CSV_FIELDS = [f.name for f in fields(DiagnosticsRecord)]


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class SeriesWriter:
    """Appends DiagnosticsRecords to a CSV file, one row per record."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_FIELDS)
        self._first = None

    def append(self, rec: DiagnosticsRecord) -> None:
        if self._first is None:
            self._first = rec
        with_drifts([rec], self._first)
        row = asdict(rec)
        self._w.writerow([_cell(row[k]) for k in CSV_FIELDS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_series(records, path) -> None:
    with SeriesWriter(path) as w:
        for r in records:
            w.append(r)


def read_series(path) -> list:
    out = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for f in fields(DiagnosticsRecord):
                v = row[f.name]
                kw[f.name] = v if f.name == "scheme" else int(v) if f.name == "step" else float(v)
            out.append(DiagnosticsRecord(**kw))
    return out
