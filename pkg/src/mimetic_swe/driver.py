"""Run configuration, initial conditions, RK4 time stepping and state files.

Config files are INI style (``configparser``).  Relative paths are taken
relative to the directory of the config file.

.. code-block:: ini

    [run]
    scheme = cgrid            ; cgrid | zgrid
    dt = 60.0
    steps = 100
    output_interval = 10      ; records and snapshots every N steps
    seed = 0
    output_dir = out          ; receives diag.csv and <step>.state
    q_variant = conserving    ; cgrid only: conserving | energy_only | enstrophy_only
    alpha_file =              ; optional alpha cache, default <output_dir>/alpha.txt
    snapshots = true

    [mesh]
    kind = hex                ; square | hex | voronoi | icos, or
    file =                    ; a mesh file written by ``mesh build``
    n = 4                     ; remaining keys go to the builder
    L = 1.0

    [physics]
    g = 9.80616
    f = 0.0                   ; constant Coriolis parameter
    omega =                   ; sphere only: f = 2 omega sin(latitude)
    depth = 1000.0            ; mean depth H

    [initial]
    name = random_perturbation
    amplitude = 1.0           ; height amplitude, default 1e-3 * depth
    wind_amplitude =          ; velocity amplitude
    width =                   ; bump width for gravity_wave / geostrophic_balance
    u0 =                      ; solid_rotation_sphere wind speed

    [tolerances]
    energy_rel = 1e-12        ; per-record contraction limits (zgrid: 1e-11)
    enstrophy_rel = 1e-10
    mass_drift = 1e-12
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cgrid, zgrid
from .conserve import SeriesWriter, cgrid_record, zgrid_record
from .mesh import Mesh, build_mesh, geometry_of
from .meshio import read_mesh
from .qflux import VARIANTS, read_alpha, solve_alpha, write_alpha

INITIAL_CONDITIONS = ("rest", "random_perturbation", "gravity_wave", "geostrophic_balance", "solid_rotation_sphere")
DEFAULT_TOL = {
    "cgrid": {"energy_rel": 1e-12, "enstrophy_rel": 1e-10, "mass_drift": 1e-12},
    "zgrid": {"energy_rel": 1e-11, "enstrophy_rel": 1e-11, "mass_drift": 1e-12},
}


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


def _num(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


@dataclass
class RunConfig:
    scheme: str = "cgrid"
    mesh: dict = field(default_factory=lambda: {"kind": "hex", "n": 4, "L": 1.0})
    mesh_file: str | None = None
    g: float = 9.80616
    f: float = 0.0
    omega: float | None = None
    depth: float = 1.0
    initial: dict = field(default_factory=lambda: {"name": "rest"})
    dt: float = 1.0
    steps: int = 0
    output_interval: int = 1
    seed: int = 0
    output_dir: str = "run"
    q_variant: str = "conserving"
    alpha_file: str | None = None
    snapshots: bool = True
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in ("cgrid", "zgrid"):
            raise ConfigError(f"scheme must be cgrid or zgrid, got {self.scheme!r}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.output_interval < 1:
            raise ConfigError("output_interval must be >= 1")
        if self.q_variant not in VARIANTS:
            raise ConfigError(f"q_variant must be one of {VARIANTS}")
        if self.initial.get("name") not in INITIAL_CONDITIONS:
            raise ConfigError(f"unknown initial condition {self.initial.get('name')!r}")
        if self.mesh_file is not None and not Path(self.mesh_file).exists():
            raise ConfigError(f"mesh file {self.mesh_file} does not exist")
        self.tolerances = {**DEFAULT_TOL[self.scheme], **self.tolerances}

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        cp.read(path)
        base = path.parent

        def get(sec, key, conv=str, default=None):
            if cp.has_option(sec, key) and cp.get(sec, key).strip() != "":
                return conv(cp.get(sec, key).strip())
            return default

        mesh = {k: v for k, v in cp.items("mesh")} if cp.has_section("mesh") else {}
        mesh_file = mesh.pop("file", "").strip() or None
        mesh = {k: (v if k == "kind" else _num(v)) for k, v in mesh.items() if v.strip() != ""}
        initial = {k: v for k, v in cp.items("initial")} if cp.has_section("initial") else {}
        initial = {k: (v if k == "name" else _num(v)) for k, v in initial.items() if v.strip() != ""}
        tol = {k: float(v) for k, v in cp.items("tolerances")} if cp.has_section("tolerances") else {}
        out = get("run", "output_dir", str, "run")
        alpha = get("run", "alpha_file", str)
        return cls(
            scheme=get("run", "scheme", str, "cgrid"),
            mesh=mesh,
            mesh_file=str(base / mesh_file) if mesh_file else None,
            g=get("physics", "g", float, 9.80616),
            f=get("physics", "f", float, 0.0),
            omega=get("physics", "omega", float),
            depth=get("physics", "depth", float, 1.0),
            initial=initial or {"name": "rest"},
            dt=get("run", "dt", float, 1.0),
            steps=get("run", "steps", int, 0),
            output_interval=get("run", "output_interval", int, 1),
            seed=get("run", "seed", int, 0),
            output_dir=str(base / out),
            q_variant=get("run", "q_variant", str, "conserving"),
            alpha_file=str(base / alpha) if alpha else None,
            snapshots=get("run", "snapshots", lambda s: s.lower() in ("1", "true", "yes", "on"), True),
            tolerances=tol,
        )


def load_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh_file:
        return read_mesh(cfg.mesh_file)
    kw = dict(cfg.mesh)
    kind = kw.pop("kind", None)
    if kind is None:
        raise ConfigError("[mesh] needs kind or file")
    return build_mesh(kind, **kw)


# ---------------------------------------------------------------------------
# initial conditions


def coriolis(mesh: Mesh, f: float = 0.0, omega: float | None = None):
    """Scalar f, or a callable of positions when ``omega`` is set on the sphere."""
    if omega is None:
        return f
    if mesh.domain != "sphere":
        raise ConfigError("omega is only meaningful on the sphere; use f on the plane")
    return lambda x: 2.0 * omega * x[:, 2] / np.linalg.norm(x, axis=1)


def _bump(mesh: Mesh, pts, width, center=None):
    geom = geometry_of(mesh)
    if center is None:
        center = mesh.cell_centers[0] if mesh.domain == "sphere" else 0.5 * (np.asarray(geom.b1) + np.asarray(geom.b2))
    d = geom.dist(np.broadcast_to(center, pts.shape), pts)
    return np.exp(-(d / width) ** 2)


def _default_width(mesh: Mesh) -> float:
    return 0.15 * np.sqrt(mesh.total_area)


def _edge_tangent_unit(mesh: Mesh) -> np.ndarray:
    """Unit vectors along each dual edge, from its first cell to its second."""
    geom = geometry_of(mesh)
    c0, c1 = mesh.cell_centers[mesh.edge_cells[:, 0]], mesh.cell_centers[mesh.edge_cells[:, 1]]
    if mesh.domain == "sphere":
        p = mesh.edge_points
        t = c1 - c0
        t = t - np.sum(t * p, axis=1)[:, None] * p / np.sum(p * p, axis=1)[:, None]
    else:
        t = geom.disp(c0, c1)
    return t / np.linalg.norm(t, axis=1)[:, None]


def initial_condition(name: str, mesh: Mesh, params: dict, scheme: str = "cgrid"):
    """Scheme state for one of :data:`INITIAL_CONDITIONS`.

    ``params`` carries g, f, omega, depth and the ``[initial]`` keys.
    """
    if name not in INITIAL_CONDITIONS:
        raise ConfigError(f"unknown initial condition {name!r}")
    g = float(params.get("g", 9.80616))
    H = float(params.get("depth", 1.0))
    f0 = float(params.get("f", 0.0))
    omega = params.get("omega")
    fc = coriolis(mesh, f0, omega)
    amp = float(params.get("amplitude", 1e-3 * H))
    width = float(params.get("width", _default_width(mesh)))
    rng = np.random.default_rng(int(params.get("seed", 0)))
    A = mesh.cell_area
    nc, ne = mesh.n_cells, mesh.n_edges
    if H <= 0:
        raise ConfigError("depth must be positive")

    if name == "rest":
        if scheme == "cgrid":
            return cgrid.make_state(mesh, H * A, np.zeros(ne), g, fc)
        return zgrid.make_state(mesh, np.full(nc, H), np.zeros(nc), np.zeros(nc), g, fc)

    if name == "random_perturbation":
        wind = float(params.get("wind_amplitude", amp * np.sqrt(g / H)))
        if amp >= H:
            raise ConfigError("perturbation amplitude must be below the mean depth")
        dh = amp * rng.uniform(-1.0, 1.0, nc)
        if scheme == "cgrid":
            return cgrid.make_state(mesh, A * (H + dh), wind * mesh.de * rng.standard_normal(ne), g, fc)
        scale = wind / np.sqrt(mesh.total_area / nc)
        zeta = scale * rng.standard_normal(nc)
        mu = scale * rng.standard_normal(nc)
        zeta -= np.sum(A * zeta) / np.sum(A)
        mu -= np.sum(A * mu) / np.sum(A)
        return zgrid.make_state(mesh, H + dh, zeta, mu, g, fc)

    if name == "gravity_wave":
        if scheme == "cgrid":
            return cgrid.make_state(mesh, A * (H + amp * _bump(mesh, mesh.cell_centers, width)), np.zeros(ne), g, fc)
        return zgrid.make_state(mesh, H + amp * _bump(mesh, mesh.cell_centers, width), np.zeros(nc), np.zeros(nc), g, fc)

    if name == "geostrophic_balance":
        if f0 == 0.0:
            raise ConfigError("geostrophic_balance needs a nonzero constant f")
        if scheme == "cgrid":
            psi = -(g / f0) * amp * _bump(mesh, mesh.vertex_points, width)
            m1, u = cgrid.geostrophic_perturbation(mesh, psi, f0, g)
            return cgrid.make_state(mesh, H * A + m1, u, g, f0)
        h1, zeta, mu = zgrid.geostrophic_perturbation(mesh, amp * _bump(mesh, mesh.cell_centers, width), f0, g)
        return zgrid.make_state(mesh, H + h1, zeta, mu, g, f0)

    # solid_rotation_sphere
    if mesh.domain != "sphere":
        raise ConfigError("solid_rotation_sphere needs a spherical mesh")
    if omega is None:
        raise ConfigError("solid_rotation_sphere needs omega")
    R = mesh.params["radius"]
    u0 = float(params.get("u0", 2.0 * np.pi * R / (12.0 * 86400.0)))

    def depth(x):
        s = x[:, 2] / np.linalg.norm(x, axis=1)
        return H - (R * omega * u0 + 0.5 * u0**2) * s**2 / g

    if np.any(depth(mesh.cell_centers) <= 0):
        raise ConfigError("solid rotation depth becomes nonpositive; increase depth or reduce u0")
    if scheme == "cgrid":
        p = mesh.edge_points
        v = (u0 / R) * np.cross(np.array([0.0, 0.0, 1.0]), p)
        u = mesh.de * np.sum(v * _edge_tangent_unit(mesh), axis=1)
        return cgrid.make_state(mesh, A * depth(mesh.cell_centers), u, g, fc)
    x = mesh.cell_centers
    zeta = 2.0 * u0 * x[:, 2] / (R * np.linalg.norm(x, axis=1))
    return zgrid.make_state(mesh, depth(x), zeta, np.zeros(nc), g, fc)


# ---------------------------------------------------------------------------
# time stepping


def rk4_step(y, dt: float, fn):
    """Classical RK4 on a tuple of arrays; ``fn(y)`` returns a matching tuple."""
    k1 = fn(y)
    k2 = fn(tuple(a + 0.5 * dt * k for a, k in zip(y, k1)))
    k3 = fn(tuple(a + 0.5 * dt * k for a, k in zip(y, k2)))
    k4 = fn(tuple(a + dt * k for a, k in zip(y, k3)))
    return tuple(a + (dt / 6.0) * (p + 2.0 * q + 2.0 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4))


def cgrid_stepper(mesh: Mesh, template, alpha, variant="conserving"):
    def fn(y):
        return cgrid.tendency(mesh, template.with_fields(m=y[0], u=y[1]), alpha, variant)

    return fn, (lambda s: (s.m, s.u)), (lambda y: template.with_fields(m=y[0], u=y[1]))


def zgrid_stepper(mesh: Mesh, template):
    def fn(y):
        return zgrid.tendency(mesh, template.with_fields(h=y[0], zeta=y[1], mu=y[2]))

    return fn, (lambda s: (s.h, s.zeta, s.mu)), (lambda y: template.with_fields(h=y[0], zeta=y[1], mu=y[2]))


def integrate(mesh, state, dt, steps, scheme="cgrid", alpha=None, variant="conserving", callback=None):
    """Advance ``steps`` RK4 steps; ``callback(step, state)`` sees every state."""
    if scheme == "cgrid":
        fn, pack, unpack = cgrid_stepper(mesh, state, alpha, variant)
    else:
        fn, pack, unpack = zgrid_stepper(mesh, state)
    y = pack(state)
    if callback:
        callback(0, state)
    for n in range(1, steps + 1):
        y = rk4_step(y, dt, fn)
        if callback:
            callback(n, unpack(y))
    return unpack(y)


# ---------------------------------------------------------------------------
# snapshots


def _fields(scheme):
    return ("m", "u", "b", "f_v") if scheme == "cgrid" else ("h", "zeta", "mu", "f", "b")


def write_state(path, scheme: str, state, step: int, time: float) -> None:
    out = ["# mimetic_swe state v1", "[parameters]", f"scheme = {scheme}", f"step = {step}",
           f"time = {time:.17g}", f"g = {state.g:.17g}"]
    for name in _fields(scheme):
        out.append(f"[{name}]")
        out += [format(float(x), ".17g") for x in getattr(state, name)]
    Path(path).write_text("\n".join(out) + "\n")


def read_state(path):
    """Returns (scheme, step, time, state)."""
    secs, cur = {}, None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            cur = line[1:-1]
            secs[cur] = []
        else:
            secs[cur].append(line)
    par = dict(s.split(" = ", 1) for s in secs["parameters"])
    scheme = par["scheme"]
    arr = {k: np.array([float(x) for x in secs[k]]) for k in _fields(scheme)}
    g = float(par["g"])
    if scheme == "cgrid":
        st = cgrid.CGridState(arr["m"], arr["u"], g, arr["b"], arr["f_v"])
    else:
        st = zgrid.ZGridState(arr["h"], arr["zeta"], arr["mu"], g, arr["f"], arr["b"])
    return scheme, int(par["step"]), float(par["time"]), st


# ---------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    state: object
    records: list
    csv_path: Path
    snapshots: list
    violations: list
    cfl: float

    @property
    def ok(self) -> bool:
        return not self.violations


def _alpha_for(cfg: RunConfig, mesh: Mesh, out: Path):
    path = Path(cfg.alpha_file) if cfg.alpha_file else out / "alpha.txt"
    if path.exists():
        alpha, _ = read_alpha(path)
        if alpha.n_edges != mesh.n_edges:
            raise RunError("alpha", f"cached alpha at {path} does not match the mesh")
        return alpha
    alpha = solve_alpha(mesh)
    write_alpha(alpha, path, cfg.mesh_file)
    return alpha


def cfl_number(mesh: Mesh, cfg: RunConfig) -> float:
    return float(np.sqrt(cfg.g * cfg.depth) * cfg.dt / mesh.de.min())


def run(cfg: RunConfig) -> RunResult:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RunError("output", str(exc)) from exc
    try:
        mesh = load_mesh(cfg)
    except Exception as exc:
        raise RunError("mesh", str(exc)) from exc
    if cfg.scheme == "zgrid" and not mesh.orthogonal:
        raise RunError("mesh", "zgrid requires an orthogonal mesh")
    alpha = None
    if cfg.scheme == "cgrid" and cfg.q_variant == "conserving":
        try:
            alpha = _alpha_for(cfg, mesh, out)
        except RunError:
            raise
        except Exception as exc:
            raise RunError("alpha", str(exc)) from exc
    params = {"g": cfg.g, "f": cfg.f, "omega": cfg.omega, "depth": cfg.depth, "seed": cfg.seed, **cfg.initial}
    try:
        state = initial_condition(cfg.initial["name"], mesh, params, cfg.scheme)
    except Exception as exc:
        raise RunError("initial", str(exc)) from exc

    records, snaps, violations = [], [], []
    tol = cfg.tolerances
    csv_path = out / "diag.csv"
    writer = SeriesWriter(csv_path)

    def emit(step, s):
        if step % cfg.output_interval and step != cfg.steps:
            return
        t = step * cfg.dt
        if cfg.scheme == "cgrid":
            rec = cgrid_record(mesh, s, alpha, cfg.q_variant, step, t)
        else:
            rec = zgrid_record(mesh, s, step, t)
        writer.append(rec)
        records.append(rec)
        for key, val in (("energy_rel", rec.dHdt_rel), ("enstrophy_rel", rec.dZdt_rel), ("mass_drift", abs(rec.mass_drift))):
            if val > tol[key]:
                violations.append(f"step {step}: {key} {val:.3e} > {tol[key]:.1e}")
        if cfg.snapshots:
            p = out / f"{step}.state"
            write_state(p, cfg.scheme, s, step, t)
            snaps.append(p)

    try:
        final = integrate(mesh, state, cfg.dt, cfg.steps, cfg.scheme, alpha, cfg.q_variant, emit)
    except Exception as exc:
        raise RunError("integrate", str(exc)) from exc
    finally:
        writer.close()
    return RunResult(final, records, csv_path, snaps, violations, cfl_number(mesh, cfg))


# ---------------------------------------------------------------------------
# property suite


@dataclass
class SuiteResult:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        return [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<34s} {c.residual:.3e}" for c in self.checks]


def verify_suite(cfg: RunConfig, trials: int = 10) -> SuiteResult:
    """Mesh and operator checks followed by conservation checks on the configured mesh."""
    from .conserve import contraction
    from .hodge import build_W
    from .qflux import verify_alpha
    from .validation import Check, validate_mesh

    mesh = load_mesh(cfg)
    checks = list(validate_mesh(mesh).checks)
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)

    def add(name, value, limit):
        checks.append(Check(name, bool(value <= limit), float(value)))

    if mesh.orthogonal:
        W = build_W(mesh)
        d = (W.matrix + W.matrix.T).tocsr()
        add("W_antisymmetry", abs(d).max() if d.nnz else 0.0, 0.0)
        add("W_constraint", W.residual, 1e-12)
        alpha = solve_alpha(mesh, strict=False)
        add("alpha_cell_residual", alpha.max_residual, 1e-10)
        qv = verify_alpha(mesh, alpha, trials, cfg.seed)
        add("Q_adjoint", qv.adjoint_rel, 1e-12)
        add("Q_enstrophy_condition", qv.enstrophy_rel, 1e-10)
        add("Q_of_one_equals_W", qv.q1_minus_W, 1e-12)
        eH, eZ, neg_Z, neg_H = 0.0, 0.0, [], []
        for _ in range(trials):
            s = cgrid.make_state(
                mesh, mesh.cell_area * (1 + 0.5 * rng.random(mesh.n_cells)),
                mesh.de * rng.standard_normal(mesh.n_edges), 1.0, 1.0,
            )
            d = cgrid.compute_diagnostics(mesh, s)
            dH = cgrid.functional_derivatives(mesh, s, d)
            dZ = cgrid.enstrophy_derivatives(mesh, s, d)
            t = cgrid.tendency(mesh, s, alpha, "conserving", d)
            eH = max(eH, contraction(dH, t).relative)
            eZ = max(eZ, contraction(dZ, t).relative)
            neg_Z.append(contraction(dZ, cgrid.tendency(mesh, s, None, "energy_only", d)).relative)
            neg_H.append(contraction(dH, cgrid.tendency(mesh, s, None, "enstrophy_only", d)).relative)
        add("cgrid_energy_contraction", eH, DEFAULT_TOL["cgrid"]["energy_rel"])
        add("cgrid_enstrophy_contraction", eZ, DEFAULT_TOL["cgrid"]["enstrophy_rel"])
        # violations must be detected: median over random states above 1e-3
        checks.append(Check("energy_only_breaks_enstrophy", bool(np.median(neg_Z) >= 1e-3), float(np.median(neg_Z))))
        checks.append(Check("enstrophy_only_breaks_energy", bool(np.median(neg_H) >= 1e-3), float(np.median(neg_H))))

        A = mesh.cell_area
        zH, zZ, hres = 0.0, 0.0, 0.0
        for _ in range(trials):
            zeta, mu = rng.standard_normal((2, mesh.n_cells))
            s = zgrid.make_state(mesh, 1 + 0.5 * rng.random(mesh.n_cells), zeta, mu, 1.0, 1.0)
            helm = zgrid.helmholtz_solve(mesh, s)
            Phi, q = zgrid.bernoulli_and_pv(mesh, s, helm)
            t = zgrid.tendency(mesh, s, helm)
            zH = max(zH, contraction((Phi, -helm.psi, -helm.chi), t, [A, A, A]).relative)
            zZ = max(zZ, contraction((-0.5 * q * q, q), t[:2], [A, A]).relative)
            hres = max(hres, helm.residual)
        add("zgrid_energy_contraction", zH, DEFAULT_TOL["zgrid"]["energy_rel"])
        add("zgrid_enstrophy_contraction", zZ, DEFAULT_TOL["zgrid"]["enstrophy_rel"])
        add("helmholtz_residual", hres, zgrid.HELMHOLTZ_RTOL)
        if all(len(c) == 3 for c in mesh.vertex_cells):
            a, b = rng.standard_normal((2, mesh.n_cells))
            add("J_delta_equals_J_zeta", np.abs(zgrid.jacobian_delta(mesh, a, b) - zgrid.jacobian_zeta(mesh, a, b)).max(), 1e-13)
    return SuiteResult(checks)
