"""Command line interface.

Exit codes: 0 success, 1 error, 2 tolerance violation under ``--strict``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .driver import ConfigError, RunConfig, RunError, run, verify_suite
from .mesh import MeshError, build_mesh
from .meshio import read_mesh, write_mesh
from .qflux import VARIANTS, read_alpha, solve_alpha, verify_alpha, write_alpha
from .validation import validate_mesh

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2


def _mesh_kwargs(a) -> dict:
    if a.kind == "square":
        return {"nx": a.nx, "ny": a.ny, "Lx": a.Lx, "Ly": a.Ly}
    if a.kind == "hex":
        return {"n": a.n, "L": a.L}
    if a.kind == "voronoi":
        return {"n_seeds": a.n_seeds, "Lx": a.Lx, "Ly": a.Ly, "seed": a.seed, "lloyd_iterations": a.lloyd}
    return {"level": a.level, "radius": a.radius}


def cmd_mesh_build(a) -> int:
    mesh = build_mesh(a.kind, **_mesh_kwargs(a))
    write_mesh(mesh, a.out)
    print(f"{a.kind}: {mesh.n_cells} cells, {mesh.n_edges} edges, {mesh.n_vertices} vertices -> {a.out}")
    return EXIT_OK


def cmd_mesh_validate(a) -> int:
    rep = validate_mesh(read_mesh(a.file))
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.ok or not a.strict else EXIT_TOLERANCE


def cmd_q_solve(a) -> int:
    mesh = read_mesh(a.mesh)
    alpha = solve_alpha(mesh, coupled=a.coupled, strict=False)
    write_alpha(alpha, a.out, str(Path(a.mesh).resolve()))
    print(f"alpha: {len(alpha.coef)} coefficients, max residual {alpha.max_residual:.3e} -> {a.out}")
    return EXIT_OK if alpha.max_residual <= 1e-10 or not a.strict else EXIT_TOLERANCE


def cmd_q_verify(a) -> int:
    alpha, mesh_path = read_alpha(a.alpha)
    mesh_path = a.mesh or mesh_path
    if not mesh_path:
        raise ConfigError("alpha file names no mesh; pass --mesh")
    mesh = read_mesh(mesh_path)
    v = verify_alpha(mesh, alpha, a.trials, a.seed)
    print("\n".join(v.lines()))
    ok = v.enstrophy_rel <= 1e-10 and v.adjoint_rel <= 1e-12 and v.q1_minus_W <= 1e-12 and v.antisymmetry <= 1e-12
    return EXIT_OK if ok or not a.strict else EXIT_TOLERANCE


def cmd_run(a) -> int:
    cfg = RunConfig.from_file(a.config)
    if a.q_variant:
        cfg.q_variant = a.q_variant
    res = run(cfg)
    print(f"{len(res.records)} records -> {res.csv_path} (CFL {res.cfl:.3f})")
    for v in res.violations:
        print("violation:", v)
    return EXIT_TOLERANCE if a.strict and res.violations else EXIT_OK


def cmd_verify(a) -> int:
    res = verify_suite(RunConfig.from_file(a.config), a.trials)
    print("\n".join(res.lines()))
    return EXIT_TOLERANCE if a.strict and not res.ok else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mimetic-swe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    mesh = sub.add_parser("mesh", help="build or validate meshes").add_subparsers(dest="sub", required=True)
    b = mesh.add_parser("build")
    b.add_argument("--kind", required=True, choices=["square", "hex", "voronoi", "icos"])
    b.add_argument("--out", required=True)
    b.add_argument("--nx", type=int, default=8)
    b.add_argument("--ny", type=int, default=8)
    b.add_argument("--Lx", type=float, default=1.0)
    b.add_argument("--Ly", type=float, default=1.0)
    b.add_argument("--n", type=int, default=4)
    b.add_argument("--L", type=float, default=1.0)
    b.add_argument("--n-seeds", dest="n_seeds", type=int, default=16)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--lloyd", type=int, default=10)
    b.add_argument("--level", type=int, default=1)
    b.add_argument("--radius", type=float, default=1.0)
    b.set_defaults(fn=cmd_mesh_build)
    v = mesh.add_parser("validate")
    v.add_argument("file")
    v.add_argument("--strict", action="store_true")
    v.set_defaults(fn=cmd_mesh_validate)

    q = sub.add_parser("q", help="solve or verify Q coefficients").add_subparsers(dest="sub", required=True)
    s = q.add_parser("solve")
    s.add_argument("--mesh", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--coupled", action="store_true", help="solve all cells together")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(fn=cmd_q_solve)
    qv = q.add_parser("verify")
    qv.add_argument("--alpha", required=True)
    qv.add_argument("--mesh", help="mesh file, default: the one named in the alpha file")
    qv.add_argument("--trials", type=int, default=100)
    qv.add_argument("--seed", type=int, default=0)
    qv.add_argument("--strict", action="store_true")
    qv.set_defaults(fn=cmd_q_verify)

    r = sub.add_parser("run", help="integrate a configured run")
    r.add_argument("--config", required=True)
    r.add_argument("--strict", action="store_true")
    r.add_argument("--q-variant", choices=VARIANTS)
    r.set_defaults(fn=cmd_run)

    ver = sub.add_parser("verify", help="property suite on the configured mesh")
    ver.add_argument("--config", required=True)
    ver.add_argument("--trials", type=int, default=10)
    ver.add_argument("--strict", action="store_true")
    ver.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.fn(a)
    except (ConfigError, RunError, MeshError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
