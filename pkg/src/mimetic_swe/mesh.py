"""Primal/dual polygonal meshes: connectivity with orientation, plus geometry.

Conventions used everywhere in the package:

* ``edge_cells[e] = (c0, c1)`` with ``c0 < c1``.  The edge normal points
  from ``c0`` to ``c1``, so ``n(e, c0) = +1`` and ``n(e, c1) = -1``.
* The edge tangent is the normal rotated by +90 degrees.  It runs from
  ``edge_vertices[e, 0]`` (tail, ``t = -1``) to ``edge_vertices[e, 1]``
  (head, ``t = +1``).
* ``cell_vertices[i]`` is counter-clockwise and ``cell_edges[i][k]`` joins
  ``cell_vertices[i][k]`` to ``cell_vertices[i][k + 1]``.
* ``le`` is the primal edge length (vertex to vertex) and ``de`` the dual
  edge length (cell center to cell center), so the diagonal Hodge star
  taking wind to flux is ``le / de``.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

from .geometry import PeriodicPlane, Sphere

ICOS_LEVEL_CAP = 6
ORTHOGONALITY_TOL = 1e-8


class MeshError(ValueError):
    pass


def _ragged(arrays, dtype=np.int64):
    return tuple(np.asarray(a, dtype=dtype) for a in arrays)


@dataclass(frozen=True, eq=False)
class Mesh:
    kind: str
    domain: str
    params: dict
    cell_centers: np.ndarray
    vertex_points: np.ndarray
    edge_points: np.ndarray
    cell_vertices: tuple
    cell_edges: tuple
    cell_edge_signs: tuple
    edge_cells: np.ndarray
    edge_cell_sign: np.ndarray
    edge_vertices: np.ndarray
    edge_vertex_sign: np.ndarray
    vertex_edges: tuple
    vertex_edge_signs: tuple
    vertex_cells: tuple
    cell_area: np.ndarray
    vertex_area: np.ndarray
    le: np.ndarray
    de: np.ndarray
    cell_edge_area: tuple
    cell_vertex_area: tuple
    total_area: float
    orthogonality: float

    # counts ---------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.cell_vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_edges)

    @property
    def n_edges(self) -> int:
        return len(self.edge_cells)

    @property
    def orthogonal(self) -> bool:
        return self.orthogonality < ORTHOGONALITY_TOL

    def count(self, site: str) -> int:
        return {"cell": self.n_cells, "edge": self.n_edges, "vertex": self.n_vertices}[site]

    # flattened incidence lists (CSR-like) ---------------------------------
    @cached_property
    def cell_degree(self) -> np.ndarray:
        return np.array([len(v) for v in self.cell_vertices])

    @cached_property
    def kites(self):
        """Flat ``(cell, vertex, A_iv)`` triplets."""
        cells = np.repeat(np.arange(self.n_cells), self.cell_degree)
        return cells, np.concatenate(self.cell_vertices), np.concatenate(self.cell_vertex_area)

    @cached_property
    def wings(self):
        """Flat ``(cell, edge, A_ie)`` triplets."""
        cells = np.repeat(np.arange(self.n_cells), self.cell_degree)
        return cells, np.concatenate(self.cell_edges), np.concatenate(self.cell_edge_area)

    @cached_property
    def edge_area(self) -> np.ndarray:
        """A_e: sum of the two cell-edge overlap areas."""
        c, e, a = self.wings
        return np.bincount(e, weights=a, minlength=self.n_edges)

    # derived stencils -----------------------------------------------------
    def ECP(self, e: int) -> np.ndarray:
        """Edges sharing a cell with ``e``, excluding ``e``."""
        c0, c1 = self.edge_cells[e]
        out = [x for x in self.cell_edges[c0] if x != e] + [x for x in self.cell_edges[c1] if x != e]
        return np.array(out)

    def CVE(self, e: int) -> np.ndarray:
        """Union of the vertices of the two cells of ``e``."""
        c0, c1 = self.edge_cells[e]
        return np.union1d(self.cell_vertices[c0], self.cell_vertices[c1])

    def EVE(self, v: int, e: int, i: int) -> np.ndarray:
        """Edges of cell ``i`` touching vertex ``v``, excluding ``e``."""
        return np.setdiff1d(np.intersect1d(self.cell_edges[i], self.vertex_edges[v]), [e])

    def t(self, e: int, v: int) -> int:
        k = np.flatnonzero(self.edge_vertices[e] == v)
        return int(self.edge_vertex_sign[e, k[0]]) if len(k) else 0

    def n(self, e: int, i: int) -> int:
        k = np.flatnonzero(self.edge_cells[e] == i)
        return int(self.edge_cell_sign[e, k[0]]) if len(k) else 0

    def with_tables(self, **changes) -> "Mesh":
        """Copy with some tables replaced (used for fault injection in tests)."""
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# assembly from a polygonal tessellation


def _sort_ccw(geom, center, vids, points):
    ang = geom.angle_about(center, points[vids])
    return [vids[k] for k in np.argsort(ang)]


def assemble(kind, geom, cell_centers, vertex_points, cell_vertices, params) -> Mesh:
    """Build all tables from cell centers, vertex points and CCW cell polygons."""
    cell_centers = np.asarray(cell_centers, dtype=float)
    vertex_points = np.asarray(vertex_points, dtype=float)
    nc = len(cell_vertices)
    nv = len(vertex_points)

    for i, vs in enumerate(cell_vertices):
        if len(vs) < 3:
            raise MeshError(f"cell {i} has only {len(vs)} vertices")
        if len(set(vs)) != len(vs):
            raise MeshError(f"cell {i} visits a vertex twice (mesh too small for its period)")

    # match each directed boundary segment with its reverse in the neighbor
    seg = {}
    for i, vs in enumerate(cell_vertices):
        for k in range(len(vs)):
            key = (vs[k], vs[(k + 1) % len(vs)])
            if key in seg:
                raise MeshError(f"directed edge {key} appears twice")
            seg[key] = (i, k)

    edge_id = {}
    edge_cells, edge_vertices = [], []
    cell_edges = [np.zeros(len(vs), dtype=np.int64) for vs in cell_vertices]
    for i, vs in enumerate(cell_vertices):
        for k in range(len(vs)):
            a, b = vs[k], vs[(k + 1) % len(vs)]
            if (b, a) not in seg:
                raise MeshError(f"boundary segment {(a, b)} of cell {i} is unmatched")
            j, kk = seg[(b, a)]
            if i == j:
                raise MeshError(f"cell {i} neighbors itself")
            key = (min(a, b), max(a, b))
            if key not in edge_id:
                c0 = min(i, j)
                # tangent runs counter-clockwise around c0
                tail, head = (a, b) if c0 == i else (b, a)
                edge_id[key] = len(edge_cells)
                edge_cells.append((c0, max(i, j)))
                edge_vertices.append((tail, head))
            cell_edges[i][k] = edge_id[key]

    edge_cells = np.array(edge_cells, dtype=np.int64)
    edge_vertices = np.array(edge_vertices, dtype=np.int64)
    ne = len(edge_cells)
    edge_cell_sign = np.tile(np.array([1, -1], dtype=np.int64), (ne, 1))
    edge_vertex_sign = np.tile(np.array([-1, 1], dtype=np.int64), (ne, 1))

    # per-cell orientation read off the cell's own traversal direction
    cell_edge_signs = []
    for i, vs in enumerate(cell_vertices):
        s = [1 if edge_vertices[e, 0] == vs[k] else -1 for k, e in enumerate(cell_edges[i])]
        cell_edge_signs.append(s)

    vertex_edges = [[] for _ in range(nv)]
    vertex_edge_signs = [[] for _ in range(nv)]
    for e, (tail, head) in enumerate(edge_vertices):
        vertex_edges[tail].append(e)
        vertex_edge_signs[tail].append(-1)
        vertex_edges[head].append(e)
        vertex_edge_signs[head].append(1)

    vertex_cells = [[] for _ in range(nv)]
    for i, vs in enumerate(cell_vertices):
        for v in vs:
            vertex_cells[v].append(i)
    vertex_cells = [
        _sort_ccw(geom, vertex_points[v], cs, cell_centers) for v, cs in enumerate(vertex_cells)
    ]

    # geometry ---------------------------------------------------------------
    c0, c1 = edge_cells.T
    tail, head = edge_vertices.T
    edge_points = geom.midpoint(cell_centers[c0], cell_centers[c1])
    le = geom.dist(vertex_points[tail], vertex_points[head])
    de = geom.dist(cell_centers[c0], cell_centers[c1])

    cell_edge_area, cell_vertex_area = [], []
    for i, vs in enumerate(cell_vertices):
        x = np.broadcast_to(cell_centers[i], (len(vs), cell_centers.shape[1]))
        va = vertex_points[vs]
        vb = vertex_points[np.roll(vs, -1)]
        pe = edge_points[cell_edges[i]]
        cell_edge_area.append(geom.tri_area(x, va, vb))
        before = geom.tri_area(x, edge_points[np.roll(cell_edges[i], 1)], va)
        after = geom.tri_area(x, va, pe)
        cell_vertex_area.append(before + after)
    cell_area = np.array([a.sum() for a in cell_edge_area])

    vertex_area = np.zeros(nv)
    for v, cs in enumerate(vertex_cells):
        ring = cell_centers[cs]
        x = np.broadcast_to(vertex_points[v], ring.shape)
        vertex_area[v] = geom.tri_area(x, ring, np.roll(ring, -1, axis=0)).sum()

    ortho = geom.orthogonality_defect(
        vertex_points[tail], vertex_points[head], cell_centers[c0], cell_centers[c1]
    )

    return Mesh(
        kind=kind,
        domain=geom.domain,
        params=dict(params),
        cell_centers=cell_centers,
        vertex_points=vertex_points,
        edge_points=edge_points,
        cell_vertices=_ragged(cell_vertices),
        cell_edges=_ragged(cell_edges),
        cell_edge_signs=_ragged(cell_edge_signs),
        edge_cells=edge_cells,
        edge_cell_sign=edge_cell_sign,
        edge_vertices=edge_vertices,
        edge_vertex_sign=edge_vertex_sign,
        vertex_edges=_ragged(vertex_edges),
        vertex_edge_signs=_ragged(vertex_edge_signs),
        vertex_cells=_ragged(vertex_cells),
        cell_area=cell_area,
        vertex_area=vertex_area,
        le=le,
        de=de,
        cell_edge_area=_ragged(cell_edge_area, float),
        cell_vertex_area=_ragged(cell_vertex_area, float),
        total_area=geom.area,
        orthogonality=float(ortho.max()) if len(ortho) else 0.0,
    )


def geometry_of(mesh: Mesh):
    p = mesh.params
    if mesh.domain == "sphere":
        return Sphere(p["radius"])
    return PeriodicPlane(p["b1"], p["b2"])


# ---------------------------------------------------------------------------
# builders


def build_square_mesh(nx: int, ny: int, Lx: float, Ly: float) -> Mesh:
    """Doubly periodic square mesh; dual vertices sit at the cell corners."""
    if nx < 3 or ny < 3:
        raise MeshError("square mesh needs nx, ny >= 3")
    geom = PeriodicPlane((Lx, 0.0), (0.0, Ly))
    dx, dy = Lx / nx, Ly / ny
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ix, iy = ix.ravel(), iy.ravel()
    centers = np.column_stack([(ix + 0.5) * dx, (iy + 0.5) * dy])
    verts = np.column_stack([ix * dx, iy * dy])

    def vid(a, b):
        return (b % ny) * nx + (a % nx)

    polys = [[vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)] for a, b in zip(ix, iy)]
    params = {"nx": nx, "ny": ny, "Lx": Lx, "Ly": Ly, "b1": list(geom.b1), "b2": list(geom.b2)}
    return assemble("square", geom, centers, verts, polys, params)


def _circumcenters(p):
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    d = 2.0 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1]) + c[:, 0] * (a[:, 1] - b[:, 1]))
    sa, sb, sc = (a**2).sum(1), (b**2).sum(1), (c**2).sum(1)
    ux = (sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])) / d
    uy = (sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])) / d
    return np.column_stack([ux, uy])


def _periodic_voronoi(geom: PeriodicPlane, seeds):
    """Voronoi cells of ``seeds`` on the torus: (vertex points, CCW polygons)."""
    n = len(seeds)
    shifts = [a * geom.b1 + b * geom.b2 for a, b in itertools.product((-1, 0, 1), repeat=2)]
    tiled = np.concatenate([seeds + s for s in shifts])
    tri = Delaunay(tiled)
    simp = tri.simplices
    cc = _circumcenters(tiled[simp])
    frac = geom.frac(cc) + np.array([1.3e-7 * np.pi, 0.7e-7 * np.e])
    keep = np.all((frac >= 0.0) & (frac < 1.0), axis=1)
    simp, cc = simp[keep], cc[keep]
    members = [[] for _ in range(n)]
    for t, s in enumerate(simp):
        for p in s:
            members[p % n].append(t)
    verts = geom.wrap(cc)
    polys = [_sort_ccw(geom, seeds[i], m, verts) for i, m in enumerate(members)]
    return verts, polys


def build_hex_mesh(n: int, L: float) -> Mesh:
    """Periodic rhombus of n x n regular hexagons with center spacing ``L``."""
    if n < 3:
        raise MeshError("hex mesh needs n >= 3")
    a1 = np.array([L, 0.0])
    a2 = np.array([0.5 * L, 0.5 * np.sqrt(3.0) * L])
    geom = PeriodicPlane(n * a1, n * a2)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    seeds = geom.wrap(np.outer(i.ravel() + 0.5, a1) + np.outer(j.ravel() + 0.5, a2))
    verts, polys = _periodic_voronoi(geom, seeds)
    params = {"n": n, "L": L, "b1": list(geom.b1), "b2": list(geom.b2)}
    return assemble("hex", geom, seeds, verts, polys, params)


def build_voronoi_mesh(n_seeds: int, Lx: float, Ly: float, seed: int, lloyd_iterations: int = 10) -> Mesh:
    """Periodic Voronoi mesh from random seeds after a fixed number of Lloyd sweeps."""
    if n_seeds < 9:
        raise MeshError("voronoi mesh needs at least 9 seeds")
    geom = PeriodicPlane((Lx, 0.0), (0.0, Ly))
    rng = np.random.default_rng(seed)
    pts = rng.random((n_seeds, 2)) * [Lx, Ly]
    for _ in range(lloyd_iterations):
        verts, polys = _periodic_voronoi(geom, pts)
        new = np.empty_like(pts)
        for i, vs in enumerate(polys):
            d = geom.disp(pts[i], verts[vs])
            d2 = np.roll(d, -1, axis=0)
            cr = d[:, 0] * d2[:, 1] - d[:, 1] * d2[:, 0]
            cen = ((d + d2) * cr[:, None]).sum(0) / (3.0 * cr.sum())
            new[i] = pts[i] + cen
        pts = geom.wrap(new)
    verts, polys = _periodic_voronoi(geom, pts)
    params = {"n_seeds": n_seeds, "Lx": Lx, "Ly": Ly, "seed": seed, "b1": list(geom.b1), "b2": list(geom.b2)}
    return assemble("voronoi", geom, pts, verts, polys, params)


def _icosphere(level: int):
    t = (1.0 + np.sqrt(5.0)) / 2.0
    pts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
           (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    pts = [np.array(p, float) / np.linalg.norm(p) for p in pts]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                cache[key] = len(pts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    pts = np.array(pts)
    faces = np.array(faces)
    p = pts[faces]
    outward = np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 0]) > 0
    faces[~outward] = faces[~outward][:, ::-1]
    return pts, faces


def build_icosahedral_mesh(level: int, radius: float = 1.0, cap: int = ICOS_LEVEL_CAP) -> Mesh:
    """Spherical hexagonal-pentagonal Voronoi mesh dual to a refined icosahedron."""
    if level < 0 or level > cap:
        raise MeshError(f"icosahedral level must be in [0, {cap}]")
    geom = Sphere(radius)
    pts, faces = _icosphere(level)
    p = pts[faces]
    cc = geom.unit(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
    members = [[] for _ in range(len(pts))]
    for t, f in enumerate(faces):
        for v in f:
            members[v].append(t)
    centers = radius * pts
    verts = radius * cc
    polys = [_sort_ccw(geom, centers[i], m, verts) for i, m in enumerate(members)]
    return assemble("icos", geom, centers, verts, polys, {"level": level, "radius": radius})


def build_mesh(kind: str, **kw) -> Mesh:
    builders = {
        "square": build_square_mesh,
        "hex": build_hex_mesh,
        "voronoi": build_voronoi_mesh,
        "icos": build_icosahedral_mesh,
    }
    if kind not in builders:
        raise MeshError(f"unknown mesh kind {kind!r}")
    return builders[kind](**kw)
