"""Polygonal meshes of the unit square: representation, validity checks,
regularity report, file round-trip, and the six mesh families used in the
numerical studies:

    a - randomly perturbed quadrilateral meshes
    b - general polygonal (Lloyd-relaxed Voronoi) meshes
    c - concave element meshes
    d - diagonal triangle meshes
    e - criss-cross triangle meshes
    f - square meshes
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from . import geometry


class MeshError(ValueError):
    """Invalid mesh input (duplicate vertices, bad loops, non-manifold edges)."""


class MeshIOError(MeshError):
    """Malformed mesh file."""


@dataclass(frozen=True)
class Edge:
    v0: int
    v1: int
    normal: np.ndarray  # unit normal, orientation fixed once per mesh
    length: float
    on_boundary: bool


@dataclass(frozen=True)
class Element:
    vertex_loop: np.ndarray  # CCW vertex ids
    edge_ids: np.ndarray  # edge i connects loop[i] -> loop[i+1]
    outward_signs: np.ndarray  # outward normal = sign * edge.normal
    area: float
    centroid: np.ndarray
    diameter: float


@dataclass
class PolygonalMesh:
    vertices: np.ndarray  # (n, 2)
    edges: list[Edge]
    elements: list[Element]
    h: float
    family_tag: str | None = None
    seed: int | None = None
    boundary_vertices: np.ndarray = field(default=None, repr=False)  # bool mask

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_coords(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e].vertex_loop]


@dataclass(frozen=True)
class MeshQualityReport:
    rho_edge: float  # min over elements and edges of h_E / h_P
    star_shaped_ok: bool
    kernel_radius_ratio: float  # min over elements of r_kernel / h_P


def build_mesh(
    vertices,
    cells,
    family_tag: str | None = None,
    seed: int | None = None,
) -> PolygonalMesh:
    """Assemble a conforming polygonal mesh from vertices and vertex loops.

    Loops are normalized to CCW orientation.  Rejects duplicate vertices
    (within 1e-12), self-intersecting loops, and non-manifold edges.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(verts)):
        raise MeshError("non-finite vertex coordinates")
    if len(verts) >= 2:
        pairs = cKDTree(verts).query_pairs(1e-12)
        if pairs:
            i, j = sorted(pairs)[0]
            raise MeshError(f"duplicate vertices {i} and {j}")

    nv = len(verts)
    edge_index: dict[tuple[int, int], int] = {}
    edge_count: list[int] = []
    edge_pairs: list[tuple[int, int]] = []
    elements: list[Element] = []
    loops = []

    for ci, loop in enumerate(cells):
        loop = np.asarray(loop, dtype=int)
        if len(loop) < 3:
            raise MeshError(f"cell {ci} has fewer than 3 vertices")
        if np.any(loop < 0) or np.any(loop >= nv):
            raise MeshError(f"cell {ci} references an invalid vertex id")
        if len(np.unique(loop)) != len(loop):
            raise MeshError(f"cell {ci} repeats a vertex")
        coords = verts[loop]
        if geometry.signed_area(coords) < 0:
            loop = loop[::-1].copy()
            coords = verts[loop]
        if not geometry.is_simple_polygon(coords):
            raise MeshError(f"cell {ci} is self-intersecting")
        loops.append(loop)

    for ci, loop in enumerate(loops):
        n = len(loop)
        coords = verts[loop]
        eids = np.empty(n, dtype=int)
        signs = np.empty(n, dtype=int)
        for i in range(n):
            a, b = int(loop[i]), int(loop[(i + 1) % n])
            key = (min(a, b), max(a, b))
            if key not in edge_index:
                edge_index[key] = len(edge_pairs)
                edge_pairs.append(key)
                edge_count.append(0)
            eid = edge_index[key]
            edge_count[eid] += 1
            if edge_count[eid] > 2:
                raise MeshError(f"edge {key} shared by more than 2 elements")
            eids[i] = eid
            # canonical tangent goes key[0] -> key[1]; the CCW outward normal
            # of the traversal equals the global normal iff orientations match
            signs[i] = 1 if (a, b) == key else -1
        area, centroid = geometry.polygon_area_centroid(coords)
        if area <= 0:
            raise MeshError(f"cell {ci} has nonpositive area")
        elements.append(
            Element(
                vertex_loop=loop,
                edge_ids=eids,
                outward_signs=signs,
                area=area,
                centroid=centroid,
                diameter=geometry.polygon_diameter(coords),
            )
        )

    edges = []
    boundary_vertices = np.zeros(nv, dtype=bool)
    for eid, (a, b) in enumerate(edge_pairs):
        t = verts[b] - verts[a]
        length = float(np.linalg.norm(t))
        t = t / length
        normal = np.array([t[1], -t[0]])
        on_boundary = edge_count[eid] == 1
        if on_boundary:
            boundary_vertices[a] = True
            boundary_vertices[b] = True
        edges.append(Edge(a, b, normal, length, on_boundary))

    h = max(el.diameter for el in elements)
    return PolygonalMesh(
        vertices=verts,
        edges=edges,
        elements=elements,
        h=h,
        family_tag=family_tag,
        seed=seed,
        boundary_vertices=boundary_vertices,
    )


def check_regularity(mesh: PolygonalMesh) -> MeshQualityReport:
    """Edge-length ratio and exact star-shapedness via half-plane kernels."""
    rho_edge = np.inf
    kernel_ratio = np.inf
    star_ok = True
    for el in mesh.elements:
        for eid in el.edge_ids:
            rho_edge = min(rho_edge, mesh.edges[eid].length / el.diameter)
        kernel = geometry.polygon_kernel(mesh.vertices[el.vertex_loop])
        _, r = geometry.inscribed_disk(kernel)
        if r <= 0:
            star_ok = False
            kernel_ratio = 0.0
        else:
            kernel_ratio = min(kernel_ratio, r / el.diameter)
    return MeshQualityReport(float(rho_edge), star_ok, float(kernel_ratio))


# ---------------------------------------------------------------------------
# mesh families


def generate_family(family: str, level: int, seed: int = 0) -> PolygonalMesh:
    """Level-`level` mesh of the unit square from one of the six families.

    Each level halves the mesh size of the previous one.  Deterministic for
    fixed (family, level, seed).
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    builders = {
        "a": _family_random_quads,
        "b": _family_voronoi,
        "c": _family_concave,
        "d": _family_diagonal,
        "e": _family_crisscross,
        "f": _family_squares,
    }
    if family not in builders:
        raise ValueError(f"unknown mesh family {family!r}")
    return builders[family](level, seed)


def _grid_vertices(m: int) -> np.ndarray:
    xs = np.linspace(0.0, 1.0, m + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _grid_vid(i: int, j: int, m: int) -> int:
    return j * (m + 1) + i


def _family_squares(level: int, seed: int) -> PolygonalMesh:
    m = 2**level
    verts = _grid_vertices(m)
    cells = []
    for j in range(m):
        for i in range(m):
            cells.append(
                [
                    _grid_vid(i, j, m),
                    _grid_vid(i + 1, j, m),
                    _grid_vid(i + 1, j + 1, m),
                    _grid_vid(i, j + 1, m),
                ]
            )
    return build_mesh(verts, cells, family_tag="f", seed=seed)


def _family_diagonal(level: int, seed: int) -> PolygonalMesh:
    m = 2**level
    verts = _grid_vertices(m)
    cells = []
    for j in range(m):
        for i in range(m):
            v00 = _grid_vid(i, j, m)
            v10 = _grid_vid(i + 1, j, m)
            v11 = _grid_vid(i + 1, j + 1, m)
            v01 = _grid_vid(i, j + 1, m)
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return build_mesh(verts, cells, family_tag="d", seed=seed)


def _family_crisscross(level: int, seed: int) -> PolygonalMesh:
    m = 2**level
    verts = _grid_vertices(m)
    centers = []
    h = 1.0 / m
    for j in range(m):
        for i in range(m):
            centers.append([(i + 0.5) * h, (j + 0.5) * h])
    verts = np.vstack([verts, centers])
    cells = []
    for j in range(m):
        for i in range(m):
            v00 = _grid_vid(i, j, m)
            v10 = _grid_vid(i + 1, j, m)
            v11 = _grid_vid(i + 1, j + 1, m)
            v01 = _grid_vid(i, j + 1, m)
            vc = (m + 1) ** 2 + j * m + i
            cells.append([v00, v10, vc])
            cells.append([v10, v11, vc])
            cells.append([v11, v01, vc])
            cells.append([v01, v00, vc])
    return build_mesh(verts, cells, family_tag="e", seed=seed)


# target max element diameter of family (a) in units of the cell size;
# pinning it makes every refinement halve h exactly
_QUAD_DIAM_TARGET = 1.9


def _family_random_quads(level: int, seed: int) -> PolygonalMesh:
    m = 2 ** (level + 1)
    h = 1.0 / m
    verts = _grid_vertices(m)
    rng = np.random.default_rng([seed, level, 0xA])
    interior = np.ones(len(verts), dtype=bool)
    for j in range(m + 1):
        for i in range(m + 1):
            if i in (0, m) or j in (0, m):
                interior[_grid_vid(i, j, m)] = False
    shift = np.where(
        interior[:, None], rng.uniform(-0.25 * h, 0.25 * h, size=(len(verts), 2)), 0.0
    )
    cells = []
    for j in range(m):
        for i in range(m):
            cells.append(
                [
                    _grid_vid(i, j, m),
                    _grid_vid(i + 1, j, m),
                    _grid_vid(i + 1, j + 1, m),
                    _grid_vid(i, j + 1, m),
                ]
            )
    cells_arr = np.array(cells)

    # one central cell is stretched along its diagonal to the target
    # diameter; its diagonal vertices carry a fixed displacement and are
    # excluded from the random field
    c = m // 2
    va, vc = _grid_vid(c, c, m), _grid_vid(c + 1, c + 1, m)
    pin = (_QUAD_DIAM_TARGET / np.sqrt(2.0) - 1.0) / 2.0  # ~0.172 < 0.25
    shift[va] = (-pin * h, -pin * h)
    shift[vc] = (pin * h, pin * h)
    free = np.ones(len(verts), dtype=bool)
    free[[va, vc]] = False

    def max_diam(t: float) -> float:
        pts = verts + np.where(free[:, None], t * shift, shift)
        best = 0.0
        for quad in pts[cells_arr]:
            best = max(best, geometry.polygon_diameter(quad))
        return best

    target = _QUAD_DIAM_TARGET * h
    t = 1.0
    if max_diam(1.0) > target * (1.0 + 1e-12):
        lo, hi = 0.0, 1.0
        for _ in range(60):
            t = 0.5 * (lo + hi)
            if max_diam(t) > target * (1.0 + 1e-12):
                hi = t
            else:
                lo = t
        t = lo
    verts = verts + np.where(free[:, None], t * shift, shift)
    return build_mesh(verts, cells, family_tag="a", seed=seed)


# template for one concave pair: a square split by a zigzag cut running from
# the bottom edge midpoint to the top edge midpoint; both halves get exactly
# one reflex vertex (at a bend of the cut)
_CONCAVE_CUT = [(0.5, 0.0), (0.7, 0.35), (0.3, 0.65), (0.5, 1.0)]


def _family_concave(level: int, seed: int) -> PolygonalMesh:
    m = 2**level
    h = 1.0 / m
    key_scale = 20  # all template coordinates are multiples of 1/20
    vid: dict[tuple[int, int], int] = {}
    verts: list[tuple[float, float]] = []

    def add(i, j, x, y):
        key = (round((i + x) * key_scale), round((j + y) * key_scale))
        if key not in vid:
            vid[key] = len(verts)
            verts.append((key[0] * h / key_scale, key[1] * h / key_scale))
        return vid[key]

    p0, p1, p2, p3 = _CONCAVE_CUT
    left = [(0.0, 0.0), p0, p1, p2, p3, (0.0, 1.0)]
    right = [p0, (1.0, 0.0), (1.0, 1.0), p3, p2, p1]
    cells = []
    for j in range(m):
        for i in range(m):
            cells.append([add(i, j, x, y) for x, y in left])
            cells.append([add(i, j, x, y) for x, y in right])
    return build_mesh(np.array(verts), cells, family_tag="c", seed=seed)


def _family_voronoi(level: int, seed: int) -> PolygonalMesh:
    # stratified jittered start, then Lloyd: keeps the cell-size spread small
    # enough that refinement halves the mesh size
    s = 2 ** (level + 1)
    rng = np.random.default_rng([seed, level, 0xB])
    xs = (np.arange(s) + 0.5) / s
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    sites = np.column_stack([X.ravel(), Y.ravel()])
    sites = sites + rng.uniform(-0.35 / s, 0.35 / s, size=sites.shape)
    for _ in range(15):  # Lloyd relaxation
        cells = _voronoi_cells(sites)
        sites = np.array([geometry.polygon_area_centroid(c)[1] for c in cells])
    vor, regions = _voronoi_regions(sites)
    return _mesh_from_voronoi(vor, regions, sites, seed)


def _mirror_sites(sites: np.ndarray) -> np.ndarray:
    sx, sy = sites[:, 0], sites[:, 1]
    mirrors = [
        np.column_stack([-sx, sy]),
        np.column_stack([2.0 - sx, sy]),
        np.column_stack([sx, -sy]),
        np.column_stack([sx, 2.0 - sy]),
    ]
    return np.vstack([sites] + mirrors)


def _voronoi_regions(sites: np.ndarray):
    """Voronoi diagram where the cells of `sites` exactly tile [0,1]^2.

    Mirroring the sites across the four walls bounds every original cell
    by the walls themselves.
    """
    vor = Voronoi(_mirror_sites(sites))
    regions = []
    for i in range(len(sites)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError("unbounded Voronoi cell; degenerate site layout")
        regions.append(region)
    return vor, regions


def _voronoi_cells(sites: np.ndarray) -> list[np.ndarray]:
    vor, regions = _voronoi_regions(sites)
    cells = []
    for i, region in enumerate(regions):
        pts = vor.vertices[region]
        ang = np.arctan2(pts[:, 1] - sites[i, 1], pts[:, 0] - sites[i, 0])
        cells.append(pts[np.argsort(ang)])
    return cells


def _snap_to_square(verts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    verts = verts.copy()
    for axis in (0, 1):
        verts[np.abs(verts[:, axis]) < tol, axis] = 0.0
        verts[np.abs(verts[:, axis] - 1.0) < tol, axis] = 1.0
    return verts


def _vertex_priority(p: np.ndarray) -> int:
    on = int(p[0] in (0.0, 1.0)) + int(p[1] in (0.0, 1.0))
    return on  # 2: corner, 1: wall, 0: interior


def _mesh_from_voronoi(vor, regions, sites, seed) -> PolygonalMesh:
    used = sorted({v for region in regions for v in region})
    remap = {v: i for i, v in enumerate(used)}
    verts = _snap_to_square(vor.vertices[used])
    loops = []
    for i, region in enumerate(regions):
        ids = np.array([remap[v] for v in region])
        pts = verts[ids]
        ang = np.arctan2(pts[:, 1] - sites[i, 1], pts[:, 0] - sites[i, 0])
        loops.append(ids[np.argsort(ang)])

    # merge coincident vertices, then collapse short edges until the mesh
    # comfortably satisfies the edge-length regularity bound
    target = 1.0 / np.sqrt(len(sites))
    verts, loops = _merge_vertices(verts, loops, 1e-9)
    for _ in range(4):
        short = _shortest_relative_edge(verts, loops)
        if short >= 0.08:
            break
        verts, loops = _merge_vertices(verts, loops, 0.13 * target)
    mesh = build_mesh(verts, loops, family_tag="b", seed=seed)
    return mesh


def _shortest_relative_edge(verts, loops) -> float:
    worst = np.inf
    for loop in loops:
        coords = verts[loop]
        diam = geometry.polygon_diameter(coords)
        lens = np.linalg.norm(np.roll(coords, -1, axis=0) - coords, axis=1)
        worst = min(worst, lens.min() / diam)
    return worst


def _merge_vertices(verts, loops, tol):
    parent = list(range(len(verts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pairs = cKDTree(verts).query_pairs(tol)
    for a, b in sorted(pairs):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[int]] = {}
    for i in range(len(verts)):
        groups.setdefault(find(i), []).append(i)
    new_pos = {}
    rep_of = {}
    for root, members in groups.items():
        best = max(members, key=lambda i: (_vertex_priority(verts[i]), -i))
        for i in members:
            rep_of[i] = root
        new_pos[root] = verts[best]

    roots = sorted(groups)
    new_index = {root: i for i, root in enumerate(roots)}
    new_verts = np.array([new_pos[root] for root in roots])
    new_loops = []
    for loop in loops:
        seq = [new_index[rep_of[int(v)]] for v in loop]
        dedup = [v for i, v in enumerate(seq) if v != seq[(i - 1) % len(seq)]]
        if len(dedup) < 3:
            raise MeshError("vertex merge collapsed a cell")
        new_loops.append(np.array(dedup))
    return new_verts, new_loops


# ---------------------------------------------------------------------------
# mesh file round-trip

_MESH_FORMAT_VERSION = 1


def mesh_io_write(path, mesh: PolygonalMesh) -> None:
    """Write the mesh as versioned JSON with 17-significant-digit floats."""

    def fmt(x: float) -> str:
        return format(x, ".17g")

    lines = ["{", f'  "version": {_MESH_FORMAT_VERSION},']
    if mesh.family_tag is not None:
        lines.append(f'  "family_tag": {json.dumps(mesh.family_tag)},')
    if mesh.seed is not None:
        lines.append(f'  "seed": {mesh.seed},')
    lines.append('  "vertices": [')
    for i, (x, y) in enumerate(mesh.vertices):
        comma = "," if i + 1 < len(mesh.vertices) else ""
        lines.append(f"    [{fmt(x)}, {fmt(y)}]{comma}")
    lines.append("  ],")
    lines.append('  "cells": [')
    for i, el in enumerate(mesh.elements):
        comma = "," if i + 1 < len(mesh.elements) else ""
        ids = ", ".join(str(int(v)) for v in el.vertex_loop)
        lines.append(f"    [{ids}]{comma}")
    lines.append("  ]")
    lines.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def mesh_io_read(path) -> PolygonalMesh:
    """Read a mesh file written by :func:`mesh_io_write`.

    CW cell loops are normalized to CCW; malformed files raise MeshIOError
    with line context.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshIOError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise MeshIOError("mesh file must contain a JSON object")
    for key in ("version", "vertices", "cells"):
        if key not in doc:
            raise MeshIOError(f"missing required field {key!r}")
    if doc["version"] != _MESH_FORMAT_VERSION:
        raise MeshIOError(f"unsupported mesh format version {doc['version']!r}")
    try:
        return build_mesh(
            np.asarray(doc["vertices"], dtype=float),
            doc["cells"],
            family_tag=doc.get("family_tag"),
            seed=doc.get("seed"),
        )
    except MeshIOError:
        raise
    except (MeshError, TypeError, ValueError) as exc:
        raise MeshIOError(str(exc)) from None
