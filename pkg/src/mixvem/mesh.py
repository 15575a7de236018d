"""Polygonal meshes for the unit square, (-1, 1)^2 and the L-shaped domain.

A mesh is a set of counterclockwise vertex loops.  Edges are stored once with
canonical orientation ``v0 < v1``; the canonical normal of an edge is its
tangent ``x[v1] - x[v0]`` rotated clockwise, and each cell records a sign
``+1`` when that normal points out of the cell.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

BOUNDARY_TOL = 1e-10
DEGENERATE_AREA = 1e-14


class MeshError(ValueError):
    """Raised for inadmissible generator arguments or invalid meshes."""


class Domain(str, enum.Enum):
    UNIT_SQUARE = "unit-square"
    SYM_SQUARE = "sym-square"
    LSHAPE = "lshape"

    @property
    def area(self) -> float:
        return {"unit-square": 1.0, "sym-square": 4.0, "lshape": 0.75}[self.value]


class MeshFamily(str, enum.Enum):
    T1 = "t1"  # triangles
    T2 = "t2"  # squares
    T3 = "t3"  # perturbed squares
    T4 = "t4"  # trapezoids
    T5 = "t5"  # CVT hexagons on the L-shape
    T6 = "t6"  # triangles on the L-shape
    T7 = "t7"  # squares on the L-shape


class BoundaryTag(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    UNTAGGED = 3


class BcSpec(str, enum.Enum):
    DIRICHLET = "dirichlet"
    MIXED = "mixed"  # Dirichlet on y = +-1, Neumann on x = +-1


_SQUARE_FAMILIES = {MeshFamily.T1, MeshFamily.T2, MeshFamily.T3, MeshFamily.T4}
_LSHAPE_FAMILIES = {MeshFamily.T5, MeshFamily.T6, MeshFamily.T7}


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PolygonalMesh:
    """Immutable polygonal mesh.

    ``cells[k]`` is the counterclockwise vertex loop of cell ``k``; local edge
    ``i`` joins ``cells[k][i]`` to ``cells[k][i + 1]`` and is the global edge
    ``cell_edges[k][i]`` with orientation sign ``cell_signs[k][i]``.
    """

    vertices: np.ndarray
    edges: np.ndarray
    edge_tags: np.ndarray
    cells: tuple
    cell_edges: tuple
    cell_signs: tuple
    domain: Domain
    family: MeshFamily | None = None
    refinement: int = 0
    _edge_cells: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def edge_cells(self) -> np.ndarray:
        """(n_edges, 2) array of adjacent cells, -1 where absent."""
        return self._edge_cells

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_cells[:, 1] < 0)

    def cell_vertices(self, k: int) -> np.ndarray:
        return self.vertices[list(self.cells[k])]

    def areas(self) -> np.ndarray:
        return np.array([polygon_area(self.cell_vertices(k)) for k in range(self.n_cells)])

    def diameters(self) -> np.ndarray:
        return np.array([_diameter(self.cell_vertices(k)) for k in range(self.n_cells)])

    def h(self) -> float:
        """Mesh size, the largest cell diameter."""
        return float(self.diameters().max())

    def count_tags(self) -> dict:
        tags, counts = np.unique(self.edge_tags[self.boundary_edges], return_counts=True)
        return {BoundaryTag(t).name: int(c) for t, c in zip(tags, counts)}

    @classmethod
    def from_cells(cls, vertices, cells: Sequence[Sequence[int]], domain: Domain,
                   family: MeshFamily | None = None, refinement: int = 0,
                   edge_tags=None) -> "PolygonalMesh":
        vertices = np.asarray(vertices, dtype=float)
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        loops = []
        for loop in cells:
            loop = [int(v) for v in loop]
            if polygon_signed_area(vertices[loop]) < 0:
                loop = loop[::-1]
            if polygon_signed_area(vertices[loop]) <= DEGENERATE_AREA:
                raise MeshError(f"degenerate cell {loop}")
            loops.append(tuple(loop))

        edge_index: dict = {}
        edges, cell_edges, cell_signs = [], [], []
        owners: list = []
        for k, loop in enumerate(loops):
            ids, sg = [], []
            n = len(loop)
            for i in range(n):
                a, b = loop[i], loop[(i + 1) % n]
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = edge_index[key] = len(edges)
                    edges.append(key)
                    owners.append([k, -1])
                else:
                    if owners[e][1] >= 0:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    owners[e][1] = k
                ids.append(e)
                sg.append(1 if a < b else -1)
            cell_edges.append(tuple(ids))
            cell_signs.append(tuple(sg))

        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        owners = np.array(owners, dtype=np.int64).reshape(-1, 2)
        if edge_tags is None:
            edge_tags = np.where(owners[:, 1] < 0, BoundaryTag.UNTAGGED, BoundaryTag.INTERIOR)
        edge_tags = np.asarray(edge_tags, dtype=np.int8)
        return cls(_frozen(vertices), _frozen(edges), _frozen(edge_tags), tuple(loops),
                   tuple(cell_edges), tuple(cell_signs), Domain(domain), family,
                   int(refinement), _frozen(owners))

    def with_tags(self, edge_tags) -> "PolygonalMesh":
        return replace(self, edge_tags=_frozen(np.asarray(edge_tags, dtype=np.int8)))


def polygon_signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(xy: np.ndarray) -> float:
    return abs(polygon_signed_area(xy))


def _diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


# ----------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class CellGeometry:
    """Geometric data of one counterclockwise polygon.

    Per-edge arrays follow the vertex loop: edge ``i`` runs from vertex ``i``
    to vertex ``i + 1``.
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    first_moments: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    midpoints: np.ndarray
    offsets: np.ndarray     # midpoints minus centroid, computed in local coordinates

    @property
    def n_edges(self) -> int:
        return len(self.lengths)


def polygon_geometry(xy) -> CellGeometry:
    xy = np.asarray(xy, dtype=float)
    # local coordinates avoid cancellation for small cells far from the origin
    o = xy.mean(axis=0)
    loc = xy - o
    nxt = np.roll(loc, -1, axis=0)
    cross = loc[:, 0] * nxt[:, 1] - nxt[:, 0] * loc[:, 1]
    area = 0.5 * cross.sum()
    if area <= DEGENERATE_AREA:
        raise MeshError(f"degenerate or clockwise cell (signed area {area:.3e})")
    cen_loc = np.array([((loc[:, 0] + nxt[:, 0]) * cross).sum(),
                        ((loc[:, 1] + nxt[:, 1]) * cross).sum()]) / (6.0 * area)
    t = nxt - loc
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    mid_loc = 0.5 * (loc + nxt)
    return CellGeometry(xy, float(area), cen_loc + o, _diameter(xy), area * (cen_loc + o),
                        lengths, normals, mid_loc + o, mid_loc - cen_loc)


def cell_geometry(mesh: PolygonalMesh, cell: int) -> CellGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell index {cell} out of range")
    return polygon_geometry(mesh.cell_vertices(cell))


# ----------------------------------------------------------------------------
# quality


@dataclass(frozen=True)
class QualityReport:
    min_edge_to_diameter: float
    min_inradius_to_diameter: float
    all_convex: bool


def is_convex(xy: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.roll(xy, -1, axis=0) - xy
    b = np.roll(a, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return bool(np.all(cross >= -tol * np.abs(a).max() ** 2))


def _inradius_proxy(g: CellGeometry) -> float:
    # distance from centroid to the nearest boundary segment
    p = g.vertices
    q = np.roll(p, -1, axis=0)
    d = q - p
    s = np.clip(((g.centroid - p) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
    closest = p + s[:, None] * d
    return float(np.hypot(*(closest - g.centroid).T).min())


def quality(mesh: PolygonalMesh) -> QualityReport:
    e2d, r2d, convex = np.inf, np.inf, True
    for k in range(mesh.n_cells):
        g = cell_geometry(mesh, k)
        e2d = min(e2d, g.lengths.min() / g.diameter)
        r2d = min(r2d, _inradius_proxy(g) / g.diameter)
        convex = convex and is_convex(g.vertices)
    return QualityReport(float(e2d), float(r2d), convex)


# ----------------------------------------------------------------------------
# generators


def _grid_nodes(n, lo, hi):
    t = np.linspace(lo, hi, n + 1)
    x, y = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([x.ravel(), y.ravel()])


def _grid_cells(n, keep=None, triangles=False):
    cells = []
    for j in range(n):
        for i in range(n):
            if keep is not None and not keep(i, j):
                continue
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            if triangles:
                cells += [(a, b, c), (a, c, d)]
            else:
                cells.append((a, b, c, d))
    return cells


def _compact(vertices, cells):
    used = np.unique(np.concatenate([np.asarray(c) for c in cells]))
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], [tuple(remap[list(c)]) for c in cells]


def _bounds(domain: Domain):
    return (-1.0, 1.0) if domain is Domain.SYM_SQUARE else (0.0, 1.0)


def _trapezoids(n, lo, hi):
    # n x n trapezoids similar to (0,0),(1/2,0),(1/2,2/3),(0,1/3); 2x2 macro pattern
    if n % 2:
        raise MeshError("T4 meshes need an even N")
    s = (hi - lo) / n
    nodes, cells = {}, []

    def node(i, j):
        # column line i, row line j; odd rows are the slanted cuts
        y = j * s
        if j % 2:
            y += (-s / 3) if i % 2 == 0 else (s / 3)
        key = (i, j)
        if key not in nodes:
            nodes[key] = (len(nodes), (lo + i * s, lo + y))
        return nodes[key][0]

    for j in range(n):
        for i in range(n):
            cells.append((node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)))
    xy = np.zeros((len(nodes), 2))
    for idx, p in nodes.values():
        xy[idx] = p
    return xy, cells


def generate(domain, family, n: int, seed: int = 0) -> PolygonalMesh:
    """Build a mesh of ``family`` with ``n`` elements per unit side."""
    domain, family = Domain(domain), MeshFamily(family)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"N must be a positive integer, got {n!r}")
    if family in _LSHAPE_FAMILIES and domain is not Domain.LSHAPE:
        raise MeshError(f"family {family.value} is only defined on the L-shaped domain")
    if family in _SQUARE_FAMILIES and domain is Domain.LSHAPE:
        raise MeshError(f"family {family.value} is only defined on square domains")
    lo, hi = _bounds(domain)

    if family in (MeshFamily.T1, MeshFamily.T2, MeshFamily.T3):
        xy = _grid_nodes(n, lo, hi)
        if family is MeshFamily.T3:
            xy = _perturb(xy, n, (hi - lo) / n, seed)
        cells = _grid_cells(n, triangles=family is MeshFamily.T1)
    elif family is MeshFamily.T4:
        xy, cells = _trapezoids(n, lo, hi)
    elif family in (MeshFamily.T6, MeshFamily.T7):
        if n % 2:
            raise MeshError("L-shape meshes need an even N so the re-entrant corner is a node")
        xy = _grid_nodes(n, 0.0, 1.0)
        cells = _grid_cells(n, keep=lambda i, j: i < n // 2 or j < n // 2,
                            triangles=family is MeshFamily.T6)
        xy, cells = _compact(xy, cells)
    else:
        from .cvt import lshape_cvt
        xy, cells = lshape_cvt(n, seed)
    return PolygonalMesh.from_cells(xy, cells, domain, family, n)


def _perturb(xy, n, h, seed):
    rng = np.random.default_rng(seed)
    offset = rng.uniform(-0.2 * h, 0.2 * h, size=xy.shape)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    i, j = i.ravel(), j.ravel()
    fixed = (i == 0) | (j == 0) | (i == n) | (j == n)
    if n % 2 == 0:
        fixed |= (i == n // 2) & (j == n // 2)
    offset[fixed] = 0.0
    return xy + offset


# ----------------------------------------------------------------------------
# boundary tagging


def _on_boundary(p, domain: Domain) -> bool:
    x, y = p
    if domain is Domain.LSHAPE:
        sides = [abs(x) < BOUNDARY_TOL, abs(y) < BOUNDARY_TOL,
                 abs(x - 1) < BOUNDARY_TOL and y <= 0.5 + BOUNDARY_TOL,
                 abs(y - 1) < BOUNDARY_TOL and x <= 0.5 + BOUNDARY_TOL,
                 abs(x - 0.5) < BOUNDARY_TOL and y >= 0.5 - BOUNDARY_TOL,
                 abs(y - 0.5) < BOUNDARY_TOL and x >= 0.5 - BOUNDARY_TOL]
        return any(sides)
    lo, hi = _bounds(domain)
    return min(abs(x - lo), abs(x - hi), abs(y - lo), abs(y - hi)) < BOUNDARY_TOL


def tag_boundary(mesh: PolygonalMesh, bc) -> PolygonalMesh:
    """Return a copy of ``mesh`` with every boundary edge tagged for ``bc``."""
    bc = BcSpec(bc)
    if bc is BcSpec.MIXED and mesh.domain is not Domain.SYM_SQUARE:
        raise MeshError("mixed boundary conditions are defined on (-1, 1)^2 only")
    tags = np.array(mesh.edge_tags, dtype=np.int8)
    for e in mesh.boundary_edges:
        p, q = mesh.vertices[mesh.edges[e]]
        if not (_on_boundary(p, mesh.domain) and _on_boundary(q, mesh.domain)
                and _on_boundary(0.5 * (p + q), mesh.domain)):
            raise MeshError(f"boundary edge {e} does not lie on the domain boundary")
        tag = BoundaryTag.DIRICHLET
        if bc is BcSpec.MIXED and abs(abs(p[0]) - 1) < BOUNDARY_TOL and abs(abs(q[0]) - 1) < BOUNDARY_TOL:
            tag = BoundaryTag.NEUMANN
        tags[e] = tag
    return mesh.with_tags(tags)


# ----------------------------------------------------------------------------
# plain-text I/O

_TAG_NAMES = {BoundaryTag.INTERIOR: "interior", BoundaryTag.DIRICHLET: "dirichlet",
              BoundaryTag.NEUMANN: "neumann", BoundaryTag.UNTAGGED: "untagged"}
_TAG_VALUES = {v: k for k, v in _TAG_NAMES.items()}


def write_mesh(mesh: PolygonalMesh, path) -> None:
    lines = ["poly-mesh v1", f"{mesh.domain.value} {mesh.family.value if mesh.family else '-'} {mesh.refinement}",
             str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_edges))
    lines += [f"{a} {b} {_TAG_NAMES[BoundaryTag(t)]}" for (a, b), t in zip(mesh.edges.tolist(), mesh.edge_tags)]
    lines.append(str(mesh.n_cells))
    lines += [" ".join(map(str, c)) for c in mesh.cells]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> PolygonalMesh:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows or rows[0] != ["poly-mesh", "v1"]:
        raise MeshError(f"{path}: not a poly-mesh v1 file")
    domain, fam, refinement = rows[1]
    pos = 2
    nv = int(rows[pos][0])
    xy = np.array([[float(a), float(b)] for a, b in rows[pos + 1:pos + 1 + nv]])
    pos += 1 + nv
    ne = int(rows[pos][0])
    edge_rows = rows[pos + 1:pos + 1 + ne]
    pos += 1 + ne
    nc = int(rows[pos][0])
    cells = [tuple(int(v) for v in r) for r in rows[pos + 1:pos + 1 + nc]]
    mesh = PolygonalMesh.from_cells(xy, cells, Domain(domain),
                                    None if fam == "-" else MeshFamily(fam), int(refinement))
    try:
        tag_of = {(int(a), int(b)): _TAG_VALUES[t] for a, b, t in edge_rows}
    except (KeyError, ValueError) as exc:
        raise MeshError(f"{path}: bad edge record ({exc})") from exc
    if len(tag_of) != mesh.n_edges or not all(tuple(e) in tag_of for e in mesh.edges.tolist()):
        raise MeshError(f"{path}: edge list does not match cells")
    tags = np.array([tag_of[tuple(e)] for e in mesh.edges.tolist()], dtype=np.int8)
    return mesh.with_tags(tags)
