"""Centroidal Voronoi (Lloyd-relaxed) hexagon-dominant meshes of the L-shape.

The L-shape is symmetric about ``y = x`` and the generators are kept mirror
symmetric, so the re-entrant corner always lies on a Voronoi edge and the
clipped cells stay convex.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import Polygon

LSHAPE = Polygon([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)])


def _inside(p, margin):
    x, y = p[:, 0], p[:, 1]
    box = (x > margin) & (y > margin) & (x < 1 - margin) & (y < 1 - margin)
    return box & ((x < 0.5 - margin) | (y < 0.5 - margin))


def _seed_points(n, seed):
    s = 1.0 / n
    dy = s * np.sqrt(3) / 2
    rows = np.arange(int(1 / dy) + 2)
    pts = [np.column_stack([np.arange(-1, n + 2) * s + (r % 2) * s / 2,
                            np.full(n + 3, r * dy + dy / 3)]) for r in rows]
    pts = np.vstack(pts)
    rng = np.random.default_rng(seed)
    pts = pts + rng.uniform(-0.1 * s, 0.1 * s, size=pts.shape)
    pts = pts[_inside(pts, 0.2 * s)]
    # lower half (below the diagonal), away from it so mirror pairs stay apart
    return pts[(pts[:, 0] - pts[:, 1]) / np.sqrt(2) > 0.25 * s]


def _mirror(half):
    return np.vstack([half, half[:, ::-1]])


def _clipped_cells(gen):
    far = 10.0 * np.column_stack([np.cos(np.linspace(0, 2 * np.pi, 16, endpoint=False)),
                                  np.sin(np.linspace(0, 2 * np.pi, 16, endpoint=False))])
    vor = Voronoi(np.vstack([gen, far]))
    out = []
    for k in range(len(gen)):
        region = vor.regions[vor.point_region[k]]
        if -1 in region or not region:
            raise RuntimeError("unbounded Voronoi region for an interior generator")
        poly = Polygon(vor.vertices[region]).intersection(LSHAPE)
        if poly.geom_type != "Polygon" or poly.is_empty:
            raise RuntimeError("Voronoi cell clipped into several pieces")
        out.append(poly)
    return out


def lshape_cvt(n: int, seed: int = 0, iterations: int = 40):
    """Vertices and counterclockwise cell loops of a CVT mesh with spacing ``1/n``."""
    half = _seed_points(n, seed)
    m = len(half)
    for _ in range(iterations):
        cells = _clipped_cells(_mirror(half))
        half = np.array([[c.centroid.x, c.centroid.y] for c in cells[:m]])
    cells = _clipped_cells(_mirror(half))

    loops = [np.asarray(c.exterior.coords)[:-1] for c in cells]
    allpts = np.vstack(loops)
    tol = 1e-9
    tree = cKDTree(allpts)
    label = -np.ones(len(allpts), dtype=np.int64)
    reps = []
    for i in range(len(allpts)):
        if label[i] >= 0:
            continue
        near = tree.query_ball_point(allpts[i], tol)
        label[near] = len(reps)
        reps.append(allpts[i])
    xy = np.array(reps)
    # snap to the exact boundary lines
    for c in (0.0, 0.5, 1.0):
        xy[np.abs(xy - c) < tol] = c

    out, start = [], 0
    for loop in loops:
        ids = label[start:start + len(loop)].tolist()
        start += len(loop)
        dedup = [v for i, v in enumerate(ids) if v != ids[i - 1]]
        out.append(tuple(dedup))
    return xy, out
