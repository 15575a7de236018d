"""Local lowest-order mixed VEM computations on one polygon.

The only degrees of freedom are the normal fluxes ``int_e tau.n ds`` through
each edge, taken with the outward normal of the cell.  Every local quantity is
closed form in these fluxes, so no quadrature enters the local matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import CellGeometry
from .quadrature import gauss_legendre01, polygon_rule


@dataclass(frozen=True)
class LocalMatrices:
    A: np.ndarray      # stabilized flux form, (N_K, N_K)
    B: np.ndarray      # divergence coupling with the constant scalar, (N_K,)
    M: float           # mass of the constant scalar basis, |K|
    P: np.ndarray      # projector onto constant vectors, (2, N_K)

    @property
    def div(self) -> np.ndarray:
        return self.B / self.M


def projector(geom: CellGeometry) -> np.ndarray:
    """Matrix mapping outward fluxes to the L2 projection onto constant vectors.

    Integration by parts against ``q = x, y`` gives
    ``|K| (Pi tau)_q = sum_e flux_e (q(m_e) - q(c))``; midpoint evaluation is
    exact because ``tau.n`` is constant and ``q`` linear on each edge.
    """
    return geom.offsets.T / geom.area


def local_forms(geom: CellGeometry, w: float = 1.0) -> LocalMatrices:
    if w < 0:
        raise ValueError(f"stability constant must be non-negative, got {w}")
    P = projector(geom)
    F = geom.lengths[:, None] * geom.normals  # fluxes of a constant vector
    D = np.eye(geom.n_edges) - F @ P          # fluxes of (I - Pi)
    A = geom.area * (P.T @ P) + w * (D.T @ D)
    return LocalMatrices(0.5 * (A + A.T), np.ones(geom.n_edges), geom.area, P)


def batched_local_forms(xy: np.ndarray, w: float = 1.0):
    """Local flux matrices for a stack of ``n``-gons, ``xy`` of shape (m, n, 2).

    Returns ``(A, area)`` with ``A`` of shape (m, n, n).
    """
    xy = xy - xy.mean(axis=1, keepdims=True)
    nxt = np.roll(xy, -1, axis=1)
    cross = xy[..., 0] * nxt[..., 1] - nxt[..., 0] * xy[..., 1]
    area = 0.5 * cross.sum(1)
    cen = np.stack([((xy[..., 0] + nxt[..., 0]) * cross).sum(1),
                    ((xy[..., 1] + nxt[..., 1]) * cross).sum(1)], axis=1) / (6.0 * area[:, None])
    mid = 0.5 * (xy + nxt)
    t = nxt - xy
    F = np.stack([t[..., 1], -t[..., 0]], axis=-1)            # |e| n_e
    P = np.swapaxes(mid - cen[:, None, :], 1, 2) / area[:, None, None]
    n = xy.shape[1]
    D = np.eye(n)[None] - F @ P
    A = area[:, None, None] * np.swapaxes(P, 1, 2) @ P + w * np.swapaxes(D, 1, 2) @ D
    return 0.5 * (A + np.swapaxes(A, 1, 2)), area


def constant_fluxes(geom: CellGeometry, c) -> np.ndarray:
    return geom.lengths * (geom.normals @ np.asarray(c, dtype=float))


def interpolate(geom: CellGeometry, field: Callable, order: int = 8) -> np.ndarray:
    """Outward edge fluxes of ``field`` by ``order``-point Gauss-Legendre rules.

    ``field(x, y)`` takes coordinate arrays and returns the two components.
    """
    if order < 4:
        raise ValueError("edge quadrature needs at least 4 points")
    s, wq = gauss_legendre01(order)
    p = geom.vertices
    q = np.roll(p, -1, axis=0)
    pts = p[:, None, :] + s[None, :, None] * (q - p)[:, None, :]
    fx, fy = field(pts[..., 0], pts[..., 1])
    fx = np.broadcast_to(fx, pts.shape[:2])
    fy = np.broadcast_to(fy, pts.shape[:2])
    fn = fx * geom.normals[:, 0:1] + fy * geom.normals[:, 1:2]
    return geom.lengths * (fn @ wq)


def project_scalar_p0(geom: CellGeometry, f: Callable, order: int = 8) -> float:
    """Cell mean of ``f(x, y)``."""
    pts, wts = polygon_rule(geom.vertices, order)
    vals = np.broadcast_to(f(pts[:, 0], pts[:, 1]), wts.shape)
    return float(vals @ wts) / geom.area
