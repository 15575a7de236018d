"""Gauss rules on segments and polygons."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    """``n``-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int):
    """Collapsed (Duffy) tensor Gauss rule on the reference triangle.

    Returns barycentric-style coordinates ``(s, t)`` for vertices
    ``(0,0), (1,0), (0,1)`` and weights summing to 1/2; exact for degree
    ``2n - 2`` polynomials.
    """
    x, w = gauss_legendre01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    return s, t, (wu * wv * (1.0 - u)).ravel()


def polygon_rule(xy: np.ndarray, n: int = 8):
    """Quadrature points and weights on a star-shaped polygon.

    The polygon is fanned from its vertex average, which is adequate for the
    convex and mildly perturbed cells produced by the generators.
    """
    c = xy.mean(axis=0)
    s, t, w = triangle_rule(n)
    pts, wts = [], []
    nxt = np.roll(xy, -1, axis=0)
    for p, q in zip(xy, nxt):
        e1, e2 = p - c, q - c
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        pts.append(c + s[:, None] * e1 + t[:, None] * e2)
        wts.append(w * jac)
    return np.vstack(pts), np.concatenate(wts)
