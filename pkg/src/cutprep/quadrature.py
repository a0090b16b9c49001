"""Gauss rules on lines, boxes and simplices (collapsed Gauss-Jacobi products)."""
from functools import lru_cache
import itertools

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """n-point rule on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def tensor_gauss(n, dim):
    """n^dim rule on [-1,1]^dim, x-index fastest."""
    x, w = gauss_legendre(n)
    pts = np.array([c[::-1] for c in itertools.product(x, repeat=dim)])
    wts = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return pts, wts


def _jacobi01(n, alpha):
    """Rule on [0,1] for weight (1-u)^alpha."""
    if alpha == 0:
        x, w = gauss_legendre(n)
        return (x + 1) / 2, w / 2
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1) / 2, w / 2 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Rule on the unit reference simplex exact for polynomials of total degree ``degree``.

    Reference triangle (0,0),(1,0),(0,1); tetrahedron adds (0,0,1).
    """
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        x, w = gauss_legendre(n)
        return ((x + 1) / 2)[:, None], w / 2
    if dim == 2:
        u, wu = _jacobi01(n, 1)
        v, wv = _jacobi01(n, 0)
        pts, wts = [], []
        for i in range(n):
            for j in range(n):
                pts.append((u[i], (1 - u[i]) * v[j]))
                wts.append(wu[i] * wv[j])
        return np.array(pts), np.array(wts)
    if dim == 3:
        u, wu = _jacobi01(n, 2)
        v, wv = _jacobi01(n, 1)
        t, wt = _jacobi01(n, 0)
        pts, wts = [], []
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    pts.append((u[i], (1 - u[i]) * v[j], (1 - u[i]) * (1 - v[j]) * t[k]))
                    wts.append(wu[i] * wv[j] * wt[k])
        return np.array(pts), np.array(wts)
    raise ValueError(f"unsupported simplex dimension {dim}")


def map_simplex(rule, verts):
    """Affine map of a reference-simplex rule onto a simplex given by vertex coords.

    ``verts`` has shape (k+1, n) for a k-simplex embedded in n dimensions.
    Weights are scaled by the k-dimensional measure ratio.
    """
    pts, wts = rule
    verts = np.asarray(verts, dtype=float)
    J = (verts[1:] - verts[0]).T  # n x k
    k = J.shape[1]
    if J.shape[0] == k:
        scale = abs(np.linalg.det(J))
    else:
        scale = np.sqrt(abs(np.linalg.det(J.T @ J)))
    x = verts[0] + pts @ J.T
    return x, wts * scale


def facet_rule(dim, degree):
    """Rule on a reference facet of a dim-dimensional cell (a segment or triangle)."""
    return simplex_rule(dim - 1, degree)
