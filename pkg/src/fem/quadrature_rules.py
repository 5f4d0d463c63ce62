"""
Quadrature Rules Module

Collapsed (Duffy) Gauss-Jacobi rules on the reference triangle and the
reference tetrahedron. They exist for every polynomial degree, have positive
weights and interior points.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from errors import ConfigurationError


def _points_for_degree(degree):
    if degree < 0:
        raise ConfigurationError(
            f"Quadrature degree must be >= 0, got {degree}"
        )
    return max(1, int(np.ceil((degree + 1) / 2.0)))


def _gauss_jacobi_01(m, alpha):
    """
    m-point rule on [0, 1] for the weight (1 - u)^alpha.
    """
    t, w = roots_jacobi(m, alpha, 0.0)
    return 0.5 * (1.0 + t), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """
    Quadrature on the reference triangle (0,0), (1,0), (0,1).

    Args:
        degree (int): Polynomial degree integrated exactly

    Returns:
        tuple: (points (n, 2), weights (n,)) with weights summing to 1/2
    """
    m = _points_for_degree(degree)
    u, wu = _gauss_jacobi_01(m, 1.0)
    v, wv = _gauss_jacobi_01(m, 0.0)
    uu, vv = np.meshgrid(u, v, indexing='ij')
    ww = np.outer(wu, wv)
    x = uu
    y = vv * (1.0 - uu)
    points = np.column_stack([x.ravel(), y.ravel()])
    weights = ww.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@lru_cache(maxsize=None)
def tetrahedron_rule(degree):
    """
    Quadrature on the reference tetrahedron.

    Args:
        degree (int): Polynomial degree integrated exactly

    Returns:
        tuple: (points (n, 3), weights (n,)) with weights summing to 1/6
    """
    m = _points_for_degree(degree)
    u, wu = _gauss_jacobi_01(m, 2.0)
    v, wv = _gauss_jacobi_01(m, 1.0)
    s, ws = _gauss_jacobi_01(m, 0.0)
    uu, vv, ss = np.meshgrid(u, v, s, indexing='ij')
    ww = wu[:, None, None] * wv[None, :, None] * ws[None, None, :]
    x = uu
    y = vv * (1.0 - uu)
    z = ss * (1.0 - uu) * (1.0 - vv)
    points = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    weights = ww.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights
