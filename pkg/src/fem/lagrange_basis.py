"""
Lagrange Basis Module

Nodal Lagrange shape functions of degree k <= 4 on the reference tetrahedron
with vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1). Degree 4 is only used for
the penalty level set.

Nodes are equispaced. The four vertex nodes always come first (in vertex
order), so the piecewise-linear part of a nodal vector is its first four
local entries.
"""

from functools import lru_cache

import numpy as np

from errors import ConfigurationError, DomainError

MAX_DEGREE = 4
REFERENCE_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


def _check_degree(k):
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise ConfigurationError(
            f"Unsupported polynomial degree {k}; supported 1..{MAX_DEGREE}"
        )
    return int(k)


@lru_cache(maxsize=None)
def _exponents(k):
    """Monomial exponents (a, b, c) with a + b + c <= k."""
    return np.array(
        [(a, b, c)
         for total in range(k + 1)
         for a in range(total, -1, -1)
         for b in range(total - a, -1, -1)
         for c in [total - a - b]],
        dtype=np.int64
    )


@lru_cache(maxsize=None)
def reference_nodes(k):
    """
    Equispaced Lagrange nodes of degree k on the reference tetrahedron.

    Args:
        k (int): Polynomial degree, 1 <= k <= 4

    Returns:
        np.ndarray: (n_local, 3) node coordinates, vertices first
    """
    k = _check_degree(k)
    vertex_idx = [(0, 0, 0), (k, 0, 0), (0, k, 0), (0, 0, k)]
    others = [
        (i, j, m)
        for m in range(k + 1)
        for j in range(k + 1 - m)
        for i in range(k + 1 - m - j)
        if (i, j, m) not in vertex_idx
    ]
    nodes = np.array(vertex_idx + others, dtype=float) / k
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=None)
def _coefficients(k):
    exps = _exponents(k)
    nodes = reference_nodes(k)
    vander = np.prod(nodes[:, None, :] ** exps[None, :, :], axis=2)
    coeffs = np.linalg.inv(vander)
    coeffs.setflags(write=False)
    return coeffs


def n_local_dofs(k):
    """Number of local nodes (k+1)(k+2)(k+3)/6."""
    k = _check_degree(k)
    return (k + 1) * (k + 2) * (k + 3) // 6


def _monomials(points, exps):
    """Monomial values (n, m) and gradients (n, m, 3) at points."""
    powers = points[:, None, :] ** exps[None, :, :]
    values = np.prod(powers, axis=2)
    grads = np.empty(values.shape + (3,))
    for axis in range(3):
        e = exps[:, axis]
        lowered = exps.copy()
        lowered[:, axis] = np.maximum(e - 1, 0)
        dpow = points[:, None, :] ** lowered[None, :, :]
        grads[:, :, axis] = e[None, :] * np.prod(dpow, axis=2)
    return values, grads


def eval_basis(k, ref_points, check=True, tol=1e-10):
    """
    Evaluate all local shape functions of degree k and their reference
    gradients.

    Args:
        k (int): Polynomial degree, 1 <= k <= 4
        ref_points (np.ndarray): A reference point (3,) or batch (n, 3)
        check (bool): Reject points outside the reference tetrahedron
            (barycentric tolerance tol); disabled for polynomial
            extrapolation
        tol (float): Barycentric tolerance

    Returns:
        tuple: (values (n, n_local), gradients (n, n_local, 3)); leading axis
            dropped for a single point

    Raises:
        ConfigurationError: If k is unsupported
        DomainError: If check is set and a point is outside the element
    """
    k = _check_degree(k)
    pts = np.asarray(ref_points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if check:
        bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
        if np.any(bary < -tol):
            raise DomainError(
                "Reference point outside the reference tetrahedron: "
                f"{pts[np.any(bary < -tol, axis=1)][0].tolist()}"
            )
    mono, dmono = _monomials(pts, _exponents(k))
    coeffs = _coefficients(k)
    values = mono @ coeffs
    grads = np.einsum('nmd,mj->njd', dmono, coeffs)
    if single:
        return values[0], grads[0]
    return values, grads
