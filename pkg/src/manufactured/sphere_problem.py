"""
Manufactured Sphere Problem

Exact data of the vector-Laplace test problem on the sphere:
- u*(x) = P(x) w(x) with w = (-x3^2/r^2, x2/r, x1/r), tangential and
  constant in the normal direction
- f = -P div_Gamma(E(u*)) + u* on the surface
- the exact multiplier lambda = -tr(E(u*) H) (tangential data, g_N = 0)
- normal-constant extensions u^e = u* o p and lambda^e = lambda o p with
  their full gradients

Derivatives of the closed form come from second-order jets; the gradient
of lambda o p adds a complex step on top of them.
"""

import logging

import numpy as np

from errors import DomainError
from jets import Jet, dot, gradients, hessians, sqrt, values

logger = logging.getLogger(__name__)

SURFACE_TOL = 1e-10
COMPLEX_STEP = 1e-20


def _check_nonzero(x):
    r = np.linalg.norm(np.real(x), axis=1)
    if np.any(r == 0.0):
        raise DomainError("Manufactured fields are undefined at the origin")


def u_star_jets(y):
    """
    u*(y) as three Jets, for coordinate Jets y.

    Args:
        y (list): Three Jets (coordinates or a composed map)

    Returns:
        tuple: (u (3 Jets), n (3 Jets), r (Jet))
    """
    r2 = dot(y, y)
    r = sqrt(r2)
    w = [-(y[2] * y[2]) / r2, y[1] / r, y[0] / r]
    n = [yi / r for yi in y]
    nw = dot(n, w)
    u = [w[i] - n[i] * nw for i in range(3)]
    return u, n, r


class SphereProblem:
    """
    Manufactured solution on a sphere centred at the origin.

    Args:
        radius (float): Sphere radius, defaults to 1
    """

    def __init__(self, radius=1.0):
        self.radius = float(radius)

    def _check_on_surface(self, x):
        r = np.linalg.norm(np.real(x), axis=1)
        off = np.abs(r - self.radius) > SURFACE_TOL
        if np.any(off):
            raise DomainError(
                f"Point {np.real(x)[off][0].tolist()} is not on the surface "
                f"(|phi| > {SURFACE_TOL:g})"
            )

    def project(self, y):
        """Closest-point map p(y) = R y / |y| on Jets or arrays."""
        if isinstance(y[0], Jet):
            r = sqrt(dot(y, y))
            return [yi * self.radius / r for yi in y]
        raise TypeError("project expects a list of Jets")

    def eval_u_star(self, x):
        """
        Closed-form tangential field u*.

        Args:
            x (np.ndarray): Point (3,) or batch (N, 3), x != 0

        Returns:
            np.ndarray: Values with the same leading shape

        Raises:
            DomainError: If x = 0
        """
        x = np.asarray(x)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        _check_nonzero(pts)
        u, _, _ = u_star_jets(Jet.variables(pts))
        out = values(u)
        return out[0] if single else out

    def _strain_and_derivatives(self, pts):
        """
        Exact projector P, strain E(u*) and its derivatives at points.

        Returns:
            tuple: (u (N,3), P (N,3,3), E (N,3,3), dE (N,3,3,3) with
                dE[n, i, j, m] = d_m E_ij, r (N,))
        """
        u, n, r = u_star_jets(Jet.variables(pts))
        G = gradients(u)
        dG = hessians(u)
        nv = values(n)
        dn = gradients(n)
        eye = np.eye(3)
        P = eye[None] - nv[:, :, None] * nv[:, None, :]
        dP = -(dn[:, :, None, :] * nv[:, None, :, None]
               + nv[:, :, None, None] * dn[:, None, :, :])

        A = P @ G @ P
        dA = (np.einsum('nikm,nkl,nlj->nijm', dP, G, P)
              + np.einsum('nik,nklm,nlj->nijm', P, dG, P)
              + np.einsum('nik,nkl,nljm->nijm', P, G, dP))
        E = 0.5 * (A + np.transpose(A, (0, 2, 1)))
        dE = 0.5 * (dA + np.transpose(dA, (0, 2, 1, 3)))
        return values(u), P, E, dE, r.value

    def eval_f(self, x):
        """
        Right-hand side f = -P div_Gamma(E(u*)) + u* on the surface.

        div_Gamma of a matrix acts row-wise:
        (div_Gamma E)_i = sum_{j,m} d_m E_ij P_mj.

        Args:
            x (np.ndarray): Surface point (3,) or batch (N, 3)

        Raises:
            DomainError: If a point is off the surface or at the origin
        """
        x = np.asarray(x)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        _check_nonzero(pts)
        self._check_on_surface(pts)
        u, P, _, dE, _ = self._strain_and_derivatives(pts)
        div_E = np.einsum('nijm,nmj->ni', dE, P)
        f = -np.einsum('nij,nj->ni', P, div_E) + u
        return f[0] if single else f

    def _lambda(self, pts):
        _, P, E, _, r = self._strain_and_derivatives(pts)
        H = P / r[:, None, None]
        return -np.einsum('nij,nji->n', E, H)

    def eval_lambda(self, x):
        """
        Exact multiplier lambda = -tr(E(u*) H) on the surface.

        Raises:
            DomainError: If a point is off the surface or at the origin
        """
        x = np.asarray(x)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        _check_nonzero(pts)
        self._check_on_surface(pts)
        lam = np.real(self._lambda(pts))
        return lam[0] if single else lam

    def extension_u(self, x):
        """
        u^e = u* o p and its full gradient at tube points.

        Returns:
            tuple: (values (N, 3), gradients (N, 3, 3))
        """
        pts = np.atleast_2d(x)
        _check_nonzero(pts)
        p = self.project(Jet.variables(pts))
        u, _, _ = u_star_jets(p)
        return values(u), gradients(u)

    def extension_lambda(self, x):
        """
        lambda^e = lambda o p and its gradient at tube points.

        The gradient uses a complex step through the jet evaluation of
        lambda, so it carries no subtractive cancellation.

        Returns:
            tuple: (values (N,), gradients (N, 3))
        """
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        _check_nonzero(pts)
        p = pts * (self.radius / np.linalg.norm(pts, axis=1))[:, None]
        value = np.real(self._lambda(p))
        grad = np.empty_like(pts)
        for m in range(3):
            shifted = pts.astype(complex)
            shifted[:, m] += 1j * COMPLEX_STEP
            p_c = shifted * (
                self.radius / np.sqrt(np.sum(shifted * shifted, axis=1))
            )[:, None]
            grad[:, m] = np.imag(self._lambda(p_c)) / COMPLEX_STEP
        return value, grad

    def rhs_data(self, x):
        """f_h = f o p at arbitrary tube points."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        _check_nonzero(pts)
        p = pts * (self.radius / np.linalg.norm(pts, axis=1))[:, None]
        return self.eval_f(p)


def eval_u_star(x):
    """u* of the unit-sphere problem."""
    return SphereProblem().eval_u_star(x)


def eval_f(x):
    """f of the unit-sphere problem at surface points."""
    return SphereProblem().eval_f(x)


def eval_lambda(x):
    """Exact multiplier of the unit-sphere problem at surface points."""
    return SphereProblem().eval_lambda(x)
