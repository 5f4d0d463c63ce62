"""
Unit tests for the manufactured sphere problem and the jet arithmetic.

This module contains test cases for u*, f and lambda, cross-checked against
an independent complex-step / finite-difference evaluation.
"""

import unittest
import numpy as np
from errors import DomainError
from jets import Jet, gradients, hessians, sqrt, values
from sphere_problem import SphereProblem, eval_f, eval_lambda, eval_u_star

STEP = 1e-20
FD_STEP = 1e-4


def random_sphere_points(rng, n):
    points = rng.normal(size=(n, 3))
    return points / np.linalg.norm(points, axis=1)[:, None]


def projector(x):
    n = x / np.linalg.norm(x, axis=1)[:, None]
    return np.eye(3)[None] - n[:, :, None] * n[:, None, :]


def complex_step_gradient(x):
    """(N, 3, 3) Jacobian of u*, row i = gradient of component i."""
    grad = np.empty((len(x), 3, 3))
    for m in range(3):
        shifted = x.astype(complex)
        shifted[:, m] += 1j * STEP
        grad[:, :, m] = np.imag(eval_u_star(shifted)) / STEP
    return grad


def strain(x):
    """Tangential strain sym(P grad u* P) of the extended field."""
    P = projector(x)
    A = P @ complex_step_gradient(x) @ P
    return 0.5 * (A + np.transpose(A, (0, 2, 1)))


def sphere_rule(n_polar=24, n_azimuth=48):
    """Gauss-Legendre in z times the trapezoidal rule in the azimuth."""
    z, wz = np.polynomial.legendre.leggauss(n_polar)
    angle = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    Z, T = np.meshgrid(z, angle, indexing='ij')
    s = np.sqrt(1.0 - Z ** 2)
    points = np.stack([s * np.cos(T), s * np.sin(T), Z], axis=-1)
    weights = np.repeat(wz, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return points.reshape(-1, 3), weights


def tangential_fields(x):
    """Radially constant tangential fields P(n) g(n), complex-step safe."""
    n = x / np.sqrt(np.sum(x * x, axis=1))[:, None]
    ones = np.ones(len(x), dtype=x.dtype)
    zeros = np.zeros(len(x), dtype=x.dtype)
    raw = [
        np.stack([ones, zeros, zeros], axis=1),
        np.stack([zeros, ones, zeros], axis=1),
        np.stack([zeros, zeros, ones], axis=1),
        np.stack([n[:, 0] * n[:, 1], n[:, 2] ** 2, n[:, 0]], axis=1),
    ]
    fields = [g - np.sum(g * n, axis=1)[:, None] * n for g in raw]
    fields.append(np.cross(np.array([0.3, -1.0, 0.5]), n))
    return fields


def tangential_strains(x):
    """sym(P grad v P) of every test field."""
    grads = [np.empty((len(x), 3, 3)) for _ in tangential_fields(x)]
    for m in range(3):
        shifted = x.astype(complex)
        shifted[:, m] += 1j * STEP
        for grad, v in zip(grads, tangential_fields(shifted)):
            grad[:, :, m] = np.imag(v) / STEP
    P = projector(x)
    strains = []
    for grad in grads:
        G = P @ grad @ P
        strains.append(0.5 * (G + np.transpose(G, (0, 2, 1))))
    return strains


def reference_f(x):
    """-P div_Gamma E + u* by central differences of the strain."""
    P = projector(x)
    dE = np.empty((len(x), 3, 3, 3))
    for m in range(3):
        shift = np.zeros(3)
        shift[m] = FD_STEP
        dE[..., m] = (strain(x + shift) - strain(x - shift)) / (2 * FD_STEP)
    div_E = np.einsum('nijm,nmj->ni', dE, P)
    return -np.einsum('nij,nj->ni', P, div_E) + eval_u_star(x)


class TestJets(unittest.TestCase):
    """Test cases for second-order forward differentiation."""

    def setUp(self):
        """Seed jets at a few points."""
        self.points = np.array([[1.0, 2.0, 0.5], [0.3, -0.7, 1.2]])
        self.x, self.y, self.z = Jet.variables(self.points)

    def test_product_and_quotient(self):
        """f = x y + z^2 / x has the expected derivatives."""
        f = self.x * self.y + self.z ** 2 / self.x
        x, y, z = self.points.T
        np.testing.assert_allclose(f.value, x * y + z ** 2 / x)
        expected_grad = np.column_stack([
            y - z ** 2 / x ** 2, x, 2 * z / x
        ])
        np.testing.assert_allclose(f.grad, expected_grad)
        self.assertAlmostEqual(f.hess[0, 0, 0], 2 * z[0] ** 2 / x[0] ** 3)
        self.assertAlmostEqual(f.hess[0, 0, 1], 1.0)
        self.assertAlmostEqual(f.hess[0, 0, 2], -2 * z[0] / x[0] ** 2)
        np.testing.assert_allclose(f.hess, np.transpose(f.hess, (0, 2, 1)))

    def test_norm(self):
        """The gradient of |x| is x / |x|."""
        r = sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        norms = np.linalg.norm(self.points, axis=1)
        np.testing.assert_allclose(r.value, norms)
        np.testing.assert_allclose(r.grad, self.points / norms[:, None])
        expected = (np.eye(3)[None] / norms[:, None, None]
                    - self.points[:, :, None] * self.points[:, None, :]
                    / norms[:, None, None] ** 3)
        np.testing.assert_allclose(r.hess, expected)

    def test_constants_and_stacking(self):
        """Constants mix with jets; helpers stack components."""
        jets = [self.x + 1.0, 2.0 - self.y, 3.0 * self.z]
        np.testing.assert_allclose(values(jets)[:, 1], 2.0 - self.points[:, 1])
        G = gradients(jets)
        np.testing.assert_allclose(G[0], np.diag([1.0, -1.0, 3.0]))
        self.assertEqual(hessians(jets).shape, (2, 3, 3, 3))


class TestSphereProblem(unittest.TestCase):
    """Test cases for the manufactured solution on the unit sphere."""

    def setUp(self):
        """Random points on the unit sphere."""
        self.problem = SphereProblem()
        self.rng = np.random.default_rng(13)
        self.points = random_sphere_points(self.rng, 30)

    def test_u_star_axis_value(self):
        """u*(1, 0, 0) = (0, 0, 1)."""
        np.testing.assert_allclose(eval_u_star([1.0, 0.0, 0.0]), [0, 0, 1],
                                   atol=1e-15)

    def test_u_star_is_tangential_and_radially_constant(self):
        """u* . x = 0 and u*(2x) = u*(x)."""
        u = eval_u_star(self.points)
        np.testing.assert_allclose(np.einsum('ij,ij->i', u, self.points),
                                   0.0, atol=1e-14)
        np.testing.assert_allclose(eval_u_star(2.0 * self.points), u,
                                   atol=1e-14)

    def test_origin_rejected(self):
        """The field is undefined at the origin."""
        with self.assertRaises(DomainError):
            eval_u_star([0.0, 0.0, 0.0])

    def test_f_is_tangential(self):
        """f . n = 0 on the sphere."""
        f = eval_f(self.points)
        np.testing.assert_allclose(np.einsum('ij,ij->i', f, self.points),
                                   0.0, atol=1e-12)

    def test_f_off_surface_rejected(self):
        """f and lambda are only defined on the surface."""
        with self.assertRaises(DomainError):
            eval_f([1.1, 0.0, 0.0])
        with self.assertRaises(DomainError):
            eval_lambda([0.0, 0.9, 0.0])

    def test_f_matches_finite_differences(self):
        """f agrees with an independent difference-quotient evaluation."""
        np.testing.assert_allclose(eval_f(self.points),
                                   reference_f(self.points), atol=1e-6)

    def test_weak_residual_vanishes(self):
        """a(u*, v) = (f, v) for tangential v under an exact-sphere rule."""
        points, weights = sphere_rule()
        self.assertAlmostEqual(weights.sum(), 4.0 * np.pi, places=12)
        E_u = strain(points)
        u = eval_u_star(points)
        f = eval_f(points)
        for index, (v, E_v) in enumerate(zip(tangential_fields(points),
                                             tangential_strains(points))):
            with self.subTest(field=index):
                a = weights @ (np.einsum('nij,nij->n', E_u, E_v)
                               + np.einsum('ni,ni->n', u, v))
                load = weights @ np.einsum('ni,ni->n', f, v)
                self.assertLess(abs(a - load), 1e-6)
        energy = weights @ (np.einsum('nij,nij->n', E_u, E_u)
                            + np.einsum('ni,ni->n', u, u))
        self.assertGreater(energy, 1.0)
        self.assertLess(abs(energy - weights @ np.einsum('ni,ni->n', f, u)),
                        1e-6 * energy)

    def test_lambda_matches_strain_trace(self):
        """lambda = -tr(E P) on the unit sphere."""
        expected = -np.einsum('nij,nji->n', strain(self.points),
                              projector(self.points))
        np.testing.assert_allclose(eval_lambda(self.points), expected,
                                   atol=1e-12)

    def test_extension_gradient(self):
        """grad u^e = grad u* P on the surface, zero along n."""
        vals, grads = self.problem.extension_u(self.points)
        np.testing.assert_allclose(vals, eval_u_star(self.points),
                                   atol=1e-15)
        expected = complex_step_gradient(self.points) @ projector(self.points)
        np.testing.assert_allclose(grads, expected, atol=1e-10)

    def test_extensions_are_normal_constant(self):
        """Off-surface values equal the values at the closest point."""
        scaled = 1.3 * self.points
        vals, grads = self.problem.extension_u(scaled)
        np.testing.assert_allclose(vals, eval_u_star(self.points),
                                   atol=1e-14)
        np.testing.assert_allclose(
            np.einsum('nij,nj->ni', grads, self.points), 0.0, atol=1e-12
        )
        lam, dlam = self.problem.extension_lambda(scaled)
        np.testing.assert_allclose(lam, eval_lambda(self.points), atol=1e-12)
        np.testing.assert_allclose(
            np.einsum('ni,ni->n', dlam, self.points), 0.0, atol=1e-10
        )

    def test_extension_lambda_gradient(self):
        """Complex-step gradient of lambda^e matches central differences."""
        x = 0.95 * self.points[:5]
        _, grad = self.problem.extension_lambda(x)
        fd = np.empty_like(x)
        for m in range(3):
            shift = np.zeros(3)
            shift[m] = 1e-6
            plus, _ = self.problem.extension_lambda(x + shift)
            minus, _ = self.problem.extension_lambda(x - shift)
            fd[:, m] = (plus - minus) / 2e-6
        np.testing.assert_allclose(grad, fd, atol=1e-7)

    def test_rhs_data_is_f_of_projection(self):
        """f_h(x) = f(p(x))."""
        np.testing.assert_allclose(self.problem.rhs_data(1.2 * self.points),
                                   eval_f(self.points), atol=1e-12)

    def test_deterministic(self):
        """Repeated evaluation is bitwise identical."""
        np.testing.assert_array_equal(eval_f(self.points),
                                      eval_f(self.points))


if __name__ == '__main__':
    unittest.main()
