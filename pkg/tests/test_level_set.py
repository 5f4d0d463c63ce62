"""
Unit tests for the level set module.

This module contains test cases for the exact sphere oracle: level set
values, closest-point projection and the surface frame.
"""

import unittest
import numpy as np
from errors import DomainError
from level_set import SphereLevelSet, sphere_phi


def random_tube_points(rng, n, r_min=0.5, r_max=1.5):
    """Random points with radius in [r_min, r_max]."""
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    return directions * rng.uniform(r_min, r_max, size=n)[:, None]


class TestSphereLevelSet(unittest.TestCase):
    """Test cases for the sphere oracle."""

    def setUp(self):
        """Create the unit-sphere oracle and random tube points."""
        self.oracle = SphereLevelSet()
        self.rng = np.random.default_rng(7)
        self.points = random_tube_points(self.rng, 100)

    def test_sphere_phi_values(self):
        """phi(x) = |x| - 1."""
        self.assertAlmostEqual(sphere_phi([0, 0, 0.5]), -0.5)
        self.assertAlmostEqual(sphere_phi([1, 0, 0]), 0.0)
        self.assertAlmostEqual(sphere_phi([0, 2, 0]), 1.0)

    def test_sphere_phi_origin(self):
        """The normal is undefined at the origin."""
        with self.assertRaises(DomainError):
            sphere_phi([0, 0, 0])

    def test_closest_point(self):
        """Radial projection onto the sphere, fixed on the surface."""
        np.testing.assert_allclose(self.oracle.closest_point([1.5, 0, 0]),
                                   [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(self.oracle.closest_point([0, 0.5, 0]),
                                   [0, 1, 0], atol=1e-15)
        x = np.array([0.6, 0.0, 0.8])
        np.testing.assert_allclose(self.oracle.closest_point(x), x,
                                   atol=1e-15)

    def test_closest_point_is_projection(self):
        """p(p(x)) = p(x) and phi(p(x)) = 0."""
        p = self.oracle.closest_point(self.points)
        np.testing.assert_allclose(self.oracle.closest_point(p), p,
                                   atol=1e-14)
        np.testing.assert_allclose(self.oracle.phi(p), 0.0, atol=1e-14)

    def test_closest_point_outside_tube(self):
        """Points with |d| >= 0.9 are outside the tube."""
        with self.assertRaises(DomainError):
            self.oracle.closest_point([2.0, 0, 0])
        with self.assertRaises(DomainError):
            self.oracle.frame_at([0, 0, 0.05])

    def test_distance_and_normal_far_point(self):
        """d and grad phi are defined off the tube as well."""
        self.assertAlmostEqual(self.oracle.distance([0, 0, 2.0]), 1.0)
        np.testing.assert_allclose(self.oracle.grad_phi([0, 0, 2.0]),
                                   [0, 0, 1])

    def test_frame_at_axis_point(self):
        """At (1, 0, 0) the Weingarten map is diag(0, 1, 1)."""
        frame = self.oracle.frame_at([1.0, 0, 0])
        np.testing.assert_allclose(frame.H, np.diag([0.0, 1.0, 1.0]),
                                   atol=1e-15)
        np.testing.assert_allclose(frame.n, [1, 0, 0])
        self.assertAlmostEqual(frame.d, 0.0)

    def test_projector_properties(self):
        """P n = 0, P^2 = P, H n = 0 and H symmetric."""
        frame = self.oracle.frame_at(self.points)
        Pn = np.einsum('nij,nj->ni', frame.P, frame.n)
        np.testing.assert_allclose(Pn, 0.0, atol=1e-14)
        np.testing.assert_allclose(frame.P @ frame.P, frame.P, atol=1e-14)
        Hn = np.einsum('nij,nj->ni', frame.H, frame.n)
        np.testing.assert_allclose(Hn, 0.0, atol=1e-12)
        np.testing.assert_allclose(frame.H, np.swapaxes(frame.H, 1, 2),
                                   atol=1e-12)

    def test_weingarten_matches_finite_differences(self):
        """Closed-form H agrees with central differences of n."""
        step = 1e-5
        frame = self.oracle.frame_at(self.points)
        fd = np.empty_like(frame.H)
        for m in range(3):
            shift = np.zeros(3)
            shift[m] = step
            plus = self.oracle.grad_phi(self.points + shift)
            minus = self.oracle.grad_phi(self.points - shift)
            fd[:, :, m] = (plus - minus) / (2 * step)
        np.testing.assert_allclose(fd, frame.H, atol=1e-8)

    def test_gradient_is_unit(self):
        """The sphere level set is a distance function."""
        grads = self.oracle.grad_phi(self.points)
        np.testing.assert_allclose(np.linalg.norm(grads, axis=1), 1.0,
                                   atol=1e-14)

    def test_hessian_matches_weingarten(self):
        """Hessian of the signed distance equals H."""
        frame = self.oracle.frame_at(self.points)
        np.testing.assert_allclose(self.oracle.hess_phi(self.points),
                                   frame.H, atol=1e-14)

    def test_in_tube(self):
        """Tube membership uses the half width 0.9."""
        mask = self.oracle.in_tube(np.array([[1.8, 0, 0], [1.95, 0, 0]]))
        np.testing.assert_array_equal(mask, [True, False])

    def test_invalid_radius(self):
        """Radius and tube width must be positive and compatible."""
        with self.assertRaises(DomainError):
            SphereLevelSet(radius=0.0)
        with self.assertRaises(DomainError):
            SphereLevelSet(radius=1.0, tube_halfwidth=1.5)


if __name__ == '__main__':
    unittest.main()
