"""
Unit tests for the discrete forms module.

This module contains test cases for the parameter scalings, the pointwise
strain tensors and the assembled bilinear and linear forms.
"""

import unittest
import numpy as np
from background_mesh import DEFAULT_BBOX, build_background_mesh
from cut_topology import extract_cut, interpolate_levelset, linearize
from errors import ConfigurationError
from fe_space import build_fespace
from forms import (
    FormParams,
    ParamScaling,
    assemble_b,
    assemble_bilinear,
    assemble_multiplier_mass,
    assemble_rhs,
    strain_Th,
    strain_h,
)
from level_set import SphereLevelSet
from mesh_deformation import build_theta
from system_builder import build_streams


def constant_field(space, c):
    """Component-blocked coefficients of a constant vector field."""
    return np.concatenate([np.full(space.n_dofs, ci) for ci in c])


class TestParameters(unittest.TestCase):
    """Test cases for ParamScaling and FormParams."""

    def test_parse_shapes(self):
        """Lists, dicts and instances are accepted."""
        self.assertEqual(ParamScaling.parse([1, 2]), ParamScaling(1.0, 2.0))
        self.assertEqual(ParamScaling.parse({'c': 0.5, 'e': -1}),
                         ParamScaling(0.5, -1.0))
        scaling = ParamScaling(3.0, 0.0)
        self.assertIs(ParamScaling.parse(scaling), scaling)
        self.assertEqual(scaling.as_list(), [3.0, 0.0])

    def test_parse_rejects_other_shapes(self):
        """Anything else is a configuration error."""
        for bad in ([1.0], 'big', {'c': 1.0}, {'c': 1, 'e': 1, 'f': 2}):
            with self.assertRaises(ConfigurationError):
                ParamScaling.parse(bad, name='eta')

    def test_resolve(self):
        """c * h^-e."""
        self.assertAlmostEqual(ParamScaling(2.0, 1.0).resolve(0.5), 4.0)
        self.assertAlmostEqual(ParamScaling(1.0, -1.0).resolve(0.25), 0.25)

    def test_form_params(self):
        """Scalings are evaluated at h; eta may be absent."""
        params = FormParams.resolve(0.5, ParamScaling(1.0, 2.0),
                                    ParamScaling(1.0, 1.0),
                                    ParamScaling(1.0, -1.0))
        self.assertAlmostEqual(params.eta, 4.0)
        self.assertAlmostEqual(params.rho, 2.0)
        self.assertAlmostEqual(params.rho_tilde, 0.5)
        params = FormParams.resolve(0.5, None, ParamScaling(1.0, 1.0),
                                    ParamScaling(1.0, 1.0))
        self.assertIsNone(params.eta)

    def test_rho_outside_range_warns(self):
        """Exponents beyond [-1, 1] are allowed with a warning."""
        with self.assertLogs('forms', level='WARNING'):
            FormParams.resolve(0.5, None, ParamScaling(1.0, 2.0),
                               ParamScaling(1.0, 1.0))

    def test_nonpositive_eta(self):
        """The penalty weight must be positive."""
        with self.assertRaises(ConfigurationError):
            FormParams.resolve(0.5, ParamScaling(-1.0, 2.0),
                               ParamScaling(1.0, 1.0), ParamScaling(1.0, 1.0))


class TestStrain(unittest.TestCase):
    """Pointwise strain tensors."""

    def test_identity_gradient(self):
        """E_h(x) = P for the identity gradient."""
        E = strain_h(np.eye(3), np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(E, np.diag([1.0, 1.0, 0.0]))

    def test_symmetric_part(self):
        """Skew tangential gradients have zero strain."""
        skew = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(strain_h(skew, [0.0, 0.0, 1.0]), 0.0)

    def test_tangential_correction(self):
        """E_T,h = E_h - (u.n_h) H_h."""
        E = strain_Th(np.eye(3), np.array([0.0, 0.0, 2.0]),
                      np.array([0.0, 0.0, 1.0]), np.diag([1.0, 1.0, 0.0]))
        np.testing.assert_allclose(E, np.diag([-1.0, -1.0, 0.0]))

    def test_batched(self):
        """Leading axes broadcast."""
        grads = np.tile(np.eye(3), (4, 2, 1, 1))
        normals = np.tile([1.0, 0.0, 0.0], (4, 2, 1))
        self.assertEqual(strain_h(grads, normals).shape, (4, 2, 3, 3))


class TestAssembledForms(unittest.TestCase):
    """Forms on the level-1 sphere with k = k_g = 1, k_p = 2."""

    @classmethod
    def setUpClass(cls):
        """Build geometry, spaces and streams once."""
        cls.oracle = SphereLevelSet()
        mesh = build_background_mesh(DEFAULT_BBOX, 1)
        phi_h = interpolate_levelset(mesh, cls.oracle, 1)
        phi_hat = linearize(phi_h)
        cls.cut = extract_cut(mesh, phi_hat)
        cls.theta = build_theta(mesh, cls.cut, phi_h, phi_hat, cls.oracle, 1)
        cls.space = build_fespace(mesh, cls.cut.active_tets, 1)
        cls.streams = build_streams(cls.cut, cls.theta, cls.oracle, 1, 1,
                                    k_p=2, with_weingarten=True)
        cls.params = FormParams.resolve(mesh.h, ParamScaling(1.0, 2.0),
                                        ParamScaling(1.0, 1.0),
                                        ParamScaling(1.0, 1.0))
        cls.area = cls.streams.surface.total_weight()
        cls.c = np.array([0.3, -1.2, 0.7])
        cls.u = constant_field(cls.space, cls.c)

    def test_shapes_and_symmetry(self):
        """Every bilinear form is square and symmetric."""
        n = 3 * self.space.n_dofs
        for form in ('a', 'aT', 'k', 's'):
            A = assemble_bilinear(form, self.space, self.streams, self.params)
            self.assertEqual(A.shape, (n, n))
            self.assertLess(abs(A - A.T).max(), 1e-12)

    def test_a_on_constants(self):
        """a_h(c, c) = |c|^2 |Gamma_h| since E_h(c) = 0."""
        a = assemble_bilinear('a', self.space, self.streams)
        self.assertAlmostEqual(self.u @ a @ self.u,
                               (self.c @ self.c) * self.area, places=10)

    def test_aT_on_constants(self):
        """a_T,h(c, c) = int (c.n_h)^2 |H_h|^2 + |P_h c|^2."""
        aT = assemble_bilinear('aT', self.space, self.streams)
        surf = self.streams.surface
        cn = surf.n_h @ self.c
        HH = np.einsum('eqij,eqij->eq', self.streams.H_h, self.streams.H_h)
        expected = np.sum(surf.w * (cn ** 2 * HH + self.c @ self.c - cn ** 2))
        self.assertAlmostEqual(self.u @ aT @ self.u, expected, places=10)

    def test_s_vanishes_on_constants(self):
        """Normal derivatives of constants are zero."""
        s = assemble_bilinear('s', self.space, self.streams, self.params)
        self.assertAlmostEqual(self.u @ s @ self.u, 0.0, places=12)

    def test_k_is_nonnegative_and_linear_in_eta(self):
        """k_h(v, v) >= 0 and scales with eta."""
        k = assemble_bilinear('k', self.space, self.streams, self.params)
        rng = np.random.default_rng(8)
        for _ in range(5):
            v = rng.normal(size=3 * self.space.n_dofs)
            self.assertGreaterEqual(v @ k @ v, -1e-12)
        doubled = FormParams(self.params.h, 2 * self.params.eta,
                             self.params.rho, self.params.rho_tilde)
        k2 = assemble_bilinear('k', self.space, self.streams, doubled)
        self.assertLess(abs(k2 - 2 * k).max(), 1e-10)
        cn = self.streams.n_tilde @ self.c
        self.assertAlmostEqual(
            self.u @ k @ self.u,
            self.params.eta * np.sum(self.streams.surface.w * cn ** 2),
            places=8
        )

    def test_missing_ingredients(self):
        """k_h needs eta; unknown forms are rejected."""
        with self.assertRaises(ConfigurationError):
            assemble_bilinear('k', self.space, self.streams)
        with self.assertRaises(ConfigurationError):
            assemble_bilinear('laplace', self.space, self.streams)

    def test_b_with_constant_multiplier(self):
        """b_h(c, 1) = int c.n_h over Gamma_h."""
        space_l = build_fespace(self.space.mesh, self.cut.active_tets, 1)
        B = assemble_b(self.space, space_l, self.streams,
                       self.params.rho_tilde)
        self.assertEqual(B.shape, (space_l.n_dofs, 3 * self.space.n_dofs))
        surf = self.streams.surface
        expected = np.sum(surf.w * (surf.n_h @ self.c))
        self.assertAlmostEqual(np.ones(space_l.n_dofs) @ B @ self.u,
                               expected, places=10)

    def test_multiplier_mass(self):
        """m_h(1, 1) = |Gamma_h|; M is symmetric positive semi-definite."""
        space_l = build_fespace(self.space.mesh, self.cut.active_tets, 1)
        M = assemble_multiplier_mass(space_l, self.streams, self.params.rho)
        ones = np.ones(space_l.n_dofs)
        self.assertAlmostEqual(ones @ M @ ones, self.area, places=10)
        self.assertLess(abs(M - M.T).max(), 1e-13)
        self.assertTrue(np.all(M.diagonal() >= 0.0))

    def test_rhs(self):
        """Zero data gives zero; constant data integrates per component."""
        zero = assemble_rhs(self.space, self.streams,
                            lambda x: np.zeros_like(x))
        np.testing.assert_array_equal(zero, 0.0)
        b = assemble_rhs(self.space, self.streams,
                         lambda x: np.tile(self.c, (len(x), 1)))
        n = self.space.n_dofs
        for comp in range(3):
            self.assertAlmostEqual(b[comp * n:(comp + 1) * n].sum(),
                                   self.c[comp] * self.area, places=10)

    def test_quadrature_saturation(self):
        """Raising the quadrature degree does not change exact integrals."""
        bumped = build_streams(self.cut, self.theta, self.oracle, 1, 1,
                               k_p=2, degree_bump=2)
        for form in ('a', 's'):
            A = assemble_bilinear(form, self.space, self.streams, self.params)
            A2 = assemble_bilinear(form, self.space, bumped, self.params)
            self.assertLess(abs(A2 - A).max(), 1e-10 * abs(A).max())


if __name__ == '__main__':
    unittest.main()
