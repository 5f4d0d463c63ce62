"""
Unit tests for the cut topology module.

This module contains test cases for sign classification, marching
tetrahedra and the diagnostics of the planar interface.
"""

import os
import tempfile
import unittest

import meshio
import numpy as np
from background_mesh import DEFAULT_BBOX, BackgroundMesh, \
    build_background_mesh
from cut_topology import (
    cut_band,
    extract_cut,
    gamma_lin_area,
    interpolate_levelset,
    is_watertight,
    linearize,
    reference_triangles,
    triangles_inside_tets,
    write_gamma_lin_vtk,
)
from errors import GeometryError
from fe_space import build_fespace, interpolate
from lagrange_basis import REFERENCE_VERTICES
from level_set import SphereLevelSet


def single_tet_mesh():
    """The reference tetrahedron as a one-element mesh."""
    return BackgroundMesh(
        vertices=REFERENCE_VERTICES.astype(float),
        tets=np.array([[0, 1, 2, 3]]),
        level=0,
        cube_edge=1.0,
        bbox=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        cells_per_axis=(1, 1, 1),
    )


def two_tet_mesh():
    """Reference tet plus a second tet sharing the face (1, 2, 3)."""
    vertices = np.vstack([REFERENCE_VERTICES, [[1.0, 1.0, 1.0]]])
    return BackgroundMesh(
        vertices=vertices.astype(float),
        tets=np.array([[0, 1, 2, 3], [1, 2, 3, 4]]),
        level=0,
        cube_edge=1.0,
        bbox=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        cells_per_axis=(1, 1, 1),
    )


def linear_cut(mesh, fn):
    """Extract the interface of a linear level set on all tets."""
    space = build_fespace(mesh, np.arange(mesh.n_tets), 1)
    return extract_cut(mesh, interpolate(space, fn))


class TestSingleTetCuts(unittest.TestCase):
    """Marching tetrahedra on hand-made configurations."""

    def setUp(self):
        """Create the one- and two-tet meshes."""
        self.tet = single_tet_mesh()
        self.pair = two_tet_mesh()

    def test_one_isolated_vertex(self):
        """Pattern (-, +, +, +) gives one triangle through edge midpoints."""
        cut = linear_cut(self.tet, lambda x: x.sum(axis=1) - 0.5)
        np.testing.assert_array_equal(cut.signs[0], [-1, 1, 1, 1])
        self.assertEqual(cut.n_tris[0], 1)
        self.assertAlmostEqual(gamma_lin_area(cut), np.sqrt(3) / 8, places=14)
        np.testing.assert_allclose(cut.n_lin[0], np.ones(3) / np.sqrt(3))
        tri = cut.tris[0, 0]
        normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        self.assertGreater(normal @ cut.n_lin[0], 0.0)

    def test_two_two_split(self):
        """Pattern (-, -, +, +) gives a quadrilateral as two triangles."""
        cut = linear_cut(self.tet, lambda x: x[:, 1] + x[:, 2] - 0.5)
        np.testing.assert_array_equal(cut.signs[0], [-1, -1, 1, 1])
        self.assertEqual(cut.n_tris[0], 2)
        self.assertAlmostEqual(gamma_lin_area(cut), np.sqrt(2) / 4,
                               places=14)
        for s in range(2):
            tri = cut.tris[0, s]
            normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            self.assertGreater(normal @ cut.n_lin[0], 0.0)

    def test_zero_vertex_values_are_perturbed(self):
        """Vertices exactly on the level set count as positive."""
        cut = linear_cut(self.tet, lambda x: x.sum(axis=1) - 1.0)
        np.testing.assert_array_equal(cut.signs[0], [-1, 1, 1, 1])
        self.assertTrue(np.all(cut.vertex_values != 0.0))
        self.assertEqual(cut.n_tris[0], 1)
        self.assertAlmostEqual(gamma_lin_area(cut), np.sqrt(3) / 2,
                               places=10)

    def test_uncut_tet_is_inactive(self):
        """A tet with a single sign is not in the band."""
        phi = self.pair.vertices.sum(axis=1) - 0.5
        np.testing.assert_array_equal(cut_band(self.pair, phi), [0])
        cut = linear_cut(self.pair, lambda x: x.sum(axis=1) - 0.5)
        np.testing.assert_array_equal(cut.active_tets, [0])

    def test_reference_triangles(self):
        """Reference coordinates map back to the physical triangles."""
        cut = linear_cut(self.tet, lambda x: x[:, 1] + x[:, 2] - 0.5)
        np.testing.assert_allclose(reference_triangles(cut), cut.tris,
                                   atol=1e-15)


class TestSphereCut(unittest.TestCase):
    """Interface of the unit sphere on the default box."""

    @classmethod
    def setUpClass(cls):
        """Extract Gamma^lin at levels 1 and 2."""
        cls.oracle = SphereLevelSet()
        cls.cuts = {}
        cls.phi = {}
        for level in (1, 2):
            mesh = build_background_mesh(DEFAULT_BBOX, level)
            phi_h = interpolate_levelset(mesh, cls.oracle, 1)
            cls.phi[level] = phi_h
            cls.cuts[level] = extract_cut(mesh, linearize(phi_h))

    def test_watertight(self):
        """Every interface edge is shared by exactly two triangles."""
        for cut in self.cuts.values():
            self.assertTrue(is_watertight(cut))

    def test_triangles_inside_tets(self):
        """Triangle vertices lie in their tets."""
        for cut in self.cuts.values():
            self.assertTrue(triangles_inside_tets(cut))

    def test_area_close_to_sphere(self):
        """Gamma^lin approximates the area 4 pi."""
        area = gamma_lin_area(self.cuts[2])
        self.assertLess(abs(area - 4 * np.pi), 0.15)

    def test_linear_level_set_vanishes_on_triangles(self):
        """The affine interpolant is zero at every triangle vertex."""
        cut = self.cuts[2]
        xi = reference_triangles(cut)
        values = cut.vertex_values
        lin = (values[:, None, None, 0] * (1.0 - xi.sum(axis=-1))
               + np.einsum('nstj,nj->nst', xi, values[:, 1:]))
        mask = np.arange(2)[None, :] < cut.n_tris[:, None]
        self.assertLess(np.abs(lin[mask]).max(), 1e-10)

    def test_active_count_scales_like_h_squared(self):
        """Halving h multiplies the number of cut tets by about four."""
        ratio = self.cuts[2].n_active / self.cuts[1].n_active
        self.assertGreater(ratio, 3.5)
        self.assertLess(ratio, 4.5)

    def test_mesh_vertex_on_sphere(self):
        """(1, 0, 0) is a mesh vertex with phi = 0 and is classified."""
        cut = self.cuts[1]
        vertex = np.nonzero(
            np.all(cut.mesh.vertices == [1.0, 0.0, 0.0], axis=1)
        )[0][0]
        self.assertEqual(self.oracle.phi(cut.mesh.vertices[vertex]), 0.0)
        self.assertTrue(np.all(cut.vertex_values != 0.0))
        self.assertTrue(np.all(cut.signs.min(axis=1) < 0))
        self.assertTrue(np.all(cut.signs.max(axis=1) > 0))

    def test_linearize_keeps_vertex_values(self):
        """The linear reduction of a P2 interpolant interpolates phi."""
        mesh = self.cuts[1].mesh
        phi_h = interpolate_levelset(mesh, self.oracle, 2)
        phi_hat = linearize(phi_h)
        self.assertEqual(phi_hat.space.degree, 1)
        np.testing.assert_allclose(
            phi_hat.coefficients, self.oracle.phi(phi_hat.space.node_coords),
            atol=1e-15
        )
        np.testing.assert_array_equal(phi_hat.space.tets, phi_h.space.tets)

    def test_empty_band(self):
        """A sphere enclosing the whole box has no cut."""
        mesh = build_background_mesh(DEFAULT_BBOX, 0)
        with self.assertRaises(GeometryError):
            interpolate_levelset(mesh, SphereLevelSet(radius=3.0), 1)

    def test_write_vtk(self):
        """The triangle soup round-trips through meshio."""
        cut = self.cuts[1]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'gamma_lin.vtk')
            write_gamma_lin_vtk(cut, path)
            with open(path) as handle:
                self.assertTrue(handle.readline().startswith('# vtk'))
            mesh = meshio.read(path)
            self.assertEqual(len(mesh.cells_dict['triangle']),
                             int(cut.n_tris.sum()))


if __name__ == '__main__':
    unittest.main()
