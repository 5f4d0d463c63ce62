"""
Discrete Geometry Module

Quadrature on the mapped interface Gamma_h = Theta_h(Gamma^lin) and on the
mapped active domain Theta_h(Omega_h^Gamma), together with the discrete
geometric fields evaluated there:
- n_h = DTheta_h^{-T} n_lin / |DTheta_h^{-T} n_lin|
- the penalty normal n~_h from a degree-k_p parametric level set
- the discrete Weingarten map H_h = grad I_Theta^{k_g}(n_h)

Quadrature data is stored as padded (n_active, n_q) arrays, one row per
active tet, padding points carrying zero weight. Element loops therefore
reduce to einsum over the point axis.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import meshio
import numpy as np

from cut_topology import reference_triangles
from errors import GeometryError
from fe_space import (
    FEFunction,
    build_fespace,
    evaluate_reference,
    interpolate_parametric,
)
from lagrange_basis import eval_basis, reference_nodes
from quadrature_rules import tetrahedron_rule, triangle_rule

logger = logging.getLogger(__name__)

REFERENCE_BARYCENTER = np.full(3, 0.25)


@dataclass(frozen=True)
class SurfQuadPoint:
    """A single interface quadrature point."""
    cell: int
    x_lin: np.ndarray
    x: np.ndarray
    w: float
    n_lin: np.ndarray
    n_h: np.ndarray


@dataclass(frozen=True)
class VolQuadPoint:
    """A single volume quadrature point."""
    cell: int
    x: np.ndarray
    w: float
    n_h: np.ndarray


@dataclass
class QuadratureData:
    """
    Padded per-cell quadrature points with mapped geometry.

    Attributes:
        xi (np.ndarray): (n_cells, n_q, 3) reference coordinates
        x (np.ndarray): (n_cells, n_q, 3) mapped points Theta_h(x_lin)
        w (np.ndarray): (n_cells, n_q) weights, zero on padding
        jac_inv (np.ndarray): (n_cells, n_q, 3, 3) inverse reference
            Jacobians (DTheta_h B)^{-1}, for physical gradients
        n_h (np.ndarray): (n_cells, n_q, 3) discrete unit normals
        valid (np.ndarray): (n_cells, n_q) mask of non-padding points
        x_lin (np.ndarray or None): Unmapped points (surface rules only)
        n_lin (np.ndarray): (n_cells, 3) linear normals
    """
    xi: np.ndarray
    x: np.ndarray
    w: np.ndarray
    jac_inv: np.ndarray
    n_h: np.ndarray
    valid: np.ndarray
    n_lin: np.ndarray
    x_lin: Optional[np.ndarray] = None

    @property
    def n_cells(self):
        return self.w.shape[0]

    @property
    def n_points(self):
        return self.w.shape[1]

    @property
    def cells_flat(self):
        return np.repeat(np.arange(self.n_cells), self.n_points)

    def flat(self, name):
        """Field reshaped to (n_cells * n_q, ...)."""
        value = getattr(self, name)
        return value.reshape((-1,) + value.shape[2:])

    def total_weight(self):
        return float(self.w.sum())

    def evaluate(self, f):
        """
        Values and physical gradients of an FE function at all points.

        Returns:
            tuple: arrays shaped (n_cells, n_q, ...)
        """
        values, grads = evaluate_reference(
            f, self.cells_flat, self.flat('xi'), self.flat('jac_inv')
        )
        shape = (self.n_cells, self.n_points)
        return (values.reshape(shape + values.shape[1:]),
                grads.reshape(shape + grads.shape[1:]))

    def basis(self, degree, rows=None):
        """
        Values and physical gradients of the degree-k basis at the points.

        Args:
            degree (int): Polynomial degree
            rows (np.ndarray): Cells to evaluate, all when None

        Returns:
            tuple: (phi (n, n_q, n_local), gradients (n, n_q, n_local, 3))
        """
        xi = self.xi if rows is None else self.xi[rows]
        jac_inv = self.jac_inv if rows is None else self.jac_inv[rows]
        phi, dphi = eval_basis(degree, xi.reshape(-1, 3), check=False)
        grads = np.einsum('nji,nlj->nli', jac_inv.reshape(-1, 3, 3), dphi)
        shape = xi.shape[:2]
        return (phi.reshape(shape + phi.shape[1:]),
                grads.reshape(shape + grads.shape[1:]))


class SurfaceQuadrature(QuadratureData):
    """Quadrature on Gamma_h."""

    def __iter__(self) -> Iterator[SurfQuadPoint]:
        for c, q in zip(*np.nonzero(self.valid)):
            yield SurfQuadPoint(
                cell=int(c), x_lin=self.x_lin[c, q], x=self.x[c, q],
                w=float(self.w[c, q]), n_lin=self.n_lin[c],
                n_h=self.n_h[c, q],
            )


class VolumeQuadrature(QuadratureData):
    """Quadrature on Theta_h(Omega_h^Gamma)."""

    def __iter__(self) -> Iterator[VolQuadPoint]:
        for c, q in zip(*np.nonzero(self.valid)):
            yield VolQuadPoint(cell=int(c), x=self.x[c, q],
                               w=float(self.w[c, q]), n_h=self.n_h[c, q])


def _mapped_geometry(deformation, cells, xi, n_lin):
    """
    Mapped points, DTheta_h, inverse reference Jacobian and n_h.

    Raises:
        GeometryError: If det DTheta_h <= 0
    """
    x, D, det = deformation.jacobian(cells, xi)
    J = np.einsum('nij,njk->nik', D, deformation.maps.B[cells])
    jac_inv = np.linalg.inv(J)
    D_inv_T = np.transpose(np.linalg.inv(D), (0, 2, 1))
    m = np.einsum('nij,nj->ni', D_inv_T, n_lin)
    return x, det, jac_inv, m


def surface_quadrature(cut, deformation, degree):
    """
    Quadrature rule on Gamma_h of a given polynomial degree.

    Each planar triangle of Gamma^lin carries a collapsed Gauss rule whose
    points are mapped by Theta_h; weights pick up
    |det DTheta_h| * |DTheta_h^{-T} n_lin|.

    Args:
        cut (CutTopology): Interface triangles
        deformation (MeshDeformation): Theta_h on the active tets
        degree (int): Polynomial degree of the triangle rule

    Returns:
        SurfaceQuadrature: Padded rule with two triangle slots per cell

    Raises:
        GeometryError: If the deformation Jacobian is nonpositive
    """
    pts, wts = triangle_rule(degree)
    n_cells = cut.n_active
    ref_tris = reference_triangles(cut)
    valid_tri = np.arange(2)[None, :] < cut.n_tris[:, None]
    ref_tris[~valid_tri] = REFERENCE_BARYCENTER

    a, b = pts[:, 0], pts[:, 1]

    def on_triangles(tri):
        # tri (..., 3 corners, 3) -> (..., n_pts, 3)
        return (tri[..., None, 0, :]
                + a[:, None] * (tri[..., None, 1, :] - tri[..., None, 0, :])
                + b[:, None] * (tri[..., None, 2, :] - tri[..., None, 0, :]))

    xi = on_triangles(ref_tris).reshape(n_cells, -1, 3)
    x_lin = on_triangles(cut.tris).reshape(n_cells, -1, 3)
    cross = np.cross(cut.tris[:, :, 1] - cut.tris[:, :, 0],
                     cut.tris[:, :, 2] - cut.tris[:, :, 0])
    area = 0.5 * np.linalg.norm(cross, axis=-1) * valid_tri
    flat_w = (2.0 * area[:, :, None] * wts[None, None, :]).reshape(n_cells, -1)
    valid = np.repeat(valid_tri, len(wts), axis=1)

    n_q = xi.shape[1]
    cells = np.repeat(np.arange(n_cells), n_q)
    n_lin = np.repeat(cut.n_lin, n_q, axis=0)
    x, det, jac_inv, m = _mapped_geometry(
        deformation, cells, xi.reshape(-1, 3), n_lin
    )
    m_norm = np.linalg.norm(m, axis=1)
    w = flat_w.ravel() * np.abs(det) * m_norm
    quad = SurfaceQuadrature(
        xi=xi,
        x=x.reshape(n_cells, n_q, 3),
        w=w.reshape(n_cells, n_q),
        jac_inv=jac_inv.reshape(n_cells, n_q, 3, 3),
        n_h=(m / m_norm[:, None]).reshape(n_cells, n_q, 3),
        valid=valid,
        n_lin=cut.n_lin,
        x_lin=x_lin,
    )
    logger.debug(
        f"Surface quadrature: degree {degree}, {n_q} slots per cell, "
        f"area {quad.total_weight():.6f}"
    )
    return quad


def volume_quadrature(cut, deformation, degree):
    """
    Quadrature rule on the mapped active tets Theta_h(T).

    Args:
        cut (CutTopology): Active tets (for n_lin)
        deformation (MeshDeformation): Theta_h
        degree (int): Polynomial degree of the tet rule

    Returns:
        VolumeQuadrature: Rule with weights w_ref * det B * |det DTheta_h|

    Raises:
        GeometryError: If the deformation Jacobian is nonpositive
    """
    pts, wts = tetrahedron_rule(degree)
    n_cells, n_q = cut.n_active, len(wts)
    cells = np.repeat(np.arange(n_cells), n_q)
    xi = np.tile(pts, (n_cells, 1))
    n_lin = np.repeat(cut.n_lin, n_q, axis=0)
    x, det, jac_inv, m = _mapped_geometry(deformation, cells, xi, n_lin)
    det_B = deformation.maps.det_B[cells]
    w = np.tile(wts, n_cells) * det_B * np.abs(det)
    return VolumeQuadrature(
        xi=xi.reshape(n_cells, n_q, 3),
        x=x.reshape(n_cells, n_q, 3),
        w=w.reshape(n_cells, n_q),
        jac_inv=jac_inv.reshape(n_cells, n_q, 3, 3),
        n_h=(m / np.linalg.norm(m, axis=1)[:, None]).reshape(n_cells, n_q, 3),
        valid=np.ones((n_cells, n_q), dtype=bool),
        n_lin=cut.n_lin,
    )


@dataclass
class PenaltyNormal:
    """
    Penalty normal n~_h = grad phi~_h / |grad phi~_h| with
    phi~_h = I_Theta^{k_p} phi.
    """
    level_set: FEFunction
    k_p: int

    def evaluate(self, quad):
        """
        Unit normals (n_cells, n_q, 3) at the points of a rule.

        Raises:
            GeometryError: If grad phi~_h vanishes at a point
        """
        _, grads = quad.evaluate(self.level_set)
        norm = np.linalg.norm(grads, axis=-1)
        if np.any(norm[quad.valid] == 0.0):
            raise GeometryError("Penalty level set has a vanishing gradient")
        norm = np.where(norm == 0.0, 1.0, norm)
        return grads / norm[..., None]


def penalty_normal(deformation, oracle, k_p):
    """
    Normal field for the penalty term from a degree-k_p level set.

    Args:
        deformation (MeshDeformation): Theta_h
        oracle (LevelSetOracle): Exact level set
        k_p (int): Degree of the parametric level-set interpolant

    Returns:
        PenaltyNormal: Evaluable on any rule built on the same cut
    """
    space = build_fespace(deformation.space.mesh, deformation.space.tets, k_p)
    phi_tilde = interpolate_parametric(space, deformation, oracle.phi)
    return PenaltyNormal(level_set=phi_tilde, k_p=k_p)


@dataclass
class WeingartenField:
    """H_h as the gradient of the vector interpolant of n_h."""
    normal: FEFunction

    def evaluate(self, quad):
        """Matrices (n_cells, n_q, 3, 3), row i = grad of component i."""
        _, grads = quad.evaluate(self.normal)
        return grads


def discrete_normal_at_nodes(deformation, n_lin, degree):
    """
    n_h at every Lagrange node of every active tet, averaged at shared nodes.

    Args:
        deformation (MeshDeformation): Theta_h
        n_lin (np.ndarray): (n_cells, 3) linear normals
        degree (int): Degree of the target space

    Returns:
        FEFunction: Vector function (n_dofs, 3) in V_h^degree
    """
    space = build_fespace(deformation.space.mesh, deformation.space.tets,
                          degree)
    ref = reference_nodes(degree)
    n_cells, n_loc = space.n_cells, len(ref)
    cells = np.repeat(np.arange(n_cells), n_loc)
    xi = np.tile(ref, (n_cells, 1))
    _, _, _, m = _mapped_geometry(deformation, cells, xi,
                                  np.repeat(n_lin, n_loc, axis=0))
    m = m / np.linalg.norm(m, axis=1)[:, None]
    dofs = space.cell_dofs.ravel()
    counts = np.bincount(dofs, minlength=space.n_dofs)
    values = np.column_stack([
        np.bincount(dofs, weights=m[:, c], minlength=space.n_dofs)
        for c in range(3)
    ]) / counts[:, None]
    return FEFunction(space, values)


def weingarten_h(deformation, n_lin, k_g):
    """
    Discrete Weingarten map H_h = grad(I_Theta^{k_g} n_h).

    Args:
        deformation (MeshDeformation): Theta_h
        n_lin (np.ndarray): (n_cells, 3) linear normals of the cut
        k_g (int): Interpolation degree

    Returns:
        WeingartenField: Evaluable on any rule built on the same cut
    """
    return WeingartenField(discrete_normal_at_nodes(deformation, n_lin, k_g))


def _subdivided_triangles(level):
    """Barycentric sub-triangles (corners as (a, b) pairs) of a triangle."""
    nodes, index = [], {}
    for i in range(level + 1):
        for j in range(level + 1 - i):
            index[(i, j)] = len(nodes)
            nodes.append((i / level, j / level))
    tris = []
    for i in range(level):
        for j in range(level - i):
            tris.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
            if i + j < level - 1:
                tris.append((index[(i + 1, j)], index[(i + 1, j + 1)],
                             index[(i, j + 1)]))
    return np.array(nodes), np.array(tris, dtype=np.int64)


def write_gamma_h_vtk(cut, deformation, path, point_fields=None):
    """
    Write Gamma_h to legacy ASCII VTK with n_h and optional FE fields.

    Triangles are subdivided k_g times before mapping so curved pieces are
    visible.

    Args:
        cut (CutTopology): Interface triangles
        deformation (MeshDeformation): Theta_h
        path (str): Output path
        point_fields (dict): Name -> FEFunction evaluated at the points
    """
    nodes, sub = _subdivided_triangles(max(1, deformation.kg))
    cells, _ = cut.triangle_list()
    ref_tris = reference_triangles(cut)
    valid = np.arange(2)[None, :] < cut.n_tris[:, None]
    ref_tris = ref_tris[valid]
    a, b = nodes[:, 0], nodes[:, 1]
    xi = (ref_tris[:, None, 0, :]
          + a[:, None] * (ref_tris[:, None, 1, :] - ref_tris[:, None, 0, :])
          + b[:, None] * (ref_tris[:, None, 2, :] - ref_tris[:, None, 0, :]))
    n_pts = len(nodes)
    point_cells = np.repeat(cells, n_pts)
    xi = xi.reshape(-1, 3)
    x, _, jac_inv, m = _mapped_geometry(
        deformation, point_cells, xi, cut.n_lin[point_cells]
    )
    data = {"n_h": m / np.linalg.norm(m, axis=1)[:, None]}
    for name, f in (point_fields or {}).items():
        values, _ = evaluate_reference(f, point_cells, xi)
        data[name] = values
    offsets = (np.arange(len(cells)) * n_pts)[:, None, None]
    connectivity = (sub[None, :, :] + offsets).reshape(-1, 3)
    meshio.write(
        path,
        meshio.Mesh(x, [("triangle", connectivity)], point_data=data),
        file_format="vtk",
        binary=False,
    )
    logger.info(f"Gamma_h written to {path}")
