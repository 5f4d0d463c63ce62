"""
Finite Element Space Module

Continuous Lagrange spaces V_h^k on a subset of background tetrahedra (the
active mesh) and functions living in them. It provides:
- Global dof numbering by geometric hashing of Lagrange node coordinates
- Scalar and vector-valued (3 independent copies) coefficient storage
- Standard nodal interpolation I^k and parametric interpolation I_Theta^k
- Evaluation of values and physical gradients through the mesh deformation

Cell indices used throughout refer to positions in `space.tets`, which is the
same sorted active-tet array for every space built on a cut.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import PointLocationError
from lagrange_basis import eval_basis, reference_nodes

logger = logging.getLogger(__name__)

HASH_QUANTUM = 1e-9


@dataclass(frozen=True)
class ElementMaps:
    """
    Affine reference-to-background maps x = v0 + B xi of a set of tets.

    Attributes:
        v0 (np.ndarray): (n, 3) first vertex of every tet
        B (np.ndarray): (n, 3, 3) edge matrices [v1-v0, v2-v0, v3-v0]
        B_inv (np.ndarray): (n, 3, 3) inverses of B
        det_B (np.ndarray): (n,) determinants (positive)
    """
    v0: np.ndarray
    B: np.ndarray
    B_inv: np.ndarray
    det_B: np.ndarray

    @classmethod
    def from_coords(cls, coords):
        v0 = coords[:, 0, :]
        B = np.transpose(coords[:, 1:, :] - v0[:, None, :], (0, 2, 1))
        return cls(v0=v0, B=B, B_inv=np.linalg.inv(B),
                   det_B=np.linalg.det(B))

    def to_physical(self, cells, xi):
        """Background (undeformed) position of reference points xi."""
        return self.v0[cells] + np.einsum('nij,nj->ni', self.B[cells], xi)

    def to_reference(self, cells, x):
        """Reference coordinates of background points x."""
        return np.einsum('nij,nj->ni', self.B_inv[cells], x - self.v0[cells])


@dataclass
class FESpace:
    """
    Continuous Lagrange space of degree k on the active tetrahedra.

    Attributes:
        mesh: Background mesh
        tets (np.ndarray): (n_cells,) background tet ids of the cells
        degree (int): Polynomial degree k
        cell_dofs (np.ndarray): (n_cells, n_local) global dof ids
        n_dofs (int): Number of distinct Lagrange nodes
        node_coords (np.ndarray): (n_dofs, 3) undeformed node positions
        maps (ElementMaps): Affine maps of the cells
    """
    mesh: object
    tets: np.ndarray
    degree: int
    cell_dofs: np.ndarray
    n_dofs: int
    node_coords: np.ndarray
    maps: ElementMaps
    _first: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_cells(self):
        return len(self.tets)

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    def first_occurrence(self):
        """(cell, local) pair of the first appearance of every global dof."""
        if self._first is None:
            flat = self.cell_dofs.ravel()
            _, first = np.unique(flat, return_index=True)
            self._first = np.column_stack(
                np.divmod(first, self.n_local)
            )
        return self._first

    def vector_dofs(self):
        """
        (n_cells, 3 * n_local) vector dof ids ordered (local node, component).

        Vector coefficients are component-blocked: dof c * n_dofs + i.
        """
        comps = np.arange(3)[None, None, :] * self.n_dofs
        return (self.cell_dofs[:, :, None] + comps).reshape(self.n_cells, -1)


def build_fespace(mesh, tet_ids, degree):
    """
    Build the continuous Lagrange space of a degree on selected tetrahedra.

    Args:
        mesh (BackgroundMesh): Background mesh
        tet_ids (np.ndarray): Background tet ids forming the cells
        degree (int): Polynomial degree 1..4

    Returns:
        FESpace: Space with shared nodes identified across cells
    """
    tet_ids = np.asarray(tet_ids, dtype=np.int64)
    ref = reference_nodes(degree)
    maps = ElementMaps.from_coords(mesh.tet_coords(tet_ids))
    n_cells, n_loc = len(tet_ids), len(ref)
    nodes = (maps.v0[:, None, :]
             + np.einsum('cij,lj->cli', maps.B, ref)).reshape(-1, 3)

    keys = np.rint(nodes / HASH_QUANTUM).astype(np.int64)
    unique_keys, first, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    inverse = np.asarray(inverse).reshape(-1)
    cell_dofs = inverse.reshape(n_cells, n_loc)
    space = FESpace(
        mesh=mesh,
        tets=tet_ids,
        degree=int(degree),
        cell_dofs=cell_dofs,
        n_dofs=len(unique_keys),
        node_coords=nodes[first],
        maps=maps,
    )
    logger.debug(
        f"FE space P{degree}: {n_cells} cells, {space.n_dofs} dofs"
    )
    return space


@dataclass
class FEFunction:
    """
    Finite element function: a space plus nodal coefficients.

    Attributes:
        space (FESpace): Underlying scalar space
        coefficients (np.ndarray): (n_dofs,) for scalar, (n_dofs, m) for
            m-component fields
    """
    space: FESpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape[0] != self.space.n_dofs:
            raise ValueError(
                f"Coefficient length {self.coefficients.shape[0]} does not "
                f"match the space ({self.space.n_dofs} dofs)"
            )

    @property
    def is_vector(self):
        return self.coefficients.ndim == 2

    @classmethod
    def from_flat(cls, space, flat):
        """Vector function from a component-blocked flat vector (3 n,)."""
        flat = np.asarray(flat, dtype=float)
        return cls(space, flat.reshape(3, space.n_dofs).T.copy())

    def flat(self):
        """Component-blocked flat coefficient vector."""
        if self.is_vector:
            return self.coefficients.T.ravel()
        return self.coefficients.copy()

    def local_coefficients(self, cells=None):
        """(n, n_local[, m]) coefficients of the selected cells."""
        dofs = self.space.cell_dofs if cells is None \
            else self.space.cell_dofs[cells]
        return self.coefficients[dofs]


def interpolate(space, field_fn):
    """
    Nodal interpolation I^k on the undeformed mesh.

    Args:
        space (FESpace): Target space
        field_fn (callable): (n, 3) points -> (n,) or (n, m) values

    Returns:
        FEFunction: Interpolant
    """
    return FEFunction(space, np.asarray(field_fn(space.node_coords)))


def mapped_node_coords(space, deformation=None):
    """
    Positions Theta_h(xi) of all global nodes of a space.

    Theta_h is continuous, so any cell containing a node gives its image.
    """
    if deformation is None:
        return space.node_coords.copy()
    first = space.first_occurrence()
    ref = reference_nodes(space.degree)
    xi = ref[first[:, 1]]
    x, _ = deformation.map_reference(first[:, 0], xi)
    return x


def interpolate_parametric(space, deformation, field_fn):
    """
    Parametric interpolation I_Theta^k: (I_Theta v) o Theta_h = I^k(v o Theta_h).

    Args:
        space (FESpace): Target space
        deformation (MeshDeformation or None): Mesh transformation Theta_h;
            None means identity
        field_fn (callable): (n, 3) physical points -> (n,) or (n, m) values

    Returns:
        FEFunction: Coefficient at node xi equals field_fn(Theta_h(xi))
    """
    points = mapped_node_coords(space, deformation)
    return FEFunction(space, np.asarray(field_fn(points)))


def reference_jacobian(space, deformation, cells, xi):
    """
    Mapped positions and reference Jacobians d x / d xi at reference points.

    Args:
        space (FESpace): Any space on the active cells
        deformation (MeshDeformation or None): Theta_h
        cells (np.ndarray): (n,) cell indices
        xi (np.ndarray): (n, 3) reference points

    Returns:
        tuple: (x (n, 3), J (n, 3, 3))
    """
    if deformation is not None:
        return deformation.map_reference(cells, xi)
    x = space.maps.to_physical(cells, xi)
    return x, space.maps.B[cells]


def evaluate_reference(f, cells, xi, jac_inv=None, check=False):
    """
    Values and physical gradients of an FE function at reference points.

    Args:
        f (FEFunction): Scalar or vector function
        cells (np.ndarray): (n,) cell indices
        xi (np.ndarray): (n, 3) reference points
        jac_inv (np.ndarray): (n, 3, 3) inverse reference Jacobians; None
            gives values only
        check (bool): Reject points outside the reference element

    Returns:
        tuple: (values (n[, m]), gradients (n, 3) or (n, m, 3) or None).
            For vector fields the gradient row i is grad of component i.
    """
    phi, dphi = eval_basis(f.space.degree, xi, check=check)
    phi = np.atleast_2d(phi)
    coeffs = f.local_coefficients(cells)
    if f.is_vector:
        values = np.einsum('nl,nlm->nm', phi, coeffs)
    else:
        values = np.einsum('nl,nl->n', phi, coeffs)
    if jac_inv is None:
        return values, None
    dphi = dphi.reshape(len(phi), -1, 3)
    # physical gradient: J^{-T} grad_xi
    grad_phys = np.einsum('nji,nlj->nli', jac_inv, dphi)
    if f.is_vector:
        grads = np.einsum('nlm,nli->nmi', coeffs, grad_phys)
    else:
        grads = np.einsum('nl,nli->ni', coeffs, grad_phys)
    return values, grads


def locate_reference(space, deformation, cell, point, tol=1e-12,
                     max_iter=50, bary_tol=1e-10):
    """
    Reference coordinates of a physical point inside a mapped cell.

    Newton iteration on Theta_h(v0 + B xi) = point, started from the affine
    preimage.

    Raises:
        PointLocationError: If Newton fails or the preimage is outside the
            reference tetrahedron
    """
    point = np.asarray(point, dtype=float).reshape(1, 3)
    cells = np.array([cell])
    xi = space.maps.to_reference(cells, point)
    for _ in range(max_iter):
        x, J = reference_jacobian(space, deformation, cells, xi)
        residual = x - point
        if np.linalg.norm(residual) <= tol * max(1.0, np.linalg.norm(point)):
            break
        xi = xi - np.linalg.solve(J, residual[..., None])[..., 0]
    else:
        raise PointLocationError(
            f"Could not invert the element map of cell {cell} at "
            f"{point[0].tolist()}"
        )
    bary = np.concatenate([[1.0 - xi.sum()], xi[0]])
    if np.any(bary < -bary_tol):
        raise PointLocationError(
            f"Point {point[0].tolist()} is not inside mapped cell {cell}"
        )
    return xi[0]


def eval_fefunction(f, deformation, cell, point):
    """
    Value and physical gradient of an FE function at a physical point.

    Args:
        f (FEFunction): Scalar or vector FE function
        deformation (MeshDeformation or None): Theta_h
        cell (int): Cell index containing the point
        point (np.ndarray): (3,) physical point in Theta_h(T)

    Returns:
        tuple: (value, gradient) with gradient = DTheta^{-T} chain rule

    Raises:
        PointLocationError: If the point is not in the mapped cell
    """
    xi = locate_reference(f.space, deformation, cell, point)
    cells = np.array([cell])
    _, J = reference_jacobian(f.space, deformation, cells, xi[None, :])
    values, grads = evaluate_reference(
        f, cells, xi[None, :], jac_inv=np.linalg.inv(J)
    )
    return values[0], grads[0]
