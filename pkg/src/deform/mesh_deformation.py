"""
Mesh Deformation Module

This module builds the parametric mesh transformation Theta_h that lifts the
planar interface Gamma^lin towards the exact surface. It provides:
- Safeguarded Newton / bisection root finding for the lift distance d~
- Element-wise lift Psi_h at the Lagrange nodes of every active tet
- Continuous Theta_h in (V_h^{k_g})^3 by averaging Psi_h at shared nodes
- Evaluation of Theta_h and its Jacobian at reference points

Key features:
- Two root-finding sources: the discrete level set phi_h (default) and
  the exact level set (test oracle)
- Optional multiprocessing over element chunks with tqdm progress
- Vertices of active tets are fixed points of Theta_h
"""

import logging
import multiprocessing as mp
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from errors import ConfigurationError, GeometryError, RootFindError
from fe_space import FEFunction, build_fespace
from lagrange_basis import eval_basis, reference_nodes

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-12
ROOT_MAX_ITER = 50
BRACKET_FACTOR = 2.0
CHUNK_CELLS = 2048

GEOMETRY_SOURCES = ('fe', 'exact')


@dataclass
class ExactSource:
    """Root-finding source backed by the exact level set."""
    oracle: object

    def __call__(self, points, index):
        return self.oracle.phi(points), self.oracle.grad_phi(points)

    def subset(self, rows):
        return self


@dataclass
class FESource:
    """
    Root-finding source backed by phi_h, evaluated element-locally.

    phi_h restricted to one tet is a polynomial; it is extrapolated past the
    tet when the search segment leaves it.

    Attributes:
        degree (int): Degree of phi_h
        coeffs (np.ndarray): (n, n_local) local coefficients per cell
        v0 (np.ndarray): (n, 3) first tet vertices
        B_inv (np.ndarray): (n, 3, 3) inverse affine maps
    """
    degree: int
    coeffs: np.ndarray
    v0: np.ndarray
    B_inv: np.ndarray

    @classmethod
    def from_function(cls, phi_h, cells):
        maps = phi_h.space.maps
        return cls(
            degree=phi_h.space.degree,
            coeffs=phi_h.local_coefficients(cells),
            v0=maps.v0[cells],
            B_inv=maps.B_inv[cells],
        )

    def __call__(self, points, index):
        B_inv = self.B_inv[index]
        xi = np.einsum('nij,nj->ni', B_inv, points - self.v0[index])
        phi, dphi = eval_basis(self.degree, xi, check=False)
        c = self.coeffs[index]
        values = np.einsum('nl,nl->n', phi, c)
        grads = np.einsum('nji,nl,nlj->ni', B_inv, c, dphi)
        return values, grads

    def subset(self, rows):
        return FESource(self.degree, self.coeffs[rows], self.v0[rows],
                        self.B_inv[rows])


def find_dtilde_batch(x, G, source, target, h, index=None, tol=ROOT_TOL,
                      max_iter=ROOT_MAX_ITER):
    """
    Solve source(x + t G) = target for t in [-2h, 2h], pointwise.

    Newton steps starting from t = 0 are accepted while they stay inside the
    current sign bracket; otherwise the bracket is bisected.

    Args:
        x (np.ndarray): (n, 3) start points
        G (np.ndarray): (n, 3) search directions, nonzero
        source (callable): (points (n, 3), index (n,)) -> (values, grads)
        target (np.ndarray): (n,) target values
        h (float): Mesh size; the bracket is [-2h, 2h]
        index (np.ndarray): (n,) row index handed to the source
        tol (float): Residual tolerance
        max_iter (int): Iteration cap

    Returns:
        np.ndarray: (n,) roots t

    Raises:
        RootFindError: If the bracket has no sign change or the iteration
            does not converge
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    n = len(x)
    if index is None:
        index = np.arange(n)
    if np.any(np.linalg.norm(G, axis=1) == 0.0):
        raise GeometryError("Search direction for d~ vanishes")

    def residual(t, rows):
        values, grads = source(x[rows] + t[:, None] * G[rows], index[rows])
        return values - target[rows], np.einsum('ij,ij->i', grads, G[rows])

    all_rows = np.arange(n)
    t = np.zeros(n)
    f, df = residual(t, all_rows)
    done = np.abs(f) <= tol
    if np.all(done):
        return t

    half = BRACKET_FACTOR * h
    lo = np.full(n, -half)
    hi = np.full(n, half)
    f_lo, _ = residual(lo, all_rows)
    f_hi, _ = residual(hi, all_rows)
    no_change = ~done & (f_lo * f_hi > 0)
    if np.any(no_change):
        bad = np.nonzero(no_change)[0]
        raise RootFindError(
            f"No sign change of the lift residual on [-{half:g}, {half:g}] "
            f"at {len(bad)} node(s), first at {x[bad[0]].tolist()}",
            points=x[bad],
            bracket_values=np.column_stack([f_lo[bad], f_hi[bad]]),
            element=index[bad],
        )

    for _ in range(max_iter):
        rows = np.nonzero(~done)[0]
        if len(rows) == 0:
            break
        # shrink the bracket around the current iterate
        same = np.sign(f[rows]) == np.sign(f_lo[rows])
        lo[rows] = np.where(same, t[rows], lo[rows])
        f_lo[rows] = np.where(same, f[rows], f_lo[rows])
        hi[rows] = np.where(same, hi[rows], t[rows])

        with np.errstate(divide='ignore', invalid='ignore'):
            newton = t[rows] - f[rows] / df[rows]
        bisect = (~np.isfinite(newton)) | (newton <= lo[rows]) \
            | (newton >= hi[rows])
        t[rows] = np.where(bisect, 0.5 * (lo[rows] + hi[rows]), newton)
        f[rows], df[rows] = residual(t[rows], rows)
        width = hi[rows] - lo[rows]
        done[rows] = (np.abs(f[rows]) <= tol) | (width <= 1e-15)

    if not np.all(done):
        bad = np.nonzero(~done)[0]
        raise RootFindError(
            f"Lift root finding did not converge in {max_iter} iterations "
            f"at {len(bad)} node(s)",
            points=x[bad],
            bracket_values=np.column_stack([f_lo[bad], f[bad]]),
            element=index[bad],
        )
    return t


def find_dtilde(x, G, source, target, h):
    """
    Smallest-magnitude lift distance for a single point.

    Args:
        x (np.ndarray): (3,) start point
        G (np.ndarray): (3,) search direction
        source (callable): (points, index) -> (values, grads)
        target (float): Target value
        h (float): Mesh size

    Returns:
        float: t with |source(x + t G) - target| <= 1e-12 and |t| <= 2h
    """
    t = find_dtilde_batch(np.reshape(x, (1, 3)), np.reshape(G, (1, 3)),
                          source, np.array([target]), h)
    return float(t[0])


@dataclass
class MeshDeformation:
    """
    Continuous piecewise-polynomial deformation Theta_h on the active tets.

    Attributes:
        space (FESpace): Scalar space of degree k_g on the active tets
        displacement (FEFunction): Theta_h - id, shape (n_dofs, 3)
        kg (int): Geometry degree
        mode (str): 'identity', 'fe' or 'exact'
    """
    space: object
    displacement: FEFunction
    kg: int
    mode: str

    @property
    def maps(self):
        return self.space.maps

    def map_reference(self, cells, xi):
        """
        Theta_h(v0 + B xi) and its derivative with respect to xi.

        Args:
            cells (np.ndarray): (n,) cell indices
            xi (np.ndarray): (n, 3) reference points

        Returns:
            tuple: (x (n, 3), J (n, 3, 3)) with J = DTheta_h B
        """
        cells = np.asarray(cells)
        xi = np.atleast_2d(xi)
        maps = self.space.maps
        x = maps.to_physical(cells, xi)
        J = maps.B[cells].copy()
        if self.mode == 'identity':
            return x, J
        phi, dphi = eval_basis(self.kg, xi, check=False)
        c = self.displacement.local_coefficients(cells)
        x = x + np.einsum('nl,nlm->nm', phi, c)
        J = J + np.einsum('nlm,nlj->nmj', c, dphi)
        return x, J

    def jacobian(self, cells, xi):
        """
        Mapped points and DTheta_h with respect to background coordinates.

        Raises:
            GeometryError: If det DTheta_h <= 0 at any point
        """
        x, J = self.map_reference(cells, xi)
        D = np.einsum('nij,njk->nik', J, self.space.maps.B_inv[cells])
        det = np.linalg.det(D)
        if np.any(det <= 0.0):
            raise GeometryError(
                f"Nonpositive deformation Jacobian (min det {det.min():.3e})"
            )
        return x, D, det

    def max_displacement(self):
        """Largest nodal displacement magnitude."""
        return float(np.linalg.norm(self.displacement.coefficients,
                                    axis=1).max(initial=0.0))


def _lift_chunk(args):
    """
    Lift distances t for all nodes of a chunk of cells.

    Args:
        args (tuple): (nodes (m, n_local, 3), directions (m, 3),
            targets (m, n_local), source, h)

    Returns:
        np.ndarray: (m, n_local) lift distances
    """
    nodes, directions, targets, source, h = args
    m, n_loc, _ = nodes.shape
    index = np.repeat(np.arange(m), n_loc)
    t = find_dtilde_batch(
        nodes.reshape(-1, 3),
        np.repeat(directions, n_loc, axis=0),
        source,
        targets.ravel(),
        h,
        index=index,
    )
    return t.reshape(m, n_loc)


def build_theta(mesh, cut, phi_h, phi_hat, oracle, k_g, mode='fe',
                processes=1, show_progress=False):
    """
    Build the parametric mesh transformation Theta_h of degree k_g.

    At every Lagrange node xi of every active tet the lift Psi(xi) =
    xi + d~ G_T uses the tet-wise direction G_T = grad(phi_hat)/|grad(phi_hat)|
    and the root d~ of source(xi + d~ G_T) = phi_hat(xi). Nodal lifts are
    averaged at shared nodes.

    Args:
        mesh (BackgroundMesh): Background mesh
        cut (CutTopology): Active tets and linear normals
        phi_h (FEFunction): Level-set interpolant of degree k_g
        phi_hat (FEFunction): Its linear reduction
        oracle (LevelSetOracle): Exact level set (used in 'exact' mode)
        k_g (int): Geometry degree
        mode (str): 'fe' (root finding on phi_h) or 'exact'
        processes (int): Worker processes for element chunks
        show_progress (bool): Display a tqdm bar over chunks

    Returns:
        MeshDeformation: Theta_h on the active tets

    Raises:
        ConfigurationError: If the mode is unknown
        RootFindError: Propagated with the failing background tet id
    """
    if mode not in GEOMETRY_SOURCES:
        raise ConfigurationError(
            f"Unknown geometry source '{mode}', expected one of "
            f"{GEOMETRY_SOURCES}"
        )
    space = build_fespace(mesh, cut.active_tets, k_g)
    zero = FEFunction(space, np.zeros((space.n_dofs, 3)))
    if k_g == 1:
        logger.info("Geometry degree 1: Theta_h is the identity")
        return MeshDeformation(space, zero, 1, 'identity')

    band_cells = np.searchsorted(phi_h.space.tets, cut.active_tets)
    if not np.array_equal(phi_h.space.tets[band_cells], cut.active_tets):
        raise GeometryError("phi_h is not defined on every active tet")

    ref = reference_nodes(k_g)
    maps = space.maps
    nodes = maps.v0[:, None, :] + np.einsum('cij,lj->cli', maps.B, ref)
    lam = np.column_stack([1.0 - ref.sum(axis=1), ref])
    vertex_values = phi_hat.local_coefficients(band_cells)[:, :4]
    targets = vertex_values @ lam.T

    if mode == 'fe':
        source = FESource.from_function(phi_h, band_cells)
    else:
        source = ExactSource(oracle)

    chunks = [np.arange(s, min(s + CHUNK_CELLS, space.n_cells))
              for s in range(0, space.n_cells, CHUNK_CELLS)]
    tasks = [(nodes[rows], cut.n_lin[rows], targets[rows],
              source.subset(rows), mesh.h) for rows in chunks]

    lifts = []
    try:
        with tqdm(total=len(tasks), desc=f"Theta_h (k_g={k_g})",
                  disable=not show_progress) as pbar:
            if processes > 1 and len(tasks) > 1:
                with mp.Pool(processes=processes) as pool:
                    for t in pool.imap(_lift_chunk, tasks):
                        lifts.append(t)
                        pbar.update()
            else:
                for task in tasks:
                    lifts.append(_lift_chunk(task))
                    pbar.update()
    except RootFindError as exc:
        # map chunk-local rows back to background tet ids
        offset = CHUNK_CELLS * len(lifts)
        if exc.element is not None:
            exc.element = cut.active_tets[offset + np.asarray(exc.element)]
        logger.error(f"Root finding failed: {exc}")
        raise

    t = np.concatenate(lifts, axis=0)
    local_disp = t[:, :, None] * cut.n_lin[:, None, :]

    # Oswald-type averaging at shared nodes
    dofs = space.cell_dofs.ravel()
    counts = np.bincount(dofs, minlength=space.n_dofs)
    disp = np.column_stack([
        np.bincount(dofs, weights=local_disp[..., c].ravel(),
                    minlength=space.n_dofs)
        for c in range(3)
    ]) / counts[:, None]

    deformation = MeshDeformation(space, FEFunction(space, disp), k_g, mode)
    logger.info(
        f"Theta_h built: k_g={k_g}, source={mode}, "
        f"max displacement {deformation.max_displacement():.3e}"
    )
    return deformation
