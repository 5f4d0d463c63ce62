"""
System Builder Module

Combines the discrete forms into the linear systems of the three methods:
- p1 (inconsistent penalty): a_h + s_h + k_h
- p2 (consistent penalty):   a_T,h + s_h + k_h
- lagrange (multiplier):     [[a_h + s_h, b_h^T], [b_h, 0]]

Also builds the geometry streams of a level and exports assembled systems in
matrix-market format.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import scipy.io
import scipy.sparse as sp

from discrete_geometry import (
    penalty_normal,
    surface_quadrature,
    volume_quadrature,
    weingarten_h,
)
from errors import ConfigurationError
from forms import (
    GeometryStreams,
    assemble_b,
    assemble_bilinear,
    assemble_multiplier_mass,
    assemble_rhs,
)

logger = logging.getLogger(__name__)

METHODS = ('p1', 'p2', 'lagrange')
PIN_THRESHOLD = 1e-14


@dataclass
class LinearSystem:
    """
    Assembled system of one method on one level.

    Attributes:
        method (str): 'p1', 'p2' or 'lagrange'
        matrix (scipy.sparse.csr_matrix): Full system matrix
        rhs (np.ndarray): Right-hand side
        n_u (int): Number of vector velocity unknowns (3 n_dofs)
        n_l (int): Number of multiplier unknowns (0 for penalty methods)
        blocks (dict): Named form matrices ('a', 'aT', 'k', 's', 'A', 'B', 'M')
        pinned (np.ndarray): Multiplier dofs fixed to zero
    """
    method: str
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int
    n_l: int = 0
    blocks: Dict[str, sp.csr_matrix] = field(default_factory=dict)
    pinned: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )

    @property
    def size(self):
        return self.n_u + self.n_l


def build_streams(cut, deformation, oracle, k, k_g, k_p=None,
                  with_weingarten=False, degree_bump=0):
    """
    Quadrature rules and geometric fields of one level.

    Surface rules integrate degree 2k + 2, volume rules degree 2k (plus an
    optional bump for saturation checks).

    Args:
        cut (CutTopology): Interface data
        deformation (MeshDeformation): Theta_h
        oracle (LevelSetOracle): Exact level set
        k (int): Velocity degree
        k_g (int): Geometry degree
        k_p (int or None): Penalty-normal degree; None skips n~_h
        with_weingarten (bool): Also evaluate H_h
        degree_bump (int): Added to both quadrature degrees

    Returns:
        GeometryStreams: Shared per-level geometry
    """
    surface = surface_quadrature(cut, deformation, 2 * k + 2 + degree_bump)
    volume = volume_quadrature(cut, deformation, 2 * k + degree_bump)
    n_tilde = None
    if k_p is not None:
        n_tilde = penalty_normal(deformation, oracle, k_p).evaluate(surface)
    H_h = None
    if with_weingarten:
        H_h = weingarten_h(deformation, cut.n_lin, k_g).evaluate(surface)
    return GeometryStreams(surface=surface, volume=volume, n_tilde=n_tilde,
                           H_h=H_h)


def pin_multipliers(B, M, threshold=PIN_THRESHOLD):
    """
    Multiplier dofs whose M-diagonal is negligible.

    Returns:
        tuple: (pinned ids, B with cleared rows, M with unit diagonal there)
    """
    diag = M.diagonal()
    pinned = np.nonzero(diag < threshold * diag.max(initial=0.0))[0]
    if len(pinned) == 0:
        return pinned, B, M
    logger.warning(
        f"Pinning {len(pinned)} multiplier dofs with negligible support"
    )
    keep = np.ones(B.shape[0])
    keep[pinned] = 0.0
    B = sp.diags(keep) @ B
    unit = np.zeros(M.shape[0])
    unit[pinned] = 1.0
    M = (sp.diags(keep) @ M @ sp.diags(keep) + sp.diags(unit)).tocsr()
    return pinned, B.tocsr(), M


def build_system(method, space_u, streams, params, f_h, space_l=None,
                 show_progress=False):
    """
    Assemble the system matrix and right-hand side of a method.

    Args:
        method (str): 'p1', 'p2' or 'lagrange'
        space_u (FESpace): Scalar velocity space
        streams (GeometryStreams): Geometry of the level
        params (FormParams): Resolved eta, rho, rho_tilde
        f_h (callable): Surface data f_h at physical points
        space_l (FESpace or None): Multiplier space (lagrange only)
        show_progress (bool): tqdm bars over element chunks

    Returns:
        LinearSystem: P1h/P2h SPD system of size 3 n_dofs, or the
            symmetric indefinite block system for the multiplier method

    Raises:
        ConfigurationError: If method-specific ingredients are missing
    """
    if method not in METHODS:
        raise ConfigurationError(
            f"Unknown method '{method}', expected one of {METHODS}"
        )
    n_u = 3 * space_u.n_dofs
    rhs_u = assemble_rhs(space_u, streams, f_h)
    s = assemble_bilinear('s', space_u, streams, params, show_progress)

    if method in ('p1', 'p2'):
        if params.eta is None or streams.n_tilde is None:
            raise ConfigurationError(
                f"Method {method} needs eta and k_p (penalty normal)"
            )
        form = 'a' if method == 'p1' else 'aT'
        a = assemble_bilinear(form, space_u, streams, params, show_progress)
        k = assemble_bilinear('k', space_u, streams, params, show_progress)
        matrix = (a + s + k).tocsr()
        logger.info(f"System {method}: {n_u} unknowns, {matrix.nnz} nonzeros")
        return LinearSystem(method, matrix, rhs_u, n_u,
                            blocks={form: a, 's': s, 'k': k})

    if space_l is None:
        raise ConfigurationError("Method lagrange needs a multiplier space")
    a = assemble_bilinear('a', space_u, streams, params, show_progress)
    A = (a + s).tocsr()
    B = assemble_b(space_u, space_l, streams, params.rho_tilde, show_progress)
    M = assemble_multiplier_mass(space_l, streams, params.rho_tilde,
                                 show_progress)
    pinned, B, M = pin_multipliers(B, M)
    n_l = space_l.n_dofs
    lower = sp.csr_matrix((n_l, n_l))
    if len(pinned):
        unit = np.zeros(n_l)
        unit[pinned] = 1.0
        lower = sp.diags(unit).tocsr()
    matrix = sp.bmat([[A, B.T], [B, lower]], format='csr')
    rhs = np.concatenate([rhs_u, np.zeros(n_l)])
    logger.info(
        f"System lagrange: {n_u} + {n_l} unknowns, {matrix.nnz} nonzeros"
    )
    return LinearSystem('lagrange', matrix, rhs, n_u, n_l,
                        blocks={'a': a, 's': s, 'A': A, 'B': B, 'M': M},
                        pinned=pinned)


def export_system(system, directory, prefix="system"):
    """
    Write the system matrix and right-hand side in matrix-market format.

    Args:
        system (LinearSystem): Assembled system
        directory (str): Target directory (created if missing)
        prefix (str): File name prefix

    Returns:
        tuple: (matrix path, rhs path)
    """
    os.makedirs(directory, exist_ok=True)
    matrix_path = os.path.join(directory, f"{prefix}_{system.method}.mtx")
    rhs_path = os.path.join(directory, f"{prefix}_{system.method}_rhs.mtx")
    scipy.io.mmwrite(matrix_path, system.matrix, symmetry='general')
    scipy.io.mmwrite(rhs_path, system.rhs.reshape(-1, 1))
    logger.info(f"System exported to {matrix_path}")
    return matrix_path, rhs_path
