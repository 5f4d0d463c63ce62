"""
Discrete Forms Module

Element-wise assembly of the discrete bilinear forms on Gamma_h and on the
mapped active domain, for vector fields in (V_{h,Theta}^k)^3:
- a_h:   E_h(u):E_h(v) + u.v on Gamma_h
- a_T,h: E_T,h(u):E_T,h(v) + P_h u.P_h v on Gamma_h
- k_h:   eta (u.n~_h)(v.n~_h) on Gamma_h
- s_h:   rho (grad u n_h).(grad v n_h) on Theta_h(Omega_h^Gamma)
- b_h:   (u.n_h) mu on Gamma_h + rho~ (n_h^T grad u n_h)(n_h.grad mu) in the
         volume
plus the multiplier M-form and the load vector.

Vector unknowns are component-blocked (dof c * n + i). Local element
matrices are ordered (local node a, component c) -> 3 a + c, matching
FESpace.vector_dofs. Assembly runs over chunks of cells: einsum on padded
quadrature arrays, COO triplets, summed into CSR.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from errors import ConfigurationError

logger = logging.getLogger(__name__)

CHUNK_CELLS = 1024
BILINEAR_FORMS = ('a', 'aT', 'k', 's')


@dataclass(frozen=True)
class ParamScaling:
    """
    Mesh-dependent parameter c * h^{-e}.

    Attributes:
        c (float): Coefficient
        e (float): Exponent of 1/h
    """
    c: float
    e: float

    @classmethod
    def parse(cls, value, name="parameter"):
        """
        Build from [c, e], {c: .., e: ..} or an existing ParamScaling.

        Raises:
            ConfigurationError: For any other shape
        """
        if isinstance(value, ParamScaling):
            return value
        if isinstance(value, dict):
            unknown = set(value) - {'c', 'e'}
            if unknown or not {'c', 'e'} <= set(value):
                raise ConfigurationError(
                    f"{name} must have exactly the keys c and e, got "
                    f"{sorted(value)}"
                )
            return cls(float(value['c']), float(value['e']))
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return cls(float(value[0]), float(value[1]))
        raise ConfigurationError(
            f"{name} must be [c, e] or {{c: .., e: ..}}, got {value!r}"
        )

    def resolve(self, h):
        return self.c * h ** (-self.e)

    def as_list(self):
        return [self.c, self.e]


@dataclass(frozen=True)
class FormParams:
    """
    Resolved form parameters for one mesh size.

    Attributes:
        h (float): Nominal mesh size
        eta (float or None): Penalty weight
        rho (float): Volume stabilization weight
        rho_tilde (float): Multiplier stabilization weight
    """
    h: float
    eta: Optional[float]
    rho: float
    rho_tilde: float

    @classmethod
    def resolve(cls, h, eta, rho, rho_tilde):
        """
        Evaluate the scalings at h and warn outside h <~ rho <~ 1/h.

        Args:
            h (float): Nominal mesh size
            eta (ParamScaling or None): Penalty scaling
            rho (ParamScaling): Stabilization scaling
            rho_tilde (ParamScaling): Multiplier stabilization scaling
        """
        for name, scaling in (('rho', rho), ('rho_tilde', rho_tilde)):
            if not -1.0 <= scaling.e <= 1.0:
                logger.warning(
                    f"{name} = {scaling.c:g} h^-{scaling.e:g} is outside the "
                    f"range h <~ {name} <~ 1/h"
                )
        if eta is not None and eta.resolve(h) <= 0:
            raise ConfigurationError(
                f"Penalty weight must be positive, got {eta.resolve(h)}"
            )
        return cls(
            h=h,
            eta=None if eta is None else eta.resolve(h),
            rho=rho.resolve(h),
            rho_tilde=rho_tilde.resolve(h),
        )


@dataclass
class GeometryStreams:
    """
    Quadrature and geometric fields shared by all forms of one level.

    Attributes:
        surface (SurfaceQuadrature): Rule on Gamma_h
        volume (VolumeQuadrature): Rule on the mapped active tets
        n_tilde (np.ndarray or None): Penalty normals at surface points
        H_h (np.ndarray or None): Discrete Weingarten maps at surface points
    """
    surface: object
    volume: object
    n_tilde: Optional[np.ndarray] = None
    H_h: Optional[np.ndarray] = None

    @property
    def n_cells(self):
        return self.surface.n_cells


def projector(n):
    """P = I - n n^T for normals of any leading shape."""
    return np.eye(3) - n[..., :, None] * n[..., None, :]


def strain_h(grad, n_h):
    """
    Discrete surface strain E_h = sym(P_h grad P_h).

    Args:
        grad (np.ndarray): (..., 3, 3) full gradient, row i = grad u_i
        n_h (np.ndarray): (..., 3) unit normal

    Returns:
        np.ndarray: (..., 3, 3)
    """
    P = projector(np.asarray(n_h, dtype=float))
    G = P @ np.asarray(grad, dtype=float) @ P
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def strain_Th(grad, value, n_h, H_h):
    """
    Tangentially corrected strain E_T,h = E_h - (u.n_h) H_h.

    Args:
        grad (np.ndarray): (..., 3, 3) full gradient
        value (np.ndarray): (..., 3) field value
        n_h (np.ndarray): (..., 3) unit normal
        H_h (np.ndarray): (..., 3, 3) discrete Weingarten map
    """
    u_n = np.einsum('...i,...i->...', value, n_h)
    return strain_h(grad, n_h) - u_n[..., None, None] * np.asarray(H_h)


def _chunks(n_cells, show_progress, desc):
    starts = range(0, n_cells, CHUNK_CELLS)
    for s in tqdm(starts, desc=desc, disable=not show_progress,
                  total=len(starts)):
        yield np.arange(s, min(s + CHUNK_CELLS, n_cells))


def _ein(spec, *operands):
    return np.einsum(spec, *operands, optimize=True)


def _add_identity_block(K, M):
    """K[e, a, c, b, c] += M[e, a, b]."""
    for c in range(3):
        K[:, :, c, :, c] += M


def _scatter(rows, cols, local, shape):
    return sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()


def _local_surface(form, phi, g, w, n_h, n_tilde, H_h):
    """
    Local matrices (e, a, c, b, d) of a surface form on one chunk.
    """
    e, q, nloc = phi.shape
    K = np.zeros((e, nloc, 3, nloc, 3))
    if form == 'k':
        K += _ein('eq,eqa,eqb,eqc,eqd->eacbd', w, phi, phi, n_tilde, n_tilde)
        return K
    P = projector(n_h)
    pg = _ein('eqij,eqaj->eqai', P, g)
    K += 0.5 * _ein('eq,eqcd,eqai,eqbi->eacbd', w, P, pg, pg)
    K += 0.5 * _ein('eq,eqbc,eqad->eacbd', w, pg, pg)
    if form == 'a':
        _add_identity_block(K, _ein('eq,eqa,eqb->eab', w, phi, phi))
        return K
    # a_T: E_T,h = E_h - (u.n_h) H_h and tangential mass
    Hs = 0.5 * (H_h + np.swapaxes(H_h, -1, -2))
    W = P @ Hs @ P
    Wg = _ein('eqij,eqaj->eqai', W, g)
    K -= _ein('eq,eqb,eqd,eqac->eacbd', w, phi, n_h, Wg)
    K -= _ein('eq,eqa,eqc,eqbd->eacbd', w, phi, n_h, Wg)
    HH = np.einsum('eqij,eqij->eq', H_h, H_h)
    K += _ein('eq,eqa,eqb,eqc,eqd->eacbd', w * HH, phi, phi, n_h, n_h)
    K += _ein('eq,eqa,eqb,eqcd->eacbd', w, phi, phi, P)
    return K


def assemble_bilinear(form, space, streams, params=None, show_progress=False):
    """
    Assemble one vector bilinear form.

    Args:
        form (str): 'a' (a_h), 'aT' (a_T,h), 'k' (k_h) or 's' (s_h)
        space (FESpace): Scalar velocity space of degree k
        streams (GeometryStreams): Quadrature and geometric fields
        params (FormParams): Resolved parameters (eta for 'k', rho for 's')
        show_progress (bool): Display a tqdm bar over chunks

    Returns:
        scipy.sparse.csr_matrix: (3 n_dofs, 3 n_dofs) symmetric matrix

    Raises:
        ConfigurationError: For an unknown form or missing parameters
    """
    if form not in BILINEAR_FORMS:
        raise ConfigurationError(
            f"Unknown form '{form}', expected one of {BILINEAR_FORMS}"
        )
    if form == 'k' and (params is None or params.eta is None
                        or streams.n_tilde is None):
        raise ConfigurationError("k_h needs eta and the penalty normal")
    if form == 'aT' and streams.H_h is None:
        raise ConfigurationError("a_T,h needs the discrete Weingarten map")
    if form == 's' and params is None:
        raise ConfigurationError("s_h needs rho")

    n = 3 * space.n_dofs
    quad = streams.volume if form == 's' else streams.surface
    vdofs = space.vector_dofs()
    matrix = sp.csr_matrix((n, n))

    for rows in _chunks(space.n_cells, show_progress, f"assemble {form}"):
        phi, g = quad.basis(space.degree, rows)
        w = quad.w[rows]
        n_h = quad.n_h[rows]
        if form == 's':
            gn = np.einsum('eqai,eqi->eqa', g, n_h)
            S = params.rho * _ein('eq,eqa,eqb->eab', w, gn, gn)
            K = np.zeros((len(rows),) + (phi.shape[2], 3) * 2)
            _add_identity_block(K, S)
        else:
            K = _local_surface(
                form, phi, g, w, n_h,
                None if streams.n_tilde is None else streams.n_tilde[rows],
                None if streams.H_h is None else streams.H_h[rows],
            )
            if form == 'k':
                K *= params.eta
        nloc3 = 3 * phi.shape[2]
        K = K.reshape(len(rows), nloc3, nloc3)
        dofs = vdofs[rows]
        matrix = matrix + _scatter(
            np.broadcast_to(dofs[:, :, None], K.shape),
            np.broadcast_to(dofs[:, None, :], K.shape),
            K, (n, n)
        )
    return matrix.tocsr()


def assemble_b(space_u, space_l, streams, rho_tilde, show_progress=False):
    """
    Multiplier coupling b_h(u, mu) = (u.n_h, mu)_Gamma_h + s~_h(u, mu).

    Args:
        space_u (FESpace): Scalar velocity space
        space_l (FESpace): Multiplier space of degree k_l
        streams (GeometryStreams): Quadrature data
        rho_tilde (float): Volume weight of s~_h

    Returns:
        scipy.sparse.csr_matrix: (n_l, 3 n_u) with rows = multiplier dofs
    """
    shape = (space_l.n_dofs, 3 * space_u.n_dofs)
    surf, vol = streams.surface, streams.volume
    vdofs = space_u.vector_dofs()
    matrix = sp.csr_matrix(shape)

    for rows in _chunks(space_u.n_cells, show_progress, "assemble b"):
        phi_s, _ = surf.basis(space_u.degree, rows)
        mu_s, _ = surf.basis(space_l.degree, rows)
        _, g_v = vol.basis(space_u.degree, rows)
        _, dmu_v = vol.basis(space_l.degree, rows)
        n_s, n_v = surf.n_h[rows], vol.n_h[rows]
        Bl = _ein('eq,eqm,eqa,eqc->emac', surf.w[rows], mu_s, phi_s, n_s)
        gn = np.einsum('eqai,eqi->eqa', g_v, n_v)
        mun = np.einsum('eqmi,eqi->eqm', dmu_v, n_v)
        Bl += rho_tilde * _ein('eq,eqm,eqa,eqc->emac', vol.w[rows], mun, gn,
                               n_v)
        Bl = Bl.reshape(len(rows), Bl.shape[1], -1)
        ldofs = space_l.cell_dofs[rows]
        matrix = matrix + _scatter(
            np.broadcast_to(ldofs[:, :, None], Bl.shape),
            np.broadcast_to(vdofs[rows][:, None, :], Bl.shape),
            Bl, shape
        )
    return matrix.tocsr()


def assemble_multiplier_mass(space_l, streams, rho, show_progress=False):
    """
    M-form m_h(lam, mu) = (lam, mu)_Gamma_h + rho (n_h.grad lam, n_h.grad mu).

    Returns:
        scipy.sparse.csr_matrix: (n_l, n_l) SPD-in-practice matrix
    """
    n = space_l.n_dofs
    surf, vol = streams.surface, streams.volume
    matrix = sp.csr_matrix((n, n))
    for rows in _chunks(space_l.n_cells, show_progress, "assemble M"):
        mu_s, _ = surf.basis(space_l.degree, rows)
        _, dmu_v = vol.basis(space_l.degree, rows)
        M = _ein('eq,eqa,eqb->eab', surf.w[rows], mu_s, mu_s)
        mun = np.einsum('eqai,eqi->eqa', dmu_v, vol.n_h[rows])
        M += rho * _ein('eq,eqa,eqb->eab', vol.w[rows], mun, mun)
        dofs = space_l.cell_dofs[rows]
        matrix = matrix + _scatter(
            np.broadcast_to(dofs[:, :, None], M.shape),
            np.broadcast_to(dofs[:, None, :], M.shape),
            M, (n, n)
        )
    return matrix.tocsr()


def assemble_rhs(space, streams, f_h):
    """
    Load vector (f_h, v)_Gamma_h for all vector basis functions.

    Args:
        space (FESpace): Scalar velocity space
        streams (GeometryStreams): Quadrature data
        f_h (callable): (N, 3) surface points -> (N, 3) data values

    Returns:
        np.ndarray: (3 n_dofs,) component-blocked load vector
    """
    surf = streams.surface
    points = surf.flat('x')
    f = np.asarray(f_h(points)).reshape(surf.n_cells, surf.n_points, 3)
    f = np.where(surf.valid[..., None], f, 0.0)
    vdofs = space.vector_dofs()
    b = np.zeros(3 * space.n_dofs)
    for rows in _chunks(space.n_cells, False, "assemble rhs"):
        phi, _ = surf.basis(space.degree, rows)
        local = _ein('eq,eqa,eqc->eac', surf.w[rows], phi, f[rows])
        b += np.bincount(vdofs[rows].ravel(), weights=local.ravel(),
                         minlength=len(b))
    return b
