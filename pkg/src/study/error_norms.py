"""
Error Norms Module

Computable error measures of a discrete solution against the exact
normal-constant extensions u^e = u* o p and lambda^e = lambda o p:
- the method-matched energy norms |.|_{A_h^{P1}}, |.|_{A_h^{P2}} and
  |.|_{A_h^L}, with their a/s/k term breakdown
- the multiplier norm |mu|_M^2 = |mu|^2_{L2(Gamma_h)} + rho |n_h.grad mu|^2
  on the mapped active domain
- surface diagnostics: L2 (full, tangential, normal) and H1 on Gamma_h
- the energy error of the parametric interpolant of u^e and, for the
  multiplier method, the combined velocity/multiplier error

Exact fields are passed as callables mapping (N, 3) points to
(values, gradients); FE functions are evaluated at the quadrature points
of the level's geometry streams.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from errors import ConfigurationError
from fe_space import evaluate_reference, interpolate_parametric
from forms import projector, strain_h, strain_Th

logger = logging.getLogger(__name__)

CHUNK_CELLS = 512
ENERGY_TERMS = {
    'p1': ('a', 's', 'k'),
    'p2': ('a', 's', 'k'),
    'lagrange': ('a', 's'),
}


@dataclass
class ErrorReport:
    """
    Errors of one solve.

    Attributes:
        err_energy (float): Method-matched energy norm of u^e - u_h
        err_M (float): M-norm of lambda^e - lambda_h (NaN for penalty
            methods)
        err_L2 (float): |u^e - u_h|_{L2(Gamma_h)}
        err_L2_tan (float): |P_h(u^e - u_h)|_{L2(Gamma_h)}
        err_L2_normal (float): |(u^e - u_h).n_h|_{L2(Gamma_h)}
        err_H1 (float): |u^e - u_h|_{H1(Gamma_h)}
        terms (dict): Squared energy contributions keyed 'a', 's', 'k'
        err_interp (float): Energy error of the parametric interpolant of
            u^e (NaN when not computed)
        err_combined (float): sqrt(err_energy^2 + err_M^2) for the
            multiplier method, NaN otherwise
    """
    err_energy: float
    err_M: float = float('nan')
    err_L2: float = float('nan')
    err_L2_tan: float = float('nan')
    err_L2_normal: float = float('nan')
    err_H1: float = float('nan')
    terms: Dict[str, float] = field(default_factory=dict)
    err_interp: float = float('nan')
    err_combined: float = float('nan')

    def to_dict(self):
        return asdict(self)


def _chunks(n_cells):
    for start in range(0, n_cells, CHUNK_CELLS):
        yield np.arange(start, min(start + CHUNK_CELLS, n_cells))


def _difference(f_h, exact, quad, rows):
    """
    exact - f_h (values and gradients) at the points of some cells.

    Either side may be None, meaning zero.
    """
    n_q = quad.n_points
    shape = (len(rows), n_q)
    points = quad.x[rows].reshape(-1, 3)
    value, grad = 0.0, 0.0
    if exact is not None:
        value, grad = exact(points)
        value, grad = np.asarray(value), np.asarray(grad)
    if f_h is not None:
        vh, gh = evaluate_reference(
            f_h, np.repeat(rows, n_q), quad.xi[rows].reshape(-1, 3),
            quad.jac_inv[rows].reshape(-1, 3, 3),
        )
        value = value - vh
        grad = grad - gh
    value, grad = np.asarray(value), np.asarray(grad)
    return (value.reshape(shape + value.shape[1:]),
            grad.reshape(shape + grad.shape[1:]))


def _check_method(method, streams, params):
    if method not in ENERGY_TERMS:
        raise ConfigurationError(
            f"Unknown method '{method}', expected one of "
            f"{tuple(ENERGY_TERMS)}"
        )
    if method in ('p1', 'p2') and (params.eta is None
                                   or streams.n_tilde is None):
        raise ConfigurationError(
            f"Energy norm of {method} needs eta and the penalty normal"
        )
    if method == 'p2' and streams.H_h is None:
        raise ConfigurationError(
            "Energy norm of p2 needs the discrete Weingarten map"
        )


def energy_terms(method, u_h, exact, streams, params):
    """
    Squared contributions of each form to |u^e - u_h|^2 in the method norm.

    p1: a_h + s_h + k_h, p2: a_T,h + s_h + k_h, lagrange: a_h + s_h.

    Args:
        method (str): 'p1', 'p2' or 'lagrange'
        u_h (FEFunction or None): Discrete vector field (None = zero)
        exact (callable or None): points -> (values (N, 3), grads (N, 3, 3))
        streams (GeometryStreams): Quadrature and geometric fields
        params (FormParams): Resolved parameters

    Returns:
        dict: Squared terms keyed 'a', 's' and (penalty methods) 'k'
    """
    _check_method(method, streams, params)
    surf, vol = streams.surface, streams.volume
    terms = dict.fromkeys(ENERGY_TERMS[method], 0.0)

    for rows in _chunks(surf.n_cells):
        e, ge = _difference(u_h, exact, surf, rows)
        w = surf.w[rows]
        n_h = surf.n_h[rows]
        if method == 'p2':
            E = strain_Th(ge, e, n_h, streams.H_h[rows])
            Pe = np.einsum('eqij,eqj->eqi', projector(n_h), e)
            mass = np.einsum('eqi,eqi->eq', Pe, Pe)
        else:
            E = strain_h(ge, n_h)
            mass = np.einsum('eqi,eqi->eq', e, e)
        density = np.einsum('eqij,eqij->eq', E, E) + mass
        terms['a'] += float(np.sum(w * density))
        if 'k' in terms:
            e_n = np.einsum('eqi,eqi->eq', e, streams.n_tilde[rows])
            terms['k'] += params.eta * float(np.sum(w * e_n ** 2))

    for rows in _chunks(vol.n_cells):
        _, ge = _difference(u_h, exact, vol, rows)
        dn = np.einsum('eqij,eqj->eqi', ge, vol.n_h[rows])
        terms['s'] += params.rho * float(
            np.sum(vol.w[rows] * np.einsum('eqi,eqi->eq', dn, dn))
        )
    return terms


def energy_error(method, u_h, exact, streams, params):
    """
    Method-matched energy norm of u^e - u_h.

    Args:
        method (str): 'p1', 'p2' or 'lagrange'
        u_h (FEFunction): Discrete vector field
        exact (callable): u^e as points -> (values, grads)
        streams (GeometryStreams): Geometry of the level
        params (FormParams): Resolved parameters

    Returns:
        tuple: (error, squared term breakdown)
    """
    terms = energy_terms(method, u_h, exact, streams, params)
    return math.sqrt(max(sum(terms.values()), 0.0)), terms


def multiplier_error(lam_h, exact, streams, rho):
    """
    M-norm of lambda^e - lambda_h.

    Args:
        lam_h (FEFunction or None): Discrete multiplier (None = zero)
        exact (callable or None): lambda^e as points -> (values (N,),
            grads (N, 3))
        streams (GeometryStreams): Geometry of the level
        rho (float): Weight of the normal-derivative term

    Returns:
        float: Nonnegative M-norm
    """
    surf, vol = streams.surface, streams.volume
    total = 0.0
    for rows in _chunks(surf.n_cells):
        e, _ = _difference(lam_h, exact, surf, rows)
        total += float(np.sum(surf.w[rows] * e ** 2))
    for rows in _chunks(vol.n_cells):
        _, ge = _difference(lam_h, exact, vol, rows)
        dn = np.einsum('eqi,eqi->eq', ge, vol.n_h[rows])
        total += rho * float(np.sum(vol.w[rows] * dn ** 2))
    return math.sqrt(max(total, 0.0))


def surface_errors(u_h, exact, streams):
    """
    L2 and H1 diagnostics of u^e - u_h on Gamma_h.

    The surface gradient is P_h grad P_h.

    Returns:
        dict: err_L2, err_L2_tan, err_L2_normal, err_H1
    """
    surf = streams.surface
    sums = dict.fromkeys(('full', 'tan', 'normal', 'grad'), 0.0)
    for rows in _chunks(surf.n_cells):
        e, ge = _difference(u_h, exact, surf, rows)
        w = surf.w[rows]
        n_h = surf.n_h[rows]
        P = projector(n_h)
        e_n = np.einsum('eqi,eqi->eq', e, n_h)
        Pe = np.einsum('eqij,eqj->eqi', P, e)
        G = P @ ge @ P
        sums['full'] += float(np.sum(w * np.einsum('eqi,eqi->eq', e, e)))
        sums['tan'] += float(np.sum(w * np.einsum('eqi,eqi->eq', Pe, Pe)))
        sums['normal'] += float(np.sum(w * e_n ** 2))
        sums['grad'] += float(np.sum(w * np.einsum('eqij,eqij->eq', G, G)))
    return {
        'err_L2': math.sqrt(sums['full']),
        'err_L2_tan': math.sqrt(sums['tan']),
        'err_L2_normal': math.sqrt(sums['normal']),
        'err_H1': math.sqrt(sums['full'] + sums['grad']),
    }


def interpolation_error(method, space_u, deformation, exact, streams,
                        params):
    """
    Energy error of the parametric interpolant I_Theta^k u^e.

    Returns:
        float: |u^e - I_Theta u^e| in the method norm
    """
    interpolant = interpolate_parametric(
        space_u, deformation, lambda x: exact(x)[0]
    )
    error, _ = energy_error(method, interpolant, exact, streams, params)
    return error


def compute_errors(method, u_h, problem, streams, params, lam_h=None,
                   space_u=None, deformation=None):
    """
    Full ErrorReport of one solve against the manufactured problem.

    Args:
        method (str): 'p1', 'p2' or 'lagrange'
        u_h (FEFunction): Velocity
        problem (SphereProblem): Exact data (extensions of u* and lambda)
        streams (GeometryStreams): Geometry of the level
        params (FormParams): Resolved parameters
        lam_h (FEFunction or None): Multiplier (lagrange only)
        space_u (FESpace or None): Velocity space; enables err_interp
        deformation (MeshDeformation or None): Theta_h for err_interp

    Returns:
        ErrorReport: All norms of the level
    """
    err_energy, terms = energy_error(method, u_h, problem.extension_u,
                                     streams, params)
    report = ErrorReport(err_energy=err_energy, terms=terms,
                         **surface_errors(u_h, problem.extension_u, streams))
    if method == 'lagrange':
        if lam_h is None:
            raise ConfigurationError("Multiplier error needs lambda_h")
        report.err_M = multiplier_error(lam_h, problem.extension_lambda,
                                        streams, params.rho)
        report.err_combined = math.hypot(report.err_energy, report.err_M)
    if space_u is not None:
        report.err_interp = interpolation_error(
            method, space_u, deformation, problem.extension_u, streams,
            params
        )
    logger.info(
        f"Errors: energy {report.err_energy:.4e}, L2 {report.err_L2:.4e}"
        + ("" if math.isnan(report.err_M) else f", M {report.err_M:.4e}")
    )
    return report


def energy_share(report, term):
    """Share of one squared term in the squared energy error."""
    total = sum(report.terms.values())
    return 0.0 if total == 0.0 else report.terms.get(term, 0.0) / total


def optional_float(value: Optional[float]):
    """JSON-friendly float: NaN becomes None."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)
