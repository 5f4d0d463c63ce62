"""
Krylov Solvers Module

Iterative solvers for the assembled systems:
- Preconditioned conjugate gradients for the SPD penalty systems, with
  negative-curvature detection and tracking of the energy functional
  J(x) = 1/2 x^T K x - b^T x (non-increasing in exact arithmetic)
- Preconditioned MINRES (scipy) for the symmetric indefinite saddle point
- The block-diagonal preconditioner A^{-1} (+) M^{-1} from sparse LU factors

Both solvers return the solution together with a SolveReport; running out
of iterations raises NonConvergenceError carrying the report.
"""

import inspect
import logging
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from errors import AssemblyError, NonConvergenceError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAXIT_FACTOR = 20
MAXIT_CAP = 50000
MINRES_RESTARTS = 5


@dataclass
class SolveReport:
    """
    Outcome of one linear solve.

    Attributes:
        method (str): 'cg' or 'minres'
        iterations (int): Iterations performed
        residual (float): Final relative residual (preconditioned for MINRES)
        seconds (float): Wall time
        converged (bool): Tolerance reached
        energy (list): Energy functional after every CG step
        pinned (list): Multiplier dofs fixed to zero before the solve
    """
    method: str
    iterations: int
    residual: float
    seconds: float
    converged: bool
    energy: List[float] = field(default_factory=list)
    pinned: List[int] = field(default_factory=list)

    def summary(self):
        state = "converged" if self.converged else "NOT converged"
        return (f"{self.method}: {state} after {self.iterations} iterations, "
                f"relative residual {self.residual:.3e}, "
                f"{self.seconds:.2f}s")


def default_maxit(n):
    """20 * sqrt(n), capped at 50000."""
    return int(min(np.ceil(MAXIT_FACTOR * np.sqrt(max(n, 1))), MAXIT_CAP))


def _diagonal_inverse(K, preconditioner):
    if preconditioner is None:
        return np.ones(K.shape[0])
    if isinstance(preconditioner, str) and preconditioner == 'jacobi':
        diag = np.asarray(K.diagonal(), dtype=float)
    else:
        diag = np.asarray(preconditioner, dtype=float)
    if np.any(diag <= 0.0):
        raise AssemblyError("Diagonal preconditioner has nonpositive entries")
    return 1.0 / diag


def cg(K, b, preconditioner='jacobi', tol=DEFAULT_TOL, maxit=None, x0=None):
    """
    Preconditioned conjugate gradients.

    Args:
        K (scipy.sparse matrix): Symmetric positive definite matrix
        b (np.ndarray): Right-hand side
        preconditioner (str, np.ndarray or None): 'jacobi' for diag(K),
            an explicit positive diagonal, or None for no preconditioning
        tol (float): Relative residual tolerance |Kx - b| / |b|
        maxit (int): Iteration cap, default 20 sqrt(n) up to 50000
        x0 (np.ndarray): Initial guess, zero by default

    Returns:
        tuple: (x, SolveReport)

    Raises:
        SolverError: If p^T K p <= 0 (K not positive definite)
        NonConvergenceError: If maxit is exhausted
    """
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxit = default_maxit(n) if maxit is None else int(maxit)
    d_inv = _diagonal_inverse(K, preconditioner)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - K @ x
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        report = SolveReport('cg', 0, 0.0, time.perf_counter() - start, True)
        return np.zeros(n), report

    energy = 0.5 * x @ (K @ x) - b @ x
    history = [float(energy)]
    z = d_inv * r
    p = z.copy()
    rz = r @ z
    residual = np.linalg.norm(r) / b_norm
    iterations = 0

    while residual > tol and iterations < maxit:
        q = K @ p
        curvature = p @ q
        if curvature <= 0.0:
            raise SolverError(
                f"Negative curvature p^T K p = {curvature:.3e} at iteration "
                f"{iterations}; matrix is not positive definite"
            )
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * q
        # J(x + alpha p) = J(x) - alpha (r.z) / 2 for the exact line search
        energy -= 0.5 * alpha * rz
        history.append(float(energy))
        z = d_inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        residual = np.linalg.norm(r) / b_norm
        iterations += 1

    # recompute the true residual; the recursive one drifts
    residual = np.linalg.norm(b - K @ x) / b_norm
    report = SolveReport(
        method='cg',
        iterations=iterations,
        residual=float(residual),
        seconds=time.perf_counter() - start,
        converged=bool(residual <= tol),
        energy=history,
    )
    if not report.converged:
        raise NonConvergenceError(
            f"CG did not reach {tol:g} in {maxit} iterations "
            f"(residual {residual:.3e})",
            report=report,
        )
    logger.info(report.summary())
    return x, report


def _factorize(block, name):
    try:
        return spla.splu(sp.csc_matrix(block))
    except RuntimeError as exc:
        raise AssemblyError(f"{name} block is singular: {exc}") from exc


def block_preconditioner(A, M):
    """
    Block-diagonal SPD preconditioner inverse for the saddle point.

    Both blocks are applied exactly through sparse LU factors. The
    multiplier problem is inf-sup stable in the M-norm with an
    h-independent constant, so the MINRES iteration count stays bounded
    under refinement.

    Args:
        A (scipy.sparse matrix): Velocity block
        M (scipy.sparse matrix): Multiplier mass-plus-stabilization block

    Returns:
        scipy.sparse.linalg.LinearOperator: A^{-1} (+) M^{-1}

    Raises:
        AssemblyError: If a diagonal entry is not positive or a block
            cannot be factorized
    """
    diag = np.concatenate([A.diagonal(), M.diagonal()])
    if np.any(diag <= 0.0):
        bad = np.nonzero(diag <= 0.0)[0]
        raise AssemblyError(
            f"Preconditioner diagonal not positive at {len(bad)} dof(s), "
            f"first index {bad[0]}"
        )
    lu_a = _factorize(A, "Velocity")
    lu_m = _factorize(M, "Multiplier")
    n_a = A.shape[0]
    n = n_a + M.shape[0]

    def apply(r):
        r = np.asarray(r, dtype=float).ravel()
        return np.concatenate([lu_a.solve(r[:n_a]), lu_m.solve(r[n_a:])])

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def _minres_tol_kwarg():
    params = inspect.signature(spla.minres).parameters
    return 'rtol' if 'rtol' in params else 'tol'


def minres(K, b, preconditioner=None, tol=DEFAULT_TOL, maxit=None,
           x0=None):
    """
    Preconditioned MINRES for symmetric indefinite systems.

    Args:
        K (scipy.sparse matrix): Symmetric matrix
        b (np.ndarray): Right-hand side
        preconditioner (sparse matrix or LinearOperator): SPD approximation
            of K^{-1}; identity when None
        tol (float): Tolerance on the preconditioned relative residual
        maxit (int): Iteration cap, default 20 sqrt(n) up to 50000
        x0 (np.ndarray): Initial guess

    Returns:
        tuple: (x, SolveReport)

    Raises:
        NonConvergenceError: If the tolerance is not reached
    """
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxit = default_maxit(n) if maxit is None else int(maxit)
    if preconditioner is None:
        preconditioner = sp.identity(n, format='csr')
    P = spla.aslinearoperator(preconditioner)

    counter = {'iterations': 0}

    def count(_):
        counter['iterations'] += 1

    b_norm = np.sqrt(max(b @ P.matvec(b), 0.0))

    def true_residual(x):
        if b_norm == 0.0:
            return 0.0
        r = b - K @ x
        return np.sqrt(max(r @ P.matvec(r), 0.0)) / b_norm

    # scipy stops on a normwise backward error, not on |r| / |b|; restart
    # warm with a tighter tolerance until the true residual is reached
    rtol = 0.1 * tol
    x = x0
    for _ in range(MINRES_RESTARTS):
        remaining = maxit - counter['iterations']
        x, info = spla.minres(K, b, x0=x, M=P, maxiter=max(remaining, 1),
                              callback=count, **{_minres_tol_kwarg(): rtol})
        residual = true_residual(x)
        if residual <= tol or counter['iterations'] >= maxit or info != 0:
            break
        logger.debug(f"MINRES restart at residual {residual:.3e}")
        rtol *= 0.01
    report = SolveReport(
        method='minres',
        iterations=counter['iterations'],
        residual=float(residual),
        seconds=time.perf_counter() - start,
        converged=bool(residual <= tol),
    )
    if not report.converged:
        raise NonConvergenceError(
            f"MINRES did not reach {tol:g} (info {info}, residual "
            f"{residual:.3e} after {report.iterations} iterations)",
            report=report,
        )
    logger.info(report.summary())
    return x, report


def solve_system(system, solver=None, tol=DEFAULT_TOL, maxit=None):
    """
    Solve an assembled LinearSystem with the method's default solver.

    Args:
        system (LinearSystem): Assembled system
        solver (str or None): 'cg' or 'minres'; cg for penalty systems and
            minres for the saddle point when None
        tol (float): Tolerance
        maxit (int or None): Iteration cap

    Returns:
        tuple: (x, SolveReport)
    """
    if solver is None:
        solver = 'minres' if system.method == 'lagrange' else 'cg'
    if solver == 'cg':
        if system.method == 'lagrange':
            raise SolverError("CG cannot solve the indefinite saddle point")
        return cg(system.matrix, system.rhs, 'jacobi', tol, maxit)
    if system.method == 'lagrange':
        P = block_preconditioner(system.blocks['A'], system.blocks['M'])
    else:
        P = sp.diags(1.0 / system.matrix.diagonal())
    x, report = minres(system.matrix, system.rhs, P, tol, maxit)
    report.pinned = [int(i) for i in system.pinned]
    return x, report
