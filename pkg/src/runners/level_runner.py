"""
Level Runner Module

This module runs the full discretization pipeline on one refinement level:
mesh -> cut -> deform -> spaces -> assemble -> solve -> errors.

It validates its inputs before any work is done, times every stage, and wraps
a failure of any stage into a StageError carrying the stage tag, so that the
study driver can record the failure and continue with the next level.
"""

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from background_mesh import build_background_mesh, shape_regularity
from cut_topology import (
    extract_cut,
    interpolate_levelset,
    linearize,
    write_gamma_lin_vtk,
)
from discrete_geometry import write_gamma_h_vtk
from error_norms import ErrorReport, compute_errors
from errors import ConfigurationError, StageError, TraceFEMError
from fe_space import FEFunction, build_fespace
from forms import FormParams
from krylov import SolveReport, solve_system
from level_set import SphereLevelSet
from mesh_deformation import build_theta
from sphere_problem import SphereProblem
from system_builder import build_streams, build_system

logger = logging.getLogger(__name__)

STAGES = ('mesh', 'cut', 'deform', 'spaces', 'assemble', 'solve', 'errors')


@dataclass
class LevelResult:
    """
    Everything one level produced.

    Attributes:
        level (int): Refinement level
        h (float): Nominal mesh size
        ndof_u (int): Vector velocity unknowns
        ndof_lambda (int): Multiplier unknowns (0 for penalty methods)
        n_active (int): Active tetrahedra
        errors (ErrorReport): Error norms
        solve (SolveReport): Solver statistics
        timings (dict): Seconds per stage
        shape_regularity (float): Max diameter / min inradius of the
            active tets
        artifacts (dict): Cut, deformation, streams, system, u_h, lam_h
    """
    level: int
    h: float
    ndof_u: int
    ndof_lambda: int
    n_active: int
    errors: ErrorReport
    solve: SolveReport
    timings: Dict[str, float] = field(default_factory=dict)
    shape_regularity: float = float('nan')
    artifacts: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def seconds(self):
        return float(sum(self.timings.values()))


@contextmanager
def pipeline_stage(name, level, timings):
    """
    Time a stage and wrap its failures into StageError.

    Pipeline errors are logged by message; anything else is unexpected and
    logged with its traceback. Both are re-raised as StageError so a study
    records the level and moves on. KeyboardInterrupt and SystemExit pass.
    """
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (TraceFEMError, np.linalg.LinAlgError) as exc:
        logger.error(f"Level {level}, stage {name}: {exc}")
        raise StageError(name, level, exc) from exc
    except Exception as exc:
        logger.exception(f"Level {level}, stage {name}: unexpected "
                         f"{type(exc).__name__}: {exc}")
        raise StageError(name, level, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start
        logger.debug(f"Level {level}, stage {name}: "
                     f"{timings[name]:.2f}s")


def run_level(config, level, processes=1, show_progress=False,
              with_interp=True, keep_artifacts=False):
    """
    Run one level of a configuration.

    Args:
        config (RunConfig): Validated run configuration
        level (int): Refinement level
        processes (int): Worker processes for building Theta_h
        show_progress (bool): Display tqdm bars
        with_interp (bool): Also compute the interpolant's energy error
        keep_artifacts (bool): Keep geometry, system and solution objects
            (for VTK and matrix export)

    Returns:
        LevelResult: Sizes, errors and solver statistics

    Raises:
        ConfigurationError: If level or processes are invalid
        StageError: If any stage fails; `stage` names it
    """
    # Validate inputs before touching the pipeline
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)):
        raise ConfigurationError(f"level must be an integer, got {level!r}")
    if level < 0:
        raise ConfigurationError(f"level must be nonnegative, got {level}")
    if processes < 1:
        raise ConfigurationError(
            f"processes must be at least 1, got {processes}"
        )

    level = int(level)
    method = config.method
    oracle = SphereLevelSet(radius=config.radius)
    problem = SphereProblem(radius=config.radius)
    timings = {}
    logger.info(f"Level {level}: {method}, k={config.k}, k_g={config.k_g}")

    with pipeline_stage('mesh', level, timings):
        mesh = build_background_mesh(config.bbox, level)

    with pipeline_stage('cut', level, timings):
        phi_h = interpolate_levelset(mesh, oracle, config.k_g)
        phi_hat = linearize(phi_h)
        cut = extract_cut(mesh, phi_hat)

    with pipeline_stage('deform', level, timings):
        deformation = build_theta(
            mesh, cut, phi_h, phi_hat, oracle, config.k_g,
            mode=config.geometry_source, processes=processes,
            show_progress=show_progress,
        )
        streams = build_streams(
            cut, deformation, oracle, config.k, config.k_g,
            k_p=config.k_p if method in ('p1', 'p2') else None,
            with_weingarten=method == 'p2',
        )

    with pipeline_stage('spaces', level, timings):
        space_u = build_fespace(mesh, cut.active_tets, config.k)
        space_l = None
        if method == 'lagrange':
            space_l = build_fespace(mesh, cut.active_tets, config.k_l)

    with pipeline_stage('assemble', level, timings):
        params = FormParams.resolve(mesh.h, config.eta, config.rho,
                                    config.rho_tilde)
        system = build_system(method, space_u, streams, params,
                              problem.rhs_data, space_l=space_l,
                              show_progress=show_progress)

    with pipeline_stage('solve', level, timings):
        x, report = solve_system(system, config.solver, config.tol,
                                 config.maxit)
        u_h = FEFunction.from_flat(space_u, x[:system.n_u])
        lam_h: Optional[FEFunction] = None
        if space_l is not None:
            lam_h = FEFunction(space_l, x[system.n_u:])

    with pipeline_stage('errors', level, timings):
        errors = compute_errors(
            method, u_h, problem, streams, params, lam_h=lam_h,
            space_u=space_u if with_interp else None,
            deformation=deformation,
        )

    result = LevelResult(
        level=level,
        h=mesh.h,
        ndof_u=system.n_u,
        ndof_lambda=system.n_l,
        n_active=cut.n_active,
        errors=errors,
        solve=report,
        timings=timings,
        shape_regularity=shape_regularity(mesh, cut.active_tets),
    )
    if keep_artifacts:
        result.artifacts = {
            'mesh': mesh, 'cut': cut, 'deformation': deformation,
            'streams': streams, 'system': system, 'u_h': u_h,
            'lam_h': lam_h, 'params': params,
        }
    logger.info(
        f"Level {level} done: h={mesh.h:g}, {system.size} unknowns, "
        f"{report.iterations} iterations, energy error "
        f"{errors.err_energy:.4e}"
    )
    return result


def write_level_vtk(result, directory):
    """
    Write Gamma^lin and Gamma_h (with u_h, lambda_h and n_h) of a level.

    Args:
        result (LevelResult): Level run with artifacts kept
        directory (str): Target directory

    Returns:
        list: Written paths
    """
    artifacts = result.artifacts
    if not artifacts:
        raise ConfigurationError(
            "VTK output needs a level run with keep_artifacts=True"
        )
    os.makedirs(directory, exist_ok=True)
    lin_path = os.path.join(directory, f"gamma_lin_level{result.level}.vtk")
    h_path = os.path.join(directory, f"gamma_h_level{result.level}.vtk")
    write_gamma_lin_vtk(artifacts['cut'], lin_path)
    fields = {'u_h': artifacts['u_h']}
    if artifacts.get('lam_h') is not None:
        fields['lambda_h'] = artifacts['lam_h']
    write_gamma_h_vtk(artifacts['cut'], artifacts['deformation'], h_path,
                      point_fields=fields)
    return [lin_path, h_path]
