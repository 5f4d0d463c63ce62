"""
Convergence Study Module

Multi-level driver of a run configuration:
- Runs the levels sequentially through the level runner
- Records sizes, error norms, local EOCs and solver statistics per level
- Persists results.csv and results.json after every level
- Records failing levels with their stage tag and carries on
- Geometry-only studies (area, distance, normal and curvature errors) for
  the verify-geometry command, written to geometry.csv
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from background_mesh import build_background_mesh
from cut_topology import (
    extract_cut,
    gamma_lin_area,
    interpolate_levelset,
    linearize,
)
from discrete_geometry import penalty_normal, surface_quadrature, weingarten_h
from error_norms import ErrorReport, optional_float
from errors import StageError
from level_runner import pipeline_stage, run_level, write_level_vtk
from level_set import SphereLevelSet
from mesh_deformation import build_theta
from utils import EOC_UNDEFINED, add_eoc_columns, eoc

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = [
    'level', 'h', 'ndof_u', 'ndof_lambda', 'err_energy', 'err_M', 'err_L2',
    'err_L2_tan', 'err_H1', 'eoc_energy', 'eoc_M', 'iters', 'seconds',
]
GEOMETRY_COLUMNS = [
    'area_lin_error', 'area_h_error', 'max_distance', 'normal_error',
    'penalty_normal_error', 'weingarten_error',
]
FLOAT_FORMAT = '%.12e'
QUASI_OPTIMALITY_FACTOR = 3.0


@dataclass
class StudyRecord:
    """
    Result of one level of a study.

    Attributes:
        level (int): Refinement level
        h (float): Nominal mesh size
        ndof_u (int): Velocity unknowns
        ndof_lambda (int): Multiplier unknowns
        n_active (int): Active tetrahedra
        errors (ErrorReport): Error norms
        eoc (dict): Local orders against the previous record, NaN for the
            first one
        iterations (int): Solver iterations
        residual (float): Final solver residual
        converged (bool): Solver convergence flag
        pinned (list): Pinned multiplier dofs
        seconds (float): Wall time of the level (0 in deterministic mode)
        shape_regularity (float): Max diameter / min inradius
    """
    level: int
    h: float
    ndof_u: int
    ndof_lambda: int
    n_active: int
    errors: ErrorReport
    eoc: Dict[str, float]
    iterations: int
    residual: float
    converged: bool
    pinned: List[int] = field(default_factory=list)
    seconds: float = 0.0
    shape_regularity: float = float('nan')

    def csv_row(self):
        return {
            'level': self.level,
            'h': self.h,
            'ndof_u': self.ndof_u,
            'ndof_lambda': self.ndof_lambda,
            'err_energy': self.errors.err_energy,
            'err_M': self.errors.err_M,
            'err_L2': self.errors.err_L2,
            'err_L2_tan': self.errors.err_L2_tan,
            'err_H1': self.errors.err_H1,
            'eoc_energy': self.eoc.get('energy', EOC_UNDEFINED),
            'eoc_M': self.eoc.get('M', EOC_UNDEFINED),
            'iters': self.iterations,
            'seconds': self.seconds,
        }

    def to_dict(self):
        errors = {key: optional_float(value)
                  for key, value in self.errors.to_dict().items()
                  if key != 'terms'}
        errors['terms'] = {key: float(value)
                           for key, value in self.errors.terms.items()}
        return {
            'level': self.level,
            'h': self.h,
            'ndof_u': self.ndof_u,
            'ndof_lambda': self.ndof_lambda,
            'n_active': self.n_active,
            'errors': errors,
            'eoc': {key: optional_float(value)
                    for key, value in self.eoc.items()},
            'solve': {
                'iterations': self.iterations,
                'residual': self.residual,
                'converged': self.converged,
                'pinned': list(self.pinned),
            },
            'seconds': self.seconds,
            'shape_regularity': optional_float(self.shape_regularity),
        }


@dataclass
class StudyResult:
    """Records of the successful levels and the failures."""
    records: List[StudyRecord] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    @property
    def complete(self):
        return not self.failures

    def table(self):
        """Per-level results as a DataFrame with the CSV columns."""
        return pd.DataFrame([r.csv_row() for r in self.records],
                            columns=CSV_COLUMNS)


ORDER_KEYS = {
    'energy': 'err_energy',
    'M': 'err_M',
    'L2': 'err_L2',
    'L2_tan': 'err_L2_tan',
    'H1': 'err_H1',
    'combined': 'err_combined',
}


def _orders(previous, errors, h):
    """Local EOCs of every error quantity against the previous record."""
    if previous is None:
        return {key: EOC_UNDEFINED for key in ORDER_KEYS}
    orders = {}
    for key, attr in ORDER_KEYS.items():
        orders[key] = eoc([getattr(previous.errors, attr),
                           getattr(errors, attr)], [previous.h, h])[0]
    return orders


def _make_record(result, previous, deterministic):
    record = StudyRecord(
        level=result.level,
        h=result.h,
        ndof_u=result.ndof_u,
        ndof_lambda=result.ndof_lambda,
        n_active=result.n_active,
        errors=result.errors,
        eoc=_orders(previous, result.errors, result.h),
        iterations=result.solve.iterations,
        residual=result.solve.residual,
        converged=result.solve.converged,
        pinned=list(result.solve.pinned),
        seconds=0.0 if deterministic else result.seconds,
        shape_regularity=result.shape_regularity,
    )
    if not is_quasi_optimal(result.errors):
        logger.warning(
            f"Level {result.level}: energy error "
            f"{result.errors.err_energy:.3e} exceeds "
            f"{QUASI_OPTIMALITY_FACTOR:g}x the interpolation error "
            f"{result.errors.err_interp:.3e}"
        )
    return record


def quasi_optimality_ratio(errors):
    """err_energy / err_interp, NaN when the interpolant was not measured."""
    interp = errors.err_interp
    if math.isnan(interp):
        return math.nan
    if interp == 0.0:
        return 0.0 if errors.err_energy == 0.0 else math.inf
    return errors.err_energy / interp


def is_quasi_optimal(errors, factor=QUASI_OPTIMALITY_FACTOR):
    """
    Energy error within `factor` times the interpolation error.

    Levels without an interpolation error count as quasi-optimal.
    """
    ratio = quasi_optimality_ratio(errors)
    return math.isnan(ratio) or ratio <= factor


def write_results(result, config, output_dir):
    """
    Write results.csv and results.json.

    Args:
        result (StudyResult): Records and failures so far
        config (RunConfig): Configuration echoed into the JSON
        output_dir (str): Target directory

    Returns:
        tuple: (csv path, json path)
    """
    os.makedirs(output_dir, exist_ok=True)
    csv_path = os.path.join(output_dir, 'results.csv')
    json_path = os.path.join(output_dir, 'results.json')
    result.table().to_csv(csv_path, index=False, float_format=FLOAT_FORMAT,
                          na_rep='nan')
    payload = {
        'schema_version': SCHEMA_VERSION,
        'columns': CSV_COLUMNS,
        'config': config.to_dict(),
        'records': [r.to_dict() for r in result.records],
        'failures': result.failures,
    }
    with open(json_path, 'w') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
    return csv_path, json_path


def run_study(config, processes=1, show_progress=True, output_dir=None,
              with_interp=True, vtk=False):
    """
    Run every level of a configuration and persist results incrementally.

    Args:
        config (RunConfig): Validated configuration
        processes (int): Worker processes for building Theta_h (forced to 1
            in deterministic mode)
        show_progress (bool): Display tqdm bars
        output_dir (str or None): Override of config.output_dir; None keeps
            it, '' disables writing
        with_interp (bool): Compute interpolation errors
        vtk (bool): Write Gamma^lin and Gamma_h of every level

    Returns:
        StudyResult: Records of the successful levels and failures
    """
    if output_dir is None:
        output_dir = config.output_dir
    if config.deterministic:
        processes = 1
    result = StudyResult()
    previous: Optional[StudyRecord] = None

    for level in tqdm(config.levels, desc=f"study {config.name}",
                      disable=not show_progress):
        try:
            level_result = run_level(config, level, processes=processes,
                                     show_progress=show_progress,
                                     with_interp=with_interp,
                                     keep_artifacts=vtk)
        except StageError as exc:
            failure = {'level': int(level), 'stage': exc.stage,
                       'error': type(exc.cause).__name__,
                       'message': str(exc.cause)}
            report = getattr(exc.cause, 'report', None)
            if report is not None:
                failure['iterations'] = report.iterations
                failure['residual'] = report.residual
            result.failures.append(failure)
            logger.warning(f"Level {level} failed in stage {exc.stage}; "
                           f"continuing")
        else:
            previous = _make_record(level_result, previous,
                                    config.deterministic)
            result.records.append(previous)
            if vtk and output_dir:
                write_level_vtk(level_result, output_dir)
                level_result.artifacts.clear()
        if output_dir:
            write_results(result, config, output_dir)

    logger.info(
        f"Study {config.name}: {len(result.records)} levels done, "
        f"{len(result.failures)} failed"
    )
    return result


def geometry_level(config, level, processes=1, show_progress=False):
    """
    Geometry errors of one level.

    Args:
        config (RunConfig): Configuration (k_g, k_p, radius, geometry source)
        level (int): Refinement level
        processes (int): Worker processes for Theta_h
        show_progress (bool): Display tqdm bars

    Returns:
        dict: level, h, n_active and the GEOMETRY_COLUMNS errors

    Raises:
        StageError: If the mesh, cut or deformation stage fails
    """
    oracle = SphereLevelSet(radius=config.radius)
    exact_area = 4.0 * np.pi * config.radius ** 2
    timings = {}
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
        quad = surface_quadrature(cut, deformation, 2 * config.k_g + 2)
        valid = quad.valid
        x = quad.x[valid]
        frame = oracle.frame_at(x)
        H_h = weingarten_h(deformation, cut.n_lin, config.k_g).evaluate(quad)
        row = {
            'level': level,
            'h': mesh.h,
            'n_active': cut.n_active,
            'area_lin_error': abs(gamma_lin_area(cut) - exact_area),
            'area_h_error': abs(quad.total_weight() - exact_area),
            'max_distance': float(np.abs(oracle.phi(x)).max()),
            'normal_error': float(
                np.linalg.norm(quad.n_h[valid] - frame.n, axis=1).max()
            ),
            'penalty_normal_error': EOC_UNDEFINED,
            'weingarten_error': float(
                np.linalg.norm(H_h[valid] - frame.H, axis=(1, 2)).max()
            ),
        }
        if config.k_p is not None:
            n_tilde = penalty_normal(deformation, oracle,
                                     config.k_p).evaluate(quad)
            row['penalty_normal_error'] = float(
                np.linalg.norm(n_tilde[valid] - frame.n, axis=1).max()
            )
    logger.info(
        f"Geometry level {level}: area error {row['area_h_error']:.3e}, "
        f"normal error {row['normal_error']:.3e}"
    )
    return row


def run_geometry_study(config, processes=1, show_progress=True,
                       output_dir=None):
    """
    Geometry diagnostics over the configured levels with local EOCs.

    Returns:
        tuple: (pd.DataFrame with error and eoc_ columns, list of failures)
    """
    if output_dir is None:
        output_dir = config.output_dir
    rows, failures = [], []
    for level in tqdm(config.levels, desc="verify geometry",
                      disable=not show_progress):
        try:
            rows.append(geometry_level(config, level, processes,
                                       show_progress))
        except StageError as exc:
            failures.append({'level': int(level), 'stage': exc.stage,
                             'message': str(exc.cause)})
    columns = ['level', 'h', 'n_active'] + GEOMETRY_COLUMNS
    table = add_eoc_columns(pd.DataFrame(rows, columns=columns),
                            GEOMETRY_COLUMNS)
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        table.to_csv(os.path.join(output_dir, 'geometry.csv'), index=False,
                     float_format=FLOAT_FORMAT, na_rep='nan')
    return table, failures
