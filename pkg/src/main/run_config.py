"""
Run Configuration Module

YAML run configurations for studies and single solves:
- Nested tables (discretization, parameters, geometry, study, solver,
  output) parsed into a frozen RunConfig
- Defaults for everything but the method and its degrees
- Eager validation: unknown keys are listed, violated constraints quoted

Example:

    method: p2
    discretization: {k: 1, k_g: 1, k_p: 2}
    parameters: {eta: [1, 2], rho: [1, 1]}
    study: {levels: [1, 2, 3, 4]}
"""

import logging
import os
from dataclasses import asdict, dataclass, replace
from typing import Optional, Tuple

import yaml

from background_mesh import DEFAULT_BBOX, MAX_LEVEL
from errors import ConfigurationError
from forms import ParamScaling
from mesh_deformation import GEOMETRY_SOURCES
from system_builder import METHODS

logger = logging.getLogger(__name__)

MAX_DEGREE = 3
MAX_PENALTY_DEGREE = 4
SOLVERS = ('cg', 'minres')
DEFAULT_TOL = 1e-10
DEFAULT_LEVELS = (1, 2, 3, 4)
DEFAULT_LEVELS_K3 = (1, 2, 3)
DEFAULT_RHO = (1.0, 1.0)

SECTIONS = {
    'discretization': {'k', 'k_g', 'k_p', 'k_l'},
    'parameters': {'eta', 'rho', 'rho_tilde'},
    'geometry': {'source', 'bbox', 'radius'},
    'study': {'levels'},
    'solver': {'name', 'tol', 'maxit'},
    'output': {'dir', 'deterministic'},
}
TOP_LEVEL = {'method', 'seed', 'name'} | set(SECTIONS)

CONFIG_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(
        __file__)))), 'configs'
)
# Experiment names mapped onto the shipped preset files
PRESET_ALIASES = {
    'fig1_k1_optimal': 'p1_k1_kp2',
    'fig1_k1_nopconv': 'p1_k1_kp1_stagnation',
    'fig2_k2_optimal': 'p2_k2_kp3',
    'fig2_k2_loss': 'p2_k2_kp2_order_loss',
    'fig3_lagrange_iso': 'lagrange_k2_kl2_kg2',
}


@dataclass(frozen=True)
class RunConfig:
    """
    Validated run configuration.

    Attributes:
        name (str): Configuration name (file stem)
        method (str): 'p1', 'p2' or 'lagrange'
        k (int): Velocity degree
        k_g (int): Geometry degree
        k_p (int or None): Penalty-normal degree (penalty methods)
        k_l (int or None): Multiplier degree (lagrange)
        eta (ParamScaling or None): Penalty weight c h^-e
        rho (ParamScaling): Volume stabilization weight
        rho_tilde (ParamScaling): Multiplier stabilization weight
        levels (tuple): Refinement levels, increasing
        geometry_source (str): 'fe' or 'exact' root finding for Theta_h
        solver (str): 'cg' or 'minres'
        tol (float): Solver tolerance
        maxit (int or None): Solver iteration cap
        seed (int): Seed for randomized checks
        output_dir (str): Result directory
        bbox (tuple): Bounding box of the background mesh
        radius (float): Sphere radius
        deterministic (bool): Byte-reproducible output
    """
    name: str
    method: str
    k: int
    k_g: int
    k_p: Optional[int] = None
    k_l: Optional[int] = None
    eta: Optional[ParamScaling] = None
    rho: ParamScaling = ParamScaling(*DEFAULT_RHO)
    rho_tilde: ParamScaling = ParamScaling(*DEFAULT_RHO)
    levels: Tuple[int, ...] = DEFAULT_LEVELS
    geometry_source: str = 'fe'
    solver: str = 'cg'
    tol: float = DEFAULT_TOL
    maxit: Optional[int] = None
    seed: int = 0
    output_dir: str = 'results'
    bbox: Tuple[Tuple[float, ...], Tuple[float, ...]] = DEFAULT_BBOX
    radius: float = 1.0
    deterministic: bool = False

    def with_overrides(self, **changes):
        """Copy with some fields replaced (revalidated)."""
        config = replace(self, **changes)
        validate_config(config)
        return config

    def to_dict(self):
        """Plain-data echo for JSON output."""
        data = asdict(self)
        for key in ('eta', 'rho', 'rho_tilde'):
            value = getattr(self, key)
            data[key] = None if value is None else value.as_list()
        data['levels'] = list(self.levels)
        data['bbox'] = [list(corner) for corner in self.bbox]
        return data


def _require_int(name, value, low, high):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if not low <= value <= high:
        raise ConfigurationError(
            f"{name} = {value} violates {low} <= {name} <= {high}"
        )
    return value


def validate_config(config):
    """
    Check every constraint of a RunConfig.

    Raises:
        ConfigurationError: Naming the violated constraint
    """
    if config.method not in METHODS:
        raise ConfigurationError(
            f"method must be one of {METHODS}, got {config.method!r}"
        )
    _require_int('k', config.k, 1, MAX_DEGREE)
    _require_int('k_g', config.k_g, 1, MAX_DEGREE)

    if config.method in ('p1', 'p2'):
        if config.k_p is None:
            raise ConfigurationError(
                f"method {config.method} requires discretization.k_p"
            )
        _require_int('k_p', config.k_p, 1, MAX_PENALTY_DEGREE)
        if config.k_p < config.k_g:
            raise ConfigurationError(
                f"k_p = {config.k_p} violates k_p >= k_g = {config.k_g}"
            )
        if config.eta is None:
            raise ConfigurationError(
                f"method {config.method} requires parameters.eta"
            )
        if config.eta.c <= 0:
            raise ConfigurationError(
                f"eta coefficient must be positive, got {config.eta.c}"
            )
    else:
        if config.k_l is None:
            raise ConfigurationError("method lagrange requires "
                                     "discretization.k_l")
        _require_int('k_l', config.k_l, 1, config.k)
        if config.solver != 'minres':
            raise ConfigurationError(
                "method lagrange is a saddle point problem and requires "
                f"solver minres, got {config.solver!r}"
            )

    if config.solver not in SOLVERS:
        raise ConfigurationError(
            f"solver must be one of {SOLVERS}, got {config.solver!r}"
        )
    if config.geometry_source not in GEOMETRY_SOURCES:
        raise ConfigurationError(
            f"geometry.source must be one of {GEOMETRY_SOURCES}, got "
            f"{config.geometry_source!r}"
        )
    if not config.levels:
        raise ConfigurationError("study.levels must not be empty")
    for level in config.levels:
        _require_int('level', level, 0, MAX_LEVEL)
    if list(config.levels) != sorted(set(config.levels)):
        raise ConfigurationError(
            f"study.levels must be strictly increasing, got "
            f"{list(config.levels)}"
        )
    if not config.tol > 0:
        raise ConfigurationError(f"solver.tol must be positive, got "
                                 f"{config.tol}")
    if config.maxit is not None:
        _require_int('maxit', config.maxit, 1, 10 ** 9)
    if not config.radius > 0:
        raise ConfigurationError(f"geometry.radius must be positive, got "
                                 f"{config.radius}")
    lo, hi = config.bbox
    if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
        raise ConfigurationError(f"geometry.bbox must be a nonempty box, "
                                 f"got {config.bbox}")
    return config


def _section(raw, name):
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"{name} must be a table, got {value!r}")
    unknown = sorted(set(value) - SECTIONS[name])
    if unknown:
        raise ConfigurationError(f"Unknown keys in {name}: {unknown}")
    return value


def config_from_dict(raw, name='run'):
    """
    Build a RunConfig from parsed YAML.

    Args:
        raw (dict): Nested configuration tables
        name (str): Configuration name, used for the default output dir

    Returns:
        RunConfig: Validated configuration with defaults filled

    Raises:
        ConfigurationError: For unknown keys or violated constraints
    """
    if not isinstance(raw, dict):
        raise ConfigurationError("Configuration must be a table of settings")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigurationError(f"Unknown configuration keys: {unknown}")
    if 'method' not in raw:
        raise ConfigurationError("Configuration requires 'method'")

    disc = _section(raw, 'discretization')
    par = _section(raw, 'parameters')
    geo = _section(raw, 'geometry')
    study = _section(raw, 'study')
    solver = _section(raw, 'solver')
    output = _section(raw, 'output')
    for key in ('k', 'k_g'):
        if key not in disc:
            raise ConfigurationError(f"discretization.{key} is required")

    method = raw['method']
    k = disc['k']
    name = raw.get('name', name)
    rho = ParamScaling.parse(par.get('rho', list(DEFAULT_RHO)), 'rho')
    default_levels = DEFAULT_LEVELS_K3 if k == 3 else DEFAULT_LEVELS
    bbox = geo.get('bbox', DEFAULT_BBOX)
    try:
        bbox = tuple(tuple(float(v) for v in corner) for corner in bbox)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"geometry.bbox is malformed: {exc}")
    if len(bbox) != 2:
        raise ConfigurationError("geometry.bbox needs two corners")

    config = RunConfig(
        name=str(name),
        method=method,
        k=k,
        k_g=disc['k_g'],
        k_p=disc.get('k_p'),
        k_l=disc.get('k_l'),
        eta=(ParamScaling.parse(par['eta'], 'eta')
             if par.get('eta') is not None else None),
        rho=rho,
        rho_tilde=(ParamScaling.parse(par['rho_tilde'], 'rho_tilde')
                   if par.get('rho_tilde') is not None else rho),
        levels=tuple(study.get('levels', default_levels)),
        geometry_source=geo.get('source', 'fe'),
        solver=solver.get('name',
                          'minres' if method == 'lagrange' else 'cg'),
        tol=float(solver.get('tol', DEFAULT_TOL)),
        maxit=solver.get('maxit'),
        seed=int(raw.get('seed', 0)),
        output_dir=str(output.get('dir', os.path.join('results', name))),
        bbox=bbox,
        radius=float(geo.get('radius', 1.0)),
        deterministic=bool(output.get('deterministic', False)),
    )
    return validate_config(config)


def parse_config(path, name=None):
    """
    Read and validate a YAML run configuration.

    Args:
        path (str): Path to the configuration file
        name (str or None): Configuration name; the file stem when None

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigurationError: If the file is missing, not YAML, or invalid
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"Configuration file not found: {path}")
    with open(path) as handle:
        try:
            raw = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path} is not valid YAML: {exc}")
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    config = config_from_dict(raw, name=name)
    logger.info(f"Loaded configuration {config.name} ({config.method}, "
                f"k={config.k}, k_g={config.k_g})")
    return config


def available_presets(config_dir=CONFIG_DIR):
    """Names of the shipped presets and their aliases, sorted."""
    stems = []
    if os.path.isdir(config_dir):
        stems = [os.path.splitext(entry)[0]
                 for entry in os.listdir(config_dir)
                 if entry.endswith('.yaml')]
    return sorted(set(stems) | set(PRESET_ALIASES))


def preset_path(name, config_dir=CONFIG_DIR):
    """
    Resolve a preset name or alias to its YAML file.

    Raises:
        ConfigurationError: If no preset of that name exists
    """
    stem = PRESET_ALIASES.get(name, name)
    path = os.path.join(config_dir, f"{stem}.yaml")
    if not os.path.isfile(path):
        raise ConfigurationError(
            f"Unknown preset {name!r}; available: "
            f"{', '.join(available_presets(config_dir))}"
        )
    return path


def load_preset(name, config_dir=CONFIG_DIR):
    """Parse a preset by name; aliases keep their own name and output dir."""
    return parse_config(preset_path(name, config_dir), name=name)
