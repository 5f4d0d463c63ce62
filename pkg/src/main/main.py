"""
TraceFEM Command Line Interface

Entry point of the convergence-study toolkit. Subcommands:
1. study <config>            run every level, write results.csv/json
2. solve <config> --level N  run one level and print its reports
3. verify-geometry <config>  geometry error table with EOCs (geometry.csv)

Instead of a config path, --preset NAME selects a shipped preset from configs/
by file stem or experiment alias (e.g. fig2_k2_loss).

Flags: --plot (SVG convergence plot), --vtk (interface meshes),
--deterministic (reproducible output), --quiet (warnings only).
The worker-process count for building the mesh deformation is read from
TRACEFEM_THREADS (environment or .env).

Exit codes: 0 on success, 2 when some level failed, 1 on configuration
errors.
"""

import argparse
import logging
import os
import sys

SRC_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
for _name in sorted(os.listdir(SRC_DIR)):
    _path = os.path.join(SRC_DIR, _name)
    if os.path.isdir(_path) and _path not in sys.path:
        sys.path.insert(0, _path)

from dotenv import load_dotenv  # noqa: E402

from convergence_study import (  # noqa: E402
    GEOMETRY_COLUMNS,
    run_geometry_study,
    run_study,
)
from errors import ConfigurationError, StageError  # noqa: E402
from level_runner import run_level, write_level_vtk  # noqa: E402
from run_config import load_preset, parse_config  # noqa: E402
from system_builder import export_system  # noqa: E402
from visualization import plot_convergence  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
THREADS_ENV = 'TRACEFEM_THREADS'


def configure_logging(quiet=False):
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def thread_count():
    """
    Worker processes from TRACEFEM_THREADS (default 1).

    Raises:
        ConfigurationError: If the value is not a positive integer
    """
    load_dotenv()
    raw = os.getenv(THREADS_ENV, '1')
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(
            f"{THREADS_ENV} must be a positive integer, got {raw!r}"
        )
    if value < 1:
        raise ConfigurationError(
            f"{THREADS_ENV} must be a positive integer, got {value}"
        )
    return value


def expected_orders(config):
    """Reference slopes drawn in the convergence plot."""
    if config.method == 'lagrange':
        return (config.k_l, config.k)
    return (config.k,)


def cmd_study(config, plot=False, vtk=False, quiet=False, processes=1):
    """
    Run a convergence study and persist its results.

    Returns:
        int: 0 when every level succeeded, 2 otherwise
    """
    result = run_study(config, processes=processes, show_progress=not quiet,
                       vtk=vtk)
    table = result.table()
    print(table.to_string(index=False))
    if plot:
        columns = ('err_energy', 'err_M') if config.method == 'lagrange' \
            else ('err_energy',)
        plot_convergence(
            table, os.path.join(config.output_dir, 'convergence.svg'),
            columns=columns, orders=sorted(set(expected_orders(config))),
            title=f"{config.name} ({config.method})",
        )
    for failure in result.failures:
        print(f"Level {failure['level']} failed in stage "
              f"{failure['stage']}: {failure['message']}")
    return EXIT_OK if result.complete else EXIT_PARTIAL


def cmd_solve(config, level, vtk=False, export_matrix=False, quiet=False,
              processes=1):
    """
    Run a single level and print its ErrorReport and SolveReport.

    Returns:
        int: 0 on success, 2 if a stage failed
    """
    keep = vtk or export_matrix
    try:
        result = run_level(config, level, processes=processes,
                           show_progress=not quiet, keep_artifacts=keep)
    except StageError as exc:
        print(f"Level {level} failed in stage {exc.stage}: {exc.cause}")
        return EXIT_PARTIAL

    print(f"Level {result.level}: h = {result.h:g}, "
          f"{result.n_active} active tets, {result.ndof_u} velocity and "
          f"{result.ndof_lambda} multiplier unknowns")
    print(result.solve.summary())
    if result.solve.pinned:
        print(f"Pinned multiplier dofs: {result.solve.pinned}")
    for key, value in result.errors.to_dict().items():
        if key == 'terms':
            for term, squared in value.items():
                print(f"  {term}-term (squared): {squared:.6e}")
        else:
            print(f"  {key}: {value:.6e}")
    if vtk:
        write_level_vtk(result, config.output_dir)
    if export_matrix:
        export_system(result.artifacts['system'], config.output_dir,
                      prefix=f"level{result.level}")
    return EXIT_OK


def cmd_verify_geometry(config, plot=False, quiet=False, processes=1):
    """
    Tabulate geometry errors and their EOCs over the configured levels.

    Returns:
        int: 0 when every level succeeded, 2 otherwise
    """
    table, failures = run_geometry_study(config, processes=processes,
                                         show_progress=not quiet)
    print(table.to_string(index=False))
    if plot:
        plot_convergence(
            table, os.path.join(config.output_dir, 'geometry.svg'),
            columns=tuple(GEOMETRY_COLUMNS), title=f"{config.name} geometry",
        )
    for failure in failures:
        print(f"Level {failure['level']} failed in stage "
              f"{failure['stage']}: {failure['message']}")
    return EXIT_PARTIAL if failures else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog='tracefem',
        description='Surface vector-Laplace TraceFEM convergence studies',
    )
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group(required=True)
    source.add_argument('config', nargs='?', help='YAML run configuration')
    source.add_argument('--preset', metavar='NAME',
                        help='shipped preset or experiment alias')
    common.add_argument('--plot', action='store_true',
                        help='write convergence.svg')
    common.add_argument('--vtk', action='store_true',
                        help='write Gamma^lin and Gamma_h as VTK')
    common.add_argument('--deterministic', action='store_true',
                        help='reproducible output (sequential, no timings)')
    common.add_argument('--quiet', action='store_true',
                        help='only log warnings, no progress bars')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('study', parents=[common],
                   help='run all levels of a configuration')
    solve = sub.add_parser('solve', parents=[common],
                           help='run a single level')
    solve.add_argument('--level', type=int, required=True)
    solve.add_argument('--export-matrix', action='store_true',
                       help='write the system in matrix-market format')
    sub.add_parser('verify-geometry', parents=[common],
                   help='geometry errors and EOCs per level')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet)
    try:
        if args.preset is not None:
            config = load_preset(args.preset)
        else:
            config = parse_config(args.config)
        if args.deterministic:
            config = config.with_overrides(deterministic=True)
        processes = 1 if config.deterministic else thread_count()
    except ConfigurationError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG

    if args.command == 'study':
        return cmd_study(config, plot=args.plot, vtk=args.vtk,
                         quiet=args.quiet, processes=processes)
    if args.command == 'solve':
        try:
            return cmd_solve(config, args.level, vtk=args.vtk,
                             export_matrix=args.export_matrix,
                             quiet=args.quiet, processes=processes)
        except ConfigurationError as exc:
            logger.error(f"Configuration error: {exc}")
            return EXIT_CONFIG
    return cmd_verify_geometry(config, plot=args.plot, quiet=args.quiet,
                               processes=processes)


if __name__ == "__main__":
    sys.exit(main())
