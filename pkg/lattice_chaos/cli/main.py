"""
Main CLI entry point for Lattice Chaos.

This module provides the primary command-line interface for the path
simulator, the identity and kernel suites, the graph checker and the
scaling experiments.
"""

import argparse
import sys
from typing import List, Optional

from ..core.workflow import LatticeChaosWorkflow
from ..utils.config import Config, get_config, parse_float_list
from ..utils.errors import BudgetExceededError, LatticeChaosError, PersistenceError
from ..utils.logging import setup_logging

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

COMMANDS = ('simulate', 'identities', 'kernels-check', 'graph-check', 'contraction-check',
            'scaling', 'report')


def _common_options() -> argparse.ArgumentParser:
    """Options accepted both before and after the subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=argparse.SUPPRESS,
                        help='INI configuration file (see CONFIG.md)')
    common.add_argument('--seed', type=int, default=argparse.SUPPRESS,
                        help='Master seed (overrides experiment.seed)')
    common.add_argument('--out', default=argparse.SUPPRESS,
                        help='Output directory (overrides experiment.output)')
    common.add_argument('--replicas', type=int, default=argparse.SUPPRESS,
                        help='Number of replicas (overrides experiment.replicas)')
    common.add_argument('--eps', default=argparse.SUPPRESS,
                        help='Comma separated lattice meshes, e.g. 1/4,1/8')
    common.add_argument('--lambda', dest='lambdas', default=argparse.SUPPRESS,
                        help='Comma separated dyadic test-function scales, e.g. 1/2,1/4,1/8')
    common.add_argument('--budget-ms', type=int, default=argparse.SUPPRESS,
                        help='Wall-clock budget of a scaling run in milliseconds (0 = none)')
    common.add_argument('--quiet', action='store_true', default=argparse.SUPPRESS,
                        help='Suppress human-readable summaries')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default=argparse.SUPPRESS, help='Logging level (default INFO)')
    common.add_argument('--log-file', default=argparse.SUPPRESS, help='Log file path')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog='lattice-chaos',
        description='Lattice Chaos: lattice martingales, iterated integrals and diagram scaling',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog="""
Examples:
  lattice-chaos simulate --eps 1/4 --replicas 200      # Path statistics and jump-rate law
  lattice-chaos identities --seed 7                    # Exact chaos identities
  lattice-chaos kernels-check --eps 1/4,1/8            # Dyadic, norm and C1/C2 checks
  lattice-chaos graph-check fixtures/psi.graph         # Contraction assumption and exponents
  lattice-chaos contraction-check --replicas 50        # Cherry moment decay from 1/8 to 1/16
  lattice-chaos scaling --replicas 500 --out results   # Scaling experiment and fits
  lattice-chaos report results                         # Summarize a results directory

Configuration keys are documented in CONFIG.md.
        """
    )

    # Subcommands
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    subparsers.add_parser('simulate', parents=[common],
                          help='Sample paths and check jump counts and brackets')

    identities_parser = subparsers.add_parser('identities', parents=[common],
                                              help='Run the exact chaos identity suite')
    identities_parser.add_argument('--instances', type=int,
                                   help='Random instances per decomposition size (default 100)')

    subparsers.add_parser('kernels-check', parents=[common],
                          help='Check dyadic levels, kernel norms and C1, C2')

    graph_parser = subparsers.add_parser('graph-check', parents=[common],
                                         help='Check graph fixtures against the contraction assumption')
    graph_parser.add_argument('paths', nargs='*',
                              help='Fixture files (default: the packaged fixtures)')

    subparsers.add_parser('contraction-check', parents=[common],
                          help='Check that the fully contracted Psi2 pairing decays with eps')

    subparsers.add_parser('scaling', parents=[common],
                          help='Run the scaling experiment and fit exponents')

    report_parser = subparsers.add_parser('report', parents=[common],
                                          help='Summarize a results directory')
    report_parser.add_argument('directory', nargs='?',
                               help='Results directory (default: --out)')

    return parser


def load_config(parsed_args: argparse.Namespace) -> Config:
    """Read the configuration file and apply the command line overrides."""
    config = get_config(getattr(parsed_args, 'config', None), reload=True)
    if hasattr(parsed_args, 'seed'):
        config.set('experiment.seed', parsed_args.seed)
    if hasattr(parsed_args, 'out'):
        config.set('experiment.output', parsed_args.out)
    if hasattr(parsed_args, 'replicas'):
        config.set('experiment.replicas', parsed_args.replicas)
    if hasattr(parsed_args, 'eps'):
        config.set('experiment.eps_grid', parse_float_list(parsed_args.eps))
    if hasattr(parsed_args, 'lambdas'):
        config.set('experiment.lambda_grid', parse_float_list(parsed_args.lambdas))
    if hasattr(parsed_args, 'budget_ms'):
        config.set('experiment.budget_ms', parsed_args.budget_ms)
    return config


def run_command(workflow: LatticeChaosWorkflow, parsed_args: argparse.Namespace) -> bool:
    """Dispatch one subcommand; returns whether all its verdicts pass."""
    command = parsed_args.command
    config = workflow.config

    if command == 'simulate':
        if hasattr(parsed_args, 'eps'):
            # simulate runs on a single mesh: the first --eps value
            config.set('lattice.eps', config.get('experiment.eps_grid')[0])
        result = workflow.simulate()

    elif command == 'identities':
        result = workflow.identities(parsed_args.instances)

    elif command == 'kernels-check':
        eps_values = config.get('experiment.eps_grid') if hasattr(parsed_args, 'eps') else None
        result = workflow.kernels_check(eps_values)

    elif command == 'graph-check':
        result = workflow.graph_check(parsed_args.paths)

    elif command == 'contraction-check':
        # only explicit flags override the check's own defaults
        result = workflow.contraction_check(
            config.get('experiment.eps_grid') if hasattr(parsed_args, 'eps') else None,
            parsed_args.replicas if hasattr(parsed_args, 'replicas') else None,
            config.get('experiment.lambda_grid')[0] if hasattr(parsed_args, 'lambdas') else None,
        )

    elif command == 'scaling':
        result = workflow.scaling()

    elif command == 'report':
        result = workflow.report(parsed_args.directory)

    else:
        raise LatticeChaosError(f"unknown command {command!r}")

    return bool(result['passed'])


def main(args: Optional[List[str]] = None) -> int:
    """
    Main CLI entry point.

    Args:
        args: Optional list of command line arguments

    Returns:
        Exit code: 0 when every verdict passes, 1 on a failed verdict or an
        interrupted run, 2 on configuration and input errors, 3 on I/O errors
    """
    parser = build_parser()
    parsed_args = parser.parse_args(args)
    quiet = getattr(parsed_args, 'quiet', False)

    # Check if command was provided
    if not parsed_args.command:
        parser.print_help()
        return EXIT_CONFIG

    try:
        level = getattr(parsed_args, 'log_level', 'WARNING' if quiet else 'INFO')
        setup_logging(level, getattr(parsed_args, 'log_file', None))
        config = load_config(parsed_args)
        workflow = LatticeChaosWorkflow(config, quiet=quiet)
        return EXIT_OK if run_command(workflow, parsed_args) else EXIT_FAILED

    except KeyboardInterrupt:
        print("\n⚠️  Operation cancelled by user")
        return EXIT_FAILED
    except BudgetExceededError as e:
        print(f"⚠️  Budget exceeded: {e}")
        return e.exit_code
    except PersistenceError as e:
        print(f"❌ I/O error: {e}")
        return e.exit_code
    except LatticeChaosError as e:
        print(f"❌ Error: {e}")
        return e.exit_code
    except OSError as e:
        print(f"❌ I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
