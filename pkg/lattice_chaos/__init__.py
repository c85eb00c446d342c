"""
Lattice Chaos: Lattice Martingales, Iterated Integrals and Diagram Scaling

Tools for discretised singular SPDEs driven by càdlàg martingales on a
periodic lattice. The package simulates the driving noise, evaluates its
multiple stochastic integrals through contractions and orderings, builds the
singular kernels of the dynamical Φ⁴₃ model, checks the power counting of
labelled diagrams, and measures moment scalings by Monte Carlo.

Philosophy:
- Exact where possible: integrals against jump paths are finite sums and are
  evaluated as such
- Every verdict carries its evidence: estimate, standard error, threshold
- Reproducible by construction: all randomness flows from one master seed

Key Components:
- Noise: lattice martingale paths, brackets and smoothed fields
- Chaos: contractions, orderings and (renormalised) iterated integrals
- Kernels: smoothed heat kernel, dyadic levels, renormalisation constants
- Graphs: fixture parser, contraction assumption and exponent algebra
- Model: Φ⁴₃ tree symbols paired with rescaled test functions
- Experiment: scaling runs, exponent fits and identity suites
"""

__version__ = "0.1.0"
__author__ = "Lattice Chaos Team"
__email__ = "team@lattice-chaos.org"

# Core imports for library usage
from .core.noise import LatticeSpec, MartingaleSpec, MartingalePathSet, sample_paths
from .core.chaos import Contraction, Labeling, iterated_integral, product_integral
from .core.kernels import CutoffFunction, build_kernel_grid, build_singular_kernel
from .core.graphs import check_graph, load_graph, parse_graph
from .core.model import ModelContext
from .core.experiment import ExperimentConfig, fit_exponent, run_identity_suite, run_scaling
from .core.results import ResultStore
from .core.workflow import LatticeChaosWorkflow

# Convenience imports
from .utils.config import Config
from .utils.logging import setup_logging

__all__ = [
    'LatticeSpec',
    'MartingaleSpec',
    'MartingalePathSet',
    'sample_paths',
    'Contraction',
    'Labeling',
    'iterated_integral',
    'product_integral',
    'CutoffFunction',
    'build_kernel_grid',
    'build_singular_kernel',
    'check_graph',
    'load_graph',
    'parse_graph',
    'ModelContext',
    'ExperimentConfig',
    'fit_exponent',
    'run_identity_suite',
    'run_scaling',
    'ResultStore',
    'LatticeChaosWorkflow',
    'Config',
    'setup_logging'
]
