"""
Core modules for Lattice Chaos.

This package contains the core functionality:
- noise: Lattice martingale paths and smoothed fields
- chaos: Contractions, orderings and iterated integrals
- kernels: Singular kernels, dyadic levels and renormalisation constants
- graphs: Labelled graphs, contraction assumption and exponents
- model: Φ⁴₃ symbols and their pairings
- experiment: Scaling experiments, fits and identity suites
- results: File-based result store
- workflow: Orchestration behind the CLI
"""

from .experiment import ExperimentConfig
from .model import ModelContext
from .results import ResultStore
from .workflow import LatticeChaosWorkflow

__all__ = ['ExperimentConfig', 'ModelContext', 'ResultStore', 'LatticeChaosWorkflow']
