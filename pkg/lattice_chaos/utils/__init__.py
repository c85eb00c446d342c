"""
Utility modules for Lattice Chaos.

Common utilities and configuration:
- config: Configuration management
- errors: Exception hierarchy and exit codes
- logging: Logging setup and utilities
- rng: Counter-based seed splitting
"""

from .config import Config
from .logging import setup_logging

__all__ = ['Config', 'setup_logging']
