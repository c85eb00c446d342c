"""
CLI modules for Lattice Chaos.

- main: Primary CLI entry point with the simulate, identities,
  kernels-check, graph-check, scaling and report subcommands
"""
