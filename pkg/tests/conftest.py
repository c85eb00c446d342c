"""Shared fixtures for the Lattice Chaos test suite."""

import math

import pytest

from lattice_chaos.core.noise import LatticeSpec, MartingaleSpec, sample_paths


@pytest.fixture
def small_lattice():
    """3-dimensional torus with four sites per axis."""
    return LatticeSpec(d=3, eps=0.25, horizon=1.0)


@pytest.fixture
def line_lattice():
    return LatticeSpec(d=1, eps=0.25, horizon=1.0)


@pytest.fixture
def phi43_spec(small_lattice):
    return MartingaleSpec.phi43(small_lattice)


@pytest.fixture
def one_sided_spec(line_lattice):
    return MartingaleSpec.consistent(line_lattice, k=-0.25, c=0.5, bracket_density=1.0,
                                     jump_model='one-sided-compensated')


@pytest.fixture
def phi43_path(small_lattice, phi43_spec):
    return sample_paths(small_lattice, phi43_spec, seed=11)


@pytest.fixture
def results_dir(tmp_path):
    return tmp_path / "results"


@pytest.fixture
def config_file(tmp_path):
    """Write an INI file from a dict of sections and return its path."""
    def write(sections, name="lattice_chaos.ini"):
        lines = []
        for section, values in sections.items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                lines.append(f"{key} = {value}")
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)
    return write


INV_SQRT2 = 1.0 / math.sqrt(2.0)
