"""
Configuration management for Lattice Chaos.

This module provides centralized configuration with sensible defaults that
can be overridden by a flat INI file with the sections ``[lattice]``,
``[martingale]``, ``[kernels]`` and ``[experiment]``. Every key is documented
in CONFIG.md at the repository root.

Values read from a file are coerced to the type of the built-in default, so
``eps = 0.125`` becomes a float and ``lambda_grid = 0.5, 0.25`` a list.
"""

import configparser
import copy
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import ConfigurationError

DEFAULT_CONFIG_FILE = "lattice_chaos.ini"

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'lattice': {
        'd': 3,
        'eps': 0.125,
        'horizon': 1.0,
    },
    'martingale': {
        'preset': 'phi43',
        'k': -0.5,
        'c': 0.7071067811865476,
        'bracket_density': 1.0,
        'jump_model': 'symmetric-pair',
        'site_rate': 0.0,
        'past_horizon': 2.0,
    },
    'kernels': {
        'alpha': 0.75,
        'cutoff_inner': 0.5,
        'cutoff_outer': 1.0,
        'time_step_factor': 0.25,
        'kappa': 0.01,
    },
    'experiment': {
        'symbols': ['Xi', 'Psi', 'Psi2', 'IPsi3Psi2'],
        'eps_grid': [0.125],
        'lambda_grid': [0.5, 0.25, 0.125],
        'p_values': [2.0],
        'replicas': 2000,
        'seed': 0,
        'quadrature_step': 1e-4,
        'output': 'results',
        'budget_ms': 0,
        'regime_factor': 0.5,
        'workers': 1,
        'record_timing': True,
        'tolerance_xi': 0.15,
        'tolerance_psi': 0.15,
        'tolerance_psi2': 0.25,
        'tolerance_ipsi3psi2': 0.35,
    },
}


def _coerce(raw: str, default: Any, key: str) -> Any:
    """Convert a raw INI string to the type of ``default``."""
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            items = [item.strip() for item in text.split(',') if item.strip()]
            if default and isinstance(default[0], str):
                return items
            return parse_float_list(text)
    except (ValueError, ConfigurationError) as e:
        raise ConfigurationError(f"Invalid value for '{key}': {e}") from e
    return text


class Config:
    """
    Configuration manager for Lattice Chaos.

    Holds the merged defaults and file values and exposes them through
    dot-notation lookups such as ``config.get('lattice.eps')``.
    """

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize configuration manager.

        Args:
            config_file: Optional path to an INI configuration file. An explicit
                path that does not exist is an error; without one, the default
                file name is read only when present.
        """
        self.explicit = config_file is not None
        self.config_file = config_file or DEFAULT_CONFIG_FILE
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Dict[str, Any]]:
        """Load defaults, then overlay the configuration file."""
        config = copy.deepcopy(DEFAULTS)

        path = Path(self.config_file)
        if not path.exists():
            if self.explicit:
                raise ConfigurationError(f"Config file not found: {self.config_file}")
            return config

        parser = configparser.ConfigParser()
        try:
            parser.read(path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigurationError(f"Could not parse config file {self.config_file}: {e}") from e

        for section in parser.sections():
            if section not in config:
                raise ConfigurationError(
                    f"Unknown section [{section}] in {self.config_file}"
                )
            for key, raw in parser.items(section):
                if key not in config[section]:
                    raise ConfigurationError(
                        f"Unknown key '{section}.{key}' in {self.config_file}"
                    )
                config[section][key] = _coerce(raw, DEFAULTS[section][key], f"{section}.{key}")

        return config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'lattice.eps')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        keys = key.split('.')
        value: Any = self.config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def set(self, key: str, value: Any) -> None:
        """Override a value using dot notation (used for CLI flags)."""
        section, _, name = key.partition('.')
        if section not in self.config or name not in self.config[section]:
            raise ConfigurationError(f"Unknown configuration key: {key}")
        self.config[section][name] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Return a copy of one section."""
        if name not in self.config:
            raise ConfigurationError(f"Unknown configuration section: {name}")
        return dict(self.config[name])

    def save(self, path: Optional[str] = None) -> None:
        """Save current configuration to an INI file."""
        parser = configparser.ConfigParser()
        for section, values in self.config.items():
            parser[section] = {
                key: (', '.join(str(v) for v in value) if isinstance(value, (list, tuple))
                      else str(value))
                for key, value in values.items()
            }
        target = path or self.config_file
        with open(target, 'w', encoding='utf-8') as f:
            parser.write(f)


# Global configuration instance
_config: Optional[Config] = None


def get_config(config_file: Optional[str] = None, reload: bool = False) -> Config:
    """
    Get the global configuration instance.

    Args:
        config_file: INI file to load when the instance is (re)created
        reload: Replace the cached instance
    """
    global _config
    if _config is None or reload:
        _config = Config(config_file)
    return _config


def parse_float_list(text: str) -> List[float]:
    """Parse a comma separated list of numbers, accepting fractions like ``1/8``."""
    values = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        try:
            if '/' in item:
                num, den = item.split('/', 1)
                values.append(float(num) / float(den))
            else:
                values.append(float(item))
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigurationError(f"Invalid number in list: {item!r}") from e
    if not values:
        raise ConfigurationError(f"Empty list: {text!r}")
    return values
