"""Tests for configuration, seed splitting and logging setup."""

import logging

import pytest

from lattice_chaos.utils import config as config_module
from lattice_chaos.utils.config import DEFAULTS, Config, get_config, parse_float_list
from lattice_chaos.utils.errors import ConfigurationError
from lattice_chaos.utils.logging import get_logger, setup_logging
from lattice_chaos.utils.rng import replica_seeds, split_seed, stream_generator


class TestConfig:
    def test_defaults_without_file(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = Config()
        assert config.get('lattice.eps') == 0.125
        assert config.get('experiment.symbols') == ['Xi', 'Psi', 'Psi2', 'IPsi3Psi2']
        assert config.get('missing.key', 'fallback') == 'fallback'

    def test_missing_explicit_file(self, tmp_path):
        path = tmp_path / "nowhere.ini"
        with pytest.raises(ConfigurationError, match="nowhere.ini"):
            Config(str(path))

    def test_file_overrides_and_coercion(self, config_file):
        path = config_file({
            'lattice': {'eps': '0.25', 'd': '3'},
            'experiment': {'lambda_grid': '0.5, 0.25', 'record_timing': 'false',
                           'symbols': 'Xi, Psi'},
        })
        config = Config(path)
        assert config.get('lattice.eps') == 0.25
        assert config.get('lattice.d') == 3
        assert config.get('experiment.lambda_grid') == [0.5, 0.25]
        assert config.get('experiment.record_timing') is False
        assert config.get('experiment.symbols') == ['Xi', 'Psi']

    def test_unknown_key(self, config_file):
        path = config_file({'lattice': {'mesh': '0.25'}})
        with pytest.raises(ConfigurationError, match="lattice.mesh"):
            Config(path)

    def test_unknown_section(self, config_file):
        path = config_file({'output': {'dir': 'x'}})
        with pytest.raises(ConfigurationError, match=r"\[output\]"):
            Config(path)

    def test_bad_value(self, config_file):
        path = config_file({'experiment': {'replicas': 'many'}})
        with pytest.raises(ConfigurationError, match="experiment.replicas"):
            Config(path)

    def test_fraction_lists(self, config_file):
        path = config_file({'experiment': {'eps_grid': '1/4, 1/8', 'lambda_grid': '1/2,0.25'}})
        config = Config(path)
        assert config.get('experiment.eps_grid') == [0.25, 0.125]
        assert config.get('experiment.lambda_grid') == [0.5, 0.25]
        bad = config_file({'experiment': {'eps_grid': 'quarter'}}, name="bad.ini")
        with pytest.raises(ConfigurationError, match="experiment.eps_grid"):
            Config(bad)

    def test_set_and_section(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = Config()
        config.set('experiment.seed', 7)
        assert config.section('experiment')['seed'] == 7
        with pytest.raises(ConfigurationError):
            config.set('experiment.colour', 'blue')

    def test_save_round_trip(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = Config()
        config.set('experiment.eps_grid', [0.25, 0.125])
        target = tmp_path / "saved.ini"
        config.save(str(target))
        reloaded = Config(str(target))
        assert reloaded.get('experiment.eps_grid') == [0.25, 0.125]
        assert reloaded.get('martingale.jump_model') == DEFAULTS['martingale']['jump_model']

    def test_global_instance(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr(config_module, '_config', None)
        first = get_config()
        assert get_config() is first
        assert first.get('lattice.d') == 3

    def test_global_instance_reload(self, tmp_path, monkeypatch, config_file):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr(config_module, '_config', None)
        first = get_config()
        path = config_file({'experiment': {'seed': '11'}})
        assert get_config(path) is first
        reloaded = get_config(path, reload=True)
        assert reloaded is not first
        assert reloaded.get('experiment.seed') == 11
        assert get_config() is reloaded

    def test_parse_float_list(self):
        assert parse_float_list("1/2, 1/4,0.125") == [0.5, 0.25, 0.125]
        with pytest.raises(ConfigurationError):
            parse_float_list("a,b")
        with pytest.raises(ConfigurationError):
            parse_float_list("1/0")
        with pytest.raises(ConfigurationError):
            parse_float_list(" , ")


class TestSeeds:
    def test_split_seed_is_deterministic(self):
        assert split_seed(7, 1, 2) == split_seed(7, 1, 2)
        assert split_seed(7, 1, 2) != split_seed(7, 2, 1)
        assert 0 <= split_seed(7) < 2 ** 64

    def test_replica_seeds_distinct(self):
        seeds = list(replica_seeds(3, 50))
        assert len(set(seeds)) == 50
        assert list(replica_seeds(3, 5, 1)) != seeds[:5]

    def test_streams_are_independent_of_order(self):
        a = stream_generator(5, 2, 1).random(4)
        stream_generator(5, 3, 0).random(100)
        b = stream_generator(5, 2, 1).random(4)
        assert list(a) == list(b)
        assert list(stream_generator(5, 2, 0).random(4)) != list(a)

    def test_stream_id_range(self):
        with pytest.raises(ValueError):
            stream_generator(1, 0, 256)


class TestLogging:
    def test_setup_logging(self, tmp_path):
        log_file = tmp_path / "run.log"
        logger = setup_logging("DEBUG", str(log_file), include_timestamp=False)
        get_logger("core.noise").debug("hello from noise")
        for handler in logger.handlers:
            handler.flush()
        assert "hello from noise" in log_file.read_text()
        assert logger.level == logging.DEBUG
        setup_logging("WARNING")

    def test_child_names(self):
        assert get_logger("experiment").name == "lattice_chaos.experiment"
        assert get_logger("lattice_chaos.model").name == "lattice_chaos.model"
