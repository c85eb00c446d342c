"""Tests for the lattice-chaos command line and the workflow behind it."""

import pytest

from lattice_chaos.cli.main import COMMANDS, EXIT_CONFIG, EXIT_FAILED, EXIT_IO, EXIT_OK, \
    build_parser, load_config, main
from lattice_chaos.core.results import (CONTRACTION_FILE, GRAPHS_FILE, ORACLES_FILE, PATHS_FILE,
                                        RUN_CONFIG_FILE, ResultStore)
from lattice_chaos.utils.config import Config
from lattice_chaos.core.experiment import PATH_COLUMNS

MISMATCHED_PSI = """\
vertex s star
vertex u up
vertex w var
edge s u a=0 r=0
edge w u a=3 r=0
expect fail
"""


@pytest.fixture
def out(tmp_path):
    return str(tmp_path / "results")


class TestParser:
    def test_options_before_and_after_command(self):
        parser = build_parser()
        after = parser.parse_args(['scaling', '--seed', '4', '--eps', '1/4'])
        before = parser.parse_args(['--seed', '4', '--eps', '1/4', 'scaling'])
        assert after.command == before.command == 'scaling'
        assert after.seed == before.seed == 4
        assert after.eps == before.eps == '1/4'

    def test_every_command_parses(self):
        parser = build_parser()
        for command in COMMANDS:
            assert parser.parse_args([command]).command == command
        assert 'contraction-check' in COMMANDS

    def test_absent_options_are_not_set(self):
        parsed = build_parser().parse_args(['identities'])
        assert not hasattr(parsed, 'seed')
        assert parsed.instances is None

    def test_overrides_reach_config(self, tmp_path):
        parsed = build_parser().parse_args(['scaling', '--eps', '1/4,1/8', '--lambda', '1/2,1/4',
                                            '--replicas', '7', '--seed', '9',
                                            '--budget-ms', '500', '--out', str(tmp_path)])
        config = load_config(parsed)
        assert config.get('experiment.eps_grid') == [0.25, 0.125]
        assert config.get('experiment.lambda_grid') == [0.5, 0.25]
        assert config.get('experiment.replicas') == 7
        assert config.get('experiment.seed') == 9
        assert config.get('experiment.budget_ms') == 500
        assert config.get('experiment.output') == str(tmp_path)

    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit) as excinfo:
            main(['frobnicate'])
        assert excinfo.value.code == 2


class TestMain:
    def test_no_command_prints_help(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert 'usage: lattice-chaos' in capsys.readouterr().out

    def test_graph_check(self, out, capsys):
        assert main(['graph-check', '--out', out]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert 'ν_γ = −0.5, Assumption: PASS' in stdout
        assert 'ν_γ = −3.5, Assumption: FAIL' in stdout
        assert 'p=(2): alpha=0 beta=1 delta=0' in stdout
        assert '✅ Graph fixtures (6 checked): PASS' in stdout
        lines = ResultStore(out).read_report(GRAPHS_FILE)
        assert '[cherry_soft]' in lines

    def test_graph_check_mismatch(self, out, tmp_path, capsys):
        fixture = tmp_path / "psi_fail.graph"
        fixture.write_text(MISMATCHED_PSI, encoding='utf-8')
        assert main(['graph-check', str(fixture), '--out', out]) == EXIT_FAILED
        assert 'DOES NOT match' in capsys.readouterr().out

    def test_graph_parse_error(self, out, tmp_path, capsys):
        fixture = tmp_path / "broken.graph"
        fixture.write_text("vertex s star\nedge s nowhere a=0 r=0\n", encoding='utf-8')
        assert main(['graph-check', str(fixture), '--out', out]) == EXIT_CONFIG
        stdout = capsys.readouterr().out
        assert '❌ Error' in stdout
        assert 'broken.graph:2:' in stdout

    def test_identities_are_reproducible(self, out, capsys):
        args = ['identities', '--seed', '7', '--instances', '2', '--out', out]
        assert main(args) == EXIT_OK
        first = capsys.readouterr().out
        assert main(args) == EXIT_OK
        second = capsys.readouterr().out
        assert first == second
        assert '✅ Identity suite: PASS' in first

    def test_missing_config(self, tmp_path, capsys):
        missing = str(tmp_path / "nowhere.ini")
        assert main(['identities', '--config', missing]) == EXIT_CONFIG
        assert missing in capsys.readouterr().out

    def test_invalid_config_value(self, config_file, capsys):
        path = config_file({'experiment': {'replicas': 'many'}})
        assert main(['--config', path, 'report']) == EXIT_CONFIG
        assert 'experiment.replicas' in capsys.readouterr().out

    def test_report_on_missing_directory(self, tmp_path, capsys):
        assert main(['report', str(tmp_path / "absent")]) == EXIT_IO
        assert 'I/O error' in capsys.readouterr().out

    def test_report_after_graph_check(self, out, capsys):
        main(['graph-check', '--out', out, '--quiet'])
        assert capsys.readouterr().out == ''
        assert main(['report', out]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert GRAPHS_FILE in stdout
        assert '✅ Report: PASS' in stdout

    def test_simulate(self, config_file, out, capsys):
        path = config_file({
            'lattice': {'d': 1, 'eps': 0.5},
            'martingale': {'preset': 'custom', 'k': -0.25, 'c': 0.5},
            'experiment': {'replicas': 30, 'seed': 2},
        })
        assert main(['--config', path, 'simulate', '--eps', '1/4', '--out', out]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert '4^1 sites' in stdout
        assert 'Jump-rate law: PASS' in stdout
        text = ResultStore(out).read_report(PATHS_FILE)
        assert text[0] == ','.join(PATH_COLUMNS)
        assert len(text) == 31

    def test_simulate_rejects_inconsistent_law(self, config_file, out, capsys):
        path = config_file({
            'lattice': {'d': 1, 'eps': 0.25},
            'martingale': {'preset': 'custom', 'k': -0.25, 'c': 0.5, 'site_rate': 3.0},
            'experiment': {'replicas': 2},
        })
        assert main(['--config', path, 'simulate', '--out', out]) == EXIT_CONFIG
        assert 'inconsistent spec' in capsys.readouterr().out

    def test_scaling(self, config_file, out, capsys):
        path = config_file({
            'lattice': {'eps': 0.25},
            'experiment': {'symbols': 'Xi', 'eps_grid': '1/4', 'lambda_grid': '1, 1/2, 1/4',
                           'replicas': 4, 'record_timing': 'false'},
        })
        code = main(['--config', path, 'scaling', '--out', out])
        assert code in (EXIT_OK, EXIT_FAILED)
        store = ResultStore(out)
        records = store.read_records()
        assert [r.lam for r in records] == [1.0, 0.5, 0.25]
        assert len(store.read_fits()) == 1
        stdout = capsys.readouterr().out
        assert 'Fits (1)' in stdout
        assert 'homogeneity -2.51' in stdout
        assert len(store.read_report(ORACLES_FILE)) == 3
        saved = Config(str(store.path(RUN_CONFIG_FILE)))
        assert saved.get('experiment.replicas') == 4
        assert saved.get('experiment.output') == out

    @pytest.mark.slow
    def test_contraction_check(self, out, capsys):
        args = ['contraction-check', '--eps', '1/4,1/8', '--replicas', '4', '--out', out]
        assert main(args) in (EXIT_OK, EXIT_FAILED)
        lines = ResultStore(out).read_report(CONTRACTION_FILE)
        assert len(lines) == 3
        assert lines[0].startswith('cherry eps=0.25 ')
        assert lines[2].startswith('cherry ratio eps=0.25->0.125: ')
        assert 'Cherry decay' in capsys.readouterr().out
