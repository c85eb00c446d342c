"""Tests for the scaling experiment, exponent fits and the identity and kernel suites."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest

from lattice_chaos.core import experiment
from lattice_chaos.core.experiment import (
    PATH_COLUMNS,
    ContractionRatio,
    ContractionReport,
    ExperimentConfig,
    JumpRateCheck,
    SuiteCheck,
    VarianceCheck,
    estimate_moment,
    fit_all,
    fit_exponent,
    jump_rate_check,
    path_statistics,
    persist,
    run_contraction_check,
    run_identity_suite,
    run_kernel_suite,
    run_scaling,
    variance_checks,
)
from lattice_chaos.core.results import SCALING_COLUMNS, ResultStore, ScalingRecord
from lattice_chaos.utils.config import Config
from lattice_chaos.utils.errors import BudgetExceededError, ConfigurationError, FitError


def power_law(symbol, eps, lams, slope, p=2.0, prefactor=2.0):
    return [ScalingRecord(symbol, eps, lam, p, prefactor * lam ** slope, 0.01, 100, 0)
            for lam in lams]


@pytest.fixture(scope='module')
def small_config():
    return ExperimentConfig(symbols=('Xi', 'Psi'), eps_grid=(0.25,), lambda_grid=(0.5, 0.25),
                            replicas=4, seed=3, record_timing=False)


@pytest.fixture(scope='module')
def contexts(small_config):
    return {0.25: small_config.context(0.25)}


class TestMoments:
    def test_second_moment(self):
        moment, stderr = estimate_moment(np.array([1.0, -1.0, 1.0, -1.0]), 2.0)
        assert moment == pytest.approx(1.0)
        assert stderr == 0.0

    def test_first_moment_stderr(self):
        moment, stderr = estimate_moment(np.array([1.0, -2.0, 3.0]), 1.0)
        assert moment == pytest.approx(2.0)
        assert stderr == pytest.approx(1.0 / math.sqrt(3.0))

    def test_single_sample_has_no_stderr(self):
        assert estimate_moment(np.array([-3.0]), 2.0) == (pytest.approx(3.0), None)

    def test_all_zero(self):
        assert estimate_moment(np.zeros(5), 2.0) == (0.0, 0.0)


class TestConfig:
    def test_defaults_from_config(self):
        config = ExperimentConfig.from_config(Config())
        assert config.symbols == ('Xi', 'Psi', 'Psi2', 'IPsi3Psi2')
        assert config.eps_grid == (0.125,)
        assert config.replicas == 2000
        assert config.past_horizon == 2.0
        assert config.tolerances['Psi2'] == 0.25

    def test_overrides(self):
        config = Config()
        config.set('experiment.replicas', 10)
        config.set('experiment.lambda_grid', [0.5, 0.25])
        parsed = ExperimentConfig.from_config(config)
        assert parsed.replicas == 10
        assert parsed.lambda_grid == (0.5, 0.25)

    @pytest.mark.parametrize("kwargs", [
        {'symbols': ('Phi',)},
        {'lambda_grid': (0.3,)},
        {'lambda_grid': (2.0,)},
        {'replicas': 0},
        {'p_values': (0.0,)},
        {'workers': 0},
        {'budget_ms': -1},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_scaling_regime(self):
        config = ExperimentConfig()
        scale = 0.125 ** 0.75
        assert config.in_scaling_regime(0.125, 0.125)
        assert not config.in_scaling_regime(0.0625, 0.125)
        assert config.scale(0.125) == pytest.approx(scale)

    def test_regime_boundary_is_half_the_scale(self):
        # at eps = 1/8 the threshold 0.5·𝔢 ≈ 0.105 admits all of 1/2, 1/4, 1/8
        config = ExperimentConfig()
        threshold = 0.5 * 0.125 ** 0.75
        assert [config.in_scaling_regime(lam, 0.125) for lam in (0.5, 0.25, 0.125, 0.0625)] == \
            [True, True, True, False]
        assert threshold < 0.125 < 2.0 * threshold

    def test_twice_the_scale_leaves_one_point(self):
        strict = ExperimentConfig(regime_factor=2.0)
        assert [strict.in_scaling_regime(lam, 0.125) for lam in (0.5, 0.25, 0.125)] == \
            [True, False, False]
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.125), -0.5)
        with pytest.raises(FitError, match="got 1"):
            fit_exponent(records, 'Psi', 0.125, 2.0, regime_factor=2.0)
        assert fit_exponent(records, 'Psi', 0.125, 2.0).points == 3

    def test_homogeneity_uses_kappa(self):
        assert ExperimentConfig().homogeneity('Psi') == pytest.approx(-0.51)
        assert ExperimentConfig(kappa=0.02).homogeneity('Psi2') == pytest.approx(-1.04)
        with pytest.raises(ConfigurationError):
            ExperimentConfig(kappa=0.0)

    def test_quadrature_step_from_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = Config()
        assert ExperimentConfig.from_config(config).quadrature_step == 1e-4
        config.set('experiment.quadrature_step', 1e-3)
        assert ExperimentConfig.from_config(config).quadrature_step == 1e-3


class TestFits:
    def test_exact_power_law(self):
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.125), -0.5)
        fit = fit_exponent(records, 'Psi', 0.125, 2.0)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-12)
        assert fit.residual < 1e-12
        assert fit.target == -0.5
        assert fit.tolerance == 0.15
        assert fit.passed
        assert fit.lambdas == (0.125, 0.25, 0.5)

    def test_wrong_slope_fails(self):
        records = power_law('Psi2', 0.125, (0.5, 0.25, 0.125), -0.5)
        fit = fit_exponent(records, 'Psi2', 0.125, 2.0)
        assert fit.target == -1.0
        assert not fit.passed
        assert fit.verdict == (fit.slope, fit.slope_stderr, 0.25)

    def test_saturation_points_are_excluded(self):
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.0625), -0.5)
        with pytest.raises(FitError):
            fit_exponent(records, 'Psi', 0.125, 2.0)

    def test_needs_three_points(self):
        records = power_law('Xi', 0.125, (0.5, 0.25), -2.5)
        with pytest.raises(FitError):
            fit_exponent(records, 'Xi', 0.125, 2.0)

    def test_other_cells_are_ignored(self):
        records = (power_law('Psi', 0.125, (0.5, 0.25, 0.125), -0.5)
                   + power_law('Psi', 0.125, (0.5, 0.25, 0.125), -3.0, p=4.0)
                   + power_law('Xi', 0.125, (0.5, 0.25, 0.125), -2.5))
        fit = fit_exponent(records, 'Psi', 0.125, 2.0)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)

    def test_multiplicative_noise(self):
        # |log noise| <= 0.105 bounds the slope error by about 0.09 on five dyadic points
        rng = np.random.default_rng(0)
        lams = tuple(2.0 ** -k for k in range(1, 6))
        records = [ScalingRecord('Psi', 1 / 64, lam, 2.0,
                                 2.0 * lam ** -0.5 * rng.uniform(0.9, 1.1), 0.01, 100, 0)
                   for lam in lams]
        fit = fit_exponent(records, 'Psi', 1 / 64, 2.0)
        assert fit.points == 5
        assert fit.slope == pytest.approx(-0.5, abs=0.1)
        assert fit.passed

    def test_equal_moments_give_zero_slope(self):
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.125), 0.0)
        fit = fit_exponent(records, 'Psi', 0.125, 2.0)
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.residual == pytest.approx(0.0, abs=1e-12)
        assert not fit.passed

    def test_fit_all_skips_unfittable_cells(self):
        config = ExperimentConfig(symbols=('Xi', 'Psi'), eps_grid=(0.125,),
                                  lambda_grid=(0.5, 0.25, 0.125))
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.125), -0.5)
        fits = fit_all(records, config)
        assert [fit.symbol for fit in fits] == ['Psi']


class TestScaling:
    def test_records(self, small_config, contexts):
        records = run_scaling(small_config, contexts=contexts)
        assert len(records) == 4
        assert [(r.symbol, r.lam) for r in records] == [('Xi', 0.5), ('Xi', 0.25),
                                                        ('Psi', 0.5), ('Psi', 0.25)]
        for record in records:
            assert record.n_replicas == 4
            assert record.wall_ms == 0
            assert record.moment > 0.0
            assert record.stderr is not None

    def test_worker_count_does_not_change_results(self, small_config, contexts):
        single = run_scaling(small_config, contexts=contexts)
        threaded = run_scaling(ExperimentConfig(**{**small_config.__dict__, 'workers': 3}),
                               contexts=contexts)
        assert single == threaded

    def test_variance_checks_use_second_moments(self, small_config, contexts):
        records = run_scaling(small_config, contexts=contexts)
        extra = [ScalingRecord('Psi', 0.25, 0.5, 4.0, 1.0, 0.1, 4, 3)]
        checks = variance_checks(records + extra, small_config, contexts)
        assert [(c.symbol, c.lam) for c in checks] == [('Xi', 0.5), ('Xi', 0.25),
                                                       ('Psi', 0.5), ('Psi', 0.25)]
        for check, record in zip(checks, records):
            assert check.estimate == pytest.approx(record.moment ** 2)
            assert check.stderr == pytest.approx(2.0 * record.moment * record.stderr)
            assert check.exact > 0.0

    def test_variance_check_verdict(self):
        assert VarianceCheck('Psi', 0.25, 0.5, 1.3, 0.1, 1.0).passed
        failing = VarianceCheck('Psi', 0.25, 0.5, 1.5, 0.1, 1.0)
        assert not failing.passed
        assert failing.line().endswith('FAIL')
        assert VarianceCheck('Xi', 0.25, 0.5, 9.0, None, 1.0).passed

    @pytest.mark.slow
    def test_second_moment_matches_exact_variance(self, contexts):
        config = ExperimentConfig(symbols=('Xi', 'Psi'), eps_grid=(0.25,),
                                  lambda_grid=(0.5, 0.25), replicas=200, seed=8,
                                  record_timing=False)
        records = run_scaling(config, contexts=contexts)
        checks = variance_checks(records, config, contexts)
        assert len(checks) == 4
        assert all(check.passed for check in checks), [check.line() for check in checks]

    @pytest.mark.slow
    def test_quadrupling_replicas_halves_stderr(self, contexts):
        def stderr(replicas):
            config = ExperimentConfig(symbols=('Psi',), eps_grid=(0.25,), lambda_grid=(0.5,),
                                      p_values=(1.0,), replicas=replicas, seed=9,
                                      record_timing=False)
            return run_scaling(config, contexts=contexts)[0].stderr

        assert stderr(800) / stderr(200) == pytest.approx(0.5, rel=0.3)

    def test_budget_keeps_partial_records(self, small_config, contexts, results_dir, monkeypatch):
        clock = itertools.count(0.0, 1.0)
        monkeypatch.setattr(experiment, 'time', SimpleNamespace(monotonic=lambda: next(clock)))
        config = ExperimentConfig(**{**small_config.__dict__, 'budget_ms': 1})
        store = ResultStore(str(results_dir))
        with pytest.raises(BudgetExceededError) as excinfo:
            run_scaling(config, store=store, contexts=contexts)
        assert excinfo.value.partial_records == []
        assert excinfo.value.exit_code == 1
        assert store.read_records() == []


class TestIdentitySuite:
    def test_small_suite_passes(self):
        report = run_identity_suite(7, sizes=(1, 2), instances=3, diagonal_sizes=(2, 3),
                                    diagonal_instances=2, renorm_instances=1)
        assert report.passed
        names = [check.name for check in report.checks]
        assert names == ['decomposition', 'decomposition', 'diagonal split', 'diagonal split',
                         'renormalisation split', 'renormalisation split']
        lines = report.lines()
        assert lines[0] == 'identity suite seed=7'
        assert all(line.endswith('PASS') for line in lines[1:])

    def test_report_depends_on_seed_only(self):
        kwargs = dict(sizes=(2,), instances=2, diagonal_sizes=(2,), diagonal_instances=1,
                      renorm_instances=1)
        assert run_identity_suite(11, **kwargs).lines() == run_identity_suite(11, **kwargs).lines()


class TestKernelSuite:
    def test_suite_check_line(self):
        check = SuiteCheck('dyadic reconstruction', 'eps=0.25', 1e-12, 1e-8)
        assert check.passed
        assert check.line().endswith('PASS')
        assert not SuiteCheck('level constants', 'eps=0.25', 5.0, 4.0).passed

    @pytest.mark.slow
    def test_single_mesh(self):
        report = run_kernel_suite((0.25,), with_c2=False)
        assert [check.name for check in report.checks] == [
            'dyadic reconstruction', 'level constants', 'C1 step halving']
        assert report.checks[0].passed
        constants = report.constants[0]
        assert constants.c1 > 0.0
        assert math.isnan(constants.c2)
        assert report.lines()[-2].startswith('C1 eps=0.25 ')

    @pytest.mark.slow
    def test_mesh_comparisons(self):
        report = run_kernel_suite((0.25, 0.125), with_c2=False)
        by_name = {check.name: check for check in report.checks}
        assert by_name['kernel norm a=3'].passed
        assert by_name['C1 divergence'].passed
        assert by_name['kernel norm a=3'].detail == 'eps=0.25,0.125'
        assert report.constants[1].c1 > report.constants[0].c1


class TestContraction:
    def test_ratio_verdict_accounts_for_stderr(self):
        assert ContractionRatio(0.125, 0.0625, 0.2, 0.05).passed
        assert not ContractionRatio(0.125, 0.0625, 0.8, 0.06).passed
        assert not ContractionRatio(0.125, 0.0625, 0.95, 0.0).passed
        assert 'threshold 0.9 PASS' in ContractionRatio(0.125, 0.0625, 0.2, 0.05).line()

    def test_report_needs_a_ratio(self):
        assert not ContractionReport(0.5, (), ()).passed

    @pytest.mark.parametrize("kwargs", [
        {'eps_values': (0.125,)},
        {'eps_values': (0.125, 0.125)},
        {'replicas': 1},
    ])
    def test_rejects_degenerate_runs(self, kwargs):
        with pytest.raises(ConfigurationError):
            run_contraction_check(**kwargs)

    @pytest.mark.slow
    def test_cherry_moment_decays(self):
        report = run_contraction_check((0.125, 0.0625), replicas=40, seed=1)
        assert [moment.eps for moment in report.moments] == [0.125, 0.0625]
        ratio = report.ratios[0]
        assert ratio.ratio + 2.0 * ratio.stderr < 0.9
        assert report.passed
        for moment in report.moments:
            assert moment.moment == pytest.approx(moment.exact, rel=0.5)
        assert report.moments[1].exact < 0.9 * report.moments[0].exact


class TestPathStatistics:
    def test_rows(self, line_lattice, one_sided_spec):
        rows = path_statistics(line_lattice, one_sided_spec, seed=5, replicas=3)
        assert len(rows) == 3
        assert all(len(row) == len(PATH_COLUMNS) for row in rows)
        assert [row[0] for row in rows] == [0, 1, 2]
        target = rows[0][PATH_COLUMNS.index('window_jump_target')]
        assert target == pytest.approx(one_sided_spec.site_rate * 0.25 ** 0.5)

    def test_window_must_fit_horizon(self, line_lattice, one_sided_spec):
        with pytest.raises(ConfigurationError):
            path_statistics(line_lattice, one_sided_spec, seed=5, replicas=1, window_t=4.0)

    def test_jump_rate_check(self):
        column = PATH_COLUMNS.index('window_jump_mean')

        def row(mean):
            values = [0] * len(PATH_COLUMNS)
            values[column] = mean
            values[PATH_COLUMNS.index('window_jump_target')] = 8.0
            return tuple(values)

        check = jump_rate_check([row(7.5), row(8.5), row(8.0)])
        assert check.mean == pytest.approx(8.0)
        assert check.passed
        assert 'PASS' in check.line()
        assert not jump_rate_check([row(1.0), row(1.1), row(0.9)]).passed

    def test_single_replica_passes(self):
        check = JumpRateCheck(3.0, None, 8.0, 1)
        assert check.passed
        assert 'stderr n/a' in check.line()

    def test_needs_rows(self):
        with pytest.raises(ConfigurationError):
            jump_rate_check([])


class TestPersist:
    def test_empty_csv_has_header(self, tmp_path):
        target = persist([], str(tmp_path / "out" / "scaling.csv"))
        assert target.read_text(encoding='utf-8') == ','.join(SCALING_COLUMNS) + '\n'

    def test_records_and_fits(self, tmp_path):
        records = power_law('Psi', 0.125, (0.5, 0.25, 0.125), -0.5)
        persist(records, str(tmp_path / "scaling.csv"))
        assert ResultStore(str(tmp_path)).read_records() == records

        fit = fit_exponent(records, 'Psi', 0.125, 2.0)
        target = persist([fit], str(tmp_path / "fits.txt"))
        line = target.read_text(encoding='utf-8').strip()
        assert line.startswith('symbol=Psi eps=0.125 p=2.0 slope=')
        assert line.endswith('verdict=PASS')

    def test_identity_report(self, tmp_path):
        report = run_identity_suite(1, sizes=(1,), instances=1, diagonal_sizes=(),
                                    renorm_instances=1)
        target = persist(report, str(tmp_path / "identities.txt"))
        assert target.read_text(encoding='utf-8').splitlines() == report.lines()
