"""
Workflow orchestration for the Lattice Chaos suites and experiments.

This module provides the high-level interface the CLI drives. Each method
runs one suite, writes its artifact into the result store and prints a
short human summary, so that a command line session reads like a report.

Key Design Principles:
1. One artifact per suite: machine-readable output goes to the result
   store only, human summaries go to stdout only
2. Verdicts, not exceptions: a suite that runs but fails its thresholds
   returns passed = False; exceptions mean the suite could not run
3. Configuration in one place: lattice, martingale law, kernels and the
   experiment grid are all read from a single Config

The workflow wires four components:
1. noise: lattice martingale paths and their statistics
2. chaos and kernels: the exact identity and kernel suites
3. graphs: fixture verdicts and exponents
4. experiment and results: scaling runs, fits and the result store
"""

import math
from typing import Any, Dict, List, Optional, Sequence

from ..utils.config import Config
from ..utils.errors import BudgetExceededError, ConfigurationError
from ..utils.logging import get_logger
from .experiment import (CONTRACTION_CHECK_EPS, CONTRACTION_REPLICAS, KERNEL_CHECK_EPS,
                         PATH_COLUMNS, ExperimentConfig, fit_all, jump_rate_check,
                         path_statistics, run_contraction_check, run_identity_suite,
                         run_kernel_suite, run_scaling, variance_checks)
from .graphs import check_graph, exponent_report, format_check, load_graph, packaged_fixtures
from .kernels import CutoffFunction
from .model import ModelContext
from .noise import ONE_SIDED, LatticeSpec, MartingaleSpec
from .results import (CONTRACTION_FILE, FITS_FILE, GRAPHS_FILE, IDENTITIES_FILE, KERNELS_FILE,
                      ORACLES_FILE, PATHS_FILE, SCALING_FILE, ResultStore)

logger = get_logger(__name__)


def lattice_from_config(config: Config) -> LatticeSpec:
    return LatticeSpec(int(config.get('lattice.d')), float(config.get('lattice.eps')),
                       float(config.get('lattice.horizon')))


def martingale_from_config(config: Config, lattice: LatticeSpec) -> MartingaleSpec:
    """
    The martingale law named by the [martingale] section.

    ``preset = phi43`` ignores the other keys. ``preset = custom`` derives the
    site rate from the bracket identity when ``site_rate = 0`` and otherwise
    checks the given rate against it.
    """
    section = config.section('martingale')
    preset = section['preset']
    if preset == 'phi43':
        return MartingaleSpec.phi43(lattice)
    if preset != 'custom':
        raise ConfigurationError(f"martingale.preset must be 'phi43' or 'custom', got {preset!r}")
    k, c = float(section['k']), float(section['c'])
    density = float(section['bracket_density'])
    model = section['jump_model']
    if float(section['site_rate']) == 0.0:
        return MartingaleSpec.consistent(lattice, k, c, density, model)
    compensator = density / c if model == ONE_SIDED else 0.0
    spec = MartingaleSpec(k=k, c=c, site_rate=float(section['site_rate']),
                          bracket_density=density, compensator_density=compensator,
                          jump_model=model)
    spec.check(lattice)
    return spec


class LatticeChaosWorkflow:
    """
    Orchestrates the suites behind the CLI subcommands.

    Every public method returns a summary dictionary with at least the key
    ``passed``; the CLI turns a False verdict into exit code 1.
    """

    def __init__(self, config: Config, quiet: bool = False):
        """
        Args:
            config: Merged configuration (file values and CLI overrides)
            quiet: Suppress the human summaries
        """
        self.config = config
        self.quiet = quiet
        self.store = ResultStore(str(config.get('experiment.output')))
        self.seed = int(config.get('experiment.seed'))

    def _say(self, message: str = "") -> None:
        if not self.quiet:
            print(message)

    def _verdict(self, passed: bool, what: str) -> None:
        self._say(f"{'✅' if passed else '❌'} {what}: {'PASS' if passed else 'FAIL'}")

    def simulate(self) -> Dict[str, Any]:
        """
        Sample replica paths and check the jump-rate law.

        Writes paths_summary.csv with one row per replica.
        """
        lattice = lattice_from_config(self.config)
        spec = martingale_from_config(self.config, lattice)
        replicas = int(self.config.get('experiment.replicas'))
        self._say(f"\n🎲 Simulating {replicas} replicas on {lattice.side}^{lattice.d} sites "
                  f"(eps={lattice.eps:g}, T={lattice.horizon:g}, seed={self.seed})")

        rows = path_statistics(lattice, spec, self.seed, replicas)
        target = self.store.write_table(PATHS_FILE, PATH_COLUMNS, rows)
        check = jump_rate_check(rows)

        self._say("\n📊 Path statistics:")
        self._say(f"  Mean events per replica: {sum(r[2] for r in rows) / len(rows):.1f}")
        self._say(f"  Mean realized bracket: {sum(r[4] for r in rows) / len(rows):.4f} "
                  f"(predictable {rows[0][5]:.4f})")
        self._say(f"  {check.line()}")
        self._say(f"📂 Wrote {target}")
        self._verdict(check.passed, "Jump-rate law")
        return {'passed': check.passed, 'rows': len(rows), 'jump_rate': check,
                'artifact': str(target)}

    def identities(self, instances: Optional[int] = None) -> Dict[str, Any]:
        """Run the exact identity suite and write identities.txt."""
        self._say(f"\n🧮 Running identity suite (seed={self.seed})")
        step = float(self.config.get('experiment.quadrature_step'))
        kwargs: Dict[str, Any] = {'renorm_step': step}
        if instances is not None:
            kwargs.update(instances=instances, diagonal_instances=max(1, instances // 2),
                          renorm_instances=max(1, instances // 10))
        report = run_identity_suite(self.seed, **kwargs)
        target = self.store.write_report(IDENTITIES_FILE, report.lines())

        for check in report.checks:
            self._say(f"  {'✅' if check.passed else '❌'} {check.line()}")
        self._say(f"📂 Wrote {target}")
        self._verdict(report.passed, "Identity suite")
        return {'passed': report.passed, 'report': report, 'artifact': str(target)}

    def kernels_check(self, eps_values: Optional[Sequence[float]] = None) -> Dict[str, Any]:
        """
        Dyadic, norm and renormalisation-constant checks; writes kernels.txt.

        Args:
            eps_values: Meshes to check (default 1/4, 1/8 and 1/16)
        """
        eps_values = tuple(eps_values or KERNEL_CHECK_EPS)
        self._say(f"\n🔬 Checking kernels at eps={', '.join(f'{e:g}' for e in eps_values)}")
        cutoff = CutoffFunction(float(self.config.get('kernels.cutoff_inner')),
                                float(self.config.get('kernels.cutoff_outer')))
        report = run_kernel_suite(eps_values, alpha=float(self.config.get('kernels.alpha')),
                                  cutoff=cutoff,
                                  time_step_factor=float(self.config.get('kernels.time_step_factor')))
        target = self.store.write_report(KERNELS_FILE, report.lines())

        for check in report.checks:
            self._say(f"  {'✅' if check.passed else '❌'} {check.line()}")
        self._say("\n📊 Renormalisation constants:")
        for constants in report.constants:
            self._say(f"  eps={constants.eps:g}: C1 = {constants.c1:.6g} (± {constants.c1_error:.2g}), "
                      f"C2 = {constants.c2:.6g} (± {constants.c2_error:.2g})")
        self._say(f"📂 Wrote {target}")
        self._verdict(report.passed, "Kernel suite")
        return {'passed': report.passed, 'report': report, 'artifact': str(target)}

    def graph_check(self, paths: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        """
        Check graph fixtures; writes graphs.txt.

        A fixture passes when its verdict matches its ``expect`` line, so the
        failing cherry diagram counts as a pass.
        """
        paths = list(paths or packaged_fixtures())
        d = int(self.config.get('lattice.d'))
        k = float(self.config.get('martingale.k'))
        blocks: List[str] = []
        mismatches = []
        for path in paths:
            check = check_graph(load_graph(path), d)
            block = format_check(check)
            if check.assumption.passed and check.contracted.m:
                report = exponent_report(check.contracted, moment=2.0, d=d, k=k)
                for record in report.admissible():
                    p = ','.join('inf' if math.isinf(v) else f"{v:g}" for v in record.p.values)
                    block += (f"\n  p=({p}): alpha={record.alpha:g} beta={record.beta:g} "
                              f"delta={record.delta:g}")
            blocks.append(block)
            if not check.matches_expectation:
                mismatches.append(check.graph.name)
            self._say(f"\n{'✅' if check.matches_expectation else '❌'} {block}")

        target = self.store.write_report(GRAPHS_FILE, blocks)
        self._say(f"\n📂 Wrote {target}")
        passed = not mismatches
        self._verdict(passed, f"Graph fixtures ({len(paths)} checked)")
        return {'passed': passed, 'checked': len(paths), 'mismatches': mismatches,
                'artifact': str(target)}

    def scaling(self) -> Dict[str, Any]:
        """
        Run the scaling experiment and fit exponents; writes scaling.csv and fits.txt.

        A budget overrun leaves the completed records in scaling.csv and
        re-raises.
        """
        experiment = ExperimentConfig.from_config(self.config)
        self._say(f"\n📈 Scaling experiment: symbols={','.join(experiment.symbols)} "
                  f"eps={','.join(f'{e:g}' for e in experiment.eps_grid)} "
                  f"lambda={','.join(f'{lam:g}' for lam in experiment.lambda_grid)} "
                  f"N={experiment.replicas}")
        contexts: Dict[float, ModelContext] = {}
        try:
            records = run_scaling(experiment, store=self.store, contexts=contexts)
        except BudgetExceededError as e:
            self._say(f"⚠️  {e} ({len(e.partial_records)} records kept in {SCALING_FILE})")
            raise
        self.store.write_records(records)
        fits = fit_all(records, experiment)
        self.store.write_fits(fits)

        self._say(f"\n📊 Fits ({len(fits)}):")
        for fit in fits:
            estimate, stderr, threshold = fit.verdict
            homogeneity = experiment.homogeneity(fit.symbol)
            self._say(f"  {'✅' if fit.passed else '❌'} {fit.symbol} eps={fit.eps:g} p={fit.p:g}: "
                      f"slope {estimate:.3f} ± {stderr:.3f} (target {fit.target:g}, "
                      f"tolerance {threshold:g}, homogeneity {homogeneity:g})")

        oracles = variance_checks(records, experiment, contexts)
        if oracles:
            self.store.write_report(ORACLES_FILE, [check.line() for check in oracles])
            self._say(f"\n🎯 Pairing variances ({len(oracles)}):")
            for check in oracles:
                self._say(f"  {'✅' if check.passed else '❌'} {check.line()}")
        config_path = self.store.write_config(self.config)
        self._say(f"📂 Wrote {self.store.path(SCALING_FILE)} and {self.store.path(FITS_FILE)} "
                  f"(configuration in {config_path})")
        passed = bool(fits) and all(fit.passed for fit in fits) and \
            all(check.passed for check in oracles)
        if not fits:
            self._say("⚠️  No exponent could be fitted (too few scaling-regime points)")
        self._verdict(passed, "Scaling exponents")
        return {'passed': passed, 'records': len(records), 'fits': fits, 'oracles': oracles}

    def contraction_check(self, eps_values: Optional[Sequence[float]] = None,
                          replicas: Optional[int] = None,
                          lam: Optional[float] = None) -> Dict[str, Any]:
        """
        Decay of the fully contracted Ψ² pairing across meshes; writes contraction.txt.

        Args:
            eps_values: Meshes, coarse to fine (default 1/8 and 1/16)
            replicas: Replicas per mesh (default 100)
            lam: Test-function scale (default 1/2)
        """
        eps_values = tuple(eps_values or CONTRACTION_CHECK_EPS)
        replicas = replicas or CONTRACTION_REPLICAS
        lam = lam or 0.5
        self._say(f"\n🍒 Contraction check at eps={', '.join(f'{e:g}' for e in eps_values)} "
                  f"(lambda={lam:g}, N={replicas})")
        cutoff = CutoffFunction(float(self.config.get('kernels.cutoff_inner')),
                                float(self.config.get('kernels.cutoff_outer')))
        report = run_contraction_check(
            eps_values, replicas=replicas, seed=self.seed, lam=lam,
            alpha=float(self.config.get('kernels.alpha')), cutoff=cutoff,
            time_step_factor=float(self.config.get('kernels.time_step_factor')),
            past_horizon=float(self.config.get('martingale.past_horizon')),
            workers=int(self.config.get('experiment.workers')))
        target = self.store.write_report(CONTRACTION_FILE, report.lines())

        for moment in report.moments:
            self._say(f"  {moment.line()}")
        for ratio in report.ratios:
            self._say(f"  {'✅' if ratio.passed else '❌'} {ratio.line()}")
        self._say(f"📂 Wrote {target}")
        self._verdict(report.passed, "Cherry decay")
        return {'passed': report.passed, 'report': report, 'artifact': str(target)}

    def report(self, directory: Optional[str] = None) -> Dict[str, Any]:
        """Summarize a results directory; fails when any fit or report line fails."""
        store = ResultStore(directory) if directory else self.store
        summary = store.summary()

        self._say(f"\n📋 Results in {summary['directory']}:")
        if not summary['artifacts']:
            self._say("No artifacts found.")
        for name in summary['artifacts']:
            self._say(f"  📂 {name}")
        if summary['records']:
            low, high = summary.get('moment_range') or (math.nan, math.nan)
            self._say(f"  Records: {summary['records']} "
                      f"(symbols {', '.join(summary['symbols'])}, moments {low:.4g}..{high:.4g})")
        if summary['fits']:
            self._say(f"  Fits: {summary['fits']} ({len(summary['failed_fits'])} failing)")
        for fit in summary['failed_fits']:
            self._say(f"  ❌ {fit.symbol} eps={fit.eps:g} p={fit.p:g}: slope {fit.slope:.3f} "
                      f"target {fit.target:g}")
        for line in summary['failed_lines']:
            self._say(f"  ❌ {line}")
        passed = not summary['failed_fits'] and not summary['failed_lines']
        self._verdict(passed, "Report")
        summary['passed'] = passed
        return summary
