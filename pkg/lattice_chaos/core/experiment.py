"""
Monte Carlo scaling experiments and exact identity suites.

run_scaling draws N replica paths per lattice mesh, pairs every requested
symbol with rescaled test functions, and reduces the pairings to moment
estimates E_p = E[|X|^p]^{1/p}. fit_exponent turns those estimates into a
log-log slope against λ, which is compared with the homogeneity of the
symbol. run_identity_suite checks the exact algebraic identities of the chaos
module on small randomized instances.

Key Design Principles:
1. Deterministic reduction: replica seeds are split from the master seed and
   results are reduced in replica order, whatever the worker count.
2. Regimes: only points with λ ≥ regime_factor·𝔢 enter a fit; the rest are
   saturation points where the bound plateaus at 𝔢.
3. Verdicts with evidence: every verdict carries its estimate, its standard
   error and its threshold.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from ..utils.config import Config
from ..utils.errors import BudgetExceededError, ConfigurationError, FitError
from ..utils.logging import get_logger
from ..utils.rng import replica_seeds, split_seed
from .chaos import (DIAMOND, DOWN, NIL, Contraction, GridFunction, Labeling, contractions,
                    diagonal_decomposition, diagonal_integral, iterated_integral, orderings,
                    product_integral, renormalized_iterated_integral)
from .kernels import (CutoffFunction, Kernel, build_kernel_grid, build_singular_kernel,
                      dyadic_decompose, kernel_norm, renorm_constant_C1, renorm_constant_C2)
from .model import (PSI, SYMBOLS, XI, ModelContext, ModelSymbol, cherry_moment,
                    cherry_variance)
from .noise import (LatticeSpec, MartingalePathSet, MartingaleSpec, jump_count,
                    predictable_bracket, realized_bracket, sample_paths)
from .results import FitResult, ResultStore, ScalingRecord

logger = get_logger(__name__)

DEFAULT_TOLERANCES = {'Xi': 0.15, 'Psi': 0.15, 'Psi2': 0.25, 'IPsi3Psi2': 0.35}
REPLICA_CHUNK = 64
MAX_IDENTITY_EVENTS = 12
KERNEL_CHECK_EPS = (0.25, 0.125, 0.0625)
CONTRACTION_CHECK_EPS = (0.125, 0.0625)
CONTRACTION_REPLICAS = 100
CONTRACTION_THRESHOLD = 0.9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything run_scaling needs; built from a Config or directly in tests."""

    symbols: Tuple[str, ...] = SYMBOLS
    eps_grid: Tuple[float, ...] = (0.125,)
    lambda_grid: Tuple[float, ...] = (0.5, 0.25, 0.125)
    p_values: Tuple[float, ...] = (2.0,)
    replicas: int = 2000
    seed: int = 0
    horizon: float = 1.0
    past_horizon: float = 2.0
    quadrature_step: float = 1e-4
    output: str = 'results'
    budget_ms: int = 0
    regime_factor: float = 0.5
    workers: int = 1
    record_timing: bool = True
    alpha: float = 0.75
    cutoff_inner: float = 0.5
    cutoff_outer: float = 1.0
    time_step_factor: float = 0.25
    kappa: float = 0.01
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self) -> None:
        for symbol in self.symbols:
            if symbol not in SYMBOLS:
                raise ConfigurationError(f"unknown symbol {symbol!r}; expected one of {SYMBOLS}")
        for lam in self.lambda_grid:
            exponent = math.log2(lam) if lam > 0 else math.nan
            if not (0.0 < lam <= 1.0) or abs(exponent - round(exponent)) > 1e-9:
                raise ConfigurationError(f"lambda values must be dyadic in (0, 1], got {lam}")
        if self.replicas < 1:
            raise ConfigurationError(f"replicas must be at least 1, got {self.replicas}")
        if any(p <= 0 for p in self.p_values):
            raise ConfigurationError(f"moment orders must be positive, got {self.p_values}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")
        if self.budget_ms < 0:
            raise ConfigurationError(f"budget_ms must be non-negative, got {self.budget_ms}")
        if self.kappa <= 0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        if self.quadrature_step <= 0:
            raise ConfigurationError(
                f"quadrature_step must be positive, got {self.quadrature_step}")

    @classmethod
    def from_config(cls, config: Config) -> 'ExperimentConfig':
        experiment = config.section('experiment')
        return cls(
            symbols=tuple(experiment['symbols']),
            eps_grid=tuple(float(v) for v in experiment['eps_grid']),
            lambda_grid=tuple(float(v) for v in experiment['lambda_grid']),
            p_values=tuple(float(v) for v in experiment['p_values']),
            replicas=int(experiment['replicas']),
            seed=int(experiment['seed']),
            horizon=float(config.get('lattice.horizon')),
            past_horizon=float(config.get('martingale.past_horizon')),
            quadrature_step=float(experiment['quadrature_step']),
            output=str(experiment['output']),
            budget_ms=int(experiment['budget_ms']),
            regime_factor=float(experiment['regime_factor']),
            workers=int(experiment['workers']),
            record_timing=bool(experiment['record_timing']),
            alpha=float(config.get('kernels.alpha')),
            cutoff_inner=float(config.get('kernels.cutoff_inner')),
            cutoff_outer=float(config.get('kernels.cutoff_outer')),
            time_step_factor=float(config.get('kernels.time_step_factor')),
            kappa=float(config.get('kernels.kappa')),
            tolerances={
                'Xi': float(experiment['tolerance_xi']),
                'Psi': float(experiment['tolerance_psi']),
                'Psi2': float(experiment['tolerance_psi2']),
                'IPsi3Psi2': float(experiment['tolerance_ipsi3psi2']),
            },
        )

    def scale(self, eps: float) -> float:
        return float(eps ** self.alpha)

    def in_scaling_regime(self, lam: float, eps: float) -> bool:
        return lam >= self.regime_factor * self.scale(eps)

    def homogeneity(self, symbol: str) -> float:
        """Homogeneity |τ| of a model symbol at the configured κ."""
        return ModelSymbol(symbol, self.kappa).homogeneity

    def context(self, eps: float) -> ModelContext:
        return ModelContext.build(
            eps, alpha=self.alpha,
            cutoff=CutoffFunction(self.cutoff_inner, self.cutoff_outer),
            time_step_factor=self.time_step_factor, horizon=self.horizon,
            past_horizon=self.past_horizon,
            with_c2='IPsi3Psi2' in self.symbols,
        )


def estimate_moment(values: np.ndarray, p: float) -> Tuple[float, Optional[float]]:
    """
    E_p = (mean |X|^p)^{1/p} with the delta-method standard error.

    Returns:
        (estimate, stderr); stderr is None for a single sample
    """
    powers = np.abs(np.asarray(values, dtype=float)) ** p
    n = powers.size
    mean = float(np.mean(powers))
    moment = mean ** (1.0 / p)
    if n < 2:
        return moment, None
    if mean == 0.0:
        return moment, 0.0
    spread = float(np.std(powers, ddof=1))
    return moment, (1.0 / p) * mean ** (1.0 / p - 1.0) * spread / math.sqrt(n)


def _replica_pairings(context: ModelContext, symbols: Sequence[str], lams: Sequence[float],
                      seed: int) -> Dict[Tuple[str, float], float]:
    path = context.sample(seed)
    return context.pairings(path, symbols, lams)


def run_scaling(config: ExperimentConfig, store: Optional[ResultStore] = None,
                contexts: Optional[Dict[float, ModelContext]] = None) -> List[ScalingRecord]:
    """
    Moment estimates for every (symbol, ε, λ, p).

    Args:
        config: Experiment configuration
        store: When given, partial records are written there before a budget
            error is raised
        contexts: Model contexts keyed by ε; meshes missing from it are built
            and added, so the caller can reuse them

    Returns:
        Records in (ε, symbol, λ, p) order

    Raises:
        BudgetExceededError: The wall-clock budget ran out; carries the
            records of the meshes completed so far
    """
    records: List[ScalingRecord] = []
    started = time.monotonic()

    def over_budget() -> bool:
        return config.budget_ms > 0 and (time.monotonic() - started) * 1000.0 > config.budget_ms

    for index, eps in enumerate(config.eps_grid):
        block_start = time.monotonic()
        context = contexts.get(eps) if contexts is not None else None
        if context is None:
            context = config.context(eps)
            if contexts is not None:
                contexts[eps] = context
        seeds = list(replica_seeds(config.seed, config.replicas, index))
        worker = partial(_replica_pairings, context, config.symbols, config.lambda_grid)
        results: List[Dict[Tuple[str, float], float]] = []

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for lo in range(0, len(seeds), REPLICA_CHUNK):
                results.extend(pool.map(worker, seeds[lo:lo + REPLICA_CHUNK]))
                if over_budget():
                    message = (f"budget of {config.budget_ms} ms exhausted at eps={eps:g} "
                               f"after {len(results)} of {config.replicas} replicas")
                    logger.warning(message)
                    if store is not None:
                        store.write_records(records)
                    raise BudgetExceededError(message, records)

        wall_ms = int(round((time.monotonic() - block_start) * 1000.0)) if config.record_timing else 0
        for symbol in config.symbols:
            for lam in config.lambda_grid:
                values = np.array([r[(symbol, lam)] for r in results])
                if not config.in_scaling_regime(lam, eps):
                    logger.info(f"{symbol} at eps={eps:g}, lambda={lam:g} is a saturation point")
                for p in config.p_values:
                    moment, stderr = estimate_moment(values, p)
                    records.append(ScalingRecord(symbol, eps, lam, p, moment, stderr,
                                                 config.replicas, config.seed, wall_ms))
        logger.info(f"eps={eps:g}: {config.replicas} replicas in {wall_ms} ms")
    return records


def fit_exponent(records: Sequence[ScalingRecord], symbol: str, eps: float, p: float,
                 target: Optional[float] = None, tolerance: Optional[float] = None,
                 alpha: float = 0.75, regime_factor: float = 0.5) -> FitResult:
    """
    Least-squares slope of log E_p against log λ on the scaling-regime points.

    Args:
        records: Scaling records (other symbols, meshes and orders are ignored)
        symbol, eps, p: Cell to fit
        target: Expected slope (default: the κ = 0 homogeneity of the symbol)
        tolerance: Allowed |slope - target| (default per symbol)
        alpha: Smoothing exponent, 𝔢 = ε^α
        regime_factor: Points with λ < regime_factor·𝔢 are excluded

    Returns:
        FitResult

    Raises:
        FitError: Fewer than 3 usable points
    """
    scale = eps ** alpha
    selected = [r for r in records
                if r.symbol == symbol and math.isclose(r.eps, eps) and math.isclose(r.p, p)]
    usable = [r for r in selected if r.lam >= regime_factor * scale and r.moment > 0]
    if len(usable) < len(selected):
        logger.warning(f"{symbol} eps={eps:g} p={p:g}: {len(selected) - len(usable)} "
                       "saturation or zero points excluded from the fit")
    if len(usable) < 3:
        raise FitError(
            f"fit of {symbol} at eps={eps:g}, p={p:g} needs 3 scaling-regime points, "
            f"got {len(usable)}"
        )
    usable.sort(key=lambda r: r.lam)
    x = np.log([r.lam for r in usable])
    y = np.log([r.moment for r in usable])
    fit = stats.linregress(x, y)
    slope = float(fit.slope)
    intercept = float(fit.intercept)
    residual = float(np.sqrt(np.mean((y - (intercept + slope * x)) ** 2)))
    if target is None:
        target = ModelSymbol(symbol).target if symbol in SYMBOLS else 0.0
    if tolerance is None:
        tolerance = DEFAULT_TOLERANCES.get(symbol, 0.25)
    return FitResult(symbol, eps, p, slope, intercept, residual, float(fit.stderr),
                     tuple(r.lam for r in usable), float(target), float(tolerance))


def fit_all(records: Sequence[ScalingRecord], config: ExperimentConfig) -> List[FitResult]:
    """One fit per (symbol, ε, p) with enough scaling-regime points."""
    fits = []
    for eps in config.eps_grid:
        for symbol in config.symbols:
            for p in config.p_values:
                try:
                    fits.append(fit_exponent(records, symbol, eps, p,
                                             tolerance=config.tolerances.get(symbol),
                                             alpha=config.alpha,
                                             regime_factor=config.regime_factor))
                except FitError as e:
                    logger.warning(str(e))
    return fits


@dataclass(frozen=True)
class VarianceCheck:
    """
    E_2² of a scaling cell against the exact pairing variance.

    Passes when the two agree within 4 standard errors; a single-replica
    cell has no error bar and is reported without a verdict.
    """

    symbol: str
    eps: float
    lam: float
    estimate: float
    stderr: Optional[float]
    exact: float

    @property
    def passed(self) -> bool:
        return self.stderr is None or abs(self.estimate - self.exact) <= 4.0 * self.stderr

    def line(self) -> str:
        stderr = 'n/a' if self.stderr is None else f"{self.stderr:.4e}"
        return (f"variance {self.symbol} eps={self.eps:g} lambda={self.lam:g}: "
                f"estimate {self.estimate:.6e} ± {stderr} exact {self.exact:.6e} "
                f"{'PASS' if self.passed else 'FAIL'}")


def variance_checks(records: Sequence[ScalingRecord], config: ExperimentConfig,
                    contexts: Optional[Dict[float, ModelContext]] = None) -> List[VarianceCheck]:
    """
    Compare the p = 2 records of Ξ and Ψ with ModelContext.variance.

    E_2² = mean X² is unbiased for Var X, its standard error is 2·E_2·stderr(E_2).
    """
    checks = []
    for eps in config.eps_grid:
        cells = [r for r in records if math.isclose(r.eps, eps) and r.p == 2.0
                 and r.symbol in (XI, PSI)]
        if not cells:
            continue
        context = (contexts or {}).get(eps) or config.context(eps)
        for record in cells:
            exact = context.variance(record.symbol, context.test_function(record.lam))
            stderr = None if record.stderr is None else 2.0 * record.moment * record.stderr
            checks.append(VarianceCheck(record.symbol, eps, record.lam, record.moment ** 2,
                                        stderr, float(exact)))
    return checks


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    n: int
    instances: int
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold

    def line(self) -> str:
        return (f"{self.name} n={self.n}: max relative error {self.max_error:.3e} over "
                f"{self.instances} instances (threshold {self.threshold:.0e}) "
                f"{'PASS' if self.passed else 'FAIL'}")


@dataclass(frozen=True)
class IdentityReport:
    seed: int
    checks: Tuple[IdentityCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def max_error(self) -> float:
        return max((check.max_error for check in self.checks), default=0.0)

    def lines(self) -> List[str]:
        return [f"identity suite seed={self.seed}"] + [check.line() for check in self.checks]


def _relative(lhs: float, rhs: float, terms: Iterable[float]) -> float:
    scale = max(abs(rhs), sum(abs(t) for t in terms), 1e-300)
    return abs(lhs - rhs) / scale


def _small_lattice(d: int) -> LatticeSpec:
    return LatticeSpec(d, 0.25 if d == 1 else 0.5, 1.0)


def identity_path(d: int, seed: int, max_events: int = MAX_IDENTITY_EVENTS) -> MartingalePathSet:
    """A symmetric path on a small torus, cut between its max_events-th and next event."""
    lattice = _small_lattice(d)
    spec = MartingaleSpec.consistent(lattice, k=-0.25 if d == 1 else -0.5, c=1.0 / math.sqrt(2.0))
    path = sample_paths(lattice, spec, seed)
    if len(path) > max_events:
        cut = 0.5 * (path.times[max_events - 1] + path.times[max_events])
        path = path.truncated(cut)
    return path


def random_integrand(n: int, rng: np.random.Generator) -> GridFunction:
    """A smooth integrand of arity n that does not factorize over its variables."""
    a = rng.normal(size=n)
    b = rng.normal(size=n)
    w = rng.normal(size=n)
    shift = rng.uniform(-1.0, 1.0)

    def func(ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        phase = ts @ a + xs.sum(axis=2) @ b + shift
        return np.sin(phase) + 0.5 * np.cos(ts @ w) * np.exp(-np.sum(ts ** 2, axis=1))

    return GridFunction(n, func)


def run_identity_suite(seed: int, sizes: Sequence[int] = (1, 2, 3), instances: int = 100,
                       dims: Sequence[int] = (1, 3),
                       diagonal_sizes: Sequence[int] = (2, 3, 4, 5),
                       diagonal_instances: int = 50, renorm_instances: int = 10,
                       renorm_step: float = 1e-4) -> IdentityReport:
    """
    Exact identities on randomized symmetric instances.

    - decomposition: product_integral = Σ_γΣ_σ iterated integrals (threshold 1e-10)
    - diagonal split: martingale + Lebesgue part = diagonal_integral (1e-12)
    - renormalisation split: nil = down + diamond for a paired component (1e-6)

    Instance i uses the seed split_seed(seed, tag, n, i), so the report is a
    function of the seed alone.
    """
    checks = []
    for n in sizes:
        worst = 0.0
        for i in range(instances):
            instance_seed = split_seed(seed, 1, n, i)
            rng = np.random.default_rng(instance_seed)
            path = identity_path(int(dims[i % len(dims)]), instance_seed)
            F = random_integrand(n, rng)
            brute = product_integral(F, path, n)
            terms = [iterated_integral(g, s, F, path, path.horizon)
                     for g in contractions(n) for s in orderings(g)]
            worst = max(worst, _relative(sum(terms), brute, terms))
        checks.append(IdentityCheck('decomposition', n, instances, worst, 1e-10))

    for n in diagonal_sizes:
        worst = 0.0
        for i in range(diagonal_instances):
            instance_seed = split_seed(seed, 2, n, i)
            rng = np.random.default_rng(instance_seed)
            path = identity_path(int(dims[i % len(dims)]), instance_seed)
            F = random_integrand(1, rng)
            direct = diagonal_integral(F, path, n, path.horizon)
            martingale, lebesgue = diagonal_decomposition(F, path, n, path.horizon)
            worst = max(worst, _relative(martingale + lebesgue, direct, (martingale, lebesgue)))
        checks.append(IdentityCheck('diagonal split', n, diagonal_instances, worst, 1e-12))

    for n in (2, 3):
        worst = 0.0
        gamma = Contraction.of([(1, 2)] + [(i,) for i in range(3, n + 1)])
        for i in range(renorm_instances):
            instance_seed = split_seed(seed, 3, n, i)
            rng = np.random.default_rng(instance_seed)
            path = identity_path(1, instance_seed)
            F = random_integrand(n, rng)
            h = renorm_step * (path.horizon - path.start)
            for sigma in orderings(gamma):
                rest = (NIL,) * (gamma.m - 1)
                values = {
                    label: renormalized_iterated_integral(
                        gamma, sigma, Labeling((label,) + rest), F, path, path.horizon, h=h)
                    for label in (NIL, DOWN, DIAMOND)
                }
                worst = max(worst, _relative(values[DOWN] + values[DIAMOND], values[NIL],
                                             (values[DOWN], values[DIAMOND])))
        checks.append(IdentityCheck('renormalisation split', n, renorm_instances, worst, 1e-6))

    report = IdentityReport(seed, tuple(checks))
    logger.info(f"Identity suite seed={seed}: max relative error {report.max_error:.3e}")
    return report


@dataclass(frozen=True)
class SuiteCheck:
    """One measured quantity against its threshold; passes when estimate <= threshold."""

    name: str
    detail: str
    estimate: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.estimate <= self.threshold

    def line(self) -> str:
        return (f"{self.name} {self.detail}: estimate {self.estimate:.4e} "
                f"threshold {self.threshold:.4e} {'PASS' if self.passed else 'FAIL'}")


@dataclass(frozen=True)
class KernelConstants:
    eps: float
    scale: float
    c1: float
    c1_error: float
    c2: float
    c2_error: float

    def lines(self) -> List[str]:
        return [
            f"C1 eps={self.eps!r} scale={self.scale!r} value={self.c1!r} error={self.c1_error!r}",
            f"C2 eps={self.eps!r} scale={self.scale!r} value={self.c2!r} error={self.c2_error!r}",
        ]


@dataclass(frozen=True)
class KernelReport:
    checks: Tuple[SuiteCheck, ...]
    constants: Tuple[KernelConstants, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def lines(self) -> List[str]:
        lines = [check.line() for check in self.checks]
        for constants in self.constants:
            lines.extend(constants.lines())
        return lines


def _reconstruction_error(K: Kernel, resolution: int = 41) -> float:
    """max |Σ levels - K| / max |K| on a (t, |x|) grid covering the support."""
    stack = dyadic_decompose(K)
    radius = K.support_radius
    tt, rr = np.meshgrid(np.linspace(-0.05, radius ** 2, resolution),
                         np.linspace(0.0, radius, resolution), indexing='ij')
    x = np.zeros((tt.size, K.d))
    x[:, 0] = rr.reshape(-1)
    exact = K(tt.reshape(-1), x)
    peak = float(np.max(np.abs(exact)))
    if peak == 0.0:
        return 0.0
    return float(np.max(np.abs(stack.reconstruct(tt.reshape(-1), x) - exact))) / peak


def run_kernel_suite(eps_values: Sequence[float] = KERNEL_CHECK_EPS, alpha: float = 0.75,
                     cutoff: Optional[CutoffFunction] = None, time_step_factor: float = 0.25,
                     with_c2: bool = True) -> KernelReport:
    """
    Dyadic, norm and renormalisation-constant checks of K^ε over a mesh grid.

    - dyadic reconstruction: Σ levels = K^ε (threshold 1e-8)
    - level constants: measured C_n vary by at most 4× across levels
    - kernel norm: ∥K^ε∥_{3;0} varies by at most 2× across meshes
    - C1 step halving: C₁ at h and h/2 agree within the reported error
    - C1 divergence: C₁ increases as 𝔢 decreases
    """
    cutoff = cutoff or CutoffFunction()
    eps_values = sorted({float(e) for e in eps_values}, reverse=True)
    checks: List[SuiteCheck] = []
    constants: List[KernelConstants] = []
    norms = []
    for eps in eps_values:
        scale = float(eps ** alpha)
        K, _ = build_singular_kernel(scale, cutoff, mesh=eps)
        detail = f"eps={eps:g} scale={scale:.4g}"
        checks.append(SuiteCheck('dyadic reconstruction', detail, _reconstruction_error(K), 1e-8))

        levels = [c for c in dyadic_decompose(K).level_constants() if c > 0.0]
        spread = max(levels) / min(levels) if levels else 1.0
        checks.append(SuiteCheck('level constants', detail, spread, 4.0))
        norms.append(kernel_norm(K, a=3.0))

        h = time_step_factor * eps ** 2
        grid = build_kernel_grid(eps, scale, cutoff, h=h)
        c1, c1_error = renorm_constant_C1(grid)
        halved, _ = renorm_constant_C1(build_kernel_grid(eps, scale, cutoff, h=0.5 * h))
        checks.append(SuiteCheck('C1 step halving', detail, abs(halved - c1), c1_error))
        c2, c2_error = renorm_constant_C2(grid) if with_c2 else (math.nan, math.nan)
        constants.append(KernelConstants(eps, scale, c1, c1_error, c2, c2_error))

    if len(eps_values) > 1:
        finite = [n for n in norms if n > 0.0]
        checks.append(SuiteCheck('kernel norm a=3', f"eps={','.join(f'{e:g}' for e in eps_values)}",
                                 max(finite) / min(finite) if finite else 1.0, 2.0))
        # Ratios C1(coarser)/C1(finer) stay below 1 while C1 diverges.
        ratios = [constants[i].c1 / constants[i + 1].c1 for i in range(len(constants) - 1)
                  if constants[i + 1].c1 > 0.0]
        checks.append(SuiteCheck('C1 divergence', f"eps={','.join(f'{e:g}' for e in eps_values)}",
                                 max(ratios, default=math.inf), 1.0))

    report = KernelReport(tuple(checks), tuple(constants))
    logger.info(f"Kernel suite over eps={eps_values}: "
                f"{sum(c.passed for c in checks)}/{len(checks)} checks pass")
    return report


@dataclass(frozen=True)
class ContractionMoment:
    """E_2 of the fully contracted Ψ² pairing at one mesh, with its exact value."""

    eps: float
    scale: float
    moment: float
    stderr: Optional[float]
    exact: float
    replicas: int

    def line(self) -> str:
        stderr = 'n/a' if self.stderr is None else f"{self.stderr:.4e}"
        return (f"cherry eps={self.eps:g} scale={self.scale:.4g}: E2 {self.moment:.6e} "
                f"± {stderr} exact {self.exact:.6e} N={self.replicas}")


@dataclass(frozen=True)
class ContractionRatio:
    """E_2(fine)/E_2(coarse); passes when ratio + 2·stderr stays below the threshold."""

    coarse: float
    fine: float
    ratio: float
    stderr: float
    threshold: float = CONTRACTION_THRESHOLD

    @property
    def passed(self) -> bool:
        return self.ratio + 2.0 * self.stderr < self.threshold

    def line(self) -> str:
        return (f"cherry ratio eps={self.coarse:g}->{self.fine:g}: {self.ratio:.4f} "
                f"± {self.stderr:.4f} threshold {self.threshold:g} "
                f"{'PASS' if self.passed else 'FAIL'}")


@dataclass(frozen=True)
class ContractionReport:
    lam: float
    moments: Tuple[ContractionMoment, ...]
    ratios: Tuple[ContractionRatio, ...]

    @property
    def passed(self) -> bool:
        return bool(self.ratios) and all(ratio.passed for ratio in self.ratios)

    def lines(self) -> List[str]:
        return ([moment.line() for moment in self.moments]
                + [ratio.line() for ratio in self.ratios])


def _cherry_replica(context: ModelContext, phi, seed: int) -> float:
    return cherry_moment(context.sample(seed), phi, context.grid)


def run_contraction_check(eps_values: Sequence[float] = CONTRACTION_CHECK_EPS,
                          replicas: int = CONTRACTION_REPLICAS, seed: int = 0, lam: float = 0.5,
                          alpha: float = 0.75, cutoff: Optional[CutoffFunction] = None,
                          time_step_factor: float = 0.25, past_horizon: float = 1.0,
                          contexts: Optional[Dict[float, ModelContext]] = None,
                          workers: int = 1) -> ContractionReport:
    """
    Decay of the fully contracted Ψ² pairing as the mesh is refined.

    The cherry diagram fails the contraction assumption, so its pairing is
    not expected to converge: E_2 should shrink like a positive power of ε
    instead. Each consecutive pair of meshes gives a ratio E_2(fine)/E_2(coarse)
    whose standard error combines the relative errors of both estimates.

    Raises:
        ConfigurationError: Fewer than two meshes or fewer than two replicas
    """
    eps_values = sorted({float(e) for e in eps_values}, reverse=True)
    if len(eps_values) < 2:
        raise ConfigurationError(f"contraction check needs two meshes, got {eps_values}")
    if replicas < 2:
        raise ConfigurationError(f"contraction check needs at least 2 replicas, got {replicas}")
    moments: List[ContractionMoment] = []
    for index, eps in enumerate(eps_values):
        context = (contexts or {}).get(eps) or ModelContext.build(
            eps, alpha=alpha, cutoff=cutoff, time_step_factor=time_step_factor,
            past_horizon=past_horizon, with_c2=False)
        phi = context.test_function(lam)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.array(list(pool.map(partial(_cherry_replica, context, phi),
                                            replica_seeds(seed, replicas, index))))
        moment, stderr = estimate_moment(values, 2.0)
        exact = math.sqrt(cherry_variance(context.lattice, context.spec, phi, context.grid))
        moments.append(ContractionMoment(eps, context.scale, moment, stderr, exact, replicas))
        logger.info(f"Cherry E2 at eps={eps:g}: {moment:.4e} (exact {exact:.4e})")

    ratios = []
    for coarse, fine in zip(moments, moments[1:]):
        if coarse.moment == 0.0:
            raise ConfigurationError(f"cherry moment vanishes at eps={coarse.eps:g}")
        ratio = fine.moment / coarse.moment
        relative = math.hypot((coarse.stderr or 0.0) / coarse.moment,
                              (fine.stderr or 0.0) / fine.moment if fine.moment else 0.0)
        ratios.append(ContractionRatio(coarse.eps, fine.eps, ratio, ratio * relative))
    return ContractionReport(lam, tuple(moments), tuple(ratios))


@dataclass(frozen=True)
class JumpRateCheck:
    """Sample mean of the per-site jump count over the window against rate·window."""

    mean: float
    stderr: Optional[float]
    target: float
    samples: int

    @property
    def passed(self) -> bool:
        if self.stderr is None:
            return True
        return abs(self.mean - self.target) <= 4.0 * max(self.stderr, 1e-300)

    def line(self) -> str:
        stderr = 'n/a' if self.stderr is None else f"{self.stderr:.4e}"
        return (f"jump rate: mean {self.mean:.4f} stderr {stderr} target {self.target:.4f} "
                f"over {self.samples} replicas {'PASS' if self.passed else 'FAIL'}")


def jump_rate_check(rows: Sequence[Tuple]) -> JumpRateCheck:
    """Reduce path_statistics rows to the jump-rate verdict (4 standard errors)."""
    if not rows:
        raise ConfigurationError("jump-rate check needs at least one replica")
    means = np.array([row[PATH_COLUMNS.index('window_jump_mean')] for row in rows])
    target = float(rows[0][PATH_COLUMNS.index('window_jump_target')])
    stderr = float(np.std(means, ddof=1) / math.sqrt(means.size)) if means.size > 1 else None
    return JumpRateCheck(float(np.mean(means)), stderr, target, int(means.size))



PATH_COLUMNS = ('replica', 'seed', 'events', 'mean_jump_count', 'mean_realized_bracket',
                'predictable_bracket', 'window_jump_mean', 'window_jump_target')


def path_statistics(lattice: LatticeSpec, spec: MartingaleSpec, seed: int, replicas: int,
                    window_t: float = 1.0) -> List[Tuple]:
    """
    Per-replica path summary: jump counts and brackets at the horizon, and the
    mean jump count per site over [0, ε^{d+2𝐤}·t] against its target
    rate·ε^{d+2𝐤}·t.
    """
    rows = []
    T = lattice.horizon
    window = lattice.eps ** (lattice.d + 2 * spec.k) * window_t
    if window > T:
        raise ConfigurationError(f"jump-count window {window:.4g} exceeds the horizon {T}")
    for replica, replica_seed in enumerate(replica_seeds(seed, replicas)):
        path = sample_paths(lattice, spec, replica_seed)
        sites = range(lattice.site_count)
        counts = [jump_count(path, (0.0, T), x) for x in sites]
        brackets = [realized_bracket(path, T, x) for x in sites]
        window_counts = [jump_count(path, (0.0, window), x) for x in sites]
        rows.append((replica, replica_seed, len(path), float(np.mean(counts)),
                     float(np.mean(brackets)), predictable_bracket(spec, lattice, T),
                     float(np.mean(window_counts)), spec.site_rate * window))
    return rows


Persistable = Union[Sequence[ScalingRecord], Sequence[FitResult], IdentityReport, Sequence[str]]


def persist(obj: Persistable, path: str) -> Path:
    """
    Write records as CSV, fits and reports as one record per line.

    The target file is replaced; its directory is created when missing.
    """
    target = Path(path)
    store = ResultStore(str(target.parent))
    if isinstance(obj, IdentityReport):
        return store.write_report(target.name, obj.lines())
    items = list(obj)
    # An empty CSV target still gets the scaling header.
    if (not items and target.suffix == '.csv') or (items and isinstance(items[0], ScalingRecord)):
        return store.write_records(items, target.name)
    if items and isinstance(items[0], FitResult):
        return store.write_fits(items, target.name)
    return store.write_report(target.name, [str(item) for item in items])
