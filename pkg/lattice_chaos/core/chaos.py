"""
Iterated stochastic integrals against lattice martingales.

An n-fold integral ∫ F d𝐌^n splits into a sum over contractions γ (set
partitions of the n variables, whose components share one space-time point)
and orderings σ (the time order of the components):

    ∫ F d𝐌^n = Σ_γ Σ_σ ∫_{s_1 < ... < s_m} F^{γ,σ} d𝐌^{(|γ_σ(1)|)} ... d𝐌^{(|γ_σ(m)|)}

Every measure that can appear is represented by a finite set of *atoms*
(time, site, weight): jump atoms carry the exact jump weights, quadrature
atoms carry the compensator or Lebesgue weights on a midpoint grid. An
iterated integral is then an exact sum over strictly time-ordered atom
tuples, which makes the decomposition identities testable to rounding error.

Key Design Principles:
1. One representation: product, diagonal, iterated and renormalised integrals
   all reduce to sums over atoms.
2. Strict ordering: inner components only see atoms strictly before the
   outer one, which realises the left limits s_m- of the recursion.
3. Guards in operation counts: budgets are deterministic, never wall time.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from ..utils.errors import ContractError, GuardError
from ..utils.logging import get_logger
from .noise import MartingalePathSet, renormalized_path

logger = get_logger(__name__)

NIL = 'nil'
DOWN = 'down'
DIAMOND = 'diamond'
LABELS = (NIL, DOWN, DIAMOND)

MAX_CONTRACTION_SIZE = 8
MAX_ITERATED_COMPONENTS = 6
OPERATION_BUDGET = 10_000_000
EVAL_CHUNK = 200_000
NORM_BUDGET = 1_000_000

# Callable F(ts of shape (K, n), xs of shape (K, n, d)) -> (K,)
GridCallable = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GridFunction:
    """
    A function of n space-time points of the discrete domain.

    The evaluator is vectorised over K tuples at once: ``func(ts, xs)`` with
    ``ts`` of shape (K, n) and ``xs`` of shape (K, n, d) returns K values.
    """

    arity: int
    func: GridCallable
    time_derivative: Optional[GridCallable] = None

    def __call__(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if ts.ndim != 2 or ts.shape[1] != self.arity:
            raise ContractError(f"expected times of shape (K, {self.arity}), got {ts.shape}")
        if xs.ndim != 3 or xs.shape[:2] != ts.shape:
            raise ContractError(f"expected sites of shape (K, {self.arity}, d), got {xs.shape}")
        return np.broadcast_to(np.asarray(self.func(ts, xs), dtype=float), (ts.shape[0],))

    @classmethod
    def constant(cls, arity: int, value: float) -> 'GridFunction':
        return cls(arity, lambda ts, xs: np.full(ts.shape[0], float(value)))

    @classmethod
    def product(cls, *factors: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> 'GridFunction':
        """F(z_1, ..., z_n) = f_1(z_1)···f_n(z_n) for single-point factors f(t, x)."""
        def func(ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
            out = np.ones(ts.shape[0])
            for i, factor in enumerate(factors):
                out = out * factor(ts[:, i], xs[:, i, :])
            return out
        return cls(len(factors), func)

    def scaled(self, factor: float) -> 'GridFunction':
        return GridFunction(self.arity, lambda ts, xs: factor * self.func(ts, xs))

    def permuted(self, perm: Sequence[int]) -> 'GridFunction':
        """G(z_1, ..., z_n) = F(z_{perm[0]}, ..., z_{perm[n-1]}) (0-based)."""
        index = np.asarray(perm, dtype=int)
        if sorted(index.tolist()) != list(range(self.arity)):
            raise ContractError(f"not a permutation of {self.arity} variables: {perm}")
        return GridFunction(self.arity, lambda ts, xs: self.func(ts[:, index], xs[:, index, :]))


@dataclass(frozen=True)
class Contraction:
    """A set partition of the variables {1, ..., n}; components are 1-based index tuples."""

    n: int
    components: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        seen = sorted(i for component in self.components for i in component)
        if any(len(component) == 0 for component in self.components):
            raise ContractError("contraction components must be non-empty")
        if seen != list(range(1, self.n + 1)):
            raise ContractError(
                f"components {self.components} do not partition {{1, ..., {self.n}}}"
            )

    @classmethod
    def of(cls, components: Sequence[Sequence[int]]) -> 'Contraction':
        """Canonical form: each component sorted, components sorted by least element."""
        canonical = tuple(sorted((tuple(sorted(c)) for c in components), key=lambda c: c[0]))
        return cls(sum(len(c) for c in canonical), canonical)

    @classmethod
    def identity(cls, n: int) -> 'Contraction':
        return cls(n, tuple((i,) for i in range(1, n + 1)))

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(c) for c in self.components)

    def component_of(self) -> np.ndarray:
        """0-based component index of every variable (0-based)."""
        owner = np.empty(self.n, dtype=int)
        for c, component in enumerate(self.components):
            for i in component:
                owner[i - 1] = c
        return owner

    def singletons(self) -> Tuple[int, ...]:
        """Γ₁(γ): 0-based indices of components of size one."""
        return tuple(c for c, size in enumerate(self.sizes) if size == 1)


@dataclass(frozen=True)
class Ordering:
    """Time order of components: sigma[j] is the component at time position j (0-based)."""

    sigma: Tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.sigma) != list(range(len(self.sigma))):
            raise ContractError(f"ordering is not a bijection: {self.sigma}")

    @classmethod
    def trivial(cls, m: int) -> 'Ordering':
        return cls(tuple(range(m)))

    @property
    def m(self) -> int:
        return len(self.sigma)

    def inverse(self) -> 'Ordering':
        inverse = [0] * self.m
        for position, component in enumerate(self.sigma):
            inverse[component] = position
        return Ordering(tuple(inverse))


@dataclass(frozen=True)
class Labeling:
    """Per-component measure label: nil (diagonal 𝐌^(j)), down (▽) or diamond (◇)."""

    labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        for label in self.labels:
            if label not in LABELS:
                raise ContractError(f"unknown label {label!r}; expected one of {LABELS}")

    @classmethod
    def nil(cls, m: int) -> 'Labeling':
        return cls((NIL,) * m)

    def check(self, gamma: Contraction) -> None:
        if len(self.labels) != gamma.m:
            raise ContractError(f"{len(self.labels)} labels for {gamma.m} components")
        for size, label in zip(gamma.sizes, self.labels):
            if label != NIL and size % 2 == 1:
                raise ContractError(
                    f"a component of odd size {size} must be labelled nil, got {label!r}"
                )


@dataclass(frozen=True)
class PFunction:
    """𝐩 : {1, ..., m} → {1, 2, ∞}, stored 0-based."""

    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        for value in self.values:
            if value not in (1, 2, math.inf):
                raise ContractError(f"p-function values must be 1, 2 or inf, got {value}")

    @property
    def m(self) -> int:
        return len(self.values)

    def preimage(self, value: float) -> Tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v == value)


@dataclass(frozen=True)
class Atoms:
    """Finite measure Σ_a weight_a·δ(time_a, site_a), sorted by time."""

    times: np.ndarray
    sites: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    @staticmethod
    def merge(*parts: 'Atoms') -> 'Atoms':
        times = np.concatenate([p.times for p in parts])
        order = np.argsort(times, kind='stable')
        return Atoms(times[order],
                     np.concatenate([p.sites for p in parts])[order],
                     np.concatenate([p.weights for p in parts])[order])


def _partitions(items: List[int]) -> Iterator[List[List[int]]]:
    if len(items) == 1:
        yield [items]
        return
    first = items[0]
    for smaller in _partitions(items[1:]):
        for index, subset in enumerate(smaller):
            yield smaller[:index] + [[first] + subset] + smaller[index + 1:]
        yield [[first]] + smaller


def contractions(n: int) -> List[Contraction]:
    """
    All set partitions of {1, ..., n} in canonical order.

    Args:
        n: Number of variables, 1 ≤ n ≤ 8

    Returns:
        Bell(n) contractions, each in canonical form, sorted by component tuples
    """
    if not 1 <= n <= MAX_CONTRACTION_SIZE:
        raise GuardError(f"contractions(n) needs 1 <= n <= {MAX_CONTRACTION_SIZE}, got {n}")
    result = [Contraction.of(p) for p in _partitions(list(range(1, n + 1)))]
    return sorted(result, key=lambda g: g.components)


def orderings(gamma: Contraction) -> List[Ordering]:
    """All m! time orderings of the components of γ."""
    return [Ordering(p) for p in itertools.permutations(range(gamma.m))]


def collapse(F: GridFunction, gamma: Contraction, sigma: Ordering) -> GridFunction:
    """F^{γ,σ}(z_1, ..., z_m) = F(z̄_1, ..., z̄_n), z̄_i the point of the component of i."""
    if F.arity != gamma.n:
        raise ContractError(f"F has arity {F.arity}, contraction has n = {gamma.n}")
    position = np.asarray(sigma.inverse().sigma)[gamma.component_of()]
    return GridFunction(gamma.m, lambda ts, xs: F.func(ts[:, position], xs[:, position, :]))


def _window(path: MartingalePathSet, t: float) -> np.ndarray:
    return (path.times >= path.start) & (path.times < t)


def quadrature_grid(start: float, t: float, h: float) -> Tuple[np.ndarray, float]:
    """Midpoints and step of the composite midpoint rule on [start, t]."""
    if t <= start:
        return np.empty(0), 0.0
    steps = max(1, int(math.ceil((t - start) / h - 1e-9)))
    step = (t - start) / steps
    return start + step * (np.arange(steps) + 0.5), step


def _quadrature_atoms(path: MartingalePathSet, t: float, h: float, weight: float) -> Atoms:
    """Atoms weight·step at every (midpoint, site)."""
    midpoints, step = quadrature_grid(path.start, t, h)
    sites = path.lattice.site_count
    return Atoms(np.repeat(midpoints, sites),
                 np.tile(np.arange(sites, dtype=np.int64), midpoints.size),
                 np.full(midpoints.size * sites, weight * step))


def _jump_atoms(path: MartingalePathSet, t: float, weights: np.ndarray) -> Atoms:
    mask = _window(path, t)
    return Atoms(path.times[mask], path.sites[mask], weights[mask])


def measure_atoms(path: MartingalePathSet, size: int, label: str, t: float,
                  h: float) -> Atoms:
    """
    Atoms of the measure integrating a component of ``size`` variables.

    nil, size 1: ε^d·d𝕄 (jumps plus the compensator on the midpoint grid).
    nil, size j ≥ 2: ε^{jd}(Δ𝕄)^j on jump times.
    down: c^{j-2}ε^{(d+𝐤)(j-2)}·ε^d·C ds.
    diamond: c^{j-2}ε^{(d+𝐤)(j-1)}·ε^d·d𝕄̄.
    """
    lattice, spec = path.lattice, path.spec
    d, eps, k, c = lattice.d, lattice.eps, spec.k, spec.c
    volume = eps ** d
    if label == NIL:
        jumps = _jump_atoms(path, t, volume ** size * path.increments ** size)
        if size == 1 and path.drift != 0.0:
            return Atoms.merge(jumps, _quadrature_atoms(path, t, h, -volume * path.drift))
        return jumps
    if size % 2 == 1:
        raise ContractError(f"label {label!r} needs an even component, got size {size}")
    lebesgue = c ** (size - 2) * eps ** ((d + k) * (size - 2)) * volume * spec.bracket_density
    if label == DOWN:
        return _quadrature_atoms(path, t, h, lebesgue)
    bar = renormalized_path(path)
    scale = c ** (size - 2) * eps ** ((d + k) * (size - 1)) * volume
    jumps = _jump_atoms(bar, t, scale * bar.increments)
    return Atoms.merge(jumps, _quadrature_atoms(path, t, h, -lebesgue))


def _ordered_tuples(levels: Sequence[Atoms], budget: int) -> List[np.ndarray]:
    """Index arrays of all strictly time-increasing atom tuples, one array per level."""
    first = levels[0]
    columns = [np.arange(len(first))]
    last_times = first.times
    for level in levels[1:]:
        starts = np.searchsorted(level.times, last_times, side='right')
        counts = len(level) - starts
        total = int(counts.sum())
        if total * len(levels) > budget:
            raise GuardError(
                f"iterated integral needs {total} atom tuples at one level, over the "
                f"budget of {budget} operations; use fewer events or a coarser quadrature"
            )
        parent = np.repeat(np.arange(last_times.size), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        chosen = np.repeat(starts, counts) + offsets
        columns = [column[parent] for column in columns] + [chosen]
        last_times = level.times[chosen]
    return columns


def _sum_over_tuples(F: GridFunction, levels: Sequence[Atoms], variable_level: np.ndarray,
                     columns: Sequence[np.ndarray], path: MartingalePathSet) -> float:
    """Σ over tuples of F(points)·∏ weights, evaluated in chunks."""
    count = columns[0].size if columns else 0
    if count == 0:
        return 0.0
    lattice = path.lattice
    total = 0.0
    for lo in range(0, count, EVAL_CHUNK):
        hi = min(count, lo + EVAL_CHUNK)
        weight = np.ones(hi - lo)
        times = np.empty((hi - lo, len(levels)))
        sites = np.empty((hi - lo, len(levels)), dtype=np.int64)
        for j, level in enumerate(levels):
            index = columns[j][lo:hi]
            weight *= level.weights[index]
            times[:, j] = level.times[index]
            sites[:, j] = level.sites[index]
        ts = times[:, variable_level]
        xs = lattice.coordinates(sites[:, variable_level].reshape(-1)).reshape(
            hi - lo, variable_level.size, lattice.d)
        total += float(np.sum(F(ts, xs) * weight))
    return total


def renormalized_iterated_integral(gamma: Contraction, sigma: Ordering, labels: Labeling,
                                   F: GridFunction, path: MartingalePathSet, t: float,
                                   h: Optional[float] = None,
                                   budget: int = OPERATION_BUDGET) -> float:
    """
    Time-ordered iterated integral with per-component measure labels.

    The component at time position j integrates against the measure selected
    by its label and size (see measure_atoms); positions are strictly
    increasing in time and bounded by t.

    Args:
        gamma: Contraction of the n variables
        sigma: Time ordering of the m components
        labels: nil / down / diamond per component
        F: Integrand of arity n
        path: Martingale path (extended paths integrate from their start)
        t: Upper time limit (exclusive)
        h: Midpoint quadrature step for Lebesgue and compensator parts
            (default 1e-3 of the integration window)
        budget: Operation guard

    Returns:
        The integral value
    """
    if F.arity != gamma.n:
        raise ContractError(f"F has arity {F.arity}, contraction has n = {gamma.n}")
    if sigma.m != gamma.m:
        raise ContractError(f"ordering of {sigma.m} components for {gamma.m} components")
    if gamma.m > MAX_ITERATED_COMPONENTS:
        raise GuardError(f"at most {MAX_ITERATED_COMPONENTS} components, got {gamma.m}")
    labels.check(gamma)
    path.check_time(t)
    if h is None:
        h = 1e-3 * max(t - path.start, 1e-12)

    levels = [measure_atoms(path, gamma.sizes[c], labels.labels[c], t, h) for c in sigma.sigma]
    if any(len(level) == 0 for level in levels):
        return 0.0
    variable_level = np.asarray(sigma.inverse().sigma)[gamma.component_of()]
    columns = _ordered_tuples(levels, budget)
    return _sum_over_tuples(F, levels, variable_level, columns, path)


def iterated_integral(gamma: Contraction, sigma: Ordering, F: GridFunction,
                      path: MartingalePathSet, t: float, h: Optional[float] = None,
                      budget: int = OPERATION_BUDGET) -> float:
    """∫_{s_1 < ... < s_m < t} F^{γ,σ} d𝐌^{(|γ_σ(1)|)}···d𝐌^{(|γ_σ(m)|)}."""
    return renormalized_iterated_integral(gamma, sigma, Labeling.nil(gamma.m), F, path, t,
                                          h=h, budget=budget)


def chaos_expansion(F: GridFunction, path: MartingalePathSet, t: Optional[float] = None,
                    h: Optional[float] = None, budget: int = OPERATION_BUDGET) -> float:
    """Σ_γ Σ_σ of the iterated integrals; equals product_integral on symmetric paths."""
    if t is None:
        t = path.horizon
    total = 0.0
    for gamma in contractions(F.arity):
        for sigma in orderings(gamma):
            total += iterated_integral(gamma, sigma, F, path, t, h=h, budget=budget)
    return total


def product_integral(F: GridFunction, path: MartingalePathSet, n: int,
                     T: Optional[float] = None, h: Optional[float] = None,
                     budget: int = OPERATION_BUDGET) -> float:
    """
    Brute-force ∫ F d𝐌^n over all n-tuples of level-one atoms.

    Exact on symmetric paths; one-sided paths add compensator atoms on a
    midpoint grid (error O(h)).
    """
    if F.arity != n:
        raise ContractError(f"F has arity {F.arity}, expected {n}")
    if T is None:
        T = path.horizon
    path.check_time(T)
    if h is None:
        h = 1e-3 * max(T - path.start, 1e-12)
    atoms = measure_atoms(path, 1, NIL, T, h)
    size = len(atoms)
    if size == 0:
        return 0.0
    total_tuples = size ** n
    if total_tuples > budget:
        raise GuardError(
            f"product integral over {size}^{n} = {total_tuples} tuples exceeds the "
            f"budget of {budget}; use a smaller instance"
        )
    lattice = path.lattice
    coords = lattice.coordinates(atoms.sites)
    total = 0.0
    shape = (size,) * n
    for lo in range(0, total_tuples, EVAL_CHUNK):
        flat = np.arange(lo, min(total_tuples, lo + EVAL_CHUNK))
        index = np.stack(np.unravel_index(flat, shape), axis=1)
        weight = np.prod(atoms.weights[index], axis=1)
        total += float(np.sum(F(atoms.times[index], coords[index]) * weight))
    return total


def _single_point(F: GridFunction, times: np.ndarray, sites: np.ndarray,
                  path: MartingalePathSet) -> np.ndarray:
    if F.arity != 1:
        raise ContractError(f"diagonal integrands have arity 1, got {F.arity}")
    coords = path.lattice.coordinates(sites)
    return F(times.reshape(-1, 1), coords.reshape(-1, 1, path.lattice.d))


def diagonal_integral(F: GridFunction, path: MartingalePathSet, n: int, t: float) -> float:
    """Σ_x ε^{nd} Σ_{start ≤ s < t} F(s, x)(Δ_s𝕄(x))^n, exact."""
    if n < 2:
        raise ContractError(f"diagonal integrals need n >= 2, got {n}")
    path.check_time(t)
    mask = _window(path, t)
    if not np.any(mask):
        return 0.0
    values = _single_point(F, path.times[mask], path.sites[mask], path)
    volume = path.lattice.eps ** path.lattice.d
    return float(volume ** n * np.sum(values * path.increments[mask] ** n))


def _lebesgue_integral(F: GridFunction, path: MartingalePathSet, t: float, h: float) -> float:
    """Σ_x ∫_{start}^{t} F(s, x) ds by the midpoint rule."""
    midpoints, step = quadrature_grid(path.start, t, h)
    if midpoints.size == 0:
        return 0.0
    sites = path.lattice.site_count
    values = _single_point(F, np.repeat(midpoints, sites),
                           np.tile(np.arange(sites, dtype=np.int64), midpoints.size), path)
    return float(step * np.sum(values))


def diagonal_decomposition(F: GridFunction, path: MartingalePathSet, n: int, t: float,
                           h: Optional[float] = None) -> Tuple[float, float]:
    """
    Split the diagonal integral into a martingale part and a Lebesgue part.

    Odd n: (Δ𝕄)^n = (cε^𝐤)^{n-1}Δ𝕄, giving
        martingale = c^{n-1}ε^{(d+𝐤)(n-1)}·ε^dΣ∫F d𝕄,
        lebesgue   = c^{n-1}ε^{(d+𝐤)(n-2)}·ε^dΣ∫F·𝙲 ds.
    Even n: (Δ𝕄)^n = (cε^𝐤)^{n-2}(ε^𝐤Δ𝕄̄ + ε^{-d}C ds), giving
        martingale = c^{n-2}ε^{(d+𝐤)(n-1)}·ε^dΣ∫F d𝕄̄,
        lebesgue   = c^{n-2}ε^{(d+𝐤)(n-2)}·ε^dΣ∫F·C ds.

    Both parts share one midpoint quadrature, so the compensators cancel and
    the sum equals diagonal_integral up to rounding.
    """
    if n < 2:
        raise ContractError(f"diagonal integrals need n >= 2, got {n}")
    path.check_time(t)
    if h is None:
        h = 1e-3 * max(t - path.start, 1e-12)
    lattice, spec = path.lattice, path.spec
    d, eps, k, c = lattice.d, lattice.eps, spec.k, spec.c
    volume = eps ** d
    mask = _window(path, t)

    if n % 2 == 1:
        jumps = 0.0
        if np.any(mask):
            values = _single_point(F, path.times[mask], path.sites[mask], path)
            jumps = float(np.sum(values * path.increments[mask]))
        prefactor = c ** (n - 1) * eps ** ((d + k) * (n - 1)) * volume
        lebesgue_weight = c ** (n - 1) * eps ** ((d + k) * (n - 2)) * volume * \
            spec.compensator_density
        quadrature = _lebesgue_integral(F, path, t, h) if spec.compensator_density else 0.0
        lebesgue = lebesgue_weight * quadrature
        return prefactor * jumps - lebesgue, lebesgue

    bar = renormalized_path(path)
    jumps = 0.0
    if np.any(mask):
        values = _single_point(F, bar.times[mask], bar.sites[mask], bar)
        jumps = float(np.sum(values * bar.increments[mask]))
    prefactor = c ** (n - 2) * eps ** ((d + k) * (n - 1)) * volume
    lebesgue = c ** (n - 2) * eps ** ((d + k) * (n - 2)) * volume * spec.bracket_density * \
        _lebesgue_integral(F, path, t, h)
    return prefactor * jumps - lebesgue, lebesgue


def nested_norm(F: GridFunction, gamma: Contraction, sigma: Ordering, p: PFunction,
                T: float, lattice_eps: float, d: int, time_points: int = 16,
                budget: int = NORM_BUDGET) -> float:
    """
    Recursive norm ∥F^{γ,σ}∥_{L^𝐩_ε} on a midpoint tensor grid.

    The innermost variable z_1 is reduced first with exponent 𝐩(1), then z_2
    with 𝐩(2), and so on; the indicator s_1 < s_2 < ... < s_m is applied to
    the whole tensor. L^1 and L^2 carry the weight ε^d·dt per point, L^∞ is
    the maximum over the grid.

    Args:
        F: F^{γ,σ}, of arity m
        gamma, sigma: Contraction and ordering (fix m)
        p: Exponent per time position
        T: Time horizon
        lattice_eps: Mesh ε of the torus
        d: Spatial dimension
        time_points: Number of time midpoints on [0, T]
        budget: Guard on the tensor size

    Returns:
        The nested norm
    """
    m = gamma.m
    if F.arity != m or sigma.m != m or p.m != m:
        raise ContractError(f"nested_norm needs arity {m} for F, sigma and p")
    side = int(round(1.0 / lattice_eps))
    sites = side ** d
    midpoints, step = quadrature_grid(0.0, T, T / max(time_points, 1))
    per_variable = midpoints.size * sites
    if per_variable ** m > budget:
        raise GuardError(
            f"nested norm tensor of {per_variable}^{m} points exceeds the budget of {budget}"
        )
    site_axis = np.indices((side,) * d).reshape(d, -1).T * lattice_eps
    point_times = np.repeat(midpoints, sites)
    point_sites = np.tile(site_axis, (midpoints.size, 1))

    grids = np.meshgrid(*([np.arange(per_variable)] * m), indexing='ij')
    flat = [g.reshape(-1) for g in grids]
    ts = np.stack([point_times[f] for f in flat], axis=1)
    xs = np.stack([point_sites[f] for f in flat], axis=1)
    values = np.abs(F(ts, xs)).reshape((per_variable,) * m)
    for j in range(1, m):
        ordered = ts[:, j] > ts[:, j - 1]
        values = values * ordered.reshape((per_variable,) * m)

    weight = lattice_eps ** d * step
    for j in range(m):
        exponent = p.values[j]
        if exponent == math.inf:
            values = values.max(axis=0)
        else:
            values = (weight * np.sum(values ** exponent, axis=0)) ** (1.0 / exponent)
    return float(values)


def exponent_alpha(gamma: Contraction, p: PFunction, d: int, k: float) -> float:
    """α_γ(𝐩) = (d+𝐤)(Σ|γ_i| - 2|𝐩⁻¹(1)| - |𝐩⁻¹(2)|)."""
    if p.m != gamma.m:
        raise ContractError(f"p has {p.m} values for {gamma.m} components")
    return (d + k) * (gamma.n - 2 * len(p.preimage(1)) - len(p.preimage(2)))


def exponent_beta(gamma: Contraction, p: PFunction, moment: float,
                  sigma: Optional[Ordering] = None) -> float:
    """
    β_{γ,p}(𝐩) = ((p-1)/p)^#{i ∈ 𝐩⁻¹(∞) ∖ Γ₁(γ) : i ≥ 2}.

    𝐩 is indexed by time position; with an ordering σ the singleton
    components are mapped to their positions first.
    """
    if p.m != gamma.m:
        raise ContractError(f"p has {p.m} values for {gamma.m} components")
    if moment <= 1.0:
        raise ContractError(f"moment must exceed 1, got {moment}")
    position = (sigma or Ordering.trivial(gamma.m)).inverse().sigma
    singletons = {position[c] for c in gamma.singletons()}
    count = sum(1 for i in p.preimage(math.inf) if i not in singletons and i >= 1)
    return ((moment - 1.0) / moment) ** count


def sobolev_sides(f: Callable[[float], float], df: Callable[[float], float], a: float,
                  b: float, p: float, samples: int = 2001) -> Tuple[float, float]:
    """
    Both sides of sup_I |f|^p ≤ |I|^{-1}∫|f|^p + p(∫|f|^p)^{(p-1)/p}(∫|f'|^p)^{1/p}.

    The supremum is taken over a uniform sample of I, the integrals by
    adaptive quadrature.
    """
    grid = np.linspace(a, b, samples)
    lhs = max(abs(f(float(s))) ** p for s in grid)
    mass, _ = integrate.quad(lambda r: abs(f(r)) ** p, a, b, limit=200)
    slope, _ = integrate.quad(lambda r: abs(df(r)) ** p, a, b, limit=200)
    rhs = mass / (b - a) + p * mass ** ((p - 1.0) / p) * slope ** (1.0 / p)
    return float(lhs), float(rhs)
