"""
Lattice jump martingales.

This module builds the driving noise of the package: a family of càdlàg
martingales 𝕄_ε(t, x), one per site x of the discrete torus (εℤ/ℤ)^d, whose
jumps all have the same size c·ε^𝐤 and whose predictable bracket is
deterministic, ⟨𝕄_ε(x)⟩_t = ε^{-d}·C·t.

Key Design Principles:
1. Exact brackets: the bracket density C and the compensator density 𝙲 are
   constants, so every bracket and every compensator integral is closed form.
2. Continuous time: events come from exponential inter-arrival times, never
   from time stepping, so two sites almost surely never jump together.
3. Counter-based streams: each (seed, site, stream) owns a Philox generator,
   which makes paths reproducible and independent of sampling order.
4. Immutability: a MartingalePathSet never changes after construction and
   can be shared between workers.

Two jump models are supported. In the symmetric-pair model every site runs two
independent clocks of rate r/2, one producing +c·ε^𝐤 jumps and one producing
-c·ε^𝐤 jumps; the compensator vanishes. In the one-sided model a single clock
of rate r produces positive jumps, compensated by the drift ε^{-𝐤-d}·𝙲·t with
𝙲 = C / c.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate, special

from ..utils.errors import ConfigurationError, DomainError, LatticeChaosError
from ..utils.logging import get_logger
from ..utils.rng import split_seed, stream_generator

logger = get_logger(__name__)

SYMMETRIC = 'symmetric-pair'
ONE_SIDED = 'one-sided-compensated'
JUMP_MODELS = (SYMMETRIC, ONE_SIDED)

# Stream id of the independent copy used for negative times.
PAST_COPY_KEY = 0x7E

SiteLike = Union[int, Sequence[int]]
# Space-time test function: phi(ts of shape (K,), xs of shape (K, d)) -> (K,)
SpaceTimeFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LatticeSpec:
    """Discrete torus (εℤ/ℤ)^d with a simulation horizon T."""

    d: int
    eps: float
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.d}")
        if not 0.0 < self.eps <= 1.0:
            raise ConfigurationError(f"eps must lie in (0, 1], got {self.eps}")
        inverse = 1.0 / self.eps
        if abs(inverse - round(inverse)) > 1e-9:
            raise ConfigurationError(
                f"1/eps must be a positive integer so the torus closes up, got 1/eps = {inverse}"
            )
        if self.horizon < 0.0:
            raise ConfigurationError(f"horizon must be non-negative, got {self.horizon}")

    @property
    def side(self) -> int:
        """Number of sites along one axis."""
        return int(round(1.0 / self.eps))

    @property
    def site_count(self) -> int:
        return self.side ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.d

    def with_horizon(self, horizon: float) -> 'LatticeSpec':
        return LatticeSpec(self.d, self.eps, horizon)

    def site_index(self, x: SiteLike) -> int:
        """Flat index of a site given as a flat index or an integer multi-index."""
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < self.site_count:
                raise DomainError(f"site index {x} outside the torus of {self.site_count} sites")
            return int(x)
        multi = np.mod(np.asarray(x, dtype=np.int64), self.side)
        if multi.shape != (self.d,):
            raise DomainError(f"site multi-index must have {self.d} entries, got {tuple(x)}")
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, sites: np.ndarray) -> np.ndarray:
        """Integer multi-indices of flat site indices, shape (K, d)."""
        return np.stack(np.unravel_index(np.asarray(sites, dtype=np.int64), self.shape), axis=-1)

    def coordinates(self, sites: Optional[np.ndarray] = None) -> np.ndarray:
        """Spatial coordinates ε·index of the given sites (all sites by default)."""
        if sites is None:
            sites = np.arange(self.site_count)
        return self.eps * self.multi_index(sites).astype(float)

    def periodic_difference(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Minimal-image difference x - y on the unit torus, in [-1/2, 1/2)."""
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return diff - np.floor(diff + 0.5)

    def offset_coordinates(self) -> np.ndarray:
        """Minimal-image coordinates of every site seen from the origin, shape (L,)*d + (d,)."""
        axis = np.arange(self.side)
        axis = np.where(axis >= (self.side + 1) // 2, axis - self.side, axis) * self.eps
        grids = np.meshgrid(*([axis] * self.d), indexing='ij')
        return np.stack(grids, axis=-1)


@dataclass(frozen=True)
class MartingaleSpec:
    """
    Law of the per-site martingales.

    Attributes:
        k: Jump-size exponent 𝐤 (jumps are ±c·ε^𝐤)
        c: Jump magnitude constant
        site_rate: Total jump rate per site
        bracket_density: C in ⟨𝕄(x)⟩_t = ε^{-d}·C·t
        compensator_density: 𝙲 in 𝕄 = J - ε^{-𝐤-d}·𝙲·t
        jump_model: 'symmetric-pair' or 'one-sided-compensated'
    """

    k: float
    c: float
    site_rate: float
    bracket_density: float = 1.0
    compensator_density: float = 0.0
    jump_model: str = SYMMETRIC

    @classmethod
    def consistent(cls, lattice: LatticeSpec, k: float, c: float,
                   bracket_density: float = 1.0,
                   jump_model: str = SYMMETRIC) -> 'MartingaleSpec':
        """Build a spec whose site rate and compensator satisfy the bracket identity."""
        if c <= 0:
            raise ConfigurationError(f"jump constant c must be positive, got {c}")
        rate = bracket_density * lattice.eps ** (-lattice.d) / (c ** 2 * lattice.eps ** (2 * k))
        compensator = 0.0 if jump_model == SYMMETRIC else bracket_density / c
        spec = cls(k=k, c=c, site_rate=rate, bracket_density=bracket_density,
                   compensator_density=compensator, jump_model=jump_model)
        spec.check(lattice)
        return spec

    @classmethod
    def phi43(cls, lattice: LatticeSpec) -> 'MartingaleSpec':
        """Symmetric spec driving the dynamical Φ⁴₃ model: 𝐤 = -1/2, c = 1/√2, C = 1."""
        if lattice.d != 3:
            raise ConfigurationError(f"the phi43 preset needs d = 3, got d = {lattice.d}")
        return cls.consistent(lattice, k=-0.5, c=1.0 / math.sqrt(2.0), bracket_density=1.0)

    def check(self, lattice: LatticeSpec, density_bound: float = 1.0) -> None:
        """
        Raise ConfigurationError naming the first violated identity.

        ``density_bound`` caps the bracket density C; driving noise uses 1,
        the renormalised spec of a law with constant c uses c².
        """
        if self.jump_model not in JUMP_MODELS:
            raise ConfigurationError(f"unknown jump model {self.jump_model!r}")
        if self.k <= -lattice.d / 2.0:
            raise ConfigurationError(f"need k > -d/2, got k = {self.k}, d = {lattice.d}")
        if self.c <= 0 or self.site_rate <= 0:
            raise ConfigurationError("c and site_rate must be positive")
        if not 0.0 < self.bracket_density <= density_bound * (1.0 + 1e-12):
            raise ConfigurationError(
                f"bracket density must lie in (0, {density_bound:g}], got {self.bracket_density}"
            )
        lhs = self.site_rate * self.c ** 2 * lattice.eps ** (2 * self.k)
        rhs = self.bracket_density * lattice.eps ** (-lattice.d)
        if not math.isclose(lhs, rhs, rel_tol=1e-9):
            raise ConfigurationError(
                "inconsistent spec: site_rate * c^2 * eps^(2k) = bracket_density * eps^(-d) "
                f"is violated ({lhs:.12g} != {rhs:.12g})"
            )
        if self.jump_model == SYMMETRIC and self.compensator_density != 0.0:
            raise ConfigurationError(
                "inconsistent spec: the symmetric-pair model needs compensator_density = 0"
            )
        if self.jump_model == ONE_SIDED:
            expected = self.bracket_density / self.c
            if not math.isclose(self.compensator_density, expected, rel_tol=1e-9):
                raise ConfigurationError(
                    "inconsistent spec: the one-sided model needs "
                    f"compensator_density = bracket_density / c = {expected:.12g}, "
                    f"got {self.compensator_density:.12g}"
                )

    def jump_magnitude(self, lattice: LatticeSpec) -> float:
        return self.c * lattice.eps ** self.k

    def drift(self, lattice: LatticeSpec) -> float:
        """Slope ε^{-𝐤-d}·𝙲 of the compensator."""
        return lattice.eps ** (-self.k - lattice.d) * self.compensator_density

    def renormalized(self) -> 'MartingaleSpec':
        """
        Spec of 𝕄̄ = ε^{-𝐤}([𝕄] - ⟨𝕄⟩): constant c², same 𝐤, bracket c²·C.

        The bracket density c²·C may exceed 1 when c > 1; validate it with
        check_renormalized, which bounds it by c².
        """
        return MartingaleSpec(
            k=self.k,
            c=self.c ** 2,
            site_rate=self.site_rate,
            bracket_density=self.c ** 2 * self.bracket_density,
            compensator_density=self.bracket_density,
            jump_model=ONE_SIDED,
        )

    def check_renormalized(self, lattice: LatticeSpec) -> 'MartingaleSpec':
        """The renormalised spec, checked against its own density bound c²."""
        renormalized = self.renormalized()
        renormalized.check(lattice, density_bound=self.c ** 2)
        return renormalized


@dataclass(frozen=True)
class JumpEvent:
    time: float
    site: int
    sign: int


@dataclass(frozen=True)
class SmoothedFieldSpec:
    """Spatial smoothing at scale 𝔢 = ε^α with a unit-mass bump profile."""

    alpha: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"smoothing exponent must lie in (0, 1], got {self.alpha}")

    def scale(self, eps: float) -> float:
        """𝔢 = ε^α; lies in [ε, 1] for α ∈ (0, 1]."""
        return float(eps ** self.alpha)


@dataclass(frozen=True, eq=False)
class MartingalePathSet:
    """
    One realization of (𝕄_ε(t, x))_x.

    Events are stored as flat arrays sorted by time. Events with negative
    times belong to the independent copy used to extend the path to t < 0;
    the path then covers [-past_horizon, T].
    """

    lattice: LatticeSpec
    spec: MartingaleSpec
    times: np.ndarray
    sites: np.ndarray
    signs: np.ndarray
    seed: int
    past_horizon: float = 0.0
    _by_site: Dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ('times', 'sites', 'signs'):
            array = getattr(self, name)
            array.setflags(write=False)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0.0):
            raise LatticeChaosError(
                "simultaneous or unsorted jumps in a generated path; "
                "event times must be strictly increasing across all sites"
            )

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def start(self) -> float:
        return -self.past_horizon

    @property
    def horizon(self) -> float:
        return self.lattice.horizon

    @property
    def magnitude(self) -> float:
        return self.spec.jump_magnitude(self.lattice)

    @property
    def drift(self) -> float:
        return self.spec.drift(self.lattice)

    @property
    def increments(self) -> np.ndarray:
        """Martingale jump Δ𝕄 of every event."""
        return self.signs * self.magnitude

    @property
    def events(self) -> Tuple[Tuple[JumpEvent, ...], ...]:
        """Per-site time-sorted JumpEvent sequences."""
        return tuple(
            tuple(JumpEvent(float(t), site, int(s))
                  for t, s in zip(self.times[idx], self.signs[idx]))
            for site, idx in ((site, self._site_indices(site))
                              for site in range(self.lattice.site_count))
        )

    def _site_indices(self, site: int) -> np.ndarray:
        if site not in self._by_site:
            self._by_site[site] = np.flatnonzero(self.sites == site)
        return self._by_site[site]

    def site_times(self, x: SiteLike) -> np.ndarray:
        return self.times[self._site_indices(self.lattice.site_index(x))]

    def site_signs(self, x: SiteLike) -> np.ndarray:
        return self.signs[self._site_indices(self.lattice.site_index(x))]

    def check_time(self, t: float) -> None:
        if not self.start <= t <= self.horizon:
            raise DomainError(f"time {t} outside [{self.start}, {self.horizon}]")

    def truncated(self, t: float) -> 'MartingalePathSet':
        """The same path restricted to [start, t]."""
        self.check_time(t)
        keep = self.times <= t
        return MartingalePathSet(self.lattice.with_horizon(t), self.spec,
                                 self.times[keep].copy(), self.sites[keep].copy(),
                                 self.signs[keep].copy(), self.seed, self.past_horizon)

    def events_table(self) -> Dict[str, np.ndarray]:
        """Flat arrays of times, sites, coordinates and increments."""
        return {
            'times': self.times,
            'sites': self.sites,
            'coordinates': self.lattice.coordinates(self.sites),
            'increments': self.increments,
        }


def _sample_stream(seed: int, site: int, stream: int, rate: float,
                   horizon: float) -> np.ndarray:
    """Event times of one Poisson clock on [0, horizon) from exponential gaps."""
    if rate <= 0.0 or horizon <= 0.0:
        return np.empty(0)
    generator = stream_generator(seed, site, stream)
    expected = rate * horizon
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    pieces = []
    start = 0.0
    while True:
        arrivals = start + np.cumsum(generator.exponential(1.0 / rate, size=chunk))
        kept = arrivals[arrivals < horizon]
        pieces.append(kept)
        if kept.size < chunk:
            break
        start = float(arrivals[-1])
    return np.concatenate(pieces)


def _site_streams(spec: MartingaleSpec) -> Tuple[Tuple[int, int, float], ...]:
    """(stream id, sign, rate) of every clock at one site."""
    if spec.jump_model == SYMMETRIC:
        return ((0, 1, spec.site_rate / 2.0), (1, -1, spec.site_rate / 2.0))
    return ((0, 1, spec.site_rate),)


def sample_site_times(lattice: LatticeSpec, spec: MartingaleSpec, seed: int,
                      site: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted event times and signs of a single site."""
    times, signs = [], []
    for stream, sign, rate in _site_streams(spec):
        stream_times = _sample_stream(seed, site, stream, rate, lattice.horizon)
        times.append(stream_times)
        signs.append(np.full(stream_times.size, sign, dtype=np.int8))
    all_times = np.concatenate(times)
    order = np.argsort(all_times, kind='stable')
    return all_times[order], np.concatenate(signs)[order]


def sample_paths(lattice: LatticeSpec, spec: MartingaleSpec, seed: int) -> MartingalePathSet:
    """
    Sample one realization of the lattice martingales on [0, T).

    Args:
        lattice: Torus and horizon
        spec: Martingale law (checked for consistency first)
        seed: Master seed; per-site streams are keyed by (seed, site, stream)

    Returns:
        Immutable MartingalePathSet
    """
    spec.check(lattice)
    times, sites, signs = [], [], []
    for site in range(lattice.site_count):
        site_times, site_signs = sample_site_times(lattice, spec, seed, site)
        times.append(site_times)
        sites.append(np.full(site_times.size, site, dtype=np.int64))
        signs.append(site_signs)

    all_times = np.concatenate(times) if times else np.empty(0)
    order = np.argsort(all_times, kind='stable')
    path = MartingalePathSet(
        lattice=lattice,
        spec=spec,
        times=all_times[order],
        sites=np.concatenate(sites)[order] if sites else np.empty(0, dtype=np.int64),
        signs=np.concatenate(signs)[order] if signs else np.empty(0, dtype=np.int8),
        seed=seed,
    )
    logger.debug(f"Sampled {len(path)} events on {lattice.site_count} sites (seed {seed})")
    return path


def extend_in_time(path: MartingalePathSet, past_horizon: float,
                   seed: Optional[int] = None) -> MartingalePathSet:
    """
    Extend a path to negative times with an independent mirrored copy.

    For t < 0 the extended process is 𝕄̃(-t, x), where 𝕄̃ is an independent
    copy of the same law sampled on [0, past_horizon].
    """
    if path.past_horizon > 0.0:
        raise ConfigurationError("path is already extended to negative times")
    if past_horizon < 0.0:
        raise ConfigurationError(f"past horizon must be non-negative, got {past_horizon}")
    copy_seed = split_seed(path.seed, PAST_COPY_KEY) if seed is None else seed
    copy = sample_paths(path.lattice.with_horizon(past_horizon), path.spec, copy_seed)
    return MartingalePathSet(
        lattice=path.lattice,
        spec=path.spec,
        times=np.concatenate([-copy.times[::-1], path.times]),
        sites=np.concatenate([copy.sites[::-1], path.sites]),
        signs=np.concatenate([copy.signs[::-1], path.signs]),
        seed=path.seed,
        past_horizon=past_horizon,
    )


def evaluate(path: MartingalePathSet, t: float, x: SiteLike) -> float:
    """
    Càdlàg value 𝕄_ε(t, x): signed jumps in [0, t] minus ε^{-𝐤-d}·𝙲·t.

    For t < 0 on an extended path the value is that of the mirrored copy,
    𝕄̃(-t, x).
    """
    path.check_time(t)
    times = path.site_times(x)
    signs = path.site_signs(x)
    if t >= 0.0:
        lo = np.searchsorted(times, 0.0, side='left')
        hi = np.searchsorted(times, t, side='right')
        return float(path.magnitude * signs[lo:hi].sum() - path.drift * t)
    lo = np.searchsorted(times, t, side='left')
    hi = np.searchsorted(times, 0.0, side='left')
    return float(path.magnitude * signs[lo:hi].sum() - path.drift * (-t))


def martingale_field(path: MartingalePathSet, t: float) -> np.ndarray:
    """𝕄_ε(t, x) for every site at once, t ≥ 0."""
    path.check_time(t)
    if t < 0.0:
        raise DomainError("martingale_field is defined for t >= 0")
    mask = (path.times >= 0.0) & (path.times <= t)
    jumps = np.bincount(path.sites[mask], weights=path.signs[mask].astype(float),
                        minlength=path.lattice.site_count)
    return path.magnitude * jumps - path.drift * t


def predictable_bracket(spec: MartingaleSpec, lattice: LatticeSpec, t: float) -> float:
    """⟨𝕄_ε(x)⟩_t = ε^{-d}·C·t."""
    if not 0.0 <= t <= lattice.horizon:
        raise DomainError(f"time {t} outside [0, {lattice.horizon}]")
    return lattice.eps ** (-lattice.d) * spec.bracket_density * t


def jump_count(path: MartingalePathSet, interval: Tuple[float, float], x: SiteLike) -> int:
    """Number of jumps of 𝕄_ε(x) with time in the closed interval [a, b]."""
    a, b = interval
    if b < a:
        return 0
    path.check_time(a)
    path.check_time(b)
    times = path.site_times(x)
    return int(np.searchsorted(times, b, side='right') - np.searchsorted(times, a, side='left'))


def realized_bracket(path: MartingalePathSet, t: float, x: SiteLike) -> float:
    """[𝕄_ε(x)]_t = Σ_{s≤t} (Δ𝕄)² = c²ε^{2𝐤}·(jumps in [0, t])."""
    if t < 0.0:
        raise DomainError(f"brackets are defined for t >= 0, got {t}")
    return path.magnitude ** 2 * jump_count(path, (0.0, t), x)


def total_variation(path: MartingalePathSet, T: float, x: SiteLike) -> float:
    """Total variation of t ↦ 𝕄_ε(t, x) over [0, T]."""
    return (path.magnitude * jump_count(path, (0.0, T), x)
            + abs(path.drift) * T)


def renormalized_path(path: MartingalePathSet) -> MartingalePathSet:
    """
    Path of 𝕄̄_ε = ε^{-𝐤}([𝕄_ε] - ⟨𝕄_ε⟩).

    Same event times, every jump positive with size c²ε^𝐤, compensated at
    density C.
    """
    return MartingalePathSet(
        lattice=path.lattice,
        spec=path.spec.check_renormalized(path.lattice),
        times=path.times.copy(),
        sites=path.sites.copy(),
        signs=np.ones(path.times.size, dtype=np.int8),
        seed=path.seed,
        past_horizon=path.past_horizon,
    )


def running_sup(path: MartingalePathSet, x: SiteLike) -> float:
    """sup over t ∈ [0, T] of |𝕄_ε(t, x)|, checked at jumps, left limits and T."""
    times = path.site_times(x)
    signs = path.site_signs(x)
    keep = times >= 0.0
    times, signs = times[keep], signs[keep]
    after = path.magnitude * np.cumsum(signs) - path.drift * times
    before = after - path.magnitude * signs
    final = path.magnitude * signs.sum() - path.drift * path.horizon
    candidates = np.concatenate([[0.0, final], after, before])
    return float(np.max(np.abs(candidates)))


def bump(r: np.ndarray) -> np.ndarray:
    """Unnormalised bump exp(-1/(1 - r²)) on r < 1, zero outside."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    out = np.zeros_like(r)
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _sphere_area(d: int) -> float:
    return float(2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0))


_MOLLIFIER_MASS: Dict[int, float] = {}


def mollifier_mass(d: int) -> float:
    """∫_{ℝ^d} bump(|x|) dx by radial quadrature."""
    if d not in _MOLLIFIER_MASS:
        radial, _ = integrate.quad(lambda r: float(bump(np.array(r))) * r ** (d - 1), 0.0, 1.0,
                                   epsabs=1e-14, epsrel=1e-12)
        _MOLLIFIER_MASS[d] = _sphere_area(d) * radial
    return _MOLLIFIER_MASS[d]


def mollifier(x: np.ndarray, d: int) -> np.ndarray:
    """Unit-mass radial mollifier ψ on ℝ^d, supported in the unit ball. x has shape (..., d)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return bump(r) / mollifier_mass(d)


def scaled_mollifier(x: np.ndarray, d: int, scale: float) -> np.ndarray:
    """ψ_𝔢(x) = 𝔢^{-d}·ψ(x/𝔢)."""
    return mollifier(np.asarray(x, dtype=float) / scale, d) / scale ** d


def lattice_mollifier(lattice: LatticeSpec, scale: float) -> np.ndarray:
    """ψ_𝔢 sampled at the minimal-image offsets of the torus, shape (L,)*d."""
    if 2.0 * scale > 1.0:
        raise ConfigurationError(
            f"mollifier support 2*{scale:.4g} is wider than the unit torus"
        )
    return scaled_mollifier(lattice.offset_coordinates(), lattice.d, scale)


def periodic_convolve(field_values: np.ndarray, weights: np.ndarray, eps: float,
                      d: int) -> np.ndarray:
    """ε^d Σ_y w(x - y) f(y) on the torus; the last d axes are spatial."""
    axes = tuple(range(-d, 0))
    spatial = field_values.shape[-d:]
    transformed = sp_fft.rfftn(field_values, s=spatial, axes=axes)
    kernel = sp_fft.rfftn(weights, s=spatial, axes=axes)
    return eps ** d * sp_fft.irfftn(transformed * kernel, s=spatial, axes=axes)


class SmoothedField:
    """Evaluator of 𝓜_ε(t, x) = ε^d Σ_y ψ_𝔢(x - y)·𝕄_ε(t, y)."""

    def __init__(self, path: MartingalePathSet, field_spec: SmoothedFieldSpec):
        self.path = path
        self.field_spec = field_spec
        self.scale = field_spec.scale(path.lattice.eps)
        self.weights = lattice_mollifier(path.lattice, self.scale)

    def field(self, t: float) -> np.ndarray:
        """Smoothed values at every site, shape (L,)*d."""
        lattice = self.path.lattice
        raw = martingale_field(self.path, t).reshape(lattice.shape)
        return periodic_convolve(raw, self.weights, lattice.eps, lattice.d)

    def __call__(self, t: float, x: SiteLike) -> float:
        lattice = self.path.lattice
        return float(self.field(t).reshape(-1)[lattice.site_index(x)])


def smooth(path: MartingalePathSet, field_spec: SmoothedFieldSpec) -> SmoothedField:
    """Smoothed martingale 𝓜_ε; raises ConfigurationError if ψ_𝔢 does not fit the torus."""
    return SmoothedField(path, field_spec)


def _time_support(phi: SpaceTimeFunction) -> Optional[Tuple[float, float]]:
    support = getattr(phi, 'time_support', None)
    if support is None:
        return None
    return float(support[0]), float(support[1])


def compensator_pairing(path: MartingalePathSet, phi: SpaceTimeFunction, t: float,
                        h: float) -> float:
    """ε^d·Σ_x ∫_{start}^{t} φ(s, x)·ε^{-𝐤-d}𝙲 ds by the composite midpoint rule with step h."""
    if path.drift == 0.0 or t <= path.start:
        return 0.0
    lattice = path.lattice
    lo, hi = path.start, t
    support = _time_support(phi)
    if support is not None:
        lo, hi = max(lo, support[0]), min(hi, support[1])
        if hi <= lo:
            return 0.0
    steps = max(1, int(math.ceil((hi - lo) / h)))
    step = (hi - lo) / steps
    midpoints = lo + step * (np.arange(steps) + 0.5)
    coords = lattice.coordinates()
    total = 0.0
    for s in midpoints:
        total += float(np.sum(phi(np.full(lattice.site_count, s), coords)))
    return lattice.eps ** lattice.d * path.drift * step * total


def pair_with_test(path: MartingalePathSet, phi: SpaceTimeFunction,
                   t: Optional[float] = None, h: Optional[float] = None) -> float:
    """
    ∫ φ d𝐌_ε over [start, t] × torus.

    The jump part ε^d Σ_events φ(s, x)·Δ𝕄 is exact; the compensator part of
    one-sided paths uses the midpoint rule with step h (default 1e-3·T), with
    error O(h) for piecewise-C¹ φ.

    Args:
        path: Martingale path
        phi: Vectorised test function phi(ts, xs); an optional attribute
            ``time_support = (lo, hi)`` is checked against the horizon
        t: Upper time limit (default T)
        h: Quadrature step for the compensator

    Returns:
        The pairing value
    """
    lattice = path.lattice
    if t is None:
        t = path.horizon
    if t > path.horizon:
        raise DomainError(f"pairing time {t} beyond the horizon {path.horizon}")
    support = _time_support(phi)
    if support is not None and (support[0] < path.start or support[1] > t):
        raise DomainError(
            f"test function time support [{support[0]}, {support[1]}] escapes "
            f"the simulated window [{path.start}, {t}]"
        )
    if h is None:
        h = 1e-3 * max(path.horizon, 1e-12)

    mask = path.times <= t
    jump_part = 0.0
    if np.any(mask):
        values = phi(path.times[mask], lattice.coordinates(path.sites[mask]))
        jump_part = float(np.sum(values * path.increments[mask]))
    jump_part *= lattice.eps ** lattice.d
    return jump_part - compensator_pairing(path, phi, t, h)


def bdg_check(lattice: LatticeSpec, spec: MartingaleSpec, seed: int, replicas: int,
              p_values: Sequence[float] = (2.0, 4.0), site: int = 0,
              constant: float = 10.0) -> Dict[float, Tuple[float, float]]:
    """
    Empirical Burkholder-Davis-Gundy comparison at one site.

    Returns, for every p, the pair (E_p[sup_t |𝕄(t, x)|],
    constant·(E_p[⟨𝕄⟩_T^{1/2}] + c·ε^𝐤)). Only the sampled site is simulated.
    """
    sups = np.empty(replicas)
    for replica in range(replicas):
        replica_seed = split_seed(seed, replica)
        times, signs = sample_site_times(lattice, spec, replica_seed, site)
        path = MartingalePathSet(lattice, spec, times, np.full(times.size, site, dtype=np.int64),
                                 signs, replica_seed)
        sups[replica] = running_sup(path, site)
    bracket_root = math.sqrt(predictable_bracket(spec, lattice, lattice.horizon))
    jump = spec.jump_magnitude(lattice)
    result = {}
    for p in p_values:
        lhs = float(np.mean(sups ** p) ** (1.0 / p))
        result[float(p)] = (lhs, constant * (bracket_root + jump))
    return result
