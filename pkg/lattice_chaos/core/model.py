"""
Discrete model maps for the dynamical Φ⁴₃ symbols.

For a base point z and a test function φ^λ_z the module evaluates the
pairings ι_ε(Π̂^ε_z τ)(φ^λ_z) for τ ∈ {Ξ, Ψ, Ψ², 𝓘(Ψ³)Ψ²}. The field Ψ is the
convolution of the smoothed kernel K^𝔢 = K^ε ⋆_ε ψ_𝔢 with the martingale
measure d𝐌_ε, evaluated on the time grid of the sampled kernel.

Key Design Principles:
1. Binned noise: every jump is deposited on the two neighbouring time rows
   with cloud-in-cell weights, which reproduces the piecewise-linear time
   interpolant of the kernel exactly. E[Ψ²] is then exactly C₁.
2. FFT convolutions: space is circular on the torus, time is a full linear
   convolution along the row axis.
3. Closed-form oracles: the second moments of the Ξ, Ψ and contracted Ψ²
   pairings are computed from the same grids, with no sampling.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate, signal

from ..utils.errors import ConfigurationError, ContractError, DomainError, GuardError
from ..utils.logging import get_logger
from .kernels import (CutoffFunction, KernelGrid, build_singular_kernel, discrete_convolve,
                      mollifier_weights, renorm_constant_C1, renorm_constant_C2, sample_kernel)
from .noise import (LatticeSpec, MartingalePathSet, MartingaleSpec, SmoothedFieldSpec, bump,
                    extend_in_time, periodic_convolve, renormalized_path, sample_paths)

logger = get_logger(__name__)

XI = 'Xi'
PSI = 'Psi'
PSI2 = 'Psi2'
IPSI3PSI2 = 'IPsi3Psi2'
SYMBOLS = (XI, PSI, PSI2, IPSI3PSI2)

# (homogeneity at κ = 0, multiple of κ subtracted)
_HOMOGENEITY = {XI: (-2.5, 1), PSI: (-0.5, 1), PSI2: (-1.0, 2), IPSI3PSI2: (-0.5, 5)}

MODEL_BUDGET = 20_000_000
TIME_HALF_WIDTH = 0.25
SPACE_RADIUS = 0.5


@dataclass(frozen=True)
class ModelSymbol:
    tag: str
    kappa: float = 0.01

    def __post_init__(self) -> None:
        if self.tag not in SYMBOLS:
            raise ConfigurationError(f"unknown symbol {self.tag!r}; expected one of {SYMBOLS}")
        if self.kappa <= 0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")

    @property
    def target(self) -> float:
        """Homogeneity at κ = 0, the slope a scaling fit is compared against."""
        return _HOMOGENEITY[self.tag][0]

    @property
    def homogeneity(self) -> float:
        base, multiple = _HOMOGENEITY[self.tag]
        return base - multiple * self.kappa


@dataclass(frozen=True)
class TestFunction:
    """
    φ^λ_z(t, x) = λ^{-(d+2)}·η(λ^{-2}(t - t̄))·ϑ(λ^{-1}(x - x̄)).

    η is a bump supported in |s| < 1/4 and ϑ a radial bump supported in
    |y| < 1/2, so φ^λ_z lives in a parabolic ball of radius λ/2 around z.
    Spatial distances are taken on the unit torus.
    """

    __test__ = False

    lam: float = 1.0
    center_t: float = 0.5
    center_x: Tuple[float, ...] = (0.0, 0.0, 0.0)
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.lam <= 1.0:
            raise ConfigurationError(f"test-function scale must lie in (0, 1], got {self.lam}")

    @property
    def d(self) -> int:
        return len(self.center_x)

    @property
    def center(self) -> Tuple[float, Tuple[float, ...]]:
        return self.center_t, self.center_x

    @property
    def time_support(self) -> Tuple[float, float]:
        half = TIME_HALF_WIDTH * self.lam ** 2
        return self.center_t - half, self.center_t + half

    def __call__(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        diff = xs - np.asarray(self.center_x, dtype=float)
        diff = diff - np.floor(diff + 0.5)
        s = (ts - self.center_t) / self.lam ** 2
        y = np.linalg.norm(diff, axis=-1) / self.lam
        return (self.amplitude * self.lam ** (-(self.d + 2))
                * bump(np.abs(s) / TIME_HALF_WIDTH) * bump(y / SPACE_RADIUS))

    def mass(self) -> float:
        """∫φ^λ_z by quadrature in the scaled variables; independent of λ and z."""
        lo, hi = self.time_support
        time_part, _ = integrate.quad(
            lambda t: float(bump(np.array(abs(t - self.center_t) / (TIME_HALF_WIDTH * self.lam ** 2))))
            / self.lam ** 2, lo, hi, epsabs=1e-13, epsrel=1e-11)
        sphere = 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)
        radial, _ = integrate.quad(
            lambda r: float(bump(np.array(r / (SPACE_RADIUS * self.lam)))) * r ** (self.d - 1)
            / self.lam ** self.d, 0.0, SPACE_RADIUS * self.lam, epsabs=1e-13, epsrel=1e-11)
        return self.amplitude * time_part * sphere * radial


@dataclass(frozen=True)
class LinearCombination:
    """Σ_i c_i φ_i; the base point is that of the first term."""

    coefficients: Tuple[float, ...]
    terms: Tuple[TestFunction, ...]

    @property
    def center(self) -> Tuple[float, Tuple[float, ...]]:
        return self.terms[0].center

    @property
    def time_support(self) -> Tuple[float, float]:
        supports = [term.time_support for term in self.terms]
        return min(s[0] for s in supports), max(s[1] for s in supports)

    def __call__(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        return sum(c * term(ts, xs) for c, term in zip(self.coefficients, self.terms))


def combine(coefficients: Sequence[float], terms: Sequence[TestFunction]) -> LinearCombination:
    if len(coefficients) != len(terms) or not terms:
        raise ContractError("a linear combination needs one coefficient per test function")
    return LinearCombination(tuple(float(c) for c in coefficients), tuple(terms))


@dataclass(frozen=True)
class PsiField:
    """Ψ on the rows n0, n0+1, ... of the kernel time grid, shape (rows,) + lattice shape."""

    values: np.ndarray
    n0: int
    h: float
    lattice: LatticeSpec

    @property
    def times(self) -> np.ndarray:
        return (self.n0 + np.arange(self.values.shape[0])) * self.h

    def rows(self, n_lo: int, n_hi: int) -> np.ndarray:
        if n_lo < self.n0 or n_hi >= self.n0 + self.values.shape[0]:
            raise DomainError(
                f"rows {n_lo}..{n_hi} outside the evaluated field "
                f"{self.n0}..{self.n0 + self.values.shape[0] - 1}"
            )
        return self.values[n_lo - self.n0:n_hi - self.n0 + 1]

    def at(self, t: float) -> np.ndarray:
        """Spatial slice at time t, linear in time between rows."""
        position = t / self.h - self.n0
        j = int(math.floor(position + 1e-9))
        theta = max(position - j, 0.0)
        if j < 0 or j >= self.values.shape[0] or (theta > 0.0 and j + 1 >= self.values.shape[0]):
            raise DomainError(f"time {t} outside the evaluated field [{self.times[0]}, {self.times[-1]}]")
        out = (1.0 - theta) * self.values[j]
        if theta > 0.0:
            out = out + theta * self.values[j + 1]
        return out

    def __call__(self, t: float, x) -> float:
        return float(self.at(t).reshape(-1)[self.lattice.site_index(x)])


def _check_grid(grid: KernelGrid, lattice: LatticeSpec) -> None:
    if not grid.periodic:
        raise ContractError("model fields need a periodic kernel grid")
    if grid.spatial_shape != lattice.shape or not math.isclose(grid.eps, lattice.eps):
        raise ContractError(
            f"kernel grid {grid.spatial_shape} at eps={grid.eps} does not match the lattice "
            f"{lattice.shape} at eps={lattice.eps}"
        )


def _guard(rows: int, lattice: LatticeSpec, what: str) -> None:
    if rows * lattice.site_count > MODEL_BUDGET:
        raise GuardError(f"{what} needs {rows * lattice.site_count} grid values, "
                         f"over the budget of {MODEL_BUDGET}")


def deposit_noise(path: MartingalePathSet, h: float, b_lo: int, b_hi: int) -> np.ndarray:
    """
    The measure d𝐌_ε binned on the rows b_lo..b_hi of a time grid of step h.

    A jump Δ at time s = (j + θ)h adds (1 - θ)Δ to row j and θΔ to row j + 1;
    the compensator adds -drift·h to every row. Pairing the result with the
    row values of a function integrates its piecewise-linear interpolant
    against d𝕄 exactly.
    """
    lattice = path.lattice
    if path.start > (b_lo - 1) * h + 1e-12 or (b_hi + 1) * h > path.horizon + 1e-12:
        raise DomainError(
            f"binning rows {b_lo}..{b_hi} needs noise on [{(b_lo - 1) * h:.4g}, "
            f"{(b_hi + 1) * h:.4g}], the path covers [{path.start:.4g}, {path.horizon:.4g}]"
        )
    rows = b_hi - b_lo + 1
    _guard(rows, lattice, "noise binning")
    out = np.zeros((rows + 2, lattice.site_count))
    position = path.times / h
    j = np.floor(position).astype(np.int64)
    theta = position - j
    keep = (j >= b_lo - 1) & (j <= b_hi)
    index = j[keep] - (b_lo - 1)
    increments = path.increments[keep]
    np.add.at(out, (index, path.sites[keep]), (1.0 - theta[keep]) * increments)
    np.add.at(out, (index + 1, path.sites[keep]), theta[keep] * increments)
    values = out[1:-1]
    if path.drift != 0.0:
        values = values - path.drift * h
    return values.reshape((rows,) + lattice.shape)


def _convolve_rows(values: np.ndarray, kernel: np.ndarray, eps: float, d: int) -> np.ndarray:
    """ε^d Σ_y Σ_j kernel[q - j, x - y]·values[j, y], full in time, circular in space."""
    axes = tuple(range(1, d + 1))
    shape = values.shape[1:]
    left = sp_fft.rfftn(values, axes=axes)
    right = sp_fft.rfftn(kernel, axes=axes)
    product = signal.fftconvolve(left, right, mode='full', axes=0)
    return eps ** d * sp_fft.irfftn(product, s=shape, axes=axes)


def _interpolant_l2(rows: np.ndarray, eps: float, d: int, h: float) -> float:
    """ε^d Σ_x ∫ f² dt for the piecewise-linear interpolant of the rows, zero outside."""
    flat = rows.reshape(rows.shape[0], -1)
    zeros = np.zeros((1, flat.shape[1]))
    v = np.concatenate([zeros, flat, zeros])
    a, b = v[:-1], v[1:]
    return eps ** d * h / 3.0 * float(np.sum(a * a + a * b + b * b))


def _support_rows(phi, h: float) -> Tuple[int, int]:
    support = getattr(phi, 'time_support', None)
    if support is None:
        raise ContractError("test functions must declare a time_support")
    return int(math.floor(support[0] / h)), int(math.ceil(support[1] / h))


def _phi_rows(phi, lattice: LatticeSpec, n_lo: int, n_hi: int, h: float) -> np.ndarray:
    rows = n_hi - n_lo + 1
    _guard(rows, lattice, "test-function sampling")
    times = (n_lo + np.arange(rows)) * h
    coords = lattice.coordinates()
    values = phi(np.repeat(times, lattice.site_count), np.tile(coords, (rows, 1)))
    return np.asarray(values, dtype=float).reshape((rows,) + lattice.shape)


def _pair(rows: np.ndarray, phi_rows: np.ndarray, eps: float, d: int, h: float) -> float:
    """ε^d h Σ_n Σ_x φ(t_n, x)·F(t_n, x)."""
    return eps ** d * h * float(np.sum(rows * phi_rows))


def _center_site(phi, lattice: LatticeSpec) -> Tuple[float, int]:
    center = getattr(phi, 'center', None)
    if center is None:
        raise ContractError("this pairing needs a test function with a base point")
    t, x = center
    multi = np.rint(np.asarray(x, dtype=float) / lattice.eps).astype(np.int64)
    return float(t), lattice.site_index(multi)


def psi_field(path: MartingalePathSet, grid: KernelGrid,
              window: Optional[Tuple[float, float]] = None) -> PsiField:
    """
    Ψ(t̄, x̄) = ∫ K^𝔢(t̄ - s, x̄ - y) d𝐌_ε(s, y) on the kernel time grid.

    Args:
        path: Martingale path, extended to negative times so that Ψ has its past
        grid: Periodic K^𝔢 grid on the path's lattice
        window: Time window (default: every row the path fully determines)

    Returns:
        PsiField on the rows inside the window
    """
    lattice = path.lattice
    _check_grid(grid, lattice)
    h = grid.h
    k_lo, k_hi = grid.t0, grid.t0 + grid.nt - 1
    if window is None:
        window = (path.start + (k_hi + 2) * h, path.horizon + (k_lo - 2) * h)
    n_lo = int(math.ceil(window[0] / h - 1e-9))
    n_hi = int(math.floor(window[1] / h + 1e-9))
    if n_hi < n_lo:
        raise DomainError(f"empty field window {window}")
    b_lo, b_hi = n_lo - k_hi, n_hi - k_lo
    binned = deposit_noise(path, h, b_lo, b_hi)
    _guard(binned.shape[0] + grid.nt, lattice, "field convolution")
    full = _convolve_rows(binned, grid.values, lattice.eps, lattice.d)
    start = grid.nt - 1
    values = full[start:start + n_hi - n_lo + 1]
    return PsiField(np.ascontiguousarray(values), n_lo, h, lattice)


def _adjoint_rows(phi, lattice: LatticeSpec, grid: KernelGrid) -> Tuple[np.ndarray, int]:
    """G(s, y) = ∫ φ(z̄)·K(z̄ - (s, y)) dz̄ on the grid rows, with the first row index."""
    h = grid.h
    n_lo, n_hi = _support_rows(phi, h)
    phi_rows = _phi_rows(phi, lattice, n_lo, n_hi, h)
    flipped = grid.flipped()
    rows = h * _convolve_rows(phi_rows, flipped.values, lattice.eps, lattice.d)
    return rows, n_lo + flipped.t0


def pi_xi(path: MartingalePathSet, phi, scale: float, h: float) -> float:
    """
    ι_ε(Π̂^ε_z Ξ)(φ) = ∫ (φ ⋆_ε ψ_𝔢) d𝐌_ε.

    The smoothed test function is sampled on a time grid of step h and
    integrated in its piecewise-linear interpolant.
    """
    lattice = path.lattice
    n_lo, n_hi = _support_rows(phi, h)
    smoothed = periodic_convolve(_phi_rows(phi, lattice, n_lo, n_hi, h),
                                 mollifier_weights(lattice.eps, lattice.d, scale, periodic=True),
                                 lattice.eps, lattice.d)
    binned = deposit_noise(path, h, n_lo, n_hi)
    return lattice.eps ** lattice.d * float(np.sum(smoothed * binned))


def xi_pairing_variance(lattice: LatticeSpec, spec: MartingaleSpec, phi, scale: float,
                        h: float) -> float:
    """Exact Var pi_xi = C·ε^d Σ_y ∫ (φ ⋆_ε ψ_𝔢)² ds."""
    n_lo, n_hi = _support_rows(phi, h)
    smoothed = periodic_convolve(_phi_rows(phi, lattice, n_lo, n_hi, h),
                                 mollifier_weights(lattice.eps, lattice.d, scale, periodic=True),
                                 lattice.eps, lattice.d)
    return spec.bracket_density * _interpolant_l2(smoothed, lattice.eps, lattice.d, h)


def pi_psi(path: MartingalePathSet, phi, grid: KernelGrid) -> float:
    """ι_ε(Π̂^ε_z Ψ)(φ) by the grid quadrature ε^d h Σ φ·Ψ."""
    lattice = path.lattice
    n_lo, n_hi = _support_rows(phi, grid.h)
    field = psi_field(path, grid, (n_lo * grid.h, n_hi * grid.h))
    return _pair(field.values, _phi_rows(phi, lattice, n_lo, n_hi, grid.h),
                 lattice.eps, lattice.d, grid.h)


def psi_pairing_variance(lattice: LatticeSpec, spec: MartingaleSpec, phi,
                         grid: KernelGrid) -> float:
    """Exact Var pi_psi = C·ε^d Σ_y ∫ G(s, y)² ds with G = φ paired against K^𝔢(· - (s, y))."""
    _check_grid(grid, lattice)
    rows, _ = _adjoint_rows(phi, lattice, grid)
    return spec.bracket_density * _interpolant_l2(rows, lattice.eps, lattice.d, grid.h)


def pi_psi2(path: MartingalePathSet, phi, grid: KernelGrid, C1: float,
            renormalize: bool = True) -> float:
    """
    ι_ε(Π̂^ε_z Ψ²)(φ) = ∫ φ·(Ψ² - C₁).

    With ``renormalize=False`` the constant is not subtracted, which exposes
    the divergent mean.
    """
    lattice = path.lattice
    n_lo, n_hi = _support_rows(phi, grid.h)
    field = psi_field(path, grid, (n_lo * grid.h, n_hi * grid.h))
    square = field.values ** 2
    if renormalize:
        square = square - C1
    return _pair(square, _phi_rows(phi, lattice, n_lo, n_hi, grid.h),
                 lattice.eps, lattice.d, grid.h)


def ipsi3psi2_integrand(path: MartingalePathSet, phi, grid: KernelGrid, raw: KernelGrid,
                        C2: float) -> PsiField:
    """
    Ψ(z̄)²·∫(K^ε(z̄ - z̃) - K^ε(z - z̃))Ψ(z̃)³dz̃ - 3C₂Ψ(z̄) on the rows of φ's support.

    The inner integral is G(z̄) - G(z) with G = K^ε ⋆ Ψ³ computed by the grid
    quadrature; z is the base point of φ, rounded to the lattice.
    """
    lattice = path.lattice
    _check_grid(grid, lattice)
    _check_grid(raw, lattice)
    if not math.isclose(raw.h, grid.h):
        raise ContractError("K^ε and K^𝔢 grids must share the time step")
    h = grid.h
    n_lo, n_hi = _support_rows(phi, h)
    t_base, site = _center_site(phi, lattice)
    c = int(math.floor(t_base / h + 1e-9))
    g_lo, g_hi = min(n_lo, c), max(n_hi, c + 1)
    r_lo, r_hi = raw.t0, raw.t0 + raw.nt - 1
    m_lo, m_hi = g_lo - r_hi, g_hi - r_lo
    field = psi_field(path, grid, (m_lo * h, m_hi * h))
    _guard(field.values.shape[0] + raw.nt, lattice, "inner convolution")
    full = h * _convolve_rows(field.values ** 3, raw.values, lattice.eps, lattice.d)
    inner = PsiField(np.ascontiguousarray(full[raw.nt - 1:raw.nt - 1 + g_hi - g_lo + 1]),
                     g_lo, h, lattice)
    base = float(inner.at(t_base).reshape(-1)[site])
    psi = field.rows(n_lo, n_hi)
    values = psi ** 2 * (inner.rows(n_lo, n_hi) - base) - 3.0 * C2 * psi
    return PsiField(values, n_lo, h, lattice)


def pi_ipsi3psi2(path: MartingalePathSet, phi, grid: KernelGrid, raw: KernelGrid,
                 C2: float) -> float:
    """ι_ε(Π̂^ε_z 𝓘(Ψ³)Ψ²)(φ)."""
    lattice = path.lattice
    integrand = ipsi3psi2_integrand(path, phi, grid, raw, C2)
    n_lo = integrand.n0
    n_hi = n_lo + integrand.values.shape[0] - 1
    return _pair(integrand.values, _phi_rows(phi, lattice, n_lo, n_hi, grid.h),
                 lattice.eps, lattice.d, grid.h)


def cherry_moment(path: MartingalePathSet, phi, grid: KernelGrid) -> float:
    """
    Fully contracted part of the Ψ² pairing, ε^{d+𝐤}·ε^d Σ_y ∫ G₂(s, y) d𝕄̄_ε(s, y).

    G₂ pairs φ with (K^𝔢)²; 𝕄̄_ε is the renormalised bracket martingale.
    """
    lattice = path.lattice
    _check_grid(grid, lattice)
    rows, b_lo = _adjoint_rows(phi, lattice, grid.with_values(grid.values ** 2))
    binned = deposit_noise(renormalized_path(path), grid.h, b_lo, b_lo + rows.shape[0] - 1)
    prefactor = lattice.eps ** (lattice.d + path.spec.k)
    return prefactor * lattice.eps ** lattice.d * float(np.sum(rows * binned))


def cherry_variance(lattice: LatticeSpec, spec: MartingaleSpec, phi, grid: KernelGrid) -> float:
    """Exact Var cherry_moment = ε^{2(d+𝐤)}·c²C·ε^d Σ_y ∫ G₂²."""
    _check_grid(grid, lattice)
    rows, _ = _adjoint_rows(phi, lattice, grid.with_values(grid.values ** 2))
    prefactor = lattice.eps ** (2 * (lattice.d + spec.k))
    return prefactor * spec.renormalized().bracket_density * \
        _interpolant_l2(rows, lattice.eps, lattice.d, grid.h)


@dataclass(frozen=True)
class ModelContext:
    """Everything the pairings need at one ε: lattice, noise law, kernel grids and constants."""

    lattice: LatticeSpec
    spec: MartingaleSpec
    scale: float
    grid: KernelGrid
    raw: KernelGrid
    c1: float
    c2: float
    past_horizon: float = 2.0

    @classmethod
    def build(cls, eps: float, alpha: float = 0.75, cutoff: Optional[CutoffFunction] = None,
              time_step_factor: float = 0.25, horizon: float = 1.0, past_horizon: float = 2.0,
              spec: Optional[MartingaleSpec] = None, with_c2: bool = True) -> 'ModelContext':
        """
        Build K^ε and K^𝔢 on the torus and their renormalisation constants.

        C₁ and C₂ are scaled by the bracket density C (and C²) so that they
        centre the fields of the given noise law.
        """
        lattice = LatticeSpec(3, eps, horizon)
        spec = spec or MartingaleSpec.phi43(lattice)
        spec.check(lattice)
        scale = SmoothedFieldSpec(alpha).scale(eps)
        h = time_step_factor * eps ** 2
        K, _ = build_singular_kernel(scale, cutoff or CutoffFunction(), mesh=eps)
        raw = sample_kernel(K, eps, h, periodic=True)
        grid = discrete_convolve(raw, mollifier_weights(eps, 3, scale, periodic=True))
        c1 = renorm_constant_C1(grid)[0] * spec.bracket_density
        c2 = renorm_constant_C2(grid)[0] * spec.bracket_density ** 2 if with_c2 else 0.0
        logger.info(f"Model context eps={eps:g}: scale={scale:.4g}, C1={c1:.6g}, C2={c2:.6g}")
        return cls(lattice, spec, scale, grid, raw, c1, c2, past_horizon)

    @property
    def h(self) -> float:
        return self.grid.h

    def test_function(self, lam: float, center_t: float = 0.5) -> TestFunction:
        return TestFunction(lam=lam, center_t=center_t, center_x=(0.0,) * self.lattice.d)

    def sample(self, seed: int) -> MartingalePathSet:
        """A path on [-past_horizon, T]."""
        return extend_in_time(sample_paths(self.lattice, self.spec, seed), self.past_horizon)

    def pairing(self, symbol: str, path: MartingalePathSet, phi) -> float:
        if symbol == XI:
            return pi_xi(path, phi, self.scale, self.h)
        if symbol == PSI:
            return pi_psi(path, phi, self.grid)
        if symbol == PSI2:
            return pi_psi2(path, phi, self.grid, self.c1)
        if symbol == IPSI3PSI2:
            return pi_ipsi3psi2(path, phi, self.grid, self.raw, self.c2)
        raise ConfigurationError(f"unknown symbol {symbol!r}; expected one of {SYMBOLS}")

    def pairings(self, path: MartingalePathSet, symbols: Sequence[str],
                 lams: Sequence[float]) -> Dict[Tuple[str, float], float]:
        return {(symbol, lam): self.pairing(symbol, path, self.test_function(lam))
                for symbol in symbols for lam in lams}

    def variance(self, symbol: str, phi) -> Optional[float]:
        """Exact pairing variance where a closed form exists (Ξ and Ψ), otherwise None."""
        if symbol == XI:
            return xi_pairing_variance(self.lattice, self.spec, phi, self.scale, self.h)
        if symbol == PSI:
            return psi_pairing_variance(self.lattice, self.spec, phi, self.grid)
        return None
