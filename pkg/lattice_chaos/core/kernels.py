"""
Singular space-time kernels on the parabolic scale.

The central object is the smoothed heat kernel P^ε = P * ψ̃_𝔢 and its split
P^ε = K^ε + R^ε by a smooth cutoff χ in the parabolic norm. Kernels exist in
two forms: a continuous ``Kernel`` (vectorised evaluator, used for norms,
dyadic levels and positive renormalisation) and a sampled ``KernelGrid`` on
the lattice-time grid (used for convolutions, renormalisation constants and
the chain kernel).

Key Design Principles:
1. Radial profiles: every kernel built here is radial in space, so sampling
   evaluates each distinct |x| only once.
2. Exact time integrals: the time dependence of a sampled kernel is its
   piecewise-linear interpolant, and squares are integrated exactly.
3. Budgets in elements: grids and correlations that would exceed
   GRID_BUDGET raise GuardError instead of exhausting memory.
"""

import itertools
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import signal
from scipy.interpolate import RegularGridInterpolator

from ..utils.errors import ConfigurationError, ContractError, GuardError, PersistenceError
from ..utils.logging import get_logger
from .noise import LatticeSpec, bump, lattice_mollifier, mollifier_mass, scaled_mollifier

logger = get_logger(__name__)

GRID_BUDGET = 20_000_000
PROFILE_CHUNK = 2000
SPACE_NODES = 48
TIME_NODES = 32

# Evaluator K(ts of shape (K,), xs of shape (K, d)) -> (K,)
KernelEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
# Radial profile k(ts, rs) -> values, same shapes
RadialProfile = Callable[[np.ndarray, np.ndarray], np.ndarray]
# Two-point test function eta(t1, x1, t2, x2) -> (K,)
TwoPointFunction = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParabolicGeometry:
    """ℝ × ℝ^d with scaling 𝔰 = (2, 1, ..., 1)."""

    d: int = 3

    @property
    def scaling_dimension(self) -> int:
        return self.d + 2

    def norm(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return parabolic_norm(t, x)

    def dilate(self, t: np.ndarray, x: np.ndarray, lam: float) -> Tuple[np.ndarray, np.ndarray]:
        """λ^𝔰 z = (λ²t, λx)."""
        return lam ** 2 * np.asarray(t, dtype=float), lam * np.asarray(x, dtype=float)


def parabolic_norm(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """∥z∥_𝔰 = |t|^{1/2} + |x|; x has shape (..., d)."""
    return np.sqrt(np.abs(np.asarray(t, dtype=float))) + np.linalg.norm(
        np.asarray(x, dtype=float), axis=-1)


def multiindex_weight(k: Sequence[int]) -> int:
    """|k|_𝔰 = 2k₀ + Σ kᵢ."""
    if len(k) == 0:
        return 0
    return 2 * int(k[0]) + sum(int(v) for v in k[1:])


def heat_kernel(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(4πt)^{-d/2}·exp(-|x|²/(4t)) for t > 0, zero for t ≤ 0; x has shape (..., d)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x ** 2, axis=-1)
    out = np.zeros(np.broadcast(t, r2).shape)
    positive = np.broadcast_to(t > 0.0, out.shape)
    tp = np.broadcast_to(t, out.shape)[positive]
    out[positive] = (4.0 * math.pi * tp) ** (-d / 2.0) * np.exp(
        -np.broadcast_to(r2, out.shape)[positive] / (4.0 * tp))
    return out


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C^∞ step: 1 for s ≤ 0, 0 for s ≥ 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 0.0, 1.0, 0.0)
    inside = (s > 0.0) & (s < 1.0)
    u = s[inside]
    left = np.exp(-1.0 / (1.0 - u))
    right = np.exp(-1.0 / u)
    out[inside] = left / (left + right)
    return out


def dyadic_profile(u: np.ndarray) -> np.ndarray:
    """φ with φ = 1 on [0, 1] and φ = 0 on [2, ∞)."""
    return smooth_step(np.asarray(u, dtype=float) - 1.0)


@dataclass(frozen=True)
class CutoffFunction:
    """χ(z) = 1 for ∥z∥_𝔰 ≤ inner, 0 for ∥z∥_𝔰 ≥ outer, smooth in between."""

    inner: float = 0.5
    outer: float = 1.0

    def __post_init__(self) -> None:
        if not 0.5 <= self.inner < self.outer <= 1.0:
            raise ConfigurationError(
                "cutoff must equal 1 on ∥z∥ ≤ 1/2 and vanish outside ∥z∥ ≤ 1: "
                f"need 1/2 <= inner < outer <= 1, got inner={self.inner}, outer={self.outer}"
            )

    def __call__(self, norm: np.ndarray) -> np.ndarray:
        return smooth_step((np.asarray(norm, dtype=float) - self.inner) / (self.outer - self.inner))


@dataclass(frozen=True)
class Kernel:
    """
    A space-time kernel with its power-counting labels.

    Attributes:
        evaluator: Vectorised K(ts, xs)
        a: Singularity order a_e
        r: Renormalisation order r_e
        support_radius: K vanishes for ∥z∥_𝔰 beyond this radius
        scale: Regularisation scale 𝔢
        mesh: Lattice mesh ε (finite-difference step)
        d: Spatial dimension
        profile: Radial profile k(t, |x|) when the kernel is radial in space
        name: Label for reports
    """

    evaluator: KernelEvaluator
    a: float
    r: int
    support_radius: float
    scale: float
    mesh: float
    d: int = 3
    profile: Optional[RadialProfile] = None
    name: str = 'K'

    def __call__(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        x = np.asarray(x, dtype=float).reshape(t.size, self.d)
        return np.asarray(self.evaluator(t, x), dtype=float)

    def rescaled(self, lam: float) -> 'Kernel':
        """K_λ(z) = λ^a·K(λ^𝔰 z), with radius, scale and mesh divided by λ."""
        base, a = self.evaluator, self.a
        profile = None
        if self.profile is not None:
            base_profile = self.profile
            profile = lambda t, r: lam ** a * base_profile(lam ** 2 * t, lam * r)  # noqa: E731
        return replace(
            self,
            evaluator=lambda t, x: lam ** a * base(lam ** 2 * t, lam * x),
            support_radius=self.support_radius / lam,
            scale=self.scale / lam,
            mesh=self.mesh / lam,
            profile=profile,
            name=f"{self.name}_λ",
        )


def radial_kernel(profile: RadialProfile, a: float, r: int, support_radius: float,
                  scale: float, mesh: float, d: int = 3, name: str = 'K') -> Kernel:
    """Kernel whose value depends on (t, |x|) only."""
    def evaluator(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return profile(t, np.linalg.norm(x, axis=-1))
    return Kernel(evaluator, a, r, support_radius, scale, mesh, d, profile, name)


def _space_smoothed_heat(s: np.ndarray, r: np.ndarray, scale: float) -> np.ndarray:
    """
    (P(s, ·) * ψ_𝔢)(x) for |x| = r in d = 3, s > 0.

    Uses the radial reduction
        (4πs)^{-3/2}(4πs/r)∫ρ f(ρ) e^{-(r-ρ)²/4s}(1 - e^{-rρ/s}) dρ
    with Gauss-Legendre nodes on the window where the Gaussian is non-negligible.
    """
    nodes, weights = np.polynomial.legendre.leggauss(SPACE_NODES)
    sqrt_s = np.sqrt(s)
    out = np.empty_like(s)

    tiny = sqrt_s < 1e-4 * scale
    if np.any(tiny):
        out[tiny] = _profile_mollifier(r[tiny], scale)
    rest = ~tiny
    if not np.any(rest):
        return out

    s_r, r_r, root = s[rest], r[rest], sqrt_s[rest]
    lo = np.maximum(0.0, r_r - 10.0 * root)
    hi = np.minimum(scale, r_r + 10.0 * root)
    width = np.maximum(hi - lo, 0.0)
    rho = lo[:, None] + width[:, None] * (nodes[None, :] + 1.0) / 2.0
    w = width[:, None] / 2.0 * weights[None, :]
    f = _profile_mollifier(rho, scale)
    gauss = np.exp(-(r_r[:, None] - rho) ** 2 / (4.0 * s_r[:, None]))
    prefactor = (4.0 * math.pi * s_r) ** (-1.5)

    small_r = r_r < 1e-12
    values = np.empty_like(s_r)
    if np.any(~small_r):
        rr = r_r[~small_r, None]
        ss = s_r[~small_r, None]
        kernel = rho[~small_r] * f[~small_r] * gauss[~small_r] * (-np.expm1(-rr * rho[~small_r] / ss))
        values[~small_r] = prefactor[~small_r] * (4.0 * math.pi * s_r[~small_r] / r_r[~small_r]) * \
            np.sum(w[~small_r] * kernel, axis=1)
    if np.any(small_r):
        kernel = rho[small_r] ** 2 * f[small_r] * gauss[small_r]
        values[small_r] = prefactor[small_r] * 4.0 * math.pi * \
            np.sum(w[small_r] * kernel, axis=1)
    values[width == 0.0] = 0.0
    out[rest] = values
    return out


def _profile_mollifier(r: np.ndarray, scale: float) -> np.ndarray:
    """Radial profile of ψ_𝔢 in d = 3."""
    return bump(np.asarray(r, dtype=float) / scale) / (mollifier_mass(3) * scale ** 3)


def _time_mollifier(tau: np.ndarray, scale: float) -> np.ndarray:
    """ρ_𝔢(τ) = 𝔢^{-2}ρ(τ/𝔢²) for the unit-mass bump ρ on (-1, 1)."""
    return bump(np.abs(np.asarray(tau, dtype=float)) / scale ** 2) / (mollifier_mass(1) * scale ** 2)


def smoothed_heat_profile(t: np.ndarray, r: np.ndarray, scale: float) -> np.ndarray:
    """
    P^ε(t, x) = (P * ψ̃_𝔢)(t, x) for |x| = r, with ψ̃_𝔢(t, x) = ρ_𝔢(t)ψ_𝔢(x).

    The time convolution runs over τ ∈ [-𝔢², min(𝔢², t)] with Gauss-Legendre
    nodes; it vanishes for t ≤ -𝔢².

    Args:
        t: Times, any shape
        r: Spatial radii, broadcastable to t
        scale: Smoothing scale 𝔢

    Returns:
        Array of P^ε values with the broadcast shape
    """
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    shape = t.shape
    t, r = t.reshape(-1), r.reshape(-1)
    out = np.zeros(t.size)
    nodes, weights = np.polynomial.legendre.leggauss(TIME_NODES)
    lower = -scale ** 2
    active = np.flatnonzero(t > lower)
    for start in range(0, active.size, PROFILE_CHUNK):
        index = active[start:start + PROFILE_CHUNK]
        tt, rr = t[index], r[index]
        upper = np.minimum(scale ** 2, tt)
        half = (upper - lower) / 2.0
        tau = lower + half[:, None] * (nodes[None, :] + 1.0)
        s = tt[:, None] - tau
        s = np.maximum(s, 1e-300)
        q = _space_smoothed_heat(s.reshape(-1), np.repeat(rr, TIME_NODES), scale)
        integrand = _time_mollifier(tau, scale) * q.reshape(tau.shape)
        out[index] = half * np.sum(weights[None, :] * integrand, axis=1)
    return out.reshape(shape)


def build_singular_kernel(scale: float, cutoff: CutoffFunction, mesh: float,
                          d: int = 3) -> Tuple[Kernel, Kernel]:
    """
    Split P^ε = K^ε + R^ε with K^ε = χ·P^ε and R^ε = (1 - χ)·P^ε.

    Args:
        scale: Smoothing scale 𝔢
        cutoff: χ, equal to 1 near the origin and vanishing outside the unit ball
        mesh: Lattice mesh ε (finite-difference step of derived norms)
        d: Spatial dimension (the heat profile is three-dimensional)

    Returns:
        (K^ε with a_e = 3, r_e = 0, support radius cutoff.outer; R^ε with a_e = 0)
    """
    if d != 3:
        raise ConfigurationError(f"the smoothed heat kernel is implemented for d = 3, got {d}")

    def singular(t: np.ndarray, r: np.ndarray) -> np.ndarray:
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        norm = np.sqrt(np.abs(t)) + r
        weight = cutoff(norm)
        out = np.zeros(t.shape)
        inside = weight > 0.0
        out[inside] = weight[inside] * smoothed_heat_profile(t[inside], r[inside], scale)
        return out

    def remainder(t: np.ndarray, r: np.ndarray) -> np.ndarray:
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        return (1.0 - cutoff(np.sqrt(np.abs(t)) + r)) * smoothed_heat_profile(t, r, scale)

    K = radial_kernel(singular, a=3.0, r=0, support_radius=cutoff.outer, scale=scale,
                      mesh=mesh, d=d, name='K^ε')
    R = radial_kernel(remainder, a=0.0, r=0, support_radius=math.inf, scale=scale,
                      mesh=mesh, d=d, name='R^ε')
    return K, R


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """
    A kernel sampled on hℤ × εℤ^d.

    Row j holds the time (t0 + j)·h. Periodic grids live on the torus
    (εℤ/ℤ)^d in FFT layout (index i is the offset i·ε mod 1); free grids hold
    the offsets -M..M along every axis, centre index M.
    """

    values: np.ndarray
    eps: float
    h: float
    t0: int
    periodic: bool
    scale: float
    a: float = 3.0
    r: int = 0

    def __post_init__(self) -> None:
        self.values.setflags(write=False)

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def nt(self) -> int:
        return int(self.values.shape[0])

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape[1:])

    @property
    def times(self) -> np.ndarray:
        return (self.t0 + np.arange(self.nt)) * self.h

    @property
    def half_width(self) -> int:
        """M of a free grid."""
        return (self.values.shape[1] - 1) // 2

    def offset_indices(self) -> np.ndarray:
        """Integer spatial offsets of every grid cell, shape spatial_shape + (d,)."""
        side = self.values.shape[1]
        if self.periodic:
            axis = np.arange(side)
            axis = np.where(axis >= (side + 1) // 2, axis - side, axis)
        else:
            axis = np.arange(side) - self.half_width
        return np.stack(np.meshgrid(*([axis] * self.d), indexing='ij'), axis=-1)

    def offsets(self) -> np.ndarray:
        return self.eps * self.offset_indices().astype(float)

    def with_values(self, values: np.ndarray, t0: Optional[int] = None, a: Optional[float] = None,
                    r: Optional[int] = None) -> 'KernelGrid':
        return KernelGrid(np.ascontiguousarray(values), self.eps, self.h,
                          self.t0 if t0 is None else t0, self.periodic, self.scale,
                          self.a if a is None else a, self.r if r is None else r)

    def padded(self) -> 'KernelGrid':
        """One zero row before and after."""
        zeros = np.zeros((1,) + self.spatial_shape)
        return self.with_values(np.concatenate([zeros, self.values, zeros]), t0=self.t0 - 1)

    def coarsened(self) -> 'KernelGrid':
        """Every other row (even global time index), step 2h."""
        padded = self.padded()
        first = padded.t0 % 2
        values = padded.values[first::2]
        return KernelGrid(np.ascontiguousarray(values), self.eps, 2.0 * self.h,
                          (padded.t0 + first) // 2, self.periodic, self.scale, self.a, self.r)

    def flipped(self) -> 'KernelGrid':
        """G(z) = K(-z)."""
        values = self.values[::-1]
        if self.periodic:
            for axis in range(1, self.d + 1):
                values = np.roll(np.flip(values, axis=axis), 1, axis=axis)
        else:
            values = np.flip(values, axis=tuple(range(1, self.d + 1)))
        return self.with_values(values, t0=-(self.t0 + self.nt - 1))

    def spatial_mass(self) -> np.ndarray:
        """ε^d Σ_x K(t_j, x) per row."""
        return self.eps ** self.d * self.values.reshape(self.nt, -1).sum(axis=1)

    def row_at(self, t: float) -> np.ndarray:
        """Spatial slice at time t by linear interpolation in time (zero outside)."""
        position = t / self.h - self.t0
        j = int(math.floor(position))
        theta = position - j
        out = np.zeros(self.spatial_shape)
        if 0 <= j < self.nt:
            out += (1.0 - theta) * self.values[j]
        if 0 <= j + 1 < self.nt and theta > 0.0:
            out += theta * self.values[j + 1]
        return out


def _check_budget(elements: int, what: str) -> None:
    if elements > GRID_BUDGET:
        raise GuardError(
            f"{what} needs {elements} grid elements, over the budget of {GRID_BUDGET}; "
            "use a periodic grid, a coarser time step or a larger mesh"
        )


def _time_rows(support_radius: float, scale: float, h: float) -> Tuple[int, int]:
    """First and last row index covering t ∈ [-𝔢², R²]."""
    return int(math.floor(-scale ** 2 / h)), int(math.ceil(support_radius ** 2 / h))


def sample_kernel(kernel: Kernel, eps: float, h: float, periodic: bool) -> KernelGrid:
    """
    Sample a compactly supported radial kernel on the lattice-time grid.

    Periodic grids store the periodisation Σ_n K(t, x + n) over the images
    n ∈ {-1, 0, 1}^d, which covers every support radius ≤ 1.
    """
    if kernel.profile is None:
        raise ContractError("sampling needs a radial kernel profile")
    radius = kernel.support_radius
    if not math.isfinite(radius):
        raise ContractError(f"kernel {kernel.name} has no compact support to sample")
    d = kernel.d
    side = int(round(1.0 / eps))
    j_lo, j_hi = _time_rows(radius, kernel.scale, h)
    times = np.arange(j_lo, j_hi + 1) * h
    limit = (radius / eps) ** 2 + 1e-9

    if periodic:
        if radius > 1.0:
            raise ContractError("periodic sampling covers support radii up to 1")
        axis = np.arange(side)
        axis = np.where(axis >= (side + 1) // 2, axis - side, axis)
        base = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        images = [np.asarray(n) * side for n in itertools.product((-1, 0, 1), repeat=d)]
        keys = [np.sum((base + n) ** 2, axis=1) for n in images]
        spatial = (side,) * d
    else:
        half = int(math.ceil(radius / eps))
        axis = np.arange(-half, half + 1)
        base = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        keys = [np.sum(base ** 2, axis=1)]
        spatial = (2 * half + 1,) * d
    _check_budget(times.size * int(np.prod(spatial)), "kernel sampling")

    all_keys = np.unique(np.concatenate([k[k <= limit] for k in keys]))
    radii = eps * np.sqrt(all_keys.astype(float))
    table = kernel.profile(times[:, None], radii[None, :])
    values = np.zeros((times.size, base.shape[0]))
    for k in keys:
        inside = k <= limit
        columns = np.searchsorted(all_keys, k[inside])
        values[:, inside] += table[:, columns]
    logger.debug(f"Sampled {kernel.name} on {times.size} rows x {base.shape[0]} sites "
                 f"({all_keys.size} distinct radii)")
    return KernelGrid(values.reshape((times.size,) + spatial), eps, h, j_lo, periodic,
                      kernel.scale, kernel.a, kernel.r)


def mollifier_weights(eps: float, d: int, scale: float, periodic: bool,
                      normalize: bool = True) -> np.ndarray:
    """
    ψ_𝔢 on the lattice: torus layout for periodic grids, centred stencil otherwise.

    With ``normalize`` the weights have discrete mass ε^dΣψ_𝔢 = 1 exactly.
    """
    side = int(round(1.0 / eps))
    if periodic:
        weights = lattice_mollifier(LatticeSpec(d, eps), scale)
    else:
        half = int(math.ceil(scale / eps))
        axis = eps * np.arange(-half, half + 1)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1)
        weights = scaled_mollifier(grid, d, scale)
    if normalize:
        weights = weights / (eps ** d * weights.sum())
    if periodic and weights.shape != (side,) * d:
        raise ContractError("periodic mollifier weights must cover the torus")
    return weights


def discrete_convolve(grid: KernelGrid, weights: np.ndarray) -> KernelGrid:
    """
    K^𝔢(t, x) = ε^d Σ_y K(t, x - y)·ψ_𝔢(y), row by row.

    Periodic grids use circular convolution with torus-layout weights; free
    grids use a full linear convolution with a centred odd stencil, so the
    result is wider by the stencil half-width.
    """
    eps, d = grid.eps, grid.d
    axes = tuple(range(1, d + 1))
    if grid.periodic:
        if weights.shape != grid.spatial_shape:
            raise ContractError(f"weights {weights.shape} do not match the torus {grid.spatial_shape}")
        transformed = sp_fft.rfftn(grid.values, axes=axes)
        kernel = sp_fft.rfftn(weights, s=grid.spatial_shape)
        values = eps ** d * sp_fft.irfftn(transformed * kernel[None, ...], s=grid.spatial_shape,
                                          axes=axes)
        return grid.with_values(values)
    if any(n % 2 == 0 for n in weights.shape) or weights.ndim != d:
        raise ContractError(f"free-grid weights must be an odd centred stencil, got {weights.shape}")
    _check_budget(grid.nt * int(np.prod([a + b - 1 for a, b in
                                         zip(grid.spatial_shape, weights.shape)])),
                  "discrete convolution")
    values = eps ** d * signal.fftconvolve(grid.values, weights[None, ...], mode='full', axes=axes)
    return grid.with_values(values)


def build_kernel_grid(eps: float, scale: float, cutoff: Optional[CutoffFunction] = None,
                      periodic: bool = True, time_step_factor: float = 0.25,
                      h: Optional[float] = None) -> KernelGrid:
    """
    Sampled K^𝔢 = K^ε ⋆_ε ψ_𝔢 on the lattice εℤ^3 (or its torus).

    Args:
        eps: Lattice mesh
        scale: Smoothing scale 𝔢
        cutoff: χ (default plateau 1/2, support 1)
        periodic: Torus grid (default) or free offsets
        time_step_factor: h = factor·ε² unless h is given
        h: Explicit time step

    Returns:
        KernelGrid of K^𝔢 with a_e = 3, r_e = 0
    """
    cutoff = cutoff or CutoffFunction()
    step = h if h is not None else time_step_factor * eps ** 2
    K, _ = build_singular_kernel(scale, cutoff, mesh=eps)
    sampled = sample_kernel(K, eps, step, periodic)
    weights = mollifier_weights(eps, 3, scale, periodic)
    smoothed = discrete_convolve(sampled, weights)
    logger.info(f"Built K^𝔢 grid: eps={eps:g}, scale={scale:.4g}, h={step:.3g}, "
                f"{'periodic' if periodic else 'free'} {smoothed.values.shape}")
    return smoothed


def grid_kernel(grid: KernelGrid, name: str = 'G') -> Kernel:
    """Continuous kernel from a free grid by multilinear interpolation (zero outside)."""
    if grid.periodic:
        raise ContractError("only free grids can be interpolated off the lattice")
    axis = grid.eps * (np.arange(grid.values.shape[1]) - grid.half_width)
    interpolator = RegularGridInterpolator((grid.times,) + (axis,) * grid.d, grid.values,
                                           bounds_error=False, fill_value=0.0)
    radius = math.sqrt(max(abs(grid.times[0]), abs(grid.times[-1]))) + \
        math.sqrt(grid.d) * grid.half_width * grid.eps

    def evaluator(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return interpolator(np.column_stack([t, x]))

    return Kernel(evaluator, grid.a, grid.r, radius, grid.scale, grid.eps, grid.d, None, name)


@dataclass(frozen=True)
class DyadicStack:
    """K = Σ_{n=0}^{N} K^{(n)} with level n supported in 2^{-n-1} ≤ ∥z∥_𝔰 ≤ 2^{1-n}."""

    kernel: Kernel
    levels: Tuple[Kernel, ...]

    @property
    def depth(self) -> int:
        """N = -⌊log₂ 𝔢⌋."""
        return len(self.levels) - 1

    def reconstruct(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.sum([level(t, x) for level in self.levels], axis=0)

    def level_support(self, n: int) -> Tuple[float, float]:
        lower = 0.0 if n == self.depth else 2.0 ** (-n - 1)
        return lower, 2.0 ** (1 - n) if n > 0 else self.kernel.support_radius

    def level_constants(self, a: Optional[float] = None, q: int = 0,
                        resolution: int = 48) -> List[float]:
        """Measured C_n = sup |D^k K^{(n)}|·2^{-n(a+|k|_𝔰)} per level."""
        a = self.kernel.a if a is None else a
        constants = []
        for n, level in enumerate(self.levels):
            sup = _weighted_sup(level, lambda norm, weight: 2.0 ** (-n * weight), a, q, resolution)
            constants.append(sup)
        return constants


def dyadic_level_count(scale: float) -> int:
    return int(-math.floor(math.log2(scale) + 1e-12))


def dyadic_decompose(K: Kernel, scale: Optional[float] = None) -> DyadicStack:
    """
    Split K by the partition of unity Σ_n w_n(∥z∥_𝔰) = 1.

    w_0 = 1 - φ(2ρ), w_n = φ(2ⁿρ) - φ(2^{n+1}ρ) for 0 < n < N, w_N = φ(2^N ρ),
    with φ = 1 on [0, 1] and φ = 0 on [2, ∞).
    """
    scale = K.scale if scale is None else scale
    if not 0.0 < scale <= 1.0:
        raise ConfigurationError(f"scale must lie in (0, 1], got {scale}")
    depth = dyadic_level_count(scale)

    def weight(n: int) -> Callable[[np.ndarray], np.ndarray]:
        if depth == 0:
            return lambda rho: np.ones_like(rho)
        if n == 0:
            return lambda rho: 1.0 - dyadic_profile(2.0 * rho)
        if n == depth:
            return lambda rho: dyadic_profile(2.0 ** n * rho)
        return lambda rho: dyadic_profile(2.0 ** n * rho) - dyadic_profile(2.0 ** (n + 1) * rho)

    levels = []
    for n in range(depth + 1):
        w = weight(n)

        def evaluator(t: np.ndarray, x: np.ndarray, w: Callable = w) -> np.ndarray:
            return w(parabolic_norm(t, x)) * K.evaluator(t, x)

        radius = K.support_radius if n == 0 else min(K.support_radius, 2.0 ** (1 - n))
        levels.append(Kernel(evaluator, K.a, K.r, radius, scale, K.mesh, K.d, None,
                             f"{K.name}^({n})"))
    return DyadicStack(K, tuple(levels))


def _derivative_orders(d: int, q: int) -> List[Tuple[int, ...]]:
    """Multi-indices k = (k₀, k₁, ..., k_d) with |k|_𝔰 ≤ q."""
    orders = []
    for k in itertools.product(range(q // 2 + 1), *([range(q + 1)] * d)):
        if multiindex_weight(k) <= q:
            orders.append(tuple(k))
    return orders


_STENCILS = {
    0: ((0, 1.0),),
    1: ((1, 0.5), (-1, -0.5)),
    2: ((1, 1.0), (0, -2.0), (-1, 1.0)),
}


def _derivative(kernel: Kernel, t: np.ndarray, x: np.ndarray, k: Tuple[int, ...]) -> np.ndarray:
    """Central finite-difference D^k K with step ε in space and ε² in time."""
    steps = [kernel.mesh ** 2] + [kernel.mesh] * kernel.d
    total = np.zeros(t.size)
    for combo in itertools.product(*(_STENCILS[order] for order in k)):
        coefficient = 1.0
        shift = np.zeros(kernel.d + 1)
        for axis, ((offset, coef), order) in enumerate(zip(combo, k)):
            coefficient *= coef / steps[axis] ** order
            shift[axis] = offset * steps[axis]
        total += coefficient * kernel(t + shift[0], x + shift[1:][None, :])
    return total


def _evaluation_points(kernel: Kernel, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """Probe grid clustered at the origin, scaled with the support radius (x along axis 1)."""
    radius = kernel.support_radius
    if not math.isfinite(radius):
        radius = 1.0
    r_axis = radius * np.linspace(0.0, 1.0, resolution) ** 2
    v = np.linspace(-1.0, 1.0, 2 * resolution + 1)
    t_axis = radius ** 2 * np.sign(v) * np.abs(v) ** 4
    tt, rr = np.meshgrid(t_axis, r_axis, indexing='ij')
    x = np.zeros((tt.size, kernel.d))
    x[:, 0] = rr.reshape(-1)
    return tt.reshape(-1), x


def _weighted_sup(kernel: Kernel, weight: Callable[[np.ndarray, int], np.ndarray], a: float,
                  q: int, resolution: int) -> float:
    t, x = _evaluation_points(kernel, resolution)
    norm = parabolic_norm(t, x)
    best = 0.0
    for k in _derivative_orders(kernel.d, q):
        order = multiindex_weight(k)
        values = np.abs(_derivative(kernel, t, x, k)) * weight(norm, a + order)
        best = max(best, float(np.max(values)))
    return best


def kernel_norm(K: Kernel, a: float, q: int = 0, scale: Optional[float] = None,
                resolution: int = 48) -> float:
    """
    ∥K∥_{a;q}^{(𝔢)} = sup_z max_{|k|_𝔰 ≤ q} (∥z∥_𝔰 + 𝔢)^{a+|k|_𝔰}·|D^k K(z)| on an evaluation grid.

    Args:
        K: Kernel (evaluation grid and difference steps follow its radius and mesh)
        a: Singularity order
        q: Derivative order, 0, 1 or 2
        scale: 𝔢 (default the kernel's scale)
        resolution: Probe points per axis

    Returns:
        The grid supremum
    """
    if q not in (0, 1, 2):
        raise ContractError(f"kernel_norm supports q in {{0, 1, 2}}, got {q}")
    e = K.scale if scale is None else scale
    return _weighted_sup(K, lambda norm, power: (norm + e) ** power, a, q, resolution)


def check_support(K: Kernel, samples: int = 4000, seed: int = 0) -> float:
    """Largest |K| sampled just outside the declared support radius (0 when compact)."""
    generator = np.random.default_rng(seed)
    radius = K.support_radius
    norm = radius * (1.0 + generator.uniform(1e-6, 0.5, samples))
    share = generator.uniform(0.0, 1.0, samples)
    t = (share * norm) ** 2 * generator.choice([-1.0, 1.0], samples)
    direction = generator.normal(size=(samples, K.d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    x = direction * ((1.0 - share) * norm)[:, None]
    return float(np.max(np.abs(K(t, x))))


def positive_renorm(K: Kernel, r: int) -> Callable[[np.ndarray, np.ndarray, np.ndarray,
                                                    np.ndarray], np.ndarray]:
    """
    K̂(z₋, z₊) = K(z₊ - z₋) - Σ_{|k|_𝔰 < r} (z₊^k / k!)·D^k K(-z₋).

    r = 1 subtracts K(-z₋); r = 2 also subtracts the spatial gradient term.
    """
    if not 0 <= r <= 2:
        raise ContractError(f"positive renormalisation supports 0 <= r <= 2, got {r}")
    orders = [k for k in _derivative_orders(K.d, max(r - 1, 0)) if multiindex_weight(k) < r]

    def renormalised(t_minus: np.ndarray, x_minus: np.ndarray, t_plus: np.ndarray,
                     x_plus: np.ndarray) -> np.ndarray:
        t_minus = np.asarray(t_minus, dtype=float).reshape(-1)
        t_plus = np.asarray(t_plus, dtype=float).reshape(-1)
        x_minus = np.asarray(x_minus, dtype=float).reshape(t_minus.size, K.d)
        x_plus = np.asarray(x_plus, dtype=float).reshape(t_plus.size, K.d)
        value = K(t_plus - t_minus, x_plus - x_minus)
        for k in orders:
            monomial = t_plus ** k[0] * np.prod(x_plus ** np.asarray(k[1:]), axis=1)
            factorial = np.prod([math.factorial(v) for v in k])
            value = value - monomial / factorial * _derivative(K, -t_minus, -x_minus, k)
        return value

    return renormalised


@dataclass(frozen=True)
class TestWindow:
    """Base points z₋: grid times in [t_lo, t_hi], sites with |xᵢ| ≤ radius (free grids)."""

    t_lo: float
    t_hi: float
    radius: float = 0.0


def _window_points(grid: KernelGrid, window: TestWindow) -> Tuple[np.ndarray, np.ndarray]:
    j = np.arange(math.ceil(window.t_lo / grid.h - 1e-9), math.floor(window.t_hi / grid.h + 1e-9) + 1)
    times = j * grid.h
    if grid.periodic:
        side = grid.values.shape[1]
        axis = np.arange(side)
    else:
        reach = int(math.floor(window.radius / grid.eps + 1e-9))
        axis = np.arange(-reach, reach + 1)
    sites = grid.eps * np.stack(np.meshgrid(*([axis] * grid.d), indexing='ij'),
                                axis=-1).reshape(-1, grid.d)
    return np.repeat(times, sites.shape[0]), np.tile(sites, (times.size, 1))


def _support_entries(grid: KernelGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time offsets, spatial offsets and values of the non-zero grid entries."""
    nonzero = np.nonzero(grid.values)
    values = grid.values[nonzero]
    times = (grid.t0 + nonzero[0]) * grid.h
    offsets = grid.offsets()[nonzero[1:]]
    return times, offsets, values


def _pair_sum(grid: KernelGrid, window: TestWindow,
              term: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray,
                              np.ndarray], np.ndarray]) -> float:
    """(hε^d)² Σ_{z₋ ∈ window} Σ_v K(v)·term(z₋, v) over the support of the grid."""
    base_t, base_x = _window_points(grid, window)
    v_t, v_x, k = _support_entries(grid)
    _check_budget(base_t.size * k.size, "renormalised pairing")
    total = 0.0
    for i in range(base_t.size):
        t_minus = np.full(k.size, base_t[i])
        x_minus = np.broadcast_to(base_x[i], v_x.shape)
        total += float(np.sum(k * term(t_minus, x_minus, v_t, v_x, base_t[i], base_x[i])))
    return (grid.h * grid.eps ** grid.d) ** 2 * total


def _wrap(grid: KernelGrid, x: np.ndarray) -> np.ndarray:
    return np.mod(x, 1.0) if grid.periodic else x


def negative_renorm_apply(grid: KernelGrid, r: int, eta: TwoPointFunction,
                          window: TestWindow) -> float:
    """
    K̂(η) = ∫∫ K(z₊ - z₋)·(T_r η)(z₋, z₊) μ(dz₋)μ(dz₊) on the lattice-time measure.

    T_{-1}η = η(z₋, z₊) - η(z₋, z₋); T_{-2} also subtracts the spatial gradient of
    η in its second argument at z₋ (central differences with step ε).

    Args:
        grid: Sampled kernel
        r: -1 or -2
        eta: Two-point test function
        window: Base points z₋; z₊ = z₋ + v runs over the kernel support

    Returns:
        The renormalised pairing
    """
    if r not in (-1, -2):
        raise ContractError(f"negative renormalisation supports r in {{-1, -2}}, got {r}")
    eps, d = grid.eps, grid.d

    def term(t_minus, x_minus, v_t, v_x, t0, x0):
        x_plus = _wrap(grid, x_minus + v_x)
        value = eta(t_minus, x_minus, t_minus + v_t, x_plus) - eta(t_minus, x_minus, t_minus,
                                                                    x_minus)
        if r == -2:
            t_one = np.array([t0])
            x_one = np.asarray(x0).reshape(1, d)
            for i in range(d):
                step = np.zeros((1, d))
                step[0, i] = eps
                slope = (eta(t_one, x_one, t_one, _wrap(grid, x_one + step))
                         - eta(t_one, x_one, t_one, _wrap(grid, x_one - step))) / (2.0 * eps)
                value = value - v_x[:, i] * slope[0]
        return value

    return _pair_sum(grid, window, term)


def delta_renorm_apply(grid: KernelGrid, eta: TwoPointFunction, window: TestWindow) -> float:
    """r = -1 written as ∫∫K·η - ∫(∫K dμ)·η(z, z) dμ."""
    plain = _pair_sum(grid, window, lambda tm, xm, vt, vx, t0, x0:
                      eta(tm, xm, tm + vt, _wrap(grid, xm + vx)))
    mass = grid.h * grid.eps ** grid.d * float(grid.values.sum())
    base_t, base_x = _window_points(grid, window)
    diagonal = float(np.sum(eta(base_t, base_x, base_t, base_x)))
    return plain - mass * grid.h * grid.eps ** grid.d * diagonal


def _correlate(f: KernelGrid, g: KernelGrid, method: str) -> np.ndarray:
    """
    C(v) = hε^d Σ_z f(z)g(z - v) at all lags, time axis full.

    Free grids return full lags on every axis; periodic grids are circular in
    space (FFT layout).
    """
    d = f.d
    spatial_axes = tuple(range(1, d + 1))
    flipped = g.values[::-1]
    if f.periodic:
        if method != 'fft':
            raise ContractError("direct correlation is only available on free grids")
        _check_budget((f.nt + g.nt - 1) * int(np.prod(f.spatial_shape)), "periodic correlation")
        left = sp_fft.fftn(f.values, axes=spatial_axes)
        right = np.conj(sp_fft.fftn(flipped, axes=spatial_axes))
        product = signal.fftconvolve(left, right, mode='full', axes=0)
        values = np.real(sp_fft.ifftn(product, axes=spatial_axes))
    else:
        flipped = np.flip(flipped, axis=spatial_axes)
        full = [a + b - 1 for a, b in zip(f.values.shape, flipped.shape)]
        _check_budget(int(np.prod(full)), "free-grid correlation")
        if method == 'fft':
            values = signal.fftconvolve(f.values, flipped, mode='full')
        elif method == 'direct':
            values = signal.convolve(f.values, flipped, mode='full', method='direct')
        else:
            raise ContractError(f"unknown correlation method {method!r}")
    return f.h * f.eps ** d * values


def kernel_autocorrelation(grid: KernelGrid, method: str = 'fft') -> KernelGrid:
    """A(v) = ∫ K(z)K(z - v) dz with the rectangle rule in time, on all lags."""
    values = _correlate(grid, grid, method)
    return KernelGrid(np.ascontiguousarray(values), grid.eps, grid.h, -(grid.nt - 1),
                      grid.periodic, grid.scale, a=2.0 * grid.a - grid.d - 2, r=0)


def _restrict(lags: KernelGrid, target: KernelGrid) -> np.ndarray:
    """Values of a full-lag grid on the index set of ``target``."""
    start = target.t0 - lags.t0
    if start < 0 or start + target.nt > lags.nt:
        raise ContractError("target times fall outside the lag grid")
    values = lags.values[start:start + target.nt]
    if target.periodic:
        return values
    centre = lags.half_width - target.half_width
    window = tuple(slice(centre, centre + n) for n in target.spatial_shape)
    return values[(slice(None),) + window]


def renorm_constant_C1(grid: KernelGrid) -> Tuple[float, float]:
    """
    C₁ = ∫ K^𝔢(z)² dz = ε^d Σ_x ∫ K^𝔢(t, x)² dt.

    The time integral is exact for the piecewise-linear interpolant of the
    rows; the error estimate is the change when the step is doubled.
    """
    def integral(g: KernelGrid) -> float:
        v = g.padded().values.reshape(g.nt + 2, -1)
        a, b = v[:-1], v[1:]
        return g.eps ** g.d * g.h / 3.0 * float(np.sum(a * a + a * b + b * b))

    value = integral(grid)
    return value, abs(value - integral(grid.coarsened()))


def renorm_constant_C2(grid: KernelGrid, method: str = 'fft') -> Tuple[float, float]:
    """
    C₂ = 2∫∫∫K(z₁)K(z₁-z₃)K(z₂)K(z₂-z₃)K(z₃) = 2∫K(z)·A(z)² dz.

    Rectangle rule in time; the error estimate is the change when the step is
    doubled.
    """
    def constant(g: KernelGrid) -> float:
        if not np.any(g.values):
            return 0.0
        A = _restrict(kernel_autocorrelation(g, method), g)
        return 2.0 * g.h * g.eps ** g.d * float(np.sum(g.values * A ** 2))

    value = constant(grid)
    return value, abs(value - constant(grid.coarsened()))


def chain_kernel(grid: KernelGrid, association: str = 'left', method: str = 'fft') -> KernelGrid:
    """
    𝒢_ε(v) = K(-v)·[∫K(v + w)K(w) dw]² for v = z₂ - z₁.

    ``left`` evaluates the bracket A on the support of K and reflects it
    (A is even); ``right`` reads A directly at the reflected lags. Both give
    the same grid up to rounding. Labels a_e = 5, r_e = 0.
    """
    lags = kernel_autocorrelation(grid, method)
    if association == 'left':
        A = _restrict(lags, grid)
        reflected = grid.with_values(grid.values * A ** 2).flipped()
        return reflected.with_values(reflected.values, a=5.0, r=0)
    if association == 'right':
        reflected = grid.flipped()
        A = _restrict(lags, reflected)
        return reflected.with_values(reflected.values * A ** 2, a=5.0, r=0)
    raise ContractError(f"association must be 'left' or 'right', got {association!r}")


def chain_renorm(chain: KernelGrid, eta: TwoPointFunction, window: TestWindow) -> float:
    """(ℛ𝒢)(η) = ∫∫ 𝒢(z₂ - z₁)(η(z₁, z₂) - η(z₁, z₁)) dz₁ dz₂."""
    return negative_renorm_apply(chain, -1, eta, window)


def grid_norm(grid: KernelGrid, a: float) -> float:
    """sup over grid points of (∥z∥_𝔰 + 𝔢)^a·|K(z)|."""
    t = grid.times.reshape((-1,) + (1,) * grid.d)
    norm = np.sqrt(np.abs(t)) + np.linalg.norm(grid.offsets(), axis=-1)[None, ...]
    return float(np.max((norm + grid.scale) ** a * np.abs(grid.values)))


HEADER_DTYPE = np.dtype([
    ('magic', 'S4'), ('version', '<u4'), ('d', '<u4'), ('periodic', '<u4'),
    ('nt', '<u8'), ('side', '<u8'), ('eps', '<f8'), ('scale', '<f8'),
    ('a', '<f8'), ('r', '<i8'), ('h', '<f8'), ('t0', '<i8'),
])
MAGIC = b'LCKG'


def write_kernel_grid(grid: KernelGrid, path: str) -> None:
    """Write the header followed by the values as little-endian float64, C order."""
    header = np.array([(MAGIC, 1, grid.d, int(grid.periodic), grid.nt, grid.values.shape[1],
                        grid.eps, grid.scale, grid.a, grid.r, grid.h, grid.t0)],
                      dtype=HEADER_DTYPE)
    try:
        with open(path, 'wb') as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(grid.values, dtype='<f8').tobytes())
    except OSError as e:
        raise PersistenceError(f"Could not write kernel grid: {e}", path) from e


def read_kernel_grid(path: str) -> KernelGrid:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise PersistenceError(f"Could not read kernel grid: {e}", path) from e
    if len(raw) < HEADER_DTYPE.itemsize:
        raise PersistenceError("truncated kernel grid header", path)
    header = np.frombuffer(raw[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header['magic']) != MAGIC:
        raise PersistenceError("not a kernel grid file (bad magic)", path)
    d, nt, side = int(header['d']), int(header['nt']), int(header['side'])
    values = np.frombuffer(raw[HEADER_DTYPE.itemsize:], dtype='<f8')
    if values.size != nt * side ** d:
        raise PersistenceError(f"expected {nt * side ** d} values, found {values.size}", path)
    return KernelGrid(values.reshape((nt,) + (side,) * d).astype(float), float(header['eps']),
                      float(header['h']), int(header['t0']), bool(header['periodic']),
                      float(header['scale']), float(header['a']), int(header['r']))
