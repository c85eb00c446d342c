"""Tests for the singular kernels, their sampled grids and renormalisations."""

import math

import numpy as np
import pytest

from lattice_chaos.core.kernels import (
    CutoffFunction,
    Kernel,
    KernelGrid,
    TestWindow as Window,
    build_kernel_grid,
    build_singular_kernel,
    chain_kernel,
    chain_renorm,
    check_support,
    delta_renorm_apply,
    discrete_convolve,
    dyadic_decompose,
    dyadic_level_count,
    grid_kernel,
    grid_norm,
    heat_kernel,
    kernel_norm,
    mollifier_weights,
    multiindex_weight,
    negative_renorm_apply,
    parabolic_norm,
    positive_renorm,
    radial_kernel,
    read_kernel_grid,
    renorm_constant_C1,
    renorm_constant_C2,
    sample_kernel,
    smooth_step,
    smoothed_heat_profile,
    write_kernel_grid,
)
from lattice_chaos.utils.errors import ConfigurationError, ContractError, PersistenceError


def random_grid(periodic=True, seed=0, nt=5, side=None, d=1):
    """Random grid; free grids get an odd, centred stencil."""
    side = side or (4 if periodic else 5)
    generator = np.random.default_rng(seed)
    values = generator.normal(size=(nt,) + (side,) * d)
    return KernelGrid(values, eps=1.0 / side if periodic else 0.25, h=0.0625, t0=-1,
                      periodic=periodic, scale=0.3)


def eta(t1, x1, t2, x2):
    return np.exp(-(t2 - t1) ** 2) * np.cos(2.0 * math.pi * x2[:, 0]) + 0.5 * np.sin(
        2.0 * math.pi * x1[:, 0])


def bump_kernel(d=1):
    """Compact radial kernel with profile χ(∥z∥)."""
    cutoff = CutoffFunction()
    return radial_kernel(lambda t, r: cutoff(np.sqrt(np.abs(t)) + r), a=0.0, r=0,
                         support_radius=cutoff.outer, scale=0.1, mesh=0.1, d=d, name='χ')


class TestGeometry:
    def test_parabolic_norm(self):
        assert parabolic_norm(4.0, np.array([3.0, 4.0])) == pytest.approx(7.0)
        assert parabolic_norm(-0.25, np.array([0.0])) == pytest.approx(0.5)

    def test_multiindex_weight(self):
        assert multiindex_weight((1, 0, 0, 0)) == 2
        assert multiindex_weight((0, 1, 1, 0)) == 2
        assert multiindex_weight((1, 2, 0, 1)) == 5
        assert multiindex_weight(()) == 0

    def test_heat_kernel_vanishes_before_zero(self):
        x = np.zeros((3, 1))
        values = heat_kernel(np.array([-1.0, 0.0, 1.0]), x)
        assert values[0] == 0.0
        assert values[1] == 0.0
        assert values[2] == pytest.approx((4.0 * math.pi) ** -0.5)

    def test_heat_kernel_unit_mass(self):
        x = np.linspace(-10.0, 10.0, 4001)[:, None]
        values = heat_kernel(np.full(x.shape[0], 0.5), x)
        assert values.sum() * 0.005 == pytest.approx(1.0, rel=1e-8)

    def test_smooth_step(self):
        s = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
        values = smooth_step(s)
        assert values[0] == 1.0 and values[1] == 1.0
        assert values[2] == pytest.approx(0.5)
        assert values[3] == 0.0 and values[4] == 0.0


class TestCutoff:
    def test_plateau_and_support(self):
        cutoff = CutoffFunction()
        values = cutoff(np.array([0.0, 0.5, 0.75, 1.0, 1.5]))
        assert values[0] == 1.0 and values[1] == 1.0
        assert 0.0 < values[2] < 1.0
        assert values[3] == 0.0 and values[4] == 0.0

    @pytest.mark.parametrize("inner,outer", [(0.4, 1.0), (0.6, 1.2), (0.8, 0.7)])
    def test_rejects_invalid_window(self, inner, outer):
        with pytest.raises(ConfigurationError):
            CutoffFunction(inner, outer)

    def test_check_support_is_zero_outside(self):
        assert check_support(bump_kernel(d=2), samples=500) == 0.0


class TestKernel:
    def test_rescaled(self):
        K = Kernel(lambda t, x: t + x[:, 0], a=2.0, r=0, support_radius=1.0, scale=0.1,
                   mesh=0.1, d=1)
        lam = 0.5
        rescaled = K.rescaled(lam)
        t, x = np.array([0.3]), np.array([[0.2]])
        assert rescaled(t, x)[0] == pytest.approx(lam ** 2 * (lam ** 2 * 0.3 + lam * 0.2))
        assert rescaled.support_radius == pytest.approx(2.0)
        assert rescaled.scale == pytest.approx(0.2)

    def test_kernel_norm_of_bump(self):
        assert kernel_norm(bump_kernel(), a=0.0) == pytest.approx(1.0)

    def test_kernel_norm_rejects_high_order(self):
        with pytest.raises(ContractError):
            kernel_norm(bump_kernel(), a=3.0, q=3)


class TestDyadic:
    @pytest.mark.parametrize("scale,count", [(1.0, 0), (0.5, 1), (0.3, 2), (0.125, 3),
                                             (1.0 / 16, 4)])
    def test_level_count(self, scale, count):
        assert dyadic_level_count(scale) == count

    def test_reconstruction_and_level_support(self):
        K, _ = build_singular_kernel(0.125, CutoffFunction(), mesh=0.25)
        stack = dyadic_decompose(K)
        assert stack.depth == 3

        t = np.array([0.001, 0.01, 0.05, 0.1, 0.3, -0.005])
        x = np.zeros((t.size, 3))
        x[:, 0] = [0.0, 0.05, 0.1, 0.2, 0.1, 0.02]
        direct = K(t, x)
        assert np.max(np.abs(stack.reconstruct(t, x) - direct)) <= 1e-8 * max(
            1.0, float(np.max(np.abs(direct))))

        # level 2 lives in 1/8 <= ∥z∥ <= 1/2
        far = np.array([0.36])
        assert stack.levels[2](far, np.zeros((1, 3)))[0] == 0.0
        assert stack.level_support(2) == (0.125, 0.5)

    def test_rejects_scale_outside_unit_interval(self):
        with pytest.raises(ConfigurationError):
            dyadic_decompose(bump_kernel(), scale=1.5)

    def test_singular_and_remainder_sum_to_smoothed_heat(self):
        K, R = build_singular_kernel(0.125, CutoffFunction(), mesh=0.25)
        t = np.array([0.01, 0.1, 0.3, 0.6, 1.2])
        x = np.zeros((t.size, 3))
        x[:, 0] = [0.05, 0.2, 0.4, 0.3, 0.1]
        assert np.allclose(K(t, x) + R(t, x), smoothed_heat_profile(t, x[:, 0], 0.125),
                           rtol=1e-12, atol=1e-14)
        assert K(t, x)[-1] == 0.0

    def test_singular_kernel_is_three_dimensional(self):
        with pytest.raises(ConfigurationError):
            build_singular_kernel(0.2, CutoffFunction(), mesh=0.25, d=2)


class TestKernelGrid:
    def test_grid_norm_weights_by_distance(self):
        values = np.zeros((3, 4))
        values[2, 1] = -2.0
        grid = KernelGrid(values, eps=0.25, h=0.0625, t0=0, periodic=True, scale=0.3)
        expected = 2.0 * (math.sqrt(0.125) + 0.25 + 0.3) ** 1.5
        assert grid_norm(grid, 1.5) == pytest.approx(expected)
        assert grid_norm(grid, 0.0) == pytest.approx(2.0)

    def test_flip_twice_is_identity(self):
        for periodic in (True, False):
            grid = random_grid(periodic=periodic, side=5, d=2)
            twice = grid.flipped().flipped()
            assert twice.t0 == grid.t0
            assert np.array_equal(twice.values, grid.values)

    def test_flip_reflects_offsets(self):
        grid = random_grid(periodic=True, side=4)
        flipped = grid.flipped()
        # G(t, x) = K(-t, -x) on the torus
        assert flipped.times[0] == pytest.approx(-grid.times[-1])
        assert flipped.values[0, 1] == grid.values[-1, 3]
        assert flipped.values[0, 0] == grid.values[-1, 0]

    def test_coarsened_keeps_even_rows(self):
        grid = random_grid(periodic=True, nt=6)
        coarse = grid.coarsened()
        assert coarse.h == pytest.approx(2.0 * grid.h)
        for j, t in enumerate(coarse.times):
            assert np.array_equal(coarse.values[j], grid.row_at(t))

    def test_row_at_interpolates(self):
        grid = random_grid(periodic=True)
        t = 0.5 * (grid.times[1] + grid.times[2])
        assert np.allclose(grid.row_at(t), 0.5 * (grid.values[1] + grid.values[2]))
        assert not np.any(grid.row_at(10.0))

    def test_values_are_read_only(self):
        grid = random_grid()
        with pytest.raises(ValueError):
            grid.values[0, 0] = 1.0

    def test_periodic_grid_cannot_be_interpolated(self):
        with pytest.raises(ContractError):
            grid_kernel(random_grid(periodic=True))


class TestSampling:
    def test_sampling_needs_profile_and_support(self):
        no_profile = Kernel(lambda t, x: t, a=0.0, r=0, support_radius=1.0, scale=0.1,
                            mesh=0.25, d=1)
        with pytest.raises(ContractError):
            sample_kernel(no_profile, 0.25, 0.0625, periodic=False)
        unbounded = radial_kernel(lambda t, r: np.exp(-r), a=0.0, r=0,
                                  support_radius=math.inf, scale=0.1, mesh=0.25, d=1)
        with pytest.raises(ContractError):
            sample_kernel(unbounded, 0.25, 0.0625, periodic=False)

    def test_periodic_sampling_sums_images(self):
        K = bump_kernel()
        free = sample_kernel(K, 0.25, 0.0625, periodic=False)
        torus = sample_kernel(K, 0.25, 0.0625, periodic=True)
        assert free.t0 == torus.t0
        # every image of the free stencil lands on some torus site
        assert np.allclose(free.spatial_mass(), torus.spatial_mass())

    def test_mollifier_weights_have_unit_mass(self):
        for periodic in (True, False):
            weights = mollifier_weights(0.125, 2, 0.3, periodic)
            assert 0.125 ** 2 * weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_periodic_convolution_preserves_mass(self):
        grid = random_grid(periodic=True, side=8)
        weights = mollifier_weights(0.125, 1, 0.3, periodic=True)
        smoothed = discrete_convolve(grid, weights)
        assert np.allclose(smoothed.spatial_mass(), grid.spatial_mass(), atol=1e-10)

    def test_free_convolution_needs_odd_stencil(self):
        grid = random_grid(periodic=False)
        with pytest.raises(ContractError):
            discrete_convolve(grid, np.ones(4))
        widened = discrete_convolve(grid, np.ones(3))
        assert widened.spatial_shape == (grid.spatial_shape[0] + 2,)

    @pytest.mark.slow
    def test_build_kernel_grid(self):
        grid = build_kernel_grid(0.25, 0.35)
        assert grid.periodic and grid.spatial_shape == (4, 4, 4)
        assert grid.h == pytest.approx(0.25 * 0.25 ** 2)
        assert grid.values.min() >= -1e-9 * grid.values.max()
        c1, error = renorm_constant_C1(grid)
        assert c1 > 0.0
        assert error < 0.5 * c1


class TestRenormalisation:
    def test_positive_renorm_vanishes_at_origin(self):
        K = bump_kernel()
        renormalised = positive_renorm(K, 1)
        t_minus = np.array([-0.1, -0.3, 0.05])
        x_minus = np.array([[0.1], [-0.2], [0.3]])
        zeros = np.zeros(3)
        assert np.allclose(renormalised(t_minus, x_minus, zeros, zeros[:, None]), 0.0)

    def test_positive_renorm_removes_linear_part(self):
        K = Kernel(lambda t, x: t + 2.0 * x[:, 0], a=0.0, r=0, support_radius=1.0,
                   scale=0.1, mesh=0.1, d=1)
        renormalised = positive_renorm(K, 2)
        t_minus = np.array([0.2, -0.4])
        x_minus = np.array([[0.3], [0.1]])
        t_plus = np.array([0.5, 0.7])
        x_plus = np.array([[-0.2], [0.6]])
        assert np.allclose(renormalised(t_minus, x_minus, t_plus, x_plus), t_plus)

    def test_positive_renorm_order(self):
        with pytest.raises(ContractError):
            positive_renorm(bump_kernel(), 3)

    def test_negative_and_delta_forms_agree(self):
        grid = random_grid(periodic=True, side=4, seed=3)
        window = Window(0.0, 0.25)
        assert negative_renorm_apply(grid, -1, eta, window) == pytest.approx(
            delta_renorm_apply(grid, eta, window), abs=1e-12)

    def test_negative_renorm_kills_constants(self):
        grid = random_grid(periodic=False, seed=4)
        window = Window(0.0, 0.125, radius=0.25)

        def first_argument_only(t1, x1, t2, x2):
            return np.cos(t1) + x1[:, 0]

        assert negative_renorm_apply(grid, -1, first_argument_only, window) == pytest.approx(
            0.0, abs=1e-12)

    def test_negative_renorm_order(self):
        with pytest.raises(ContractError):
            negative_renorm_apply(random_grid(), -3, eta, Window(0.0, 0.1))

    def test_renorm_constants_of_zero_grid(self):
        grid = random_grid().with_values(np.zeros((5, 4)))
        assert renorm_constant_C1(grid) == (0.0, 0.0)
        assert renorm_constant_C2(grid) == (0.0, 0.0)

    def test_c1_is_quadratic(self):
        grid = random_grid(seed=5)
        single, _ = renorm_constant_C1(grid)
        double, _ = renorm_constant_C1(grid.with_values(2.0 * grid.values))
        assert double == pytest.approx(4.0 * single)

    def test_c2_fft_matches_direct_on_free_grid(self):
        grid = random_grid(periodic=False, seed=6)
        fft, _ = renorm_constant_C2(grid, method='fft')
        direct, _ = renorm_constant_C2(grid, method='direct')
        assert fft == pytest.approx(direct, rel=1e-8, abs=1e-12)

    @pytest.mark.parametrize("periodic", [True, False])
    def test_chain_associations_agree(self, periodic):
        grid = random_grid(periodic=periodic, seed=7)
        left = chain_kernel(grid, 'left')
        right = chain_kernel(grid, 'right')
        assert left.a == 5.0 and left.r == 0
        assert left.t0 == right.t0
        assert np.allclose(left.values, right.values, atol=1e-8)

    def test_chain_renorm_is_the_first_order_renormalisation(self):
        chain = chain_kernel(random_grid(periodic=True, seed=8), 'left')
        window = Window(0.0, 0.25)
        assert chain_renorm(chain, eta, window) == pytest.approx(
            delta_renorm_apply(chain, eta, window), rel=1e-9, abs=1e-10)

        def diagonal_only(t1, x1, t2, x2):
            return np.sin(t1) + np.cos(2.0 * math.pi * x1[:, 0])

        assert chain_renorm(chain, diagonal_only, window) == pytest.approx(0.0, abs=1e-12)

    def test_chain_rejects_unknown_association(self):
        with pytest.raises(ContractError):
            chain_kernel(random_grid(), 'middle')


class TestPersistence:
    def test_grid_file_round_trip(self, tmp_path):
        grid = random_grid(periodic=False, d=2, side=3)
        path = str(tmp_path / "kernel.grid")
        write_kernel_grid(grid, path)
        loaded = read_kernel_grid(path)
        assert np.array_equal(loaded.values, grid.values)
        assert (loaded.eps, loaded.h, loaded.t0, loaded.periodic) == (
            grid.eps, grid.h, grid.t0, grid.periodic)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "broken.grid"
        path.write_bytes(b"NOPE" + bytes(200))
        with pytest.raises(PersistenceError):
            read_kernel_grid(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(PersistenceError):
            read_kernel_grid(str(tmp_path / "absent.grid"))
