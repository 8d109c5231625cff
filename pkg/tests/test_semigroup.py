import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinpara.besov import block, fit_slope, para_lt, partition_for, synthetic_field
from kinpara.grid import GridSpec, RealField, grad_x, laplace_v, to_coeffs, to_values
from kinpara.semigroup import (
    PathField,
    SemigroupParams,
    apply_semigroup,
    duhamel,
    duhamel_path,
    duhamel_static,
    galilean_shift,
    heat_kernel_hat,
    heat_symbol,
    kinetic_density,
    kinetic_holder_seminorm,
    kinetic_kernel,
    schauder_gain,
    semigroup_commutator,
    theta_set,
)
from kinpara.semigroup import shifted_block

# v-localised profile in a box wide enough that sheared tails stay negligible
WIDE = GridSpec(128, 256, 2 * np.pi, 8 * np.pi)


def no_nyquist(f):
    """Drop the x-Nyquist row, which a shear cannot translate on the grid."""
    g = f.grid
    c = to_coeffs(g, f.values) * (np.abs(g.kx) < g.n_x // 2)[:, None]
    return RealField(g, to_values(g, c))


def bump(grid, a=0.5, width=1.0):
    return RealField.from_function(grid, lambda x, v: (1 + a * np.sin(x) + 0.3 * np.cos(2 * x)) * np.exp(-width * v ** 2))


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SemigroupParams(lam=-1.0)
        with pytest.raises(ValueError):
            SemigroupParams(t_substeps=0)

    def test_path_times_increasing(self, grid64):
        z = RealField.zeros(grid64)
        with pytest.raises(ValueError):
            PathField(np.array([0.0, 0.0]), (z, z))

    def test_path_interpolates(self, grid64):
        a = RealField(grid64, np.ones(grid64.shape))
        p = PathField(np.array([0.0, 1.0]), (a * 0.0, a * 2.0))
        assert np.allclose(p.at(0.25).values, 0.5)


class TestGalileanShift:
    def test_identity(self, random_field):
        assert galilean_shift(random_field, 0.0) is random_field

    def test_x_independent_unchanged(self, grid64):
        f = RealField.from_function(grid64, lambda x, v: np.cos(v) + 0 * x)
        assert np.max(np.abs(galilean_shift(f, 0.7).values - f.values)) < 1e-12

    def test_translation(self):
        g = GridSpec(64, 32, 2 * np.pi, 2.0)
        f = RealField.from_function(g, lambda x, v: np.sin(3 * x) + 0 * v)
        t = 0.4
        assert np.max(np.abs(galilean_shift(f, t).values - np.sin(3 * (g.X + t * g.V)))) < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(t=st.floats(-0.5, 0.5), s=st.floats(-0.5, 0.5))
    def test_group_law(self, t, s):
        g = GridSpec(32, 32)
        f = no_nyquist(synthetic_field(g, 0.0, seed=3))
        lhs = galilean_shift(galilean_shift(f, s), t)
        assert np.max(np.abs(lhs.values - galilean_shift(f, t + s).values)) < 1e-10

    def test_inverse(self, random_field):
        f = no_nyquist(random_field)
        back = galilean_shift(galilean_shift(f, 0.3), -0.3)
        assert np.max(np.abs(back.values - f.values)) < 1e-10


class TestKernel:
    def test_hat_origin_and_bounds(self, grid64):
        h = heat_kernel_hat(grid64, 0.5).coeffs.real
        assert np.all(h <= 1.0)
        assert h.max() == pytest.approx(1.0)
        assert h.min() >= 0  # positive up to floating-point underflow
        with pytest.raises(ValueError):
            heat_kernel_hat(grid64, 0.0)

    def test_hat_known_values(self):
        assert heat_symbol(0.0, 1.0, 1.0) == pytest.approx(np.exp(-1.0))
        assert heat_symbol(1.0, 0.0, 1.0) == pytest.approx(np.exp(-1.0 / 3.0))

    def test_origin_value(self):
        # covariance determinant t^4 / 3 at t = 1
        assert kinetic_density(1.0, 0.0, 0.0) == pytest.approx(np.sqrt(3.0) / (2 * np.pi))

    @pytest.mark.parametrize("t,box", [(0.1, (0.6, 8.0)), (1.0, (12.0, 24.0))])
    def test_mass(self, t, box):
        g = GridSpec(256, 256, *box)
        assert kinetic_kernel(g, t).integral() == pytest.approx(1.0, abs=1e-8)
        assert kinetic_kernel(g, t).values.min() >= 0

    def test_box_too_small(self):
        with pytest.raises(ValueError, match="box too small"):
            kinetic_kernel(GridSpec(64, 64, 1.0, 1.0), 1.0)

    def test_scaling(self, rng):
        X, V = rng.uniform(-2, 2, (2, 100))
        for t in (0.2, 0.7, 2.0):
            x, v = t ** 1.5 * X, t ** 0.5 * V
            lhs = kinetic_density(t, x, v)
            rhs = t ** -2 * kinetic_density(1.0, t ** -1.5 * x, t ** -0.5 * v)
            assert np.max(np.abs(lhs / rhs - 1)) < 1e-12

    def test_fourier_consistency(self):
        g = GridSpec(128, 128, 12.0, 24.0)
        p = kinetic_kernel(g, 1.0).values
        q = to_values(g, heat_symbol(g.XI, g.ETA, 1.0) / g.area)
        assert np.max(np.abs(p - q)) < 1e-8


class TestSemigroup:
    def test_identity_and_constants(self, random_field):
        assert np.array_equal(apply_semigroup(random_field, 0.0).values, random_field.values)
        c = RealField(random_field.grid, np.full(random_field.grid.shape, 1.7))
        assert np.allclose(apply_semigroup(c, 0.4).values, 1.7, atol=1e-13)

    def test_negative_time(self, random_field):
        with pytest.raises(ValueError):
            apply_semigroup(random_field, -0.1)

    def test_mass(self):
        u = bump(WIDE)
        assert abs(apply_semigroup(u, 0.3).integral() - u.integral()) < 1e-10

    @pytest.mark.parametrize("t,s", [(0.05, 0.1), (0.1, 0.2), (0.2, 0.2), (0.2, 0.05)])
    def test_law(self, t, s):
        u = bump(WIDE)
        u = u / u.sup()
        d = apply_semigroup(apply_semigroup(u, s), t) - apply_semigroup(u, t + s)
        assert d.sup() < 1e-8

    def test_positivity(self):
        u = bump(WIDE, a=0.5)
        assert u.values.min() >= 0
        assert apply_semigroup(u, 0.1).values.min() >= -1e-10 * u.sup()

    def test_generator_residual_first_order(self):
        g = GridSpec(128, 128, 2 * np.pi, 4 * np.pi)
        u = bump(g)
        gen = laplace_v(u).values + g.V * grad_x(u).values
        res = [np.max(np.abs((apply_semigroup(u, d).values - u.values) / d - gen)) for d in (1e-3, 5e-4, 2.5e-4)]
        for a, b in zip(res, res[1:]):
            assert a / b == pytest.approx(2.0, rel=0.2)


class TestDuhamel:
    def test_zero_source(self, grid64):
        src = PathField.constant(RealField.zeros(grid64), np.linspace(0, 1, 5))
        assert duhamel(src, SemigroupParams(), 1.0).sup() == 0.0

    def test_constant_source(self, grid64):
        c = RealField(grid64, np.full(grid64.shape, 2.0))
        src = PathField.constant(c, np.linspace(0, 1, 5))
        assert np.allclose(duhamel(src, SemigroupParams(), 0.75).values, 1.5, atol=1e-12)

    def test_range(self, grid64):
        src = PathField.constant(RealField.zeros(grid64), np.linspace(0, 1, 5))
        with pytest.raises(ValueError):
            duhamel(src, SemigroupParams(), 1.5)

    def test_path_matches_pointwise(self):
        u = bump(WIDE)
        times = np.linspace(0, 0.2, 5)
        src = PathField(times, tuple(u * np.cos(t) for t in times))
        prm = SemigroupParams(lam=0.5, t_substeps=2)
        path = duhamel_path(src, prm)
        for k, t in enumerate(times):
            assert np.max(np.abs(path.fields[k].values - duhamel(src, prm, t).values)) < 1e-12

    def test_second_order(self):
        u = bump(WIDE)

        def run(n):
            ts = np.linspace(0, 0.2, n + 1)
            return duhamel(PathField(ts, tuple(u * np.cos(5 * t) for t in ts)), SemigroupParams(), 0.2).values

        a, b, c = run(4), run(8), run(16)
        ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
        assert 3.2 <= ratio <= 4.8

    def test_substeps_refine(self):
        u = bump(WIDE)
        ts = np.linspace(0, 0.2, 5)
        src = PathField(ts, tuple(u * (1 + t) for t in ts))
        # a source linear in time is reproduced exactly by the interpolation
        a = duhamel(src, SemigroupParams(t_substeps=2), 0.2).values
        b = duhamel(PathField(np.linspace(0, 0.2, 9), tuple(u * (1 + t) for t in np.linspace(0, 0.2, 9))),
                    SemigroupParams(), 0.2).values
        assert np.max(np.abs(a - b)) < 1e-12

    def test_lambda_scaling(self):
        g = GridSpec(64, 128, 2 * np.pi, 8 * np.pi)
        u = bump(g)
        n10 = duhamel_static(u, 2.0, lam=10.0).sup()
        n100 = duhamel_static(u, 2.0, lam=100.0).sup()
        assert n10 / n100 == pytest.approx(10.0, rel=0.15)
        assert n10 == pytest.approx(u.sup() / 10, rel=0.15)

    def test_static_matches_path(self):
        u = bump(WIDE)
        ts = np.linspace(0, 0.1, 201)
        a = duhamel_path(PathField.constant(u, ts)).fields[-1]
        b = duhamel_static(u, 0.1)
        assert np.max(np.abs(a.values - b.values)) < 1e-6 * b.sup()


class TestThetaSet:
    @pytest.mark.parametrize("j", [0, 1, 3, 6])
    def test_t_zero(self, j):
        assert theta_set(j, 0.0) == {l for l in range(-1, j + 5) if abs(l - j) <= 4}

    def test_direct_arithmetic(self):
        expect = {l for l in range(-1, 40)
                  if 2 ** l <= 16 * (2 ** 5 + 8 ** 5) and 2 ** 5 <= 16 * (2 ** l + 8 ** l)}
        assert theta_set(5, 1.0) == expect

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            theta_set(-1, 0.1)

    @pytest.mark.parametrize("t", [0.0, 0.01, 0.05])
    def test_support_identity(self, rng, t):
        g = GridSpec(64, 64)
        f = RealField(g, rng.standard_normal(g.shape))
        P = partition_for(g)
        for j in range(0, P.j_max + 1):
            S = theta_set(j, t)
            for l in P.levels:
                if l not in S:
                    assert shifted_block(f, j, l, t, P).sup() <= 1e-12 * f.sup()


class TestSchauder:
    def test_degenerate(self, grid64):
        rep = schauder_gain(RealField.zeros(grid64), 0.25, 0.6)
        assert rep.degenerate and np.isnan(rep.gain)

    def test_gain_and_csv(self):
        g = GridSpec(128, 128, 2 * np.pi, 4 * np.pi)
        rep = schauder_gain(synthetic_field(g, 0.6, seed=1), 0.25, 0.6)
        assert rep.gain > 1.0
        assert rep.to_csv(0.25, 0.6).startswith("j,source_norm,integral_norm,ratio")

    def test_single_level_ratio_bounded(self):
        g = GridSpec(128, 128, 2 * np.pi, 4 * np.pi)
        ratios = []
        for j in range(1, 5):
            f = synthetic_field(g, 0.0, seed=j, levels=[j])
            ratios.append(duhamel_static(f, 0.25, level=j).sup() / (2.0 ** (-2 * j) * block(f, j).sup()))
        assert max(ratios) / min(ratios) < 20


class TestCommutator:
    def test_zero(self, grid64, random_field):
        assert semigroup_commutator(random_field, RealField.zeros(grid64), 0.1, 2).sup() == 0.0

    def test_requires_positive_time(self, random_field):
        with pytest.raises(ValueError):
            semigroup_commutator(random_field, random_field, 0.0, 1)

    def test_constant_f(self):
        g = GridSpec(64, 64, 2 * np.pi, 4 * np.pi)
        h = synthetic_field(g, 0.6, seed=2)
        c = RealField(g, np.full(g.shape, 2.0))
        # [P_t, R_-1 + R_0] only reaches levels 0 and 1
        for j in range(2, 6):
            assert semigroup_commutator(c, h, 0.1, j).sup() < 1e-8

    def test_extra_decay(self):
        g = GridSpec(256, 256, 2 * np.pi, 4 * np.pi)
        f, h = synthetic_field(g, 0.6, seed=1), synthetic_field(g, 0.6, seed=2)
        P = partition_for(g)
        lv = list(range(0, P.j_max + 1))
        win = (2, P.j_max - 2)
        com = fit_slope(lv, [semigroup_commutator(f, h, 0.1, j).sup() for j in lv], win)
        plain = fit_slope(lv, [block(para_lt(f, h), j).sup() for j in lv], win)
        assert com <= plain - 0.5


class TestHolder:
    def test_static_x_independent(self, grid64):
        f = RealField.from_function(grid64, lambda x, v: np.cos(v) + 0 * x)
        path = PathField.constant(f, np.linspace(0, 1, 4))
        assert kinetic_holder_seminorm(path, 0.5) == pytest.approx(f.sup())

    def test_transported_path(self):
        g = GridSpec(64, 64)
        f = no_nyquist(synthetic_field(g, 0.5, seed=1))
        ts = np.linspace(0, 0.3, 4)
        path = PathField(ts, tuple(galilean_shift(f, t) for t in ts))
        assert kinetic_holder_seminorm(path, 0.5) == pytest.approx(max(p.sup() for p in path.fields), abs=1e-10)

    def test_linear_growth_finite(self, grid64):
        f = RealField.from_function(grid64, lambda x, v: np.cos(v) + 0 * x)
        ts = np.linspace(0.0, 1.0, 5)
        val = kinetic_holder_seminorm(PathField(ts, tuple(f * t for t in ts)), 0.5)
        # increment part is |t - s|^(1/2) sup f, largest at |t - s| = 1
        assert val == pytest.approx(2 * f.sup())

    def test_beta_range(self, grid64):
        path = PathField.constant(RealField.zeros(grid64), np.linspace(0, 1, 3))
        with pytest.raises(ValueError):
            kinetic_holder_seminorm(path, 1.0)
