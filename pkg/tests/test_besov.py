import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinpara.besov import (
    BesovIndex,
    block,
    block_commutator,
    besov_norm,
    core_band,
    difference_norm,
    fit_slope,
    freq_radius,
    level_profile,
    low_freq,
    para_gt,
    para_lt,
    partition_for,
    resonant,
    synthetic_field,
    theta,
    trilinear_com,
    weight_eval,
)
from kinpara.grid import GridSpec, RealField, to_values, product


def harmonic(grid, i, k):
    """Real field ``2 cos(xi x + eta v)`` for lattice index (i, k)."""
    c = np.zeros(grid.shape, complex)
    c[i, k] = 1.0
    c[-i, -k] = 1.0
    return RealField(grid, to_values(grid, c))


G128 = GridSpec(128, 128)


class TestProfile:
    def test_plateaus(self):
        assert theta(0.3) == 1.0
        assert theta(0.5) == 1.0
        assert theta(2 / 3) == pytest.approx(0.0, abs=1e-15)
        assert theta(5.0) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 100.0))
    def test_monotone(self, r):
        assert theta(r) >= theta(r * 1.01) - 1e-15

    def test_level_annulus_support(self):
        r = np.linspace(0, 200, 20001)
        for j in range(0, 6):
            w = level_profile(j, r)
            on = r[w > 0]
            assert on.min() >= 2.0 ** (j - 1) - 1e-12
            assert on.max() <= 2.0 ** (j + 2) / 3 + 1e-12


class TestPartition:
    def test_unity(self):
        assert partition_for(G128).unity_defect() <= 1e-12

    def test_jmax_fits(self):
        P = partition_for(G128)
        assert P.symbol(P.j_max).any()
        with pytest.raises(ValueError):
            P.symbol(P.j_max + 1)
        with pytest.raises(ValueError):
            P.symbol(-2)

    def test_constant_blocks(self):
        c = RealField(G128, np.full(G128.shape, 2.5))
        assert np.allclose(block(c, -1).values, 2.5)
        for j in range(0, 4):
            assert block(c, j).sup() < 1e-14

    def test_far_blocks_orthogonal(self, rng):
        f = RealField(G128, rng.standard_normal(G128.shape))
        assert block(block(f, 1), 4).sup() < 1e-14
        assert block(block(f, 2), 4).sup() < 1e-14
        assert block(block(f, 3), 4).sup() > 1e-6

    def test_harmonic_seen_at_adjacent_levels_only(self):
        # |zeta|_a = 2^3 * 1.2 = 9.6 for xi = 0, eta = 9.6 is off lattice; use eta = 10
        f = harmonic(G128, 0, 10)
        r = 10.0
        P = partition_for(G128)
        for j in P.levels:
            expect = 2.0 * level_profile(j, r)
            assert block(f, j).sup() == pytest.approx(expect, abs=1e-12)
        hits = [j for j in P.levels if block(f, j).sup() > 1e-12]
        assert hits and max(hits) - min(hits) <= 1

    def test_low_freq(self, rng):
        f = RealField(G128, rng.standard_normal(G128.shape))
        P = partition_for(G128)
        assert np.allclose(low_freq(f, 0).values, block(f, -1).values)
        assert np.max(np.abs(low_freq(f, P.j_max + 1).values - f.values)) < 1e-12
        s3 = sum((block(f, j) for j in range(-1, 3)), RealField.zeros(G128))
        assert np.max(np.abs(low_freq(f, 3).values - s3.values)) < 1e-12
        with pytest.raises(ValueError):
            low_freq(f, -1)

    def test_low_freq_keeps_low_band(self):
        f = harmonic(G128, 0, 3)
        assert np.max(np.abs(low_freq(f, 4).values - f.values)) < 1e-13


class TestBesovNorm:
    def test_zero(self):
        rep = besov_norm(RealField.zeros(G128), BesovIndex(0.5))
        assert rep.norm == 0.0
        assert not np.any(rep.level_norms)

    def test_single_harmonic(self):
        f = harmonic(G128, 0, 10)
        rep = besov_norm(f, BesovIndex(0.0))
        expect = max(2.0 * level_profile(j, 10.0) for j in partition_for(G128).levels)
        assert rep.norm == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("sigma", [0.3, 0.6, 1.0])
    def test_fitted_slope(self, sigma):
        rep = besov_norm(synthetic_field(G128, sigma, seed=1), BesovIndex(0.0))
        assert rep.fitted_slope == pytest.approx(-sigma, abs=0.05)

    def test_index_validation(self):
        with pytest.raises(ValueError):
            BesovIndex(0.0, p=0.5)

    def test_csv_footer(self):
        rep = besov_norm(synthetic_field(G128, 0.5, seed=2), BesovIndex(0.5, 2, 2))
        text = rep.to_csv()
        assert text.startswith("j,level_norm\n")
        assert '"fitted_slope"' in text.splitlines()[-1]

    def test_weight_reduces_norm(self, rng):
        f = RealField(G128, rng.standard_normal(G128.shape))
        plain = besov_norm(f, BesovIndex(0.0)).norm
        weighted = besov_norm(f, BesovIndex(0.0, weight_kappa=1.0)).norm
        assert weighted <= plain

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), s=st.floats(-1, 1.5), q1=st.sampled_from([1.0, 2.0]),
           q2=st.sampled_from([2.0, 4.0, np.inf]))
    def test_embedding_in_q(self, seed, s, q1, q2):
        f = synthetic_field(GridSpec(32, 32), 0.5, seed=seed)
        a = besov_norm(f, BesovIndex(s, np.inf, max(q1, q2))).norm
        b = besov_norm(f, BesovIndex(s, np.inf, min(q1, q2))).norm
        assert a <= b * (1 + 1e-12)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), th=st.floats(0.05, 0.95), s1=st.floats(-1, 0.5), s2=st.floats(0.5, 2))
    def test_interpolation(self, seed, th, s1, s2):
        f = synthetic_field(GridSpec(32, 32), 0.3, seed=seed)
        n = lambda s: besov_norm(f, BesovIndex(s)).norm
        assert n(th * s1 + (1 - th) * s2) <= n(s1) ** th * n(s2) ** (1 - th) * (1 + 1e-10)


class TestDifferenceNorm:
    def test_zero(self):
        assert difference_norm(RealField.zeros(G128), 0.5) == 0.0

    def test_constant(self):
        assert difference_norm(RealField(G128, np.full(G128.shape, 3.0)), 0.7) == pytest.approx(3.0, rel=1e-12)

    def test_positive_s(self, random_field):
        with pytest.raises(ValueError):
            difference_norm(random_field, 0.0)

    @pytest.mark.parametrize("s", [0.5, 1.4])
    def test_equivalence_ratio(self, s):
        f = synthetic_field(GridSpec(64, 64), s + 0.3, seed=0)
        ratio = difference_norm(f, s) / besov_norm(f, BesovIndex(s)).norm
        assert 1 / 50 <= ratio <= 50


class TestParaproducts:
    def test_bony_exact_with_dealiasing(self, rng):
        g = GridSpec(64, 64, dealias=True)
        f = RealField(g, rng.standard_normal(g.shape))
        h = RealField(g, rng.standard_normal(g.shape))
        res = product(f, h) - (para_lt(f, h) + resonant(f, h) + para_gt(f, h))
        assert res.sup() <= 1e-10 * f.sup() * h.sup()

    def test_unit_paraproduct(self, rng):
        g = GridSpec(64, 64)
        h = RealField(g, rng.standard_normal(g.shape))
        one = RealField(g, np.ones(g.shape))
        expect = h - block(h, -1) - block(h, 0)
        # S_{k-1} 1 = 1 for k >= 1; the k = 0 summand uses S_{-1} 1 = 0
        assert np.max(np.abs(para_lt(one, h).values - expect.values)) < 1e-12

    def test_constant_right_argument(self, rng):
        g = GridSpec(64, 64)
        f = RealField(g, rng.standard_normal(g.shape))
        assert para_lt(f, RealField(g, np.full(g.shape, 2.0))).sup() < 1e-13

    def test_resonant_symmetric(self, rng):
        g = GridSpec(64, 64)
        f = RealField(g, rng.standard_normal(g.shape))
        h = RealField(g, rng.standard_normal(g.shape))
        assert np.max(np.abs(resonant(f, h).values - resonant(h, f).values)) < 1e-14 * f.sup() * h.sup()
        assert resonant(f, RealField.zeros(g)).sup() == 0.0

    def test_resonant_far_annuli(self):
        a = harmonic(G128, 0, 2)
        b = harmonic(G128, 0, 40)
        assert resonant(a, b).sup() < 1e-13

    def test_linearity(self, rng):
        g = GridSpec(32, 32)
        f, h, k = (RealField(g, rng.standard_normal(g.shape)) for _ in range(3))
        lhs = para_lt(f * 2.0 + k, h).values
        rhs = 2 * para_lt(f, h).values + para_lt(k, h).values
        assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestCommutators:
    def test_trilinear_constant_f(self, rng):
        g = GridSpec(64, 64)
        h, k = (RealField(g, rng.standard_normal(g.shape)) for _ in range(2))
        c = RealField(g, np.full(g.shape, 1.5))
        com = trilinear_com(c, h, k)
        # only the low-frequency bookkeeping of 1 < h survives
        expect = -resonant(block(h, -1) + block(h, 0), k) * 1.5
        assert np.max(np.abs(com.values - expect.values)) < 1e-8 * max(expect.sup(), 1.0)

    def test_trilinear_zero(self, random_field):
        z = RealField.zeros(random_field.grid)
        assert trilinear_com(random_field, z, random_field).sup() == 0.0

    def test_trilinear_smoothing(self):
        g = GridSpec(128, 128)
        f, h, k = (synthetic_field(g, s, seed=i) for i, s in enumerate((0.6, 0.6, -0.5)))
        slope = lambda u: besov_norm(u, BesovIndex(0.0)).fitted_slope
        com = slope(trilinear_com(f, h, k))
        # faster decay of level norms means more regularity
        assert com <= slope(product(f, resonant(h, k)))
        assert com <= slope(resonant(para_lt(f, h), k)) - 0.5

    def test_block_commutator_trivial(self, random_field):
        g = random_field.grid
        c = RealField(g, np.full(g.shape, 2.0))
        assert block_commutator(c, random_field, 2).sup() < 1e-12
        assert block_commutator(random_field, RealField.zeros(g), 2).sup() == 0.0

    def test_block_commutator_rate(self):
        g = GridSpec(256, 256)
        f = synthetic_field(g, 0.6, seed=5)
        h = synthetic_field(g, 0.0, seed=6)
        P = partition_for(g)
        lv = list(range(3, P.j_max - 1))
        sl = fit_slope(lv, [block_commutator(f, h, j).sup() for j in lv], (lv[0], lv[-1]))
        assert -0.85 <= sl <= -0.35


class TestWeight:
    def test_kappa_zero(self, grid64):
        assert np.all(weight_eval(grid64, 0.0).values == 1.0)

    def test_origin_value(self):
        g = GridSpec(16, 16)
        w = weight_eval(g, 1.0)
        assert w.values[8, 8] == pytest.approx(2 ** -0.5)

    def test_comparable_to_aniso_distance(self):
        g = GridSpec(64, 64, 200.0, 40.0)
        w = weight_eval(g, 1.0).values
        r = (1 + np.cbrt(np.abs(g.X)) + np.abs(g.V)) ** -1
        assert 0.25 <= (w / r).min() and (w / r).max() <= 4.0


class TestBernstein:
    @pytest.mark.parametrize("seed", range(5))
    def test_ratio_bounded(self, seed):
        from kinpara.grid import grad_v, grad_x

        g = GridSpec(64, 64)
        f = synthetic_field(g, 0.3, seed=seed)
        for j in range(0, partition_for(g).j_max + 1):
            b = block(f, j)
            n = b.sup()
            if n < 1e-12:
                continue
            assert grad_v(b).sup() <= 16 * 2 ** j * n
            assert grad_x(b).sup() <= 16 * 8 ** j * n


def test_core_band_inside_annulus():
    P = partition_for(G128)
    for j in range(0, P.j_max + 1):
        m = core_band(G128, j)
        if m.any():
            assert np.allclose(P.symbol(j)[m], 1.0)
    assert np.allclose(freq_radius(G128.XI, G128.ETA), G128.freq_norm)
