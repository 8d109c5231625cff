import numpy as np
import pytest

from kinpara.besov import level_profile, resonant
from kinpara.enhancement import (
    ChaosModel,
    build_enhanced_drift,
    cauchy_convergence,
    chaos_diagnostics,
    chaos_grid,
    j22_cancellation_check,
    resonant_drift_product,
    sup_lambda_probe,
    trapezoid_nodes,
    zeroth_chaos_quadrature,
)
from kinpara.grid import GridSpec, RealField, grad_v, to_coeffs, to_values
from kinpara.noise import SpectralMeasureSpec, sample_noise
from kinpara.semigroup import duhamel_static

PRODUCT = SpectralMeasureSpec("product", (0.8, 0.9), 0.6)
SMALL = chaos_grid(32, 128)


@pytest.fixture(scope="module")
def model():
    return ChaosModel(PRODUCT, SMALL, 0.1)


class TestNodes:
    def test_commensurate(self):
        s, w = trapezoid_nodes(0.1, 640)
        assert len(s) == 65 and w.sum() == pytest.approx(0.1)
        assert s[-1] == pytest.approx(0.1)

    def test_incommensurate_rejected(self):
        with pytest.raises(ValueError):
            trapezoid_nodes(0.1, 333)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            trapezoid_nodes(0.01, 640)


class TestGenericProduct:
    def test_matches_definition(self):
        g = GridSpec(32, 32)
        X = RealField.from_function(g, lambda x, v: np.cos(x) * np.sin(2 * v))
        direct = resonant(X, grad_v(duhamel_static(X, 0.3, 1.0)))
        assert np.array_equal(resonant_drift_product(X, 0.3, 1.0).values, direct.values)

    def test_time_positive(self):
        with pytest.raises(ValueError):
            resonant_drift_product(RealField.zeros(GridSpec(16, 16)), 0.0)


class TestZerothChaos:
    def test_real_profile(self):
        q = zeroth_chaos_quadrature(PRODUCT, SMALL, 3, 0.1, 1 / 16, nodes="trapezoid")
        assert q.imag_ratio < 1e-12
        assert q.values.shape == SMALL.v.shape

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            zeroth_chaos_quadrature(PRODUCT, SMALL, 3, 0.1, 1 / 16, nodes="simpson")

    def test_odd_term_cancels(self):
        assert j22_cancellation_check(PRODUCT, SMALL, 3, 0.1, 1 / 16).relative < 1e-12

    def test_odd_term_survives_asymmetry(self):
        with pytest.raises(ValueError):
            j22_cancellation_check(PRODUCT, SMALL, 3, 0.1, 1 / 16, asymmetry=0.5)
        r = j22_cancellation_check(PRODUCT, SMALL, 3, 0.1, 1 / 16, asymmetry=0.5, allow_asymmetric=True)
        assert r.relative > 0.05

    def test_zero_time(self):
        assert j22_cancellation_check(PRODUCT, SMALL, 3, 0.0, 1 / 16).residual == 0.0


class TestChaosModel:
    def test_needs_integer_ratio(self):
        with pytest.raises(ValueError):
            ChaosModel(PRODUCT, GridSpec(32, 128, 1.0, 2.5), 0.1)

    def test_modes_match_sampler(self, model):
        X = sample_noise(PRODUCT, SMALL, 1, drop_nyquist=True).field.coeffs
        assert np.array_equal(model.sample_modes([1])[0], X[model.nz])

    def test_x_average_matches_full_product(self, model):
        modes = model.sample_modes([1])
        pg = model.product_grid()
        idx = [pg.n_v // 2, pg.n_v // 2 + 37, 5]
        lv = model.x_averaged_levels(modes, 1 / 16, [2, 3], pg.v[idx])
        c = to_coeffs(pg, model.product_fields(modes, 1 / 16)[0])
        for li, l in enumerate([2, 3]):
            keep = np.zeros(pg.shape)
            keep[0] = level_profile(l, np.abs(pg.eta))
            expect = to_values(pg, c * keep).mean(axis=0)[idx]
            assert np.allclose(lv[0, li], expect, rtol=1e-10, atol=1e-12)

    def test_mean_matches_quadrature(self):
        for d in chaos_diagnostics(PRODUCT, SMALL, [2, 3], 0.1, 1 / 16, list(range(200))):
            assert d.z_score < 3.0
            assert d.j22_residual < 1e-12
            assert d.csv_row().count(",") == 6


class TestCauchy:
    def test_ladder_validated(self):
        with pytest.raises(ValueError):
            cauchy_convergence(PRODUCT, SMALL, range(2), [1 / 8, 1 / 10], 0.1, (1, 4), 0.62)

    def test_single_scale_is_empty(self):
        assert cauchy_convergence(PRODUCT, SMALL, range(2), [1 / 8], 0.1, (1, 4), 0.62).pairs == ()

    def test_differences_shrink(self):
        tab = cauchy_convergence(PRODUCT, SMALL, range(4), [1 / 8, 1 / 16, 1 / 32], 0.1, (1, 5), 0.62)
        assert tab.strictly_decreasing()
        assert tab.to_csv().splitlines()[0] == "eps,eps_half,lambda_diff,mc_diff"
        assert len(tab.to_csv().splitlines()) == 3


class TestLambdaProbe:
    def test_bound_and_monotone(self):
        g = GridSpec(32, 64, 2 * np.pi, 4 * np.pi)
        b = RealField.from_function(g, lambda x, v: np.cos(x) * np.exp(-v * v / 4) + np.sin(3 * v))
        f = RealField.from_function(g, lambda x, v: np.sin(2 * x + v) * np.exp(-v * v / 2))
        p = sup_lambda_probe(b, f, 0.5)
        assert p.ok and p.monotone
        assert p.lhs[0] > 0


class TestEnhancedDrift:
    def test_needs_drift(self):
        with pytest.raises(ValueError):
            build_enhanced_drift(None, GridSpec(16, 16), 0, 0.1, 0.6, 0.1)

    def test_invalid_measure(self):
        with pytest.raises(ValueError):
            build_enhanced_drift(SpectralMeasureSpec("product", (0.5, 0.5)), GridSpec(16, 16), 0, 0.1, 0.6, 0.1)

    def test_noise_drift(self):
        g = GridSpec(32, 32)
        e = build_enhanced_drift(PRODUCT, g, 3, 0.25, 0.6, 0.2, n_times=3)
        assert np.array_equal(e.product().times, np.linspace(0, 0.2, 3))
        assert e.product().fields[0].sup() == 0.0
        assert set(e.lambda_probes) == {1.0, 10.0}
        assert e.manifest["seed"] == 3 and e.manifest["spec"]["kind"] == "product"
        assert np.isfinite(e.a_quantity) and e.a_quantity > 0

    def test_quadratures_agree(self):
        g = GridSpec(32, 64, 2 * np.pi, 4 * np.pi)
        b = RealField.from_function(g, lambda x, v: np.cos(x) * np.exp(-v * v / 4))
        ts = np.linspace(0, 0.2, 5)
        gr = build_enhanced_drift(None, g, 0, 0.0, 0.6, 0.2, times=ts, smooth_b=b, lambda_probes=())
        tr = build_enhanced_drift(None, g, 0, 0.0, 0.6, 0.2, times=ts, smooth_b=b, lambda_probes=(),
                                  quadrature="trapezoid", substeps=50)
        a, c = gr.product().fields[-1], tr.product().fields[-1]
        assert np.max(np.abs(a.values - c.values)) <= 1e-4 * a.sup()
