import numpy as np
import pytest

from kinpara.besov import resonant
from kinpara.enhancement import build_enhanced_drift
from kinpara.grid import GridSpec, RealField, grad_v
from kinpara.semigroup import apply_semigroup
from kinpara.solvers import (
    CFLError,
    LinearProblem,
    NonlinearProblem,
    PicardError,
    a_quantity,
    entropy,
    extract_sharp,
    fisher_information,
    kernel_convolve,
    kernel_convolve_direct,
    kernel_samples,
    manufactured_problem,
    negative_mass,
    resonant_b_grad_u,
    solve_linear,
    solve_mean_field,
    stability_experiment,
    tau_transform,
    velocity_average,
)

MF = GridSpec(32, 64, 2 * np.pi, 8 * np.pi)


def density(g, a=0.5, s=1.0):
    u = (1 + a * np.cos(g.X)) * np.exp(-g.V ** 2 / (2 * s * s))
    return RealField(g, u / (u.sum() * g.cell))


class TestLinearProblem:
    def test_step_count(self):
        p = LinearProblem(RealField.zeros(GridSpec(16, 16)), 0.1, 0.01, save_every=5)
        assert p.n_steps == 10

    @pytest.mark.parametrize("T,dt,every", [(0.1, 0.03, 1), (0.1, 0.01, 3), (0.0, 0.01, 1)])
    def test_bad_lattice(self, T, dt, every):
        with pytest.raises(ValueError):
            LinearProblem(RealField.zeros(GridSpec(16, 16)), T, dt, save_every=every).n_steps

    def test_cfl(self):
        g = GridSpec(16, 64, 2 * np.pi, 8 * np.pi)
        b = RealField(g, np.full(g.shape, 100.0))
        with pytest.raises(CFLError):
            solve_linear(LinearProblem(RealField.zeros(g), 0.1, 0.01, b=b))


class TestLinearSolve:
    G = GridSpec(64, 128, 2 * np.pi, 8 * np.pi)

    def test_free_is_semigroup(self):
        phi = RealField(self.G, np.exp(-self.G.V ** 2 / 2) * (1 + 0.5 * np.sin(self.G.X)))
        r = solve_linear(LinearProblem(phi, 0.1, 1e-2))
        assert np.max(np.abs(r.final.values - apply_semigroup(phi, 0.1).values)) < 1e-12

    def test_constant_source(self):
        phi = RealField(self.G, np.exp(-self.G.V ** 2 / 2))
        f = RealField(self.G, np.full(self.G.shape, 2.0))
        r = solve_linear(LinearProblem(phi, 0.1, 1e-2, f=f))
        assert np.max(np.abs(r.final.values - apply_semigroup(phi, 0.1).values - 0.2)) < 1e-12

    def test_damping(self):
        phi = RealField(self.G, np.exp(-self.G.V ** 2 / 2))
        r = solve_linear(LinearProblem(phi, 0.1, 1e-2, lam=2.0))
        expect = np.exp(-0.2) * apply_semigroup(phi, 0.1).values
        assert np.max(np.abs(r.final.values - expect)) < 1e-12

    def test_manufactured_second_order(self):
        finals, errs = [], []
        for dt in (4e-3, 2e-3, 1e-3):
            p, exact = manufactured_problem(self.G, 0.1, dt, lam=0.5)
            r = solve_linear(p)
            finals.append(r.final.values)
            errs.append(np.max(np.abs(r.final.values - exact(0.1))))
        d1 = np.max(np.abs(finals[0] - finals[1]))
        d2 = np.max(np.abs(finals[1] - finals[2]))
        assert 1.8 <= np.log2(d1 / d2) <= 2.2
        assert errs[-1] < 1e-5

    def test_snapshots(self):
        p, _ = manufactured_problem(self.G, 0.1, 1e-2, save_every=5)
        r = solve_linear(p)
        assert np.allclose(r.times, [0.0, 0.05, 0.1])
        lines = r.diagnostics_csv().splitlines()
        assert lines[0] == "t,mass,H,dissipation,slope_u,slope_sharp" and len(lines) == 4

    def test_callable_and_path_sources_agree(self):
        g = GridSpec(32, 64, 2 * np.pi, 8 * np.pi)
        phi = RealField(g, np.exp(-g.V ** 2 / 2))
        f = RealField(g, np.cos(g.X) * np.exp(-g.V ** 2))
        a = solve_linear(LinearProblem(phi, 0.05, 1e-2, f=f)).final.values
        b = solve_linear(LinearProblem(phi, 0.05, 1e-2, f=lambda t: f.values)).final.values
        assert np.array_equal(a, b)


class TestParacontrolled:
    G = GridSpec(64, 128, 2 * np.pi, 4 * np.pi)

    def setup_problem(self):
        g = self.G
        b = RealField(g, 0.5 * np.cos(g.X) * np.exp(-g.V ** 2 / 8))
        f = RealField(g, np.sin(g.X) * np.exp(-g.V ** 2))
        phi = RealField(g, np.exp(-g.V ** 2) * (1 + 0.3 * np.cos(g.X)))
        p = LinearProblem(phi, 0.05, 1e-3, b=b, f=f, save_every=25)
        return p, solve_linear(p)

    def test_sharp_vanishes_without_drift(self):
        g = self.G
        f = RealField(g, np.sin(g.X) * np.exp(-g.V ** 2))
        phi = RealField(g, np.exp(-g.V ** 2))
        p = LinearProblem(phi, 0.05, 1e-3, f=f, save_every=25)
        r = solve_linear(p)
        sh = extract_sharp(r, p)
        # trapezoid error of the Duhamel integral only
        assert max(s.sup() for s in sh.fields) < 1e-6 * r.final.sup()

    def test_six_term_identity(self):
        p, r = self.setup_problem()
        sh = extract_sharp(r, p)
        enh = build_enhanced_drift(None, self.G, 0, 0.0, 0.6, p.T, times=r.times, smooth_b=p.b,
                                   quadrature="trapezoid", substeps=p.save_every, lambda_probes=())
        dec = resonant_b_grad_u(r, sh, enh, p)
        for k, u in enumerate(r.path.fields):
            direct = resonant(p.b, grad_v(u))
            assert np.max(np.abs(dec.fields[k].values - direct.values)) <= 1e-10 * max(direct.sup(), 1e-300)

    def test_product_lattice_checked(self):
        p, r = self.setup_problem()
        sh = extract_sharp(r, p)
        enh = build_enhanced_drift(None, self.G, 0, 0.0, 0.6, p.T, n_times=2, smooth_b=p.b, lambda_probes=())
        with pytest.raises(ValueError):
            resonant_b_grad_u(r, sh, enh, p)
        with pytest.raises(ValueError):
            resonant_b_grad_u(r, sh, None, p)

    def test_a_quantity_grows_with_drift(self):
        g = GridSpec(32, 64, 2 * np.pi, 4 * np.pi)
        b = RealField(g, np.cos(g.X) * np.exp(-g.V ** 2 / 4))
        f = RealField(g, np.sin(g.X + g.V) * np.exp(-g.V ** 2 / 2))
        assert a_quantity(b * 2.0, f, 0.2, 0.6) > a_quantity(b, f, 0.2, 0.6) > 0


class TestKernels:
    def test_fft_matches_direct(self):
        K = kernel_samples(MF, lambda x: np.abs(x) ** -0.1)
        assert K[0] == 0.0
        m = np.exp(-MF.x ** 2)
        assert np.max(np.abs(kernel_convolve(K, m, MF.dx) - kernel_convolve_direct(K, m, MF.dx))) < 1e-12

    def test_constant_kernel(self):
        assert np.array_equal(kernel_samples(MF, 2.0), np.full(MF.n_x, 2.0))

    def test_singular_off_origin(self):
        with pytest.raises(ValueError):
            kernel_samples(MF, lambda x: np.where(np.arange(len(x)) == 3, np.inf, 1.0))

    def test_velocity_average(self):
        u = density(MF)
        assert velocity_average(u).sum() * MF.dx == pytest.approx(1.0)


class TestFunctionals:
    def test_tau_involution(self, random_field):
        assert np.array_equal(tau_transform(tau_transform(random_field)).values, random_field.values)

    def test_entropy_of_uniform(self):
        g = GridSpec(16, 16, 2.0, 2.0)
        u = RealField(g, np.full(g.shape, 0.25))
        assert entropy(u) == pytest.approx(np.log(0.25))
        assert fisher_information(u) == 0.0
        assert negative_mass(u) == 0.0

    def test_negative_mass(self):
        g = GridSpec(16, 16, 2.0, 2.0)
        assert negative_mass(RealField(g, np.full(g.shape, -1.0))) == pytest.approx(4.0)


class TestMeanField:
    def test_requires_density(self):
        with pytest.raises(ValueError):
            solve_mean_field(NonlinearProblem(density(MF) * 2.0, 0.1, 1e-2))

    def test_conserves_and_dissipates(self):
        W = RealField(MF, 0.3 * np.cos(2 * MF.X) * np.ones(MF.shape))
        K = kernel_samples(MF, np.cos)
        r = solve_mean_field(NonlinearProblem(density(MF), 0.2, 2e-3, W=W, K=K, save_every=25))
        assert r.mass_drift < 1e-12
        assert r.negative_mass.max() < 1e-10
        assert np.all(r.entropy_slack() <= 1e-4)
        assert 1 <= r.picard_iterations <= 3

    def test_picard_budget(self):
        K = kernel_samples(MF, np.cos)
        with pytest.raises(ValueError):
            NonlinearProblem(density(MF), 0.02, 2e-3, K=K, max_picard=0)
        with pytest.raises(PicardError):
            solve_mean_field(NonlinearProblem(density(MF), 0.02, 2e-3, K=K, picard_tol=1e-300, max_picard=1))

    def test_free_reduces_to_linear(self):
        phi = density(MF)
        r = solve_mean_field(NonlinearProblem(phi, 0.1, 1e-2))
        # no drift: the reflected-frame solve is the adjoint semigroup, i.e. P_t of tau phi mapped back
        expect = tau_transform(apply_semigroup(tau_transform(phi), 0.1))
        assert np.max(np.abs(r.final.values - expect.values)) < 1e-12

    def test_stability_identical_data(self):
        p = NonlinearProblem(density(MF), 0.04, 2e-3, K=kernel_samples(MF, np.cos), save_every=5)
        s = stability_experiment(p, density(MF), density(MF))
        assert s["ratio"] is None and s["bounded"] and s["C"] == 0.0

    def test_stability_bound(self):
        p = NonlinearProblem(density(MF), 0.1, 2e-3, K=kernel_samples(MF, np.cos), save_every=10)
        s = stability_experiment(p, density(MF, 0.5), density(MF, 0.2, 1.2))
        assert s["bounded"] and np.isfinite(s["C"])
