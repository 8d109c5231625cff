"""Resonant products of a Gaussian drift with its own Duhamel gradient.

Two routes are provided.

* Generic grid route: ``X o grad_v I_lam X (t)`` with the time integral on a
  graded Gauss rule or on the trapezoid rule of a stored time lattice. Used
  to assemble :class:`EnhancedDrift` for the solvers.
* Exact chaos route (:class:`ChaosModel`): on a box with ``L_v / L_x = R``
  integer and trapezoid nodes ``s_k = k / R``, the shear sends lattice
  modes to lattice modes, so ``grad_v I X`` is an exact trigonometric
  polynomial on a padded lattice and the Monte-Carlo product has exactly the
  zeroth-chaos mean given by :func:`zeroth_chaos_quadrature` with the same
  nodes.

For a symmetric measure the expected product at level ``l`` only depends on
``v`` and is

    Lambda_l(v) = sum_s w_s sum_zeta phi_l(0, s xi) psi(G_s zeta, -zeta)
                  i (eta + s xi) p_hat_s(zeta) m_hat(zeta)^2 mu_w(zeta) e^{i v s xi},

with ``G_s zeta = (xi, eta + s xi)`` and ``psi(a, b) = sum_{|i-j|<=1} phi_i(a) phi_j(b)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.fft import next_fast_len

from .besov import (
    BesovIndex,
    besov_norm,
    fit_slope,
    freq_radius,
    level_profile,
    partition_for,
    resonant,
)
from .grid import GridSpec, RealField, grad_v, to_coeffs, to_values
from .noise import (
    Mollifier,
    SpectralMeasureSpec,
    is_symmetric,
    mollify,
    noise_rng,
    sample_coeffs,
    sample_noise,
    spectral_weights,
)
from .semigroup import PathField, SemigroupParams, duhamel_path, duhamel_static, heat_symbol

__all__ = [
    "resonant_drift_product",
    "ZerothChaos",
    "zeroth_chaos_quadrature",
    "j22_cancellation_check",
    "chaos_grid",
    "trapezoid_nodes",
    "ChaosModel",
    "ChaosDiagnostics",
    "chaos_diagnostics",
    "CauchyTable",
    "cauchy_convergence",
    "sup_lambda_probe",
    "a_quantity",
    "EnhancedDrift",
    "build_enhanced_drift",
]


# generic grid route ------------------------------------------------------------

def resonant_drift_product(X_eps: RealField, t: float, lam: float = 0.0) -> RealField:
    """``X o grad_v int_0^t exp(-lam s) P_s X ds`` for a time-independent field."""
    if not t > 0:
        raise ValueError("t must be positive")
    return resonant(X_eps, grad_v(duhamel_static(X_eps, t, lam)))


# zeroth chaos quadrature ------------------------------------------------------

def gauss_nodes(t: float, n: int = 64):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * t * (x + 1), 0.5 * t * w


def trapezoid_nodes(t: float, ratio: float, min_nodes: int = 64):
    """Nodes ``k / ratio`` on [0, t]; requires ``t * ratio`` to be an integer."""
    K = t * ratio
    Ki = int(round(K))
    if abs(K - Ki) > 1e-9 * max(1.0, K) or Ki < 1:
        raise ValueError(f"t * L_v / L_x = {K} is not a positive integer")
    if Ki + 1 < min_nodes:
        raise ValueError(f"only {Ki + 1} commensurate nodes, need {min_nodes}")
    s = np.arange(Ki + 1) / ratio
    w = np.full(Ki + 1, 1.0 / ratio)
    w[0] *= 0.5
    w[-1] *= 0.5
    return s, w


def _psi(r_a: np.ndarray, r_b: np.ndarray, top: int) -> np.ndarray:
    """``sum_{|i-j|<=1} phi_i(r_a) phi_j(r_b)`` over levels -1..top."""
    A = [level_profile(i, r_a) for i in range(-1, top + 1)]
    B = [level_profile(i, r_b) for i in range(-1, top + 1)]
    out = np.zeros(np.broadcast(r_a, r_b).shape)
    n = len(A)
    for i in range(n):
        near = B[i] + (B[i - 1] if i > 0 else 0.0) + (B[i + 1] if i + 1 < n else 0.0)
        out += A[i] * near
    return out


def _top_level(r_max: float) -> int:
    return max(0, int(np.ceil(np.log2(max(r_max, 1.0))))) + 1


@dataclass(frozen=True)
class ZerothChaos:
    """``x``-independent profile of the expected level-``j`` product."""

    level: int
    t: float
    epsilon: float
    v: np.ndarray
    values: np.ndarray
    scale: float

    @property
    def real_sup(self) -> float:
        return float(np.max(np.abs(self.values.real)))

    @property
    def imag_ratio(self) -> float:
        top = self.real_sup
        return float(np.max(np.abs(self.values.imag)) / top) if top > 0 else 0.0

    def field(self, grid: GridSpec) -> np.ndarray:
        if not np.array_equal(self.v, grid.v):
            raise ValueError("profile was evaluated on a different v grid")
        return np.broadcast_to(self.values.real[None, :], grid.shape)


def _chaos_sum(spec, grid, j, t, eps, lam, nodes, weights, v, term, anisotropic, drop_nyquist,
               asymmetry=0.0, mu=None):
    if mu is None:
        mu = spectral_weights(spec, grid, drop_nyquist=drop_nyquist, asymmetry=asymmetry)
    nz = mu > 0
    xi, eta, wv = grid.XI[nz], grid.ETA[nz], mu[nz]
    m = Mollifier(eps, anisotropic)
    amp = m.hat(xi, eta) ** 2 * wv
    r0 = freq_radius(xi, eta)
    xs = np.unique(xi)
    col = np.searchsorted(xs, xi)
    C = np.zeros((len(nodes), len(xs)), dtype=complex)
    Cabs = np.zeros((len(nodes), len(xs)))
    for k, (s, ws) in enumerate(zip(nodes, weights)):
        if ws == 0:
            continue
        outer = level_profile(j, np.abs(s * xi))
        if not np.any(outer):
            continue
        if term == "full":
            rs = freq_radius(xi, eta + s * xi)
            top = _top_level(max(rs.max(), r0.max()))
            g = _psi(rs, r0, top) * 1j * (eta + s * xi) * heat_symbol(xi, eta, s)
        else:
            top = _top_level(r0.max())
            g = _psi(r0, r0, top) * 1j * eta * np.exp(-s * eta ** 2 - s ** 3 * xi ** 2 / 3.0)
        vals = ws * np.exp(-lam * s) * outer * g * amp
        C[k] = np.bincount(col, weights=vals.real, minlength=len(xs)) + 1j * np.bincount(
            col, weights=vals.imag, minlength=len(xs))
        Cabs[k] = np.bincount(col, weights=np.abs(vals), minlength=len(xs))
    phase = np.exp(1j * v[:, None, None] * nodes[None, :, None] * xs[None, None, :])
    prof = np.einsum("vkx,kx->v", phase, C)
    scale = float(Cabs.sum())
    return prof, scale


def zeroth_chaos_quadrature(spec: SpectralMeasureSpec, grid: GridSpec, j: int, t: float, eps: float,
                            lam: float = 0.0, nodes: str | tuple = "gauss", n_nodes: int = 64,
                            v: np.ndarray | None = None, anisotropic: bool = True,
                            drop_nyquist: bool = True) -> ZerothChaos:
    """Expected level-``j`` resonant product as a function of ``v``.

    ``nodes`` is ``"gauss"`` (``n_nodes`` Gauss-Legendre points), ``"trapezoid"``
    (commensurate nodes of the box) or an explicit ``(s, w)`` pair.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    s, w = _resolve_nodes(nodes, t, grid, n_nodes)
    vv = grid.v if v is None else np.asarray(v, dtype=float)
    prof, scale = _chaos_sum(spec, grid, j, t, eps, lam, s, w, vv, "full", anisotropic, drop_nyquist)
    return ZerothChaos(j, t, eps, vv, prof, scale)


def _resolve_nodes(nodes, t, grid, n_nodes):
    if isinstance(nodes, str):
        if nodes == "gauss":
            return gauss_nodes(t, n_nodes)
        if nodes == "trapezoid":
            return trapezoid_nodes(t, grid.L_v / grid.L_x)
        raise ValueError(f"unknown node rule {nodes!r}")
    s, w = nodes
    return np.asarray(s, float), np.asarray(w, float)


@dataclass(frozen=True)
class J22Result:
    residual: float
    scale: float
    relative: float


def j22_cancellation_check(spec: SpectralMeasureSpec, grid: GridSpec, j: int, t: float, eps: float,
                           asymmetry: float = 0.0, allow_asymmetric: bool = False,
                           nodes: str | tuple = "gauss", n_nodes: int = 64,
                           anisotropic: bool = True) -> J22Result:
    """Size of the odd-in-``eta`` term, which integrates to zero for a symmetric measure.

    ``relative`` divides the sup over ``v`` by the sup of the sum of
    absolute values of the same summands, i.e. the size it would have
    without cancellation.
    """
    if t == 0:
        return J22Result(0.0, 0.0, 0.0)
    mu = spectral_weights(spec, grid, drop_nyquist=True, asymmetry=asymmetry)
    if not is_symmetric(mu) and not allow_asymmetric:
        raise ValueError("measure is not symmetric in xi and eta separately")
    s, w = _resolve_nodes(nodes, t, grid, n_nodes)
    prof, scale = _chaos_sum(spec, grid, j, t, eps, 0.0, s, w, grid.v, "j22", anisotropic, True, mu=mu)
    res = float(np.max(np.abs(prof)))
    return J22Result(res, scale, res / scale if scale > 0 else 0.0)


# exact chaos route --------------------------------------------------------------

def chaos_grid(n_x: int = 64, n_v: int = 256, ratio: int = 640, L_v: float = 20 * np.pi) -> GridSpec:
    """Box with ``L_v / L_x = ratio`` so that shears by ``k / ratio`` are lattice maps."""
    return GridSpec(n_x, n_v, L_v / ratio, L_v)


def _even_fast(n: int) -> int:
    m = next_fast_len(n)
    while m % 2:
        m = next_fast_len(m + 1)
    return m


class ChaosModel:
    """Exact Monte-Carlo evaluation of ``X_eps o grad_v I_lam X_eps (t)``.

    Parameters
    ----------
    spec : SpectralMeasureSpec
    grid : GridSpec
        Base box with integer ``L_v / L_x``.
    t : float
        Final time; ``t L_v / L_x`` must be an integer.
    lam : float
        Damping of the Duhamel integral.
    """

    def __init__(self, spec: SpectralMeasureSpec, grid: GridSpec, t: float, lam: float = 0.0,
                 anisotropic: bool = True, prune: float = 1e-16, workers: int = 1):
        self.spec, self.grid, self.t, self.lam = spec, grid, t, lam
        self.anisotropic = anisotropic
        ratio = grid.L_v / grid.L_x
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("L_v / L_x must be an integer for the exact chaos route")
        self.ratio = int(round(ratio))
        self.nodes, self.weights = trapezoid_nodes(t, self.ratio)
        self.mu = spectral_weights(spec, grid, drop_nyquist=True)
        self.nz = np.nonzero(self.mu > 0)
        kx = grid.kx[self.nz[0]]
        kv = grid.kv[self.nz[1]]
        xi = grid.xi[self.nz[0]]
        eta = grid.eta[self.nz[1]]
        self.xi, self.eta = xi, eta
        n_modes = len(xi)
        rows_kv, cols, vals = [], [], []
        sq = np.sqrt(self.mu[self.nz])
        for k, (s, ws) in enumerate(zip(self.nodes, self.weights)):
            val = ws * np.exp(-lam * s) * 1j * (eta + s * xi) * heat_symbol(xi, eta, s)
            keep = np.abs(val) * sq > 0
            top = np.max(np.abs(val) * sq)
            keep &= np.abs(val) * sq > prune * top
            idx = np.nonzero(keep)[0]
            rows_kv.append(kv[idx] + k * kx[idx])
            cols.append(idx)
            vals.append(val[idx])
        tkv = np.concatenate(rows_kv)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        reach = int(np.max(np.abs(tkv)))
        self.reach = reach
        self.n_v_pad = _even_fast(2 * (grid.n_v // 2 + reach + 1))
        self.n_x_pad = 2 * grid.n_x
        # rows: (base kx position, padded kv position)
        ix = self.nz[0][cols]
        row = ix * self.n_v_pad + (tkv % self.n_v_pad)
        self.transfer = sp.csr_matrix((vals, (row, cols)), shape=(grid.n_x * self.n_v_pad, n_modes))
        self._x_rows = self.nz[0] * self.n_v_pad + (kv % self.n_v_pad)
        pad_eta = 2 * np.pi / grid.L_v * np.fft.fftfreq(self.n_v_pad, 1.0 / self.n_v_pad)
        self.pad_eta = pad_eta
        self.radius = freq_radius(grid.xi[:, None], pad_eta[None, :])
        self.top = _top_level(float(self.radius.max()))
        self.neg_row = (-grid.kx) % grid.n_x
        self._prof = None
        self.workers = workers
        self.v_phase = np.where(np.fft.fftfreq(self.n_v_pad, 1.0 / self.n_v_pad).astype(int) % 2 == 0, 1.0, -1.0)

    # sampling -----------------------------------------------------------
    def sample_modes(self, seeds: Sequence[int], component_index: int = 0) -> np.ndarray:
        """Support coefficients, identical to ``sample_noise(..., drop_nyquist=True)``."""
        out = np.empty((len(seeds), len(self.xi)), dtype=complex)
        for i, s in enumerate(seeds):
            out[i] = sample_coeffs(self.mu, noise_rng(s, component_index))[self.nz]
        return out

    def _mixed(self, modes: np.ndarray, eps: float):
        """X and grad_v I X as (batch, n_x, n_v_pad) coefficient arrays."""
        B = modes.shape[0]
        m = Mollifier(eps, self.anisotropic).hat(self.xi, self.eta)
        y = modes * m[None, :]
        X = np.zeros((B, self.grid.n_x * self.n_v_pad), dtype=complex)
        X[:, self._x_rows] = y
        G = (self.transfer @ y.T).T
        shape = (B, self.grid.n_x, self.n_v_pad)
        return X.reshape(shape), np.asarray(G).reshape(shape)

    def _levels(self):
        if self._prof is None:
            self._prof = [level_profile(i, self.radius) for i in range(-1, self.top + 1)]
            base = np.zeros(self.radius.shape, dtype=bool)
            base.flat[self._x_rows] = True
            self._x_live = [bool(np.any(p[base])) for p in self._prof]
        return self._prof

    def x_averaged_levels(self, modes: np.ndarray, eps: float, levels: Sequence[int],
                          v_eval: np.ndarray) -> np.ndarray:
        """``x``-average of ``R_l`` of the product at the points ``v_eval``.

        Returns an array of shape (batch, len(levels), len(v_eval)).
        """
        X, G = self._mixed(modes, eps)
        prof = self._levels()
        n_v_pad = self.n_v_pad

        def synth(c):
            return sfft.ifft(c * self.v_phase, axis=-1, workers=self.workers) * n_v_pad

        n = len(prof)
        live = [i for i in range(n) if self._x_live[i]]
        need = sorted({k for i in live for k in (i - 1, i, i + 1) if 0 <= k < n})
        b = {k: synth(G * prof[k]) for k in need}
        m = np.zeros((X.shape[0], n_v_pad))
        for i in live:
            near = sum(b[k] for k in (i - 1, i, i + 1) if k in b)
            m += np.sum(synth(X * prof[i]) * near[:, self.neg_row, :], axis=1).real
        coef = sfft.fft(m, axis=-1, workers=self.workers) * self.v_phase / n_v_pad
        kap = self.pad_eta
        E = np.exp(1j * np.outer(kap, np.asarray(v_eval, float)))
        out = np.empty((X.shape[0], len(levels), len(v_eval)))
        for li, l in enumerate(levels):
            w = level_profile(l, np.abs(kap))
            out[:, li, :] = ((coef * w) @ E).real
        return out

    def product_grid(self) -> GridSpec:
        return GridSpec(self.n_x_pad, self.n_v_pad, self.grid.L_x, self.grid.L_v)

    def product_fields(self, modes: np.ndarray, eps: float) -> np.ndarray:
        """Full products on the alias-free grid, shape (batch, n_x_pad, n_v_pad)."""
        X, G = self._mixed(modes, eps)
        pg = self.product_grid()
        rows = self.grid.kx % self.n_x_pad
        prof = self._levels()
        B = X.shape[0]
        n = len(prof)

        def full(c):
            out = np.zeros((B, self.n_x_pad, self.n_v_pad), dtype=complex)
            out[:, rows, :] = c
            return np.stack([to_values(pg, o) for o in out])

        a = [full(X * p) for p in prof]
        b = [full(G * p) for p in prof]
        M = np.zeros((B,) + pg.shape)
        for i in range(n):
            M += a[i] * b[i]
            if i + 1 < n:
                M += a[i] * b[i + 1] + a[i + 1] * b[i]
        return M


@dataclass(frozen=True)
class ChaosDiagnostics:
    level: int
    t: float
    epsilon: float
    v_eval: float
    lambda_mc_mean: float
    lambda_quadrature: float
    mc_std: float
    samples: int
    j22_residual: float

    @property
    def standard_error(self) -> float:
        return self.mc_std / np.sqrt(self.samples)

    @property
    def z_score(self) -> float:
        se = self.standard_error
        return abs(self.lambda_mc_mean - self.lambda_quadrature) / se if se > 0 else 0.0

    def csv_row(self) -> str:
        return (f"{self.level},{self.t:.17g},{self.epsilon:.17g},{self.lambda_mc_mean:.17g},"
                f"{self.lambda_quadrature:.17g},{self.mc_std:.17g},{self.j22_residual:.17g}")


CHAOS_CSV_HEADER = "j,t,eps,mc_mean_norm,quad_norm,mc_std,j22_residual"


def chaos_diagnostics(spec: SpectralMeasureSpec, grid: GridSpec, levels: Sequence[int], t: float, eps: float,
                      seeds: Sequence[int], batch: int = 50, lam: float = 0.0,
                      workers: int = 1) -> list[ChaosDiagnostics]:
    """Monte-Carlo mean of the level-``l`` product against its zeroth-chaos quadrature.

    Each level is compared at the ``v`` where the quadrature profile peaks;
    both sides use the same commensurate trapezoid nodes.
    """
    model = ChaosModel(spec, grid, t, lam, workers=workers)
    quads = [zeroth_chaos_quadrature(spec, grid, l, t, eps, lam, nodes=(model.nodes, model.weights))
             for l in levels]
    v_star = np.array([q.v[int(np.argmax(np.abs(q.values.real)))] for q in quads])
    vals = []
    for b0 in range(0, len(seeds), batch):
        modes = model.sample_modes(seeds[b0:b0 + batch])
        out = model.x_averaged_levels(modes, eps, levels, v_star)
        vals.append(out[:, np.arange(len(levels)), np.arange(len(levels))])
    vals = np.concatenate(vals)
    res = []
    for i, l in enumerate(levels):
        q = quads[i]
        qv = float(q.values.real[int(np.argmax(np.abs(q.values.real)))])
        j22 = j22_cancellation_check(spec, grid, l, t, eps, nodes=(model.nodes, model.weights)).relative
        res.append(ChaosDiagnostics(l, t, eps, float(v_star[i]), float(vals[:, i].mean()), qv,
                                    float(vals[:, i].std(ddof=1)), len(seeds), j22))
    return res


# Cauchy ladders ----------------------------------------------------------------

@dataclass(frozen=True)
class CauchyTable:
    pairs: tuple
    lambda_diff: tuple
    mc_diff: tuple

    @property
    def lambda_ratios(self) -> list:
        d = self.lambda_diff
        return [d[i + 1] / d[i] for i in range(len(d) - 1)]

    @property
    def mc_ratios(self) -> list:
        d = self.mc_diff
        return [d[i + 1] / d[i] for i in range(len(d) - 1)]

    def strictly_decreasing(self) -> bool:
        return all(r < 1 for r in self.lambda_ratios + self.mc_ratios)

    def to_csv(self) -> str:
        rows = ["eps,eps_half,lambda_diff,mc_diff"]
        for (a, b), x, y in zip(self.pairs, self.lambda_diff, self.mc_diff):
            rows.append(f"{a:.17g},{b:.17g},{x:.17g},{y:.17g}")
        return "\n".join(rows) + "\n"


def cauchy_convergence(spec: SpectralMeasureSpec, grid: GridSpec, seeds: Sequence[int],
                       eps_ladder: Sequence[float], t: float, j_window: tuple[int, int],
                       alpha: float) -> CauchyTable:
    """Weighted level-sup differences between consecutive mollification scales.

    Column ``lambda_diff`` uses the zeroth-chaos quadrature, ``mc_diff`` the
    full Monte-Carlo products on common samples, averaged over seeds.
    """
    eps_ladder = list(eps_ladder)
    if len(eps_ladder) < 2:
        return CauchyTable((), (), ())
    for a, b in zip(eps_ladder[:-1], eps_ladder[1:]):
        if not np.isclose(b, a / 2):
            raise ValueError("each scale must be half the previous one")
    lo, hi = j_window
    levels = list(range(lo, hi + 1))
    wts = np.exp2((1 - 2 * alpha) * np.array(levels))
    model = ChaosModel(spec, grid, t)
    nodes = (model.nodes, model.weights)
    lam_prof = {e: [zeroth_chaos_quadrature(spec, grid, l, t, e, nodes=nodes).values.real for l in levels]
                for e in eps_ladder}
    modes = model.sample_modes(list(seeds))
    pg = model.product_grid()
    P = partition_for(pg)
    fields = {}
    for e in eps_ladder:
        fields[e] = np.concatenate([model.product_fields(modes[i:i + 4], e) for i in range(0, len(seeds), 4)])
    pairs, ld, md = [], [], []
    for a, b in zip(eps_ladder[:-1], eps_ladder[1:]):
        pairs.append((a, b))
        ld.append(float(max(w * np.max(np.abs(x - y)) for w, x, y in zip(wts, lam_prof[a], lam_prof[b]))))
        per_seed = []
        for D in fields[a] - fields[b]:
            c = to_coeffs(pg, D)
            per_seed.append(max(w * np.max(np.abs(to_values(pg, c * P.symbol(l)))) for w, l in zip(wts, levels)
                                if l <= P.j_max))
        md.append(float(np.mean(per_seed)))
    return CauchyTable(tuple(pairs), tuple(ld), tuple(md))


# lambda probe and the A quantity ----------------------------------------------

@dataclass(frozen=True)
class LambdaProbe:
    lambdas: tuple
    lhs: tuple
    rhs: float
    ok: bool
    monotone: bool


def sup_lambda_probe(b: RealField, f: RealField, T: float, lambdas: Sequence[float] = (0, 1, 10, 100),
                     n_lattice: int = 9, tol: float = 1e-12) -> LambdaProbe:
    """Compare ``|b o grad_v I_lam f (T)|`` with ``2 sup_s |b o grad_v int_s^T P_{T-r} f dr|``."""
    def norm(g):
        return resonant(b, grad_v(g)).sup()

    lhs = tuple(norm(duhamel_static(f, T, lam)) for lam in lambdas)
    rhs_vals = [norm(duhamel_static(f, T - s)) if T - s > 0 else 0.0 for s in np.linspace(0, T, n_lattice)]
    rhs = max(rhs_vals)
    ok = all(x <= 2 * rhs + tol for x in lhs)
    mono = all(lhs[i + 1] <= lhs[i] * (1 + 1e-9) + tol for i in range(len(lhs) - 1))
    return LambdaProbe(tuple(lambdas), lhs, rhs, ok, mono)


def a_quantity(b: PathField | RealField, f: PathField | RealField, products: dict, alpha: float) -> float:
    """``sup_lam sup_t |b o grad I_lam f|_{1 - 2 alpha} + (|b|_{-alpha} + 1) |f|_{-alpha}``.

    ``products`` maps each probed ``lam`` to a :class:`PathField` of resonant products.
    """
    def fields(p):
        return p.fields if isinstance(p, PathField) else (p,)

    hi = BesovIndex(1 - 2 * alpha)
    lo = BesovIndex(-alpha)
    prod = max((besov_norm(g, hi).norm for p in products.values() for g in fields(p)), default=0.0)
    nb = max(besov_norm(g, lo).norm for g in fields(b))
    nf = max(besov_norm(g, lo).norm for g in fields(f))
    return float(prod + (nb + 1.0) * nf)


@dataclass(frozen=True, eq=False)
class EnhancedDrift:
    """Drift together with its resonant products at ``lam = 0`` and probe values."""

    alpha: float
    b: RealField
    times: np.ndarray
    products: dict
    lambda_probes: dict
    a_quantity: float
    epsilon_ladder: tuple = ()
    convergence: CauchyTable | None = None
    product_slope: float = float("nan")
    manifest: dict = field(default_factory=dict)

    def product(self, i: int = 0, j: int = 0) -> PathField:
        return self.products[(i, j)]


def _products_on(b: RealField, times: np.ndarray, lam: float, quadrature: str, substeps: int) -> PathField:
    if quadrature == "trapezoid":
        ib = duhamel_path(PathField.constant(b, times), SemigroupParams(lam, substeps))
        return PathField(times, tuple(resonant(b, grad_v(g)) for g in ib.fields))
    out = []
    for t in times:
        out.append(RealField.zeros(b.grid) if t == 0 else resonant_drift_product(b, t, lam))
    return PathField(times, tuple(out))


def build_enhanced_drift(spec: SpectralMeasureSpec | None, grid: GridSpec, seed: int, eps: float, alpha: float,
                         T: float, lambda_probes: Sequence[float] = (1.0, 10.0), times: Sequence[float] | None = None,
                         n_times: int = 5, smooth_b: RealField | None = None, f: RealField | None = None,
                         quadrature: str = "graded", substeps: int = 1, amplitude: float = 1.0,
                         ladder: dict | None = None) -> EnhancedDrift:
    """Mollified noise sample with its resonant products and the size estimate ``A``.

    Parameters
    ----------
    smooth_b : RealField, optional
        Bypass the noise and use this drift instead.
    quadrature : {"graded", "trapezoid"}
        Time rule for the Duhamel integral; ``"trapezoid"`` matches the
        solver's stored time lattice.
    ladder : dict, optional
        Keyword arguments for :func:`cauchy_convergence` to attach a table.
    """
    if smooth_b is None:
        if spec is None:
            raise ValueError("need a measure or an explicit drift")
        viol = spec.constraint_violations()
        if viol:
            raise ValueError("invalid measure: " + "; ".join(viol))
        X = sample_noise(spec, grid, seed)
        b = mollify(X, Mollifier(eps)) * amplitude
    else:
        b = smooth_b
    ts = np.linspace(0.0, T, n_times) if times is None else np.asarray(times, float)
    products = {(0, 0): _products_on(b, ts, 0.0, quadrature, substeps)}
    probes = {float(l): _products_on(b, ts, float(l), quadrature, substeps) for l in lambda_probes}
    ff = b if f is None else f
    A = a_quantity(b, ff, dict({0.0: products[(0, 0)]}, **{str(k): v for k, v in probes.items()}), alpha)
    last = products[(0, 0)].fields[-1]
    slope = besov_norm(last, BesovIndex(1 - 2 * alpha)).fitted_slope
    table = cauchy_convergence(**ladder) if ladder else None
    eps_list = tuple(ladder["eps_ladder"]) if ladder else (eps,)
    manifest = {"seed": seed, "epsilon": eps, "alpha": alpha, "T": T,
                "spec": spec.to_dict() if spec is not None else None, "grid": grid.to_dict()}
    return EnhancedDrift(alpha, b, ts, products, probes, A, eps_list, table, slope, manifest)
