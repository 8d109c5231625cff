"""Gaussian fields with prescribed spectral measure, mollifiers and chaos functionals.

A sample is ``X(z) = sum_zeta X_hat(zeta) exp(i zeta.z)`` with
``E X_hat(zeta) X_hat(zeta') = mu_w(zeta) [zeta' = -zeta]``, where the
discrete weight ``mu_w`` is the spectral density times the frequency cell
volume. For a test function ``f`` with ``f_hat(zeta) = int exp(-i zeta.z) f``
this gives ``E X(f) X(g) = sum f_hat(zeta) g_hat(-zeta) mu_w(zeta)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Sequence

import numpy as np

from .grid import GridSpec, RealField, SpectralField, reflect, to_coeffs, to_values

__all__ = [
    "SpectralMeasureSpec",
    "MeasureReport",
    "validate_measure",
    "spectral_weights",
    "noise_rng",
    "NoiseSample",
    "sample_noise",
    "sample_coeffs",
    "Mollifier",
    "mollify",
    "test_function_hat",
    "covariance_quadrature",
    "pair_expectation",
    "pair_variance",
    "bilinear_samples",
]

Kind = Literal["x_colored", "v_white_colored", "product"]


@dataclass(frozen=True)
class SpectralMeasureSpec:
    """Spectral measure of the driving noise.

    Parameters
    ----------
    kind : {"x_colored", "v_white_colored", "product"}
        ``|xi|^-g dxi delta_0(deta)``, ``|eta|^-g delta_0(dxi) deta`` or
        ``|xi|^-g1 |eta|^-g2 dxi deta``.
    gammas : tuple of float
        One exponent for the axis kinds, two for ``product``.
    beta : float
        Target regularity in (1/2, 2/3).
    """

    kind: Kind
    gammas: tuple
    beta: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        need = 2 if self.kind == "product" else 1
        if self.kind not in ("x_colored", "v_white_colored", "product"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if len(self.gammas) != need:
            raise ValueError(f"{self.kind} takes {need} exponent(s), got {len(self.gammas)}")

    def constraint_violations(self) -> list[str]:
        """Reasons the parameters fail the admissibility conditions (empty when fine)."""
        b = self.beta
        out = []
        if not 0.5 < b < 2.0 / 3.0:
            out.append(f"beta={b} outside (1/2, 2/3)")
        if self.kind == "x_colored":
            (g,) = self.gammas
            if not (1 - 2 * b / 3 < g < 1):
                out.append(f"gamma={g} outside ({1 - 2 * b / 3:.6g}, 1)")
        elif self.kind == "v_white_colored":
            (g,) = self.gammas
            if not (0 <= g < 1):
                out.append(f"gamma={g} outside [0, 1)")
            if not g > 1 - 2 * b:
                out.append(f"gamma={g} must exceed 1 - 2 beta = {1 - 2 * b:.6g}")
        else:
            g1, g2 = self.gammas
            for name, g in (("gamma1", g1), ("gamma2", g2)):
                if not (0 <= g < 1):
                    out.append(f"{name}={g} outside [0, 1)")
            if not 3 * g1 + g2 > 4 - 2 * b:
                out.append(f"3 gamma1 + gamma2 = {3 * g1 + g2:.6g} must exceed 4 - 2 beta = {4 - 2 * b:.6g}")
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gammas": list(self.gammas), "beta": self.beta}


def _power(k: np.ndarray, g: float) -> np.ndarray:
    a = np.abs(k)
    out = np.zeros_like(a, dtype=float)
    nz = a > 0
    out[nz] = a[nz] ** (-g)
    return out


def spectral_weights(spec: SpectralMeasureSpec, grid: GridSpec, drop_nyquist: bool = False,
                     asymmetry: float = 0.0) -> np.ndarray:
    """Discrete measure weights ``mu_w`` on the frequency lattice (FFT order).

    Delta factors become a single zero row or column with unit transverse
    weight; the singular axis cells of ``|k|^-g`` get weight 0.
    ``asymmetry`` multiplies by ``1 + a sign(xi) sign(eta)``, which keeps
    ``zeta -> -zeta`` evenness but breaks evenness in ``eta`` alone; it
    exists only to probe cancellation checks.
    """
    dxi = 2 * np.pi / grid.L_x
    deta = 2 * np.pi / grid.L_v
    XI, ETA = grid.XI, grid.ETA
    if spec.kind == "x_colored":
        w = _power(XI, spec.gammas[0]) * dxi * (ETA == 0)
    elif spec.kind == "v_white_colored":
        w = _power(ETA, spec.gammas[0]) * deta * (XI == 0)
    else:
        w = _power(XI, spec.gammas[0]) * _power(ETA, spec.gammas[1]) * dxi * deta
    w = np.array(w, dtype=float)
    if drop_nyquist:
        w[grid.n_x // 2, :] = 0.0
        w[:, grid.n_v // 2] = 0.0
    if asymmetry:
        w = w * (1.0 + asymmetry * np.sign(XI) * np.sign(ETA))
    return w


def is_symmetric(w: np.ndarray) -> bool:
    """Evenness in ``xi`` and in ``eta`` separately (Nyquist lines map to themselves)."""
    flip_x = np.roll(np.flip(w, axis=0), 1, axis=0)
    flip_v = np.roll(np.flip(w, axis=1), 1, axis=1)
    return bool(np.array_equal(w, flip_x) and np.array_equal(w, flip_v))


@dataclass(frozen=True)
class MeasureReport:
    ok: bool
    constraints_ok: bool
    violations: tuple
    worst_shift_integral: float
    refined_shift_integral: float
    refinement_ratio: float
    symmetric: bool


def _worst_shift(spec: SpectralMeasureSpec, grid: GridSpec, probes: int) -> float:
    w = spectral_weights(spec, grid)
    nz = w > 0
    xi, eta, wv = grid.XI[nz], grid.ETA[nz], w[nz]
    sx = np.unique(np.round(np.linspace(-grid.n_x // 2, grid.n_x // 2 - 1, probes))) * 2 * np.pi / grid.L_x
    sv = np.unique(np.round(np.linspace(-grid.n_v // 2, grid.n_v // 2 - 1, probes))) * 2 * np.pi / grid.L_v
    worst = 0.0
    for a in sx:
        for b in sv:
            r = np.cbrt(np.abs(xi + a)) + np.abs(eta + b)
            worst = max(worst, float(np.sum(wv / (1.0 + r) ** (2 * spec.beta))))
    return worst


def validate_measure(spec: SpectralMeasureSpec, grid: GridSpec, probes: int = 9,
                     tolerance: float = 1.25) -> MeasureReport:
    """Check admissibility and boundedness of the shifted weighted sums.

    The sums ``sum mu_w(zeta) / (1 + |zeta' + zeta|_a)^(2 beta)`` are
    maximised over a lattice of shifts ``zeta'``; the result must not grow by
    more than ``tolerance`` when the grid is refined twofold at fixed box.
    """
    viol = tuple(spec.constraint_violations())
    worst = _worst_shift(spec, grid, probes)
    fine = GridSpec(2 * grid.n_x, 2 * grid.n_v, grid.L_x, grid.L_v)
    refined = _worst_shift(spec, fine, probes)
    ratio = refined / worst if worst > 0 else float("inf")
    sym = is_symmetric(spectral_weights(spec, grid))
    ok = not viol and ratio <= tolerance and sym
    return MeasureReport(ok, not viol, viol, worst, refined, ratio, sym)


# sampling ------------------------------------------------------------------

_PURPOSE_NOISE = 0


def noise_rng(seed: int, component_index: int = 0, purpose: int = _PURPOSE_NOISE) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, component_index, purpose)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(component_index), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))


def sample_coeffs(weights: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Hermitian Gaussian coefficients with ``E |c|^2 = weights``.

    Built from the FFT of real white noise, which is exactly the required
    law: independent complex normals on paired modes and real normals on
    self-paired ones.
    """
    shape = weights.shape if size is None else (size,) + weights.shape
    white = rng.standard_normal(shape)
    n = weights.shape[0] * weights.shape[1]
    return np.sqrt(weights) * np.fft.fft2(white, axes=(-2, -1)) / np.sqrt(n)


@dataclass(frozen=True, eq=False)
class NoiseSample:
    spec: SpectralMeasureSpec
    seed: int
    component_index: int
    field: SpectralField

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    def to_real(self) -> RealField:
        return self.field.to_real()

    def manifest(self, epsilon: float | None = None) -> dict:
        m = dict(self.spec.to_dict(), seed=self.seed, component_index=self.component_index)
        if epsilon is not None:
            m["epsilon"] = epsilon
        return m


def sample_noise(spec: SpectralMeasureSpec, grid: GridSpec, seed: int, component_index: int = 0,
                 drop_nyquist: bool = False, check: bool = True) -> NoiseSample:
    """One realisation, deterministic in ``(seed, component_index)``.

    The stored coefficients follow the centred-grid convention of
    :mod:`kinpara.grid`, so ``to_real`` returns the field samples.
    """
    if check and spec.constraint_violations():
        raise ValueError("invalid measure: " + "; ".join(spec.constraint_violations()))
    w = spectral_weights(spec, grid, drop_nyquist=drop_nyquist)
    c = sample_coeffs(w, noise_rng(seed, component_index))
    return NoiseSample(spec, int(seed), int(component_index), SpectralField(grid, c, hermitian=True))


# mollifier -----------------------------------------------------------------

def _bump(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_table():
    # trapezoid rule is spectrally accurate for a smooth compactly supported integrand
    y = np.linspace(-1.0, 1.0, 4097)
    b = _bump(y)
    h = y[1] - y[0]
    mass = float(np.sum(b) * h)
    return y, b * h / mass, mass


def bump_hat(k):
    """Fourier transform of the unit-mass bump ``C exp(-1 / (1 - y^2))`` on [-1, 1]."""
    y, wb, _ = _bump_table()
    k = np.asarray(k, dtype=float)
    flat = np.abs(k).ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.empty(len(uniq))
    for start in range(0, len(uniq), 256):
        chunk = uniq[start:start + 256]
        vals[start:start + 256] = np.cos(np.outer(chunk, y)) @ wb
    return vals[inv].reshape(k.shape)


def bump_density(y):
    _, _, mass = _bump_table()
    return _bump(y) / mass


@dataclass(frozen=True)
class Mollifier:
    """Tensor bump mollifier at scale ``epsilon``.

    The anisotropic profile is ``eps^-4 b(x / eps^3) b(v / eps)``; with
    ``anisotropic=False`` it is ``eps^-2 b(x / eps) b(v / eps)``.
    ``epsilon = 0`` is the identity.
    """

    epsilon: float
    anisotropic: bool = True

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")

    def scales(self) -> tuple[float, float]:
        e = self.epsilon
        return (e ** 3 if self.anisotropic else e, e)

    def hat(self, xi, eta):
        if self.epsilon == 0:
            return np.ones(np.broadcast(np.asarray(xi), np.asarray(eta)).shape)
        sx, sv = self.scales()
        return bump_hat(sx * np.asarray(xi)) * bump_hat(sv * np.asarray(eta))

    def hat_on(self, grid: GridSpec) -> np.ndarray:
        return _hat_on_grid(self, grid)

    def density(self, x, v):
        sx, sv = self.scales()
        return bump_density(np.asarray(x) / sx) * bump_density(np.asarray(v) / sv) / (sx * sv)


@lru_cache(maxsize=64)
def _hat_on_grid(m: Mollifier, grid: GridSpec) -> np.ndarray:
    if m.epsilon == 0:
        return np.ones(grid.shape)
    sx, sv = m.scales()
    out = bump_hat(sx * grid.xi)[:, None] * bump_hat(sv * grid.eta)[None, :]
    out.flags.writeable = False
    return out


def mollify(X: NoiseSample | SpectralField | RealField, m: Mollifier) -> RealField:
    """Convolution with the mollifier, applied as a spectral multiplier."""
    if isinstance(X, NoiseSample):
        F = X.field
    elif isinstance(X, RealField):
        F = X.spectral()
    else:
        F = X
    return RealField(F.grid, to_values(F.grid, F.coeffs * m.hat_on(F.grid)))


# chaos functionals ---------------------------------------------------------

def test_function_hat(f: RealField) -> np.ndarray:
    """``int exp(-i zeta.z) f(z) dz`` on the lattice, i.e. area times coefficients."""
    return to_coeffs(f.grid, f.values) * f.grid.area


def covariance_quadrature(spec: SpectralMeasureSpec, f: RealField, g: RealField,
                          weights: np.ndarray | None = None) -> float:
    """``sum f_hat(zeta) g_hat(-zeta) mu_w(zeta)``."""
    w = spectral_weights(spec, f.grid) if weights is None else weights
    val = np.sum(test_function_hat(f) * reflect(test_function_hat(g)) * w)
    return float(val.real)


def sample_functional(coeffs: np.ndarray, f: RealField) -> np.ndarray:
    """``X(f) = int X f dz`` for coefficient arrays of shape (..., n_x, n_v)."""
    return np.sum(coeffs * reflect(test_function_hat(f)), axis=(-2, -1)).real


def _mode_list(weights: np.ndarray, grid: GridSpec):
    nz = np.nonzero(weights > 0)
    return nz, grid.XI[nz], grid.ETA[nz], weights[nz]


def _phi(phi, grid: GridSpec):
    if phi is None:
        return np.ones(grid.shape)
    if isinstance(phi, Mollifier):
        return phi.hat_on(grid)
    return np.asarray(phi)


def pair_expectation(spec: SpectralMeasureSpec, grid: GridSpec, H_hat: Callable, phi1=None, phi2=None,
                     weights: np.ndarray | None = None) -> complex:
    """``sum H_hat(zeta, -zeta) phi1(zeta) phi2(zeta) mu_w(zeta)``.

    ``H_hat(xi, eta, xi2, eta2)`` is the unnormalised transform of the
    kernel ``H(z, z')``; the bilinear functional is
    ``int int H(z, z') X_phi1(z) X_phi2(z') dz dz'``.
    """
    w = spectral_weights(spec, grid) if weights is None else weights
    XI, ETA = grid.XI, grid.ETA
    h = np.asarray(H_hat(XI, ETA, -XI, -ETA), dtype=complex)
    return complex(np.sum(h * _phi(phi1, grid) * _phi(phi2, grid) * w))


def pair_variance(spec: SpectralMeasureSpec, grid: GridSpec, H_hat: Callable, phi1=None, phi2=None,
                  weights: np.ndarray | None = None, chunk: int = 512) -> float:
    """``2 sum_{zeta, zeta'} |Sym H_phi(zeta, zeta')|^2 mu_w(zeta) mu_w(zeta')`` for real kernels."""
    w = spectral_weights(spec, grid) if weights is None else weights
    nz, xi, eta, wv = _mode_list(w, grid)
    p1 = _phi(phi1, grid)[nz]
    p2 = _phi(phi2, grid)[nz]
    total = 0.0
    n = len(xi)
    for a0 in range(0, n, chunk):
        sl = slice(a0, a0 + chunk)
        A = np.asarray(H_hat(xi[sl, None], eta[sl, None], xi[None, :], eta[None, :])) * p1[sl, None] * p2[None, :]
        B = np.asarray(H_hat(xi[None, :], eta[None, :], xi[sl, None], eta[sl, None])) * p1[None, :] * p2[sl, None]
        S = 0.5 * (A + B)
        total += float(np.sum(np.abs(S) ** 2 * wv[sl, None] * wv[None, :]))
    return 2.0 * total


def bilinear_samples(spec: SpectralMeasureSpec, grid: GridSpec, H_hat: Callable, seeds: Sequence[int],
                     phi1=None, phi2=None, weights: np.ndarray | None = None) -> np.ndarray:
    """Monte-Carlo values of ``(X_phi1 x X_phi2)(H)``, one per seed."""
    w = spectral_weights(spec, grid) if weights is None else weights
    nz, xi, eta, wv = _mode_list(w, grid)
    p1 = _phi(phi1, grid)[nz]
    p2 = _phi(phi2, grid)[nz]
    B = np.asarray(H_hat(-xi[:, None], -eta[:, None], -xi[None, :], -eta[None, :])) * p1[:, None] * p2[None, :]
    out = np.empty(len(seeds))
    batch = 256
    for b0 in range(0, len(seeds), batch):
        rows = []
        for s in seeds[b0:b0 + batch]:
            rows.append(sample_coeffs(w, noise_rng(s, 0))[nz])
        Xs = np.array(rows)
        out[b0:b0 + len(rows)] = np.sum((Xs @ B) * Xs, axis=1).real
    return out
