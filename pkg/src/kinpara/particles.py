"""Euler-Maruyama simulation of the interacting kinetic particle system.

    dX = V dt,   dV = [W(X, V) + N^-1 sum_{j != i} K(X_i - X_j)] dt + sqrt(2) dB

in a frozen environment ``W``. Positions live on the centred ``x`` circle of
the grid; velocities are not wrapped and leaving the ``v`` box is counted as
an excursion.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .grid import GridSpec, RealField
from .noise import noise_rng
from .solvers import SolveReport

__all__ = [
    "TrigKernel",
    "ParticleEnsemble",
    "SdeConfig",
    "ExcursionError",
    "init_ensemble",
    "sample_from_density",
    "interaction_force",
    "step_em",
    "simulate",
    "empirical_density",
    "l1_distance",
    "compare_mean_field",
    "MomentReport",
    "moment_check",
]

_PURPOSE_INIT = 11
_PURPOSE_STEP = 12
PAIRWISE_LIMIT = 5000


class ExcursionError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrigKernel:
    """``K(x) = sum_k a_k cos(k kappa x) + b_k sin(k kappa x)`` on the ``x`` circle."""

    a: np.ndarray
    b: np.ndarray
    L_x: float = 2 * np.pi

    @property
    def kappa(self) -> float:
        return 2 * np.pi / self.L_x

    @classmethod
    def from_samples(cls, samples: np.ndarray, L_x: float) -> "TrigKernel":
        """Trigonometric interpolant of kernel samples at offsets ``d dx`` (Nyquist term dropped)."""
        n = len(samples)
        c = np.fft.rfft(samples) / n
        m = n // 2
        a = 2 * c.real
        b = -2 * c.imag
        a[0] = c[0].real
        a, b = a[:m], b[:m]
        b[0] = 0.0
        return cls(np.ascontiguousarray(a), np.ascontiguousarray(b), L_x)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = np.arange(len(self.a))
        ph = self.kappa * x[..., None] * k
        return (self.a * np.cos(ph) + self.b * np.sin(ph)).sum(axis=-1)

    def samples(self, grid: GridSpec) -> np.ndarray:
        return self(np.arange(grid.n_x) * grid.dx)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    X: np.ndarray
    V: np.ndarray
    t: float = 0.0
    step: int = 0
    excursions: int = 0

    @property
    def N(self) -> int:
        return len(self.X)


@dataclass(frozen=True, eq=False)
class SdeConfig:
    """Step size, horizon, seed, frozen environment, kernel and KDE bandwidth."""

    grid: GridSpec
    h: float
    T: float
    seed: int
    W_field: RealField | None = None
    K: TrigKernel | None = None
    bandwidth: tuple[float, float] | None = None
    strict: bool = True

    def __post_init__(self):
        if self.W_field is not None:
            guard = 1e-3 * self.grid.L_v / max(self.W_field.sup(), 1e-300)
            if self.h > guard:
                raise ValueError(f"step {self.h} exceeds the environment guard {guard:.3g}")

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.h))
        if abs(n * self.h - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of h")
        return n

    def kde_bandwidth(self) -> tuple[float, float]:
        if self.bandwidth is not None:
            return self.bandwidth
        hv = 2 * self.grid.dv
        return max(2 * self.grid.dx, hv ** 3), hv


def _wrap_x(X: np.ndarray, L: float) -> np.ndarray:
    return (X + L / 2) % L - L / 2


def sample_from_density(u: RealField, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points from a nonnegative grid density, uniform within the chosen cell."""
    if n <= 0:
        raise ValueError("empty ensemble")
    g = u.grid
    w = np.maximum(u.values, 0.0).ravel()
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    ix, iv = np.divmod(idx, g.n_v)
    X = g.x[ix] + (rng.random(n) - 0.5) * g.dx
    V = g.v[iv] + (rng.random(n) - 0.5) * g.dv
    return _wrap_x(X, g.L_x), V


def init_ensemble(N: int, seed: int, sampler: Callable[[int, np.random.Generator], tuple] | RealField) -> ParticleEnsemble:
    if N <= 0:
        raise ValueError("empty ensemble")
    rng = noise_rng(seed, 0, _PURPOSE_INIT)
    if isinstance(sampler, RealField):
        X, V = sample_from_density(sampler, N, rng)
    else:
        X, V = sampler(N, rng)
    return ParticleEnsemble(np.ascontiguousarray(X, float), np.ascontiguousarray(V, float))


def interaction_force(X: np.ndarray, K: TrigKernel | None, method: str = "auto") -> np.ndarray:
    """Mean-field force ``N^-1 sum_{j != i} K(X_i - X_j)``.

    ``"pairwise"`` is the direct double sum; ``"fourier"`` uses the
    kernel's Fourier modes, O(N n_modes), and is exact for the same kernel.
    """
    n = len(X)
    if K is None or n == 0:
        return np.zeros(n)
    if method == "auto":
        method = "pairwise" if n <= PAIRWISE_LIMIT else "fourier"
    if method == "pairwise":
        return kernels.pair_force(np.ascontiguousarray(X, float), K.a, K.b, K.kappa)
    if method != "fourier":
        raise ValueError(f"unknown force method {method!r}")
    k = np.arange(len(K.a))
    E = np.exp(1j * K.kappa * np.outer(X, k))
    S = E.sum(axis=0)
    c = K.a - 1j * K.b
    total = (E * (c * np.conj(S))).sum(axis=1).real
    return (total - K.a.sum()) / n


def step_em(e: ParticleEnsemble, c: SdeConfig, force_method: str = "auto") -> ParticleEnsemble:
    """One Euler-Maruyama step with drift evaluated at the current state."""
    g = c.grid
    h = c.h
    drift = interaction_force(e.X, c.K, force_method)
    if c.W_field is not None:
        drift = drift + kernels.bilinear_periodic(np.ascontiguousarray(c.W_field.values), g.x[0], g.dx,
                                                  g.v[0], g.dv, e.X, e.V)
    xi = noise_rng(c.seed, e.step + 1, _PURPOSE_STEP).standard_normal(e.N)
    X = _wrap_x(e.X + h * e.V, g.L_x)
    V = e.V + h * drift + np.sqrt(2 * h) * xi
    out = int(np.count_nonzero(np.abs(V) > g.L_v / 2))
    if out and c.strict:
        raise ExcursionError(f"{out} velocities left the box at t = {e.t + h:.6g}")
    return ParticleEnsemble(X, V, e.t + h, e.step + 1, e.excursions + out)


def simulate(e: ParticleEnsemble, c: SdeConfig, save_every: int | None = None,
             force_method: str = "auto") -> tuple[ParticleEnsemble, list]:
    """Run to ``c.T``; returns the final ensemble and snapshots ``(t, X, V)``."""
    n = c.n_steps
    se = save_every or n
    snaps = [(e.t, e.X.copy(), e.V.copy())]
    for k in range(n):
        e = step_em(e, c, force_method)
        if (k + 1) % se == 0:
            snaps.append((e.t, e.X.copy(), e.V.copy()))
    return e, snaps


def _periodic_rows(points: np.ndarray, nodes: np.ndarray, h: float, L: float) -> np.ndarray:
    d = nodes[None, :] - points[:, None]
    d = (d + L / 2) % L - L / 2
    return np.exp(-0.5 * (d / h) ** 2)


def empirical_density(X: np.ndarray, V: np.ndarray, grid: GridSpec, bandwidth: tuple[float, float]) -> RealField:
    """Gaussian-product KDE on the grid, periodic in ``x``, each particle normalised to mass ``1/N``."""
    n = len(X)
    if n == 0:
        raise ValueError("empty ensemble")
    hx, hv = bandwidth
    Gx = _periodic_rows(X, grid.x, hx, grid.L_x)
    Gv = np.exp(-0.5 * ((grid.v[None, :] - V[:, None]) / hv) ** 2)
    Gx /= Gx.sum(axis=1, keepdims=True) * grid.dx
    sv = Gv.sum(axis=1, keepdims=True) * grid.dv
    if np.any(sv == 0):
        raise ValueError("a particle is too far outside the velocity box")
    Gv /= sv
    return RealField(grid, Gx.T @ Gv / n)


def l1_distance(a: RealField, b: RealField) -> float:
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.cell)


def compare_mean_field(c: SdeConfig, N_list: Sequence[int], pde_report: SolveReport,
                       sampler: Callable | RealField, seeds: Sequence[int]) -> dict:
    """Median L1 distance between KDE and PDE densities at each saved PDE time.

    Returns ``{"N": [...], "times": [...], "median": array (len(N), len(times)), "monotone": bool}``.
    """
    if any(n <= 0 for n in N_list):
        raise ValueError("empty ensemble")
    times = pde_report.times
    steps = np.rint(times / c.h).astype(int)
    if not np.allclose(steps * c.h, times, atol=1e-12):
        raise ValueError("PDE save times are not on the particle time lattice")
    bw = c.kde_bandwidth()
    med = np.zeros((len(N_list), len(times)))
    for a, N in enumerate(N_list):
        d = np.zeros((len(seeds), len(times)))
        for si, s in enumerate(seeds):
            cs = replace(c, seed=int(s))
            e = init_ensemble(N, int(s), sampler)
            k = 0
            for ti, target in enumerate(steps):
                while k < target:
                    e = step_em(e, cs)
                    k += 1
                d[si, ti] = l1_distance(empirical_density(e.X, e.V, c.grid, bw), pde_report.path.fields[ti])
        med[a] = np.median(d, axis=0)
    mono = bool(np.all(np.diff(med[:, -1]) < 0))
    return {"N": list(N_list), "times": times, "median": med, "monotone": mono}


@dataclass(frozen=True)
class MomentReport:
    p: int
    pairs: tuple
    ratios: np.ndarray
    standard_errors: np.ndarray
    free_value: float

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    def bounded(self, factor: float = 4.0) -> bool:
        return self.max_ratio <= factor * self.free_value


def _double_factorial(n: int) -> int:
    return int(np.prod(np.arange(n, 0, -2))) if n > 0 else 1


def moment_check(snapshots: Sequence[tuple], p: int) -> MomentReport:
    """``E |V_t - V_s|^p / (t - s)^(p/2)`` over all stored pairs ``s < t``."""
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    pairs, ratios, ses = [], [], []
    for i in range(len(snapshots)):
        for j in range(i + 1, len(snapshots)):
            s, _, Vs = snapshots[i]
            t, _, Vt = snapshots[j]
            y = np.abs(Vt - Vs) ** p / (t - s) ** (p / 2)
            pairs.append((s, t))
            ratios.append(y.mean())
            ses.append(y.std(ddof=1) / np.sqrt(len(y)))
    free = 2 ** (p / 2) * _double_factorial(p - 1)
    return MomentReport(p, tuple(pairs), np.array(ratios), np.array(ses), float(free))
