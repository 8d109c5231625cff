"""Phase-space torus, spectral transforms and differential multipliers.

Coordinates are centred in the box, ``x_k = -L_x/2 + k dx`` and likewise for
``v``, so that the origin of phase space is a grid point. A field is the
trigonometric polynomial

    f(x, v) = sum_{xi, eta} c(xi, eta) exp(i (xi x + eta v)),

and :func:`forward_transform` returns the coefficients ``c``. Fourier
transforms of physical functions (kernels, mollifiers) use the unnormalised
convention ``h_hat(zeta) = int exp(-i zeta.z) h(z) dz`` so that a probability
density has ``h_hat(0) = 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np

__all__ = [
    "GridSpec",
    "RealField",
    "SpectralField",
    "forward_transform",
    "inverse_transform",
    "aniso_norm",
    "derivative_multiplier",
    "grad_v",
    "grad_x",
    "laplace_v",
    "product",
    "dump_field",
    "load_field",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L_x/2, L_x/2) x [-L_v/2, L_v/2)``.

    Parameters
    ----------
    n_x, n_v : int
        Even number of points per axis, at least 16.
    L_x, L_v : float
        Torus periods.
    dealias : bool
        When set, pointwise products are evaluated on a 3/2 zero-padded grid.
    """

    n_x: int
    n_v: int
    L_x: float = 2 * np.pi
    L_v: float = 2 * np.pi
    dealias: bool = False
    d: int = 1

    def __post_init__(self):
        for name in ("n_x", "n_v"):
            n = getattr(self, name)
            if int(n) != n or n < 16 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 16, got {n}")
        if not (self.L_x > 0 and self.L_v > 0):
            raise ValueError("torus periods must be positive")
        if self.d != 1:
            raise ValueError("only d = 1 is supported")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_v)

    @property
    def dx(self) -> float:
        return self.L_x / self.n_x

    @property
    def dv(self) -> float:
        return self.L_v / self.n_v

    @property
    def cell(self) -> float:
        return self.dx * self.dv

    @property
    def area(self) -> float:
        return self.L_x * self.L_v

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.L_x + self.dx * np.arange(self.n_x)

    @cached_property
    def v(self) -> np.ndarray:
        return -0.5 * self.L_v + self.dv * np.arange(self.n_v)

    @cached_property
    def kx(self) -> np.ndarray:
        """Integer wavenumbers along x in FFT order."""
        return np.fft.fftfreq(self.n_x, 1.0 / self.n_x).astype(np.int64)

    @cached_property
    def kv(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_v, 1.0 / self.n_v).astype(np.int64)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2 * np.pi / self.L_x * self.kx

    @cached_property
    def eta(self) -> np.ndarray:
        return 2 * np.pi / self.L_v * self.kv

    @cached_property
    def XI(self) -> np.ndarray:
        return np.broadcast_to(self.xi[:, None], self.shape)

    @cached_property
    def ETA(self) -> np.ndarray:
        return np.broadcast_to(self.eta[None, :], self.shape)

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], self.shape)

    @cached_property
    def V(self) -> np.ndarray:
        return np.broadcast_to(self.v[None, :], self.shape)

    @cached_property
    def freq_norm(self) -> np.ndarray:
        """Anisotropic norm ``|xi|^(1/3) + |eta|`` on the frequency lattice."""
        return np.cbrt(np.abs(self.XI)) + np.abs(self.ETA)

    @cached_property
    def _phase_x(self) -> np.ndarray:
        # exp(-i xi x_0) with x_0 = -L/2 gives (-1)^k
        return np.where(self.kx % 2 == 0, 1.0, -1.0)

    @cached_property
    def _phase_v(self) -> np.ndarray:
        return np.where(self.kv % 2 == 0, 1.0, -1.0)

    @cached_property
    def phase(self) -> np.ndarray:
        return self._phase_x[:, None] * self._phase_v[None, :]

    def padded(self, factor_x: float = 1.5, factor_v: float = 1.5) -> "GridSpec":
        """Finer grid on the same torus, used for alias-free products."""
        def grow(n, fac):
            m = int(np.ceil(n * fac))
            return m + (m % 2)

        return GridSpec(grow(self.n_x, factor_x), grow(self.n_v, factor_v), self.L_x, self.L_v)

    def to_dict(self) -> dict:
        return {"n_x": self.n_x, "n_v": self.n_v, "L_x": self.L_x, "L_v": self.L_v,
                "dealias": self.dealias}


def _readonly(a: np.ndarray) -> np.ndarray:
    view = a.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of a field on ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("field contains non-finite values")
        object.__setattr__(self, "values", _readonly(vals))

    def _coerce(self, other):
        if isinstance(other, RealField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return RealField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RealField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return RealField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, RealField):
            return product(self, other)
        return RealField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return RealField(self.grid, -self.values)

    def __truediv__(self, scalar):
        return RealField(self.grid, self.values / scalar)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lp(self, p: float = 2.0) -> float:
        """L^p norm as a Riemann sum with cell volume; grid maximum for p = inf."""
        if np.isinf(p):
            return self.sup()
        return float((np.sum(np.abs(self.values) ** p) * self.grid.cell) ** (1.0 / p))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell)

    def spectral(self) -> "SpectralField":
        return forward_transform(self)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "RealField":
        return cls(grid, np.asarray(fn(grid.X, grid.V), dtype=float) * np.ones(grid.shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "RealField":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a field, indexed in FFT order by (xi, eta)."""

    grid: GridSpec
    coeffs: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", _readonly(c))
        if self.hermitian:
            err = hermitian_defect(c)
            scale = max(float(np.max(np.abs(c))), 1e-300)
            if err > 1e-12 * scale:
                raise ValueError(f"coefficients are not conjugate-symmetric (defect {err:.3e})")

    def to_real(self) -> RealField:
        return inverse_transform(self)


def reflect(c: np.ndarray) -> np.ndarray:
    """Array ``c(-zeta)`` in FFT ordering."""
    return np.roll(np.flip(c, axis=(0, 1)), shift=(1, 1), axis=(0, 1))


def hermitian_defect(c: np.ndarray) -> float:
    return float(np.max(np.abs(c - np.conj(reflect(c)))))


def to_coeffs(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Array-level forward transform."""
    return np.fft.fft2(values) * (grid.phase / (grid.n_x * grid.n_v))


def to_values(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    """Array-level inverse transform, real part."""
    return np.fft.ifft2(coeffs * grid.phase).real * (grid.n_x * grid.n_v)


def forward_transform(f: RealField) -> SpectralField:
    """Fourier coefficients of a real field.

    Examples
    --------
    >>> g = GridSpec(16, 16)
    >>> c = forward_transform(RealField(g, np.ones(g.shape))).coeffs
    >>> abs(c[0, 0] - 1) < 1e-14 and np.allclose(c.ravel()[1:], 0)
    True
    """
    return SpectralField(f.grid, to_coeffs(f.grid, f.values), hermitian=True)


def inverse_transform(F: SpectralField) -> RealField:
    return RealField(F.grid, to_values(F.grid, F.coeffs))


def aniso_norm(point, role: Literal["space", "frequency"] = "space"):
    """Anisotropic distance ``|x|^(1/3) + |v|`` (or ``|xi|^(1/3) + |eta|``).

    Works elementwise on arrays; ``role`` only documents intent since the
    formula is the same in both spaces.
    """
    if role not in ("space", "frequency"):
        raise ValueError(f"unknown role {role!r}")
    a, b = point
    return np.cbrt(np.abs(a)) + np.abs(b)


_MULTIPLIERS = ("grad_v", "grad_x", "laplace_v")


def multiplier_array(grid: GridSpec, which: str) -> np.ndarray:
    if which == "grad_v":
        return 1j * grid.ETA
    if which == "grad_x":
        return 1j * grid.XI
    if which == "laplace_v":
        return -(grid.ETA ** 2)
    raise ValueError(f"unknown derivative {which!r}; expected one of {_MULTIPLIERS}")


def derivative_multiplier(F: SpectralField, which: str) -> SpectralField:
    """Apply ``i eta``, ``i xi`` or ``-eta^2`` to the coefficients.

    The Nyquist rows keep the multiplier as is; the result is flagged
    hermitian only for the Laplacian, since odd multipliers break the
    symmetry at the Nyquist frequency.
    """
    m = multiplier_array(F.grid, which)
    out = F.coeffs * m
    herm = which == "laplace_v"
    return SpectralField(F.grid, out, hermitian=herm)


def _odd_derivative(f: RealField, m: np.ndarray, nyq_axis: int) -> RealField:
    c = to_coeffs(f.grid, f.values) * m
    # drop the unpaired Nyquist mode so the result is the derivative of the
    # real trigonometric interpolant
    n = f.grid.shape[nyq_axis]
    idx = [slice(None), slice(None)]
    idx[nyq_axis] = n // 2
    c[tuple(idx)] = 0.0
    return RealField(f.grid, to_values(f.grid, c))


def grad_v(f: RealField) -> RealField:
    return _odd_derivative(f, 1j * f.grid.ETA, 1)


def grad_x(f: RealField) -> RealField:
    return _odd_derivative(f, 1j * f.grid.XI, 0)


def laplace_v(f: RealField) -> RealField:
    c = to_coeffs(f.grid, f.values) * (-(f.grid.ETA ** 2))
    return RealField(f.grid, to_values(f.grid, c))


def pad_coeffs(c: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Embed coefficients into a larger lattice, splitting Nyquist modes evenly."""
    n_x, n_v = c.shape
    m_x, m_v = shape
    kx = np.fft.fftfreq(n_x, 1.0 / n_x).astype(int)
    kv = np.fft.fftfreq(n_v, 1.0 / n_v).astype(int)
    wx = np.where(kx == -n_x // 2, 0.5, 1.0)
    wv = np.where(kv == -n_v // 2, 0.5, 1.0)
    out = np.zeros(shape, dtype=complex)
    cw = c * wx[:, None] * wv[None, :]
    ix = kx % m_x
    iv = kv % m_v
    out[np.ix_(ix, iv)] += cw
    # mirror copies of the Nyquist halves at +n/2
    nx2 = (kx == -n_x // 2)
    nv2 = (kv == -n_v // 2)
    if nx2.any():
        out[np.ix_(np.array([n_x // 2 % m_x]), iv)] += cw[nx2, :]
    if nv2.any():
        out[np.ix_(ix, np.array([n_v // 2 % m_v]))] += cw[:, nv2]
    if nx2.any() and nv2.any():
        out[n_x // 2 % m_x, n_v // 2 % m_v] += cw[nx2, :][:, nv2][0, 0]
    return out


def truncate_coeffs(c: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Restrict padded coefficients to a smaller lattice, aliasing the +n/2 modes onto -n/2."""
    m_x, m_v = c.shape
    n_x, n_v = shape
    kx = np.fft.fftfreq(n_x, 1.0 / n_x).astype(int)
    kv = np.fft.fftfreq(n_v, 1.0 / n_v).astype(int)
    out = c[np.ix_(kx % m_x, kv % m_v)].copy()
    if m_x > n_x:
        out[n_x // 2, :] += c[n_x // 2, kv % m_v]
    if m_v > n_v:
        out[:, n_v // 2] += c[kx % m_x, n_v // 2]
    if m_x > n_x and m_v > n_v:
        out[n_x // 2, n_v // 2] += c[n_x // 2, n_v // 2]
    return out


def upsample(grid: GridSpec, values: np.ndarray, fine: GridSpec) -> np.ndarray:
    """Trigonometric interpolation of grid samples onto a finer grid."""
    return to_values(fine, pad_coeffs(to_coeffs(grid, values), fine.shape))


def downsample(fine: GridSpec, values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return to_values(grid, truncate_coeffs(to_coeffs(fine, values), grid.shape))


def product_values(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not grid.dealias:
        return a * b
    fine = grid.padded()
    return downsample(fine, upsample(grid, a, fine) * upsample(grid, b, fine), grid)


def product(f: RealField, g: RealField) -> RealField:
    """Pointwise product, alias-free when ``grid.dealias`` is set."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return RealField(f.grid, product_values(f.grid, f.values, g.values))


def dump_field(f: RealField | SpectralField, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (little-endian float64, row-major) and ``<path>.json``."""
    path = Path(path)
    g = f.grid
    if isinstance(f, RealField):
        data, kind = np.ascontiguousarray(f.values, dtype="<f8"), "real"
    else:
        c = np.ascontiguousarray(f.coeffs)
        data = np.stack([c.real, c.imag], axis=-1).astype("<f8")
        kind = "spectral"
    bin_path = path.with_suffix(".bin")
    meta_path = path.with_suffix(".json")
    bin_path.write_bytes(data.tobytes(order="C"))
    meta = {"n_x": g.n_x, "n_v": g.n_v, "L_x": g.L_x, "L_v": g.L_v, "kind": kind}
    meta_path.write_text(json.dumps(meta, sort_keys=True))
    return bin_path, meta_path


def load_field(path: str | Path) -> RealField | SpectralField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    g = GridSpec(meta["n_x"], meta["n_v"], meta["L_x"], meta["L_v"])
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    if meta["kind"] == "real":
        return RealField(g, raw.reshape(g.shape).copy())
    c = raw.reshape(g.n_x, g.n_v, 2)
    return SpectralField(g, c[..., 0] + 1j * c[..., 1], hermitian=False)
