"""Periodic-grid spectral infrastructure.

Real scalar fields on a d-dimensional torus, exact Fourier-multiplier
application, smooth dyadic frequency cutoffs (a Littlewood-Paley partition
of unity on the finite lattice), and the dyadic-block norms built from
them.  Everything else in the package is written against this module.

Grids and cutoff banks are immutable after construction and safe for
concurrent reads; field operations are pure (fresh output, inputs
untouched).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, LatticeMismatchError

__all__ = [
    "TorusGrid",
    "SpectralField",
    "LittlewoodPaleyBank",
    "FunctionSpaceParams",
    "bump_profile",
    "build_lp_bank",
    "apply_multiplier",
    "partial_derivative",
    "lq_norm",
    "band_lq_profile",
    "besov_norm",
    "zygmund_norm",
    "sobolev_norm",
    "hs2_norm",
    "bessel_multiplier",
    "mode_coefficients",
    "random_smooth_field",
    "is_conjugate_symmetric",
    "derivative_multiplier",
    "hs2_norm_coeffs",
    "trace_norm",
]

@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[0, period)^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, 1, 2 or 3.
    n : int
        Points per dimension; a power of two, at least 8.
    period : float
        Domain length per dimension.  The frequency lattice consists of
        the integer multiples of ``2*pi/period`` in ``[-n/2, n/2)`` per
        axis, in FFT layout.
    """

    d: int
    n: int
    period: float = 2.0 * math.pi

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ConfigurationError(f"n must be a power of two >= 8, got {self.n}")
        if not self.period > 0:
            raise ConfigurationError(f"period must be positive, got {self.period}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def lattice_unit(self) -> float:
        """Spacing of the frequency lattice, ``2*pi/period``."""
        return 2.0 * math.pi / self.period

    @cached_property
    def x_axes(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays, broadcastable to ``shape``."""
        ax = self.dx * np.arange(self.n)
        out = []
        for j in range(self.d):
            sh = [1] * self.d
            sh[j] = self.n
            out.append(ax.reshape(sh))
        return tuple(out)

    @cached_property
    def freq_axes(self) -> tuple[np.ndarray, ...]:
        """Per-axis frequency arrays in FFT layout, broadcastable to ``shape``."""
        k = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)
        out = []
        for j in range(self.d):
            sh = [1] * self.d
            sh[j] = self.n
            out.append(k.reshape(sh))
        return tuple(out)

    @cached_property
    def xi_norm(self) -> np.ndarray:
        """``|xi|`` on the full frequency lattice, shaped like ``shape``."""
        sq = np.zeros(self.shape)
        for k in self.freq_axes:
            sq = sq + k**2
        return np.sqrt(sq)

    @property
    def xi_max(self) -> float:
        """Largest ``|xi|`` on the lattice (the corner frequency)."""
        return math.sqrt(self.d) * self.lattice_unit * (self.n // 2)

    def compatible(self, other: "TorusGrid") -> bool:
        return (
            self.d == other.d
            and self.n == other.n
            and abs(self.period - other.period) <= 1e-14 * self.period
        )


def _check_same_grid(a: TorusGrid, b: TorusGrid):
    if not a.compatible(b):
        raise LatticeMismatchError(f"grids differ: {a} vs {b}")


class SpectralField:
    """A real scalar field on a :class:`TorusGrid`.

    Holds grid values and Fourier coefficients, keeping the two
    representations consistent lazily: whichever was not supplied is
    computed on first access and cached.  Coefficients follow the
    unnormalized ``numpy.fft.fftn`` convention.

    Instances behave as immutable values; arithmetic returns new fields.
    """

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid: TorusGrid, values: np.ndarray | None = None,
                 coeffs: np.ndarray | None = None):
        if values is None and coeffs is None:
            raise ValueError("either values or coeffs must be given")
        self.grid = grid
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise LatticeMismatchError(
                    f"values shape {values.shape} != grid shape {grid.shape}")
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != grid.shape:
                raise LatticeMismatchError(
                    f"coeffs shape {coeffs.shape} != grid shape {grid.shape}")
        self._values = values
        self._coeffs = coeffs

    @classmethod
    def from_values(cls, grid: TorusGrid, values: np.ndarray) -> "SpectralField":
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs: np.ndarray) -> "SpectralField":
        return cls(grid, coeffs=coeffs)

    @classmethod
    def zero(cls, grid: TorusGrid) -> "SpectralField":
        return cls(grid, values=np.zeros(grid.shape))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            # Constructors only admit conjugate-symmetric coefficients
            # (real values, or tables vetted by apply_multiplier), so the
            # imaginary part is rounding noise.
            self._values = np.fft.ifftn(self._coeffs).real
        return self._values

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = np.fft.fftn(self._values)
        return self._coeffs

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid,
                             None if self._values is None else self._values.copy(),
                             None if self._coeffs is None else self._coeffs.copy())

    # algebra (pointwise, returns fresh fields)
    def __add__(self, other):
        if isinstance(other, SpectralField):
            _check_same_grid(self.grid, other.grid)
            return SpectralField(self.grid, values=self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            _check_same_grid(self.grid, other.grid)
            return SpectralField(self.grid, values=self.values - other.values)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return SpectralField(self.grid, values=float(scalar) * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, values=-self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def bump_profile(rho: np.ndarray | float) -> np.ndarray | float:
    """Radial profile of the low-pass cutoff.

    Equal to 1 for ``rho <= 1/2`` and 0 for ``rho >= 1``; in between it is
    the standard smooth step ``g(2*(1 - rho))`` with
    ``g(t) = exp(-1/t) / (exp(-1/t) + exp(-1/(1-t)))``, which glues the two
    plateaus with all derivatives vanishing at the junctions.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    out[rho <= 0.5] = 1.0
    mid = (rho > 0.5) & (rho < 1.0)
    if np.any(mid):
        t = 2.0 * (1.0 - rho[mid])
        # g(t) with t in (0, 1); exponents stay finite on the open interval
        a = np.exp(-1.0 / t)
        b = np.exp(-1.0 / (1.0 - t))
        out[mid] = a / (a + b)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class LittlewoodPaleyBank:
    """Smooth dyadic partition of unity on a grid's frequency lattice.

    ``Psi[k]`` tabulates the dilated low-pass cutoff with plateau radius
    ``base_scale * 2**(k-1)``; ``psi[k] = Psi[k] - Psi[k-1]`` for
    ``k >= 1`` and ``psi[0] = Psi[0]``.  ``K`` is minimal with
    ``Psi[K] == 1`` everywhere on the lattice, so the ``K+1`` bands sum to
    one exactly and the dyadic telescoping is finite.
    """

    grid: TorusGrid
    base_scale: float
    K: int
    Psi: tuple[np.ndarray, ...] = field(repr=False)
    psi: tuple[np.ndarray, ...] = field(repr=False)

    def Psi_radial(self, k: int, xi_norm: np.ndarray | float) -> np.ndarray | float:
        """Evaluate the level-``k`` cutoff at arbitrary ``|xi|`` (off-lattice)."""
        return bump_profile(np.asarray(xi_norm, dtype=float) / (self.base_scale * 2.0**k))

    def psi_radial(self, k: int, xi_norm: np.ndarray | float) -> np.ndarray | float:
        if k == 0:
            return self.Psi_radial(0, xi_norm)
        return self.Psi_radial(k, xi_norm) - self.Psi_radial(k - 1, xi_norm)

    def band_count(self) -> int:
        return self.K + 1


def build_lp_bank(grid: TorusGrid, base_scale: float | None = None) -> LittlewoodPaleyBank:
    """Tabulate the dyadic cutoff bank on the grid's frequency lattice.

    Parameters
    ----------
    grid : TorusGrid
    base_scale : float, optional
        Absolute plateau scale of the lowest cutoff.  Defaults to four
        lattice units so the low-frequency block holds more than the zero
        mode.

    Raises
    ------
    ConfigurationError
        If no nonzero lattice frequency lies under the lowest cutoff
        (the low block would contain only the mean).
    """
    if base_scale is None:
        base_scale = 4.0 * grid.lattice_unit
    if not base_scale > 0:
        raise ConfigurationError(f"base_scale must be positive, got {base_scale}")
    if grid.lattice_unit >= base_scale:
        raise ConfigurationError(
            f"base_scale {base_scale:g} too small: no nonzero lattice frequency "
            f"lies under the lowest cutoff (lattice unit {grid.lattice_unit:g})")

    r = grid.xi_norm
    Psi = [np.asarray(bump_profile(r / base_scale))]
    K = 0
    # K is minimal with Psi_K identically one; the plateau test is exact
    # because the profile returns exactly 1.0 on |xi| <= scale/2.
    max_levels = 64
    while not np.all(Psi[-1] == 1.0):
        K += 1
        if K > max_levels:
            raise ConfigurationError("cutoff bank did not close; base_scale too small?")
        Psi.append(np.asarray(bump_profile(r / (base_scale * 2.0**K))))
    psi = [Psi[0]]
    for k in range(1, K + 1):
        psi.append(Psi[k] - Psi[k - 1])
    return LittlewoodPaleyBank(grid=grid, base_scale=float(base_scale), K=K,
                               Psi=tuple(Psi), psi=tuple(psi))


def is_conjugate_symmetric(table: np.ndarray, rtol: float = 1e-12) -> bool:
    """Whether ``table(-xi) == conj(table(xi))`` on the FFT lattice."""
    flipped = table
    for ax in range(table.ndim):
        idx = (-np.arange(table.shape[ax])) % table.shape[ax]
        flipped = np.take(flipped, idx, axis=ax)
    scale = float(np.max(np.abs(table))) or 1.0
    return bool(np.max(np.abs(flipped - np.conj(table))) <= rtol * scale)


def apply_multiplier(f: SpectralField, multiplier: np.ndarray) -> SpectralField:
    """Apply a Fourier multiplier tabulated on the field's lattice.

    The multiplier must be conjugate-symmetric (a real operator), since
    the output is a real field.
    """
    multiplier = np.asarray(multiplier)
    if multiplier.shape != f.grid.shape:
        raise LatticeMismatchError(
            f"multiplier shape {multiplier.shape} != lattice shape {f.grid.shape}")
    if np.iscomplexobj(multiplier) and not is_conjugate_symmetric(multiplier):
        raise LatticeMismatchError(
            "multiplier is not conjugate-symmetric; it does not define a real operator")
    return SpectralField.from_coeffs(f.grid, multiplier * f.coeffs)


def derivative_multiplier(grid: TorusGrid, alpha: Sequence[int]) -> np.ndarray:
    """Tabulate ``(i xi)**alpha`` on the lattice.

    For odd orders the unpaired Nyquist mode is zeroed so the multiplier
    stays conjugate-symmetric; on resolved fields (no Nyquist content)
    the differentiation is exact.
    """
    if len(alpha) != grid.d:
        raise LatticeMismatchError(f"multi-index {alpha} has wrong length for d={grid.d}")
    m = np.ones(grid.shape, dtype=complex)
    for j, a in enumerate(alpha):
        if a:
            fac = (1j * grid.freq_axes[j]) ** a
            if a % 2:
                nyq = [slice(None)] * grid.d
                nyq[j] = grid.n // 2
                fac = fac.copy()
                fac[tuple(nyq)] = 0.0
            m = m * fac
    return m


def partial_derivative(f: SpectralField, alpha: Sequence[int]) -> SpectralField:
    """Exact spectral derivative: coefficients multiplied by ``(i xi)**alpha``."""
    return apply_multiplier(f, derivative_multiplier(f.grid, alpha))


def bessel_multiplier(grid: TorusGrid, s: float) -> np.ndarray:
    """Tabulate ``<xi>**s = (1 + |xi|^2)**(s/2)`` on the lattice."""
    return (1.0 + grid.xi_norm**2) ** (s / 2.0)


def lq_norm(f: SpectralField, q: float) -> float:
    """Discrete ``L_q`` norm on the torus (sup norm at ``q = inf``)."""
    v = f.values
    if math.isinf(q):
        return float(np.max(np.abs(v)))
    if q < 1:
        raise ConfigurationError(f"q must be >= 1, got {q}")
    return float((np.sum(np.abs(v) ** q) * f.grid.cell_volume) ** (1.0 / q))


def band_lq_profile(f: SpectralField, bank: LittlewoodPaleyBank, q: float) -> np.ndarray:
    """``L_q`` norms of the dyadic blocks, one entry per band ``0..K``."""
    _check_same_grid(f.grid, bank.grid)
    fh = f.coeffs
    out = np.empty(bank.K + 1)
    for k in range(bank.K + 1):
        out[k] = lq_norm(SpectralField.from_coeffs(f.grid, bank.psi[k] * fh), q)
    return out


def besov_norm(f: SpectralField, s: float, q: float, q2: float,
               bank: LittlewoodPaleyBank) -> float:
    """Dyadic-block norm ``( sum_k 2^(k s q2) |psi_k(D) u|_Lq^q2 )^(1/q2)``.

    With ``q2 = inf`` the sum is replaced by a supremum.  Nonnegative, and
    zero exactly when the field vanishes (the bands sum to one on the
    lattice).
    """
    prof = band_lq_profile(f, bank, q)
    weights = 2.0 ** (s * np.arange(bank.K + 1))
    if math.isinf(q2):
        return float(np.max(weights * prof))
    return float(np.sum((weights * prof) ** q2) ** (1.0 / q2))


def zygmund_norm(f: SpectralField, r: float, bank: LittlewoodPaleyBank) -> float:
    """Hoelder-type dyadic norm: ``sup_k 2^(k r) |psi_k(D) u|_Linf``."""
    return besov_norm(f, r, math.inf, math.inf, bank)


def sobolev_norm(f: SpectralField, s: float, q: float) -> float:
    """``L_q`` norm of the Bessel-smoothed field ``<D>^s u``."""
    return lq_norm(apply_multiplier(f, bessel_multiplier(f.grid, s)), q)


def hs2_norm_coeffs(grid: TorusGrid, coeffs: np.ndarray, s: float) -> float:
    """Weighted-coefficient form of the ``q = 2`` Sobolev norm.

    Agrees with :func:`sobolev_norm` at ``q = 2`` by Parseval; usable on
    complex coefficient arrays, which the operator diagnostics need.
    """
    w = bessel_multiplier(grid, s)
    scale = grid.period**grid.d / grid.size**2
    return float(math.sqrt(scale * np.sum((w * np.abs(coeffs)) ** 2)))


def hs2_norm(f: SpectralField, s: float) -> float:
    return hs2_norm_coeffs(f.grid, f.coeffs, s)


@dataclass(frozen=True)
class FunctionSpaceParams:
    """Regularity/integrability bookkeeping for a run.

    ``s`` and ``q`` fix the base smoothness scale; ``m`` is the operator
    order (even).  The derived margin ``r = s - (m + d)/q`` must be
    positive, which for ``m = 2`` is exactly the admissibility gate
    ``q > (2 + d)/s``.
    """

    s: float
    q: float
    d: int
    m: int = 2

    def __post_init__(self):
        if not self.s > 0:
            raise ConfigurationError(f"s must be positive, got {self.s}")
        if not (1.0 < self.q < math.inf):
            raise ConfigurationError(f"q must lie in (1, inf), got {self.q}")
        if self.m < 2 or self.m % 2:
            raise ConfigurationError(f"order must be a positive even integer, got {self.m}")
        if not self.r > 0:
            raise ConfigurationError(
                f"q={self.q} must exceed (m+d)/s={(self.m + self.d) / self.s:g} "
                f"so the smoothness margin r stays positive")

    @property
    def r(self) -> float:
        return self.s - (self.m + self.d) / self.q

    @property
    def trace_exponent(self) -> float:
        """Smoothness of the space where initial data live, ``s + m - m/q``."""
        return self.s + self.m - self.m / self.q


def trace_norm(f: SpectralField, params: FunctionSpaceParams,
               bank: LittlewoodPaleyBank) -> float:
    """Computable stand-in for the initial-data space norm.

    The fractional Sobolev norm of exponent ``s + m - m/q`` is evaluated
    as the dyadic-block norm with both integrability indices ``q``; the
    equivalence constant on the torus is absorbed into configured
    thresholds.
    """
    return besov_norm(f, params.trace_exponent, params.q, params.q, bank)


def mode_coefficients(f: SpectralField, frequency: int, axis: int = 0) -> tuple[float, float]:
    """Cosine and sine coefficients of one axis-aligned Fourier mode.

    For ``u = a*cos(k x) + b*sin(k x) + (other modes)`` returns ``(a, b)``.
    """
    idx = [0] * f.grid.d
    idx[axis] = frequency % f.grid.n
    c = f.coeffs[tuple(idx)] / f.grid.size
    return 2.0 * float(c.real), -2.0 * float(c.imag)


def random_smooth_field(grid: TorusGrid, rng: np.random.Generator,
                        decay: float = 3.0, kcut: float | None = None,
                        amplitude: float = 1.0) -> SpectralField:
    """Random real field with power-law coefficient decay.

    Coefficients are complex Gaussians shaped by ``(1 + |xi|)**(-decay)``
    and truncated above ``kcut`` (in absolute frequency units); the result
    is scaled so its sup norm equals ``amplitude``.
    """
    noise = rng.standard_normal(grid.shape)
    co = np.fft.fftn(noise)
    shape = (1.0 + grid.xi_norm / grid.lattice_unit) ** (-decay)
    if kcut is not None:
        shape = shape * (grid.xi_norm <= kcut)
    co *= shape
    f = SpectralField.from_coeffs(grid, co)
    m = f.sup_norm()
    if m == 0:
        return f
    return f * (amplitude / m)
