"""Nonlinear problem descriptions and jet evaluation.

A problem is a smooth pointwise map ``F(x, eta)`` of a derivative jet
``eta = (d^alpha u)_{|alpha| <= m}`` together with its first derivatives,
an even order ``m``, an optional ellipticity region, and declared
ellipticity/derivative bounds.  The evolution equation solved downstream
is ``du/dt + F(x, jet(u)) = 0``.

Jets are stored as plain real derivative fields.  The complex-weighted
parameterization used when symbols are assembled (where the order-``k``
entries carry a factor ``i**(-k)``) is applied once at the symbol layer;
see :mod:`parapde.paradiff`.  Evaluation callbacks must be pure and
reentrant: they are applied to whole grids at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .spectral import SpectralField, TorusGrid, partial_derivative

__all__ = [
    "multi_indices",
    "MultiIndexSet",
    "JetField",
    "jet",
    "Region",
    "RegionReport",
    "NonlinearProblem",
    "eval_F",
    "eval_dF",
    "ellipticity_min",
    "region_report",
    "heat_problem",
    "perturbed_heat_problem",
    "biharmonic_problem",
    "region_restricted_problem",
    "builtin_problem",
    "check_d1_consistency",
]

MultiIndex = tuple[int, ...]


def multi_indices(d: int, m: int) -> tuple[MultiIndex, ...]:
    """All multi-indices with ``|alpha| <= m`` in graded lexicographic order.

    Sorted by total degree first, then by plain tuple comparison; the
    enumeration is deterministic and is the storage order used everywhere.
    """
    out = []
    for deg in range(m + 1):
        block = [a for a in itertools.product(range(deg + 1), repeat=d) if sum(a) == deg]
        out.extend(sorted(block))
    return tuple(out)


@dataclass(frozen=True)
class MultiIndexSet:
    """Even order ``m`` with its graded-lex multi-index enumeration."""

    d: int
    m: int
    indices: tuple[MultiIndex, ...] = field(init=False)

    def __post_init__(self):
        if self.m < 2 or self.m % 2:
            raise ConfigurationError(f"order must be a positive even integer, got {self.m}")
        object.__setattr__(self, "indices", multi_indices(self.d, self.m))

    def top_order(self) -> tuple[MultiIndex, ...]:
        return tuple(a for a in self.indices if sum(a) == self.m)


@dataclass(frozen=True)
class JetField:
    """All spectral derivatives ``d^alpha u`` of one field, ``|alpha| <= m``."""

    grid: TorusGrid
    order: int
    eta: Mapping[MultiIndex, np.ndarray]

    def __getitem__(self, alpha: MultiIndex) -> np.ndarray:
        return self.eta[alpha]

    def sup(self) -> float:
        """Largest pointwise jet magnitude over the grid (Euclidean in eta)."""
        sq = np.zeros(self.grid.shape)
        for v in self.eta.values():
            sq = sq + v**2
        return float(np.sqrt(np.max(sq)))


def jet(u: SpectralField, m: int) -> JetField:
    """Compute the order-``m`` derivative jet of ``u`` spectrally."""
    if m % 2 or m < 2:
        raise ConfigurationError(f"jet order must be a positive even integer, got {m}")
    eta = {}
    for alpha in multi_indices(u.grid.d, m):
        if sum(alpha) == 0:
            eta[alpha] = u.values
        else:
            eta[alpha] = partial_derivative(u, alpha).values
    return JetField(grid=u.grid, order=m, eta=eta)


@dataclass(frozen=True)
class Region:
    """Open admissible set of jet values with a signed distance.

    ``signed_distance`` maps a jet (mapping of multi-index to array) to a
    pointwise value, positive inside the region; the predicate is derived
    from its sign.
    """

    signed_distance: Callable[[Mapping[MultiIndex, np.ndarray]], np.ndarray]
    description: str = ""

    def contains(self, eta: Mapping[MultiIndex, np.ndarray]) -> np.ndarray:
        return np.asarray(self.signed_distance(eta)) > 0


@dataclass(frozen=True)
class RegionReport:
    distance: float
    inside: bool


@dataclass(frozen=True)
class NonlinearProblem:
    """A fully nonlinear operator ``F`` given by pointwise callbacks.

    Parameters
    ----------
    name : str
    d, m : int
        Spatial dimension and (even) derivative order.
    eval_fn : callable
        ``eval_fn(x, eta) -> array``; ``x`` is the tuple of coordinate
        arrays and ``eta`` maps multi-indices to derivative arrays.
    d1_fn : callable
        ``d1_fn(x, eta, alpha) -> array``, the derivative of ``eval_fn``
        with respect to the jet entry ``alpha``.
    d2_fn : callable, optional
        Second derivatives ``(x, eta, alpha, beta) -> array``.
    region : Region, optional
        Ellipticity region; ``None`` means the whole jet space.
    c_prime : callable
        Declared ellipticity constant per jet-ball radius ``n``.
    deriv_bound : callable
        Declared bound on ``sup |dF|`` over the jet ball of radius ``n``.
    constant_coefficients : bool
        True when ``d1_fn`` does not depend on the jet or on ``x``; lets
        callers reuse assembled operators across states.
    omega : object, optional
        Seeded randomness parameter for problems whose coefficients are
        drawn at time zero; passed through to the callbacks unchanged.
    """

    name: str
    d: int
    m: int
    eval_fn: Callable
    d1_fn: Callable
    d2_fn: Callable | None = None
    region: Region | None = None
    c_prime: Callable[[float], float] = lambda n: 0.0
    deriv_bound: Callable[[float], float] = lambda n: math.inf
    constant_coefficients: bool = False
    omega: object = None

    @property
    def index_set(self) -> MultiIndexSet:
        return MultiIndexSet(self.d, self.m)

    def with_omega(self, omega) -> "NonlinearProblem":
        from dataclasses import replace

        return replace(self, omega=omega)


def _coords(grid: TorusGrid):
    return grid.x_axes


def eval_F(problem: NonlinearProblem, jf: JetField) -> SpectralField:
    """Pointwise evaluation of ``F`` on a jet.

    Jets outside a declared region are evaluated anyway; region handling
    is the caller's decision (see :func:`region_report`).
    """
    if jf.order != problem.m:
        raise ConfigurationError(f"jet order {jf.order} != problem order {problem.m}")
    vals = problem.eval_fn(_coords(jf.grid), jf.eta)
    return SpectralField.from_values(jf.grid, np.broadcast_to(vals, jf.grid.shape).copy())


def eval_dF(problem: NonlinearProblem, jf: JetField, alpha: MultiIndex) -> SpectralField:
    if jf.order != problem.m:
        raise ConfigurationError(f"jet order {jf.order} != problem order {problem.m}")
    vals = problem.d1_fn(_coords(jf.grid), jf.eta, tuple(alpha))
    return SpectralField.from_values(jf.grid, np.broadcast_to(vals, jf.grid.shape).copy())


def ellipticity_min(problem: NonlinearProblem,
                    jets: Sequence[Mapping[MultiIndex, float]],
                    directions: np.ndarray) -> float:
    """Smallest sampled value of the top-order coercivity form.

    For each sampled constant jet and unit direction ``xi`` this evaluates
    ``(-1)**(m/2) * sum_{|alpha| = m} dF/d eta_alpha * xi**alpha``, the
    real quadratic form whose positivity is the strong-parabolicity
    assumption.  Samples outside a declared region may be negative; they
    are reported, not filtered.
    """
    if len(jets) == 0 or len(directions) == 0:
        raise ConfigurationError("jets and directions must be nonempty")
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(directions, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ConfigurationError("directions must be unit vectors")
    sign = (-1.0) ** (problem.m // 2)
    top = MultiIndexSet(problem.d, problem.m).top_order()
    origin = tuple(np.zeros(1) for _ in range(problem.d))
    worst = math.inf
    for eta in jets:
        for xi in directions:
            q = 0.0
            for alpha in top:
                coeff = float(np.asarray(problem.d1_fn(origin, eta, alpha)).reshape(-1)[0])
                q += coeff * float(np.prod(xi**np.asarray(alpha)))
            worst = min(worst, sign * q)
    return worst


def region_report(problem: NonlinearProblem, jf: JetField) -> RegionReport:
    """Distance of the jet's range to the region boundary.

    Problems without a region are inside at infinite distance.
    """
    if problem.region is None:
        return RegionReport(distance=math.inf, inside=True)
    dist = float(np.min(problem.region.signed_distance(jf.eta)))
    return RegionReport(distance=dist, inside=dist > 0)


# ---------------------------------------------------------------------------
# Built-in problems
# ---------------------------------------------------------------------------


def _second_trace(d: int):
    """Indices of the pure second derivatives; their sum is the Laplacian."""
    idx = []
    for j in range(d):
        a = [0] * d
        a[j] = 2
        idx.append(tuple(a))
    return tuple(idx)


def _sum_second(eta, idx):
    s = 0.0
    for a in idx:
        s = s + eta[a]
    return s


def heat_problem(d: int) -> NonlinearProblem:
    """``F(eta) = -trace of the second-derivative block`` (the heat flow)."""
    idx = _second_trace(d)

    def ev(x, eta):
        return -_sum_second(eta, idx)

    def d1(x, eta, alpha):
        template = next(iter(eta.values()))
        v = -1.0 if alpha in idx else 0.0
        return np.full(np.shape(template), v) if np.ndim(template) else v

    return NonlinearProblem(
        name="heat", d=d, m=2, eval_fn=ev, d1_fn=d1,
        c_prime=lambda n: 1.0, deriv_bound=lambda n: 1.0,
        constant_coefficients=True)


def perturbed_heat_problem(d: int) -> NonlinearProblem:
    """Fully nonlinear globally elliptic model: ``F = -(S + sin(S)/2)``.

    ``S`` is the Laplacian entry of the jet; the coercivity density
    ``1 + cos(S)/2`` stays in ``[1/2, 3/2]``, so the declared ellipticity
    constant is ``1/2`` on every ball.
    """
    idx = _second_trace(d)

    def phi(S):
        return S + 0.5 * np.sin(S)

    def ev(x, eta):
        return -phi(_sum_second(eta, idx))

    def d1(x, eta, alpha):
        S = _sum_second(eta, idx)
        if alpha in idx:
            return -(1.0 + 0.5 * np.cos(S))
        return np.zeros(np.shape(S)) if np.ndim(S) else 0.0

    def d2(x, eta, alpha, beta):
        S = _sum_second(eta, idx)
        if alpha in idx and beta in idx:
            return 0.5 * np.sin(S)
        return np.zeros(np.shape(S)) if np.ndim(S) else 0.0

    return NonlinearProblem(
        name="perturbed_heat", d=d, m=2, eval_fn=ev, d1_fn=d1, d2_fn=d2,
        c_prime=lambda n: 0.5, deriv_bound=lambda n: 1.5)


def biharmonic_problem(d: int) -> NonlinearProblem:
    """Order-four model ``F = Laplacian squared`` written on the jet."""
    pure = []
    mixed = []
    for j in range(d):
        a = [0] * d
        a[j] = 4
        pure.append(tuple(a))
    for j in range(d):
        for k in range(j + 1, d):
            a = [0] * d
            a[j] = 2
            a[k] = 2
            mixed.append(tuple(a))
    pure = tuple(pure)
    mixed = tuple(mixed)

    def ev(x, eta):
        s = 0.0
        for a in pure:
            s = s + eta[a]
        for a in mixed:
            s = s + 2.0 * eta[a]
        return s

    def d1(x, eta, alpha):
        template = next(iter(eta.values()))
        if alpha in pure:
            v = 1.0
        elif alpha in mixed:
            v = 2.0
        else:
            v = 0.0
        return np.full(np.shape(template), v) if np.ndim(template) else v

    return NonlinearProblem(
        name="biharmonic", d=d, m=4, eval_fn=ev, d1_fn=d1,
        c_prime=lambda n: 1.0, deriv_bound=lambda n: 2.0,
        constant_coefficients=True)


def region_restricted_problem(d: int, s_max: float = 1.0) -> NonlinearProblem:
    """Quadratic model elliptic only where the Laplacian stays below ``s_max``.

    ``F = -(S - S^2/(2 s_max))`` has coercivity density ``1 - S/s_max``,
    positive exactly on ``{S < s_max}``.  The signed distance to the
    boundary is measured in the ``S`` coordinate: ``s_max - S``.
    """
    if not s_max > 0:
        raise ConfigurationError(f"s_max must be positive, got {s_max}")
    idx = _second_trace(d)

    def ev(x, eta):
        S = _sum_second(eta, idx)
        return -(S - S**2 / (2.0 * s_max))

    def d1(x, eta, alpha):
        S = _sum_second(eta, idx)
        if alpha in idx:
            return -(1.0 - S / s_max)
        return np.zeros(np.shape(S)) if np.ndim(S) else 0.0

    region = Region(
        signed_distance=lambda eta: s_max - _sum_second(eta, idx),
        description=f"laplacian below {s_max:g}")

    # On the admissible slab at margin 1/n the density is at least
    # 1/(n*s_max); outside the region the form may be nonpositive.  The
    # Laplacian entry satisfies |S| <= sqrt(d) * |eta|.
    return NonlinearProblem(
        name="region_restricted", d=d, m=2, eval_fn=ev, d1_fn=d1,
        region=region,
        c_prime=lambda n: 1.0 / (n * s_max),
        deriv_bound=lambda n: 1.0 + math.sqrt(d) * n / s_max)


_BUILTINS = {
    "heat": heat_problem,
    "perturbed_heat": perturbed_heat_problem,
    "biharmonic": biharmonic_problem,
    "region_restricted": region_restricted_problem,
}


def builtin_problem(name: str, d: int, **params) -> NonlinearProblem:
    """Instantiate a built-in problem by name (the CLI entry point)."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; choose from {sorted(_BUILTINS)}") from None
    return factory(d, **params)


def check_d1_consistency(problem: NonlinearProblem, rng: np.random.Generator,
                         samples: int = 100, scale: float = 1.0,
                         h: float = 1e-5) -> float:
    """Max relative error of ``d1_fn`` against centered differences of ``eval_fn``.

    Sampled on random constant jets with entries of size ``scale``.
    """
    idx = multi_indices(problem.d, problem.m)
    origin = tuple(np.zeros(1) for _ in range(problem.d))
    worst = 0.0
    for _ in range(samples):
        eta = {a: float(rng.uniform(-scale, scale)) for a in idx}
        alpha = idx[rng.integers(len(idx))]
        up = dict(eta)
        dn = dict(eta)
        up[alpha] = eta[alpha] + h
        dn[alpha] = eta[alpha] - h
        fd = (float(np.asarray(problem.eval_fn(origin, up)).reshape(-1)[0])
              - float(np.asarray(problem.eval_fn(origin, dn)).reshape(-1)[0])) / (2 * h)
        an = float(np.asarray(problem.d1_fn(origin, eta, alpha)).reshape(-1)[0])
        err = abs(fd - an) / max(1.0, abs(an))
        worst = max(worst, err)
    return worst
