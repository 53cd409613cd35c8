"""Matrix-free operator diagnostics.

Resolvent solves for shifted band-coefficient operators, randomized
sector probing of the resolvent bound, a contour-quadrature functional
calculus, and an empirical elliptic a-priori estimate.

All operator norms are probed in the computable Hilbert proxy (weighted
coefficient norm, the ``q = 2`` member of the Sobolev scale); every report
carries that label.  Operators handled here are real-linear maps of real
fields extended complex-linearly, so complex work vectors are legitimate.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigurationError, ResolventFailureError
from .paradiff import ParadiffSymbol, _zeta_sign
from .spectral import SpectralField, TorusGrid, bessel_multiplier, derivative_multiplier

__all__ = [
    "LinearOperatorHandle",
    "multiplier_handle",
    "paradiff_handle",
    "resolvent_solve",
    "SectorProbeReport",
    "sector_probe",
    "ContourFunction",
    "dunford_apply",
    "a_priori_check",
    "check_linearity",
]

NORM_PROXY_LABEL = "hilbert q=2 proxy"


@dataclass(frozen=True)
class LinearOperatorHandle:
    """A shifted linear operator given by its action on value arrays.

    ``base_action`` and ``base_adjoint`` map complex value arrays to
    complex value arrays and must be complex-linear; the full operator is
    ``shift + base``.  ``mean_table`` tabulates the frequency response of
    the x-averaged operator (including the shift) and doubles as the
    preconditioner and as the diagonal oracle for tests.
    """

    grid: TorusGrid
    order: int
    shift: float
    base_action: Callable[[np.ndarray], np.ndarray]
    base_adjoint: Callable[[np.ndarray], np.ndarray]
    mean_table: np.ndarray = field(repr=False)
    label: str = ""

    def action(self, v: np.ndarray) -> np.ndarray:
        return self.shift * v + self.base_action(v)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        return self.shift * v + self.base_adjoint(v)

    def apply_field(self, f: SpectralField) -> SpectralField:
        out = self.action(f.values.astype(complex))
        return SpectralField.from_values(self.grid, out.real)


def multiplier_handle(grid: TorusGrid, table: np.ndarray, order: int,
                      shift: float = 0.0, label: str = "multiplier") -> LinearOperatorHandle:
    """Diagonal (Fourier-multiplier) operator."""
    table = np.asarray(table, dtype=complex)

    def act(v):
        return np.fft.ifftn(table * np.fft.fftn(v))

    def adj(v):
        return np.fft.ifftn(np.conj(table) * np.fft.fftn(v))

    return LinearOperatorHandle(grid=grid, order=order, shift=shift,
                                base_action=act, base_adjoint=adj,
                                mean_table=table + shift, label=label)


def paradiff_handle(sym: ParadiffSymbol, shift: float = 0.0) -> LinearOperatorHandle:
    """Wrap an assembled band-coefficient operator for resolvent work."""
    grid, bank = sym.grid, sym.bank
    terms = []
    for (k, a), c in sym.coeffs.items():
        mult = bank.psi[k + 1] * derivative_multiplier(grid, a)
        terms.append((_zeta_sign(a) * c, mult))

    def act(v):
        vh = np.fft.fftn(v)
        out = np.zeros(grid.shape, dtype=complex)
        for c, mult in terms:
            out += c * np.fft.ifftn(mult * vh)
        return out

    def adj(v):
        out = np.zeros(grid.shape, dtype=complex)
        for c, mult in terms:
            out += np.fft.ifftn(np.conj(mult) * np.fft.fftn(c * v))
        return out

    return LinearOperatorHandle(grid=grid, order=sym.order, shift=shift,
                                base_action=act, base_adjoint=adj,
                                mean_table=sym.x_mean_multiplier + shift,
                                label=f"paradiff[{sym.problem.name}]")


def _gmres_solve(matvec, precond_table, rhs_flat, tol, maxiter, opscale):
    n = rhs_flat.size
    op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    M = None
    b_pre = rhs_flat
    if precond_table is not None:
        pt = precond_table.reshape(-1)
        if np.min(np.abs(pt)) < 1e-300:
            raise ResolventFailureError("preconditioner table is singular")
        shape = precond_table.shape

        def pmv(v):
            return np.fft.ifftn(np.fft.fftn(v.reshape(shape)) / precond_table).reshape(-1)

        M = LinearOperator((n, n), matvec=pmv, dtype=complex)
        b_pre = pmv(rhs_flat)
    iters = 0

    def cb(_):
        nonlocal iters
        iters += 1

    # The solution scale is roughly |M b|; stop once the true residual hits
    # the rounding floor of the operator application at that scale instead
    # of cycling restarts against an unreachable tolerance.
    atol = 100.0 * np.finfo(float).eps * opscale * float(np.linalg.norm(b_pre))
    restart = min(20, n)
    outer = max(1, -(-maxiter // restart))
    w, info = gmres(op, rhs_flat, rtol=tol, atol=atol, maxiter=outer,
                    restart=restart, M=M, callback=cb, callback_type="pr_norm")
    return w, info, iters


def resolvent_solve(handle: LinearOperatorHandle, z: complex, rhs: np.ndarray,
                    tol: float = 1e-10, maxiter: int = 200) -> tuple[np.ndarray, int]:
    """Solve ``(z - A) w = rhs`` by preconditioned GMRES.

    The preconditioner is the exactly invertible frequency-diagonal
    operator built from the x-averaged response, so constant-coefficient
    operators solve in one iteration.  Returns the solution values and the
    iteration count.

    Raises
    ------
    ResolventFailureError
        On non-convergence; upstream this is read as "z too close to the
        spectrum".
    """
    rhs = np.asarray(rhs, dtype=complex)
    shape = handle.grid.shape
    rhs_norm = float(np.linalg.norm(rhs.reshape(-1)))
    if rhs_norm == 0.0:
        return np.zeros(shape, dtype=complex), 0

    def mv(v):
        u = v.reshape(shape)
        return (z * u - handle.action(u)).reshape(-1)

    opscale = abs(z) + float(np.max(np.abs(handle.mean_table)))
    w, info, iters = _gmres_solve(mv, z - handle.mean_table, rhs.reshape(-1),
                                  tol, maxiter, opscale)
    resid = float(np.linalg.norm(mv(w) - rhs.reshape(-1)))
    # Achievable residual degrades with the solution magnitude when z sits
    # close to the spectrum; accept anything consistent with rounding at
    # the returned solution scale (backward-error criterion).
    floor = 100.0 * np.finfo(float).eps * opscale * float(np.linalg.norm(w))
    if resid > max(tol * rhs_norm, floor):
        raise ResolventFailureError(
            f"resolvent solve at z={z:.6g} stalled (residual {resid:.3g}, "
            f"{iters} iterations)", z=z, iterations=iters)
    return w.reshape(shape), iters


def _adjoint_resolvent_solve(handle, z, rhs, tol, maxiter):
    """Solve ``(conj(z) - A*) w = rhs`` (the adjoint of the resolvent)."""
    shape = handle.grid.shape
    zc = np.conj(z)

    def mv(v):
        u = v.reshape(shape)
        return (zc * u - handle.adjoint(u)).reshape(-1)

    opscale = abs(z) + float(np.max(np.abs(handle.mean_table)))
    w, info, iters = _gmres_solve(mv, zc - np.conj(handle.mean_table),
                                  rhs.reshape(-1), tol, maxiter, opscale)
    resid = float(np.linalg.norm(mv(w) - rhs.reshape(-1)))
    floor = 100.0 * np.finfo(float).eps * opscale * float(np.linalg.norm(w))
    if resid > max(tol * float(np.linalg.norm(rhs.reshape(-1))), floor):
        raise ResolventFailureError("adjoint resolvent solve stalled", z=z,
                                    iterations=iters)
    return w.reshape(shape)


@dataclass(frozen=True)
class SectorProbeReport:
    """Estimates of ``|z (z - A)^{-1}|`` along rays of increasing angle."""

    thetas: np.ndarray
    radii: np.ndarray
    estimates: np.ndarray  # shape (len(thetas), len(radii)); NaN where failed
    failed: np.ndarray
    phi_estimate: float
    bound: float
    norm_label: str = NORM_PROXY_LABEL
    seed: int = 0

    def max_by_theta(self) -> np.ndarray:
        out = np.full(len(self.thetas), np.nan)
        for i in range(len(self.thetas)):
            row = self.estimates[i][~self.failed[i]]
            if row.size:
                out[i] = np.max(row)
        return out


def _weighted_norm_sq(grid: TorusGrid, weight: np.ndarray, v: np.ndarray) -> float:
    vh = np.fft.fftn(v)
    return float(np.sum(weight * np.abs(vh) ** 2).real)


def _operator_norm_estimate(B, B_adj, grid: TorusGrid, s: float,
                            rng: np.random.Generator, probes: int,
                            steps: int) -> float:
    """Largest singular value of B in the weighted coefficient norm.

    Power iteration on the weighted normal operator; always a lower bound,
    tight after a few tens of steps for the diagnostic purposes here.
    """
    w = bessel_multiplier(grid, s) ** 2

    def weigh(v):
        return np.fft.ifftn(w * np.fft.fftn(v))

    def unweigh(v):
        return np.fft.ifftn(np.fft.fftn(v) / w)

    best = 0.0
    for _ in range(probes):
        x = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        x /= np.linalg.norm(x)
        est = 0.0
        for _ in range(steps):
            bx = B(x)
            num = _weighted_norm_sq(grid, w, bx)
            den = _weighted_norm_sq(grid, w, x)
            est = math.sqrt(num / den)
            x = unweigh(B_adj(weigh(bx)))
            nrm = np.linalg.norm(x)
            if nrm == 0.0:
                break
            x /= nrm
        best = max(best, est)
    return best


def sector_probe(handle: LinearOperatorHandle, thetas: Sequence[float],
                 radii: Sequence[float], probes: int = 4, power_steps: int = 20,
                 s: float = 0.0, seed: int = 0, tol: float = 1e-8,
                 maxiter: int = 400, plateau_factor: float = 3.0) -> SectorProbeReport:
    """Randomized resolvent-bound estimates along rays ``arg z = theta``.

    For each angle and log-spaced radius, ``|z (z - A)^{-1}|`` is estimated
    in the weighted-coefficient proxy norm.  The estimated spectral angle
    is the smallest probed angle from which outward every sample succeeded
    and stayed below ``plateau_factor`` times the plateau level at the
    widest angle.  Conjugate rays give identical values for real
    operators, so only positive angles are probed.

    Fixed ``seed`` makes the report reproducible run to run.
    """
    thetas = np.asarray(sorted(thetas), dtype=float)
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(thetas <= 0) or np.any(thetas >= math.pi):
        raise ConfigurationError("probe angles must lie strictly inside (0, pi)")
    est = np.full((len(thetas), len(radii)), np.nan)
    failed = np.zeros((len(thetas), len(radii)), dtype=bool)
    for i, th in enumerate(thetas):
        for j, r in enumerate(radii):
            z = r * cmath.exp(1j * th)
            rng = np.random.default_rng((seed, i, j))

            def B(v, z=z):
                w, _ = resolvent_solve(handle, z, v, tol=tol, maxiter=maxiter)
                return z * w

            def B_adj(v, z=z):
                return np.conj(z) * _adjoint_resolvent_solve(handle, z, v, tol, maxiter)

            try:
                est[i, j] = _operator_norm_estimate(B, B_adj, handle.grid, s,
                                                    rng, probes, power_steps)
            except ResolventFailureError:
                failed[i, j] = True

    report_rows = [(not np.any(failed[i])) and np.all(np.isfinite(est[i]))
                   for i in range(len(thetas))]
    plateau = np.nan
    for i in reversed(range(len(thetas))):
        if report_rows[i]:
            plateau = np.max(est[i])
            break
    phi = math.pi
    if not math.isnan(plateau):
        cap = plateau_factor * plateau
        for i in reversed(range(len(thetas))):
            if report_rows[i] and np.max(est[i]) <= cap:
                phi = float(thetas[i])
            else:
                break
    finite = est[np.isfinite(est)]
    bound = float(np.max(finite)) if finite.size else math.nan
    return SectorProbeReport(thetas=thetas, radii=radii, estimates=est,
                             failed=failed, phi_estimate=phi, bound=bound,
                             seed=seed)


@dataclass(frozen=True)
class ContourFunction:
    """A holomorphic integrand for the sector contour calculus.

    ``eps`` declares the power decay at zero and infinity that makes the
    contour integral absolutely convergent; ``check_decay`` spot-checks it
    on sampled rays.
    """

    f: Callable[[complex], complex]
    eps: float
    sector_angle: float
    name: str = ""

    def __call__(self, z: complex) -> complex:
        return self.f(z)

    def check_decay(self, samples: int = 40, bound: float = 1e6) -> tuple[float, float]:
        if not 0 < self.eps:
            raise ConfigurationError("decay exponent must be positive")
        radii = np.geomspace(1e-6, 1e6, samples)
        args = [0.0, 0.999 * self.sector_angle, -0.999 * self.sector_angle]
        small, large = 0.0, 0.0
        for r in radii:
            for a in args:
                z = r * cmath.exp(1j * a)
                v = abs(self.f(z))
                if not math.isfinite(v):
                    raise ConfigurationError(f"integrand not finite at z={z:.3g}")
                if r <= 1.0:
                    small = max(small, r**-self.eps * v)
                else:
                    large = max(large, r**self.eps * v)
        if small > bound or large > bound:
            raise ConfigurationError(
                f"integrand decay check failed (near-zero {small:.3g}, "
                f"near-infinity {large:.3g})")
        return small, large


def dunford_apply(handle: LinearOperatorHandle, f: ContourFunction, nu: float,
                  nodes: int, v: np.ndarray, tau_range: tuple[float, float] = (-18.0, 18.0),
                  tol: float = 1e-12, maxiter: int = 400) -> np.ndarray:
    """Evaluate ``f(A) v`` by quadrature of the sector contour integral.

    The boundary of the sector of half-angle ``nu`` is traversed
    counterclockwise (lower ray outward, upper ray inward); on each ray
    the radial variable is substituted exponentially, ``t = exp(tau)``,
    and the trapezoidal rule is applied on ``nodes`` points per ray.  The
    truncation window must be wide enough for the declared decay; the
    default reaches machine-level tails for ``eps = 1``.

    Raises
    ------
    ResolventFailureError
        If the resolvent stalls at a contour node (the node is reported).
    """
    if not 0 < nu < f.sector_angle:
        raise ConfigurationError(
            f"contour angle {nu:g} must lie in (0, sector angle {f.sector_angle:g})")
    if nodes < 2:
        raise ConfigurationError("need at least two quadrature nodes per ray")
    v = np.asarray(v, dtype=complex)
    taus = np.linspace(tau_range[0], tau_range[1], nodes)
    h = taus[1] - taus[0]
    weights = np.full(nodes, h)
    weights[0] = weights[-1] = h / 2.0
    acc = np.zeros(handle.grid.shape, dtype=complex)
    for tau, w in zip(taus, weights):
        t = math.exp(tau)
        for sign, orient in ((-1.0, +1.0), (+1.0, -1.0)):  # lower ray out, upper ray in
            zeta = t * cmath.exp(1j * sign * nu)
            fz = f(zeta)
            if fz == 0.0:
                continue
            try:
                rv, _ = resolvent_solve(handle, zeta, v, tol=tol, maxiter=maxiter)
            except ResolventFailureError as exc:
                raise ResolventFailureError(
                    f"contour node zeta={zeta:.6g} unreachable: {exc}", z=zeta) from exc
            acc += orient * w * fz * zeta * rv
    return acc / (2j * math.pi)


def a_priori_check(handle: LinearOperatorHandle, s: float, m: int,
                   fields: Sequence[SpectralField]) -> float:
    """Empirical constant of the elliptic regularity estimate.

    Largest sampled value of ``|u|_{s+m} / (|u|_s + |A u|_s)`` in the
    Hilbert proxy norms; finite for elliptic operators and stable under
    grid refinement.
    """
    from .spectral import hs2_norm, hs2_norm_coeffs

    worst = 0.0
    for u in fields:
        num = hs2_norm(u, s + m)
        au = handle.action(u.values.astype(complex))
        den = hs2_norm(u, s) + hs2_norm_coeffs(handle.grid, np.fft.fftn(au), s)
        if den > 0:
            worst = max(worst, num / den)
    return worst


def check_linearity(handle: LinearOperatorHandle, rng: np.random.Generator,
                    trials: int = 3) -> float:
    """Max deviation of the action from linearity on random triples."""
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(handle.grid.shape) + 1j * rng.standard_normal(handle.grid.shape)
        w = rng.standard_normal(handle.grid.shape) + 1j * rng.standard_normal(handle.grid.shape)
        a, b = rng.standard_normal(2)
        lhs = handle.action(a * v + b * w)
        rhs = a * handle.action(v) + b * handle.action(w)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst
