"""Scalar-noise stochastic evolution with stopping times and ensembles.

The drift reuses the deterministic frozen-coefficient implicit step; the
single real Brownian increment enters explicitly:

    (I + dt*(shift + M(u_n))) u_{n+1}
        = u_n + dt*(G(u_n) + K(t_n, u_n) + g(t_n) + shift*u_n)
        + (B(t_n, u_n) + b) * dW_n .

Coefficients at step ``n`` see only the state ``u_n`` and increments with
index below ``n``; there is no lookahead channel in the stepping
interface, so adaptedness holds by construction.

Paths draw their increments from per-path counter-based substreams, so
they are independent, reproducible, and embarrassingly parallel; the
sequential reduction order is fixed for bit-identical reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ConfigurationError, HypothesisViolation, RegionExitError,
                     SolverFailureError)
from .evolve import (HALT_COMPLETED, HALT_REGION, HALT_SOLVER, StepperConfig,
                     _implicit_solve, resolve_shift)
from .paradiff import G, build_symbol
from .problems import NonlinearProblem, jet, region_report
from .spectral import (LittlewoodPaleyBank, SpectralField, apply_multiplier,
                       hs2_norm, partial_derivative, trace_norm)

__all__ = [
    "RNG_ALGORITHM",
    "NoiseSpec",
    "SDEConfig",
    "PathResult",
    "EnsembleResult",
    "brownian_increments",
    "sde_step",
    "solve_paths",
    "strong_error_study",
]

HALT_STOPPED = "stopped_norm"

# Counter-based generator keyed by (seed, path); pinned in run manifests.
RNG_ALGORITHM = "philox4x64(key=[seed, path])"


def brownian_increments(seed: int, path: int, steps: int, dt: float) -> np.ndarray:
    """Reproducible i.i.d. normal(0, dt) increments for one path.

    The substream is derived from ``(seed, path)`` through a counter-based
    generator, so any path can be regenerated in isolation and permuting
    path indices permutes results exactly.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(path)],
                   dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.normal(0.0, math.sqrt(dt), size=steps)


@dataclass(frozen=True)
class NoiseSpec:
    """Scalar-Brownian noise coefficient.

    ``kind`` is one of ``none``, ``additive``, ``multiplicative_smoothed``.
    Additive noise is a fixed field; the multiplicative coefficient is a
    pure pointwise map of ``(t, u, grad u)`` composed with the smoothing
    cutoff at band ``smoothing_band``, which keeps the coefficient in the
    smooth range regardless of the user formula.  ``lipschitz_bound`` is
    the declared Lipschitz constant into the smooth scale (spot-checked at
    validation, not derived).
    """

    kind: str = "none"
    additive_field: SpectralField | None = None
    coefficient: Callable[[float, np.ndarray, list[np.ndarray]], np.ndarray] | None = None
    smoothing_band: int | None = None
    lipschitz_bound: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "additive", "multiplicative_smoothed"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "additive" and self.additive_field is None:
            raise ConfigurationError("additive noise needs a field")
        if self.kind == "multiplicative_smoothed":
            if self.coefficient is None:
                raise ConfigurationError("multiplicative noise needs a coefficient map")
            if not math.isfinite(self.lipschitz_bound):
                raise ConfigurationError("declared Lipschitz bound must be finite")

    def field(self, t: float, u: SpectralField,
              bank: LittlewoodPaleyBank) -> SpectralField | None:
        if self.kind == "none":
            return None
        if self.kind == "additive":
            return self.additive_field
        grads = [partial_derivative(u, tuple(1 if j == ax else 0 for j in range(u.grid.d))).values
                 for ax in range(u.grid.d)]
        raw = np.broadcast_to(self.coefficient(t, u.values, grads), u.grid.shape).copy()
        J = self.smoothing_band if self.smoothing_band is not None else max(0, bank.K - 2)
        out = apply_multiplier(SpectralField.from_values(u.grid, raw), bank.Psi[J])
        if self.additive_field is not None:
            out = out + self.additive_field
        return out


@dataclass(frozen=True)
class SDEConfig:
    """Ensemble parameters on top of a deterministic stepper block."""

    stepper: StepperConfig
    t_final: float
    paths: int
    seed: int
    thresholds: tuple[float, ...]
    noise: NoiseSpec = NoiseSpec()
    drift_extra: Callable[[float, SpectralField], SpectralField] | None = None
    drift_extra_lipschitz: float = 0.0
    forcing: Callable[[float], SpectralField] | None = None
    snapshot_paths: tuple[int, ...] = ()
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ConfigurationError("need at least one path")
        if not self.t_final > 0:
            raise ConfigurationError("horizon must be positive")
        if len(self.thresholds) == 0:
            raise ConfigurationError("need at least one stopping threshold")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ConfigurationError("stopping thresholds must be ascending")
        if self.stepper.space.q < 2.0:
            raise HypothesisViolation(
                "S1", f"stochastic runs need q >= 2, got q={self.stepper.space.q}")


@dataclass
class PathResult:
    path: int
    status: str
    sigma: dict[float, float]  # threshold -> first exceedance time (T if never)
    t_final: float
    terminal: SpectralField
    max_increment: float       # modulus-of-continuity proxy on stored strides
    lq_smooth_integral: float  # discrete L_q-in-time integral of the smooth norm
    snapshots: list[tuple[float, SpectralField]] = field(default_factory=list)


@dataclass
class EnsembleResult:
    config_seed: int
    t_final: float
    thresholds: tuple[float, ...]
    paths: list[PathResult]
    fraction_stopped: float          # empirical P{sigma < T}
    fraction_blowup_proxy: float     # stopped and bounded/continuous proxy held
    rng_algorithm: str = RNG_ALGORITHM

    def terminal_fields(self) -> list[SpectralField]:
        return [p.terminal for p in self.paths]


def sde_step(problem: NonlinearProblem, u_n: SpectralField, t_n: float,
             dW: float, bank: LittlewoodPaleyBank, config: SDEConfig,
             shift: float, symbol=None) -> tuple[SpectralField, dict]:
    """One semi-implicit Euler-Maruyama step.

    Degenerates to the deterministic step when the noise vanishes and no
    extra drift is configured.
    """
    sc = config.stepper
    if problem.region is not None:
        rep = region_report(problem, jet(u_n, problem.m))
        if rep.distance <= sc.region_margin:
            raise RegionExitError(
                f"state within margin of the region boundary (distance {rep.distance:.3g})")
    if symbol is None:
        symbol = build_symbol(problem, u_n, bank, sc.quadrature_nodes)
    rhs = u_n.values + sc.dt * (G(problem, u_n, bank).values + shift * u_n.values)
    if config.drift_extra is not None:
        rhs = rhs + sc.dt * config.drift_extra(t_n, u_n).values
    if config.forcing is not None:
        rhs = rhs + sc.dt * config.forcing(t_n).values
    noise = config.noise.field(t_n, u_n, bank)
    if noise is not None:
        rhs = rhs + noise.values * dW
    w, iters = _implicit_solve(symbol, shift, sc.dt, rhs,
                               sc.krylov_tol, sc.krylov_maxiter)
    if not np.all(np.isfinite(w)):
        raise SolverFailureError("non-finite state after implicit solve")
    return SpectralField.from_values(u_n.grid, w), {"iterations": iters}


def _march_path(problem, u0, bank, config: SDEConfig, path: int,
                increments: np.ndarray, shift: float) -> PathResult:
    sc = config.stepper
    n_steps = len(increments)
    thresholds = config.thresholds
    # A single infinite threshold disables all norm bookkeeping (used by
    # convergence studies, where stopping is irrelevant and tracking is
    # the dominant cost).
    track = not (len(thresholds) == 1 and math.isinf(thresholds[0]))
    sigma = {}
    u = u0
    t = 0.0
    if track:
        tn0 = trace_norm(u0, sc.space, bank)
        for n in thresholds:
            if tn0 > n:
                sigma[n] = 0.0
    status = HALT_COMPLETED
    keep_snaps = path in config.snapshot_paths
    snaps = [(0.0, u0)] if keep_snaps else []
    last_stride_state = u0
    max_inc = 0.0
    lq_int = sc.dt * hs2_norm(u0, sc.space.s + problem.m) ** sc.space.q if track else math.nan
    cached = None
    if thresholds[-1] in sigma:
        return PathResult(path=path, status=HALT_STOPPED, sigma=sigma, t_final=0.0,
                          terminal=u0, max_increment=0.0,
                          lq_smooth_integral=lq_int ** (1.0 / sc.space.q),
                          snapshots=snaps)
    for k in range(n_steps):
        if problem.constant_coefficients and cached is None:
            cached = build_symbol(problem, u, bank, sc.quadrature_nodes)
        try:
            u_next, _ = sde_step(problem, u, t, float(increments[k]), bank,
                                 config, shift, symbol=cached)
        except RegionExitError:
            status = HALT_REGION
            break
        except SolverFailureError:
            status = HALT_SOLVER
            break
        t = (k + 1) * sc.dt
        u = u_next
        if not track:
            continue
        tn = trace_norm(u, sc.space, bank)
        if not math.isfinite(tn):
            status = HALT_SOLVER
            break
        lq_int += sc.dt * hs2_norm(u, sc.space.s + problem.m) ** sc.space.q
        if (k + 1) % config.snapshot_stride == 0:
            max_inc = max(max_inc, trace_norm(u - last_stride_state, sc.space, bank))
            last_stride_state = u
            if keep_snaps:
                snaps.append((t, u))
        for n in thresholds:
            if n not in sigma and tn > n:
                sigma[n] = t
        if thresholds[-1] in sigma:
            status = HALT_STOPPED
            break
    for n in thresholds:
        sigma.setdefault(n, config.t_final)
    if keep_snaps and (not snaps or snaps[-1][0] != t):
        snaps.append((t, u))
    return PathResult(path=path, status=status, sigma=sigma, t_final=t,
                      terminal=u, max_increment=max_inc,
                      lq_smooth_integral=lq_int ** (1.0 / sc.space.q),
                      snapshots=snaps)


def solve_paths(problem: NonlinearProblem, u0: SpectralField,
                bank: LittlewoodPaleyBank, config: SDEConfig,
                modulus_bound: float = math.inf) -> EnsembleResult:
    """March an ensemble of independent paths with stopping times.

    Per-path solver failures are recorded in the path status and never
    abort the ensemble.  The first exceedance time of each configured
    threshold is recorded per path (the horizon when never exceeded), and
    the path stops at the largest threshold or on region exit.
    """
    sc = config.stepper
    n_steps = int(round(config.t_final / sc.dt))
    if n_steps < 1:
        raise ConfigurationError("horizon shorter than one step")
    if problem.region is not None:
        rep0 = region_report(problem, jet(u0, problem.m))
        if not rep0.inside or rep0.distance <= sc.region_margin:
            raise HypothesisViolation("H1'", "initial jet not inside the region")
    shift = resolve_shift(problem, u0, bank, sc)
    results = []
    for p in range(config.paths):
        incs = brownian_increments(config.seed, p, n_steps, sc.dt)
        results.append(_march_path(problem, u0, bank, config, p, incs, shift))
    stopped = [p for p in results if p.sigma[config.thresholds[-1]] < config.t_final]
    proxy = [p for p in stopped
             if p.max_increment <= modulus_bound and math.isfinite(p.lq_smooth_integral)]
    m = max(1, len(results))
    return EnsembleResult(config_seed=config.seed, t_final=config.t_final,
                          thresholds=config.thresholds, paths=results,
                          fraction_stopped=len(stopped) / m,
                          fraction_blowup_proxy=len(proxy) / m)


def strong_error_study(problem: NonlinearProblem, u0: SpectralField,
                       bank: LittlewoodPaleyBank, config: SDEConfig,
                       dts: Sequence[float], ref_refinement: int = 64,
                       paths: int = 4) -> dict:
    """Coupled-path strong convergence against a fine reference.

    All runs of one path share a single Brownian path generated at the
    reference resolution ``min(dts)/ref_refinement``; coarser runs consume
    block sums of the fine increments.  Returns root-mean-square terminal
    errors per step size and the fitted slope.  Meaningful for problems
    with additive noise, where the scheme's strong order is one.
    """
    from dataclasses import replace

    dts = sorted(dts, reverse=True)
    dt_ref = min(dts) / ref_refinement
    T = config.t_final
    n_ref = int(round(T / dt_ref))
    for dt in dts:
        ratio = dt / dt_ref
        if abs(ratio - round(ratio)) > 1e-9 or abs(round(T / dt) * dt - T) > 1e-12:
            raise ConfigurationError("step sizes must nest and divide the horizon")
    shift = resolve_shift(problem, u0, bank, config.stepper)
    errors = {dt: [] for dt in dts}
    for p in range(paths):
        fine = brownian_increments(config.seed, p, n_ref, dt_ref)
        cfg_ref = replace(config, stepper=replace(config.stepper, dt=dt_ref),
                          snapshot_paths=(), thresholds=(math.inf,))
        ref = _march_path(problem, u0, bank, cfg_ref, p, fine, shift)
        if ref.status != HALT_COMPLETED:
            raise SolverFailureError(f"reference path {p} halted: {ref.status}")
        for dt in dts:
            block = int(round(dt / dt_ref))
            coarse = fine[: n_ref - n_ref % block].reshape(-1, block).sum(axis=1)
            cfg_c = replace(config, stepper=replace(config.stepper, dt=dt),
                            snapshot_paths=(), thresholds=(math.inf,))
            run = _march_path(problem, u0, bank, cfg_c, p, coarse, shift)
            if run.status != HALT_COMPLETED:
                raise SolverFailureError(f"coarse path at dt={dt} halted: {run.status}")
            errors[dt].append(hs2_norm(run.terminal - ref.terminal, 0.0))
    rms = [float(np.sqrt(np.mean(np.square(errors[dt])))) for dt in dts]
    if len(dts) >= 2:
        slope = float(np.polyfit(np.log(np.asarray(dts)), np.log(rms), 1)[0])
    else:
        slope = math.nan
    return {"dts": list(dts), "rms_errors": rms, "slope": slope,
            "per_path_errors": {dt: errors[dt] for dt in dts}}
