"""Run configuration: schema, object builders, and admissibility gates.

Configs are YAML with a fixed schema; unknown keys are errors so typos in
admissibility-critical fields cannot pass silently.  ``validate_run``
checks every numeric gate the theory imposes and reports violations with
their hypothesis tags (H1, H1', H3, H4, S1, S7, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .errors import ConfigurationError
from .evolve import ManufacturedSolution, StepperConfig, single_mode_field
from .problems import (NonlinearProblem, builtin_problem, check_d1_consistency,
                       ellipticity_min, jet, multi_indices, region_report)
from .sde import NoiseSpec, SDEConfig
from .spectral import (FunctionSpaceParams, LittlewoodPaleyBank, SpectralField,
                       TorusGrid, build_lp_bank, hs2_norm, random_smooth_field,
                       trace_norm)

__all__ = ["RunConfig", "load_config", "validate_run"]


# Allowed keys per block; None means the block is free-form (checked by its
# builder instead).
_SCHEMA = {
    "problem": {"name", "params"},
    "grid": {"d", "n", "period", "base_scale"},
    "space": {"s", "q"},
    "seed": None,
    "output_dir": None,
    "snapshot_stride": None,
    "initial": {"kind", "params"},
    "forcing": {"kind", "params"},
    "stepper": {"dt", "t_final", "scheme", "shift", "krylov_tol", "krylov_maxiter",
                "norm_threshold", "region_margin", "quadrature_nodes"},
    "sde": {"dt", "t_final", "paths", "thresholds", "noise", "drift_damping",
            "snapshot_paths", "snapshot_stride"},
    "decompose": {"num_fields", "c2_bound", "tolerance_factor", "quadrature_nodes"},
    "ellipticity": {"ball_radius", "num_states", "delta", "x_samples", "xi_samples"},
    "sector": {"thetas", "num_radii", "radius_decades", "probes", "power_steps",
               "shift_margin"},
    "convergence": {"kind", "dts", "t_final", "amplitude", "frequency", "axis",
                    "rate"},
}

_NOISE_KEYS = {"kind", "amplitude", "frequency", "axis", "mode_kind", "formula",
               "gain", "lipschitz_bound", "smoothing_band"}


def _check_keys(block: dict, allowed: set, path: str):
    for k in block:
        if k not in allowed:
            raise ConfigurationError(
                f"unknown config key {path}.{k!r}; allowed: {sorted(allowed)}")


@dataclass
class RunConfig:
    """Parsed, materialized run configuration."""

    raw: dict
    grid: TorusGrid
    bank: LittlewoodPaleyBank
    problem: NonlinearProblem
    space: FunctionSpaceParams
    u0: SpectralField
    seed: int
    output_dir: Path
    snapshot_stride: int
    stepper: StepperConfig | None = None
    stepper_t_final: float | None = None
    forcing: Callable[[float], SpectralField] | None = None
    sde: SDEConfig | None = None
    extras: dict = field(default_factory=dict)


def _build_initial(kind: str, params: dict, grid: TorusGrid, seed: int) -> SpectralField:
    params = dict(params)
    if kind == "zero":
        _check_keys(params, set(), "initial.params")
        return SpectralField.zero(grid)
    if kind == "constant":
        v = float(params.pop("value", 0.0))
        _check_keys(params, set(), "initial.params")
        return SpectralField.from_values(grid, np.full(grid.shape, v))
    if kind == "single_mode":
        amp = float(params.pop("amplitude", 1.0))
        freq = int(params.pop("frequency", 1))
        axis = int(params.pop("axis", 0))
        mk = str(params.pop("mode_kind", "sin"))
        _check_keys(params, set(), "initial.params")
        return single_mode_field(grid, amp, freq, axis, kind=mk)
    if kind == "random_decay":
        amp = float(params.pop("amplitude", 1.0))
        decay = float(params.pop("decay", 3.0))
        kcut = params.pop("kcut", None)
        _check_keys(params, set(), "initial.params")
        rng = np.random.default_rng((seed, 0xF1E1D))
        return random_smooth_field(grid, rng, decay=decay,
                                   kcut=None if kcut is None else float(kcut),
                                   amplitude=amp)
    raise ConfigurationError(f"unknown initial condition kind {kind!r}")


def _build_forcing(kind: str, params: dict, problem: NonlinearProblem,
                   grid: TorusGrid):
    params = dict(params)
    if kind == "none":
        return None
    if kind == "single_mode":
        amp = float(params.pop("amplitude", 1.0))
        freq = int(params.pop("frequency", 1))
        axis = int(params.pop("axis", 0))
        rate = float(params.pop("decay_rate", 0.0))
        _check_keys(params, set(), "forcing.params")

        def f(t: float) -> SpectralField:
            return single_mode_field(grid, amp * math.exp(-rate * t), freq, axis)

        return f
    if kind == "manufactured":
        ms = ManufacturedSolution(
            problem, grid,
            amplitude=float(params.pop("amplitude", 1.0)),
            frequency=int(params.pop("frequency", 1)),
            axis=int(params.pop("axis", 0)),
            rate=float(params.pop("rate", 1.0)))
        _check_keys(params, set(), "forcing.params")
        return ms.forcing
    raise ConfigurationError(f"unknown forcing kind {kind!r}")


def _build_noise(block: dict, grid: TorusGrid) -> NoiseSpec:
    block = dict(block)
    _check_keys(block, _NOISE_KEYS, "sde.noise")
    kind = str(block.get("kind", "none"))
    if kind == "none":
        return NoiseSpec()
    if kind == "additive":
        fieldv = single_mode_field(grid, float(block.get("amplitude", 1.0)),
                                   int(block.get("frequency", 1)),
                                   int(block.get("axis", 0)),
                                   kind=str(block.get("mode_kind", "sin")))
        return NoiseSpec(kind="additive", additive_field=fieldv)
    if kind == "multiplicative_smoothed":
        gain = float(block.get("gain", 1.0))
        formula = str(block.get("formula", "linear_state"))
        if formula == "linear_state":
            coeff = lambda t, u, grads: gain * u
        elif formula == "sin_state":
            coeff = lambda t, u, grads: gain * np.sin(u)
        else:
            raise ConfigurationError(f"unknown noise formula {formula!r}")
        if "lipschitz_bound" not in block:
            raise ConfigurationError(
                "multiplicative noise must declare lipschitz_bound "
                "(its constant into the smooth scale)")
        return NoiseSpec(kind="multiplicative_smoothed", coefficient=coeff,
                         smoothing_band=block.get("smoothing_band"),
                         lipschitz_bound=float(block["lipschitz_bound"]))
    raise ConfigurationError(f"unknown noise kind {kind!r}")


def load_config(path: str | Path) -> RunConfig:
    """Parse and materialize a YAML run configuration.

    Structural problems (unknown keys, bad kinds, invalid grids) raise
    ``ConfigurationError``; numeric admissibility is checked separately by
    :func:`validate_run`.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not parseable YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    _check_keys(raw, set(_SCHEMA), "config")
    for key, allowed in _SCHEMA.items():
        if allowed is not None and key in raw:
            if not isinstance(raw[key], dict):
                raise ConfigurationError(f"config.{key} must be a mapping")
            if key not in ("sde",):
                _check_keys(raw[key], allowed, key)

    gblock = raw.get("grid", {})
    grid = TorusGrid(d=int(gblock.get("d", 1)), n=int(gblock.get("n", 64)),
                     period=float(gblock.get("period", 2.0 * math.pi)))
    base_scale = float(gblock.get("base_scale", 4.0)) * grid.lattice_unit
    bank = build_lp_bank(grid, base_scale)

    pblock = raw.get("problem", {})
    pname = str(pblock.get("name", "heat"))
    pparams = dict(pblock.get("params", {}))
    problem = builtin_problem(pname, grid.d, **pparams)

    sblock = raw.get("space", {})
    space = FunctionSpaceParams(s=float(sblock.get("s", 2.0)),
                                q=float(sblock.get("q", 4.0)),
                                d=grid.d, m=problem.m)

    seed = int(raw.get("seed", 0))
    iblock = raw.get("initial", {"kind": "zero"})
    u0 = _build_initial(str(iblock.get("kind", "zero")),
                        dict(iblock.get("params", {})), grid, seed)

    rc = RunConfig(
        raw=raw, grid=grid, bank=bank, problem=problem, space=space, u0=u0,
        seed=seed,
        output_dir=Path(raw.get("output_dir", "out")),
        snapshot_stride=int(raw.get("snapshot_stride", 1)))

    if "stepper" in raw:
        sb = dict(raw["stepper"])
        t_final = sb.pop("t_final", None)
        shift = sb.pop("shift", 0.0)
        if shift != "auto":
            shift = float(shift)
        rc.stepper = StepperConfig(
            dt=float(sb.pop("dt")), space=space,
            scheme=str(sb.pop("scheme", "backward_euler")), shift=shift,
            krylov_tol=float(sb.pop("krylov_tol", 1e-10)),
            krylov_maxiter=int(sb.pop("krylov_maxiter", 400)),
            norm_threshold=float(sb.pop("norm_threshold", 1e3)),
            region_margin=float(sb.pop("region_margin", 1e-3)),
            quadrature_nodes=int(sb.pop("quadrature_nodes", 8)))
        rc.stepper_t_final = None if t_final is None else float(t_final)

    fblock = raw.get("forcing", {"kind": "none"})
    rc.forcing = _build_forcing(str(fblock.get("kind", "none")),
                                dict(fblock.get("params", {})), problem, grid)

    if "sde" in raw:
        if rc.stepper is None:
            raise ConfigurationError("sde block requires a stepper block")
        sdeb = dict(raw["sde"])
        _check_keys(sdeb, _SCHEMA["sde"], "sde")
        noise = _build_noise(dict(sdeb.get("noise", {"kind": "none"})), grid)
        drift = None
        drift_l = 0.0
        damping = sdeb.get("drift_damping")
        if damping is not None:
            c = float(damping)
            drift = lambda t, u: (-c) * u
            drift_l = abs(c)
        from dataclasses import replace

        stepper = rc.stepper
        if "dt" in sdeb:
            stepper = replace(stepper, dt=float(sdeb["dt"]))
        rc.sde = SDEConfig(
            stepper=stepper,
            t_final=float(sdeb.get("t_final", rc.stepper_t_final or 1.0)),
            paths=int(sdeb.get("paths", 16)),
            seed=seed,
            thresholds=tuple(float(x) for x in sdeb.get("thresholds", [1e3])),
            noise=noise, drift_extra=drift, drift_extra_lipschitz=drift_l,
            forcing=rc.forcing,
            snapshot_paths=tuple(int(p) for p in sdeb.get("snapshot_paths", [])),
            snapshot_stride=int(sdeb.get("snapshot_stride", 1)))

    rc.extras = {k: dict(raw[k]) for k in
                 ("decompose", "ellipticity", "sector", "convergence") if k in raw}
    return rc


def _sample_jets(problem: NonlinearProblem, rng: np.random.Generator,
                 radius: float, count: int, max_tries: int = 10000):
    """Random jets in the ball of the given radius.

    For region problems the declared constant applies on the margin slab
    (distance above ``1/radius``), matching how admissible states are
    tracked, so samples are drawn there.
    """
    idx = multi_indices(problem.d, problem.m)
    jets = []
    margin = 1.0 / radius
    tries = 0
    while len(jets) < count and tries < max_tries:
        tries += 1
        eta = {a: float(x) for a, x in
               zip(idx, rng.uniform(-1.0, 1.0, len(idx)))}
        scale = radius / max(1e-12, math.sqrt(sum(v * v for v in eta.values())))
        eta = {a: v * scale * rng.uniform(0.2, 1.0) for a, v in eta.items()}
        if problem.region is not None:
            dist = float(np.min(problem.region.signed_distance(
                {a: np.asarray([v]) for a, v in eta.items()})))
            if dist <= margin:
                continue
        jets.append(eta)
    return jets


def validate_run(rc: RunConfig, stochastic: bool = False) -> list[str]:
    """Check every numeric admissibility gate; return tagged violations.

    An empty list means the configuration is admissible.  Each entry is
    ``"TAG: detail"`` naming the violated hypothesis.
    """
    out = []
    sp = rc.space
    gate = (sp.m + sp.d) / sp.s
    if not sp.q > gate:
        out.append(f"H1: q={sp.q:g} must exceed (m+d)/s={gate:g}")
    if not sp.s > 0:
        out.append(f"H1: s={sp.s:g} must be positive")
    if not (1.0 < sp.q < math.inf):
        out.append(f"H1: q={sp.q:g} must lie in (1, inf)")

    tn0 = trace_norm(rc.u0, sp, rc.bank)
    if not math.isfinite(tn0):
        out.append("H2: initial state has no finite trace-space norm")

    rng = np.random.default_rng((rc.seed, 0xC0FFEE))
    d1_err = check_d1_consistency(rc.problem, rng, samples=20)
    if d1_err > 1e-6:
        out.append(f"H3: declared jet derivative disagrees with finite "
                   f"differences (relative error {d1_err:.2e})")

    dirs = np.eye(rc.grid.d)
    if rc.grid.d > 1:
        extra = rng.standard_normal((4, rc.grid.d))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        dirs = np.vstack([dirs, extra])
    tag = "H4'" if rc.problem.region is not None else ("S3" if stochastic else "H4")
    for ball in (1.0, 2.0):
        jets = _sample_jets(rc.problem, rng, ball, 16)
        if not jets:
            out.append(f"{tag}: no admissible jets found in the ball of radius {ball:g}")
            continue
        cmin = ellipticity_min(rc.problem, jets, dirs)
        declared = rc.problem.c_prime(ball)
        if cmin < declared * (1.0 - 1e-9) - 1e-12:
            out.append(f"{tag}: sampled coercivity {cmin:.3g} below the declared "
                       f"constant {declared:.3g} on the ball of radius {ball:g}")

    if rc.problem.region is not None:
        margin = rc.stepper.region_margin if rc.stepper else 1e-3
        rep = region_report(rc.problem, jet(rc.u0, rc.problem.m))
        if not rep.inside or rep.distance <= margin:
            out.append(f"H1': initial jet range not strictly inside the region "
                       f"(distance {rep.distance:.3g}, margin {margin:g})")

    if stochastic:
        if not (2.0 <= sp.q < math.inf):
            out.append(f"S1: stochastic runs need 2 <= q < inf, got q={sp.q:g}")
        if rc.sde is None:
            out.append("S1: no sde block configured")
        else:
            noise = rc.sde.noise
            if noise.kind == "multiplicative_smoothed":
                worst = 0.0
                for _ in range(5):
                    u = random_smooth_field(rc.grid, rng, decay=3.0)
                    v = random_smooth_field(rc.grid, rng, decay=3.0)
                    den = trace_norm(u - v, sp, rc.bank)
                    if den == 0:
                        continue
                    bu = noise.field(0.0, u, rc.bank)
                    bv = noise.field(0.0, v, rc.bank)
                    worst = max(worst, hs2_norm(bu - bv, sp.s + 1) / den)
                if worst > noise.lipschitz_bound * (1.0 + 1e-6):
                    out.append(f"S7: measured noise Lipschitz ratio {worst:.3g} "
                               f"exceeds the declared bound {noise.lipschitz_bound:g}")
    return out
