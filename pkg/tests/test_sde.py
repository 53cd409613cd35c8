import math

import numpy as np
import pytest

from parapde.errors import ConfigurationError, HypothesisViolation
from parapde.evolve import StepperConfig, single_mode_field, step
from parapde.problems import heat_problem, perturbed_heat_problem
from parapde.sde import (NoiseSpec, SDEConfig, brownian_increments, sde_step,
                         solve_paths, strong_error_study)
from parapde.spectral import (FunctionSpaceParams, SpectralField,
                              mode_coefficients, random_smooth_field, trace_norm)

SPACE = FunctionSpaceParams(s=2.0, q=4.0, d=1)


def stepper(dt, **kw):
    return StepperConfig(dt=dt, space=SPACE, **kw)


def additive(grid, amp=0.4, freq=1):
    return NoiseSpec(kind="additive",
                     additive_field=single_mode_field(grid, amp, freq))


class TestIncrements:
    def test_reproducible(self):
        a = brownian_increments(42, 3, 1000, 0.01)
        b = brownian_increments(42, 3, 1000, 0.01)
        assert np.array_equal(a, b)

    def test_paths_differ(self):
        a = brownian_increments(42, 0, 1000, 0.01)
        b = brownian_increments(42, 1, 1000, 0.01)
        assert not np.array_equal(a, b)

    def test_moments(self):
        w = brownian_increments(7, 0, 100000, 0.01)
        assert abs(w.mean()) <= 4.0 * math.sqrt(0.01 / 1e5)
        assert abs(w.var() / 0.01 - 1.0) <= 0.05

    def test_steps_positive(self):
        with pytest.raises(ConfigurationError):
            brownian_increments(1, 0, 0, 0.1)


class TestSdeStep:
    def test_degenerate_matches_deterministic(self, grid64, bank64):
        pr = heat_problem(1)
        sc = stepper(0.01)
        cfg = SDEConfig(stepper=sc, t_final=0.1, paths=1, seed=0,
                        thresholds=(1e6,))
        u0 = single_mode_field(grid64, 1.0, 1)
        det, _ = step(pr, u0, bank64, sc, shift=0.0)
        sto, _ = sde_step(pr, u0, 0.0, 0.77, bank64, cfg, shift=0.0)
        assert (det - sto).sup_norm() <= 1e-12

    def test_additive_from_zero_state(self, grid64, bank64):
        # from zero the update is the implicit solve applied to noise*dW;
        # a low-block mode passes through unchanged for the heat operator
        pr = heat_problem(1)
        sc = stepper(0.02)
        cfg = SDEConfig(stepper=sc, t_final=0.1, paths=1, seed=0,
                        thresholds=(1e6,), noise=additive(grid64, 0.5, 1))
        dW = 0.31
        u1, _ = sde_step(pr, SpectralField.zero(grid64), 0.0, dW, bank64, cfg,
                         shift=0.0)
        expected = single_mode_field(grid64, 0.5 * dW, 1)
        assert (u1 - expected).sup_norm() <= 1e-12

    def test_reality(self, grid64, bank64, rng):
        ph = perturbed_heat_problem(1)
        sc = stepper(0.01)
        cfg = SDEConfig(stepper=sc, t_final=0.1, paths=1, seed=0,
                        thresholds=(1e6,), noise=additive(grid64))
        u = random_smooth_field(grid64, rng, decay=3.0, amplitude=0.4)
        u1, _ = sde_step(ph, u, 0.0, -0.4, bank64, cfg, shift=0.0)
        assert np.all(np.isfinite(u1.values))
        assert np.isrealobj(u1.values)


class TestNoiseSpec:
    def test_kinds_validated(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(kind="weird")
        with pytest.raises(ConfigurationError):
            NoiseSpec(kind="additive")  # needs a field

    def test_multiplicative_is_smoothed(self, grid64, bank64, rng):
        spec = NoiseSpec(kind="multiplicative_smoothed",
                         coefficient=lambda t, u, g: u * u,
                         smoothing_band=1, lipschitz_bound=10.0)
        u = random_smooth_field(grid64, rng, decay=1.0)
        out = spec.field(0.0, u, bank64)
        # output carries no content above the smoothing cutoff support
        hi = out.coeffs * (grid64.xi_norm >= bank64.base_scale * 2.0)
        assert np.max(np.abs(hi)) <= 1e-10 * np.max(np.abs(out.coeffs))

    def test_adaptedness_of_coefficient_calls(self, grid64, bank64):
        # the coefficient is evaluated at the pre-increment state only
        seen = []

        def coeff(t, u, grads):
            seen.append((t, u.copy()))
            return 0.1 * u

        spec = NoiseSpec(kind="multiplicative_smoothed", coefficient=coeff,
                         lipschitz_bound=10.0)
        sc = stepper(0.05)
        cfg = SDEConfig(stepper=sc, t_final=0.1, paths=1, seed=5,
                        thresholds=(1e6,), noise=spec)
        pr = heat_problem(1)
        u0 = single_mode_field(grid64, 1.0, 1)
        ens = solve_paths(pr, u0, bank64, cfg)
        assert ens.paths[0].status == "completed"
        assert len(seen) == 2  # one call per step, before the increment lands
        assert np.array_equal(seen[0][1], u0.values)


class TestEnsembles:
    def test_thresholds_must_ascend(self, grid64):
        with pytest.raises(ConfigurationError):
            SDEConfig(stepper=stepper(0.01), t_final=0.1, paths=1, seed=0,
                      thresholds=(2.0, 1.0))

    def test_q_gate(self, grid64):
        space_bad = FunctionSpaceParams(s=3.0, q=1.9, d=1)
        with pytest.raises(HypothesisViolation):
            SDEConfig(stepper=StepperConfig(dt=0.01, space=space_bad),
                      t_final=0.1, paths=1, seed=0, thresholds=(1.0,))

    def test_immediate_stop_below_initial_norm(self, grid64, bank64):
        pr = heat_problem(1)
        cfg = SDEConfig(stepper=stepper(0.01), t_final=0.2, paths=4, seed=1,
                        thresholds=(0.05, 0.1), noise=additive(grid64))
        u0 = single_mode_field(grid64, 1.0, 1)
        ens = solve_paths(pr, u0, bank64, cfg)
        assert ens.fraction_stopped == 1.0
        for p in ens.paths:
            assert p.sigma[0.05] == 0.0 and p.sigma[0.1] == 0.0
            assert p.status == "stopped_norm"

    def test_sigma_monotone_in_threshold(self, grid64, bank64):
        pr = heat_problem(1)
        cfg = SDEConfig(stepper=stepper(0.02), t_final=1.0, paths=6, seed=9,
                        thresholds=(0.5, 1.0, 2.0),
                        noise=additive(grid64, amp=2.0))
        ens = solve_paths(pr, SpectralField.zero(grid64), bank64, cfg)
        for p in ens.paths:
            assert p.sigma[0.5] <= p.sigma[1.0] <= p.sigma[2.0]

    def test_substream_isolation(self, grid64, bank64):
        pr = heat_problem(1)
        mk = lambda paths: SDEConfig(stepper=stepper(0.02), t_final=0.1,
                                     paths=paths, seed=31, thresholds=(1e6,),
                                     noise=additive(grid64))
        big = solve_paths(pr, single_mode_field(grid64, 1.0, 1), bank64, mk(5))
        small = solve_paths(pr, single_mode_field(grid64, 1.0, 1), bank64, mk(2))
        for i in range(2):
            assert np.array_equal(big.paths[i].terminal.values,
                                  small.paths[i].terminal.values)

    def test_zero_noise_paths_identical_to_deterministic(self, grid64, bank64):
        from parapde.evolve import solve

        pr = heat_problem(1)
        sc = stepper(0.02)
        cfg = SDEConfig(stepper=sc, t_final=0.1, paths=3, seed=2,
                        thresholds=(1e6,))
        u0 = single_mode_field(grid64, 1.0, 1)
        ens = solve_paths(pr, u0, bank64, cfg)
        traj = solve(pr, u0, 0.1, bank64, sc, snapshot_stride=10**9)
        for p in ens.paths:
            assert (p.terminal - traj.final_state).sup_norm() <= 1e-12


class TestMoments:
    def test_ou_sanity_small_ensemble(self, grid64, bank64):
        # 64 paths at 4 standard errors: a cheap stand-in for the full
        # acceptance run
        pr = heat_problem(1)
        sigma0 = 0.4
        cfg = SDEConfig(stepper=stepper(1 / 128), t_final=1.0, paths=64,
                        seed=77, thresholds=(1e6,),
                        noise=additive(grid64, sigma0, 1))
        ens = solve_paths(pr, single_mode_field(grid64, 1.0, 1), bank64, cfg)
        coeffs = np.array([mode_coefficients(p.terminal, 1)[1] for p in ens.paths])
        mean_exact = math.exp(-1.0)
        var_exact = sigma0**2 * (1 - math.exp(-2.0)) / 2
        se_mean = coeffs.std(ddof=1) / math.sqrt(len(coeffs))
        se_var = coeffs.var(ddof=1) * math.sqrt(2.0 / (len(coeffs) - 1))
        assert abs(coeffs.mean() - mean_exact) <= 4 * se_mean
        assert abs(coeffs.var(ddof=1) - var_exact) <= 4 * se_var


class TestStrongError:
    def test_zero_noise_reduces_to_deterministic_order(self, grid64, bank64):
        pr = heat_problem(1)
        cfg = SDEConfig(stepper=stepper(1 / 10), t_final=0.5, paths=1, seed=3,
                        thresholds=(1e6,))
        out = strong_error_study(pr, single_mode_field(grid64, 1.0, 1), bank64,
                                 cfg, dts=[1 / 10, 1 / 20, 1 / 40],
                                 ref_refinement=64, paths=1)
        assert 0.8 <= out["slope"] <= 1.2

    def test_nesting_validated(self, grid64, bank64):
        pr = heat_problem(1)
        cfg = SDEConfig(stepper=stepper(1 / 10), t_final=0.5, paths=1, seed=3,
                        thresholds=(1e6,))
        with pytest.raises(ConfigurationError):
            strong_error_study(pr, single_mode_field(grid64, 1.0, 1), bank64,
                               cfg, dts=[1 / 10, 1 / 13], paths=1)

    def test_confidence_interval_scaling(self, grid64, bank64):
        # the half-width of the mean-error interval shrinks like 1/sqrt(M)
        pr = heat_problem(1)
        cfg = SDEConfig(stepper=stepper(1 / 8), t_final=0.25, paths=1, seed=5,
                        thresholds=(1e6,), noise=additive(grid64))
        out = strong_error_study(pr, single_mode_field(grid64, 1.0, 1), bank64,
                                 cfg, dts=[1 / 8], ref_refinement=32, paths=64)
        errs = np.array(out["per_path_errors"][1 / 8])
        w32 = errs[:32].std(ddof=1) / math.sqrt(32)
        w64 = errs.std(ddof=1) / math.sqrt(64)
        ratio = w32 / w64
        assert abs(ratio - math.sqrt(2.0)) <= 0.3 * math.sqrt(2.0)
