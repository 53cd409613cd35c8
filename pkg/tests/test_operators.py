import cmath
import math

import numpy as np
import pytest

from parapde.errors import ConfigurationError, ResolventFailureError
from parapde.operators import (ContourFunction, a_priori_check, check_linearity,
                               dunford_apply, multiplier_handle,
                               paradiff_handle, resolvent_solve, sector_probe)
from parapde.paradiff import build_symbol
from parapde.problems import heat_problem
from parapde.spectral import SpectralField, bessel_multiplier, random_smooth_field
from parapde.evolve import single_mode_field


@pytest.fixture(scope="module")
def heat_handle(grid64_mod, bank64_mod):
    sym = build_symbol(heat_problem(1), SpectralField.zero(grid64_mod), bank64_mod)
    return paradiff_handle(sym, shift=0.0)


@pytest.fixture(scope="module")
def grid64_mod():
    from parapde.spectral import TorusGrid

    return TorusGrid(d=1, n=64)


@pytest.fixture(scope="module")
def bank64_mod(grid64_mod):
    from parapde.spectral import build_lp_bank

    return build_lp_bank(grid64_mod)


def std_contour_function():
    return ContourFunction(f=lambda z: z / (1 + z) ** 2, eps=1.0,
                           sector_angle=math.pi / 2, name="z/(1+z)^2")


class TestHandles:
    def test_linearity(self, heat_handle, rng):
        assert check_linearity(heat_handle, rng) <= 1e-10

    def test_adjoint_pairing(self, heat_handle, rng):
        x = rng.standard_normal(heat_handle.grid.shape) \
            + 1j * rng.standard_normal(heat_handle.grid.shape)
        y = rng.standard_normal(heat_handle.grid.shape) \
            + 1j * rng.standard_normal(heat_handle.grid.shape)
        lhs = np.vdot(y, heat_handle.action(x))
        rhs = np.vdot(heat_handle.adjoint(y), x)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_real_fields_stay_real(self, heat_handle, grid64_mod, rng):
        u = random_smooth_field(grid64_mod, rng)
        out = heat_handle.apply_field(u)
        assert np.all(np.isreal(out.values))


class TestResolvent:
    def test_diagonal_exact(self, grid64_mod, rng):
        table = 1.0 + grid64_mod.xi_norm**2
        A = multiplier_handle(grid64_mod, table, order=2)
        rhs = random_smooth_field(grid64_mod, rng).values.astype(complex)
        z = -2.0 + 1.0j
        w, iters = resolvent_solve(A, z, rhs, tol=1e-12)
        resid = z * w - A.action(w) - rhs
        assert np.linalg.norm(resid.reshape(-1)) <= 1e-12 * np.linalg.norm(rhs.reshape(-1))
        assert iters <= 2

    def test_paradiff_converges_quickly(self, rng):
        from parapde.spectral import TorusGrid, build_lp_bank

        g = TorusGrid(d=1, n=128)
        bank = build_lp_bank(g)
        sym = build_symbol(heat_problem(1), SpectralField.zero(g), bank)
        H = paradiff_handle(sym, shift=0.0)
        rhs = random_smooth_field(g, rng).values.astype(complex)
        w, iters = resolvent_solve(H, -1.0 + 0j, rhs)
        assert iters <= 50

    def test_zero_rhs(self, heat_handle):
        w, iters = resolvent_solve(heat_handle, -1.0 + 0j,
                                   np.zeros(heat_handle.grid.shape, dtype=complex))
        assert np.all(w == 0) and iters == 0

    def test_singular_preconditioner_rejected(self, grid64_mod, rng):
        table = 1.0 + grid64_mod.xi_norm**2
        A = multiplier_handle(grid64_mod, table, order=2)
        rhs = random_smooth_field(grid64_mod, rng).values.astype(complex)
        with pytest.raises(ResolventFailureError):
            resolvent_solve(A, complex(1.0 + grid64_mod.lattice_unit**2), rhs)


class TestDunford:
    def test_diagonal_oracle(self, grid64_mod, rng):
        table = 1.0 + grid64_mod.xi_norm**2
        A = multiplier_handle(grid64_mod, table, order=2)
        f = std_contour_function()
        v = random_smooth_field(grid64_mod, rng, decay=1.5).values.astype(complex)
        got = dunford_apply(A, f, nu=math.pi / 4, nodes=200, v=v)
        ref = np.fft.ifftn((table / (1 + table) ** 2) * np.fft.fftn(v))
        assert np.max(np.abs(got - ref)) <= 1e-6 * np.max(np.abs(ref))

    def test_zero_function(self, heat_handle, grid64_mod, rng):
        f0 = ContourFunction(f=lambda z: 0.0, eps=1.0, sector_angle=math.pi / 2)
        v = random_smooth_field(grid64_mod, rng).values.astype(complex)
        out = dunford_apply(heat_handle, f0, nu=math.pi / 4, nodes=50, v=v)
        assert np.max(np.abs(out)) == 0.0

    def test_self_convergence_on_band_operator(self, heat_handle, grid64_mod, rng):
        f = std_contour_function()
        v = random_smooth_field(grid64_mod, rng, decay=1.5).values.astype(complex)
        a = dunford_apply(heat_handle, f, nu=math.pi / 4, nodes=200, v=v)
        b = dunford_apply(heat_handle, f, nu=math.pi / 4, nodes=400, v=v)
        assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(b))

    def test_contour_angle_validation(self, heat_handle, grid64_mod):
        f = std_contour_function()
        v = np.zeros(grid64_mod.shape, dtype=complex)
        with pytest.raises(ConfigurationError):
            dunford_apply(heat_handle, f, nu=math.pi, nodes=10, v=v)

    def test_decay_declaration_checked(self):
        bad = ContourFunction(f=lambda z: 1.0 / z, eps=0.5,
                              sector_angle=math.pi / 2)
        with pytest.raises(ConfigurationError):
            bad.check_decay()
        good = std_contour_function()
        small, large = good.check_decay()
        assert small < math.inf and large < math.inf


class TestSectorProbe:
    thetas = [math.pi / 12, math.pi / 6, math.pi / 4, math.pi / 3,
              math.pi / 2, 2 * math.pi / 3]

    def test_diagonal_oracle(self, grid64_mod):
        table = 1.0 + grid64_mod.xi_norm**2
        A = multiplier_handle(grid64_mod, table, order=2)
        radii = np.geomspace(0.1, 1e4, 5)
        rep = sector_probe(A, self.thetas, radii, probes=3, power_steps=15, seed=0)
        mu = table.reshape(-1)
        for i, th in enumerate(rep.thetas):
            exact = max(np.max(np.abs(r * cmath.exp(1j * th)
                                      / (r * cmath.exp(1j * th) - mu)))
                        for r in radii)
            est = np.nanmax(rep.estimates[i])
            assert abs(est - exact) <= 0.1 * exact

    def test_angle_below_pi_third(self, heat_handle):
        radii = np.geomspace(0.1, 1e4, 5)
        rep = sector_probe(heat_handle, self.thetas, radii, probes=2,
                           power_steps=10, seed=0)
        assert rep.phi_estimate <= math.pi / 3

    def test_scaling_invariance(self, grid64_mod):
        table = 1.0 + grid64_mod.xi_norm**2
        A1 = multiplier_handle(grid64_mod, table, order=2)
        A2 = multiplier_handle(grid64_mod, 2.0 * table, order=2)
        radii = np.geomspace(0.5, 50.0, 4)
        r1 = sector_probe(A1, self.thetas[:3], radii, probes=2, power_steps=10, seed=3)
        r2 = sector_probe(A2, self.thetas[:3], 2.0 * radii, probes=2,
                          power_steps=10, seed=3)
        assert np.allclose(r1.estimates, r2.estimates, rtol=1e-9, atol=1e-12)

    def test_reproducible(self, heat_handle):
        radii = np.geomspace(0.5, 100.0, 3)
        a = sector_probe(heat_handle, self.thetas[:3], radii, probes=2,
                         power_steps=8, seed=11)
        b = sector_probe(heat_handle, self.thetas[:3], radii, probes=2,
                         power_steps=8, seed=11)
        assert np.array_equal(a.estimates, b.estimates)

    def test_angle_domain_validated(self, heat_handle):
        with pytest.raises(ConfigurationError):
            sector_probe(heat_handle, [0.0, 0.5], [1.0], probes=1, power_steps=2)


class TestAPriori:
    def test_bessel_power_ratio_at_most_one(self, grid64_mod, rng):
        A = multiplier_handle(grid64_mod, bessel_multiplier(grid64_mod, 2.0),
                              order=2)
        fields = [random_smooth_field(grid64_mod, rng, decay=1.0) for _ in range(5)]
        assert a_priori_check(A, s=1.0, m=2, fields=fields) <= 1.0 + 1e-12

    def test_heat_band_operator_finite(self, heat_handle, grid64_mod, rng):
        fields = [random_smooth_field(grid64_mod, rng, decay=1.0) for _ in range(5)]
        ratio = a_priori_check(heat_handle, s=1.0, m=2, fields=fields)
        assert math.isfinite(ratio) and ratio > 0

    def test_low_block_controlled_by_low_norm(self, heat_handle, grid64_mod, bank64_mod):
        # fields inside the low-frequency block are annihilated by the band
        # operator, so the ratio reduces to |u|_{s+m} / |u|_s there
        u = single_mode_field(grid64_mod, 1.0, 1)
        from parapde.spectral import hs2_norm

        ratio = a_priori_check(heat_handle, s=1.0, m=2, fields=[u])
        assert ratio == pytest.approx(hs2_norm(u, 3.0) / hs2_norm(u, 1.0), rel=1e-9)
