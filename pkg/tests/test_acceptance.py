"""Acceptance suite.

One test per acceptance criterion, each at its stated tolerance, printing
one pass/fail line (run with ``pytest tests/test_acceptance.py -v -s``).
Expected values come from independent oracles: closed-form solutions,
diagonal-operator arithmetic, finite differences, statistics of exactly
solvable stochastic models, and refinement comparisons.
"""

import cmath
import math

import numpy as np
import yaml

from parapde.cli import main as cli_main
from parapde.evolve import (ManufacturedSolution, StepperConfig,
                            convergence_study, regularization_diagnostic,
                            single_mode_field, solve)
from parapde.operators import (ContourFunction, dunford_apply,
                               multiplier_handle, paradiff_handle, sector_probe)
from parapde.paradiff import (G, apply_symbol, build_symbol,
                              decomposition_residual, lipschitz_probe,
                              smooth_symbol, symbol_ellipticity)
from parapde.problems import (biharmonic_problem, check_d1_consistency,
                              eval_F, heat_problem, jet,
                              perturbed_heat_problem,
                              region_restricted_problem)
from parapde.sde import NoiseSpec, SDEConfig, solve_paths, strong_error_study
from parapde.spectral import (FunctionSpaceParams, SpectralField, TorusGrid,
                              build_lp_bank, mode_coefficients,
                              random_smooth_field, trace_norm)


def report(name: str, ok: bool, detail: str = ""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name} failed: {detail}"


def c2_scaled(grid, rng, bound):
    u = random_smooth_field(grid, rng, decay=3.0, kcut=grid.xi_max / 2)
    jf = jet(u, 2)
    sup = max(float(np.max(np.abs(v))) for v in jf.eta.values())
    return u * (bound / sup)


def spectrum_field(grid, spec):
    """Realize a shared low-frequency spectrum on any grid resolution."""
    co = np.zeros(grid.shape, dtype=complex)
    for k, a in spec.items():
        co[k % grid.n] = a * grid.size
        co[(-k) % grid.n] = np.conj(a) * grid.size
    return SpectralField.from_coeffs(grid, co)


def random_spectrum(rng, kmax=14, decay=3.0):
    return {k: (rng.standard_normal() + 1j * rng.standard_normal())
            * (1.0 + k) ** (-decay) for k in range(1, kmax + 1)}


def test_partition_of_unity():
    worst = 0.0
    for d, n in ((1, 64), (1, 256), (2, 64), (2, 128)):
        bank = build_lp_bank(TorusGrid(d=d, n=n))
        worst = max(worst, float(np.max(np.abs(sum(bank.psi) - 1.0))))
    report("partition of unity <= 1e-12", worst <= 1e-12, f"max dev {worst:.2e}")


def test_decomposition_identity():
    rng = np.random.default_rng(20250801)
    worst_ratio = {"heat": 0.0, "perturbed_heat": 0.0}
    for d in (1, 2):
        grid = TorusGrid(d=d, n=128)
        bank = build_lp_bank(grid)
        problems = {"heat": (heat_problem(d), 1e-10),
                    "perturbed_heat": (perturbed_heat_problem(d), 1e-8)}
        fields = [c2_scaled(grid, rng, 2.0) for _ in range(20)]
        for name, (prob, tol) in problems.items():
            for u in fields:
                f_sup = eval_F(prob, jet(u, 2)).sup_norm()
                resid = decomposition_residual(prob, u, bank)
                worst_ratio[name] = max(worst_ratio[name],
                                        resid / (tol * (1.0 + f_sup)))
    ok = all(v <= 1.0 for v in worst_ratio.values())
    report("decomposition identity (1e-10 heat, 1e-8 perturbed)", ok,
           f"worst tolerance fractions {worst_ratio}")


def test_linear_consistency_heat_action():
    rng = np.random.default_rng(7)
    grid = TorusGrid(d=1, n=128)
    bank = build_lp_bank(grid)
    sym = build_symbol(heat_problem(1), random_smooth_field(grid, rng), bank)
    table = (1.0 - bank.Psi[0]) * grid.xi_norm**2
    worst = 0.0
    for _ in range(10):
        v = random_smooth_field(grid, rng, decay=1.5)
        ref = np.fft.ifftn(table * v.coeffs).real
        got = apply_symbol(sym, v).values
        worst = max(worst, float(np.max(np.abs(got - ref))) / (1 + np.max(np.abs(ref))))
    report("heat action equals multiplier to 1e-10", worst <= 1e-10,
           f"worst {worst:.2e}")


def test_uniform_strong_ellipticity():
    rng = np.random.default_rng(11)
    grid = TorusGrid(d=1, n=128)
    bank = build_lp_bank(grid)
    ph = perturbed_heat_problem(1)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    worst_c = math.inf
    all_passed = True
    for _ in range(8):
        u = random_smooth_field(grid, rng, decay=3.0)
        tn = trace_norm(u, space, bank)
        u = u * (rng.uniform(0.2, 0.95) * 2.0 / tn)
        rep = symbol_ellipticity(smooth_symbol(build_symbol(ph, u, bank), 0.5),
                                 n=2.0)
        worst_c = min(worst_c, rep.c)
        all_passed &= rep.passed
        assert rep.L >= 2.0 * rep.lower_order_sup / rep.c_required
    ok = all_passed and worst_c >= 0.25
    report("uniform strong ellipticity c >= 1/4 over B(0,2)", ok,
           f"min c {worst_c:.3f}")


def test_derivative_consistency():
    rng = np.random.default_rng(3)
    worst = 0.0
    for prob in (heat_problem(1), perturbed_heat_problem(1),
                 biharmonic_problem(1), region_restricted_problem(1),
                 heat_problem(2), perturbed_heat_problem(2)):
        worst = max(worst, check_d1_consistency(prob, rng, samples=100))
    report("jet derivative vs finite differences <= 1e-6", worst <= 1e-6,
           f"worst {worst:.2e}")


def test_deterministic_convergence_heat_and_manufactured():
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    cfg = StepperConfig(dt=1 / 40, space=space)
    dts = [1 / 40, 1 / 80, 1 / 160]

    pr = heat_problem(1)
    u0 = single_mode_field(grid, 1.0, 1)
    exact = single_mode_field(grid, math.exp(-1.0), 1)
    res_h = convergence_study(pr, bank, cfg, u0, 1.0, dts, exact)

    ph = perturbed_heat_problem(1)
    ms = ManufacturedSolution(ph, grid)
    res_m = convergence_study(ph, bank, cfg, ms.u0(), 1.0, dts, ms.exact(1.0),
                              forcing=ms.forcing)
    ok = 0.8 <= res_h["slope"] <= 1.2 and 0.8 <= res_m["slope"] <= 1.2
    report("deterministic convergence slopes in [0.8, 1.2]", ok,
           f"heat {res_h['slope']:.3f}, manufactured {res_m['slope']:.3f}")


def test_biharmonic_convergence():
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1, m=4)
    bi = biharmonic_problem(1)
    u0 = single_mode_field(grid, 1.0, 2)
    exact = single_mode_field(grid, math.exp(-16.0), 2)
    cfg = StepperConfig(dt=1 / 320, space=space)
    res = convergence_study(bi, bank, cfg, u0, 1.0,
                            [1 / 320, 1 / 640, 1 / 1280], exact)
    ok = 0.8 <= res["slope"] <= 1.2
    report("biharmonic exact-solution slope in [0.8, 1.2]", ok,
           f"slope {res['slope']:.3f}")


def test_dunford_quadrature():
    rng = np.random.default_rng(5)
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    f = ContourFunction(f=lambda z: z / (1 + z) ** 2, eps=1.0,
                        sector_angle=math.pi / 2)
    v = random_smooth_field(grid, rng, decay=1.5).values.astype(complex)

    table = 1.0 + grid.xi_norm**2
    A = multiplier_handle(grid, table, order=2)
    got = dunford_apply(A, f, nu=math.pi / 4, nodes=200, v=v)
    ref = np.fft.ifftn((table / (1 + table) ** 2) * np.fft.fftn(v))
    diag_err = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))

    sym = build_symbol(heat_problem(1), SpectralField.zero(grid), bank)
    H = paradiff_handle(sym, shift=0.0)
    a = dunford_apply(H, f, nu=math.pi / 4, nodes=200, v=v)
    b = dunford_apply(H, f, nu=math.pi / 4, nodes=400, v=v)
    self_err = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    ok = diag_err <= 1e-6 and self_err <= 1e-6
    report("contour calculus: diagonal oracle and node-doubling <= 1e-6", ok,
           f"diag {diag_err:.2e}, self {self_err:.2e}")


def test_sector_probe():
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    thetas = [math.pi / 12, math.pi / 6, math.pi / 4, math.pi / 3,
              math.pi / 2, 2 * math.pi / 3, 5 * math.pi / 6]
    radii = np.geomspace(0.1, 1e4, 6)

    table = 1.0 + grid.xi_norm**2
    A = multiplier_handle(grid, table, order=2)
    rep = sector_probe(A, thetas, radii, probes=4, power_steps=20, seed=0)
    mu = table.reshape(-1)
    worst_rel = 0.0
    for i, th in enumerate(rep.thetas):
        exact = max(np.max(np.abs(r * cmath.exp(1j * th)
                                  / (r * cmath.exp(1j * th) - mu)))
                    for r in radii)
        worst_rel = max(worst_rel,
                        abs(float(np.nanmax(rep.estimates[i])) - exact) / exact)

    sym = build_symbol(heat_problem(1), SpectralField.zero(grid), bank)
    H = paradiff_handle(sym, shift=0.0)
    rep_h = sector_probe(H, thetas, radii, probes=2, power_steps=12, seed=0)
    ok = worst_rel <= 0.10 and rep_h.phi_estimate <= math.pi / 3
    report("sector probe: oracle within 10%, angle <= pi/3", ok,
           f"rel {worst_rel:.3f}, angle {rep_h.phi_estimate:.3f}")


def test_region_exit_machinery(tmp_path):
    doc = {
        "problem": {"name": "region_restricted", "params": {"s_max": 1.0}},
        "grid": {"d": 1, "n": 64},
        "space": {"s": 2.0, "q": 4.0},
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "initial": {"kind": "single_mode",
                    "params": {"amplitude": -0.952380952380952, "frequency": 1}},
        "forcing": {"kind": "single_mode",
                    "params": {"amplitude": -2.0, "frequency": 1}},
        "stepper": {"dt": 0.01, "t_final": 2.0},
    }
    cfg = tmp_path / "region.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    code = cli_main(["solve", "--config", str(cfg)])
    man = yaml.safe_load((tmp_path / "run/manifest.yaml").read_text())
    ok = (code == 3
          and man["statuses"]["halt_status"] == "left_ellipticity_region"
          and man["statuses"]["t_final"] < 2.0)
    report("region exit halts before horizon with exit code 3", ok,
           f"code {code}, t_final {man['statuses']['t_final']}")


def test_sde_ou_moments():
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    sigma0 = 0.4
    noise = NoiseSpec(kind="additive",
                      additive_field=single_mode_field(grid, sigma0, 1))
    cfg = SDEConfig(stepper=StepperConfig(dt=1 / 128, space=space),
                    t_final=1.0, paths=256, seed=2024, thresholds=(1e6,),
                    noise=noise)
    ens = solve_paths(heat_problem(1), single_mode_field(grid, 1.0, 1), bank, cfg)
    coeffs = np.array([mode_coefficients(p.terminal, 1)[1] for p in ens.paths])
    mean_exact = math.exp(-1.0)
    var_exact = sigma0**2 * (1.0 - math.exp(-2.0)) / 2.0
    se_mean = coeffs.std(ddof=1) / math.sqrt(len(coeffs))
    se_var = coeffs.var(ddof=1) * math.sqrt(2.0 / (len(coeffs) - 1))
    dm = abs(float(coeffs.mean()) - mean_exact)
    dv = abs(float(coeffs.var(ddof=1)) - var_exact)
    ok = dm <= 3 * se_mean and dv <= 3 * se_var
    report("mode statistics match exact scalar-diffusion moments (3 SE)", ok,
           f"|dmean| {dm:.4f} vs {3*se_mean:.4f}, |dvar| {dv:.5f} vs {3*se_var:.5f}")


def test_sde_strong_order():
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    noise = NoiseSpec(kind="additive",
                      additive_field=single_mode_field(grid, 0.4, 1))
    cfg = SDEConfig(stepper=StepperConfig(dt=1 / 20, space=space),
                    t_final=0.5, paths=24, seed=99, thresholds=(1e6,),
                    noise=noise)
    out = strong_error_study(heat_problem(1), single_mode_field(grid, 1.0, 1),
                             bank, cfg, dts=[1 / 10, 1 / 20, 1 / 40, 1 / 80],
                             ref_refinement=64, paths=24)
    ok = out["slope"] >= 0.9
    report("strong order >= 0.9 for additive noise", ok,
           f"slope {out['slope']:.3f}")


def test_lipschitz_probe_refinement_stability():
    rng = np.random.default_rng(17)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    ph = perturbed_heat_problem(1)
    pair_specs = [(random_spectrum(rng), random_spectrum(rng))
                  for _ in range(100)]
    probe_specs = [random_spectrum(rng) for _ in range(3)]
    results = {}
    for n in (64, 128):
        grid = TorusGrid(d=1, n=n)
        bank = build_lp_bank(grid)
        pairs = []
        for su, sv in pair_specs:
            u = spectrum_field(grid, su)
            v = spectrum_field(grid, sv)
            tu = trace_norm(u, space, bank)
            tv = trace_norm(v, space, bank)
            pairs.append((u * (min(1.0, 1.9 / tu)), v * (min(1.0, 1.9 / tv))))
        probes = [spectrum_field(grid, s) for s in probe_specs]
        results[n] = lipschitz_probe(ph, pairs, bank, space, probe_fields=probes)
    p1_dev = abs(results[64]["p1_max"] - results[128]["p1_max"]) \
        / results[128]["p1_max"]
    p2_dev = abs(results[64]["p2_max"] - results[128]["p2_max"]) \
        / results[128]["p2_max"]
    ok = p1_dev <= 0.25 and p2_dev <= 0.25
    report("operator/smooth-part Lipschitz ratios stable to 25% under refinement",
           ok, f"p1 dev {p1_dev:.3f}, p2 dev {p2_dev:.3f}")


def test_regularization_tails():
    rng = np.random.default_rng(5)
    grid = TorusGrid(d=1, n=64)
    bank = build_lp_bank(grid)
    space = FunctionSpaceParams(s=2.0, q=4.0, d=1)
    co = np.fft.fftn(rng.standard_normal(grid.shape))
    co *= (1.0 + grid.xi_norm) ** (-(0.5 + 0.6))
    u0 = SpectralField.from_coeffs(grid, co)
    u0 = u0 * (0.5 / u0.sup_norm())
    cfg = StepperConfig(dt=0.005, space=space)
    ok = True
    detail = []
    for prob in (heat_problem(1), perturbed_heat_problem(1)):
        traj = solve(prob, u0, 0.25, bank, cfg, snapshot_stride=5)
        times, tails = regularization_diagnostic(traj, bank, r=space.r)
        start = int(np.searchsorted(times, 5 * cfg.dt))
        mono = all(tails[i + 1] <= 1.05 * tails[i]
                   for i in range(start, len(tails) - 1)
                   if tails[i] > 1e-12 * tails[start])
        ok &= mono
        detail.append(f"{prob.name} monotone={mono}")
    report("high-band tails non-increasing after transient (5%)", ok,
           "; ".join(detail))


def test_determinism_bit_identical_outputs(tmp_path):
    doc = {
        "problem": {"name": "perturbed_heat"},
        "grid": {"d": 1, "n": 64},
        "space": {"s": 2.0, "q": 4.0},
        "seed": 41,
        "initial": {"kind": "random_decay",
                    "params": {"amplitude": 0.4, "decay": 3.0}},
        "stepper": {"dt": 0.02, "t_final": 0.2},
    }
    cfg = tmp_path / "det.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    assert cli_main(["solve", "--config", str(cfg),
                     "--output", str(tmp_path / "r1")]) == 0
    assert cli_main(["solve", "--config", str(cfg),
                     "--output", str(tmp_path / "r2")]) == 0
    identical = True
    compared = 0
    for f1 in sorted((tmp_path / "r1").rglob("*")):
        if f1.is_file() and f1.name != "manifest.yaml":
            f2 = tmp_path / "r2" / f1.relative_to(tmp_path / "r1")
            identical &= f1.read_bytes() == f2.read_bytes()
            compared += 1
    ok = identical and compared >= 2
    report("identical runs produce bit-identical field/CSV payloads", ok,
           f"{compared} files compared")
