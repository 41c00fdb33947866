"""Acceptance suite: one test per criterion at the reference scale.

Reference scale: 32^3 grid, box 2 pi, T = 0.5, dt = 1e-3, a = 0.25,
taming threshold 1, sigma0 = 0.1, 8 noise modes.  Each test prints one
pass/fail line; run with ``pytest tests/test_acceptance.py -v``.
"""

import json

import numpy as np
import pytest

from stcns.config import parse_config
from stcns.diagnostics import (
    verify_gradient_quartic,
    verify_log_hessian_identity,
)
from stcns.harness import (
    checkpoint_save,
    ensemble_run,
    refinement_study,
    resume_run,
    twin_run,
)
from stcns.integrator import SchemeConfig, run, step
from stcns.model import (
    SystemState,
    TamingSpec,
    taming_g,
    taming_g1,
    taming_g_prime,
)
from stcns.noise import NoiseSpec, apply_noise, hilbert_schmidt_sq
from stcns.spectral import (
    ScalarField,
    TorusGrid,
    VelocityField,
    bessel_norm,
    bessel_norm_sq,
    l2_norm_quadrature,
    leray_project,
)
from stcns.verify import random_band_limited_velocity, random_positive_field, taming_junction_jumps

REFERENCE = {
    "grid": 32,
    "T": 0.5,
    "dt": 1e-3,
    "a": 0.25,
    "tame_threshold": 1,
    "seed": 2024,
    "noise": {"kind": "multiplicative-diagonal", "sigma0": 0.1, "decay": 1.0, "modes": 8},
}


def _report(criterion, passed, detail):
    line = "PASS" if passed else "FAIL"
    print(f"[{line}] acceptance {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def reference_setup():
    cfg = parse_config(json.dumps(REFERENCE))
    grid = cfg.make_grid()
    problem = cfg.make_problem(grid)
    initial = cfg.make_initial_state(grid)
    return cfg, grid, problem, initial


def test_criterion_01_taming_construction():
    spec = TamingSpec()
    jumps = taming_junction_jumps(spec)
    c3, c4, c5, c6 = spec.coefficients
    constraints = (
        abs(c3 + c4 + c5 + c6 - 1.0),                       # q(1) = 1
        abs(3 * c3 + 4 * c4 + 5 * c5 + 6 * c6),             # q'(1) = 0
        abs(6 * c3 + 12 * c4 + 20 * c5 + 30 * c6),          # q''(1) = 0
        abs(c3 / 4 + c4 / 5 + c5 / 6 + c6 / 7 - 1.0),       # integral = 1
        0.0,                                                # q(0) = q'(0) = q''(0) = 0 by form
    )
    r = np.linspace(0.0, 10.0, 100_000)
    gp = taming_g_prime(r, spec)
    gv = taming_g(r, spec)
    g1v = taming_g1(r, spec)
    ok = (
        max(jumps) <= 1e-12
        and max(constraints) <= 1e-12
        and gp.min() >= -1e-12 and gp.max() <= 2.0 + 1e-12
        and bool(np.all(np.abs(gv) <= r + 1e-12))
        and bool(np.all(np.abs(g1v) <= 2.0 * r + 1e-12))
    )
    _report(
        "criterion 1 (taming construction)", ok,
        f"junction jumps <= {max(jumps):.1e}, constraint residuals <= "
        f"{max(constraints):.1e}, g' in [{gp.min():.2e}, {gp.max():.4f}]",
    )


@pytest.fixture(scope="module")
def hundred_positive_fields():
    grid = TorusGrid(32)
    return grid, [random_positive_field(grid, 42 + i) for i in range(100)]


def test_criterion_02_log_hessian_identity(hundred_positive_fields):
    grid, fields = hundred_positive_fields
    worst = 0.0
    for c in fields:
        _, _, residual = verify_log_hessian_identity(c)
        worst = max(worst, residual)
    const = ScalarField.from_samples(grid, np.full(grid.shape, 1.7))
    lhs0, rhs0, res0 = verify_log_hessian_identity(const)
    ok = worst <= 1e-6 and lhs0 == 0.0 and rhs0 == 0.0 and res0 == 0.0
    _report(
        "criterion 2 (log-Hessian identity)", ok,
        f"worst relative residual {worst:.2e} over 100 fields; constant exactly zero",
    )


def test_criterion_03_gradient_quartic_inequality(hundred_positive_fields):
    _, fields = hundred_positive_fields
    worst = np.inf
    for c in fields:
        _, rhs25, margin = verify_gradient_quartic(c)
        worst = min(worst, margin + 1e-8 * rhs25)
    ok = worst >= 0.0
    _report(
        "criterion 3 (gradient-quartic inequality)", ok,
        f"worst margin plus tolerance {worst:.3e} over 100 fields (constant 25)",
    )


def test_criterion_04_c_maximum_principle(reference_setup):
    cfg, grid, _, initial = reference_setup
    det_problem = cfg.make_problem(grid)
    det_problem = type(det_problem)(det_problem.pot, det_problem.logistic,
                                    det_problem.taming, NoiseSpec(kind="off"))
    scheme = cfg.make_scheme()
    traj = run(initial, scheme, det_problem, cfg.seed, 0, [0.1, 0.25, 0.5],
               diagnostics_mode="entropy", diagnostics_stride=1)
    sup_c = [r.c_Linf for r in traj.records]
    l2_c = [r.c_L2 for r in traj.records]
    sup_ok = all(v <= sup_c[0] * (1.0 + 1e-6) for v in sup_c)
    mono_ok = all(b <= a * (1.0 + 1e-6) for a, b in zip(l2_c, l2_c[1:]))
    ok = traj.status == "completed" and sup_ok and mono_ok
    _report(
        "criterion 4 (c maximum principle and L2 decay)", ok,
        f"status {traj.status}; sup growth {max(sup_c) / sup_c[0] - 1.0:.2e}, "
        f"L2 monotone {mono_ok} over {len(l2_c)} steps",
    )


def test_criterion_05_budget_closure_order(reference_setup):
    cfg, grid, _, initial = reference_setup
    from stcns.integrator import Problem
    det_problem = Problem(cfg.make_problem(grid).pot, cfg.make_problem(grid).logistic,
                          cfg.make_problem(grid).taming, NoiseSpec(kind="off"))
    dts = [1e-3, 5e-4, 2.5e-4]
    worst = {key: {} for key in ("res_c_l2", "res_n_entropy", "res_u_energy")}
    for dt in dts:
        scheme = SchemeConfig(dt=dt, T=0.5, variant="exact")
        traj = run(initial, scheme, det_problem, cfg.seed, 0, [0.5],
                   diagnostics_mode="budget", diagnostics_stride=1)
        assert traj.status == "completed"
        for key in worst:
            worst[key][dt] = max(abs(getattr(r, key)) for r in traj.records[1:])
    orders = {}
    for key, table in worst.items():
        errs = [table[dt] for dt in dts]
        slope, _ = np.polyfit(np.log(dts), np.log(errs), 1)
        orders[key] = slope
    ok = all(slope >= 0.9 for slope in orders.values())
    _report(
        "criterion 5 (budget closure order)", ok,
        "observed orders " + ", ".join(f"{k}={v:.2f}" for k, v in orders.items()),
    )


def test_criterion_06_noise_certification():
    grid = TorusGrid(32)
    u = random_band_limited_velocity(grid, 7, band=8, amplitude=1.0)
    u2 = random_band_limited_velocity(grid, 8, band=8, amplitude=1.0)
    worst = 0.0
    for kind in ("multiplicative-diagonal", "multiplicative-shell", "additive"):
        spec = NoiseSpec(kind=kind, mode_count=8, sigma0=0.1, decay=1.0)
        for s in (0, 1):
            by_sum = sum(bessel_norm_sq(apply_noise(u, j, spec), s)
                         for j in range(1, 9))
            closed = hilbert_schmidt_sq(u, s, spec)
            worst = max(worst, abs(by_sum - closed) / max(abs(closed), 1e-300))
            diff_sq = sum(
                bessel_norm_sq(VelocityField(*(
                    ScalarField.from_spectral(
                        grid,
                        apply_noise(u, j, spec).components[i].spectral
                        - apply_noise(u2, j, spec).components[i].spectral)
                    for i in range(3))), s)
                for j in range(1, 9)
            )
            if kind == "additive":
                worst = max(worst, diff_sq)  # G constant in u: difference vanishes
            else:
                diff = VelocityField(*(
                    ScalarField.from_spectral(grid, a.spectral - b.spectral)
                    for a, b in zip(u.components, u2.components)))
                closed_d = hilbert_schmidt_sq(diff, s, spec)
                worst = max(worst, abs(diff_sq - closed_d) / max(abs(closed_d), 1e-300))
    ok = worst <= 1e-12
    _report(
        "criterion 6 (noise assumption certification)", ok,
        f"worst Hilbert-Schmidt/Lipschitz identity residual {worst:.2e} "
        "over all kinds at s in {0, 1}",
    )


def test_criterion_07_twin_paths(reference_setup):
    cfg, grid, problem, initial = reference_setup
    scheme = cfg.make_scheme()
    rep0 = twin_run(initial, scheme, problem, cfg.seed, 0, 0.0)
    zero_ok = rep0.digests_match and max(rep0.divergence) == 0.0

    delta = 1e-6
    rep1 = twin_run(initial, scheme, problem, cfg.seed, 0, delta)
    lam = rep1.growth_rate
    envelope = [10.0 * delta * np.exp(lam * t) for t in rep1.times]
    bound_ok = all(d <= e for d, e in zip(rep1.divergence, envelope))

    rep2 = twin_run(initial, scheme, problem, cfg.seed, 0, delta / 2.0)
    ratios = [a / b for a, b in zip(rep1.divergence[1:], rep2.divergence[1:]) if b > 0]
    linear_ok = all(2.0 * 0.8 <= r <= 2.0 * 1.2 for r in ratios)

    ok = zero_ok and rep1.digests_match and bound_ok and linear_ok
    _report(
        "criterion 7 (determinism and twin-path stability)", ok,
        f"delta=0 bit-identical {zero_ok}; envelope bound {bound_ok} "
        f"(Lambda={lam:.2f}); halving ratio range "
        f"[{min(ratios):.2f}, {max(ratios):.2f}]",
    )


def test_criterion_08_k_refinement(reference_setup):
    cfg, grid, problem, _ = reference_setup
    broadband_cfg = parse_config(json.dumps({
        **REFERENCE, "ic": {"preset": "broadband", "amplitude": 0.3, "seed": 5},
    }))
    initial = broadband_cfg.make_initial_state(grid)
    scheme = SchemeConfig(dt=1e-3, T=0.5, variant="truncated", k=4.0,
                          cutoff_R=50.0, eps=0.05)
    report = refinement_study(
        initial, scheme, problem, cfg.seed, 0, "k", [4.0, 8.0, 16.0],
        output_times=[0.125, 0.25, 0.375, 0.5], sobolev_index=1.0,
    )
    monotone = report.errors[0] > report.errors[1] > 0.0
    ok = (not report.failures) and monotone and report.observed_order >= 1.0
    _report(
        "criterion 8 (k-refinement Cauchy behavior)", ok,
        f"H1 differences {report.errors[0]:.3e} -> {report.errors[1]:.3e}, "
        f"observed order {report.observed_order:.2f} in 1/k",
    )


def test_criterion_09_eps_uniform_entropy_energy(reference_setup):
    cfg, grid, _, initial = reference_setup
    sup_f_by_eps = {}
    int_g_by_eps = {}
    statuses = {}
    for eps in (0.2, 0.1, 0.05):
        scheme = SchemeConfig(dt=1e-3, T=0.5, variant="mollified", eps=eps)
        report = ensemble_run(initial, scheme, cfg.make_problem(grid), cfg.seed, 32,
                              p_list=(1.0,), diagnostics_stride=10)
        sup_f_by_eps[eps] = report.sup_F_moments[1.0][0]
        int_g_by_eps[eps] = report.int_G_moments[1.0][0]
        statuses[eps] = report.statuses
        assert all(np.isfinite(report.sup_F)) and all(np.isfinite(report.int_G))

    def spread(table):
        vals = list(table.values())
        return (max(vals) - min(vals)) / min(vals)

    all_completed = all(s == "completed" for eps in statuses for s in statuses[eps])
    sf, sg = spread(sup_f_by_eps), spread(int_g_by_eps)
    ok = all_completed and sf <= 0.10 and sg <= 0.10
    _report(
        "criterion 9 (eps-uniform entropy-energy bound)", ok,
        f"E[sup F] spread {sf:.3%}, E[int G] spread {sg:.3%} across "
        f"eps in {{0.2, 0.1, 0.05}}; 96/96 paths completed {all_completed}",
    )


def test_criterion_10_infrastructure(reference_setup, tmp_path):
    cfg, grid, problem, initial = reference_setup

    # exact linear decay through the full stepper, ten consecutive steps
    Y = grid.meshgrid()[1]
    zero = ScalarField.from_samples(grid, np.zeros(grid.shape))
    state = SystemState(zero, zero, VelocityField(
        ScalarField.from_samples(grid, 0.4 * np.sin(Y)), zero, zero))
    from stcns.integrator import Problem
    from stcns.model import LogisticSpec, PotentialSpec
    heat_problem = Problem(PotentialSpec.zero(grid), LogisticSpec(0.25),
                           TamingSpec(), NoiseSpec(kind="off"))
    scheme = SchemeConfig(dt=1e-3, T=0.01)
    heat_err = 0.0
    current = state
    for _ in range(10):
        nxt = step(current, scheme, heat_problem)
        ratio = nxt.u.components[0].samples.max() / current.u.components[0].samples.max()
        heat_err = max(heat_err, abs(ratio - np.exp(-scheme.dt)))
        current = nxt

    # Leray idempotence (bitwise) and gradient annihilation
    u = random_band_limited_velocity(grid, 3, band=8)
    twice = leray_project(u)
    idem = all(a.spectral.tobytes() == b.spectral.tobytes()
               for a, b in zip(u.components, twice.components))
    X = grid.meshgrid()[0]
    out = leray_project(ScalarField.from_samples(grid, np.cos(X)), zero, zero)
    ann = max(np.abs(c.spectral).max() for c in out.components)
    ann_ok = ann <= 1e-12 * np.abs(ScalarField.from_samples(grid, np.cos(X)).spectral).max()

    # Parseval
    rng = np.random.default_rng(12)
    f = ScalarField.from_samples(grid, rng.standard_normal(grid.shape))
    parseval = abs(bessel_norm(f, 0) - l2_norm_quadrature(f)) / l2_norm_quadrature(f)

    # checkpoint resume bit-identity at the reference scale
    half_scheme = SchemeConfig(dt=1e-3, T=0.01)
    full_scheme = SchemeConfig(dt=1e-3, T=0.02)
    full = run(initial, full_scheme, problem, cfg.seed, 0, [0.02], diagnostics_mode="none")
    half = run(initial, half_scheme, problem, cfg.seed, 0, [0.01], diagnostics_mode="none")
    ckpt = tmp_path / "resume.stcn"
    checkpoint_save(half, half_scheme, ckpt)
    resumed = resume_run(ckpt, full_scheme, problem, [0.02], diagnostics_mode="none")
    resume_ok = all(
        a.tobytes() == b.tobytes()
        for a, b in zip(resumed.states[-1].spectral_arrays(),
                        full.states[-1].spectral_arrays())
    )

    ok = heat_err <= 1e-12 and idem and ann_ok and parseval <= 1e-10 and resume_ok
    _report(
        "criterion 10 (infrastructure exactness)", ok,
        f"heat decay err {heat_err:.1e}, idempotent {idem}, annihilation ok "
        f"{ann_ok}, Parseval {parseval:.1e}, resume bit-identical {resume_ok}",
    )
