"""Entropy-energy functionals, exact-identity verifiers, and budget residuals.

The monitored quantity F couples the shifted entropy of the cell density,
the Dirichlet energy of sqrt(c), and the kinetic energy; its dissipation G
collects the Fisher-type term, the log-Hessian term, the chemotaxis cross
term, viscous dissipation, and the quartic tamed dissipation.  Verifiers
check, by two independent evaluation routes each, the exact integral
identity behind the log-Hessian term, the constant-25 gradient-quartic
inequality, and the integration-by-parts decomposition of the tamed term
paired with the Laplacian.

Discrete fields may graze zero, so ln, sqrt, and reciprocals are floored at
a configurable positive level and every record reports how many grid points
were floored.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .errors import PositivityError
from .model import taming_g, taming_g1, taming_g_prime
from .spectral import (
    ScalarField,
    bessel_norm_sq,
    deriv_hat,
    integrate,
    laplacian_hat,
    mollify_hat,
    resample_double,
)


@dataclass(frozen=True)
class FloorPolicy:
    """Positive floor applied inside ln, sqrt, and reciprocal evaluations."""

    delta: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.delta <= 1e-6):
            raise ValueError(f"floor must lie in (0, 1e-6], got {self.delta}")


DEFAULT_FLOOR = FloorPolicy()


@dataclass
class DiagnosticsRecord:
    """One row of the per-step diagnostics stream."""

    t: float
    F_entropy: float = 0.0
    F_gradsqrtc: float = 0.0
    F_u2: float = 0.0
    F_total: float = 0.0
    G_gradsqrtn: float = 0.0
    G_loghess: float = 0.0
    G_cross: float = 0.0
    G_gradu: float = 0.0
    G_u4: float = 0.0
    G_total: float = 0.0
    n_L1: float = 0.0
    n_H1: float = 0.0
    c_L1: float = 0.0
    c_L2: float = 0.0
    c_Linf: float = 0.0
    c_H2: float = 0.0
    u_H1: float = 0.0
    min_n: float = 0.0
    min_c: float = 0.0
    res_c_l2: float = 0.0
    res_n_entropy: float = 0.0
    res_u_energy: float = 0.0
    tamed_pairing_residual: float = 0.0
    floored_points: int = 0


CSV_COLUMNS = [f.name for f in fields(DiagnosticsRecord)]


def _grad_sq_integral(grid, fh):
    """Integral of |grad f|^2 from spectral coefficients (no transforms)."""
    return float(
        np.sum(grid.k_sq * grid.mode_weight * (fh.real**2 + fh.imag**2))
    ) * grid.spectral_l2_weight


def _l2_sq_integral(grid, fh):
    return float(np.sum(grid.mode_weight * (fh.real**2 + fh.imag**2))) * grid.spectral_l2_weight


def _floored_sqrt(samples, delta):
    bad = samples < delta
    return np.sqrt(np.where(bad, delta, samples)), int(np.count_nonzero(bad))


def entropy_components(state, floor=DEFAULT_FLOOR):
    """The three monitored components: shifted entropy of n, Dirichlet energy
    of sqrt(c), kinetic energy of u.  Returns (components, floored_points)."""
    grid = state.grid
    n = state.n.samples
    c = state.c.samples
    min_n = float(n.min())
    if min_n < -1.0 + floor.delta:
        raise PositivityError("density below admissible range", "n", min_n)
    min_c = float(c.min())
    if min_c < -floor.delta:
        raise PositivityError("concentration below admissible range", "c", min_c)

    integrand, floored = kernels.shifted_entropy(n, floor.delta)
    entropy = integrate(grid, integrand)
    sqrt_c, fl2 = _floored_sqrt(c, floor.delta)
    grad_sqrt_c = _grad_sq_integral(grid, grid.rfftn(sqrt_c))
    u2 = sum(_l2_sq_integral(grid, comp.spectral) for comp in state.u.components)
    return (entropy, grad_sqrt_c, u2), floored + fl2


def entropy_total(state, floor=DEFAULT_FLOOR):
    comps, _ = entropy_components(state, floor)
    return float(sum(comps))


def log_hessian_entries(c_field, floor=DEFAULT_FLOOR):
    """Physical-space entries of the Hessian of ln c (six unique ones)."""
    grid = c_field.grid
    c = c_field.samples
    ln_c = np.log(np.where(c < floor.delta, floor.delta, c))
    lh = grid.rfftn(ln_c)
    entries = {}
    for i in range(3):
        for j in range(i, 3):
            ki = (grid.k1, grid.k2, grid.k3)[i]
            kj = (grid.k1, grid.k2, grid.k3)[j]
            entries[(i, j)] = grid.irfftn(-ki * kj * lh)
    return entries


def dissipation_components(state, eps, floor=DEFAULT_FLOOR):
    """The five dissipation components.  Returns (components, floored_points)."""
    grid = state.grid
    n = state.n.samples
    c = state.c.samples
    floored = 0

    shifted = n + 1.0
    sq, fl = _floored_sqrt(shifted, floor.delta)
    floored += fl
    g1 = _grad_sq_integral(grid, grid.rfftn(sq))

    hess = log_hessian_entries(state.c, floor)
    g2 = integrate(grid, kernels.weighted_hessian_sq(
        c, hess[(0, 0)], hess[(1, 1)], hess[(2, 2)],
        hess[(0, 1)], hess[(0, 2)], hess[(1, 2)], floor.delta,
    ))
    floored += int(np.count_nonzero(c < floor.delta))

    sqrt_c, fl = _floored_sqrt(c, floor.delta)
    floored += fl
    sqrt_c_hat = grid.rfftn(sqrt_c)
    grad_sq = sum(
        grid.irfftn(deriv_hat(grid, sqrt_c_hat, ax)) ** 2 for ax in range(3)
    )
    n_moll = grid.irfftn(mollify_hat(grid, state.n.spectral, eps))
    g3 = integrate(grid, np.abs(n_moll * grad_sq))

    g4 = sum(_grad_sq_integral(grid, comp.spectral) for comp in state.u.components)

    u_mag2 = sum(comp.samples**2 for comp in state.u.components)
    g5 = integrate(grid, u_mag2 * u_mag2)
    return (g1, g2, g3, g4, g5), floored


def pointwise_log_hessian_sq(c_field, floor=DEFAULT_FLOOR):
    """c |Hess ln c|^2 evaluated pointwise from c's spectral derivatives:

        d_ij ln c = d_ij c / c - (d_i c)(d_j c) / c^2.

    For band-limited c the derivatives are exact, so unlike differentiating
    the sampled (non-band-limited) field ln c this route carries no
    truncation error of its own, only quadrature-level aliasing.
    """
    grid = c_field.grid
    c = c_field.samples
    cf = np.maximum(c, floor.delta)
    ch = c_field.spectral
    grad = [grid.irfftn(deriv_hat(grid, ch, ax)) for ax in range(3)]
    ks = (grid.k1, grid.k2, grid.k3)
    total = np.zeros(grid.shape)
    for i in range(3):
        for j in range(i, 3):
            hij = grid.irfftn(-ks[i] * ks[j] * ch)
            entry = hij / cf - grad[i] * grad[j] / (cf * cf)
            total += (1.0 if i == j else 2.0) * entry * entry
    return cf * total


def verify_log_hessian_identity(c_field, floor=DEFAULT_FLOOR):
    """Two routes to the same integral:

    lhs = 1/2 int c^{-2} |grad c|^2 lap c  -  int c^{-1} |lap c|^2
    rhs = -int c |Hess ln c|^2

    The left side combines |grad c|^2 with the Laplacian; the right side
    contracts the full Hessian, pointwise from c's spectral derivatives.
    Both quadratures run on a doubled grid: the trigonometric interpolation
    of the field is exact there, and the composition spectra of the 1/c
    factors fall below the certified tolerance.  Returns
    (lhs, rhs, relative_residual).
    """
    min_c = float(c_field.samples.min())
    if min_c < 10.0 * floor.delta:
        raise PositivityError("field not positive enough for the identity", "c", min_c)
    c_field = resample_double(c_field)
    grid = c_field.grid
    c = c_field.samples

    ch = c_field.spectral
    grad = [grid.irfftn(deriv_hat(grid, ch, ax)) for ax in range(3)]
    lap = grid.irfftn(laplacian_hat(grid, ch))
    grad_sq = grad[0] ** 2 + grad[1] ** 2 + grad[2] ** 2
    lhs = 0.5 * integrate(grid, grad_sq * lap / c**2) - integrate(grid, lap**2 / c)

    rhs = -integrate(grid, pointwise_log_hessian_sq(c_field, floor))
    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)
    return lhs, rhs, residual


def verify_gradient_quartic(c_field, floor=DEFAULT_FLOOR):
    """Constant-25 inequality: int c^{-3}|grad c|^4 <= 25 int c |Hess ln c|^2.

    Returns (lhs, rhs25, margin) with margin = rhs25 - lhs.
    """
    min_c = float(c_field.samples.min())
    if min_c < 10.0 * floor.delta:
        raise PositivityError("field not positive enough for the inequality", "c", min_c)
    c_field = resample_double(c_field)
    grid = c_field.grid
    c = c_field.samples
    ch = c_field.spectral
    grad = [grid.irfftn(deriv_hat(grid, ch, ax)) for ax in range(3)]
    lhs = integrate(grid, kernels.quartic_gradient(c, grad[0], grad[1], grad[2], floor.delta))
    rhs25 = 25.0 * integrate(grid, pointwise_log_hessian_sq(c_field, floor))
    return lhs, rhs25, rhs25 - lhs


def tamed_pairing_check(u, taming):
    """Integration-by-parts decomposition of (g(|u|^2) u, lap u).

    lhs pairs the tamed term with the spectral Laplacian directly; rhs
    evaluates the decomposed form

        -int |u|^2 |grad u|^2 - 2 sum_i int g'(|u|^2) <u, d_i u>^2
        + int g1(|u|^2) |grad u|^2

    Returns a dict with both values, their relative residual, and the margin
    of the dissipativity bound lhs + int |u|^2 |grad u|^2 <= (N+1) ||grad u||^2.
    """
    grid = u.grid
    samples = [comp.samples for comp in u.components]
    mag2 = samples[0] ** 2 + samples[1] ** 2 + samples[2] ** 2
    g_vals = taming_g(mag2, taming)
    g1_vals = taming_g1(mag2, taming)
    gp_vals = taming_g_prime(mag2, taming)

    lap = [grid.irfftn(laplacian_hat(grid, comp.spectral)) for comp in u.components]
    lhs = integrate(grid, g_vals * (
        samples[0] * lap[0] + samples[1] * lap[1] + samples[2] * lap[2]
    ))

    grads = [
        [grid.irfftn(deriv_hat(grid, comp.spectral, ax)) for ax in range(3)]
        for comp in u.components
    ]
    grad_u_sq = sum(grads[i][ax] ** 2 for i in range(3) for ax in range(3))
    rhs = -integrate(grid, mag2 * grad_u_sq)
    for ax in range(3):
        inner = sum(samples[i] * grads[i][ax] for i in range(3))
        rhs -= 2.0 * integrate(grid, gp_vals * inner**2)
    rhs += integrate(grid, g1_vals * grad_u_sq)

    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)
    grad_l2 = integrate(grid, grad_u_sq)
    bound_margin = (taming.tame_threshold + 1.0) * grad_l2 - (
        lhs + integrate(grid, mag2 * grad_u_sq)
    )
    return {"lhs": lhs, "rhs": rhs, "residual": residual,
            "bound_margin": bound_margin, "grad_l2": grad_l2}


def tamed_dissipativity_margin(u, taming):
    """Quadrature margin of int g(|u|^2)|u|^2 >= ||u||_{L4}^4 - (N+1)||u||_{L2}^2."""
    grid = u.grid
    mag2 = sum(comp.samples**2 for comp in u.components)
    lhs = integrate(grid, taming_g(mag2, taming) * mag2)
    l4 = integrate(grid, mag2 * mag2)
    l2 = integrate(grid, mag2)
    return lhs - (l4 - (taming.tame_threshold + 1.0) * l2)


def monitor_extrema_and_mass(state):
    """Grid extrema and quadrature masses of the scalar fields."""
    grid = state.grid
    n = state.n.samples
    c = state.c.samples
    return {
        "min_n": float(n.min()),
        "min_c": float(c.min()),
        "c_Linf": float(np.abs(c).max()),
        "n_L1": integrate(grid, np.abs(n)),
        "c_L1": integrate(grid, np.abs(c)),
    }


def monitor_sobolev(state):
    """Norms whose boundedness the higher-order estimates assert; squared
    entries are the integrands of the corresponding time integrals."""
    return {
        "n_H1": float(np.sqrt(bessel_norm_sq(state.n, 1))),
        "n_H2_sq": bessel_norm_sq(state.n, 2),
        "c_H2": float(np.sqrt(bessel_norm_sq(state.c, 2))),
        "c_H3_sq": bessel_norm_sq(state.c, 3),
        "u_H1": float(np.sqrt(bessel_norm_sq(state.u, 1))),
        "u_H2_sq": bessel_norm_sq(state.u, 2),
    }


# ---------------------------------------------------------------------------
# discrete budget residuals
# ---------------------------------------------------------------------------

def budget_step_residuals(prev_state, next_state, dt, eps, pot, logi, taming,
                          floor=DEFAULT_FLOOR):
    """Rate-form residuals of the three tracked balances over one step.

    Dissipation and source terms are evaluated at the left endpoint, so on
    deterministic runs each residual is O(dt) and halves under dt-halving.
    Stochastic runs close only in ensemble mean; per-path values then carry
    the noise increment and are reported as-is.
    """
    grid = prev_state.grid
    n = prev_state.n.samples
    c = prev_state.c.samples
    nh = prev_state.n.spectral
    ch = prev_state.c.spectral

    # concentration L2 balance
    c_l2_prev = _l2_sq_integral(grid, ch)
    c_l2_next = _l2_sq_integral(grid, next_state.c.spectral)
    n_moll = grid.irfftn(mollify_hat(grid, nh, eps))
    res_c = (c_l2_next - c_l2_prev) / (2.0 * dt) + _grad_sq_integral(grid, ch) \
        + integrate(grid, c * c * n_moll)

    # shifted-entropy balance
    ent_prev, fl_prev = kernels.shifted_entropy(n, floor.delta)
    ent_next, _ = kernels.shifted_entropy(next_state.n.samples, floor.delta)
    d_entropy = (integrate(grid, ent_next) - integrate(grid, ent_prev)) / dt
    sq, _ = _floored_sqrt(n + 1.0, floor.delta)
    fisher = 4.0 * _grad_sq_integral(grid, grid.rfftn(sq))
    ln_shift = np.log(np.where(n + 1.0 < floor.delta, floor.delta, n + 1.0))
    one_plus_ln = 1.0 + ln_shift
    sink_a = logi.a * integrate(grid, np.abs(n * one_plus_ln))
    sink_cubic = integrate(grid, np.abs(n**3 * one_plus_ln))
    cm_h = mollify_hat(grid, ch, eps)
    grad_n = [grid.irfftn(deriv_hat(grid, nh, ax)) for ax in range(3)]
    grad_cm = [grid.irfftn(deriv_hat(grid, cm_h, ax)) for ax in range(3)]
    cross = integrate(grid, sum(a * b for a, b in zip(grad_n, grad_cm)))
    lap_cm = grid.irfftn(laplacian_hat(grid, cm_h))
    cross_log = integrate(grid, lap_cm * ln_shift)
    quad_source = (1.0 + logi.a) * integrate(grid, n * n * one_plus_ln)
    res_n = d_entropy + fisher + sink_a + sink_cubic - cross - cross_log - quad_source

    # velocity energy balance
    u_prev = prev_state.u
    u_l2_prev = sum(_l2_sq_integral(grid, comp.spectral) for comp in u_prev.components)
    u_l2_next = sum(_l2_sq_integral(grid, comp.spectral) for comp in next_state.u.components)
    grad_u = sum(_grad_sq_integral(grid, comp.spectral) for comp in u_prev.components)
    mag2 = sum(comp.samples**2 for comp in u_prev.components)
    tame_work = integrate(grid, taming_g(mag2, taming) * mag2)
    u_moll = [grid.irfftn(mollify_hat(grid, comp.spectral, eps)) for comp in u_prev.components]
    buoyancy_work = integrate(grid, n * sum(
        g.samples * um for g, um in zip(pot.grad, u_moll)
    ))
    res_u = (u_l2_next - u_l2_prev) / (2.0 * dt) + grad_u + tame_work - buoyancy_work
    return {
        "res_c_l2": res_c,
        "res_n_entropy": res_n,
        "res_u_energy": res_u,
        "_floored": fl_prev,
    }
