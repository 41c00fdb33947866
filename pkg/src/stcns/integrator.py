"""Exponential Euler-Maruyama time stepping for all three system variants.

Each step applies the exact heat propagator to the linear part and an
explicit increment to everything else: the nonlinear residue enters with
weight dt and the Ito noise increment enters before the propagator, after
which the velocity is re-projected.  On pure-diffusion configurations the
linear decay is exact because the nonlinear residue cancels bit for bit.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    DEFAULT_FLOOR,
    DiagnosticsRecord,
    budget_step_residuals,
    dissipation_components,
    entropy_components,
    monitor_extrema_and_mass,
    monitor_sobolev,
    tamed_pairing_check,
)
from .errors import BlowUpError
from . import kernels
from .model import (
    _NEUTRAL_THETAS,
    _assemble_drift,
    SystemState,
    truncation_thetas,
    CutoffSpec,
)
from .noise import WienerIncrement, noise_increment_hat, sample_increment
from .spectral import laplacian_hat, leray_project_hat

logger = logging.getLogger(__name__)

_VARIANTS = ("exact", "mollified", "truncated")


@dataclass(frozen=True)
class Problem:
    """Physical ingredients shared by every variant of the system."""

    pot: object
    logistic: object
    taming: object
    noise: object


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    T: float
    variant: str = "exact"
    eps: float = 0.0
    k: float = None
    cutoff_R: float = 50.0
    annulus: bool = False
    clip_negative: bool = False
    dealias_rule: str = "two-thirds"

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.dt <= self.T):
            raise ValueError("dt must not exceed the horizon T")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if self.variant == "truncated":
            if self.k is None or not (self.k > 0.0):
                raise ValueError("truncated variant needs a positive truncation radius k")
            if not (self.cutoff_R > 1.0):
                raise ValueError("truncated variant needs cutoff_R > 1")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(self.T - steps * self.dt) > 1e-9 * max(self.T, 1.0):
            raise ValueError("horizon T must be an integer multiple of dt")

    @property
    def n_steps(self):
        return round(self.T / self.dt)

    @property
    def effective_eps(self):
        return self.eps if self.variant in ("mollified", "truncated") else 0.0


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    status: str = "completed"
    failure_time: float = None
    increments_digest: str = ""
    seed: int = 0
    path_id: int = 0
    final_step: int = 0

    def append_snapshot(self, state):
        if self.times and state.t <= self.times[-1]:
            raise ValueError("snapshot times must be strictly increasing")
        self.times.append(state.t)
        self.states.append(state)


def _step_tables(grid, scheme):
    """Propagator, truncation mask, and linear multiplier for the variant."""
    if scheme.variant == "truncated":
        kmask = grid.ball_mask(scheme.k, annulus=scheme.annulus)
        if kmask.all():
            kmask = None
    else:
        kmask = None
    if kmask is None:
        lap_mult = grid.neg_k_sq
    else:
        lap_mult = grid.neg_k_sq * kmask
    propagator = np.ascontiguousarray(np.exp(-grid.k_sq * scheme.dt if kmask is None
                                             else -(grid.k_sq * kmask) * scheme.dt))
    lap_mult = np.ascontiguousarray(np.broadcast_to(lap_mult, grid.spectral_shape))
    return kmask, lap_mult, propagator


def _classify_failure(arrays):
    for arr in arrays:
        if np.isnan(arr).any():
            return "nan"
    return "blow-up"


def step(state, scheme, problem, increment=None):
    """Advance one time step; returns the new state.

    Raises BlowUpError (with a ``kind`` attribute distinguishing NaN from
    overflow) when the update leaves the finite range; the caller records
    the typed status and halts the trajectory.
    """
    kmask, lap_mult, propagator = _step_tables(state.grid, scheme)
    return _step_with_tables(state, scheme, problem, increment, kmask, lap_mult, propagator)


def _step_with_tables(state, scheme, problem, increment, kmask, lap_mult, propagator):
    grid = state.grid
    dt = scheme.dt
    eps = scheme.effective_eps
    if scheme.variant == "truncated":
        thetas = truncation_thetas(state, CutoffSpec(R=scheme.cutoff_R))
        logistic_split = True
    else:
        thetas = _NEUTRAL_THETAS
        logistic_split = False

    dn, dc, du = _assemble_drift(
        state, problem.pot, problem.logistic, problem.taming, eps, kmask, thetas,
        scheme.dealias_rule, logistic_split,
    )

    nh, ch, u1h, u2h, u3h = state.spectral_arrays()
    new_nh = kernels.expo_update(nh, np.ascontiguousarray(dn.spectral), lap_mult, propagator, dt)
    new_ch = kernels.expo_update(ch, np.ascontiguousarray(dc.spectral), lap_mult, propagator, dt)

    du_h = [np.ascontiguousarray(comp.spectral) for comp in du.components]
    u_hats = (u1h, u2h, u3h)
    noise_hat = None
    if increment is not None and problem.noise.active:
        noise_hat = noise_increment_hat(grid, u_hats, increment, problem.noise)
    new_u = []
    for i, uh in enumerate(u_hats):
        if noise_hat is None:
            new_u.append(kernels.expo_update(uh, du_h[i], lap_mult, propagator, dt))
        else:
            new_u.append(kernels.expo_update_noise(
                uh, du_h[i], lap_mult, propagator, dt,
                np.ascontiguousarray(noise_hat[i]), float(thetas["u"]),
            ))
    new_u = list(leray_project_hat(grid, *new_u))

    out = [new_nh, new_ch, *new_u]
    for arr in out:
        if not np.isfinite(np.sum(arr)):
            err = BlowUpError("non-finite state after step")
            err.kind = _classify_failure(out)
            raise err

    t_next = state.t + dt
    if scheme.clip_negative:
        n_samp = np.maximum(grid.irfftn(new_nh), 0.0)
        c_samp = np.maximum(grid.irfftn(new_ch), 0.0)
        new_nh = grid.rfftn(n_samp)
        new_ch = grid.rfftn(c_samp)
    return SystemState.from_spectral(grid, new_nh, new_ch, *new_u, t=t_next)


def _make_record(state, scheme, problem, mode, floor, residuals=None):
    rec = DiagnosticsRecord(t=state.t)
    if mode == "none":
        return rec
    (f1, f2, f3), fl1 = entropy_components(state, floor)
    rec.F_entropy, rec.F_gradsqrtc, rec.F_u2 = f1, f2, f3
    rec.F_total = f1 + f2 + f3
    (g1, g2, g3, g4, g5), fl2 = dissipation_components(state, scheme.effective_eps, floor)
    rec.G_gradsqrtn, rec.G_loghess, rec.G_cross, rec.G_gradu, rec.G_u4 = g1, g2, g3, g4, g5
    rec.G_total = g1 + g2 + g3 + g4 + g5
    ext = monitor_extrema_and_mass(state)
    rec.min_n, rec.min_c = ext["min_n"], ext["min_c"]
    rec.n_L1, rec.c_L1, rec.c_Linf = ext["n_L1"], ext["c_L1"], ext["c_Linf"]
    sob = monitor_sobolev(state)
    rec.n_H1, rec.c_H2, rec.u_H1 = sob["n_H1"], sob["c_H2"], sob["u_H1"]
    rec.c_L2 = float(np.sqrt(max(_c_l2_sq(state), 0.0)))
    rec.floored_points = fl1 + fl2
    if residuals is not None:
        rec.res_c_l2 = residuals["res_c_l2"]
        rec.res_n_entropy = residuals["res_n_entropy"]
        rec.res_u_energy = residuals["res_u_energy"]
    if mode == "full":
        rec.tamed_pairing_residual = tamed_pairing_check(state.u, problem.taming)["residual"]
    return rec


def _c_l2_sq(state):
    grid = state.grid
    ch = state.c.spectral
    return float(np.sum(grid.mode_weight * (ch.real**2 + ch.imag**2))) * grid.spectral_l2_weight


def run(initial, scheme, problem, seed, path_id, output_times,
        increments=None, diagnostics_mode="entropy", diagnostics_stride=1,
        floor=DEFAULT_FLOOR, start_step=0):
    """Integrate from ``initial`` to the horizon, deterministically in
    (seed, path_id).

    output_times must be multiples of dt inside [0, T].  ``increments``
    optionally supplies the Wiener increments as an (n_steps, M) array whose
    row m drives step m; otherwise increments are drawn from the
    counter-based stream so resumed runs match unbroken ones bit for bit.
    """
    grid = initial.grid
    dt = scheme.dt
    n_total = scheme.n_steps
    if abs(initial.t - start_step * dt) > 1e-9 * max(1.0, scheme.T):
        raise ValueError("initial state time does not match start_step * dt")

    out_steps = {}
    for t_out in output_times:
        idx = round(t_out / dt)
        if abs(t_out - idx * dt) > 1e-9 * max(1.0, scheme.T) or not (0 <= idx <= n_total):
            raise ValueError(f"output time {t_out} is not a step multiple inside [0, T]")
        out_steps[idx] = t_out

    kmask, lap_mult, propagator = _step_tables(grid, scheme)
    digest = hashlib.sha256()
    traj = Trajectory(seed=seed, path_id=path_id)
    if diagnostics_mode in ("full", "budget") and diagnostics_stride != 1:
        raise ValueError("budget residuals need consecutive steps: use stride 1")

    state = initial
    if start_step in out_steps:
        traj.append_snapshot(state)
    if diagnostics_mode != "none":
        traj.records.append(_make_record(state, scheme, problem, diagnostics_mode, floor))

    warned_cfl = False
    mode_count = problem.noise.mode_count
    for m in range(start_step, n_total):
        sup_u = float(np.sqrt(sum(c.samples**2 for c in state.u.components)).max())
        cfl = dt * sup_u * max(grid.shape) / min(grid.box_length)
        if cfl > 0.5 and not warned_cfl:
            logger.warning("advective CFL number %.3f exceeds 0.5 at t=%.4f", cfl, state.t)
            warned_cfl = True

        increment = None
        if problem.noise.active:
            if increments is not None:
                values = np.asarray(increments[m - start_step], dtype=np.float64)
                increment = WienerIncrement(values=values, step_index=m, path_id=path_id)
            else:
                increment = sample_increment(seed, path_id, m, dt, mode_count)
            digest.update(increment.values.tobytes())

        try:
            new_state = _step_with_tables(state, scheme, problem, increment, kmask, lap_mult, propagator)
        except BlowUpError as err:
            traj.status = getattr(err, "kind", "blow-up")
            traj.failure_time = state.t
            traj.final_step = m
            traj.increments_digest = digest.hexdigest()
            return traj

        record_now = diagnostics_mode != "none" and ((m + 1 - start_step) % diagnostics_stride == 0
                                                     or (m + 1) == n_total)
        if record_now:
            residuals = None
            if diagnostics_mode in ("full", "budget"):
                residuals = budget_step_residuals(
                    state, new_state, dt, scheme.effective_eps,
                    problem.pot, problem.logistic, problem.taming, floor,
                )
            traj.records.append(
                _make_record(new_state, scheme, problem, diagnostics_mode, floor, residuals)
            )
        state = new_state
        if (m + 1) in out_steps:
            traj.append_snapshot(state)

    traj.final_step = n_total
    traj.increments_digest = digest.hexdigest()
    return traj
