"""Experiment drivers: ensembles, refinement studies, twin paths, checkpoints.

Ensemble paths are independent tasks keyed by path_id; reduction iterates in
path order, so reports do not depend on scheduling.  Refinement studies keep
the noise path fixed across levels (coarse Wiener increments are sums of the
fine ones on the dt axis).  Twin runs share every increment between the base
and perturbed trajectories and certify that by comparing increment digests.
"""

import dataclasses
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .errors import CheckpointError, StcnsError
from .integrator import SchemeConfig, Trajectory, run
from .model import SystemState
from .noise import sample_increment
from .spectral import ScalarField, TorusGrid, VelocityField, bessel_norm_sq, leray_project

_CKPT_MAGIC = b"STCN"
_CKPT_VERSION = 1
_VARIANT_CODES = {"exact": 0, "mollified": 1, "truncated": 2}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_CODES.items()}


def worker_count(requested=None, task_count=1):
    """Worker parallelism, capped by the STCNS_THREADS environment variable."""
    cap = os.environ.get("STCNS_THREADS")
    if requested is None:
        requested = os.cpu_count() or 1
    if cap is not None:
        requested = min(requested, max(1, int(cap)))
    return max(1, min(requested, task_count))


# ---------------------------------------------------------------------------
# Monte-Carlo ensembles
# ---------------------------------------------------------------------------

@dataclass
class EnsembleReport:
    path_count: int
    statuses: list
    sup_F: list
    int_G: list
    sup_F_moments: dict
    int_G_moments: dict
    failure_count: int
    seed: int = 0

    def completed(self):
        return [i for i, s in enumerate(self.statuses) if s == "completed"]


def _path_summary(traj):
    times = [r.t for r in traj.records]
    f_vals = [r.F_total for r in traj.records]
    g_vals = [r.G_total for r in traj.records]
    sup_f = max(f_vals) if f_vals else float("nan")
    int_g = float(np.trapezoid(g_vals, times)) if len(times) > 1 else 0.0
    return sup_f, int_g


def _run_one_path(args):
    (initial, scheme, problem, seed, path_id, output_times, stride) = args
    traj = run(initial, scheme, problem, seed, path_id, output_times,
               diagnostics_mode="entropy", diagnostics_stride=stride)
    sup_f, int_g = (_path_summary(traj) if traj.status == "completed"
                    else (float("nan"), float("nan")))
    return path_id, traj.status, sup_f, int_g


def _moments(values, p_list):
    out = {}
    arr = np.asarray(values, dtype=np.float64)
    for p in p_list:
        powered = arr**p
        mean = float(powered.mean())
        half = float(1.96 * powered.std(ddof=1) / np.sqrt(len(powered))) if len(powered) > 1 else 0.0
        out[p] = (mean, half)
    return out


def ensemble_run(initial, scheme, problem, seed, path_count, p_list=(1.0,),
                 output_times=None, diagnostics_stride=10, workers=None):
    """Independent paths 0..path_count-1; moments of sup_t F and int G dt.

    Estimates use completed paths only; an all-paths-failed ensemble raises
    with the per-path statuses attached.
    """
    if path_count < 1:
        raise ValueError("path_count must be at least 1")
    if output_times is None:
        output_times = [scheme.T]
    tasks = [
        (initial, scheme, problem, seed, pid, output_times, diagnostics_stride)
        for pid in range(path_count)
    ]
    n_workers = worker_count(workers, path_count)
    results = {}
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for pid, status, sup_f, int_g in pool.map(_run_one_path, tasks):
                results[pid] = (status, sup_f, int_g)
    else:
        for task in tasks:
            pid, status, sup_f, int_g = _run_one_path(task)
            results[pid] = (status, sup_f, int_g)

    statuses = [results[pid][0] for pid in range(path_count)]
    sup_f = [results[pid][1] for pid in range(path_count)]
    int_g = [results[pid][2] for pid in range(path_count)]
    completed_f = [v for v, s in zip(sup_f, statuses) if s == "completed"]
    completed_g = [v for v, s in zip(int_g, statuses) if s == "completed"]
    failures = sum(1 for s in statuses if s != "completed")
    if not completed_f:
        err = StcnsError(f"all {path_count} ensemble paths failed")
        err.statuses = statuses
        raise err
    return EnsembleReport(
        path_count=path_count,
        statuses=statuses,
        sup_F=sup_f,
        int_G=int_g,
        sup_F_moments=_moments(completed_f, p_list),
        int_G_moments=_moments(completed_g, p_list),
        failure_count=failures,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# refinement studies
# ---------------------------------------------------------------------------

@dataclass
class RefinementReport:
    axis: str
    levels: list
    errors: list              # consecutive-level sup-in-time H^s distances
    observed_order: float
    sobolev_index: float
    failures: dict = field(default_factory=dict)


def state_distance(a, b, s=1.0):
    """Combined H^s distance of two states (root sum of squares)."""
    dn = a.n.spectral - b.n.spectral
    dc = a.c.spectral - b.c.spectral
    grid = a.grid
    total = 0.0
    for dh in (dn, dc):
        total += bessel_norm_sq(ScalarField.from_spectral(grid, dh), s)
    for ca, cb in zip(a.u.components, b.u.components):
        total += bessel_norm_sq(ScalarField.from_spectral(grid, ca.spectral - cb.spectral), s)
    return float(np.sqrt(total))


def _fit_order(hs, errors):
    hs = np.asarray(hs, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    keep = errors > 0.0
    if keep.sum() < 2:
        return float("inf")
    slope, _ = np.polyfit(np.log(hs[keep]), np.log(errors[keep]), 1)
    return float(slope)


def refined_increments(seed, path_id, dt_fine, n_fine, mode_count, factor):
    """Coarse increments obtained by summing blocks of fine ones."""
    fine = np.stack([
        sample_increment(seed, path_id, m, dt_fine, mode_count).values
        for m in range(n_fine)
    ])
    if factor == 1:
        return fine
    return fine.reshape(n_fine // factor, factor, mode_count).sum(axis=1)


def refinement_study(initial, scheme, problem, seed, path_id, axis, levels,
                     output_times=None, sobolev_index=1.0,
                     diagnostics_mode="none"):
    """Pathwise Cauchy differences between consecutive refinement levels.

    axis 'k' varies the truncation radius (variant becomes 'truncated'),
    'eps' the mollifier width (variant 'mollified'), 'dt' the time step.
    The noise path is identical across levels; on the dt axis the coarse
    increments are block sums of the finest level's increments.
    """
    if axis not in ("k", "eps", "dt"):
        raise ValueError("axis must be 'k', 'eps', or 'dt'")
    if len(levels) < 3:
        raise ValueError("refinement needs at least 3 levels")
    if output_times is None:
        output_times = [scheme.T]

    runs = {}
    failures = {}
    if axis == "dt":
        dts = sorted(levels, reverse=True)
        dt_fine = dts[-1]
        n_fine = round(scheme.T / dt_fine)
        table = None
        if problem.noise.active:
            table = refined_increments(seed, path_id, dt_fine, n_fine,
                                       problem.noise.mode_count, 1)
        for dt_level in dts:
            factor = round(dt_level / dt_fine)
            if abs(dt_level - factor * dt_fine) > 1e-12:
                raise ValueError("dt levels must be integer multiples of the finest")
            increments = None
            if table is not None:
                increments = table.reshape(n_fine // factor, factor,
                                           problem.noise.mode_count).sum(axis=1)
            level_scheme = dataclasses.replace(scheme, dt=dt_level)
            traj = run(initial, level_scheme, problem, seed, path_id, output_times,
                       increments=increments, diagnostics_mode=diagnostics_mode)
            if traj.status != "completed":
                failures[dt_level] = traj.status
            runs[dt_level] = traj
        ordered = dts
        hs = dts
    else:
        ordered = sorted(levels, reverse=(axis == "eps"))
        for level in ordered:
            if axis == "k":
                level_scheme = dataclasses.replace(scheme, variant="truncated", k=float(level))
            else:
                level_scheme = dataclasses.replace(scheme, variant="mollified", eps=float(level))
            traj = run(initial, level_scheme, problem, seed, path_id, output_times,
                       diagnostics_mode=diagnostics_mode)
            if traj.status != "completed":
                failures[level] = traj.status
            runs[level] = traj
        hs = [1.0 / k for k in ordered] if axis == "k" else ordered

    errors = []
    for coarse, fine in zip(ordered[:-1], ordered[1:]):
        ta, tb = runs[coarse], runs[fine]
        if coarse in failures or fine in failures:
            errors.append(float("nan"))
            continue
        errors.append(max(
            state_distance(sa, sb, sobolev_index)
            for sa, sb in zip(ta.states, tb.states)
        ))
    finite = [e for e in errors if np.isfinite(e)]
    order = _fit_order(hs[:-1], errors) if len(finite) == len(errors) else float("nan")
    return RefinementReport(
        axis=axis, levels=list(ordered), errors=errors,
        observed_order=order, sobolev_index=sobolev_index, failures=failures,
    )


# ---------------------------------------------------------------------------
# twin-path stability runs
# ---------------------------------------------------------------------------

@dataclass
class TwinRunReport:
    delta: float
    times: list
    divergence: list
    growth_rate: float
    digests_match: bool
    perturbation_mode: str


def random_divfree_field(grid, seed, band=None, normalize_h1=True):
    """Seeded band-limited divergence-free field, H^1-normalized by default."""
    if band is None:
        band = max(2, min(grid.shape) // 4)
    gen = Generator(Philox(key=seed, counter=[0, 0, 0, 2**32]))
    comps = []
    for _ in range(3):
        coeffs = np.zeros(grid.spectral_shape, dtype=np.complex128)
        sub = (slice(0, band), slice(0, band), slice(0, band))
        coeffs[sub] = gen.standard_normal((band,) * 3) + 1j * gen.standard_normal((band,) * 3)
        comps.append(ScalarField.from_samples(grid, grid.irfftn(coeffs)))
    u = leray_project(*comps)
    if normalize_h1:
        norm = np.sqrt(bessel_norm_sq(u, 1))
        u = VelocityField(*(
            ScalarField.from_spectral(grid, c.spectral / norm) for c in u.components
        ))
    return u


def twin_divergence(a, b):
    """H^1 + H^2 + H^1 distance of the density, concentration, velocity."""
    grid = a.grid
    dn = np.sqrt(bessel_norm_sq(ScalarField.from_spectral(grid, a.n.spectral - b.n.spectral), 1))
    dc = np.sqrt(bessel_norm_sq(ScalarField.from_spectral(grid, a.c.spectral - b.c.spectral), 2))
    du = np.sqrt(sum(
        bessel_norm_sq(ScalarField.from_spectral(grid, ca.spectral - cb.spectral), 1)
        for ca, cb in zip(a.u.components, b.u.components)
    ))
    return float(dn + dc + du)


def twin_run(initial, scheme, problem, seed, path_id, delta,
             perturbation_mode="u", output_times=None, perturbation_seed=None):
    """Two trajectories driven by the same Wiener increments, the second from
    initial data perturbed by delta times a normalized random field."""
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    if output_times is None:
        n_out = 10
        step_count = scheme.n_steps
        stride = max(1, step_count // n_out)
        output_times = [m * scheme.dt for m in range(0, step_count + 1, stride)]
        if output_times[-1] < scheme.T - 1e-12:
            output_times.append(scheme.T)
    base = run(initial, scheme, problem, seed, path_id, output_times,
               diagnostics_mode="none")

    if delta == 0.0:
        perturbed_initial = initial
    else:
        pseed = perturbation_seed if perturbation_seed is not None else seed + 7919
        grid = initial.grid
        if perturbation_mode == "u":
            pert = random_divfree_field(grid, pseed)
            new_u = VelocityField(*(
                ScalarField.from_spectral(grid, c.spectral + delta * p.spectral)
                for c, p in zip(initial.u.components, pert.components)
            ))
            perturbed_initial = SystemState(initial.n, initial.c, new_u, t=initial.t)
        elif perturbation_mode in ("n", "c"):
            gen = Generator(Philox(key=pseed, counter=[0, 0, 0, 2**33]))
            band = max(2, min(grid.shape) // 4)
            coeffs = np.zeros(grid.spectral_shape, dtype=np.complex128)
            coeffs[:band, :band, :band] = (
                gen.standard_normal((band,) * 3) + 1j * gen.standard_normal((band,) * 3)
            )
            f = ScalarField.from_samples(grid, grid.irfftn(coeffs))
            s_index = 1.0 if perturbation_mode == "n" else 2.0
            norm = np.sqrt(bessel_norm_sq(f, s_index))
            f = ScalarField.from_spectral(grid, f.spectral / norm)
            if perturbation_mode == "n":
                new_n = ScalarField.from_spectral(grid, initial.n.spectral + delta * f.spectral)
                perturbed_initial = SystemState(new_n, initial.c, initial.u, t=initial.t)
            else:
                new_c = ScalarField.from_spectral(grid, initial.c.spectral + delta * f.spectral)
                perturbed_initial = SystemState(initial.n, new_c, initial.u, t=initial.t)
        else:
            raise ValueError("perturbation_mode must be 'u', 'n', or 'c'")

    twin = run(perturbed_initial, scheme, problem, seed, path_id, output_times,
               diagnostics_mode="none")

    divergence = [twin_divergence(a, b) for a, b in zip(base.states, twin.states)]
    times = list(base.times)
    pos = [(t, d) for t, d in zip(times, divergence) if d > 0.0]
    if len(pos) >= 2:
        ts, ds = zip(*pos)
        rate, _ = np.polyfit(ts, np.log(ds), 1)
        rate = float(rate)
    else:
        rate = 0.0
    return TwinRunReport(
        delta=delta,
        times=times,
        divergence=divergence,
        growth_rate=rate,
        digests_match=base.increments_digest == twin.increments_digest,
        perturbation_mode=perturbation_mode,
    )


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

_HEADER_FMT = "<4sI3I3ddQQQIdddId"


def checkpoint_save(traj, scheme, path):
    """Write the trajectory's final state in the binary checkpoint format.

    Layout: magic "STCN", format version, grid dims, box lengths, time,
    step index, path id, seed, variant code and parameters, then the five
    fields' spectral coefficients as little-endian float64 pairs in row-major
    mode order, and a trailing CRC-32 of everything before it.
    """
    if not traj.states:
        raise ValueError("trajectory has no snapshot to checkpoint")
    state = traj.states[-1]
    grid = state.grid
    header = struct.pack(
        _HEADER_FMT,
        _CKPT_MAGIC,
        _CKPT_VERSION,
        *grid.shape,
        *grid.box_length,
        state.t,
        traj.final_step,
        traj.path_id,
        traj.seed,
        _VARIANT_CODES[scheme.variant],
        scheme.eps,
        scheme.k if scheme.k is not None else -1.0,
        scheme.cutoff_R,
        1 if scheme.annulus else 0,
        scheme.dt,
    )
    payload = bytearray(header)
    for fh in state.spectral_arrays():
        interleaved = np.empty(fh.size * 2, dtype="<f8")
        interleaved[0::2] = fh.real.ravel()
        interleaved[1::2] = fh.imag.ravel()
        payload.extend(interleaved.tobytes())
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    payload.extend(struct.pack("<I", crc))
    with open(path, "wb") as fh_out:
        fh_out.write(bytes(payload))


def checkpoint_load(path, expected_grid=None):
    """Read a checkpoint; returns (trajectory, scheme_fields) where the
    trajectory holds the stored state as its only snapshot."""
    with open(path, "rb") as fh_in:
        blob = fh_in.read()
    header_size = struct.calcsize(_HEADER_FMT)
    if len(blob) < header_size + 4:
        raise CheckpointError("corrupt checkpoint: truncated header")
    crc_stored = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError("corrupt checkpoint: CRC mismatch")
    fields = struct.unpack(_HEADER_FMT, blob[:header_size])
    magic, version = fields[0], fields[1]
    if magic != _CKPT_MAGIC:
        raise CheckpointError("corrupt checkpoint: bad magic")
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    dims = fields[2:5]
    box = fields[5:8]
    t, step_idx, path_id, seed, variant_code = fields[8:13]
    eps, k, cutoff_r, annulus, dt = fields[13:18]
    grid = TorusGrid(dims, box)
    if expected_grid is not None and grid != expected_grid:
        raise CheckpointError("checkpoint grid does not match the expected grid")
    n_modes = dims[0] * dims[1] * (dims[2] // 2 + 1)
    expected_len = header_size + 5 * n_modes * 16 + 4
    if len(blob) != expected_len:
        raise CheckpointError("corrupt checkpoint: wrong payload size")
    spectra = []
    offset = header_size
    for _ in range(5):
        raw = np.frombuffer(blob, dtype="<f8", count=2 * n_modes, offset=offset)
        spectra.append((raw[0::2] + 1j * raw[1::2]).reshape(grid.spectral_shape))
        offset += n_modes * 16
    state = SystemState.from_spectral(grid, *spectra, t=t)
    traj = Trajectory(seed=seed, path_id=path_id, final_step=step_idx)
    traj.append_snapshot(state)
    scheme_fields = {
        "variant": _VARIANT_NAMES[variant_code],
        "eps": eps,
        "k": None if k < 0 else k,
        "cutoff_R": cutoff_r,
        "annulus": bool(annulus),
        "dt": dt,
    }
    return traj, scheme_fields


def resume_run(path, scheme, problem, output_times, diagnostics_mode="entropy",
               diagnostics_stride=1):
    """Continue a checkpointed run to the horizon of ``scheme``.

    The stored step index keys the Wiener stream, so the resumed trajectory
    reproduces the unbroken one bit for bit.
    """
    traj, stored = checkpoint_load(path)
    for key in ("variant", "eps", "dt"):
        if getattr(scheme, key) != stored[key]:
            raise CheckpointError(
                f"checkpoint mismatch: stored {key}={stored[key]!r}, "
                f"requested {getattr(scheme, key)!r}"
            )
    state = traj.states[-1]
    return run(state, scheme, problem, traj.seed, traj.path_id, output_times,
               diagnostics_mode=diagnostics_mode, diagnostics_stride=diagnostics_stride,
               start_step=traj.final_step)
