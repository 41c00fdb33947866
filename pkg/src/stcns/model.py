"""Taming function, logistic source, cut-offs, potential, and drift assembly.

Three drift variants share one assembly core:

* ``drift_exact``      the untamed-regularization system (the physical model)
* ``drift_mollified``  chemotaxis/consumption/buoyancy inputs smoothed by the
                       heat-kernel mollifier of width eps
* ``drift_truncated``  every field additionally wrapped in the frequency
                       truncation, every nonlinear term gated by a smooth
                       cut-off of the governing W^{1,inf} norms, and the cubic
                       source split monomial by monomial

The shared core keeps the code paths identical up to diagonal multiplier
arrays, so switching regularizations off reproduces the exact drift bit for
bit (except for the cubic source, whose split form rounds differently).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BlowUpError, GridMismatchError
from .spectral import (
    ScalarField,
    VelocityField,
    deriv_hat,
    laplacian_hat,
    leray_project_hat,
    mollify_hat,
)

DEFAULT_TAMING_COEFFS = (80.0, -225.0, 216.0, -70.0)


@dataclass(frozen=True)
class TamingSpec:
    """Threshold and transition polynomial of the velocity-taming function.

    The transition derivative q(t) = a3 t^3 + a4 t^4 + a5 t^5 + a6 t^6 must
    satisfy q(0) = 0, q(1) = 1, q'(1) = 0, q''(0) = q''(1) = 0 and integrate
    to 1 over [0, 1]; the default coefficients are the unique such quartet.
    """

    tame_threshold: int = 1
    coefficients: tuple = DEFAULT_TAMING_COEFFS

    def __post_init__(self):
        if int(self.tame_threshold) != self.tame_threshold or self.tame_threshold < 1:
            raise ValueError(f"tame_threshold must be a positive integer, got {self.tame_threshold}")
        c3, c4, c5, c6 = self.coefficients
        checks = {
            "q(0)": 0.0,
            "q(1)": c3 + c4 + c5 + c6 - 1.0,
            "q'(1)": 3 * c3 + 4 * c4 + 5 * c5 + 6 * c6,
            "q''(0)": 0.0,
            "q''(1)": 6 * c3 + 12 * c4 + 20 * c5 + 30 * c6,
            "int q": c3 / 4 + c4 / 5 + c5 / 6 + c6 / 7 - 1.0,
        }
        for name, residual in checks.items():
            if abs(residual) > 1e-12:
                raise ValueError(f"taming transition violates {name} = const: residual {residual:.2e}")
        t = np.linspace(0.0, 1.0, 100_000)
        q = t**3 * (c3 + t * (c4 + t * (c5 + t * c6)))
        if q.min() < -1e-12 or q.max() > 2.0 + 1e-12:
            raise ValueError("taming transition derivative leaves [0, 2]")


def _check_nonneg(r):
    arr = np.asarray(r, dtype=np.float64)
    if np.any(arr < 0.0):
        raise ValueError("taming function argument must be nonnegative")
    return arr


def _scalar_or_array(out, r):
    return float(out) if np.ndim(r) == 0 else out


def taming_g(r, spec):
    """g(r): zero up to the threshold, r - threshold past threshold + 1."""
    arr = np.atleast_1d(_check_nonneg(r))
    out = kernels.taming_g(arr, float(spec.tame_threshold), *spec.coefficients)
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def taming_g_prime(r, spec):
    arr = np.atleast_1d(_check_nonneg(r))
    out = kernels.taming_g_prime(arr, float(spec.tame_threshold), *spec.coefficients)
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def taming_g_second(r, spec):
    arr = np.atleast_1d(_check_nonneg(r))
    out = kernels.taming_g_second(arr, float(spec.tame_threshold), *spec.coefficients)
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def taming_g1(r, spec):
    """g1(r) = r - g(r); equals r below the threshold and saturates at it."""
    arr = np.atleast_1d(_check_nonneg(r)).astype(np.float64)
    out = arr - kernels.taming_g(arr, float(spec.tame_threshold), *spec.coefficients)
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


@dataclass(frozen=True)
class LogisticSpec:
    """Bistable cubic source n (1 - n) (n - a)."""

    a: float = 0.25

    def __post_init__(self):
        if not (0.0 < self.a < 0.5):
            raise ValueError(f"logistic parameter a must lie in (0, 1/2), got {self.a}")


def logistic(n, spec):
    """Pointwise cubic source on a scalar field (no dealiasing: cubic terms
    are evaluated pointwise and their residual aliasing counts as scheme
    error)."""
    return ScalarField.from_samples(n.grid, kernels.logistic_cubic(n.samples, spec.a))


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth cut-off: 1 on [0, R], quintic-smoothstep fall on [R, 2R], 0 after."""

    R: float = 50.0

    def __post_init__(self):
        if not (self.R > 0.0):
            raise ValueError(f"cutoff radius R must be positive, got {self.R}")


def cutoff_theta(x, spec):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(arr < 0.0):
        raise ValueError("cutoff argument must be nonnegative")
    out = kernels.smoothstep_fall(arr, float(spec.R))
    return _scalar_or_array(out[0] if np.ndim(x) == 0 else out, x)


class PotentialSpec:
    """Gravitational potential with cached gradient fields."""

    def __init__(self, phi):
        self.phi = phi
        grid = phi.grid
        self.grad = tuple(
            ScalarField.from_spectral(grid, deriv_hat(grid, phi.spectral, axis))
            for axis in range(3)
        )
        mag = np.sqrt(sum(g.samples**2 for g in self.grad))
        self.sup_grad = float(mag.max())
        if not np.isfinite(self.sup_grad):
            raise ValueError("potential gradient is not bounded")
        # identically-zero components let the drift skip dead transforms
        self.grad_nonzero = tuple(bool(g.samples.any()) for g in self.grad)
        self.has_zero_gradient_component = not all(self.grad_nonzero)

    @classmethod
    def sin_x3(cls, grid):
        z = grid.meshgrid()[2]
        return cls(ScalarField.from_samples(grid, np.sin(z)))

    @classmethod
    def zero(cls, grid):
        return cls(ScalarField.from_samples(grid, np.zeros(grid.shape)))


class SystemState:
    """Cell density, chemical concentration, velocity, and current time."""

    __slots__ = ("n", "c", "u", "t")

    def __init__(self, n, c, u, t=0.0):
        if not (n.grid == c.grid == u.grid):
            raise GridMismatchError("state fields live on different grids")
        if t < 0.0:
            raise ValueError("time must be nonnegative")
        self.n = n
        self.c = c
        self.u = u
        self.t = float(t)

    @property
    def grid(self):
        return self.n.grid

    @classmethod
    def from_spectral(cls, grid, nh, ch, u1h, u2h, u3h, t=0.0):
        return cls(
            ScalarField.from_spectral(grid, nh),
            ScalarField.from_spectral(grid, ch),
            VelocityField(
                ScalarField.from_spectral(grid, u1h),
                ScalarField.from_spectral(grid, u2h),
                ScalarField.from_spectral(grid, u3h),
            ),
            t=t,
        )

    def spectral_arrays(self):
        u1, u2, u3 = self.u.components
        return (self.n.spectral, self.c.spectral, u1.spectral, u2.spectral, u3.spectral)


def sup_norm_W1inf(f):
    """Discrete W^{1,inf} norm: grid max of |f| plus grid max of |grad f|.

    Vector fields use the pointwise Euclidean magnitude and the Frobenius
    norm of the Jacobian.
    """
    if isinstance(f, VelocityField):
        comps = f.components
    else:
        comps = (f,)
    grid = comps[0].grid
    mag2 = sum(c.samples**2 for c in comps)
    grad2 = np.zeros(grid.shape)
    for comp in comps:
        fh = comp.spectral
        for axis in range(3):
            grad2 += grid.irfftn(deriv_hat(grid, fh, axis)) ** 2
    return float(np.sqrt(mag2).max() + np.sqrt(grad2).max())


def pair_sup_norm(*fields):
    """W^{1,inf} norm of a tuple of fields, taken as the sum of the parts."""
    return float(sum(sup_norm_W1inf(f) for f in fields))


# ---------------------------------------------------------------------------
# drift assembly
# ---------------------------------------------------------------------------

def _finite_or_raise(*spectra):
    for arr in spectra:
        if not np.isfinite(np.sum(arr)):
            raise BlowUpError("blow-up detected")


def _assemble_drift(state, pot, logi, taming, eps, kmask, thetas, dealias_rule,
                    logistic_split):
    """Shared drift core.

    ``kmask`` is a 0/1 multiplier array, or None for the identity; thetas is
    a dict of cut-off values in [0, 1] (all ones disables the cut-off).
    Multiplying by neutral elements is exact in IEEE arithmetic, so the
    regularized and plain drifts follow literally the same code path.
    """
    grid = state.grid
    nh, ch, u1h, u2h, u3h = state.spectral_arrays()
    if pot.phi.grid != grid:
        raise GridMismatchError("potential lives on a different grid")
    # overflow in a diverging trajectory surfaces as BlowUpError, not warnings
    errstate = np.errstate(over="ignore", invalid="ignore")
    errstate.__enter__()
    try:
        return _assemble_drift_inner(
            state, grid, nh, ch, u1h, u2h, u3h, pot, logi, taming, eps, kmask,
            thetas, dealias_rule, logistic_split,
        )
    finally:
        errstate.__exit__(None, None, None)


def _assemble_drift_inner(state, grid, nh, ch, u1h, u2h, u3h, pot, logi, taming,
                          eps, kmask, thetas, dealias_rule, logistic_split):
    if dealias_rule == "two-thirds":
        dmask = grid.two_thirds_mask
    elif dealias_rule == "none":
        dmask = np.ones(grid.spectral_shape)
    else:
        raise ValueError(f"drift assembly supports rules 'two-thirds' and 'none', got {dealias_rule!r}")

    inv = grid.irfftn
    fwd = grid.rfftn

    def jk(xh):
        return xh if kmask is None else kmask * xh

    th_adv_n = thetas["un"]   # advection of n and c
    th_chemo = thetas["nc"]   # chemotaxis flux and consumption
    th_n = thetas["n"]        # cubic source and buoyancy
    th_u = thetas["u"]        # fluid advection and taming

    # input-filtered spectra, hoisted so each is formed once
    n_mi = dmask * jk(nh)
    c_mi = dmask * jk(ch)
    u_mi = [dmask * jk(uh) for uh in (u1h, u2h, u3h)]

    # physical-space ingredients
    n_d = inv(dmask * nh)
    n_flux = n_d if kmask is None else inv(n_mi)
    grad_n_dk = [inv(deriv_hat(grid, n_mi, ax)) for ax in range(3)]
    u_dk = [inv(uhm) for uhm in u_mi]
    grad_c_dk = [inv(deriv_hat(grid, c_mi, ax)) for ax in range(3)]
    grad_u_dk = [[inv(deriv_hat(grid, uhm, ax)) for ax in range(3)] for uhm in u_mi]
    if eps == 0.0:
        grad_cm_d = grad_c_dk if kmask is None else [
            inv(deriv_hat(grid, dmask * ch, ax)) for ax in range(3)
        ]
        n_moll_d = n_d
    else:
        cm = dmask * mollify_hat(grid, ch, eps)
        grad_cm_d = [inv(deriv_hat(grid, cm, ax)) for ax in range(3)]
        n_moll_d = inv(dmask * mollify_hat(grid, nh, eps))
    c_dk = inv(c_mi)
    if kmask is None:
        u_k = [comp.samples for comp in state.u.components]
    else:
        u_k = [inv(kmask * uh) for uh in (u1h, u2h, u3h)]

    # density tendency
    adv_n_h = dmask * fwd(u_dk[0] * grad_n_dk[0] + u_dk[1] * grad_n_dk[1] + u_dk[2] * grad_n_dk[2])
    flux_div_h = sum(
        deriv_hat(grid, dmask * fwd(n_flux * grad_cm_d[ax]), ax) for ax in range(3)
    )
    if logistic_split:
        n_k = inv(jk(nh))
        source_h = (
            -logi.a * jk(jk(nh))
            + (1.0 + logi.a) * jk(fwd(n_k * n_k))
            - jk(fwd(n_k * n_k * n_k))
        )
    else:
        source_h = fwd(kernels.logistic_cubic(state.n.samples, logi.a))
    dn_h = (
        laplacian_hat(grid, jk(jk(nh)))
        - th_adv_n * jk(adv_n_h)
        - th_chemo * jk(flux_div_h)
        + th_n * source_h
    )

    # concentration tendency
    adv_c_h = dmask * fwd(u_dk[0] * grad_c_dk[0] + u_dk[1] * grad_c_dk[1] + u_dk[2] * grad_c_dk[2])
    consume_h = dmask * fwd(c_dk * n_moll_d)
    dc_h = (
        laplacian_hat(grid, jk(jk(ch)))
        - th_adv_n * jk(adv_c_h)
        - th_chemo * jk(consume_h)
    )

    # velocity tendency
    tame = kernels.tamed_velocity(
        u_k[0], u_k[1], u_k[2], float(taming.tame_threshold), *taming.coefficients
    )
    taming_active = any(t.any() for t in tame)
    zero_h = None if taming_active and not pot.has_zero_gradient_component else np.zeros(
        grid.spectral_shape, dtype=np.complex128
    )
    du_h = []
    for i, uh in enumerate((u1h, u2h, u3h)):
        adv_i = dmask * fwd(
            u_dk[0] * grad_u_dk[i][0] + u_dk[1] * grad_u_dk[i][1] + u_dk[2] * grad_u_dk[i][2]
        )
        if pot.grad_nonzero[i]:
            buoy_i = mollify_hat(grid, dmask * fwd(n_d * pot.grad[i].samples), eps)
        else:
            buoy_i = zero_h
        tame_i = fwd(tame[i]) if taming_active else zero_h
        du_h.append(
            laplacian_hat(grid, jk(jk(uh)))
            - th_u * jk(adv_i)
            - th_u * jk(tame_i)
            + th_n * jk(buoy_i)
        )
    du_h = leray_project_hat(grid, *du_h)

    _finite_or_raise(dn_h, dc_h, *du_h)
    return (
        ScalarField.from_spectral(grid, dn_h),
        ScalarField.from_spectral(grid, dc_h),
        VelocityField(*(ScalarField.from_spectral(grid, dh) for dh in du_h)),
    )


_NEUTRAL_THETAS = {"un": 1.0, "nc": 1.0, "n": 1.0, "u": 1.0}


def drift_exact(state, pot, logi, taming, dealias_rule="two-thirds"):
    """Tendencies of the plain system (no mollifier, truncation, or cut-off)."""
    return _assemble_drift(
        state, pot, logi, taming, 0.0, None, _NEUTRAL_THETAS, dealias_rule, False
    )


def drift_mollified(state, pot, logi, taming, eps, dealias_rule="two-thirds"):
    """Tendencies with mollified chemotaxis, consumption, and buoyancy inputs."""
    if eps < 0.0:
        raise ValueError("mollifier width must be nonnegative")
    return _assemble_drift(
        state, pot, logi, taming, eps, None, _NEUTRAL_THETAS, dealias_rule, False
    )


def truncation_thetas(state, cutoff):
    """Cut-off gate values for each nonlinear term of the truncated drift."""
    w_n = sup_norm_W1inf(state.n)
    w_c = sup_norm_W1inf(state.c)
    w_u = sup_norm_W1inf(state.u)
    return {
        "un": cutoff_theta(w_u + w_n, cutoff),
        "nc": cutoff_theta(w_n + w_c, cutoff),
        "n": cutoff_theta(w_n, cutoff),
        "u": cutoff_theta(w_u, cutoff),
    }


def drift_truncated(state, pot, logi, taming, eps, k, cutoff, annulus=False,
                    dealias_rule="two-thirds"):
    """Tendencies of the fully regularized system.

    Every transported or multiplied field is frequency-truncated first, the
    dissipative terms act through the squared truncation, the cubic source is
    truncated monomial by monomial, and each nonlinear term is gated by the
    cut-off of its governing W^{1,inf} norms.
    """
    if eps < 0.0:
        raise ValueError("mollifier width must be nonnegative")
    if not (k > 0.0):
        raise ValueError("truncation radius must be positive")
    if not (cutoff.R > 1.0):
        raise ValueError("cut-off radius must exceed 1 for the regularized drift")
    kmask = state.grid.ball_mask(k, annulus=annulus)
    if kmask.all():
        kmask = None  # truncation covers the whole spectrum: identity
    thetas = truncation_thetas(state, cutoff)
    return _assemble_drift(
        state, pot, logi, taming, eps, kmask, thetas, dealias_rule, True
    )
