"""Truncated cylindrical Wiener process and the velocity noise operator.

The noise operator follows the linear prototype: mode j acts with amplitude
sigma_j = sigma0 * j^(-decay), so both the Hilbert-Schmidt bound and the
Lipschitz bound hold with explicit constants that tests can assert exactly.

Increments come from a counter-based Philox stream keyed by
(master_seed, path_id, step_index): identical keys give bit-identical draws,
distinct paths and steps are statistically independent, and a resumed run
regenerates exactly the increments an unbroken run would have used.
"""

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .spectral import ScalarField, VelocityField, bessel_norm_sq, leray_project

_KINDS = ("multiplicative-diagonal", "multiplicative-shell", "additive", "off")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "multiplicative-diagonal"
    mode_count: int = 8
    sigma0: float = 0.1
    decay: float = 1.0
    additive_modes: tuple = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"noise kind must be one of {_KINDS}, got {self.kind!r}")
        if self.mode_count < 1:
            raise ValueError("mode_count must be at least 1")
        if self.sigma0 < 0.0:
            raise ValueError("sigma0 must be nonnegative")
        if not (self.decay > 0.5):
            raise ValueError("decay must exceed 1/2 so the mode sum stays summable")
        if self.kind == "additive" and self.additive_modes is not None:
            if len(self.additive_modes) < self.mode_count:
                raise ValueError("additive noise needs one mode field per index")

    @property
    def active(self):
        return self.kind != "off" and self.sigma0 > 0.0

    def sigmas(self):
        j = np.arange(1, self.mode_count + 1, dtype=np.float64)
        return self.sigma0 * j ** (-self.decay)

    def sum_sigma_sq(self):
        return float(np.sum(self.sigmas() ** 2))

    def bound_constant(self):
        """C with sum_j ||G_j(u)||^2 <= C (1 + ||u||^2) for multiplicative kinds."""
        return max(1.0, self.sum_sigma_sq())


@dataclass(frozen=True)
class WienerIncrement:
    values: np.ndarray
    step_index: int
    path_id: int


def sample_increment(master_seed, path_id, step_index, dt, mode_count):
    """mode_count independent N(0, dt) draws from a pure counter-based stream."""
    if not (dt > 0.0):
        raise ValueError(f"time step must be positive, got {dt}")
    if path_id < 0 or step_index < 0:
        raise ValueError("path_id and step_index must be nonnegative")
    gen = Generator(Philox(key=master_seed, counter=[0, 0, path_id, step_index]))
    values = gen.standard_normal(mode_count) * np.sqrt(dt)
    values.flags.writeable = False
    return WienerIncrement(values=values, step_index=step_index, path_id=path_id)


# ---------------------------------------------------------------------------
# mode fields for additive noise
# ---------------------------------------------------------------------------

_ADDITIVE_WAVEVECTORS = (
    (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0),
    (1, -1, 0), (0, 1, 1), (0, 1, -1), (1, 0, 1),
    (1, 0, -1), (1, 1, 1), (1, 1, -1), (1, -1, 1),
)


def default_additive_modes(grid, mode_count):
    """Divergence-free single-mode velocity fields with unit L2 norm."""
    if mode_count > len(_ADDITIVE_WAVEVECTORS):
        raise ValueError(
            f"at most {len(_ADDITIVE_WAVEVECTORS)} built-in additive modes available"
        )
    xs = grid.meshgrid()
    modes = []
    for mvec in _ADDITIVE_WAVEVECTORS[:mode_count]:
        phase = sum(m * (2.0 * np.pi / length) * x
                    for m, length, x in zip(mvec, grid.box_length, xs))
        # any direction not parallel to the wavevector; projection makes it transverse
        direction = (1.0, 0.0, 0.0) if mvec[1:] != (0, 0) else (0.0, 1.0, 0.0)
        comps = [ScalarField.from_samples(grid, d * np.sin(phase)) for d in direction]
        field = leray_project(*comps)
        norm = np.sqrt(bessel_norm_sq(field, 0))
        modes.append(
            VelocityField(*(ScalarField.from_spectral(grid, c.spectral / norm)
                            for c in field.components))
        )
    return tuple(modes)


def _shell_mask(grid, j):
    return (np.rint(np.sqrt(grid.k_sq)) == j).astype(np.float64)


def _scale_field(u, factor):
    return VelocityField(
        *(ScalarField.from_spectral(u.grid, factor * c.spectral) for c in u.components)
    )


def apply_noise(u, j, spec):
    """G_j(u): the j-th noise direction evaluated at velocity u."""
    if not (1 <= j <= spec.mode_count):
        raise ValueError(f"mode index {j} outside 1..{spec.mode_count}")
    sigma = spec.sigma0 * float(j) ** (-spec.decay)
    if spec.kind == "off":
        zero = np.zeros(u.grid.spectral_shape, dtype=np.complex128)
        return VelocityField(*(ScalarField.from_spectral(u.grid, zero) for _ in range(3)))
    if spec.kind == "multiplicative-diagonal":
        return _scale_field(u, sigma)
    if spec.kind == "multiplicative-shell":
        return _scale_field(u, sigma * _shell_mask(u.grid, j))
    modes = spec.additive_modes or default_additive_modes(u.grid, spec.mode_count)
    return _scale_field(modes[j - 1], sigma)


def hilbert_schmidt_sq(u, s, spec):
    """sum_j ||G_j(u)||_{H^s}^2 in closed form (the tested identity's partner)."""
    if spec.kind == "off":
        return 0.0
    sigmas = spec.sigmas()
    if spec.kind == "multiplicative-diagonal":
        return float(np.sum(sigmas**2)) * bessel_norm_sq(u, s)
    if spec.kind == "multiplicative-shell":
        total = 0.0
        for j in range(1, spec.mode_count + 1):
            shell = _shell_mask(u.grid, j)
            total += sigmas[j - 1] ** 2 * bessel_norm_sq(_scale_field(u, shell), s)
        return total
    modes = spec.additive_modes or default_additive_modes(u.grid, spec.mode_count)
    return float(sum(
        sigmas[j] ** 2 * bessel_norm_sq(modes[j], s) for j in range(spec.mode_count)
    ))


def noise_increment_hat(grid, u_hats, increment, spec):
    """Spectral coefficients of sum_j G_j(u) dW_j for one time step.

    Returns a triple of arrays, or None when the noise is off.
    """
    if not spec.active:
        return None
    values = increment.values
    sigmas = spec.sigmas()
    weights = sigmas * values[: spec.mode_count]
    if spec.kind == "multiplicative-diagonal":
        factor = float(np.sum(weights))
        return tuple(factor * uh for uh in u_hats)
    if spec.kind == "multiplicative-shell":
        shell_idx = np.rint(np.sqrt(grid.k_sq)).astype(np.int64)
        lookup = np.zeros(max(int(shell_idx.max()) + 2, spec.mode_count + 2))
        lookup[1 : spec.mode_count + 1] = weights
        factor = lookup[shell_idx]
        return tuple(factor * uh for uh in u_hats)
    modes = spec.additive_modes or default_additive_modes(grid, spec.mode_count)
    out = [np.zeros(grid.spectral_shape, dtype=np.complex128) for _ in range(3)]
    for j in range(spec.mode_count):
        for i, comp in enumerate(modes[j].components):
            out[i] += weights[j] * comp.spectral
    return tuple(out)
