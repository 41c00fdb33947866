"""JSON configuration schema, validation, and object builders.

A config document is flat JSON with two nested groups (``noise`` and ``ic``).
Unknown keys are rejected with their dotted path; constraint violations name
the offending key and the admissible range.  Parsing is idempotent:
parse(serialize(parse(text))) == parse(text).
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .errors import ConfigError
from .integrator import Problem, SchemeConfig
from .model import (
    CutoffSpec,
    LogisticSpec,
    PotentialSpec,
    SystemState,
    TamingSpec,
)
from .noise import NoiseSpec
from .spectral import ScalarField, TorusGrid, VelocityField, leray_project

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "multiplicative-diagonal"
    sigma0: float = 0.1
    decay: float = 1.0
    modes: int = 8


@dataclass(frozen=True)
class InitialConfig:
    preset: str = "smooth-default"
    amplitude: float = 0.3
    seed: int = 1


@dataclass(frozen=True)
class SimConfig:
    grid: tuple = (32, 32, 32)
    box_length: tuple = (_TWO_PI, _TWO_PI, _TWO_PI)
    T: float = 0.5
    dt: float = 1e-3
    seed: int = 0
    variant: str = "exact"
    eps: float = 0.1
    k: float = None
    cutoff_R: float = 50.0
    annulus: bool = False
    clip_negative: bool = False
    dealias: str = "two-thirds"
    a: float = 0.25
    tame_threshold: int = 1
    phi: str = "sin_x3"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    ic: InitialConfig = field(default_factory=InitialConfig)
    output_stride: int = 50
    diagnostics: str = "entropy"
    diagnostics_stride: int = 1

    # ---- builders -------------------------------------------------------

    def make_grid(self):
        return TorusGrid(self.grid, self.box_length)

    def make_scheme(self):
        return SchemeConfig(
            dt=self.dt, T=self.T, variant=self.variant, eps=self.eps,
            k=self.k, cutoff_R=self.cutoff_R, annulus=self.annulus,
            clip_negative=self.clip_negative, dealias_rule=self.dealias,
        )

    def make_problem(self, grid):
        pot = PotentialSpec.sin_x3(grid) if self.phi == "sin_x3" else PotentialSpec.zero(grid)
        return Problem(
            pot=pot,
            logistic=LogisticSpec(self.a),
            taming=TamingSpec(self.tame_threshold),
            noise=NoiseSpec(
                kind=self.noise.kind, mode_count=self.noise.modes,
                sigma0=self.noise.sigma0, decay=self.noise.decay,
            ),
        )

    def make_initial_state(self, grid):
        return build_initial_state(grid, self.ic)

    def output_times(self):
        steps = round(self.T / self.dt)
        stride = max(1, min(self.output_stride, steps))
        times = [m * self.dt for m in range(0, steps + 1, stride)]
        if abs(times[-1] - self.T) > 1e-12:
            times.append(self.T)
        return times


def _broadband_scalar(grid, gen, decay_power=2.0):
    coeffs = gen.standard_normal(grid.spectral_shape) + 1j * gen.standard_normal(grid.spectral_shape)
    coeffs *= (1.0 + grid.k_sq) ** (-decay_power / 2.0)
    coeffs[0, 0, 0] = 0.0
    samples = grid.irfftn(coeffs)
    sup = np.abs(samples).max()
    return samples / sup if sup > 0 else samples


def build_initial_state(grid, ic):
    """Initial data presets.

    smooth-default: strictly positive low-mode scalars and a Taylor-Green
    style solenoidal velocity; broadband: full-spectrum data with algebraic
    coefficient decay (positive scalars, solenoidal velocity); zero: rest.
    """
    X, Y, Z = grid.meshgrid()
    zero = np.zeros(grid.shape)
    if ic.preset == "zero":
        zf = ScalarField.from_samples(grid, zero)
        return SystemState(zf, zf, VelocityField(zf, zf, zf))
    if ic.preset == "smooth-default":
        kx = _TWO_PI / grid.box_length[0]
        ky = _TWO_PI / grid.box_length[1]
        kz = _TWO_PI / grid.box_length[2]
        n0 = 0.6 + 0.2 * np.cos(kx * X) + 0.1 * np.sin(ky * Y) * np.cos(kz * Z)
        c0 = 1.0 + 0.3 * np.sin(kx * X) * np.cos(ky * Y)
        amp = ic.amplitude
        u1 = amp * np.sin(kx * X) * np.cos(ky * Y) * np.cos(kz * Z)
        u2 = -amp * np.cos(kx * X) * np.sin(ky * Y) * np.cos(kz * Z)
        u = leray_project(
            ScalarField.from_samples(grid, u1),
            ScalarField.from_samples(grid, u2),
            ScalarField.from_samples(grid, zero),
        )
        return SystemState(
            ScalarField.from_samples(grid, n0),
            ScalarField.from_samples(grid, c0),
            u,
        )
    if ic.preset == "broadband":
        gen = Generator(Philox(key=ic.seed, counter=[0, 0, 0, 2**34]))
        n0 = 0.8 + 0.15 * _broadband_scalar(grid, gen)
        c0 = 1.0 + 0.2 * _broadband_scalar(grid, gen)
        comps = [
            ScalarField.from_samples(grid, ic.amplitude * _broadband_scalar(grid, gen))
            for _ in range(3)
        ]
        return SystemState(
            ScalarField.from_samples(grid, n0),
            ScalarField.from_samples(grid, c0),
            leray_project(*comps),
        )
    raise ConfigError("preset must be smooth-default, broadband, or zero", "ic.preset")


# ---------------------------------------------------------------------------
# parsing and validation
# ---------------------------------------------------------------------------

def _expect(cond, message, key):
    if not cond:
        raise ConfigError(message, key)


def _as_triple(value, key, caster, positive=True):
    if isinstance(value, (int, float)):
        value = [value] * 3
    _expect(isinstance(value, (list, tuple)) and len(value) == 3,
            "expected a scalar or a length-3 list", key)
    out = tuple(caster(v) for v in value)
    if positive:
        _expect(all(v > 0 for v in out), "entries must be positive", key)
    return out


_TOP_KEYS = {
    "grid", "box_length", "T", "dt", "seed", "variant", "eps", "k", "cutoff_R",
    "annulus", "clip_negative", "dealias", "a", "tame_threshold", "phi",
    "noise", "ic", "output_stride", "diagnostics", "diagnostics_stride",
}
_NOISE_KEYS = {"kind", "sigma0", "decay", "modes"}
_IC_KEYS = {"preset", "amplitude", "seed"}


def parse_config_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object", None)
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError("unknown key", key)

    defaults = SimConfig()
    grid = _as_triple(doc.get("grid", defaults.grid), "grid", int)
    for npts in grid:
        _expect(npts >= 4 and npts % 2 == 0, "grid points must be even and >= 4", "grid")
    box = _as_triple(doc.get("box_length", defaults.box_length), "box_length", float)

    T = float(doc.get("T", defaults.T))
    _expect(T > 0, "horizon T must be positive", "T")
    dt = float(doc.get("dt", defaults.dt))
    _expect(dt > 0, "time step must be positive", "dt")
    _expect(dt <= T, "time step must not exceed T", "dt")

    seed = int(doc.get("seed", defaults.seed))
    _expect(0 <= seed < 2**64, "seed must fit in an unsigned 64-bit integer", "seed")

    variant = doc.get("variant", defaults.variant)
    _expect(variant in ("exact", "mollified", "truncated"),
            "variant must be exact, mollified, or truncated", "variant")
    eps = float(doc.get("eps", defaults.eps))
    _expect(eps >= 0, "mollifier width must be nonnegative", "eps")
    k = doc.get("k", defaults.k)
    if k is not None:
        k = float(k)
        _expect(k > 0, "truncation radius must be positive", "k")
    if variant == "truncated":
        _expect(k is not None, "truncated variant requires a truncation radius", "k")
    cutoff_r = float(doc.get("cutoff_R", defaults.cutoff_R))
    _expect(cutoff_r > 1, "cut-off radius must exceed 1", "cutoff_R")

    a = float(doc.get("a", defaults.a))
    _expect(0.0 < a < 0.5, "logistic parameter must lie in the open interval (0, 1/2)", "a")
    n_thr = doc.get("tame_threshold", defaults.tame_threshold)
    _expect(isinstance(n_thr, int) and n_thr >= 1,
            "taming threshold must be a positive integer", "tame_threshold")
    phi = doc.get("phi", defaults.phi)
    _expect(phi in ("sin_x3", "zero"), "phi must be sin_x3 or zero", "phi")
    dealias = doc.get("dealias", defaults.dealias)
    _expect(dealias in ("two-thirds", "none"),
            "dealias rule must be two-thirds or none", "dealias")

    noise_doc = doc.get("noise", {})
    if not isinstance(noise_doc, dict):
        raise ConfigError("noise must be an object", "noise")
    for key in noise_doc:
        if key not in _NOISE_KEYS:
            raise ConfigError("unknown key", f"noise.{key}")
    nd = NoiseConfig()
    kind = noise_doc.get("kind", nd.kind)
    _expect(kind in ("multiplicative-diagonal", "multiplicative-shell", "additive", "off"),
            "unknown noise kind", "noise.kind")
    sigma0 = float(noise_doc.get("sigma0", nd.sigma0))
    _expect(sigma0 >= 0, "noise amplitude must be nonnegative", "noise.sigma0")
    decay = float(noise_doc.get("decay", nd.decay))
    _expect(decay > 0.5, "spectral decay must exceed 1/2", "noise.decay")
    modes = int(noise_doc.get("modes", nd.modes))
    _expect(modes >= 1, "mode count must be at least 1", "noise.modes")
    noise = NoiseConfig(kind=kind, sigma0=sigma0, decay=decay, modes=modes)

    ic_doc = doc.get("ic", {})
    if not isinstance(ic_doc, dict):
        raise ConfigError("ic must be an object", "ic")
    for key in ic_doc:
        if key not in _IC_KEYS:
            raise ConfigError("unknown key", f"ic.{key}")
    icd = InitialConfig()
    preset = ic_doc.get("preset", icd.preset)
    _expect(preset in ("smooth-default", "broadband", "zero"),
            "preset must be smooth-default, broadband, or zero", "ic.preset")
    amplitude = float(ic_doc.get("amplitude", icd.amplitude))
    ic_seed = int(ic_doc.get("seed", icd.seed))
    ic = InitialConfig(preset=preset, amplitude=amplitude, seed=ic_seed)

    out_stride = int(doc.get("output_stride", defaults.output_stride))
    _expect(out_stride >= 1, "output stride must be at least 1", "output_stride")
    diag = doc.get("diagnostics", defaults.diagnostics)
    _expect(diag in ("full", "budget", "entropy", "none"),
            "diagnostics must be full, budget, entropy, or none", "diagnostics")
    diag_stride = int(doc.get("diagnostics_stride", defaults.diagnostics_stride))
    _expect(diag_stride >= 1, "diagnostics stride must be at least 1", "diagnostics_stride")
    if diag in ("full", "budget"):
        _expect(diag_stride == 1, "budget residuals require stride 1", "diagnostics_stride")

    steps = round(T / dt)
    _expect(steps >= 1 and abs(T - steps * dt) <= 1e-9 * max(T, 1.0),
            "T must be an integer multiple of dt", "T")

    return SimConfig(
        grid=grid, box_length=box, T=T, dt=dt, seed=seed, variant=variant,
        eps=eps, k=k, cutoff_R=cutoff_r, annulus=bool(doc.get("annulus", False)),
        clip_negative=bool(doc.get("clip_negative", False)), dealias=dealias,
        a=a, tame_threshold=n_thr, phi=phi, noise=noise, ic=ic,
        output_stride=out_stride, diagnostics=diag, diagnostics_stride=diag_stride,
    )


def parse_config(text):
    """Parse a JSON config document into a fully validated SimConfig."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}", None) from exc
    return parse_config_dict(doc)


def serialize_config(config):
    """Canonical JSON echo of a config (round-trips through parse_config)."""
    doc = asdict(config)
    doc["grid"] = list(config.grid)
    doc["box_length"] = list(config.box_length)
    return json.dumps(doc, indent=2, sort_keys=True)
