"""Pseudo-spectral simulator and numerical-verification laboratory for the
stochastic tamed chemotaxis-Navier-Stokes system on a periodic 3-D torus."""

__version__ = "0.1.0"

from .spectral import (
    ScalarField,
    TorusGrid,
    VelocityField,
    bessel_norm,
    bessel_norm_sq,
    dealiased_product,
    divergence,
    gradient,
    hessian_entry,
    laplacian,
    leray_project,
    mollify,
    truncate,
)
from .model import (
    CutoffSpec,
    LogisticSpec,
    PotentialSpec,
    SystemState,
    TamingSpec,
    cutoff_theta,
    drift_exact,
    drift_mollified,
    drift_truncated,
    logistic,
    sup_norm_W1inf,
    taming_g,
    taming_g1,
)
from .noise import NoiseSpec, WienerIncrement, apply_noise, sample_increment
from .integrator import Problem, SchemeConfig, Trajectory, run, step
from .harness import (
    EnsembleReport,
    RefinementReport,
    TwinRunReport,
    checkpoint_load,
    checkpoint_save,
    ensemble_run,
    refinement_study,
    resume_run,
    twin_run,
)
from .config import SimConfig, parse_config, serialize_config
