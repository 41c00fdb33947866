import numpy as np
import pytest
from numpy.random import Generator, Philox

from stcns.spectral import ScalarField, TorusGrid, VelocityField, leray_project

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(16)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32)


def rng_for(seed):
    return Generator(Philox(key=seed, counter=[0, 0, 0, 999]))


def random_scalar(grid, seed, band=None):
    """Band-limited real scalar with unit sup norm."""
    if band is None:
        band = min(grid.shape) // 4
    gen = rng_for(seed)
    coeffs = np.zeros(grid.spectral_shape, dtype=np.complex128)
    sub = (slice(0, band), slice(0, band), slice(0, band))
    coeffs[sub] = gen.standard_normal((band,) * 3) + 1j * gen.standard_normal((band,) * 3)
    samples = grid.irfftn(coeffs)
    samples /= np.abs(samples).max()
    return ScalarField.from_samples(grid, samples)


def random_positive_scalar(grid, seed, band=None, floor_level=0.5, amplitude=0.7):
    """Positive as a trigonometric polynomial: floor + amp * (band-limited g)^2.

    The default modulation depth keeps quadrature aliasing of 1/c-type
    integrands below 1e-6 at 32^3 (the identity-verifier tolerance)."""
    if band is None:
        band = min(grid.shape) // 4
    half = max(1, band // 2)
    base = random_scalar(grid, seed, band=half)
    return ScalarField.from_samples(grid, floor_level + amplitude * base.samples**2)


def random_velocity(grid, seed, band=None, amplitude=1.0):
    comps = [random_scalar(grid, seed + 101 * i, band=band) for i in range(3)]
    comps = [ScalarField.from_samples(grid, amplitude * c.samples) for c in comps]
    return leray_project(*comps)
