"""Periodic-box grid, FFT layer, and Fourier-multiplier operators.

Fields live on a uniform 3-D torus and are represented both by real samples
and by rfft coefficients (scipy.fft conventions, unnormalized).  All norms
carry the quadrature weight (L/N)^3 so they approximate continuum integrals:
a constant field 3 on [0, 2pi)^3 has L2 norm 3 (2pi)^{3/2}.
"""

import numpy as np
import scipy.fft as _fft

from . import kernels
from .errors import GridMismatchError, InvalidFieldError

_TWO_PI = 2.0 * np.pi


def _as_triple(value, caster):
    if np.ndim(value) == 0:
        return (caster(value),) * 3
    items = tuple(caster(v) for v in value)
    if len(items) != 3:
        raise ValueError("expected a scalar or a length-3 sequence")
    return items


class TorusGrid:
    """Geometry and precomputed multiplier tables for a periodic box.

    Parameters
    ----------
    points_per_axis : int or (int, int, int)
        Samples per axis; each must be even and at least 4.
    box_length : float or (float, float, float)
        Period per axis, default 2 pi.
    """

    def __init__(self, points_per_axis, box_length=_TWO_PI):
        self.shape = _as_triple(points_per_axis, int)
        self.box_length = _as_triple(box_length, float)
        for n in self.shape:
            if n < 4 or n % 2 != 0:
                raise ValueError(f"points_per_axis must be even and >= 4, got {n}")
        for length in self.box_length:
            if not (length > 0.0):
                raise ValueError(f"box_length must be positive, got {length}")

        n1, n2, n3 = self.shape
        l1, l2, l3 = self.box_length
        # standard DFT ordering; the unpaired Nyquist mode appears exactly once
        self.wavenumbers = (
            _TWO_PI / l1 * np.fft.fftfreq(n1, 1.0 / n1),
            _TWO_PI / l2 * np.fft.fftfreq(n2, 1.0 / n2),
            _TWO_PI / l3 * np.fft.rfftfreq(n3, 1.0 / n3),
        )
        self.k1 = self.wavenumbers[0].reshape(-1, 1, 1)
        self.k2 = self.wavenumbers[1].reshape(1, -1, 1)
        self.k3 = self.wavenumbers[2].reshape(1, 1, -1)
        self.k_sq = self.k1**2 + self.k2**2 + self.k3**2
        self.neg_k_sq = -self.k_sq
        self.ik = tuple(1j * k for k in (self.k1, self.k2, self.k3))
        self.k_full = tuple(
            np.ascontiguousarray(np.broadcast_to(k, self.k_sq.shape))
            for k in (self.k1, self.k2, self.k3)
        )
        with np.errstate(divide="ignore"):
            inv = np.where(self.k_sq > 0.0, 1.0 / np.where(self.k_sq > 0.0, self.k_sq, 1.0), 0.0)
        self.inv_k_sq = inv  # zero at the zero mode: projections leave it unchanged
        self.leray_p = tuple(
            np.ascontiguousarray(np.broadcast_to(k * inv, inv.shape))
            for k in (self.k1, self.k2, self.k3)
        )

        # rfft stores only xi3 >= 0; duplicated modes carry weight 2 in sums
        weight = np.full(self.spectral_shape, 2.0)
        weight[:, :, 0] = 1.0
        weight[:, :, -1] = 1.0
        self.mode_weight = weight

        # two-thirds rule: keep |m_i| <= floor(N_i/3) per axis
        masks = []
        for axis_k, length, n in zip((self.k1, self.k2, self.k3), self.box_length, self.shape):
            cutoff = (_TWO_PI / length) * (n // 3)
            masks.append(np.abs(axis_k) <= cutoff * (1.0 + 1e-12))
        self.two_thirds_mask = (masks[0] & masks[1] & masks[2]).astype(np.float64)

        self.n_points = n1 * n2 * n3
        self.volume = l1 * l2 * l3
        self.cell_volume = self.volume / self.n_points
        # weight turning sum |fhat|^2 into the continuum integral of |f|^2
        self.spectral_l2_weight = self.volume / (self.n_points * float(self.n_points))
        self._mollifier_cache = {}

    def mollifier(self, eps):
        """Cached heat-kernel multiplier exp(-eps^2 |xi|^2)."""
        mult = self._mollifier_cache.get(eps)
        if mult is None:
            mult = np.exp(-(eps * eps) * self.k_sq)
            mult.flags.writeable = False
            self._mollifier_cache[eps] = mult
        return mult

    @property
    def spectral_shape(self):
        n1, n2, n3 = self.shape
        return (n1, n2, n3 // 2 + 1)

    def axes(self):
        """Physical coordinates along each axis."""
        return tuple(
            np.arange(n) * (length / n) for n, length in zip(self.shape, self.box_length)
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def rfftn(self, samples):
        return _fft.rfftn(samples)

    def irfftn(self, coeffs):
        return _fft.irfftn(coeffs, s=self.shape)

    def ball_mask(self, k, annulus=False):
        """Indicator of |xi| <= k, optionally intersected with |xi| >= 1/k."""
        if not (k > 0.0):
            raise ValueError(f"truncation radius must be positive, got {k}")
        keep = self.k_sq <= (k * k) * (1.0 + 1e-12)
        if annulus:
            keep &= self.k_sq >= (1.0 / (k * k)) * (1.0 - 1e-12)
        return keep.astype(np.float64)

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and self.shape == other.shape
            and self.box_length == other.box_length
        )

    def __hash__(self):
        return hash((self.shape, self.box_length))

    def __repr__(self):
        return f"TorusGrid(shape={self.shape}, box_length={self.box_length})"


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class ScalarField:
    """Real scalar field with lazily synchronized sample/spectral views.

    Instances are immutable: operations return new fields, and the backing
    arrays are marked read-only so transform plans and fields can be shared
    across concurrent trajectories.
    """

    __slots__ = ("grid", "_samples", "_spectral")

    def __init__(self, grid, samples=None, spectral=None):
        if samples is None and spectral is None:
            raise ValueError("provide samples or spectral coefficients")
        self.grid = grid
        self._samples = None
        self._spectral = None
        if samples is not None:
            samples = np.asarray(samples, dtype=np.float64)
            if samples.shape != grid.shape:
                raise ValueError(f"samples shape {samples.shape} != grid {grid.shape}")
            if not np.isfinite(samples).all():
                raise InvalidFieldError("invalid field: non-finite samples")
            self._samples = _freeze(samples)
        if spectral is not None:
            spectral = np.asarray(spectral, dtype=np.complex128)
            if spectral.shape != grid.spectral_shape:
                raise ValueError(
                    f"spectral shape {spectral.shape} != grid {grid.spectral_shape}"
                )
            if not np.isfinite(spectral).all():
                raise InvalidFieldError("invalid field: non-finite coefficients")
            self._spectral = _freeze(spectral)

    @classmethod
    def from_samples(cls, grid, samples):
        return cls(grid, samples=samples)

    @classmethod
    def from_spectral(cls, grid, spectral):
        return cls(grid, spectral=spectral)

    @property
    def samples(self):
        if self._samples is None:
            self._samples = _freeze(self.grid.irfftn(self._spectral))
        return self._samples

    @property
    def spectral(self):
        if self._spectral is None:
            self._spectral = _freeze(self.grid.rfftn(self._samples))
        return self._spectral

    def __repr__(self):
        return f"ScalarField(grid={self.grid!r})"


class VelocityField:
    """Three scalar components sharing one grid; intended divergence-free."""

    __slots__ = ("components",)

    def __init__(self, u1, u2, u3):
        if not (u1.grid == u2.grid == u3.grid):
            raise GridMismatchError("velocity components live on different grids")
        self.components = (u1, u2, u3)

    @property
    def grid(self):
        return self.components[0].grid

    def __iter__(self):
        return iter(self.components)

    def __repr__(self):
        return f"VelocityField(grid={self.grid!r})"


def _component_fields(f):
    """Normalize a ScalarField / VelocityField into a tuple of scalars."""
    if isinstance(f, VelocityField):
        return f.components
    return (f,)


def _require_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def bessel_norm_sq(f, s):
    """Squared H^s norm via the multiplier (1 + |xi|^2)^s."""
    total = 0.0
    for comp in _component_fields(f):
        grid = comp.grid
        fh = comp.spectral
        mult = (1.0 + grid.k_sq) ** s if s != 0 else 1.0
        total += float(
            np.sum(mult * grid.mode_weight * (fh.real**2 + fh.imag**2))
        ) * grid.spectral_l2_weight
    return total


def bessel_norm(f, s):
    """H^s norm; vector fields take the root-sum-of-squares over components."""
    return float(np.sqrt(bessel_norm_sq(f, s)))


def l2_norm_quadrature(f):
    """Real-space L2 norm by trapezoid-on-torus quadrature (Parseval partner)."""
    total = 0.0
    for comp in _component_fields(f):
        total += float(np.sum(comp.samples**2)) * comp.grid.cell_volume
    return float(np.sqrt(total))


def integrate(grid, values):
    """Quadrature of a sample array over the box."""
    return float(np.sum(values)) * grid.cell_volume


# ---------------------------------------------------------------------------
# differential operators (exact Fourier multipliers)
# ---------------------------------------------------------------------------

def _axis_k(grid, axis):
    return (grid.k1, grid.k2, grid.k3)[axis]


def deriv_hat(grid, fh, axis):
    return grid.ik[axis] * fh


def laplacian_hat(grid, fh):
    return grid.neg_k_sq * fh


def gradient(f):
    grid = f.grid
    fh = f.spectral
    return tuple(
        ScalarField.from_spectral(grid, deriv_hat(grid, fh, axis)) for axis in range(3)
    )


def laplacian(f):
    return ScalarField.from_spectral(f.grid, laplacian_hat(f.grid, f.spectral))


def hessian_entry(f, i, j):
    grid = f.grid
    mult = -_axis_k(grid, i) * _axis_k(grid, j)
    return ScalarField.from_spectral(grid, mult * f.spectral)


def divergence(u):
    comps = _component_fields(u)
    if len(comps) != 3:
        raise ValueError("divergence needs a three-component field")
    grid = _require_same_grid(*comps)
    dh = sum(deriv_hat(grid, comp.spectral, axis) for axis, comp in enumerate(comps))
    return ScalarField.from_spectral(grid, dh)


# ---------------------------------------------------------------------------
# Leray (Helmholtz) projection
# ---------------------------------------------------------------------------

# longitudinal fractions below this are roundoff debris, not signal
_LERAY_SNAP = 1e-13


def leray_project_hat(grid, u1h, u2h, u3h):
    """Remove the longitudinal part mode by mode; zero mode is untouched.

    Modes whose longitudinal fraction is already at machine scale pass
    through verbatim instead of having roundoff-sized corrections applied.
    Re-projecting a projected field therefore reproduces it bit for bit,
    which is what makes the idempotence contract testable exactly.
    """
    k1, k2, k3 = grid.k_full
    p1, p2, p3 = grid.leray_p
    return kernels.leray_snap(
        k1, k2, k3, grid.k_sq,
        p1, p2, p3,
        np.ascontiguousarray(u1h), np.ascontiguousarray(u2h), np.ascontiguousarray(u3h),
        _LERAY_SNAP,
    )


def leray_project(u1, u2=None, u3=None):
    """Helmholtz projection onto divergence-free fields."""
    if isinstance(u1, VelocityField):
        comps = u1.components
    else:
        comps = (u1, u2, u3)
    grid = _require_same_grid(*comps)
    p1, p2, p3 = leray_project_hat(grid, *(c.spectral for c in comps))
    return VelocityField(
        ScalarField.from_spectral(grid, p1),
        ScalarField.from_spectral(grid, p2),
        ScalarField.from_spectral(grid, p3),
    )


def divergence_residual(u):
    """Relative spectral divergence magnitude, scaled by the H^1 norm."""
    div = bessel_norm(divergence(u), 0)
    scale = bessel_norm(u, 1)
    return div / scale if scale > 0.0 else div


# ---------------------------------------------------------------------------
# truncation, mollification, dealiased products
# ---------------------------------------------------------------------------

def _map_spectral(f, mult):
    if isinstance(f, VelocityField):
        return VelocityField(*(_map_spectral(c, mult) for c in f.components))
    return ScalarField.from_spectral(f.grid, mult * f.spectral)


def truncate(f, k, annulus=False):
    """Frequency truncation: zero |xi| > k, and |xi| < 1/k when annulus is on."""
    grid = _component_fields(f)[0].grid
    return _map_spectral(f, grid.ball_mask(k, annulus=annulus))


def mollify(f, eps):
    """Heat-kernel mollifier exp(-eps^2 |xi|^2); eps = 0 is the identity."""
    if eps < 0.0:
        raise ValueError(f"mollifier width must be nonnegative, got {eps}")
    if eps == 0.0:
        return f
    grid = _component_fields(f)[0].grid
    return _map_spectral(f, grid.mollifier(eps))


def mollify_hat(grid, fh, eps):
    if eps == 0.0:
        return fh
    return grid.mollifier(eps) * fh


def _pad_embed_full_axis(arr, axis):
    n = arr.shape[axis]
    shape = list(arr.shape)
    shape[axis] = 2 * n
    out = np.zeros(shape, dtype=arr.dtype)
    idx_src = [slice(None)] * arr.ndim
    idx_dst = [slice(None)] * arr.ndim

    idx_src[axis] = slice(0, n // 2)
    idx_dst[axis] = slice(0, n // 2)
    out[tuple(idx_dst)] = arr[tuple(idx_src)]

    # the unpaired Nyquist coefficient splits evenly between +N/2 and -N/2
    idx_src[axis] = n // 2
    half = arr[tuple(idx_src)] * 0.5
    idx_dst[axis] = n // 2
    out[tuple(idx_dst)] = half
    idx_dst[axis] = 2 * n - n // 2
    out[tuple(idx_dst)] = half

    idx_src[axis] = slice(n // 2 + 1, n)
    idx_dst[axis] = slice(2 * n - n // 2 + 1, 2 * n)
    out[tuple(idx_dst)] = arr[tuple(idx_src)]
    return out


def _pad_extract_full_axis(arr, axis, n):
    idx = [slice(None)] * arr.ndim
    pieces = []
    idx[axis] = slice(0, n // 2)
    pieces.append(arr[tuple(idx)])
    idx_a = [slice(None)] * arr.ndim
    idx_a[axis] = slice(n // 2, n // 2 + 1)
    idx_b = [slice(None)] * arr.ndim
    idx_b[axis] = slice(2 * n - n // 2, 2 * n - n // 2 + 1)
    pieces.append(arr[tuple(idx_a)] + arr[tuple(idx_b)])
    idx[axis] = slice(2 * n - n // 2 + 1, 2 * n)
    pieces.append(arr[tuple(idx)])
    return np.concatenate(pieces, axis=axis)


def _pad_double_product(f, g):
    """Multiply on a doubled grid; exact when the product band stays below
    the original Nyquist on every axis."""
    grid = f.grid
    n1, n2, n3 = grid.shape
    big_shape = (2 * n1, 2 * n2, 2 * n3)

    def embed(fh):
        big = _pad_embed_full_axis(fh, 0)
        big = _pad_embed_full_axis(big, 1)
        out = np.zeros((2 * n1, 2 * n2, n3 + 1), dtype=fh.dtype)
        out[:, :, : n3 // 2 + 1] = big
        return out * 8.0  # keep sample values when the grid count is 8x larger

    fb = _fft.irfftn(embed(f.spectral), s=big_shape)
    gb = _fft.irfftn(embed(g.spectral), s=big_shape)
    ph = _fft.rfftn(fb * gb)
    ph = ph[:, :, : n3 // 2 + 1]
    ph = _pad_extract_full_axis(ph, 0, n1)
    ph = _pad_extract_full_axis(ph, 1, n2)
    return ScalarField.from_spectral(grid, ph / 8.0)


def resample_double(f):
    """The same trigonometric polynomial sampled on a doubled grid.

    Exact for any field (the embedding splits unpaired Nyquist modes), and
    useful for quadrature of compositions like 1/f whose spectra outrun the
    native grid.
    """
    grid = f.grid
    n1, n2, n3 = grid.shape
    fh = _pad_embed_full_axis(f.spectral, 0)
    fh = _pad_embed_full_axis(fh, 1)
    out = np.zeros((2 * n1, 2 * n2, n3 + 1), dtype=fh.dtype)
    out[:, :, : n3 // 2 + 1] = fh
    big_grid = TorusGrid((2 * n1, 2 * n2, 2 * n3), grid.box_length)
    return ScalarField.from_spectral(big_grid, out * 8.0)


def dealiased_product(f, g, rule="two-thirds"):
    """Pointwise product of two scalar fields with anti-aliasing treatment.

    ``two-thirds`` masks both inputs and the result with the standard per-axis
    two-thirds mask; ``pad-double`` evaluates the product on a doubled grid;
    ``none`` multiplies the raw samples.
    """
    grid = _require_same_grid(f, g)
    if rule == "none":
        return ScalarField.from_samples(grid, f.samples * g.samples)
    if rule == "two-thirds":
        mask = grid.two_thirds_mask
        ff = grid.irfftn(mask * f.spectral)
        gg = grid.irfftn(mask * g.spectral)
        return ScalarField.from_spectral(grid, mask * grid.rfftn(ff * gg))
    if rule == "pad-double":
        return _pad_double_product(f, g)
    raise ValueError(f"unknown dealias rule {rule!r}")
