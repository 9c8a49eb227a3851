"""Periodic-box spectral infrastructure.

Grids, Fourier multipliers, differential operators, Helmholtz/Leray
projections, Littlewood-Paley blocks, and Sobolev/Besov/mixed-norm
evaluation.  Everything downstream (dispersion probes, fluid solvers,
convergence studies) is built on the operators defined here.

Conventions
-----------
* Grid points are x_i = i * (L/N), i = 0..N-1, per axis.
* Wavenumbers are xi_k = 2*pi*k/L with k in [-N/2, N/2) (numpy fftfreq
  layout); N must be even.
* Transforms use numpy's unnormalized forward FFT; Fourier-series
  coefficients are fft(values)/N^d where needed for norms.
* Integrals are cell sums times the cell volume (exact for band-limited
  integrands on a periodic box).
* Zero mode under inverse operators ((-Delta)^{-1/2}, Delta^{-1} div, ...)
  is mapped to zero.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SpectralGrid",
    "ScalarField",
    "VectorField",
    "FrequencyShell",
    "EmptyShellWarning",
    "smooth_step",
    "lowpass_profile",
    "dyadic_bump",
    "apply_multiplier",
    "gradient",
    "divergence",
    "laplacian",
    "helmholtz_Q",
    "helmholtz_P",
    "lp_project",
    "lp_lowpass",
    "besov_shells",
    "l2_norm",
    "lq_norm",
    "sobolev_norm",
    "besov_norm",
    "mixed_norm",
]


class EmptyShellWarning(UserWarning):
    """A dyadic shell does not intersect the wavenumber lattice."""


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

class SpectralGrid:
    """Uniform periodic grid with cached wavenumber lattice.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    box_length : float or sequence of float
        Period L per axis.
    points : int or sequence of int
        Number of grid points N per axis; must be even.
    """

    def __init__(self, dim, box_length, points):
        if dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
        self.dim = int(dim)
        lengths = np.broadcast_to(np.asarray(box_length, dtype=float), (dim,))
        npts = np.broadcast_to(np.asarray(points, dtype=int), (dim,))
        if np.any(lengths <= 0):
            raise ValueError("box_length must be positive")
        if np.any(npts <= 0) or np.any(npts % 2 != 0):
            raise ValueError("points must be positive and even")
        self.lengths = tuple(float(l) for l in lengths)
        self.shape = tuple(int(n) for n in npts)

    # -- geometry -----------------------------------------------------------

    @cached_property
    def dx(self):
        return tuple(l / n for l, n in zip(self.lengths, self.shape))

    @cached_property
    def cell_volume(self):
        return float(np.prod(self.dx))

    @cached_property
    def volume(self):
        return float(np.prod(self.lengths))

    def x_mesh(self):
        """Coordinate meshes, shape (dim, *shape)."""
        axes = [np.arange(n) * d for n, d in zip(self.shape, self.dx)]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    # -- wavenumbers ----------------------------------------------------------

    @cached_property
    def k_axes(self):
        return tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=l / n)
            for n, l in zip(self.shape, self.lengths)
        )

    @cached_property
    def k_mesh(self):
        """Wavenumber meshes, shape (dim, *shape)."""
        return np.array(np.meshgrid(*self.k_axes, indexing="ij"))

    @cached_property
    def k2(self):
        return np.sum(self.k_mesh**2, axis=0)

    @cached_property
    def kmag(self):
        return np.sqrt(self.k2)

    @cached_property
    def kmax(self):
        """Largest representable |xi| along a single axis (Nyquist)."""
        return max(np.pi * n / l for n, l in zip(self.shape, self.lengths))

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: True on retained (alias-free) modes."""
        mask = np.ones(self.shape, dtype=bool)
        for ax, (n, k_ax) in enumerate(zip(self.shape, self.k_axes)):
            cut = (2.0 / 3.0) * np.pi * n / self.lengths[ax]
            shape = [1] * self.dim
            shape[ax] = n
            mask &= np.abs(k_ax).reshape(shape) <= cut + 1e-12
        return mask

    # -- transforms -----------------------------------------------------------

    def fft(self, values):
        return np.fft.fftn(values, axes=tuple(range(-self.dim, 0)))

    def ifft(self, values):
        return np.fft.ifftn(values, axes=tuple(range(-self.dim, 0)))

    def ifft_real(self, values):
        return self.ifft(values).real

    def integrate(self, values):
        """Cell-sum quadrature of a sampled integrand."""
        return np.sum(values) * self.cell_volume

    def __repr__(self):
        return f"SpectralGrid(dim={self.dim}, L={self.lengths}, N={self.shape})"

    def __eq__(self, other):
        return (
            isinstance(other, SpectralGrid)
            and self.dim == other.dim
            and self.lengths == other.lengths
            and self.shape == other.shape
        )

    def __hash__(self):
        return hash((self.dim, self.lengths, self.shape))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Immutable scalar samples on a grid; complex-valuedness is carried by
    the dtype of ``values``."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        if tuple(self.values.shape) != self.grid.shape:
            raise ValueError("values shape does not match grid")

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def spectrum(self):
        return self.grid.fft(self.values)


@dataclass(frozen=True)
class VectorField:
    """Immutable vector samples; values has shape (dim, *grid.shape)."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        if tuple(self.values.shape) != (self.grid.dim,) + self.grid.shape:
            raise ValueError("component count or shape does not match grid")

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def spectrum(self):
        return self.grid.fft(self.values)


def _same_kind(template, grid, values):
    if isinstance(template, ScalarField):
        return ScalarField(grid, values)
    return VectorField(grid, values)


def _realify(out, input_real, scale):
    """Cast back to real when the input was real and the imaginary residue is
    at spectral-roundoff level; otherwise keep the complex result."""
    if not input_real:
        return out
    resid = np.max(np.abs(out.imag))
    if resid <= 1e-9 * (scale + 1e-300):
        return out.real.copy()
    return out


def _scale_of(f, out):
    return np.max(np.abs(out)) + np.max(np.abs(f.values))


# ---------------------------------------------------------------------------
# multipliers and differential operators
# ---------------------------------------------------------------------------

def apply_multiplier(f, symbol, zero_mode=None):
    """Apply a Fourier multiplier to a scalar or vector field.

    Parameters
    ----------
    f : ScalarField or VectorField
    symbol : callable
        Maps the wavenumber mesh (shape (dim, *grid.shape)) to a complex
        array over grid.shape.  Applied componentwise to vector fields.
    zero_mode : complex, optional
        Declared value of the symbol at xi = 0.  Required whenever the
        symbol itself is not finite there.

    Returns
    -------
    Field of the same kind with spectrum symbol * spectrum(f).
    """
    grid = f.grid
    sym = np.asarray(symbol(grid.k_mesh), dtype=complex)
    if sym.shape != grid.shape:
        raise ValueError("symbol must evaluate to one value per lattice node")
    origin = (0,) * grid.dim
    if zero_mode is not None:
        sym = sym.copy()
        sym[origin] = zero_mode
    finite = np.isfinite(sym.real) & np.isfinite(sym.imag)
    if not finite[origin]:
        raise ValueError(
            "symbol is singular at the zero mode and no zero-mode rule was declared"
        )
    if not np.all(finite):
        raise ValueError("symbol takes non-finite values on nonzero modes")
    spec = f.spectrum() * sym
    out = grid.ifft(spec)
    out = _realify(out, not f.is_complex, _scale_of(f, out))
    return _same_kind(f, grid, out)


def gradient(f):
    """Spectral gradient of a scalar field."""
    grid = f.grid
    spec = f.spectrum()
    out = np.empty((grid.dim,) + grid.shape, dtype=complex)
    for ax in range(grid.dim):
        out[ax] = grid.ifft(1j * grid.k_mesh[ax] * spec)
    out = _realify(out, not f.is_complex, _scale_of(f, out))
    return VectorField(grid, out)


def divergence(v):
    """Spectral divergence of a vector field."""
    grid = v.grid
    spec = v.spectrum()
    acc = np.zeros(grid.shape, dtype=complex)
    for ax in range(grid.dim):
        acc += 1j * grid.k_mesh[ax] * spec[ax]
    out = grid.ifft(acc)
    out = _realify(out, not v.is_complex, _scale_of(v, out))
    return ScalarField(grid, out)


def laplacian(f):
    """Spectral Laplacian of a scalar field."""
    grid = f.grid
    out = grid.ifft(-grid.k2 * f.spectrum())
    out = _realify(out, not f.is_complex, _scale_of(f, out))
    return ScalarField(grid, out)


def _q_project_spec(grid, spec):
    """Gradient-part projection xi xi^T/|xi|^2 in spectral space."""
    k = grid.k_mesh
    k2 = grid.k2.copy()
    origin = (0,) * grid.dim
    k2[origin] = 1.0
    dot = np.zeros(grid.shape, dtype=complex)
    for ax in range(grid.dim):
        dot += k[ax] * spec[ax]
    dot /= k2
    dot[origin] = 0.0
    out = np.empty_like(spec)
    for ax in range(grid.dim):
        out[ax] = k[ax] * dot
    return out


def helmholtz_Q(v):
    """Projection onto gradient vector fields, Q = grad Delta^{-1} div."""
    grid = v.grid
    if grid.dim < 2:
        raise ValueError("Helmholtz decomposition requires dim >= 2")
    spec = _q_project_spec(grid, v.spectrum())
    out = grid.ifft(spec)
    out = _realify(out, not v.is_complex, _scale_of(v, out))
    return VectorField(grid, out)


def helmholtz_P(v):
    """Leray projection onto divergence-free fields, P = I - Q."""
    grid = v.grid
    if grid.dim < 2:
        raise ValueError("Helmholtz decomposition requires dim >= 2")
    spec = v.spectrum()
    spec = spec - _q_project_spec(grid, spec)
    out = grid.ifft(spec)
    out = _realify(out, not v.is_complex, _scale_of(v, out))
    return VectorField(grid, out)


# ---------------------------------------------------------------------------
# Littlewood-Paley blocks
# ---------------------------------------------------------------------------

def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, strictly monotone between.

    Built from f(x) = exp(-1/x); this exact profile is part of the package's
    reproducibility contract (all Besov norms depend on it).
    """
    x = np.asarray(x, dtype=float)
    lo = x <= 0.0
    hi = x >= 1.0
    mid = ~(lo | hi)
    out = np.zeros_like(x)
    out[hi] = 1.0
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    if out.ndim == 0:
        return float(out)
    return out


def lowpass_profile(r):
    """eta(r): 1 for r <= 1, 0 for r >= 2, smooth and decreasing between."""
    return 1.0 - smooth_step(np.asarray(r, dtype=float) - 1.0)


def dyadic_bump(r):
    """chi(r) = eta(r) - eta(2r): supported in [1/2, 2], and the dilates
    chi(r/2^j) together with eta(r) resolve the identity."""
    r = np.asarray(r, dtype=float)
    return lowpass_profile(r) - lowpass_profile(2.0 * r)


@dataclass(frozen=True)
class FrequencyShell:
    """Dyadic annulus 2^{j-1} <= |xi| <= 2^{j+1}."""

    j: int

    @property
    def band(self):
        lo = 2.0 ** (self.j - 1)
        return (lo, 4.0 * lo)


def lp_project(f, shell):
    """Littlewood-Paley block: multiply the spectrum by chi(|xi|/2^j).

    Warns (EmptyShellWarning) and returns the zero field when the widened
    band misses the lattice entirely.
    """
    grid = f.grid
    scale = 2.0 ** float(shell.j)
    sym = dyadic_bump(grid.kmag / scale)
    if not np.any(sym > 0.0):
        warnings.warn(
            f"shell j={shell.j} does not intersect the wavenumber lattice",
            EmptyShellWarning,
        )
    out = grid.ifft(f.spectrum() * sym)
    out = _realify(out, not f.is_complex, _scale_of(f, out))
    return _same_kind(f, grid, out)


def lp_lowpass(f, cutoff):
    """Smooth projection onto frequencies |xi| <= O(cutoff) via eta(|xi|/cutoff)."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    grid = f.grid
    sym = lowpass_profile(grid.kmag / float(cutoff))
    out = grid.ifft(f.spectrum() * sym)
    out = _realify(out, not f.is_complex, _scale_of(f, out))
    return _same_kind(f, grid, out)


def besov_shells(grid):
    """Shell indices j >= 1 whose bands intersect the lattice; together with
    the unit-scale lowpass block they resolve the identity on the grid."""
    jmax = int(np.ceil(np.log2(max(grid.kmax, 1.0)))) + 1
    return [FrequencyShell(j) for j in range(1, jmax + 1)]


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _pointwise_abs(f):
    if isinstance(f, VectorField):
        return np.sqrt(np.sum(np.abs(f.values) ** 2, axis=0))
    return np.abs(f.values)


def l2_norm(f):
    a = _pointwise_abs(f)
    return float(np.sqrt(np.sum(a**2) * f.grid.cell_volume))


def lq_norm(f, q):
    """L^q norm on the box; q = inf gives the grid sup."""
    q = float(q)
    if q < 1:
        raise ValueError("q must be in [1, inf]")
    a = _pointwise_abs(f)
    if np.isinf(q):
        return float(np.max(a))
    return float((np.sum(a**q) * f.grid.cell_volume) ** (1.0 / q))


def sobolev_norm(f, s):
    """Non-homogeneous H^s norm via (1 + |xi|^2)^{s/2} weights and Parseval."""
    grid = f.grid
    spec = f.spectrum()
    npts = float(np.prod(grid.shape))
    weight = (1.0 + grid.k2) ** s
    total = np.sum(weight * np.abs(spec) ** 2) / npts**2 * grid.volume
    return float(np.sqrt(total))


def besov_norm(f, s, q, r):
    """Non-homogeneous Besov norm B^s_{q,r} from the fixed dyadic ladder.

    ell^r sum over blocks of 2^{js} * L^q block norms; block j = 0 is the
    unit-scale lowpass.
    """
    q, r = float(q), float(r)
    if q < 1 or r < 1:
        raise ValueError("integrability and summability must be in [1, inf]")
    pieces = [lq_norm(lp_lowpass(f, 1.0), q)]
    weights = [1.0]
    for shell in besov_shells(f.grid):
        pieces.append(lq_norm(lp_project(f, shell), q))
        weights.append(2.0 ** (shell.j * s))
    terms = np.asarray(pieces) * np.asarray(weights)
    if np.isinf(r):
        return float(np.max(terms))
    return float(np.sum(terms**r) ** (1.0 / r))


def mixed_norm(times, fields, p, spatial):
    """Mixed space-time norm L^p_t X on a uniform time grid.

    Parameters
    ----------
    times : array of sample times (strictly increasing, uniform).
    fields : sequence of fields (or precomputed spatial norms).
    p : temporal exponent in [1, inf].
    spatial : callable computing the spatial norm of one field; ignored when
        ``fields`` is already an array of norms.

    Temporal integration is trapezoidal.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("need at least two time samples")
    dts = np.diff(times)
    if np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("time grid must be uniform and increasing")
    p = float(p)
    if p < 1:
        raise ValueError("p must be in [1, inf]")
    if isinstance(fields, np.ndarray) and fields.ndim == 1:
        norms = fields.astype(float)
    else:
        norms = np.array([spatial(f) for f in fields], dtype=float)
    if len(norms) != len(times):
        raise ValueError("one field per time sample required")
    if np.isinf(p):
        return float(np.max(norms))
    return float(np.trapezoid(norms**p, times) ** (1.0 / p))
