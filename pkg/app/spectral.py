# File: app/spectral.py
"""
Transforms between the centered mode cube and physical grids, projections,
the free Schrödinger propagator and the power nonlinearity.

Physical values use the normalised torus measure: a coefficient array is placed
at index n mod M on an M^d grid and inverse-transformed with an M^d factor, so
u(x) = sum û(n) e^{2πi n·x/α} holds exactly at the grid nodes.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from models import NonFiniteError, NonlinearitySpec, SpectralError, SpectralField, TorusSpec

logger = logging.getLogger(__name__)


def dealias_pad(k: int) -> int:
    """Pad factor making a degree 2k+2 mean exact: ceil((2k+2)/2)."""
    return k + 1


def _mode_indices(spec: TorusSpec, size: int):
    idx = np.mod(spec.axis_modes, size)
    return np.ix_(*([idx] * spec.d))


def _grid_size(spec: TorusSpec, pad: int) -> int:
    if int(pad) != pad or pad < 1:
        raise SpectralError(f"pad factor must be a positive integer, got {pad}")
    return int(pad) * spec.side


def place(coeffs: np.ndarray, spec: TorusSpec, size: int) -> np.ndarray:
    """Zero-padded spectrum of shape (size,)*d holding `coeffs` at n mod size."""
    spectrum = np.zeros((size,) * spec.d, dtype=np.complex128)
    spectrum[_mode_indices(spec, size)] = coeffs
    return spectrum


def to_physical(f: SpectralField, pad: int = 1) -> np.ndarray:
    size = _grid_size(f.spec, pad)
    spectrum = place(f.coeffs, f.spec, size)
    return np.fft.ifftn(spectrum) * size ** f.spec.d


def to_spectral(grid: np.ndarray, spec: TorusSpec) -> SpectralField:
    """Coefficients on the mode set of `spec`; the pad factor is read off the grid shape."""
    grid = np.asarray(grid, dtype=np.complex128)
    if grid.ndim != spec.d or len(set(grid.shape)) != 1:
        raise SpectralError(f"grid shape {grid.shape} is not a {spec.d}-dimensional cube")
    size = grid.shape[0]
    if size % spec.side:
        raise SpectralError(f"grid size {size} is not a multiple of {spec.side}")
    if not np.all(np.isfinite(grid)):
        raise NonFiniteError("grid values must be finite")
    spectrum = np.fft.fftn(grid) / size ** spec.d
    return SpectralField(spec, spectrum[_mode_indices(spec, size)])


def physical_nodes(spec: TorusSpec, pad: int = 1) -> list[np.ndarray]:
    """Grid node coordinates x_j = alpha_j * i / M, broadcastable per axis."""
    size = _grid_size(spec, pad)
    axes = [spec.periods[j] * np.arange(size) / size for j in range(spec.d)]
    return np.meshgrid(*axes, indexing="ij")


def ball_mask(spec: TorusSpec, radius: float) -> np.ndarray:
    return spec.norm <= radius + 1e-12


def project_leq(f: SpectralField, radius: float) -> SpectralField:
    """Keep the modes with Euclidean |n| <= radius."""
    if radius < 0:
        raise SpectralError(f"projection radius must be non-negative, got {radius}")
    return f.replace(np.where(ball_mask(f.spec, radius), f.coeffs, 0.0))


def semigroup_phases(spec: TorusSpec, t: float) -> np.ndarray:
    return np.exp(1j * t * spec.omega)


def apply_semigroup(f: SpectralField, t: float) -> SpectralField:
    """Free propagator S(t): multiply û(n) by e^{itω(n)}."""
    if not math.isfinite(t):
        raise SpectralError(f"propagation time must be finite, got {t}")
    return f.replace(f.coeffs * semigroup_phases(f.spec, t))


def nonlinear_values(grid: np.ndarray, nl: NonlinearitySpec) -> np.ndarray:
    return nl.sign.factor * np.abs(grid) ** (2 * nl.k) * grid


def nonlinear_term(f: SpectralField, nl: NonlinearitySpec, dealias: bool = True) -> SpectralField:
    """Mode-set coefficients of sign·|u|^{2k}u computed on a (padded) grid."""
    if not nl.enabled:
        return SpectralField.zeros(f.spec)
    pad = dealias_pad(nl.k) if dealias else 1
    grid = to_physical(f, pad)
    return to_spectral(nonlinear_values(grid, nl), f.spec)


def phase_rotation(grid: np.ndarray, nl: NonlinearitySpec, dt: float) -> np.ndarray:
    """Pointwise flow of i∂_t u = -sign|u|^{2k}u; |u| is invariant."""
    if not nl.enabled:
        return grid
    return grid * np.exp(1j * nl.sign.factor * dt * np.abs(grid) ** (2 * nl.k))


def nonlinear_phase_flow(f: SpectralField, nl: NonlinearitySpec, dt: float, dealias: bool = True) -> SpectralField:
    if dt == 0 or not nl.enabled:
        return f
    pad = dealias_pad(nl.k) if dealias else 1
    return to_spectral(phase_rotation(to_physical(f, pad), nl, dt), f.spec)


def embed(f: SpectralField, cutoff: int) -> SpectralField:
    """Zero-extend `f` onto the larger cube |n_j| <= cutoff."""
    if cutoff < f.spec.cutoff:
        raise SpectralError(f"cannot embed cutoff {f.spec.cutoff} into {cutoff}")
    target = f.spec.enlarged(cutoff)
    offset = cutoff - f.spec.cutoff
    coeffs = np.zeros(target.shape, dtype=np.complex128)
    coeffs[(slice(offset, offset + f.spec.side),) * f.spec.d] = f.coeffs
    return SpectralField(target, coeffs)


def restrict(f: SpectralField, cutoff: int) -> SpectralField:
    """Truncate `f` to the smaller cube |n_j| <= cutoff."""
    if cutoff > f.spec.cutoff:
        raise SpectralError(f"cannot restrict cutoff {f.spec.cutoff} to {cutoff}")
    offset = f.spec.cutoff - cutoff
    side = 2 * cutoff + 1
    return SpectralField(f.spec.enlarged(cutoff), f.coeffs[(slice(offset, offset + side),) * f.spec.d])


def product_field(fields: list[SpectralField], conjugate: list[bool] | None = None) -> SpectralField:
    """
    Exact product of m band-limited fields (optionally conjugated), returned on
    the enlarged cube of cutoff m·N where it is alias-free.
    """
    if not fields:
        raise SpectralError("product of an empty list")
    spec = fields[0].spec
    if any(f.spec != spec for f in fields):
        raise SpectralError("product factors must share one TorusSpec")
    conjugate = conjugate or [False] * len(fields)
    if len(conjugate) != len(fields):
        raise SpectralError("conjugate flags must match the number of factors")
    cutoff = len(fields) * spec.cutoff
    grid = np.ones((2 * cutoff + 1,) * spec.d, dtype=np.complex128)
    for f, conj in zip(fields, conjugate):
        values = to_physical(embed(f, cutoff))
        grid *= np.conj(values) if conj else values
    return to_spectral(grid, spec.enlarged(cutoff))


def truncated_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Coefficients of f·g on the mode set of f, computed alias-free on a pad-2 grid."""
    if f.spec != g.spec:
        raise SpectralError("product factors must share one TorusSpec")
    return to_spectral(to_physical(f, 2) * to_physical(g, 2), f.spec)


def random_field(spec: TorusSpec, rng: np.random.Generator, gamma: float = 0.0) -> SpectralField:
    """Complex Gaussian coefficients with standard deviation <n>^{-gamma}."""
    z = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    return SpectralField(spec, z / math.sqrt(2.0) * spec.bracket ** (-gamma))
