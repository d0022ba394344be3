"""Constructors for the sampled fields used by experiments and tests."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .spectral import PHYSICAL, SPECTRAL, ComplexField, GridSpec, inverse_transform


def field_from_function(grid: GridSpec, fn) -> ComplexField:
    """Sample ``fn`` (callable on the coordinate meshes) as a physical field."""
    mesh = grid.coordinate_mesh()
    vals = np.asarray(fn(*mesh), dtype=np.complex128)
    return ComplexField(grid, np.broadcast_to(vals, grid.shape), PHYSICAL)


def gaussian_field(grid: GridSpec, amplitude: float = 1.0, width: float = 1.0,
                   center=None) -> ComplexField:
    """amplitude * exp(-|x - center|^2 / (2 width^2)) on the grid."""
    if width <= 0.0:
        raise DomainError("width must be positive")
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    if c.shape != (grid.d,):
        raise DomainError(f"center must have {grid.d} components")
    mesh = grid.coordinate_mesh()
    r2 = sum((m - cj) ** 2 for m, cj in zip(mesh, c))
    vals = amplitude * np.exp(-r2 / (2.0 * width ** 2))
    return ComplexField(grid, np.broadcast_to(vals, grid.shape), PHYSICAL)


def plane_wave(grid: GridSpec, mode: tuple[int, ...], amplitude: float = 1.0) -> ComplexField:
    """exp(i xi_m . x) for the grid frequency with integer index ``mode``."""
    mode = tuple(int(k) for k in mode)
    if len(mode) != grid.d:
        raise DomainError(f"mode must have {grid.d} components")
    for j, k in enumerate(mode):
        if not -grid.n[j] // 2 <= k < grid.n[j] // 2:
            raise DomainError(f"mode[{j}] = {k} outside the resolved range")
    mesh = grid.coordinate_mesh()
    phase = sum((2.0 * math.pi * k / grid.box_length[j]) * mesh[j]
                for j, k in enumerate(mode))
    vals = amplitude * np.exp(1j * phase)
    return ComplexField(grid, np.broadcast_to(vals, grid.shape), PHYSICAL)


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


def random_band_limited(grid: GridSpec, seed: int, radius: float,
                        amplitude: float = 1.0) -> ComplexField:
    """Seeded random field with spectrum supported in the ball |xi| <= radius.

    Each spectral coefficient inside the ball is an independent standard
    complex Gaussian scaled by ``amplitude``. Coefficients are keyed by the
    integer mode vector and the seed only, so the same (seed, radius, box
    lengths) reproduce the identical trigonometric polynomial on any
    refinement of the grid. That makes grid-refinement comparisons meaningful.
    """
    if radius <= 0.0:
        raise DomainError("radius must be positive")
    for nyq in grid.nyquist:
        if radius > nyq:
            raise DomainError(f"radius {radius} exceeds grid Nyquist frequency {nyq}")
    spec = np.zeros(grid.shape, dtype=np.complex128)
    # integer mode ranges with |2 pi m / L| <= radius per axis
    axis_modes = []
    for j in range(grid.d):
        mmax = int(math.floor(radius * grid.box_length[j] / (2.0 * math.pi)))
        mmax = min(mmax, grid.n[j] // 2 - 1)
        axis_modes.append(range(-mmax, mmax + 1))
    freq_step = [2.0 * math.pi / L for L in grid.box_length]
    for mode in np.ndindex(*(len(r) for r in axis_modes)):
        mvec = tuple(axis_modes[j][mode[j]] for j in range(grid.d))
        xi2 = sum((freq_step[j] * mvec[j]) ** 2 for j in range(grid.d))
        if xi2 > radius * radius:
            continue
        rng = np.random.default_rng([int(seed)] + [_zigzag(k) for k in mvec])
        re, im = rng.standard_normal(2)
        idx = tuple(mvec[j] % grid.n[j] for j in range(grid.d))
        spec[idx] = amplitude * (re + 1j * im) / math.sqrt(2.0)
    return inverse_transform(ComplexField(grid, spec, SPECTRAL))
