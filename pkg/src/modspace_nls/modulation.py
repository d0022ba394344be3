"""Frequency-uniform decomposition and modulation-space norms.

A smooth bump is periodized over the integer frequency lattice to produce a
partition of unity {sigma_k}; the band projections F^{-1} sigma_k F localize a
field to the unit frequency cube around lattice point k. Modulation norms take
the L^p norm of every band, weight by the Japanese bracket (1+|k|)^s, and sum
in l^q over the lattice. The construction is separable across axes, so all
band bookkeeping reduces to one table of normalized bump values per axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DomainError, ResolutionError, TruncationError
from .spectral import (
    PHYSICAL,
    SPECTRAL,
    ComplexField,
    GridSpec,
    ModIndex,
    to_spectral,
)

# Decompositions dropping more relative spectral mass than this are flagged.
DECOMPOSITION_WARN_RESIDUAL = 1e-12
# Norm evaluations refuse to proceed past this residual.
NORM_MAX_RESIDUAL = 1e-10

_CHUNK_BYTES = 1 << 27  # scratch budget for batched band transforms


def smooth_bump(x) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - x^2)) on (-1, 1), zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    y = 1.0 - x * x
    inside = (np.abs(x) < 1.0) & (y > 0.0)
    out[inside] = np.exp(1.0 - 1.0 / y[inside])
    return out


def normalized_bump(x) -> np.ndarray:
    """The bump divided by the sum of its integer translates at the same point.

    This is the one-axis factor of the window; translates of it over the
    integers sum to one identically.
    """
    x = np.asarray(x, dtype=float)
    base = np.floor(x)
    denom = np.zeros_like(x)
    for off in (-1.0, 0.0, 1.0, 2.0):
        denom += smooth_bump(x - (base + off))
    return smooth_bump(x) / denom


def window_profile(xi) -> np.ndarray:
    """Continuum evaluation of the central window sigma_0.

    ``xi`` has shape (..., d); the result drops the last axis. Used by tests
    as a grid-independent oracle for the measured lower bound.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    out = np.ones(xi.shape[:-1])
    for j in range(xi.shape[-1]):
        out = out * normalized_bump(xi[..., j])
    return out


@dataclass(frozen=True)
class Window:
    """Partition of unity on the frequency lattice, tabulated on one grid.

    ``axis_k[j]`` lists the live integer lattice values along axis j and
    ``axis_weights[j]`` the matching (K_j, n_j) table of normalized bump
    values at the grid frequencies. sigma_k is the outer product of one row
    per axis. ``lower_bound_c`` is the measured minimum of sigma_0 over grid
    nodes in the closed unit cube at the origin.
    """

    grid: GridSpec
    axis_k: tuple
    axis_weights: tuple
    lower_bound_c: float
    partition_residual: float

    @property
    def d(self) -> int:
        return self.grid.d

    def k_range(self, axis: int) -> tuple[int, int]:
        ks = self.axis_k[axis]
        return int(ks[0]), int(ks[-1])

    def contains(self, k) -> bool:
        k = _as_lattice(k, self.d)
        return all(self.axis_k[j][0] <= k[j] <= self.axis_k[j][-1] for j in range(self.d))

    def row(self, axis: int, k: int) -> np.ndarray:
        ks = self.axis_k[axis]
        if not ks[0] <= k <= ks[-1]:
            raise DomainError(f"lattice index {k} outside window range on axis {axis}")
        return self.axis_weights[axis][int(k) - int(ks[0])]

    def sigma(self, k) -> np.ndarray:
        """Symbol of the band projection at lattice point k, on the full grid."""
        k = _as_lattice(k, self.d)
        rows = [self.row(j, k[j]) for j in range(self.d)]
        return reduce(np.multiply.outer, rows) if self.d > 1 else rows[0].copy()

    def lattice(self, kmax: int | None = None) -> list[tuple[int, ...]]:
        sels = _axis_selection(self, kmax)
        out = []
        for idx in np.ndindex(*(len(ks) for ks, _ in sels)):
            out.append(tuple(int(sels[j][0][idx[j]]) for j in range(self.d)))
        return out


def _as_lattice(k, d: int) -> tuple[int, ...]:
    if np.isscalar(k):
        k = (k,)
    k = tuple(int(v) for v in k)
    if len(k) != d:
        raise DomainError(f"lattice index needs {d} components")
    return k


def build_window(d: int, grid: GridSpec) -> Window:
    """Construct the partition-of-unity window for a grid.

    Requires every axis to resolve the central bands: Nyquist frequency at
    least 2*sqrt(d) and frequency spacing at most 1/2.
    """
    if d != grid.d:
        raise DomainError(f"window dimension {d} does not match grid dimension {grid.d}")
    root_d = math.sqrt(d)
    for j in range(d):
        nyq = grid.nyquist[j]
        if nyq < 2.0 * root_d:
            raise ResolutionError(
                f"axis {j}: Nyquist frequency {nyq:.4g} below 2*sqrt(d) = {2 * root_d:.4g}")
        dxi = 2.0 * math.pi / grid.box_length[j]
        if dxi > 0.5:
            raise ResolutionError(
                f"axis {j}: frequency spacing {dxi:.3g} too coarse to sample unit bands")

    axis_k, axis_weights = [], []
    axis_sums = []
    c_value = 1.0
    for j in range(d):
        xi = grid.frequencies(j)
        kmin = int(math.floor(xi.min())) - 1
        kmax = int(math.ceil(xi.max())) + 1
        ks = np.arange(kmin, kmax + 1)
        raw = smooth_bump(xi[None, :] - ks[:, None])
        denom = raw.sum(axis=0)
        weights = raw / denom
        live = np.flatnonzero(weights.any(axis=1))
        ks = ks[live[0]:live[-1] + 1]
        weights = weights[live[0]:live[-1] + 1]
        weights.flags.writeable = False
        ks.flags.writeable = False
        axis_k.append(ks)
        axis_weights.append(weights)
        axis_sums.append(weights.sum(axis=0))
        in_cube = np.abs(xi) <= 0.5 + 1e-12
        if not in_cube.any():
            raise ResolutionError(f"axis {j}: no frequency node inside the central unit cube")
        zero_row = weights[int(0 - ks[0])]
        c_value *= float(zero_row[in_cube].min())

    full = reduce(np.multiply.outer, axis_sums) if d > 1 else axis_sums[0]
    residual = float(np.max(np.abs(full - 1.0)))
    if c_value <= 0.0:
        raise ResolutionError("window lower bound vanished on the sampled unit cube")
    return Window(grid, tuple(axis_k), tuple(axis_weights),
                  lower_bound_c=c_value, partition_residual=residual)


# ---------------------------------------------------------------------------
# Band projections and decompositions
# ---------------------------------------------------------------------------

def band_project_spectral(f: ComplexField, window: Window, k) -> ComplexField:
    """sigma_k times the spectrum of ``f``, returned as a spectral field."""
    vhat = to_spectral(f).values
    return ComplexField(f.grid, window.sigma(k) * vhat, SPECTRAL)


def band_project(f: ComplexField, window: Window, k) -> ComplexField:
    """The band field around lattice point k, in physical representation."""
    spec = band_project_spectral(f, window, k)
    return ComplexField(f.grid, np.fft.ifftn(spec.values, norm="ortho"), PHYSICAL)


@dataclass
class BandDecomposition:
    """The family of band fields of one input, with its truncation bookkeeping.

    ``truncation_residual`` is the relative L^2 mass of the input that the
    retained lattice set fails to reproduce; a truncated decomposition is
    flagged, never silently accepted.
    """

    window: Window
    bands: dict
    truncation_residual: float
    truncated: bool
    kmax: int | None

    def reconstruct(self) -> ComplexField:
        grid = self.window.grid
        acc = np.zeros(grid.shape, dtype=np.complex128)
        for field in self.bands.values():
            acc += field.values
        return ComplexField(grid, acc, PHYSICAL)


def _axis_selection(window: Window, kmax: int | None):
    """Per-axis (lattice values, weight table) restricted to |k|_inf <= kmax."""
    sels = []
    for j in range(window.d):
        ks = window.axis_k[j]
        W = window.axis_weights[j]
        if kmax is not None:
            keep = np.abs(ks) <= int(kmax)
            ks = ks[keep]
            W = W[keep]
            if ks.size == 0:
                raise DomainError(f"kmax = {kmax} leaves no bands on axis {j}")
        sels.append((ks, W))
    return sels


def _coverage_deficiency(window: Window, sels) -> np.ndarray:
    sums = [W.sum(axis=0) for _, W in sels]
    full = reduce(np.multiply.outer, sums) if window.d > 1 else sums[0]
    return 1.0 - full


def _stack_residuals(vhat_stack: np.ndarray, deficiency: np.ndarray) -> np.ndarray:
    axes = tuple(range(1, vhat_stack.ndim))
    total = np.sqrt(np.sum(np.abs(vhat_stack) ** 2, axis=axes))
    miss = np.sqrt(np.sum(np.abs(vhat_stack * deficiency) ** 2, axes))
    out = np.zeros_like(total)
    nz = total > 0.0
    out[nz] = miss[nz] / total[nz]
    return out


def decompose(f: ComplexField, window: Window, kmax: int | None = None) -> BandDecomposition:
    """All band fields of ``f`` with |k|_inf <= kmax (every live band if None).

    Materializes one full-grid field per band; intended for moderate grids.
    Norm computations should go through :func:`band_lp_norms`, which streams.
    """
    if f.grid != window.grid:
        raise DomainError("field and window live on different grids")
    vhat = to_spectral(f).values
    sels = _axis_selection(window, kmax)
    deficiency = _coverage_deficiency(window, sels)
    residual = float(_stack_residuals(vhat[None], deficiency)[0])
    truncated = residual > DECOMPOSITION_WARN_RESIDUAL
    if truncated:
        warnings.warn(
            f"band decomposition truncated: relative residual {residual:.3e} "
            f"with kmax={kmax}", RuntimeWarning, stacklevel=2)
    bands = {}
    for idx in np.ndindex(*(len(ks) for ks, _ in sels)):
        k = tuple(int(sels[j][0][idx[j]]) for j in range(window.d))
        rows = [sels[j][1][idx[j]] for j in range(window.d)]
        sigma = reduce(np.multiply.outer, rows) if window.d > 1 else rows[0]
        vals = np.fft.ifftn(sigma * vhat, norm="ortho")
        bands[k] = ComplexField(f.grid, vals, PHYSICAL)
    return BandDecomposition(window, bands, residual, truncated, kmax)


# ---------------------------------------------------------------------------
# Streaming band norms
# ---------------------------------------------------------------------------

def _phys_stack_norms(block: np.ndarray, p: float, cell_volume: float, naxes: int) -> np.ndarray:
    axes = tuple(range(block.ndim - naxes, block.ndim))
    a = np.abs(block)
    if math.isinf(p):
        return a.max(axis=axes)
    return (np.sum(a ** p, axis=axes) * cell_volume) ** (1.0 / p)


def _band_norms_stack(vhat_stack: np.ndarray, window: Window, p: float, sels) -> np.ndarray:
    """L^p norms of every selected band for a batch of spectra.

    ``vhat_stack`` has shape (B, n_1, ..., n_d); the result is (B, n_bands)
    in axis-major lattice order.
    """
    grid = window.grid
    d = grid.d
    dV = grid.cell_volume
    B = vhat_stack.shape[0]
    if d == 1:
        ks, W = sels[0]
        K, n = W.shape
        out = np.empty((B, K))
        block = max(1, _CHUNK_BYTES // (16 * B * n))
        for start in range(0, K, block):
            rows = W[start:start + block]
            masked = vhat_stack[:, None, :] * rows[None, :, :]
            fields = np.fft.ifft(masked, axis=-1, norm="ortho")
            out[:, start:start + rows.shape[0]] = _phys_stack_norms(fields, p, dV, 1)
        return out
    if d == 2:
        (ks1, W1), (ks2, W2) = sels
        K1, n1 = W1.shape
        K2, n2 = W2.shape
        out = np.empty((B, K1, K2))
        block = max(1, _CHUNK_BYTES // (16 * B * n1 * n2))
        for i1 in range(K1):
            partial = vhat_stack * W1[i1][None, :, None]
            for start in range(0, K2, block):
                rows = W2[start:start + block]
                masked = partial[:, None, :, :] * rows[None, :, None, :]
                fields = np.fft.ifft2(masked, axes=(-2, -1), norm="ortho")
                out[:, i1, start:start + rows.shape[0]] = _phys_stack_norms(fields, p, dV, 2)
        return out.reshape(B, K1 * K2)
    # generic slow path for d >= 3
    shape = tuple(len(ks) for ks, _ in sels)
    out = np.empty((B,) + shape)
    for idx in np.ndindex(*shape):
        rows = [sels[j][1][idx[j]] for j in range(d)]
        sigma = reduce(np.multiply.outer, rows)
        fields = np.fft.ifftn(vhat_stack * sigma[None], axes=tuple(range(1, d + 1)),
                              norm="ortho")
        out[(slice(None),) + idx] = _phys_stack_norms(fields, p, dV, d)
    return out.reshape(B, -1)


@dataclass
class BandNorms:
    """Per-band L^p norms of one field plus the truncation residual."""

    k_list: list
    norms: np.ndarray
    truncation_residual: float


def band_lp_norms(f: ComplexField, window: Window, p: float,
                  kmax: int | None = None) -> BandNorms:
    if f.grid != window.grid:
        raise DomainError("field and window live on different grids")
    if float(p) < 1.0:
        raise DomainError(f"p = {p}: Lebesgue exponent must satisfy p >= 1")
    vhat = to_spectral(f).values[None]
    sels = _axis_selection(window, kmax)
    residual = float(_stack_residuals(vhat, _coverage_deficiency(window, sels))[0])
    norms = _band_norms_stack(vhat, window, float(p), sels)[0]
    k_list = []
    for idx in np.ndindex(*(len(ks) for ks, _ in sels)):
        k_list.append(tuple(int(sels[j][0][idx[j]]) for j in range(window.d)))
    return BandNorms(k_list, norms, residual)


def _lattice_weights(k_list, s: float) -> np.ndarray:
    if s == 0.0:
        return np.ones(len(k_list))
    mags = np.sqrt(np.array([sum(c * c for c in k) for k in k_list], dtype=float))
    return (1.0 + mags) ** s


def _lq_reduce(values: np.ndarray, q: float, axis: int = -1) -> np.ndarray:
    if math.isinf(q):
        return values.max(axis=axis)
    return (np.sum(values ** q, axis=axis)) ** (1.0 / q)


def modulation_norm(f: ComplexField, idx: ModIndex, window: Window,
                    kmax: int | None = None) -> float:
    """Modulation-space norm of a field: l^q over bands of (1+|k|)^s ||band||_p."""
    bn = band_lp_norms(f, window, idx.p, kmax=kmax)
    if bn.truncation_residual > NORM_MAX_RESIDUAL:
        raise TruncationError(
            f"band truncation residual {bn.truncation_residual:.3e} exceeds "
            f"{NORM_MAX_RESIDUAL:.0e}; enlarge kmax or the grid")
    weighted = _lattice_weights(bn.k_list, idx.s) * bn.norms
    return float(_lq_reduce(weighted, idx.q))


def _modulation_norms_stack(vhat_stack: np.ndarray, window: Window, idx: ModIndex,
                            kmax: int | None = None) -> np.ndarray:
    """Batched modulation norms for spectra stacked along the first axis."""
    sels = _axis_selection(window, kmax)
    residuals = _stack_residuals(vhat_stack, _coverage_deficiency(window, sels))
    worst = float(residuals.max()) if residuals.size else 0.0
    if worst > NORM_MAX_RESIDUAL:
        raise TruncationError(
            f"band truncation residual {worst:.3e} exceeds {NORM_MAX_RESIDUAL:.0e}")
    norms = _band_norms_stack(vhat_stack, window, idx.p, sels)
    k_list = []
    for i in np.ndindex(*(len(ks) for ks, _ in sels)):
        k_list.append(tuple(int(sels[j][0][i[j]]) for j in range(window.d)))
    weighted = norms * _lattice_weights(k_list, idx.s)[None, :]
    return _lq_reduce(weighted, idx.q, axis=1)


# ---------------------------------------------------------------------------
# Time-weighted norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecaySeries:
    """A sampled map t -> norm together with the weight exponent alpha."""

    times: np.ndarray
    norms: np.ndarray
    alpha: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.norms, dtype=float)
        if t.size == 0:
            raise DomainError("decay series must contain at least one sample")
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError("times and norms must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0.0):
            raise DomainError("times must be strictly increasing")
        if np.any(v < 0.0):
            raise DomainError("norms must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "norms", v)

    def weighted(self) -> np.ndarray:
        return (1.0 + np.abs(self.times)) ** self.alpha * self.norms

    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(self.weighted()))])


def time_decay_norm(series: DecaySeries) -> float:
    """sup over the sample grid of (1+|t|)^alpha * norm(t).

    The supremum over continuous time is approximated by the maximum over the
    stored samples; the time grid is part of every reported result.
    """
    return float(series.weighted().max())


# ---------------------------------------------------------------------------
# Empirical inequality meters
# ---------------------------------------------------------------------------

def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def holder_defect(f: ComplexField, g: ComplexField, p1: float, p2: float,
                  idx: ModIndex, window: Window) -> float:
    """Measured ratio ||fg|| / (||f|| ||g||) in the product-Hoelder triple.

    The indices must satisfy 1/p = 1/p1 + 1/p2 with p from ``idx`` and the
    (q, s) pair must be admissible. Degenerate inputs (either factor with
    vanishing norm) return 0.0 and emit a warning instead of NaN, so scans
    stay robust.
    """
    if f.grid != g.grid:
        raise DomainError("fields live on different grids")
    if abs(_inv(p1) + _inv(p2) - _inv(idx.p)) > 1e-12:
        raise DomainError(
            f"exponent relation violated: 1/{p1} + 1/{p2} != 1/{idx.p}")
    if not idx.admissible(f.grid.d):
        raise DomainError(f"index {idx} is not admissible in dimension {f.grid.d}")
    fp = f if f.is_physical else ComplexField(f.grid, np.fft.ifftn(f.values, norm="ortho"))
    gp = g if g.is_physical else ComplexField(g.grid, np.fft.ifftn(g.values, norm="ortho"))
    nf = modulation_norm(fp, idx.with_p(p1), window)
    ng = modulation_norm(gp, idx.with_p(p2), window)
    if nf == 0.0 or ng == 0.0:
        warnings.warn("degenerate product-inequality sample (zero factor); ratio set to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    product = ComplexField(f.grid, fp.values * gp.values, PHYSICAL)
    return modulation_norm(product, idx, window) / (nf * ng)


def embedding_defect(f: ComplexField, from_idx: ModIndex, to_idx: ModIndex,
                     window: Window) -> float:
    """Measured constant of one admissible embedding: ||f||_target / ||f||_source.

    Hypotheses: p1 <= p2, and either (q1 <= q2 with s1 >= s2) or
    (q2 < q1 with s1 > s2 + d/q2 - d/q1).
    """
    d = f.grid.d
    if from_idx.p > to_idx.p:
        raise DomainError("embedding requires p1 <= p2")
    q1, q2, s1, s2 = from_idx.q, to_idx.q, from_idx.s, to_idx.s
    branch_a = (q1 <= q2) and (s1 >= s2)
    dq = (0.0 if math.isinf(q2) else d / q2) - (0.0 if math.isinf(q1) else d / q1)
    branch_b = (q2 < q1) and (s1 > s2 + dq)
    if not (branch_a or branch_b):
        raise DomainError(
            f"index pair ({from_idx}, {to_idx}) satisfies neither embedding hypothesis")
    src = modulation_norm(f, from_idx, window)
    if src == 0.0:
        warnings.warn("degenerate embedding sample (zero field); ratio set to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return modulation_norm(f, to_idx, window) / src
