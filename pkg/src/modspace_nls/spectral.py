"""Grids, unitary spectral transforms, discrete Lebesgue norms, the anisotropic
dispersion symbol, and the closed-form constants attached to it.

The spatial domain is a periodic box centered at the origin that stands in for
all of R^d. Fields are sampled on a uniform grid with a power-of-two number of
points per axis; spectral data lives on the dual lattice xi_j = 2*pi*k/L_j in
FFT-standard order. Both transform directions carry the unitary 1/sqrt(N)
normalization so that Parseval holds exactly and band norms do not depend on
the representation a field happens to be stored in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError, RepresentationError

PHYSICAL = "physical"
SPECTRAL = "spectral"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Sampling geometry of the periodic box.

    ``n`` holds the number of points per axis (power of two, at least 4) and
    ``box_length`` the physical side length per axis. Physical coordinates run
    over [-L/2, L/2) and the frequency nodes are 2*pi*k/L for
    k = -n/2, ..., n/2 - 1, stored in FFT order.
    """

    n: tuple[int, ...]
    box_length: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in (self.n if hasattr(self.n, "__len__") else (self.n,)))
        box = tuple(float(v) for v in (self.box_length if hasattr(self.box_length, "__len__") else (self.box_length,)))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "box_length", box)
        if len(n) != len(box):
            raise DomainError("n and box_length must have the same number of axes")
        if len(n) < 1:
            raise DomainError("grid needs at least one axis")
        for j, nj in enumerate(n):
            if nj < 4 or nj % 2 != 0 or not _is_power_of_two(nj):
                raise DomainError(f"n[{j}] = {nj}: points per axis must be a power of two >= 4")
        for j, lj in enumerate(box):
            if not (lj > 0.0) or not math.isfinite(lj):
                raise DomainError(f"box_length[{j}] = {lj}: must be positive and finite")

    @classmethod
    def regular(cls, d: int, n: int, box_length: float) -> "GridSpec":
        """Isotropic grid: the same point count and box length on every axis."""
        return cls((n,) * d, (float(box_length),) * d)

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / m for m, l in zip(self.n, self.box_length))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_points(self) -> int:
        return int(np.prod(self.n))

    @property
    def nyquist(self) -> tuple[float, ...]:
        """Largest resolved |frequency| per axis, pi*n_j/L_j."""
        return tuple(math.pi * m / l for m, l in zip(self.n, self.box_length))

    def coordinates(self, axis: int) -> np.ndarray:
        dx = self.spacing[axis]
        return np.arange(self.n[axis]) * dx - self.box_length[axis] / 2.0

    def coordinate_mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays shaped for broadcasting over the grid."""
        return list(np.meshgrid(*(self.coordinates(j) for j in range(self.d)),
                                indexing="ij", sparse=True))

    def frequencies(self, axis: int) -> np.ndarray:
        """Frequency nodes of one axis in FFT-standard order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n[axis], d=self.spacing[axis])

    def frequency_mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*(self.frequencies(j) for j in range(self.d)),
                                indexing="ij", sparse=True))

    def centered_frequencies(self, axis: int) -> np.ndarray:
        """Frequency nodes sorted ascending (the centered view of an axis)."""
        return np.fft.fftshift(self.frequencies(axis))


@dataclass(frozen=True)
class ComplexField:
    """A complex-valued sampled function on a :class:`GridSpec`.

    The ``representation`` tag records whether ``values`` are physical-space
    samples or spectral coefficients. Values are copied on construction and
    frozen, so fields are safe to share across threads.
    """

    grid: GridSpec
    values: np.ndarray
    representation: str = PHYSICAL

    def __post_init__(self):
        if self.representation not in (PHYSICAL, SPECTRAL):
            raise RepresentationError(f"unknown representation {self.representation!r}")
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.shape != self.grid.shape:
            raise DomainError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def is_physical(self) -> bool:
        return self.representation == PHYSICAL

    @property
    def is_spectral(self) -> bool:
        return self.representation == SPECTRAL


def require_same_grid(a, b):
    ga = a.grid if hasattr(a, "grid") else a
    gb = b.grid if hasattr(b, "grid") else b
    if ga != gb:
        raise GridMismatchError(f"grids differ: {ga} vs {gb}")


def forward_transform(f: ComplexField) -> ComplexField:
    """Unitary discrete Fourier transform of a physical field."""
    if not f.is_physical:
        raise RepresentationError("forward_transform expects a physical field")
    vals = np.fft.fftn(f.values, norm="ortho")
    return ComplexField(f.grid, vals, SPECTRAL)


def inverse_transform(f: ComplexField) -> ComplexField:
    """Unitary inverse transform of a spectral field."""
    if not f.is_spectral:
        raise RepresentationError("inverse_transform expects a spectral field")
    vals = np.fft.ifftn(f.values, norm="ortho")
    return ComplexField(f.grid, vals, PHYSICAL)


def to_spectral(f: ComplexField) -> ComplexField:
    return f if f.is_spectral else forward_transform(f)


def to_physical(f: ComplexField) -> ComplexField:
    return f if f.is_physical else inverse_transform(f)


def lp_norm(f: ComplexField, p: float) -> float:
    """Discrete L^p norm with the cell volume as measure.

    (sum |f(x_j)|^p dV)^(1/p) for finite p, max |f| for p = inf. Requires a
    physical-representation field.
    """
    if not f.is_physical:
        raise RepresentationError("lp_norm expects a physical field")
    p = float(p)
    if p < 1.0:
        raise DomainError(f"p = {p}: Lebesgue exponent must satisfy p >= 1")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * f.grid.cell_volume) ** (1.0 / p))


def l2_norm(f: ComplexField) -> float:
    """Discrete L^2 norm, valid in either representation.

    Both sides carry the physical cell-volume weight; with the unitary
    transforms this makes the two representations give the same number.
    """
    return float(math.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume))


def margin_mass(f: ComplexField, shell_fraction: float = 0.1) -> float:
    """Fraction of |f|^2 mass in the outer shell of the box.

    The shell is the set of points with some coordinate within
    ``shell_fraction * L_j`` of either edge, i.e. everything outside the
    centered sub-box of relative width 1 - 2*shell_fraction. Decay
    experiments require this to stay tiny; once waves reach the shell the
    periodic box stops emulating free space.
    """
    if not f.is_physical:
        raise RepresentationError("margin_mass expects a physical field")
    if not 0.0 < shell_fraction < 0.5:
        raise DomainError("shell_fraction must lie in (0, 1/2)")
    a2 = np.abs(f.values) ** 2
    total = a2.sum()
    if total == 0.0:
        return 0.0
    mask = np.zeros(f.grid.shape, dtype=bool)
    for j in range(f.grid.d):
        x = f.grid.coordinates(j)
        cut = (0.5 - shell_fraction) * f.grid.box_length[j]
        axis_mask = np.abs(x) >= cut
        shape = [1] * f.grid.d
        shape[j] = f.grid.n[j]
        mask |= axis_mask.reshape(shape)
    return float(a2[mask].sum() / total)


# ---------------------------------------------------------------------------
# Dispersion symbol and its constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispersionParams:
    """Coefficients (alpha, beta, gamma) of the linear dispersion.

    alpha multiplies the Laplacian; beta and gamma multiply the third and
    fourth x_1-derivatives, so the higher-order terms act along one axis only.
    Admissible parameters have alpha != 0 and (beta, gamma) != (0, 0).
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.alpha == 0.0:
            raise DomainError("alpha must be nonzero")
        if self.beta == 0.0 and self.gamma == 0.0:
            raise DomainError("(beta, gamma) must not both vanish")

    @property
    def gamma_is_zero(self) -> bool:
        return self.gamma == 0.0


def dispersion_symbol(xi, params: DispersionParams):
    """alpha*|xi|^2 + beta*xi_1^3 + gamma*xi_1^4 at frequency vector(s) ``xi``.

    ``xi`` is an array whose last axis indexes the d components. The result is
    real with the last axis contracted away.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1)
    sq = np.sum(xi * xi, axis=-1)
    x1 = xi[..., 0]
    out = params.alpha * sq + params.beta * x1 ** 3 + params.gamma * x1 ** 4
    return float(out) if out.ndim == 0 else out


def symbol_on_grid(grid: GridSpec, params: DispersionParams) -> np.ndarray:
    """Dispersion symbol tabulated at every frequency node, FFT order."""
    mesh = grid.frequency_mesh()
    sq = sum(m * m for m in mesh)
    x1 = mesh[0]
    out = params.alpha * sq + params.beta * x1 ** 3 + params.gamma * x1 ** 4
    return np.broadcast_to(out, grid.shape).copy()


def conjugate_exponent(p: float) -> float:
    """Hoelder conjugate p/(p-1), with the conventions 1' = inf and inf' = 1."""
    p = float(p)
    if p < 1.0:
        raise DomainError(f"p = {p}: exponent must satisfy p >= 1")
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def decay_exponent(d: int, gamma_is_zero: bool, p: float) -> float:
    """Dispersive decay rate mu(d, gamma, p) of the L^p' -> L^p estimate.

    (d - 1/2)(1/2 - 1/p) when the fourth-order coefficient is nonzero and
    (d - 1/3)(1/2 - 1/p) when it vanishes. Defined for p in [2, inf].
    """
    if int(d) < 1:
        raise DomainError("dimension must be a positive integer")
    p = float(p)
    if p < 2.0:
        raise DomainError(f"p = {p}: decay exponent requires p >= 2")
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    lead = d - (1.0 / 3.0 if gamma_is_zero else 0.5)
    return lead * (0.5 - inv_p)


def decay_weight_exponent(m: int, d: int, gamma_is_zero: bool) -> float:
    """Time weight exponent carried by the norm that closes the contraction.

    (d - 1/2) * m / (2(m+2)) when the fourth-order coefficient is nonzero,
    with 1/2 replaced by 1/3 when it vanishes. Coincides with
    ``decay_exponent(d, gamma_is_zero, m + 2)``.
    """
    if int(m) < 1:
        raise DomainError("nonlinearity power m must be a positive integer")
    if int(d) < 1:
        raise DomainError("dimension must be a positive integer")
    lead = d - (1.0 / 3.0 if gamma_is_zero else 0.5)
    return lead * (m / (2.0 * (m + 2.0)))


def threshold_quadratic_coefficients(d: int, gamma_is_zero: bool) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of the quadratic whose positive root is the
    minimal admissible nonlinearity power."""
    if int(d) < 1:
        raise DomainError("dimension must be a positive integer")
    if gamma_is_zero:
        return (3.0 * d - 1.0, 3.0 * d - 7.0, -12.0)
    return (2.0 * d - 1.0, 2.0 * d - 5.0, -8.0)


def power_threshold(d: int, gamma_is_zero: bool) -> float:
    """Positive root of the threshold quadratic; powers strictly above it make
    the time-decay kernel integral finite."""
    a, b, c = threshold_quadratic_coefficients(d, gamma_is_zero)
    return (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)


@dataclass(frozen=True)
class ModIndex:
    """Index triple (p, q, s) of a modulation-space norm.

    p is the Lebesgue exponent applied per frequency band, q the summability
    exponent over the band lattice, s the polynomial smoothness weight. Use
    ``math.inf`` for the endpoint exponents.
    """

    p: float
    q: float
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "s", float(self.s))
        if self.p < 1.0:
            raise DomainError(f"p = {self.p}: must satisfy 1 <= p <= inf")
        if self.q < 1.0:
            raise DomainError(f"q = {self.q}: must satisfy 1 <= q <= inf")
        if self.s < 0.0:
            raise DomainError(f"s = {self.s}: smoothness weight must be >= 0")

    @property
    def q_conjugate(self) -> float:
        return conjugate_exponent(self.q)

    def admissible(self, d: int) -> bool:
        """Hypothesis under which the product and contraction estimates hold:
        q = 1 with s >= 0, or q > 1 with s > d/q'."""
        if self.q == 1.0:
            return self.s >= 0.0
        qc = self.q_conjugate
        return self.s > (0.0 if math.isinf(qc) else d / qc)

    def with_p(self, p: float) -> "ModIndex":
        return ModIndex(p, self.q, self.s)

    def dual_p(self) -> "ModIndex":
        """Same (q, s) with p replaced by its conjugate exponent."""
        return ModIndex(conjugate_exponent(self.p), self.q, self.s)


@dataclass(frozen=True)
class ConstantsReport:
    """Bundle of the closed-form constants for one (d, gamma-branch, m, p)."""

    mu: float
    gamma_exp: float
    m0: float
    m: int

    def to_dict(self) -> dict:
        return {"mu": self.mu, "gamma_exp": self.gamma_exp, "m0": self.m0, "m": self.m}


def constants_report(d: int, gamma_is_zero: bool, m: int, p: float) -> ConstantsReport:
    return ConstantsReport(
        mu=decay_exponent(d, gamma_is_zero, p),
        gamma_exp=decay_weight_exponent(m, d, gamma_is_zero),
        m0=power_threshold(d, gamma_is_zero),
        m=int(m),
    )


def japanese_bracket(x) -> float:
    """1 + |x| for scalars or vectors (Euclidean length)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return 1.0 + abs(float(arr))
    return 1.0 + float(np.linalg.norm(arr))
