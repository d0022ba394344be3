"""Nonlinearities, the Duhamel integral, and the Picard fixed-point solver.

The mild solution is the fixed point of u -> W(t)u0 + sign*i*Int_0^t
W(t - tau) f(u(tau)) dtau. Time is discretized on a stored grid; the linear
flow is applied exactly through the propagator plan and the only quadrature
error lives in the tau-integral, evaluated with the composite trapezoid rule
on the stored nodes. Iterates are measured in the time-weighted modulation
norm sup_t (1+|t|)^alpha ||u(t)||, the norm in which the contraction closes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import DivergenceError, DomainError, IterationLimitError
from .modulation import ModIndex, Window, _modulation_norms_stack, modulation_norm
from .propagator import PropagatorPlan
from .spectral import (
    PHYSICAL,
    ComplexField,
    GridSpec,
    decay_weight_exponent,
    power_threshold,
    require_same_grid,
)

EXP_OVERFLOW_LIMIT = 600.0  # largest rho*|u|^2 the series evaluator accepts


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearitySpec:
    """Description of the nonlinear term.

    kind "power": sign * (m+1)-fold product of the field and its conjugate.
    The ``variant`` picks the conjugation pattern: "modulus" is |u|^m u,
    "analytic" is u^(m+1) with no conjugates.

    kind "exponential": lam * (exp(rho |u|^2) - 1) u, evaluated as the power
    series truncated at order ``K`` (auto-selected from a tail bound when
    None).
    """

    kind: str
    m: int = 1
    sign: int = 1
    variant: str = "modulus"
    lam: complex = 1.0 + 0.0j
    rho: float = 1.0
    K: int | None = None

    def __post_init__(self):
        if self.kind not in ("power", "exponential"):
            raise DomainError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power":
            if int(self.m) < 1:
                raise DomainError("power nonlinearity requires m >= 1")
            if self.sign not in (1, -1):
                raise DomainError("sign must be +1 or -1")
            if self.variant not in ("modulus", "analytic"):
                raise DomainError(f"unknown power variant {self.variant!r}")
        else:
            if not self.rho > 0.0:
                raise DomainError("exponential nonlinearity requires rho > 0")
            if self.K is not None and int(self.K) < 1:
                raise DomainError("series truncation order K must be >= 1")

    @property
    def effective_power(self) -> int:
        """Power governing the time-weight exponent (2 for the exponential kind,
        whose leading term is cubic)."""
        return int(self.m) if self.kind == "power" else 2


def exp_series_tail(lam: complex, rho: float, K: int, amplitude: float) -> float:
    """Bound on the dropped series tail.

    The first dropped term is |lam| rho^(K+1) A^(2K+3) / (K+1)!; the full tail
    is controlled by it times the geometric factor 1 / (1 - rho A^2 / (K+2)),
    finite once rho A^2 < K + 2.
    """
    if amplitude <= 0.0:
        return 0.0
    x = rho * amplitude * amplitude
    log_first = ((K + 1) * math.log(rho) + (2 * K + 3) * math.log(amplitude)
                 - math.lgamma(K + 2))
    first = abs(lam) * math.exp(log_first)
    if x >= K + 2:
        return math.inf
    return first / (1.0 - x / (K + 2))


def auto_truncation_order(lam: complex, rho: float, amplitude: float,
                          tol: float) -> int:
    """Smallest order whose tail bound at the given amplitude is below tol."""
    if tol <= 0.0:
        raise DomainError("tolerance must be positive")
    for K in range(1, 400):
        if exp_series_tail(lam, rho, K, amplitude) < tol:
            return K
    raise DomainError("no practical truncation order reaches the tolerance; "
                      "amplitude is outside the small-data regime")


def _power_values(vals: np.ndarray, m: int, variant: str) -> np.ndarray:
    if variant == "analytic":
        return vals ** (m + 1)
    return np.abs(vals) ** m * vals


def _exponential_values(vals: np.ndarray, lam: complex, rho: float, K: int) -> np.ndarray:
    w = rho * np.abs(vals) ** 2
    term = np.ones_like(w)
    total = np.zeros_like(w)
    for k in range(1, K + 1):
        term = term * (w / k)
        total = total + term
    return lam * total * vals


def _nonlinearity_values(vals: np.ndarray, spec: NonlinearitySpec,
                         series_tol: float) -> np.ndarray:
    if spec.kind == "power":
        return float(spec.sign) * _power_values(vals, int(spec.m), spec.variant)
    amp = float(np.max(np.abs(vals))) if vals.size else 0.0
    if spec.rho * amp * amp > EXP_OVERFLOW_LIMIT:
        raise DomainError(
            f"rho*|u|^2 = {spec.rho * amp * amp:.3g} would overflow the "
            "exponential series; refuse rather than return inf")
    K = int(spec.K) if spec.K is not None else auto_truncation_order(
        spec.lam, spec.rho, amp, series_tol)
    tail = exp_series_tail(spec.lam, spec.rho, K, amp)
    if tail > series_tol:
        warnings.warn(
            f"exponential series tail bound {tail:.3e} exceeds tolerance "
            f"{series_tol:.1e} at truncation order {K}", RuntimeWarning, stacklevel=2)
    return _exponential_values(vals, complex(spec.lam), float(spec.rho), K)


def apply_nonlinearity(u: ComplexField, spec: NonlinearitySpec,
                       series_tol: float = 1e-10) -> ComplexField:
    """Pointwise nonlinearity of a physical field."""
    if not u.is_physical:
        raise DomainError("apply_nonlinearity expects a physical field")
    return ComplexField(u.grid, _nonlinearity_values(u.values, spec, series_tol),
                        PHYSICAL)


# ---------------------------------------------------------------------------
# Solution series and the Duhamel integral
# ---------------------------------------------------------------------------

@dataclass
class SolutionSeries:
    """Time-indexed family of physical fields on one grid.

    The time grid starts at 0 and increases strictly; fields[i] is the state
    at t_grid[i].
    """

    t_grid: np.ndarray
    fields: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise DomainError("t_grid must be a nonempty 1-d array")
        if t[0] != 0.0:
            raise DomainError("t_grid must start at 0")
        if np.any(np.diff(t) <= 0.0):
            raise DomainError("t_grid must be strictly increasing")
        if len(self.fields) != t.size:
            raise DomainError("one field per time node required")
        g = self.fields[0].grid
        for f in self.fields:
            if f.grid != g:
                raise DomainError("all fields must share one grid")
            if not f.is_physical:
                raise DomainError("series fields must be physical")
        object.__setattr__(self, "t_grid", t)

    @property
    def grid(self) -> GridSpec:
        return self.fields[0].grid

    def stack(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    @classmethod
    def from_stack(cls, t_grid, grid: GridSpec, values: np.ndarray,
                   meta: dict | None = None) -> "SolutionSeries":
        fields = [ComplexField(grid, values[i], PHYSICAL) for i in range(values.shape[0])]
        return cls(np.asarray(t_grid, dtype=float), fields, meta or {})

    @classmethod
    def zero(cls, t_grid, grid: GridSpec, meta: dict | None = None) -> "SolutionSeries":
        z = np.zeros(grid.shape, dtype=np.complex128)
        fields = [ComplexField(grid, z, PHYSICAL) for _ in range(len(t_grid))]
        return cls(np.asarray(t_grid, dtype=float), fields, meta or {})


def _grid_axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(1, grid.d + 1))


def _duhamel_stack(F_values: np.ndarray, t_grid: np.ndarray,
                   plan: PropagatorPlan) -> np.ndarray:
    """Spectral prefix integrals S_i = Int_0^{t_i} W(-tau) F(tau) dtau.

    Composite trapezoid on the stored nodes; F_values is the physical
    integrand stacked over time.
    """
    grid = plan.grid
    axes = _grid_axes(grid)
    Fhat = np.fft.fftn(F_values, axes=axes, norm="ortho")
    S = np.zeros_like(Fhat)
    prev = plan.apply_spectral(Fhat[0], -t_grid[0])
    for i in range(1, len(t_grid)):
        cur = plan.apply_spectral(Fhat[i], -t_grid[i])
        S[i] = S[i - 1] + 0.5 * (t_grid[i] - t_grid[i - 1]) * (prev + cur)
        prev = cur
    return S


def duhamel(series: SolutionSeries, spec: NonlinearitySpec, plan: PropagatorPlan,
            t_index: int, series_tol: float = 1e-10) -> ComplexField:
    """Trapezoid approximation of Int_0^{t_i} W(t_i - tau) f(u(tau)) dtau."""
    require_same_grid(series.fields[0], plan)
    n = len(series.t_grid)
    if not 0 <= t_index < n:
        raise DomainError(f"t_index {t_index} outside the stored grid")
    if t_index == 0:
        return ComplexField(plan.grid, np.zeros(plan.grid.shape, dtype=np.complex128),
                            PHYSICAL)
    if n < 2:
        raise DomainError("quadrature needs at least two nodes before a positive time")
    sub = series.stack()[: t_index + 1]
    F = _nonlinearity_values(sub, spec, series_tol)
    S = _duhamel_stack(F, series.t_grid[: t_index + 1], plan)
    t_i = series.t_grid[t_index]
    out = np.fft.ifftn(plan.apply_spectral(S[t_index], t_i), norm="ortho")
    return ComplexField(plan.grid, out, PHYSICAL)


def _picard_sweep(U: np.ndarray, u0hat: np.ndarray, spec: NonlinearitySpec,
                  plan: PropagatorPlan, t_grid: np.ndarray, map_sign: int,
                  series_tol: float) -> np.ndarray:
    """One application of the fixed-point operator on a stacked iterate."""
    axes = _grid_axes(plan.grid)
    F = _nonlinearity_values(U, spec, series_tol)
    S = _duhamel_stack(F, t_grid, plan)
    out = np.empty_like(U)
    c = 1j * float(map_sign)
    for i, t in enumerate(t_grid):
        out[i] = np.fft.ifftn(plan.apply_spectral(u0hat + c * S[i], t), norm="ortho")
    return out


def picard_map(series: SolutionSeries, u0: ComplexField, spec: NonlinearitySpec,
               plan: PropagatorPlan, sign: int = 1,
               series_tol: float = 1e-10) -> SolutionSeries:
    """The operator u -> W(t)u0 + sign*i*Duhamel(f(u)) sampled on the grid."""
    require_same_grid(u0, plan)
    require_same_grid(series.fields[0], plan)
    u0hat = np.fft.fftn(u0.values, norm="ortho")
    out = _picard_sweep(series.stack(), u0hat, spec, plan, series.t_grid,
                        sign, series_tol)
    return SolutionSeries.from_stack(series.t_grid, plan.grid, out, dict(series.meta))


# ---------------------------------------------------------------------------
# Fixed-point iteration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the fixed-point run.

    R is the ball radius the converged orbit must respect in the weighted
    norm, delta an optional smallness bound on the initial data norm
    (recorded, and warned about when breached), tol the residual tolerance in
    the weighted norm, and max_iter the iteration cap.
    """

    R: float
    tol: float
    max_iter: int
    delta: float | None = None
    quadrature: str = "trapezoid"
    allow_subthreshold: bool = False

    def __post_init__(self):
        if not self.R > 0.0:
            raise DomainError("ball radius R must be positive")
        if not self.tol > 0.0:
            raise DomainError("tolerance must be positive")
        if int(self.max_iter) < 1:
            raise DomainError("max_iter must be at least 1")
        if self.delta is not None and not self.delta > 0.0:
            raise DomainError("delta must be positive when given")
        if self.quadrature != "trapezoid":
            raise DomainError(f"unsupported quadrature rule {self.quadrature!r}")


@dataclass
class PicardDiagnostics:
    """Convergence record of one fixed-point run."""

    converged: bool
    iterations: int
    residuals: list
    contraction_ratios: list
    alpha: float
    radius: float
    weighted_norm: float
    in_ball: bool
    node_norms: np.ndarray
    weighted_norms: np.ndarray
    initial_data_norm: float
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": list(map(float, self.residuals)),
            "contraction_ratios": list(map(float, self.contraction_ratios)),
            "alpha": self.alpha,
            "radius": self.radius,
            "weighted_norm": self.weighted_norm,
            "in_ball": self.in_ball,
            "initial_data_norm": self.initial_data_norm,
            "diverged": self.diverged,
        }


def _weighted_series_norms(values: np.ndarray, t_grid: np.ndarray, idx: ModIndex,
                           window: Window, alpha: float):
    axes = tuple(range(1, values.ndim))
    vhat = np.fft.fftn(values, axes=axes, norm="ortho")
    node = _modulation_norms_stack(vhat, window, idx)
    weights = (1.0 + np.abs(t_grid)) ** alpha
    return node, weights * node


def picard_solve(u0: ComplexField, spec: NonlinearitySpec, plan: PropagatorPlan,
                 window: Window, idx: ModIndex, config: SolverConfig,
                 t_grid, map_sign: int = 1):
    """Iterate the fixed-point operator from the free evolution of the data.

    Returns (SolutionSeries, PicardDiagnostics). The iteration stops when the
    weighted-norm residual between successive sweeps drops below tol; it
    raises DivergenceError after three consecutive non-contracting steps and
    IterationLimitError at the cap, both carrying the diagnostics collected
    so far.
    """
    require_same_grid(u0, plan)
    if window.grid != plan.grid:
        raise DomainError("window and plan live on different grids")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise DomainError("t_grid needs at least the nodes 0 and one later time")
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0.0):
        raise DomainError("t_grid must start at 0 and increase strictly")
    d = plan.grid.d
    gz = plan.params.gamma_is_zero
    if not idx.admissible(d):
        raise DomainError(f"index {idx} is not admissible in dimension {d}")
    if spec.kind == "power" and not config.allow_subthreshold:
        m0 = power_threshold(d, gz)
        if spec.m <= m0:
            raise DomainError(
                f"power m = {spec.m} is not above the threshold {m0:.5f}; "
                "set allow_subthreshold to run the experiment anyway")
    alpha = decay_weight_exponent(spec.effective_power, d, gz)
    series_tol = config.tol * 1e-3

    initial_data_norm = modulation_norm(u0, idx.dual_p(), window)
    if config.delta is not None and initial_data_norm > config.delta:
        warnings.warn(
            f"initial data norm {initial_data_norm:.3e} exceeds the requested "
            f"smallness bound {config.delta:.3e}", RuntimeWarning, stacklevel=2)

    u0hat = np.fft.fftn(u0.values, norm="ortho")
    U = np.empty((t_grid.size,) + plan.grid.shape, dtype=np.complex128)
    for i, t in enumerate(t_grid):
        U[i] = np.fft.ifftn(plan.apply_spectral(u0hat, t), norm="ortho")

    residuals: list[float] = []
    ratios: list[float] = []

    def make_diag(converged: bool, final: np.ndarray, diverged: bool = False):
        node, weighted = _weighted_series_norms(final, t_grid, idx, window, alpha)
        wn = float(weighted.max())
        in_ball = wn <= config.R * (1.0 + 1e-12)
        if converged and not in_ball:
            warnings.warn(
                f"converged orbit left the ball: weighted norm {wn:.3e} > R = "
                f"{config.R:.3e}", RuntimeWarning, stacklevel=3)
        return PicardDiagnostics(
            converged=converged, iterations=len(residuals), residuals=residuals,
            contraction_ratios=ratios, alpha=alpha, radius=config.R,
            weighted_norm=wn, in_ball=in_ball, node_norms=node,
            weighted_norms=weighted, initial_data_norm=initial_data_norm,
            diverged=diverged)

    for _ in range(int(config.max_iter)):
        U_new = _picard_sweep(U, u0hat, spec, plan, t_grid, map_sign, series_tol)
        node, weighted = _weighted_series_norms(U_new - U, t_grid, idx, window, alpha)
        resid = float(weighted.max())
        if residuals:
            prev = residuals[-1]
            ratios.append(resid / prev if prev > 0.0 else 0.0)
        residuals.append(resid)
        U = U_new
        if resid <= config.tol:
            diag = make_diag(True, U)
            init_gap = float(np.sqrt(np.sum(np.abs(U[0] - u0.values) ** 2)
                                     * plan.grid.cell_volume))
            series = SolutionSeries.from_stack(
                t_grid, plan.grid, U,
                {"nonlinearity": spec, "dispersion": plan.params, "index": idx,
                 "initial_consistency_l2": init_gap})
            return series, diag
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            diag = make_diag(False, U, diverged=True)
            raise DivergenceError(
                "fixed-point iteration stopped contracting for three "
                "consecutive sweeps", diagnostics=diag)
    diag = make_diag(False, U)
    raise IterationLimitError(
        f"no convergence within {config.max_iter} iterations "
        f"(last residual {residuals[-1]:.3e})", diagnostics=diag)


def contraction_ratio(u: SolutionSeries, v: SolutionSeries, spec: NonlinearitySpec,
                      plan: PropagatorPlan, window: Window, idx: ModIndex,
                      config: SolverConfig, series_tol: float = 1e-10) -> float:
    """Measured Lipschitz quotient ||T u - T v|| / ||u - v|| in the weighted norm.

    Both inputs must lie in the ball of radius R. The free-evolution term of
    the operator cancels in the difference, so only the Duhamel parts are
    computed. Identical inputs are flagged degenerate and return 0.0.
    """
    if u.grid != v.grid or not np.array_equal(u.t_grid, v.t_grid):
        raise DomainError("series must share grid and time nodes")
    d = plan.grid.d
    alpha = decay_weight_exponent(spec.effective_power, d, plan.params.gamma_is_zero)
    Us, Vs = u.stack(), v.stack()
    slack = 1.0 + 1e-9
    _, wu = _weighted_series_norms(Us, u.t_grid, idx, window, alpha)
    _, wv = _weighted_series_norms(Vs, v.t_grid, idx, window, alpha)
    if wu.max() > config.R * slack or wv.max() > config.R * slack:
        raise DomainError("contraction inputs must lie in the ball of radius R")
    _, wdiff = _weighted_series_norms(Us - Vs, u.t_grid, idx, window, alpha)
    denom = float(wdiff.max())
    if denom == 0.0:
        warnings.warn("degenerate contraction sample (u = v); ratio set to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    zero_hat = np.zeros(plan.grid.shape, dtype=np.complex128)
    Tu = _picard_sweep(Us, zero_hat, spec, plan, u.t_grid, 1, series_tol)
    Tv = _picard_sweep(Vs, zero_hat, spec, plan, v.t_grid, 1, series_tol)
    _, wnum = _weighted_series_norms(Tu - Tv, u.t_grid, idx, window, alpha)
    return float(wnum.max()) / denom


# ---------------------------------------------------------------------------
# Scalar kernel bound
# ---------------------------------------------------------------------------

@dataclass
class KernelBoundReport:
    """Compensated time-decay kernel integral sampled over t.

    values[i] = (1+t)^a * Int_0^t (1+t-tau)^(-a) (1+tau)^(-(m+1)a) dtau with
    a the weight exponent for (m, d, gamma-branch). The integral stays
    bounded exactly when (m+1)*a > 1, i.e. when m exceeds the power
    threshold.
    """

    times: np.ndarray
    values: np.ndarray
    sup: float
    weight_exponent: float
    tau_exponent: float
    converges_in_theory: bool

    def tail_growth(self, decades: float = 2.0) -> float:
        """Ratio of the value at the last sample to the value two decades
        earlier (nearest sample); the divergence signature is growth well
        above 1 per two decades."""
        t = self.times
        pos = t > 0.0
        if pos.sum() < 2:
            raise DomainError("need at least two positive samples")
        t_end = t[pos][-1]
        target = t_end / (10.0 ** decades)
        i_ref = int(np.argmin(np.abs(t[pos] - target)))
        v_end = self.values[pos][-1]
        v_ref = self.values[pos][i_ref]
        if v_ref == 0.0:
            raise DomainError("reference sample vanishes")
        return float(v_end / v_ref)


def kernel_integral_bound(m: int, d: int, gamma_is_zero: bool,
                          t_samples) -> KernelBoundReport:
    """Evaluate the compensated kernel integral by adaptive quadrature.

    Pure scalar computation, no PDE involved; this is the quantity whose
    boundedness the power threshold encodes.
    """
    if int(m) < 1:
        raise DomainError("m must be a positive integer")
    a = decay_weight_exponent(m, d, gamma_is_zero)
    b = (m + 1) * a
    t_samples = np.asarray(t_samples, dtype=float)
    if t_samples.size == 0 or np.any(t_samples < 0.0):
        raise DomainError("t samples must be nonnegative")
    values = np.empty(t_samples.size)
    for i, t in enumerate(t_samples):
        if t == 0.0:
            values[i] = 0.0
            continue
        integrand = lambda tau: (1.0 + (t - tau)) ** (-a) * (1.0 + tau) ** (-b)
        val, _ = quad(integrand, 0.0, t, points=[0.5 * t], limit=500)
        values[i] = (1.0 + t) ** a * val
    return KernelBoundReport(times=t_samples, values=values, sup=float(values.max()),
                             weight_exponent=a, tau_exponent=b,
                             converges_in_theory=b > 1.0)


# ---------------------------------------------------------------------------
# Self-mapping budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelfMapConstants:
    """Measured implicit constants entering the self-mapping inequality."""

    c_linear: float = 1.0
    c_nonlinear: float = 1.0


@dataclass(frozen=True)
class SelfMapVerdict:
    admissible: bool
    slack: float
    lhs: float
    linear_term: float
    nonlinear_term: float


def _nonlinear_budget(R: float, spec: NonlinearitySpec) -> float:
    if spec.kind == "power":
        return R ** (spec.m + 1)
    # sum_{k>=1} rho^k R^(2k+1) / k! = R * (exp(rho R^2) - 1)
    return abs(spec.lam) * R * math.expm1(spec.rho * R * R)


def selfmap_budget(u0_norm: float, R: float, spec: NonlinearitySpec,
                   constants: SelfMapConstants = SelfMapConstants()) -> SelfMapVerdict:
    """Evaluate the self-mapping inequality with measured constants.

    The operator maps the radius-R ball into itself when
    c_linear * ||u0|| + c_nonlinear * N(R) <= R, with N(R) = R^(m+1) for the
    power kind and |lam| R (exp(rho R^2) - 1) for the exponential kind.
    """
    if u0_norm < 0.0 or R <= 0.0:
        raise DomainError("u0_norm must be nonnegative and R positive")
    lin = constants.c_linear * u0_norm
    nl = constants.c_nonlinear * _nonlinear_budget(R, spec)
    lhs = lin + nl
    return SelfMapVerdict(admissible=lhs <= R, slack=R - lhs, lhs=lhs,
                          linear_term=lin, nonlinear_term=nl)


def admissible_radius_bound(spec: NonlinearitySpec,
                            constants: SelfMapConstants = SelfMapConstants(),
                            data_fraction: float = 0.5, steps: int = 60) -> float:
    """Largest ball radius passing the budget when ||u0|| = data_fraction * R.

    With the data norm tied to R the verdict is monotone in R (admissible
    below the boundary, inadmissible above), so bisection applies.
    """
    if not 0.0 <= data_fraction < 1.0:
        raise DomainError("data_fraction must lie in [0, 1)")

    def ok(R: float) -> bool:
        return selfmap_budget(data_fraction * R, R, spec, constants).admissible

    if constants.c_linear * data_fraction >= 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    grow = 0
    while ok(hi) and grow < 200:
        lo, hi = hi, hi * 2.0
        grow += 1
    if grow == 0 and not ok(hi):
        hi = 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
