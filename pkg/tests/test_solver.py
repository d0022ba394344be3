import math

import numpy as np
import pytest

from modspace_nls import (
    ComplexField,
    DispersionParams,
    DivergenceError,
    DomainError,
    GridSpec,
    IterationLimitError,
    ModIndex,
    NonlinearitySpec,
    SelfMapConstants,
    SolutionSeries,
    SolverConfig,
    admissible_radius_bound,
    apply_nonlinearity,
    auto_truncation_order,
    build_plan,
    build_window,
    contraction_ratio,
    duhamel,
    exp_series_tail,
    gaussian_field,
    kernel_integral_bound,
    modulation_norm,
    picard_map,
    picard_solve,
    propagate,
    random_band_limited,
    selfmap_budget,
)
from modspace_nls.solver import _duhamel_stack, _weighted_series_norms
from modspace_nls.spectral import PHYSICAL, decay_weight_exponent


@pytest.fixture(scope="module")
def setting():
    grid = GridSpec.regular(1, 256, 64.0)
    params = DispersionParams(1.5, 2.0, 1.0)
    plan = build_plan(grid, params)
    window = build_window(1, grid)
    return grid, plan, window


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

def test_nonlinearity_zero(setting):
    grid, _, _ = setting
    z = ComplexField(grid, np.zeros(grid.shape), PHYSICAL)
    for spec in (NonlinearitySpec("power", m=3),
                 NonlinearitySpec("exponential", lam=1.0, rho=1.0, K=4)):
        assert np.abs(apply_nonlinearity(z, spec).values).max() == 0.0


def test_power_constant(setting):
    grid, _, _ = setting
    c = 0.8 - 0.6j
    f = ComplexField(grid, np.full(grid.shape, c), PHYSICAL)
    out = apply_nonlinearity(f, NonlinearitySpec("power", m=2)).values
    np.testing.assert_allclose(out, abs(c) ** 2 * c, rtol=1e-14)
    out = apply_nonlinearity(f, NonlinearitySpec("power", m=1, variant="analytic")).values
    np.testing.assert_allclose(out, c ** 2, rtol=1e-14)
    out = apply_nonlinearity(f, NonlinearitySpec("power", m=2, sign=-1)).values
    np.testing.assert_allclose(out, -abs(c) ** 2 * c, rtol=1e-14)


def test_exponential_series_matches_closed_form(setting):
    grid, _, _ = setting
    lam, rho = 0.7 + 0.2j, 1.3
    c = 0.4 + 0.3j
    f = ComplexField(grid, np.full(grid.shape, c), PHYSICAL)
    for K in (2, 4, 8):
        spec = NonlinearitySpec("exponential", lam=lam, rho=rho, K=K)
        got = apply_nonlinearity(f, spec, series_tol=1.0).values.flat[0]
        exact = lam * (np.exp(rho * abs(c) ** 2) - 1.0) * c
        assert abs(got - exact) <= exp_series_tail(lam, rho, K, abs(c)) + 1e-15


def test_exponential_auto_truncation(setting):
    grid, _, _ = setting
    assert auto_truncation_order(1.0, 1.0, 0.1, 1e-12) <= 4
    f = gaussian_field(grid, amplitude=0.1)
    spec = NonlinearitySpec("exponential", lam=1.0, rho=1.0)
    out = apply_nonlinearity(f, spec, series_tol=1e-12)
    exact = (np.exp(np.abs(f.values) ** 2) - 1.0) * f.values
    assert np.abs(out.values - exact).max() <= 1e-12


def test_exponential_tail_warning_and_overflow_guard(setting):
    grid, _, _ = setting
    big = ComplexField(grid, np.full(grid.shape, 30.0), PHYSICAL)
    with pytest.raises(DomainError):
        apply_nonlinearity(big, NonlinearitySpec("exponential", rho=1.0, K=2))
    mid = ComplexField(grid, np.full(grid.shape, 2.0), PHYSICAL)
    with pytest.warns(RuntimeWarning, match="tail"):
        apply_nonlinearity(mid, NonlinearitySpec("exponential", rho=1.0, K=1),
                           series_tol=1e-10)


def test_nonlinearity_spec_validation():
    with pytest.raises(DomainError):
        NonlinearitySpec("power", m=0)
    with pytest.raises(DomainError):
        NonlinearitySpec("power", m=1, sign=2)
    with pytest.raises(DomainError):
        NonlinearitySpec("exponential", rho=-1.0)
    with pytest.raises(DomainError):
        NonlinearitySpec("cubic")


# ---------------------------------------------------------------------------
# Duhamel integral
# ---------------------------------------------------------------------------

def test_duhamel_zero_series(setting):
    grid, plan, _ = setting
    t_grid = np.linspace(0.0, 1.0, 11)
    z = SolutionSeries.zero(t_grid, grid)
    spec = NonlinearitySpec("power", m=2)
    out = duhamel(z, spec, plan, 10)
    assert np.abs(out.values).max() == 0.0
    out0 = duhamel(z, spec, plan, 0)
    assert np.abs(out0.values).max() == 0.0


def exact_linear_integrand_integral(grid, plan, g_hat, t):
    # Int_0^t W(t - tau) (g * tau) dtau = W(t) applied to g_hat * I(phi, t)
    # with I = Int_0^t tau e^(-i phi tau) dtau, elementwise in frequency
    phi = plan.phase
    a = -1j * phi
    small = np.abs(phi) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        I = np.exp(a * t) * (t / a - 1.0 / (a * a)) + 1.0 / (a * a)
    # series for tiny phi: t^2/2 - i phi t^3/3 + O(phi^2)
    I = np.where(small, 0.5 * t * t - 1j * phi * t ** 3 / 3.0, I)
    out_hat = np.exp(1j * phi * t) * (g_hat * I)
    return np.fft.ifftn(out_hat, norm="ortho")


def test_duhamel_manufactured_linear_integrand(setting):
    grid, plan, _ = setting
    g = random_band_limited(grid, 77, radius=2.0)
    g_hat = np.fft.fftn(g.values, norm="ortho")
    T = 1.0
    errs = []
    for n_nodes in (11, 21):
        t_grid = np.linspace(0.0, T, n_nodes)
        F = g.values[None, :] * t_grid[:, None]
        S = _duhamel_stack(F, t_grid, plan)
        got = np.fft.ifftn(plan.apply_spectral(S[-1], T), norm="ortho")
        exact = exact_linear_integrand_integral(grid, plan, g_hat, T)
        errs.append(np.linalg.norm(got - exact))
    assert errs[0] > 0.0
    assert errs[0] / errs[1] >= 3.5  # order-2 quadrature: halving gains ~4x


def test_duhamel_index_checks(setting):
    grid, plan, _ = setting
    t_grid = np.linspace(0.0, 1.0, 5)
    z = SolutionSeries.zero(t_grid, grid)
    spec = NonlinearitySpec("power", m=2)
    with pytest.raises(DomainError):
        duhamel(z, spec, plan, 7)
    with pytest.raises(DomainError):
        duhamel(z, spec, plan, -1)


# ---------------------------------------------------------------------------
# Picard map and solve
# ---------------------------------------------------------------------------

def test_picard_map_zero_iterate_gives_free_evolution(setting):
    grid, plan, _ = setting
    t_grid = np.linspace(0.0, 2.0, 21)
    u0 = gaussian_field(grid, amplitude=0.3)
    z = SolutionSeries.zero(t_grid, grid)
    spec = NonlinearitySpec("power", m=3)
    out = picard_map(z, u0, spec, plan)
    for i in (0, 7, 20):
        ref = propagate(u0, t_grid[i], plan)
        assert np.abs(out.fields[i].values - ref.values).max() <= 1e-12


def test_picard_map_zero_fixed_point(setting):
    grid, plan, _ = setting
    t_grid = np.linspace(0.0, 2.0, 11)
    z = SolutionSeries.zero(t_grid, grid)
    zero0 = ComplexField(grid, np.zeros(grid.shape), PHYSICAL)
    out = picard_map(z, zero0, NonlinearitySpec("power", m=2), plan)
    assert max(np.abs(f.values).max() for f in out.fields) == 0.0


def test_picard_solve_zero_data(setting):
    grid, plan, window = setting
    u0 = ComplexField(grid, np.zeros(grid.shape), PHYSICAL)
    cfg = SolverConfig(R=1.0, tol=1e-10, max_iter=5)
    series, diag = picard_solve(u0, NonlinearitySpec("power", m=5), plan, window,
                                ModIndex(7, 1, 0.0), cfg, np.linspace(0, 5, 26))
    assert diag.converged and diag.iterations == 1
    assert diag.weighted_norm == 0.0
    assert max(np.abs(f.values).max() for f in series.fields) == 0.0


def test_picard_solve_small_data_power(setting):
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.2)
    idx = ModIndex(7, 1, 0.0)
    cfg = SolverConfig(R=1.0, tol=1e-9, max_iter=20)
    t_grid = np.linspace(0.0, 10.0, 51)
    spec = NonlinearitySpec("power", m=5)
    series, diag = picard_solve(u0, spec, plan, window, idx, cfg, t_grid)
    assert diag.converged
    assert all(r < 1.0 for r in diag.contraction_ratios)
    assert diag.in_ball and diag.weighted_norm <= cfg.R
    # re-entering the fixed point moves it by no more than the tolerance
    re_entered = picard_map(series, u0, spec, plan)
    alpha = diag.alpha
    diff = re_entered.stack() - series.stack()
    _, weighted = _weighted_series_norms(diff, t_grid, idx, window, alpha)
    assert weighted.max() <= cfg.tol


def test_picard_solve_threshold_guard(setting):
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.05)
    cfg = SolverConfig(R=1.0, tol=1e-9, max_iter=10)
    with pytest.raises(DomainError, match="threshold"):
        picard_solve(u0, NonlinearitySpec("power", m=3), plan, window,
                     ModIndex(5, 1, 0.0), cfg, np.linspace(0, 5, 21))
    # override flag permits the sub-threshold counter-experiment
    cfg2 = SolverConfig(R=1.0, tol=1e-9, max_iter=10, allow_subthreshold=True)
    try:
        _, diag = picard_solve(u0, NonlinearitySpec("power", m=3), plan, window,
                               ModIndex(5, 1, 0.0), cfg2, np.linspace(0, 5, 21))
        assert diag.converged
    except (DivergenceError, IterationLimitError) as exc:
        assert exc.diagnostics is not None  # structured outcome either way


def test_picard_solve_inadmissible_index(setting):
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.1)
    cfg = SolverConfig(R=1.0, tol=1e-9, max_iter=10)
    with pytest.raises(DomainError, match="admissible"):
        picard_solve(u0, NonlinearitySpec("power", m=5), plan, window,
                     ModIndex(7, 2, 0.0), cfg, np.linspace(0, 5, 21))


def test_picard_solve_exponential_small(setting):
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.05)
    idx = ModIndex(4, 1, 0.0)
    cfg = SolverConfig(R=0.5, tol=1e-9, max_iter=20)
    spec = NonlinearitySpec("exponential", lam=1.0, rho=1.0)
    series, diag = picard_solve(u0, spec, plan, window, idx, cfg,
                                np.linspace(0.0, 5.0, 41))
    assert diag.converged and diag.in_ball


def test_linear_limit_scaling(setting):
    # the deviation from the free evolution scales like the (m+1)-st power of
    # the data size, so the normalized deviation drops by 2^m per halving
    grid, plan, window = setting
    idx = ModIndex(4, 1, 0.0)
    m = 2
    spec = NonlinearitySpec("power", m=m)
    cfg = SolverConfig(R=2.0, tol=1e-12, max_iter=30, allow_subthreshold=True)
    t_grid = np.linspace(0.0, 3.0, 31)
    alpha = decay_weight_exponent(m, grid.d, plan.params.gamma_is_zero)

    def deviation(eps):
        u0 = gaussian_field(grid, amplitude=eps)
        series, _ = picard_solve(u0, spec, plan, window, idx, cfg, t_grid)
        u0hat = np.fft.fftn(u0.values, norm="ortho")
        lin = np.stack([np.fft.ifftn(plan.apply_spectral(u0hat, t), norm="ortho")
                        for t in t_grid])
        _, w = _weighted_series_norms(series.stack() - lin, t_grid, idx, window, alpha)
        return w.max() / eps

    d1, d2 = deviation(0.1), deviation(0.05)
    assert d1 / d2 == pytest.approx(2 ** m, rel=0.3)


def test_quadrature_halving_moves_fixed_point_within_tolerance(setting):
    # data wide in x keeps the integrand's time oscillation resolved, so the
    # trapezoid bias sits below the residual tolerance on both grids
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.5, width=4.0)
    idx = ModIndex(4, 1, 0.0)
    spec = NonlinearitySpec("power", m=2)
    tol = 1e-5
    cfg = SolverConfig(R=3.0, tol=tol, max_iter=40, allow_subthreshold=True)
    alpha = decay_weight_exponent(2, grid.d, plan.params.gamma_is_zero)
    coarse_t = np.linspace(0.0, 5.0, 101)
    fine_t = np.linspace(0.0, 5.0, 201)
    s1, _ = picard_solve(u0, spec, plan, window, idx, cfg, coarse_t)
    s2, _ = picard_solve(u0, spec, plan, window, idx, cfg, fine_t)
    diff = s1.stack() - s2.stack()[::2]
    _, w = _weighted_series_norms(diff, coarse_t, idx, window, alpha)
    assert 0.0 < w.max() <= 4.0 * tol


def test_exponential_truncation_insensitivity(setting):
    grid, plan, window = setting
    u0 = gaussian_field(grid, amplitude=0.05)
    idx = ModIndex(4, 1, 0.0)
    tol = 1e-9
    t_grid = np.linspace(0.0, 5.0, 41)
    results = []
    for K in (3, 6):
        spec = NonlinearitySpec("exponential", lam=1.0, rho=1.0, K=K)
        cfg = SolverConfig(R=0.5, tol=tol, max_iter=20)
        series, diag = picard_solve(u0, spec, plan, window, idx, cfg, t_grid)
        results.append(series.stack())
    diff = results[0] - results[1]
    _, w = _weighted_series_norms(diff, t_grid, idx, window,
                                  decay_weight_exponent(2, 1, False))
    assert w.max() <= tol


# ---------------------------------------------------------------------------
# Contraction diagnostics
# ---------------------------------------------------------------------------

def _ball_series(grid, window, idx, t_grid, alpha, R, seed):
    fields = []
    for i, t in enumerate(t_grid):
        g = random_band_limited(grid, seed + i, radius=3.0)
        n = modulation_norm(g, idx, window)
        scale = R * (1.0 + abs(t)) ** (-alpha) / n
        fields.append(ComplexField(grid, g.values * scale, PHYSICAL))
    return SolutionSeries(t_grid, fields)


def test_contraction_degenerate(setting):
    grid, plan, window = setting
    idx = ModIndex(7, 1, 0.0)
    spec = NonlinearitySpec("power", m=5)
    cfg = SolverConfig(R=0.5, tol=1e-9, max_iter=10)
    alpha = decay_weight_exponent(5, 1, False)
    t_grid = np.linspace(0.0, 2.0, 11)
    u = _ball_series(grid, window, idx, t_grid, alpha, 0.4, seed=900)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        assert contraction_ratio(u, u, spec, plan, window, idx, cfg) == 0.0


def test_contraction_ball_check(setting):
    grid, plan, window = setting
    idx = ModIndex(7, 1, 0.0)
    spec = NonlinearitySpec("power", m=5)
    cfg = SolverConfig(R=0.1, tol=1e-9, max_iter=10)
    alpha = decay_weight_exponent(5, 1, False)
    t_grid = np.linspace(0.0, 2.0, 11)
    u = _ball_series(grid, window, idx, t_grid, alpha, 0.4, seed=900)
    v = _ball_series(grid, window, idx, t_grid, alpha, 0.4, seed=950)
    with pytest.raises(DomainError, match="ball"):
        contraction_ratio(u, v, spec, plan, window, idx, cfg)


def test_contraction_power_law_in_radius(setting):
    grid, plan, window = setting
    idx = ModIndex(4, 1, 0.0)
    m = 2
    spec = NonlinearitySpec("power", m=m)
    alpha = decay_weight_exponent(m, 1, False)
    t_grid = np.linspace(0.0, 2.0, 11)
    ratios = []
    for R in (0.4, 0.2, 0.1):
        cfg = SolverConfig(R=R, tol=1e-9, max_iter=10, allow_subthreshold=True)
        u = _ball_series(grid, window, idx, t_grid, alpha, R, seed=900)
        v = _ball_series(grid, window, idx, t_grid, alpha, R, seed=950)
        ratios.append(contraction_ratio(u, v, spec, plan, window, idx, cfg))
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[0] / ratios[1] == pytest.approx(2 ** m, rel=0.3)
    assert ratios[1] / ratios[2] == pytest.approx(2 ** m, rel=0.3)


# ---------------------------------------------------------------------------
# Kernel bound and self-map budget
# ---------------------------------------------------------------------------

def test_kernel_bound_zero_and_monotonicity():
    rep = kernel_integral_bound(5, 1, False, [0.0, 1.0, 10.0, 100.0])
    assert rep.values[0] == 0.0
    assert np.all(np.diff(rep.values) > 0.0)
    assert rep.converges_in_theory
    assert rep.tau_exponent == pytest.approx(15.0 / 14.0)


def test_kernel_bound_divergence_signature():
    ts = np.logspace(0, 4, 17)
    rep = kernel_integral_bound(1, 1, False, ts)
    assert not rep.converges_in_theory
    assert rep.tail_growth(decades=2.0) > 10.0


def test_selfmap_budget_power_smallness():
    spec = NonlinearitySpec("power", m=5)
    for R in (1e-2, 1e-4):
        v = selfmap_budget(R / 2.0, R, spec)
        assert v.admissible
        assert v.slack == pytest.approx(R / 2.0, rel=1e-3)
    big = selfmap_budget(0.9, 1.0, spec)
    assert not big.admissible


def test_selfmap_budget_exponential_closed_form():
    spec = NonlinearitySpec("exponential", lam=1.0, rho=1.0)
    R = 0.1
    v = selfmap_budget(0.0, R, spec)
    # the series sums to R * (exp(rho R^2) - 1)
    expected = R * math.expm1(1.0 * R * R)
    assert v.nonlinear_term == pytest.approx(expected, rel=1e-14)
    K = 40
    series = sum(R ** (2 * k + 1) / math.factorial(k) for k in range(1, K))
    assert expected == pytest.approx(series, rel=1e-12)


def test_admissible_radius_bisection_monotone():
    spec = NonlinearitySpec("power", m=3)
    r_star = admissible_radius_bound(spec, SelfMapConstants(1.0, 1.0),
                                     data_fraction=0.5)
    assert r_star > 0.0
    assert selfmap_budget(0.5 * r_star * 0.99, r_star * 0.99, spec).admissible
    assert not selfmap_budget(0.5 * r_star * 1.01, r_star * 1.01, spec).admissible
    # verdict is monotone along the ray u0 = R/2
    radii = np.linspace(0.01, 2.0, 40)
    flags = [selfmap_budget(0.5 * R, R, spec).admissible for R in radii]
    assert flags == sorted(flags, reverse=True)
