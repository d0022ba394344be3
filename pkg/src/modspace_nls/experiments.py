"""Config-driven experiment runners and their structured outputs.

Each experiment family consumes one JSON config, validates it field by field
before any computation starts, and produces a ResultRecord holding the full
resolved config, the relevant closed-form constants, the numerical payload,
validity flags, and wall-clock timings. Emission writes versioned CSV tables,
a JSON summary, two-column .dat files per curve, and (optionally) rendered
figures. Identical config and seed reproduce byte-identical CSV, .dat, and
summary.json output; timings land in their own file.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    IterationLimitError,
)
from .fields import gaussian_field, random_band_limited
from .modulation import ModIndex, build_window, embedding_defect, holder_defect
from .propagator import (
    DecayReport,
    build_plan,
    decay_box_length,
    dispersive_scan,
    gaussian_spectral_radius,
    modulation_dispersive_scan,
)
from .solver import (
    NonlinearitySpec,
    SolverConfig,
    kernel_integral_bound,
    picard_solve,
)
from .spectral import (
    DispersionParams,
    GridSpec,
    constants_report,
    power_threshold,
)

logger = logging.getLogger(__name__)

OUTDIR_ENV = "MODSPACE_NLS_OUTDIR"
SCHEMA_PREFIX = "modspace-nls"

EXPERIMENT_KINDS = ("decay", "modulation_decay", "existence", "scan")
SCAN_KINDS = ("holder", "embedding", "kernel")

MAX_AUTO_POINTS = 1 << 24


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


# ---------------------------------------------------------------------------
# Config loading, overrides, validation
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc


def apply_overrides(cfg: dict, pairs) -> dict:
    """Apply KEY=VALUE overrides with dotted key paths; values parse as JSON
    first and fall back to strings."""
    out = json.loads(json.dumps(cfg))
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "override must have the form KEY=VALUE")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-object value")
        node[parts[-1]] = value
    return out


def _section(cfg: dict, name: str, required: bool = True) -> dict | None:
    if name not in cfg:
        if required:
            raise ConfigError(name, "required section missing")
        return None
    if not isinstance(cfg[name], dict):
        raise ConfigError(name, "must be an object")
    return cfg[name]


def _value(sec: dict, path: str, key: str, required: bool = True, default=None):
    if key not in sec:
        if required:
            raise ConfigError(f"{path}.{key}", "required field missing")
        return default
    return sec[key]


def _number(sec, path, key, required=True, default=None, lo=None, hi=None):
    v = _value(sec, path, key, required, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}.{key}", f"must be <= {hi}, got {v}")
    return v


def _integer(sec, path, key, required=True, default=None, lo=None):
    v = _value(sec, path, key, required, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v}")
    return int(v)


def _boolean(sec, path, key, required=True, default=None):
    v = _value(sec, path, key, required, default)
    if v is None:
        return None
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {v!r}")
    return v


def _exponent(sec, path, key, required=True, default=None, lo=1.0):
    v = _value(sec, path, key, required, default)
    if v is None:
        return None
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"{path}.{key}", f"expected a number or 'inf', got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number or 'inf', got {v!r}")
    v = float(v)
    if v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v}")
    return v


def build_dispersion(cfg: dict) -> DispersionParams:
    sec = _section(cfg, "dispersion")
    alpha = _number(sec, "dispersion", "alpha")
    beta = _number(sec, "dispersion", "beta")
    gamma = _number(sec, "dispersion", "gamma")
    try:
        return DispersionParams(alpha, beta, gamma)
    except DomainError as exc:
        raise ConfigError("dispersion", str(exc)) from exc


def build_mod_index(cfg: dict, name: str = "modulation") -> ModIndex:
    sec = _section(cfg, name)
    return _mod_index_from(sec, name)


def _mod_index_from(sec: dict, path: str) -> ModIndex:
    p = _exponent(sec, path, "p")
    q = _exponent(sec, path, "q")
    s = _number(sec, path, "s", required=False, default=0.0, lo=0.0)
    try:
        return ModIndex(p, q, s)
    except DomainError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_times(cfg: dict) -> np.ndarray:
    sec = _section(cfg, "times")
    start = _number(sec, "times", "start")
    stop = _number(sec, "times", "stop")
    count = _integer(sec, "times", "count", lo=2)
    spacing = _value(sec, "times", "spacing", required=False, default="log")
    include_zero = _boolean(sec, "times", "include_zero", required=False, default=False)
    if spacing not in ("log", "linear"):
        raise ConfigError("times.spacing", f"must be 'log' or 'linear', got {spacing!r}")
    if stop <= start:
        raise ConfigError("times.stop", "must exceed times.start")
    if spacing == "log":
        if start <= 0.0:
            raise ConfigError("times.start", "log spacing requires a positive start")
        t = np.logspace(math.log10(start), math.log10(stop), count)
    else:
        t = np.linspace(start, stop, count)
    if include_zero:
        t = np.concatenate([[0.0], t])
    return t


def _next_power_of_two(x: float) -> int:
    n = 4
    while n < x:
        n *= 2
    return n


def build_grid(cfg: dict, params: DispersionParams | None = None,
               t_max: float | None = None) -> GridSpec:
    sec = _section(cfg, "grid")
    d = _integer(sec, "grid", "d", lo=1)
    if "auto_box" in sec:
        auto = sec["auto_box"]
        if not isinstance(auto, dict):
            raise ConfigError("grid.auto_box", "must be an object")
        if params is None or t_max is None:
            raise ConfigError("grid.auto_box", "automatic box sizing needs "
                              "dispersion parameters and a time horizon")
        resolution = _number(auto, "grid.auto_box", "resolution", lo=1e-12)
        cutoff = _number(auto, "grid.auto_box", "cutoff", required=False,
                         default=1e-5, lo=1e-300, hi=0.5)
        factor = _number(auto, "grid.auto_box", "safety_factor", required=False,
                         default=4.0, lo=1.0)
        data = _section(cfg, "initial_data")
        kind = _value(data, "initial_data", "kind")
        if kind == "gaussian":
            width = _number(data, "initial_data", "width", required=False,
                            default=1.0, lo=1e-12)
            radius = gaussian_spectral_radius(width, cutoff)
        elif kind == "random_band_limited":
            radius = _number(data, "initial_data", "radius", lo=1e-12) + 1.0
        else:
            raise ConfigError("initial_data.kind", f"unknown kind {kind!r}")
        L = decay_box_length(params, radius, t_max, factor)
        n = _next_power_of_two(L / resolution)
        if n ** d > MAX_AUTO_POINTS:
            raise ConfigError("grid.auto_box.resolution",
                              f"computed grid of {n}^{d} points is too large")
        return GridSpec.regular(d, n, L)
    n = _value(sec, "grid", "n")
    box = _value(sec, "grid", "box_length")
    if isinstance(n, int):
        n = [n] * d
    if isinstance(box, (int, float)):
        box = [box] * d
    if not isinstance(n, list) or len(n) != d:
        raise ConfigError("grid.n", f"expected an integer or list of {d} integers")
    if not isinstance(box, list) or len(box) != d:
        raise ConfigError("grid.box_length", f"expected a number or list of {d} numbers")
    try:
        return GridSpec(tuple(n), tuple(box))
    except DomainError as exc:
        raise ConfigError("grid", str(exc)) from exc


def build_initial_field(cfg: dict, grid: GridSpec, seed: int):
    sec = _section(cfg, "initial_data")
    kind = _value(sec, "initial_data", "kind")
    amplitude = _number(sec, "initial_data", "amplitude", required=False, default=1.0)
    if kind == "gaussian":
        width = _number(sec, "initial_data", "width", required=False, default=1.0,
                        lo=1e-12)
        center = _value(sec, "initial_data", "center", required=False)
        return gaussian_field(grid, amplitude=amplitude, width=width, center=center)
    if kind == "random_band_limited":
        radius = _number(sec, "initial_data", "radius", lo=1e-12)
        dseed = _integer(sec, "initial_data", "seed", required=False, default=seed)
        return random_band_limited(grid, dseed, radius, amplitude=amplitude)
    raise ConfigError("initial_data.kind", f"unknown kind {kind!r}")


def build_nonlinearity(cfg: dict) -> NonlinearitySpec:
    sec = _section(cfg, "nonlinearity")
    kind = _value(sec, "nonlinearity", "kind")
    try:
        if kind == "power":
            return NonlinearitySpec(
                "power",
                m=_integer(sec, "nonlinearity", "m", lo=1),
                sign=_integer(sec, "nonlinearity", "sign", required=False, default=1),
                variant=_value(sec, "nonlinearity", "variant", required=False,
                               default="modulus"),
            )
        if kind == "exponential":
            lam = _value(sec, "nonlinearity", "lam", required=False, default=[1.0, 0.0])
            if isinstance(lam, (int, float)) and not isinstance(lam, bool):
                lam = complex(float(lam), 0.0)
            elif isinstance(lam, list) and len(lam) == 2:
                lam = complex(float(lam[0]), float(lam[1]))
            else:
                raise ConfigError("nonlinearity.lam",
                                  "expected a number or [re, im] pair")
            return NonlinearitySpec(
                "exponential", lam=lam,
                rho=_number(sec, "nonlinearity", "rho", required=False, default=1.0,
                            lo=1e-300),
                K=_integer(sec, "nonlinearity", "K", required=False, lo=1),
            )
    except DomainError as exc:
        raise ConfigError("nonlinearity", str(exc)) from exc
    raise ConfigError("nonlinearity.kind", f"unknown kind {kind!r}")


def build_solver_config(cfg: dict) -> SolverConfig:
    sec = _section(cfg, "solver")
    try:
        return SolverConfig(
            R=_number(sec, "solver", "R", lo=1e-300),
            tol=_number(sec, "solver", "tol", lo=1e-300),
            max_iter=_integer(sec, "solver", "max_iter", lo=1),
            delta=_number(sec, "solver", "delta", required=False),
            allow_subthreshold=_boolean(sec, "solver", "allow_subthreshold",
                                        required=False, default=False),
        )
    except DomainError as exc:
        raise ConfigError("solver", str(exc)) from exc


def _tolerances(cfg: dict) -> dict:
    sec = _section(cfg, "tolerances", required=False) or {}
    return {
        "margin_threshold": _number(sec, "tolerances", "margin_threshold",
                                    required=False, default=1e-6, lo=0.0),
        "slope_rtol": _number(sec, "tolerances", "slope_rtol", required=False,
                              default=0.15, lo=0.0),
        "flat_slope_tol": _number(sec, "tolerances", "flat_slope_tol",
                                  required=False, default=0.02, lo=0.0),
        "ratio_bound": _number(sec, "tolerances", "ratio_bound", required=False,
                               default=3.0, lo=1.0),
        "scan_refine_rtol": _number(sec, "tolerances", "scan_refine_rtol",
                                    required=False, default=0.05, lo=0.0),
    }


def validate_config(cfg: dict) -> dict:
    """Check every field an experiment will touch; raise ConfigError naming
    the offending key. Returns the config with defaults filled in."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    kind = cfg.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError("experiment",
                          f"must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    out = json.loads(json.dumps(cfg))
    out.setdefault("seed", 0)
    if not isinstance(out["seed"], int) or isinstance(out["seed"], bool):
        raise ConfigError("seed", "must be an integer")
    out.setdefault("outdir", f"runs/{kind}")
    if not isinstance(out["outdir"], str):
        raise ConfigError("outdir", "must be a string path")
    out.setdefault("emit_figures", True)
    if not isinstance(out["emit_figures"], bool):
        raise ConfigError("emit_figures", "must be a boolean")
    out.setdefault("workers", 1)
    if not isinstance(out["workers"], int) or out["workers"] < 1:
        raise ConfigError("workers", "must be a positive integer")
    _tolerances(out)

    if kind in ("decay", "modulation_decay"):
        params = build_dispersion(out)
        times = build_times(out)
        build_grid(out, params, float(times.max()))
        sec = _section(out, "initial_data")
        _value(sec, "initial_data", "kind")
        if kind == "decay":
            p = _exponent(out, "<root>", "lebesgue_p")
            if p < 2.0:
                raise ConfigError("lebesgue_p", "decay estimates require p >= 2")
        else:
            idx = build_mod_index(out)
            if idx.p < 2.0:
                raise ConfigError("modulation.p", "decay estimates require p >= 2")
    elif kind == "existence":
        params = build_dispersion(out)
        build_grid(out)
        build_mod_index(out)
        build_nonlinearity(out)
        build_solver_config(out)
        sec = _section(out, "solver")
        _number(sec, "solver", "t_max", lo=1e-300)
        _integer(sec, "solver", "t_count", lo=2)
        _boolean(sec, "solver", "allow_divergence", required=False, default=False)
        _boolean(sec, "solver", "bisect_delta", required=False, default=False)
        _integer(sec, "solver", "bisect_steps", required=False, default=6, lo=1)
        _section(out, "initial_data")
    elif kind == "scan":
        sec = _section(out, "scan")
        skind = _value(sec, "scan", "kind")
        if skind not in SCAN_KINDS:
            raise ConfigError("scan.kind", f"must be one of {SCAN_KINDS}, got {skind!r}")
        if skind == "holder":
            build_grid(out)
            _integer(sec, "scan", "pairs", lo=1)
            p = _exponent(sec, "scan", "p")
            p1 = _exponent(sec, "scan", "p1")
            p2 = _exponent(sec, "scan", "p2")
            inv = lambda e: 0.0 if math.isinf(e) else 1.0 / e
            if abs(inv(p1) + inv(p2) - inv(p)) > 1e-12:
                raise ConfigError("scan.p", "needs 1/p = 1/p1 + 1/p2")
            q = _exponent(sec, "scan", "q", required=False, default=1.0)
            s = _number(sec, "scan", "s", required=False, default=0.0, lo=0.0)
            d = _integer(_section(out, "grid"), "grid", "d", lo=1)
            if not ModIndex(p, q, s).admissible(d):
                raise ConfigError("scan.q", "index (q, s) fails the admissibility "
                                  "hypothesis for the product inequality")
            _number(sec, "scan", "radius", lo=1e-12)
            _boolean(sec, "scan", "refine", required=False, default=True)
        elif skind == "embedding":
            build_grid(out)
            _integer(sec, "scan", "count", lo=1)
            _number(sec, "scan", "radius", lo=1e-12)
            src = _value(sec, "scan", "from")
            dst = _value(sec, "scan", "to")
            if not isinstance(src, dict) or not isinstance(dst, dict):
                raise ConfigError("scan.from", "'from' and 'to' must be index objects")
            fi = _mod_index_from(src, "scan.from")
            ti = _mod_index_from(dst, "scan.to")
            d = _integer(_section(out, "grid"), "grid", "d", lo=1)
            if fi.p > ti.p:
                raise ConfigError("scan.from.p", "embedding requires p1 <= p2")
            branch_a = (fi.q <= ti.q) and (fi.s >= ti.s)
            dq = (0.0 if math.isinf(ti.q) else d / ti.q) - \
                 (0.0 if math.isinf(fi.q) else d / fi.q)
            branch_b = (ti.q < fi.q) and (fi.s > ti.s + dq)
            if not (branch_a or branch_b):
                raise ConfigError("scan.from", "index pair satisfies neither "
                                  "embedding hypothesis")
        else:
            mv = _value(sec, "scan", "m_values")
            if (not isinstance(mv, list) or not mv
                    or not all(isinstance(m, int) and m >= 1 for m in mv)):
                raise ConfigError("scan.m_values", "expected a nonempty list of "
                                  "positive integers")
            _integer(sec, "scan", "d", lo=1)
            _boolean(sec, "scan", "gamma_is_zero")
            _number(sec, "scan", "t_start", required=False, default=1.0, lo=0.0)
            _number(sec, "scan", "t_stop", required=False, default=1e6, lo=1e-300)
            _integer(sec, "scan", "t_count", required=False, default=25, lo=2)
            _number(sec, "scan", "growth_threshold", required=False, default=1.7,
                    lo=1.0)
    return out


# ---------------------------------------------------------------------------
# Payloads and records
# ---------------------------------------------------------------------------

@dataclass
class ExistencePayload:
    verdict: str
    t_grid: np.ndarray
    node_norms: np.ndarray
    weighted_norms: np.ndarray
    residuals: list
    contraction_ratios: list
    diagnostics: dict
    bisection: dict | None = None


@dataclass
class HolderScanPayload:
    ratios: np.ndarray
    degenerate: np.ndarray
    max_ratio: float
    refined_max_ratio: float | None
    refinement_delta: float | None


@dataclass
class EmbeddingScanPayload:
    ratios: np.ndarray
    max_ratio: float
    min_ratio: float


@dataclass
class KernelScanPayload:
    reports: dict
    classification: dict
    growth_threshold: float


@dataclass
class ResultRecord:
    """Everything one run produced, traceable to its config and seed."""

    experiment: str
    config: dict
    verdict: str
    payload: object
    constants: dict = field(default_factory=dict)
    validity: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _map_indexed(fn, items, workers: int):
    """Apply fn to enumerate(items), preserving input order in the result."""
    if workers <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, item) for i, item in enumerate(items)]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_decay_experiment(cfg: dict) -> ResultRecord:
    """Decay of Lebesgue or modulation norms under the linear flow."""
    cfg = validate_config(cfg)
    kind = cfg["experiment"]
    if kind not in ("decay", "modulation_decay"):
        raise ConfigError("experiment", f"not a decay experiment: {kind!r}")
    tol = _tolerances(cfg)
    t0 = time.perf_counter()
    params = build_dispersion(cfg)
    times = build_times(cfg)
    grid = build_grid(cfg, params, float(times.max()))
    f = build_initial_field(cfg, grid, cfg["seed"])
    plan = build_plan(grid, params)
    fit_window = tuple(cfg["fit_window"]) if "fit_window" in cfg else None
    setup_s = time.perf_counter() - t0

    t1 = time.perf_counter()
    if kind == "decay":
        p = _exponent(cfg, "<root>", "lebesgue_p")
        report = dispersive_scan(f, p, times, plan,
                                 margin_threshold=tol["margin_threshold"],
                                 fit_window=fit_window)
    else:
        idx = build_mod_index(cfg)
        window = build_window(grid.d, grid)
        report = modulation_dispersive_scan(f, idx, times, plan, window,
                                            margin_threshold=tol["margin_threshold"],
                                            fit_window=fit_window)
    scan_s = time.perf_counter() - t1

    verdict = _decay_verdict(report, tol)
    constants = {"mu": report.mu, "d": grid.d,
                 "gamma_is_zero": params.gamma_is_zero}
    validity = {
        "all_samples_valid": bool(report.valid.all()),
        "valid_samples": int(report.valid.sum()),
        "total_samples": int(report.valid.size),
        "max_margin_mass": float(report.margin_mass.max()),
    }
    cfg["resolved_grid"] = {"n": list(grid.n), "box_length": list(grid.box_length)}
    return ResultRecord(kind, cfg, verdict, report, constants, validity,
                        {"setup_s": setup_s, "scan_s": scan_s})


def _decay_verdict(report: DecayReport, tol: dict) -> str:
    slope = report.fitted_slope
    if report.kind == "modulation":
        r = report.valid_ratios()
        r = r[r > 0.0]
        if r.size == 0:
            return "no-valid-samples"
        spread = float(r.max() / r.min())
        return "bounded" if spread <= tol["ratio_bound"] else "ratio-spread-exceeded"
    if report.mu == 0.0:
        if slope is None:
            return "no-fit"
        return "flat" if abs(slope) <= tol["flat_slope_tol"] else "not-flat"
    if slope is None:
        return "no-fit"
    lo = -report.mu * (1.0 + tol["slope_rtol"])
    hi = -report.mu * (1.0 - tol["slope_rtol"])
    if lo <= slope <= hi:
        return "decay-consistent"
    return "faster-than-predicted" if slope < lo else "slower-than-predicted"


def run_existence_experiment(cfg: dict) -> ResultRecord:
    """Small-data global existence at desk scale via the Picard iteration."""
    cfg = validate_config(cfg)
    if cfg["experiment"] != "existence":
        raise ConfigError("experiment", "not an existence experiment")
    t0 = time.perf_counter()
    params = build_dispersion(cfg)
    grid = build_grid(cfg)
    spec = build_nonlinearity(cfg)
    idx = build_mod_index(cfg)
    solver_cfg = build_solver_config(cfg)
    sec = _section(cfg, "solver")
    t_max = _number(sec, "solver", "t_max")
    t_count = _integer(sec, "solver", "t_count")
    allow_divergence = _boolean(sec, "solver", "allow_divergence",
                                required=False, default=False)
    t_grid = np.linspace(0.0, t_max, t_count)
    u0 = build_initial_field(cfg, grid, cfg["seed"])
    window = build_window(grid.d, grid)
    plan = build_plan(grid, params)
    setup_s = time.perf_counter() - t0

    if spec.kind == "power" and spec.m <= power_threshold(grid.d, params.gamma_is_zero) \
            and not solver_cfg.allow_subthreshold:
        raise ConfigError("solver.allow_subthreshold",
                          f"power m = {spec.m} is below the admissible threshold; "
                          "set this flag for a counter-experiment")

    t1 = time.perf_counter()
    diag = None
    try:
        series, diag = picard_solve(u0, spec, plan, window, idx, solver_cfg, t_grid)
        verdict = "converged-in-ball" if diag.in_ball else "converged-out-of-ball"
    except DivergenceError as exc:
        diag = exc.diagnostics
        verdict = "diverged"
    except IterationLimitError as exc:
        diag = exc.diagnostics
        verdict = "no-convergence"
    solve_s = time.perf_counter() - t1

    bisection = None
    if _boolean(sec, "solver", "bisect_delta", required=False, default=False):
        bisection = _bisect_amplitude(cfg, grid, params, spec, idx, solver_cfg,
                                      window, plan, t_grid)

    payload = ExistencePayload(
        verdict=verdict, t_grid=t_grid, node_norms=diag.node_norms,
        weighted_norms=diag.weighted_norms, residuals=diag.residuals,
        contraction_ratios=diag.contraction_ratios, diagnostics=diag.to_dict(),
        bisection=bisection)
    constants = constants_report(grid.d, params.gamma_is_zero,
                                 spec.effective_power,
                                 spec.effective_power + 2).to_dict()
    validity = {"in_ball": diag.in_ball, "converged": diag.converged,
                "allow_divergence": allow_divergence}
    cfg["resolved_grid"] = {"n": list(grid.n), "box_length": list(grid.box_length)}
    return ResultRecord("existence", cfg, verdict, payload, constants, validity,
                        {"setup_s": setup_s, "solve_s": solve_s})


def _bisect_amplitude(cfg, grid, params, spec, idx, solver_cfg, window, plan,
                      t_grid) -> dict:
    """Locate the data amplitude where convergence is lost, by bisection on a
    scale factor applied to the configured initial data."""
    sec = _section(cfg, "solver")
    steps = _integer(sec, "solver", "bisect_steps", required=False, default=6)
    base = build_initial_field(cfg, grid, cfg["seed"])
    probes = []

    def converges(scale: float) -> bool:
        from .spectral import ComplexField, PHYSICAL
        u0 = ComplexField(grid, base.values * scale, PHYSICAL)
        try:
            _, d = picard_solve(u0, spec, plan, window, idx, solver_cfg, t_grid)
            ok = d.converged
        except (DivergenceError, IterationLimitError):
            ok = False
        probes.append({"scale": scale, "converged": ok})
        return ok

    lo, hi = 1.0, 1.0
    if converges(1.0):
        for _ in range(12):
            hi *= 2.0
            if not converges(hi):
                break
            lo = hi
        else:
            return {"probes": probes, "threshold_scale": None,
                    "note": "no failure found within the scale range"}
    else:
        for _ in range(12):
            lo /= 2.0
            if converges(lo):
                break
            hi = lo
        else:
            return {"probes": probes, "threshold_scale": None,
                    "note": "no convergence found within the scale range"}
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return {"probes": probes, "threshold_scale": lo}


def run_scan(cfg: dict) -> ResultRecord:
    """Product-inequality, embedding, or kernel-bound scans."""
    cfg = validate_config(cfg)
    if cfg["experiment"] != "scan":
        raise ConfigError("experiment", "not a scan experiment")
    sec = _section(cfg, "scan")
    skind = sec["kind"]
    tol = _tolerances(cfg)
    t0 = time.perf_counter()
    if skind == "holder":
        record = _run_holder_scan(cfg, sec, tol)
    elif skind == "embedding":
        record = _run_embedding_scan(cfg, sec)
    else:
        record = _run_kernel_scan(cfg, sec)
    record.timings["total_s"] = time.perf_counter() - t0
    return record


def _holder_ratios(grid, cfg, sec, pairs, workers):
    window = build_window(grid.d, grid)
    idx = ModIndex(_exponent(sec, "scan", "p"),
                   _exponent(sec, "scan", "q", required=False, default=1.0),
                   _number(sec, "scan", "s", required=False, default=0.0))
    p1 = _exponent(sec, "scan", "p1")
    p2 = _exponent(sec, "scan", "p2")
    radius = _number(sec, "scan", "radius")
    seed = cfg["seed"]

    def one(i, _):
        f = random_band_limited(grid, seed + 2 * i, radius)
        g = random_band_limited(grid, seed + 2 * i + 1, radius)
        return holder_defect(f, g, p1, p2, idx, window)

    vals = _map_indexed(one, range(pairs), workers)
    return np.asarray(vals, dtype=float)


def _run_holder_scan(cfg, sec, tol) -> ResultRecord:
    grid = build_grid(cfg)
    pairs = _integer(sec, "scan", "pairs")
    refine = _boolean(sec, "scan", "refine", required=False, default=True)
    ratios = _holder_ratios(grid, cfg, sec, pairs, cfg["workers"])
    refined_max = None
    delta = None
    if refine:
        fine = GridSpec(tuple(2 * m for m in grid.n), grid.box_length)
        ratios_fine = _holder_ratios(fine, cfg, sec, pairs, cfg["workers"])
        refined_max = float(ratios_fine.max())
        delta = abs(refined_max - float(ratios.max())) / max(float(ratios.max()), 1e-300)
    payload = HolderScanPayload(
        ratios=ratios, degenerate=(ratios == 0.0), max_ratio=float(ratios.max()),
        refined_max_ratio=refined_max, refinement_delta=delta)
    if delta is None:
        verdict = "recorded"
    else:
        verdict = "stable" if delta <= tol["scan_refine_rtol"] else "refinement-unstable"
    cfg["resolved_grid"] = {"n": list(grid.n), "box_length": list(grid.box_length)}
    return ResultRecord("scan", cfg, verdict, payload,
                        constants={"d": grid.d},
                        validity={"pairs": pairs, "degenerate": int((ratios == 0.0).sum())},
                        timings={})


def _run_embedding_scan(cfg, sec) -> ResultRecord:
    grid = build_grid(cfg)
    window = build_window(grid.d, grid)
    from_idx = _mod_index_from(sec["from"], "scan.from")
    to_idx = _mod_index_from(sec["to"], "scan.to")
    count = _integer(sec, "scan", "count")
    radius = _number(sec, "scan", "radius")
    seed = cfg["seed"]

    def one(i, _):
        f = random_band_limited(grid, seed + i, radius)
        return embedding_defect(f, from_idx, to_idx, window)

    vals = np.asarray(_map_indexed(one, range(count), cfg["workers"]), dtype=float)
    payload = EmbeddingScanPayload(ratios=vals, max_ratio=float(vals.max()),
                                   min_ratio=float(vals.min()))
    cfg["resolved_grid"] = {"n": list(grid.n), "box_length": list(grid.box_length)}
    return ResultRecord("scan", cfg, "recorded", payload,
                        constants={"d": grid.d},
                        validity={"count": count}, timings={})


def _run_kernel_scan(cfg, sec) -> ResultRecord:
    m_values = sec["m_values"]
    d = _integer(sec, "scan", "d")
    gz = _boolean(sec, "scan", "gamma_is_zero")
    t_start = _number(sec, "scan", "t_start", required=False, default=1.0)
    t_stop = _number(sec, "scan", "t_stop", required=False, default=1e6)
    t_count = _integer(sec, "scan", "t_count", required=False, default=25)
    threshold = _number(sec, "scan", "growth_threshold", required=False, default=1.7)
    t_samples = np.logspace(math.log10(max(t_start, 1e-12)), math.log10(t_stop),
                            t_count)

    def one(i, m):
        return kernel_integral_bound(m, d, gz, t_samples)

    reports = dict(zip(m_values, _map_indexed(one, m_values, cfg["workers"])))
    m0 = power_threshold(d, gz)
    classification = {}
    for m, rep in reports.items():
        growth = rep.tail_growth(decades=2.0)
        classification[m] = {
            "sup": rep.sup,
            "tail_growth_two_decades": growth,
            "classified": "divergent" if growth > threshold else "finite",
            "theory": "finite" if m > m0 else "divergent",
        }
    payload = KernelScanPayload(reports=reports, classification=classification,
                                growth_threshold=threshold)
    agreement = all(v["classified"] == v["theory"] for v in classification.values())
    return ResultRecord("scan", cfg, "classified", payload,
                        constants={"m0": m0, "d": d, "gamma_is_zero": gz},
                        validity={"matches_theory": agreement}, timings={})


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def resolve_outdir(cfg: dict) -> Path:
    env = os.environ.get(OUTDIR_ENV)
    return Path(env) if env else Path(cfg["outdir"])


def _write_csv(path: Path, schema: str, header: list, rows) -> Path:
    lines = [f"# schema: {SCHEMA_PREFIX}/{schema}", ",".join(header)]
    for row in rows:
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _decay_rows(report: DecayReport):
    for i in range(report.times.size):
        yield (_fmt(report.times[i]), _fmt(report.raw_norms[i]),
               _fmt(report.ratios[i]), _fmt(report.margin_mass[i]),
               "1" if report.valid[i] else "0")


def write_record_csv(record: ResultRecord, outdir: Path) -> list:
    """Write the experiment's CSV tables; returns the paths written."""
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    payload = record.payload
    if isinstance(payload, DecayReport):
        paths.append(_write_csv(
            outdir / "decay.csv", "decay-v1",
            ["t", "raw_norm", "compensated_ratio", "margin_mass", "valid"],
            _decay_rows(payload)))
    elif isinstance(payload, ExistencePayload):
        rows = []
        for i, r in enumerate(payload.residuals):
            ratio = payload.contraction_ratios[i - 1] if i >= 1 else float("nan")
            rows.append((str(i + 1), _fmt(r), _fmt(ratio)))
        paths.append(_write_csv(outdir / "convergence.csv", "convergence-v1",
                                ["iteration", "residual", "contraction_ratio"], rows))
        rows = [(_fmt(t), _fmt(n), _fmt(w)) for t, n, w in
                zip(payload.t_grid, payload.node_norms, payload.weighted_norms)]
        paths.append(_write_csv(outdir / "weighted_norm.csv", "weighted-norm-v1",
                                ["t", "mod_norm", "weighted_norm"], rows))
    elif isinstance(payload, HolderScanPayload):
        rows = [(str(i), _fmt(r), "1" if payload.degenerate[i] else "0")
                for i, r in enumerate(payload.ratios)]
        paths.append(_write_csv(outdir / "holder.csv", "holder-v1",
                                ["index", "ratio", "degenerate"], rows))
    elif isinstance(payload, EmbeddingScanPayload):
        rows = [(str(i), _fmt(r)) for i, r in enumerate(payload.ratios)]
        paths.append(_write_csv(outdir / "embedding.csv", "embedding-v1",
                                ["index", "ratio"], rows))
    elif isinstance(payload, KernelScanPayload):
        rows = []
        for m in sorted(payload.reports):
            rep = payload.reports[m]
            for t, v in zip(rep.times, rep.values):
                rows.append((str(m), _fmt(t), _fmt(v)))
        paths.append(_write_csv(outdir / "kernel.csv", "kernel-v1",
                                ["m", "t", "value"], rows))
    return paths


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return repr(obj)
    return obj


def summary_dict(record: ResultRecord) -> dict:
    payload = record.payload
    extra: dict = {}
    if isinstance(payload, DecayReport):
        extra = {"fitted_slope": payload.fitted_slope, "mu": payload.mu,
                 "fit_window": list(payload.fit_window),
                 "reference_norm": payload.reference_norm}
        r = payload.valid_ratios()
        r = r[r > 0.0]
        if r.size:
            extra["ratio_max"] = float(r.max())
            extra["ratio_min"] = float(r.min())
            extra["ratio_spread"] = float(r.max() / r.min())
    elif isinstance(payload, ExistencePayload):
        extra = {"diagnostics": payload.diagnostics}
        if payload.bisection is not None:
            extra["bisection"] = payload.bisection
    elif isinstance(payload, HolderScanPayload):
        extra = {"max_ratio": payload.max_ratio,
                 "refined_max_ratio": payload.refined_max_ratio,
                 "refinement_delta": payload.refinement_delta}
    elif isinstance(payload, EmbeddingScanPayload):
        extra = {"max_ratio": payload.max_ratio, "min_ratio": payload.min_ratio}
    elif isinstance(payload, KernelScanPayload):
        extra = {"classification": payload.classification,
                 "growth_threshold": payload.growth_threshold}
    return _json_safe({
        "experiment": record.experiment,
        "verdict": record.verdict,
        "config": record.config,
        "constants": record.constants,
        "validity": record.validity,
        "summary": extra,
    })


def write_summary(record: ResultRecord, outdir: Path) -> list:
    """summary.json is byte-deterministic for a given config and seed; the
    wall-clock timings go to a separate file."""
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "summary.json"
    path.write_text(json.dumps(summary_dict(record), indent=2, sort_keys=True) + "\n")
    tpath = outdir / "timings.json"
    tpath.write_text(json.dumps(_json_safe(record.timings), indent=2,
                                sort_keys=True) + "\n")
    return [path, tpath]


def _write_dat(path: Path, xs, ys) -> Path:
    lines = [f"{_fmt(x)} {_fmt(y)}" for x, y in zip(xs, ys)]
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_plot_data(record: ResultRecord, path) -> list:
    """Two-column whitespace-separated text files, one per curve.

    File names are fixed per experiment and curve, so downstream plotting is
    reproducible. An empty payload writes nothing and logs a warning.
    """
    outdir = Path(path)
    payload = record.payload
    written: list[Path] = []
    if payload is None:
        logger.warning("empty payload: no plot data written")
        return written
    outdir.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, DecayReport):
        if payload.times.size == 0:
            logger.warning("empty decay report: no plot data written")
            return written
        written.append(_write_dat(outdir / "decay_raw.dat", payload.times,
                                  payload.raw_norms))
        written.append(_write_dat(outdir / "decay_compensated.dat", payload.times,
                                  payload.ratios))
    elif isinstance(payload, ExistencePayload):
        if not payload.residuals:
            logger.warning("empty convergence history: no plot data written")
            return written
        written.append(_write_dat(outdir / "picard_residual.dat",
                                  range(1, len(payload.residuals) + 1),
                                  payload.residuals))
        written.append(_write_dat(outdir / "weighted_norm.dat", payload.t_grid,
                                  payload.weighted_norms))
    elif isinstance(payload, HolderScanPayload):
        if payload.ratios.size == 0:
            logger.warning("empty scan: no plot data written")
            return written
        written.append(_write_dat(outdir / "holder_ratios.dat",
                                  range(payload.ratios.size), payload.ratios))
    elif isinstance(payload, EmbeddingScanPayload):
        if payload.ratios.size == 0:
            logger.warning("empty scan: no plot data written")
            return written
        written.append(_write_dat(outdir / "embedding_ratios.dat",
                                  range(payload.ratios.size), payload.ratios))
    elif isinstance(payload, KernelScanPayload):
        if not payload.reports:
            logger.warning("empty kernel scan: no plot data written")
            return written
        for m in sorted(payload.reports):
            rep = payload.reports[m]
            written.append(_write_dat(outdir / f"kernel_m{m}.dat", rep.times,
                                      rep.values))
    else:
        logger.warning("unknown payload type %s: no plot data written",
                       type(payload).__name__)
    return written


def emit_record(record: ResultRecord, outdir=None, emit_figures=None) -> list:
    """Write CSVs, summary JSON, plot data, and figures for one record."""
    out = Path(outdir) if outdir is not None else resolve_outdir(record.config)
    paths = write_record_csv(record, out)
    paths.extend(write_summary(record, out))
    paths.extend(emit_plot_data(record, out))
    if emit_figures is None:
        emit_figures = record.config.get("emit_figures", True)
    if emit_figures:
        from .figures import render_record
        paths.extend(render_record(record, out / "figures"))
    return paths


RUNNERS = {
    "decay": run_decay_experiment,
    "modulation_decay": run_decay_experiment,
    "existence": run_existence_experiment,
    "scan": run_scan,
}


def run_experiment(cfg: dict) -> ResultRecord:
    kind = cfg.get("experiment")
    if kind not in RUNNERS:
        raise ConfigError("experiment",
                          f"must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    return RUNNERS[kind](cfg)
