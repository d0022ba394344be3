"""Numerical toolkit for the nonlinear Schrodinger equation with higher-order
anisotropic dispersion: frequency-uniform band decompositions and
modulation-space norms, the exact linear propagator with dispersive-decay
meters, and a small-data Picard solver in time-weighted norms."""

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    ExperimentInvalidError,
    GridMismatchError,
    IterationLimitError,
    RepresentationError,
    ResolutionError,
    TruncationError,
)
from .fields import field_from_function, gaussian_field, plane_wave, random_band_limited
from .modulation import (
    BandDecomposition,
    DecaySeries,
    Window,
    band_lp_norms,
    band_project,
    band_project_spectral,
    build_window,
    decompose,
    embedding_defect,
    holder_defect,
    modulation_norm,
    smooth_bump,
    time_decay_norm,
    window_profile,
)
from .propagator import (
    DecayReport,
    PropagatorPlan,
    band_commutation_check,
    build_plan,
    decay_box_length,
    dispersive_scan,
    fit_loglog_slope,
    gaussian_spectral_radius,
    modulation_dispersive_scan,
    propagate,
)
from .solver import (
    KernelBoundReport,
    NonlinearitySpec,
    PicardDiagnostics,
    SelfMapConstants,
    SelfMapVerdict,
    SolutionSeries,
    SolverConfig,
    admissible_radius_bound,
    apply_nonlinearity,
    auto_truncation_order,
    contraction_ratio,
    duhamel,
    exp_series_tail,
    kernel_integral_bound,
    picard_map,
    picard_solve,
    selfmap_budget,
)
from .spectral import (
    ComplexField,
    ConstantsReport,
    DispersionParams,
    GridSpec,
    ModIndex,
    conjugate_exponent,
    constants_report,
    decay_exponent,
    decay_weight_exponent,
    dispersion_symbol,
    forward_transform,
    inverse_transform,
    japanese_bracket,
    l2_norm,
    lp_norm,
    margin_mass,
    power_threshold,
    symbol_on_grid,
    threshold_quadratic_coefficients,
)

__version__ = "0.1.0"
