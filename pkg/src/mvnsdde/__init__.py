"""Tamed Euler-Maruyama particle simulator for mean-field neutral
stochastic differential delay equations, with coupled convergence studies.
"""

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateFitError,
    GridError,
    MvnsddeError,
    OverflowAbort,
    ShapeError,
    ValidationFailure,
)
from .experiments import (
    ErrorRow,
    ErrorTable,
    ExperimentReport,
    MomentMonitor,
    TamingReport,
    build_report,
    chaos_error_vs_particles,
    empirical_measure_rate,
    fit_loglog_slope,
    moment_bound_vs_dt,
    moment_monitor,
    strong_error_vs_dt,
    taming_comparison,
)
from .measure import (
    EmpiricalMeasure,
    measure_from_column,
    moment_wq,
    w2_1d,
    w2_assignment,
    w2sq_to_standard_normal_1d,
)
from .model import (
    ModelSpec,
    SchemeParams,
    ValidationReport,
    build_model,
    cubic_no_mf,
    example51,
    linear_meanfield,
    linear_meanfield_mean,
    validate,
)
from .noise import BrownianGrid, coarsen, generate, load
from .scheme import (
    ParticleGrid,
    TerminalRun,
    delayed_state,
    em_step,
    simulate,
    simulate_terminal,
    tame_drift,
)

__version__ = "0.1.0"

__all__ = [
    "BrownianGrid",
    "CapacityError",
    "ConfigError",
    "DegenerateFitError",
    "EmpiricalMeasure",
    "ErrorRow",
    "ErrorTable",
    "ExperimentReport",
    "GridError",
    "ModelSpec",
    "MomentMonitor",
    "MvnsddeError",
    "OverflowAbort",
    "ParticleGrid",
    "SchemeParams",
    "ShapeError",
    "TamingReport",
    "TerminalRun",
    "ValidationFailure",
    "ValidationReport",
    "build_model",
    "build_report",
    "chaos_error_vs_particles",
    "coarsen",
    "cubic_no_mf",
    "delayed_state",
    "em_step",
    "empirical_measure_rate",
    "example51",
    "fit_loglog_slope",
    "generate",
    "linear_meanfield",
    "linear_meanfield_mean",
    "load",
    "measure_from_column",
    "moment_bound_vs_dt",
    "moment_monitor",
    "moment_wq",
    "simulate",
    "simulate_terminal",
    "strong_error_vs_dt",
    "tame_drift",
    "taming_comparison",
    "validate",
    "w2_1d",
    "w2_assignment",
    "w2sq_to_standard_normal_1d",
]
