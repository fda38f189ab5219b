"""Quantile tobit regression for left-censored positive responses.

The response is modeled through a quantile-parameterized log-symmetric law:
regression structures sit on the 100q-th conditional quantile and on the
dispersion, censored observations enter the likelihood through the
distribution function, and the family's extra parameter is profiled on a
grid.  See the README for the command-line interface.
"""

from .diagnostics import ResidualReport, blom_positions, mt_residuals, simulated_envelope
from .estimator import (
    FitConfig,
    FitResult,
    QSelection,
    default_xi_grid,
    fit,
    initial_theta,
    percent_effect,
    select_q,
)
from .generators import (
    ExtendedBirnbaumSaunders,
    Generator,
    LogNormal,
    LogPowerExponential,
    LogStudentT,
    QlsParams,
    make_generator,
    qls_cdf,
    qls_logpdf,
    qls_logsf,
    qls_pdf,
    qls_sample,
    qls_sf,
)
from .model import (
    CollinearDesignError,
    Dataset,
    ModelSpec,
    ParamVector,
    censor_latent,
    check_design,
    hessian,
    loglik,
    recensor,
    score,
)
from .montecarlo import (
    McResult,
    Scenario,
    ScenarioConvergenceError,
    calibrate_psi,
    run_scenario,
    write_results_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # generators
    "Generator",
    "LogNormal",
    "LogStudentT",
    "LogPowerExponential",
    "ExtendedBirnbaumSaunders",
    "make_generator",
    "QlsParams",
    "qls_pdf",
    "qls_logpdf",
    "qls_cdf",
    "qls_sf",
    "qls_logsf",
    "qls_sample",
    # model
    "CollinearDesignError",
    "Dataset",
    "ModelSpec",
    "ParamVector",
    "censor_latent",
    "recensor",
    "check_design",
    "loglik",
    "score",
    "hessian",
    # estimator
    "FitConfig",
    "FitResult",
    "QSelection",
    "default_xi_grid",
    "initial_theta",
    "fit",
    "percent_effect",
    "select_q",
    # diagnostics
    "ResidualReport",
    "mt_residuals",
    "simulated_envelope",
    "blom_positions",
    # montecarlo
    "Scenario",
    "McResult",
    "ScenarioConvergenceError",
    "calibrate_psi",
    "run_scenario",
    "write_results_csv",
]
