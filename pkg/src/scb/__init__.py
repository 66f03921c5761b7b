"""Simultaneous confidence bands for kernel density, regression and volatility
estimates under dependence."""

__version__ = "0.1.0"

from .asymptotics import (
    BandCalibration, LrdSpec, c_beta_closed_form, c_beta_quadrature, calibrate_gumbel,
    check_bandwidth_conditions, gumbel_cdf, gumbel_quantile, halfwidth_l1, halfwidth_l2,
    lrd_limit_scale, normalizing_dn,
)
from .bands import (
    GofResult, SimultaneousBand, gof_test, scb_density, scb_regression, scb_volatility,
)
from .calibration import PiSample, eta_sampler, quantile, simulate_pi_n, smoothed_bootstrap_sampler
from .estimators import (
    CurveEstimate, EvaluationGrid, kde, kde_derivative, local_poly_fit, nadaraya_watson,
    residuals, sup_weighted_deviation, variance_estimate,
)
from .harness import (
    ExperimentReport, coverage_experiment, dichotomy_experiment, gumbel_convergence_experiment,
)
from .io import DiffusionDataset, export_band, load_series, make_regression_pairs
from .kernels import KernelProfile, compute_kernel_constants, get_kernel, kernel_autocorr
from .pipeline import run_pipeline
from .processes import ProcessModel
