"""Chapman-Kolmogorov tests of the Markov hypothesis.

Compare a directly estimated two-step transition density/distribution
with its composition from one-step transitions; calibrate the discrepancy
statistics by plug-in asymptotics and a residual bootstrap under a fitted
mean-reverting null.
"""

from .bandwidth import BandwidthRule, select_bandwidths
from .bootstrap import OuFit, bootstrap_null, fit_ou_ls, resample_path
from .errors import (CalibrationError, ConfigError, DegenerateDesignError,
                     DegenerateWindowError, FloorBreachError,
                     InsufficientSupportError, MarkovgateError,
                     NonstationaryFitError, ReplicateFailureError,
                     ZeroSpreadError)
from .estimators import Bandwidths, EstimatorHandle, TripleSample
from .kernels import (KernelSpec, LocalMoments, conv_norm, effective_weights,
                      get_kernel, kernel_eval, local_linear_fit, local_moments)
from .models import ModelSpec, Path, SimConfig, simulate
from .stats import (PluginQuantities, TestReport, compute_statistic,
                    estimate_plugin_quantities, pvalues, t0_glr, t1, t1_star,
                    t2)
from .weights import TrimWeight, WeightSpec, build_weight

__version__ = "0.1.0"

__all__ = [
    "BandwidthRule", "Bandwidths", "CalibrationError", "ConfigError",
    "DegenerateDesignError", "DegenerateWindowError", "EstimatorHandle",
    "FloorBreachError", "InsufficientSupportError", "KernelSpec",
    "LocalMoments", "MarkovgateError", "ModelSpec", "NonstationaryFitError",
    "OuFit", "Path", "PluginQuantities", "ReplicateFailureError", "SimConfig",
    "TestReport", "TripleSample", "TrimWeight", "WeightSpec", "ZeroSpreadError",
    "bootstrap_null", "build_weight", "compute_statistic", "conv_norm",
    "effective_weights", "estimate_plugin_quantities", "fit_ou_ls",
    "get_kernel", "kernel_eval", "local_linear_fit", "local_moments",
    "pvalues", "resample_path", "select_bandwidths", "simulate", "simulate",
    "t0_glr", "t1", "t1_star", "t2",
]
