"""Residual-based bootstrap calibration under a fitted mean-reverting null.

Fit the discrete AR(1) reduction of the Ornstein-Uhlenbeck model by least
squares, resample recentered residuals to rebuild pseudo-paths, and
recompute the chosen statistic on each pseudo-path with the original
sample's bandwidths.  Other parametric null families would need their own
fit/resample pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fast
from .errors import MarkovgateError, NonstationaryFitError, ReplicateFailureError
from .estimators import Bandwidths, TripleSample
from .models import Path, stream
from .stats import compute_statistic

__all__ = ["OuFit", "fit_ou_ls", "resample_path", "bootstrap_null"]

MIN_FIT_N = 30
MAX_REPLICATE_FAILURES = 0.10

# RNG stream coordinates (offset past the simulator coordinates)
COORD_BOOT_INIT = 16
COORD_BOOT_INNOV = 17


@dataclass(frozen=True)
class OuFit:
    """AR(1) least-squares fit of a path with recentered residuals."""

    kappa_hat: float
    alpha_hat: float
    sigma_hat: float
    rho_hat: float
    intercept: float
    residuals: np.ndarray
    marginal: np.ndarray      # source-path values, the resampling start pool
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "residuals",
                           np.ascontiguousarray(self.residuals, dtype=float))
        object.__setattr__(self, "marginal",
                           np.ascontiguousarray(self.marginal, dtype=float))


def fit_ou_ls(path: Path) -> OuFit:
    """Least-squares AR(1) fit mapped back to diffusion parameters."""
    x = np.asarray(path.values, dtype=float)
    if x.size < MIN_FIT_N:
        raise ValueError(f"fit needs at least {MIN_FIT_N} observations")
    lag, lead = x[:-1], x[1:]
    lag_c = lag - lag.mean()
    sxx = float(lag_c @ lag_c)
    if sxx <= 0:
        raise NonstationaryFitError("regressor has no variation")
    rho = float(lag_c @ (lead - lead.mean())) / sxx
    if not 0.0 < rho < 1.0:
        raise NonstationaryFitError(
            f"AR(1) slope {rho:.4f} outside (0, 1); no stationary "
            "mean-reverting fit exists")
    intercept = float(lead.mean() - rho * lag.mean())
    resid = lead - intercept - rho * lag
    resid = resid - resid.mean()
    kappa = -np.log(rho) / path.delta
    alpha = intercept / (1.0 - rho)
    sigma_sq = float(np.var(resid)) * 2.0 * kappa / (1.0 - rho * rho)
    return OuFit(kappa_hat=float(kappa), alpha_hat=float(alpha),
                 sigma_hat=float(np.sqrt(sigma_sq)), rho_hat=rho,
                 intercept=intercept, residuals=resid, marginal=x,
                 delta=path.delta)


def resample_path(fit: OuFit, n_obs: int, seed: int, replicate: int = 0) -> Path:
    """Rebuild a pseudo-path from the fit: start from the empirical
    marginal, then iterate the AR(1) recursion with resampled residuals."""
    init_rng = stream(seed, replicate, COORD_BOOT_INIT)
    innov_rng = stream(seed, replicate, COORD_BOOT_INNOV)
    x0 = float(init_rng.choice(fit.marginal))
    innov = innov_rng.choice(fit.residuals, size=n_obs + 1, replace=True)
    values = _fast.ar1_recursion(x0, fit.intercept, fit.rho_hat, innov)
    return Path(values, fit.delta, model=f"bootstrap(rho={fit.rho_hat:.4f})",
                seed=seed)


def bootstrap_null(sample_path: Path, statistic: str, bw: Bandwidths,
                   B: int, seed: int, *, weight=None,
                   kernel_w="epanechnikov", kernel_k="epanechnikov",
                   fit: OuFit | None = None) -> np.ndarray:
    """Null distribution of a statistic from B residual-bootstrap replicates.

    Every replicate reuses the original sample's bandwidths.  Replicates
    whose statistic fails to evaluate are skipped; more than 10% failures
    raises.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if fit is None:
        fit = fit_ou_ls(sample_path)
    n_obs = sample_path.n_obs
    values = []
    failures = 0
    for b in range(B):
        bpath = resample_path(fit, n_obs, seed, replicate=b)
        try:
            rep = compute_statistic(
                statistic, TripleSample.from_path(bpath.values, bpath.delta),
                bw, weight, kernel_w=kernel_w, kernel_k=kernel_k,
                calibration="none")
        except MarkovgateError:
            failures += 1
            continue
        values.append(rep.statistic)
    if failures > MAX_REPLICATE_FAILURES * B:
        raise ReplicateFailureError(
            f"{failures} of {B} bootstrap replicates failed")
    return np.asarray(values)
