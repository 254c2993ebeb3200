"""Markov-test statistics, their plug-in null calibrations, and p-values.

Four statistics measure the discrepancy between the direct two-step
estimate and its one-step composition at the observed triples:

* ``t1``      -- weighted squared density difference,
* ``t1_star`` -- weighted squared relative density difference,
* ``t2``      -- weighted squared distribution difference (x-only weight),
* ``t0``      -- weighted generalized log-likelihood-ratio.

t1/t1_star/t2 admit plug-in normal and chi-square calibrations whose
means and variances are grid-quadrature functionals of estimated
transition surfaces; t0 is calibrated by bootstrap only.  The primary
inference path in the experiment harness is the bootstrap p-value, with
the plug-in values reported as diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, norm

from .errors import (CalibrationError, FloorBreachError,
                     InsufficientSupportError)
from .estimators import Bandwidths, EstimatorHandle, TripleSample
from .kernels import KernelSpec, get_kernel
from .weights import TrimWeight, WeightSpec, build_weight

__all__ = [
    "TestReport", "PluginQuantities", "Calibration", "compute_statistic",
    "t0_glr", "t1", "t1_star", "t2", "estimate_plugin_quantities",
    "calibration_t1", "calibration_t2", "pvalues",
]

GRID_SIZE = 101
MIN_WEIGHTED = 30

# Denominator floor for the ratio statistics: FLOOR_SCALE / range(Z).
FLOOR_SCALE = 1e-4
MAX_FLOOR_DROP_FRAC = 0.05

STATISTIC_KINDS = ("t0", "t1", "t1_star", "t2")

_DEFAULT_WEIGHT_KIND = {
    "t0": "ratio_weight",
    "t1": "density_weight",
    "t1_star": "ratio_weight",
    "t2": "x_only_weight",
}


@dataclass
class TestReport:
    """Outcome of one Markov-test statistic on one sample."""

    kind: str
    statistic: float
    n_used: int
    mu: float | None = None
    sigma: float | None = None
    z_score: float | None = None
    p_normal: float | None = None
    r_scale: float | None = None
    dof: float | None = None
    p_chisq: float | None = None
    p_bootstrap: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {
            "kind": self.kind,
            "statistic": self.statistic,
            "n_used": self.n_used,
        }
        for name in ("mu", "sigma", "z_score", "p_normal", "r_scale",
                     "dof", "p_chisq", "p_bootstrap"):
            row[name] = getattr(self, name)
        return row


@dataclass(frozen=True)
class Calibration:
    """Plug-in null mean/sd and the matched chi-square scaling."""

    mu: float
    sigma: float
    r_scale: float
    dof: float


@dataclass
class PluginQuantities:
    """Grid-quadrature functionals feeding the plug-in calibrations.

    All surfaces live on the trimmed midpoint grid (rows = x, cols = z).
    ``omega15`` and the starred surfaces come from running the same
    estimators on the index-reversed series, which is Markov in reverse
    under the null.
    """

    omega11: float
    omega12: float
    omega13: float
    omega14: float
    omega15: float
    omega2: float
    x_grid: np.ndarray
    z_grid: np.ndarray
    dx: float
    dz: float
    weight_grid: np.ndarray
    pi_x: np.ndarray
    pi_z: np.ndarray
    p_grid: np.ndarray
    r_grid: np.ndarray
    s_grid: np.ndarray
    p_star_grid: np.ndarray
    s_star_grid: np.ndarray
    v_grid: np.ndarray
    v_min_raw: float
    ev_given_x: np.ndarray
    floor: float | None = None


def _as_kernel(k) -> KernelSpec:
    return k if isinstance(k, KernelSpec) else get_kernel(k)


def _resolve_weight(w, kind: str, sample: TripleSample) -> TrimWeight:
    if w is None:
        w = WeightSpec(kind=_DEFAULT_WEIGHT_KIND[kind])
    if isinstance(w, WeightSpec):
        if w.kind == "x_only_weight":
            return build_weight(w, sample.x)
        return build_weight(w, sample.x, sample.z)
    return w


def density_floor(sample: TripleSample) -> float:
    """Hard guard against near-zero or negative density denominators."""
    zrange = float(sample.z.max() - sample.z.min())
    if zrange <= 0:
        raise ValueError("response sample has no spread")
    return FLOOR_SCALE / zrange


def compute_statistic(kind: str, sample: TripleSample, bw: Bandwidths,
                      w: WeightSpec | TrimWeight | None = None, *,
                      kernel_w="epanechnikov", kernel_k="epanechnikov",
                      calibration: str = "plugin",
                      bootstrap_distribution=None,
                      handle: EstimatorHandle | None = None) -> TestReport:
    """Evaluate one Markov-test statistic with optional plug-in calibration.

    ``calibration`` is ``"plugin"`` or ``"none"``; t0 has no plug-in
    calibration and always reports the bare statistic.
    """
    if kind not in STATISTIC_KINDS:
        raise ValueError(f"unknown statistic kind: {kind!r}")
    if calibration not in ("plugin", "none"):
        raise ValueError("calibration must be 'plugin' or 'none'")
    kernel_w = _as_kernel(kernel_w)
    kernel_k = _as_kernel(kernel_k)
    if handle is None:
        handle = EstimatorHandle(sample, bw, kernel_w, kernel_k)
    weight = _resolve_weight(w, kind, sample)

    if kind == "t2":
        if weight.bivariate:
            raise ValueError("t2 uses an x-only weight")
        wvals = weight(sample.x)
    else:
        if not weight.bivariate:
            raise ValueError(f"{kind} uses a bivariate weight")
        wvals = weight(sample.x, sample.z)

    mask = wvals > 0.0
    n_used = int(mask.sum())
    if n_used == 0:
        # an everywhere-zero weight makes the discrepancy sum vacuously zero
        return TestReport(kind=kind, statistic=0.0, n_used=0,
                          diagnostics={"empty_weight": True})
    if n_used < MIN_WEIGHTED:
        raise InsufficientSupportError(
            f"only {n_used} points carry positive weight (need {MIN_WEIGHTED})")

    xs = sample.x[mask]
    zs = sample.z[mask]
    wm = wvals[mask]
    diagnostics: dict = {}

    if kind == "t2":
        p_dir = handle.distribution_2step_direct_many(xs, zs)
        p_ind = handle.distribution_2step_indirect_many(xs, zs)
        stat = float(np.sum((p_dir - p_ind) ** 2 * wm))
    else:
        p_dir = handle.density_2step_direct_many(xs, zs)
        p_ind = handle.density_2step_indirect_many(xs, zs)
        if kind == "t1":
            stat = float(np.sum((p_dir - p_ind) ** 2 * wm))
        elif kind == "t1_star":
            floor = density_floor(sample)
            den = np.maximum(p_dir, floor)
            diagnostics["floor_breaches"] = int(np.sum(p_dir < floor))
            stat = float(np.sum(((p_dir - p_ind) / den) ** 2 * wm))
        else:  # t0
            floor = density_floor(sample)
            keep = (p_dir > floor) & (p_ind > floor)
            dropped = int(n_used - keep.sum())
            diagnostics["floor_drops"] = dropped
            if dropped > MAX_FLOOR_DROP_FRAC * n_used:
                raise FloorBreachError(
                    f"{dropped} of {n_used} weighted points fell below the "
                    "density floor")
            stat = float(np.sum(np.log(p_ind[keep] / p_dir[keep]) * wm[keep]))

    report = TestReport(kind=kind, statistic=stat, n_used=n_used,
                        diagnostics=diagnostics)

    cal = None
    if calibration == "plugin" and kind != "t0":
        cal = _calibrate(kind, sample, bw, weight, kernel_w, kernel_k, handle, w)
    return pvalues(report, cal, bootstrap_distribution)


def _calibrate(kind, sample, bw, weight, kernel_w, kernel_k, handle, w_arg):
    if kind == "t2":
        # surfaces need a bivariate grid box; reuse the trim settings
        if isinstance(w_arg, WeightSpec):
            spec = WeightSpec("density_weight", w_arg.trim_quantile,
                              w_arg.smoothness)
        else:
            spec = WeightSpec("density_weight")
        grid_weight = build_weight(spec, sample.x, sample.z)
        q = estimate_plugin_quantities(sample, bw, grid_weight,
                                       kernel_w=kernel_w, kernel_k=kernel_k,
                                       handle=handle)
        return calibration_t2(q, weight, bw, kernel_w)
    ratio = kind == "t1_star"
    q = estimate_plugin_quantities(sample, bw, weight,
                                   kernel_w=kernel_w, kernel_k=kernel_k,
                                   handle=handle, ratio_floor=ratio)
    return calibration_t1(q, bw, kernel_w, kernel_k)


def t1(sample, bw, w=None, **kwargs) -> TestReport:
    """Squared density-difference statistic."""
    return compute_statistic("t1", sample, bw, w, **kwargs)


def t1_star(sample, bw, w=None, **kwargs) -> TestReport:
    """Squared relative density-difference statistic (chi-square type)."""
    return compute_statistic("t1_star", sample, bw, w, **kwargs)


def t2(sample, bw, w=None, **kwargs) -> TestReport:
    """Squared distribution-difference statistic."""
    return compute_statistic("t2", sample, bw, w, **kwargs)


def t0_glr(sample, bw, w=None, **kwargs) -> TestReport:
    """Generalized likelihood-ratio statistic; bootstrap calibration only."""
    return compute_statistic("t0", sample, bw, w, **kwargs)


# ---------------------------------------------------------------------------
# Plug-in calibration
# ---------------------------------------------------------------------------

def estimate_plugin_quantities(sample: TripleSample, bw: Bandwidths,
                               weight: WeightSpec | TrimWeight | None = None,
                               *, kernel_w="epanechnikov",
                               kernel_k="epanechnikov",
                               handle: EstimatorHandle | None = None,
                               ratio_floor: bool = False,
                               grid_size: int = GRID_SIZE) -> PluginQuantities:
    """Estimate every functional entering the plug-in calibrations.

    Surfaces are estimated on the trimmed midpoint grid; the reverse-time
    quantities run the identical machinery on the index-reversed series.
    With ``ratio_floor`` the weight is divided by the squared (floored)
    direct density, which calibrates the relative-error statistic.
    """
    kernel_w = _as_kernel(kernel_w)
    kernel_k = _as_kernel(kernel_k)
    if handle is None:
        handle = EstimatorHandle(sample, bw, kernel_w, kernel_k)
    if weight is None or isinstance(weight, WeightSpec):
        spec = weight if isinstance(weight, WeightSpec) else WeightSpec()
        if spec.kind == "x_only_weight":
            spec = WeightSpec("density_weight", spec.trim_quantile,
                              spec.smoothness)
        weight = build_weight(spec, sample.x, sample.z)
    if not weight.bivariate:
        raise ValueError("plug-in quantities need a bivariate weight box")

    x_grid = weight.x_grid(grid_size)
    z_grid = weight.z_grid(grid_size)
    dx = (weight.x_hi - weight.x_lo) / grid_size
    dz = (weight.z_hi - weight.z_lo) / grid_size
    area = dx * dz
    w_grid = weight.x_factor(x_grid)[:, None] * weight.z_factor(z_grid)[None, :]

    inner_ok = handle.inner_ok
    p_grid = handle.density_2step_direct_grid(x_grid, z_grid)
    g_dens = handle.inner_density_at_data(z_grid)
    r_grid, _ = handle.ll_apply("x", x_grid, bw.h3, g_dens, col_keep=inner_ok)
    s_grid, _ = handle.ll_apply("x", x_grid, bw.h3, g_dens * g_dens,
                                col_keep=inner_ok)

    # conditional variance surface of the one-step distribution estimate
    g_dist = handle.inner_distribution_at_data(z_grid)
    r_at_data, r_ok = handle.ll_apply("x", sample.x, bw.h3, g_dist,
                                      col_keep=inner_ok)
    resid2 = (g_dist - r_at_data) ** 2
    valid = inner_ok & r_ok
    v_raw, _ = handle.ll_apply("x", x_grid, bw.h3, resid2, col_keep=valid)
    v_min_raw = float(v_raw.min())
    v_grid = np.maximum(v_raw, 0.0)

    pi_x = handle.marginal_density(x_grid, bw.h1)
    pi_z = handle.marginal_density(z_grid, bw.h1)

    # reverse-time surfaces: same machinery on the reversed series,
    # conditioning on z and responding in x
    rev = EstimatorHandle(sample.reversed(), bw, kernel_w, kernel_k)
    p_star_zx = rev.density_2step_direct_grid(z_grid, x_grid)
    g_star = rev.inner_density_at_data(x_grid)
    s_star_zx, _ = rev.ll_apply("x", z_grid, bw.h3, g_star * g_star,
                                col_keep=rev.inner_ok)
    p_star_grid = p_star_zx.T
    s_star_grid = s_star_zx.T

    floor = None
    eff_w = w_grid
    if ratio_floor:
        floor = density_floor(sample)
        eff_w = w_grid / np.maximum(p_grid, floor) ** 2

    with np.errstate(divide="ignore", invalid="ignore"):
        pi_ratio_sq = (pi_z[None, :] / pi_x[:, None]) ** 2
    pi_ratio_sq = np.where(np.isfinite(pi_ratio_sq), pi_ratio_sq, 0.0)

    omega11 = float(np.sum(eff_w * p_grid ** 2) * area)
    omega12 = float(np.sum(eff_w * p_grid ** 3) * area)
    omega13 = float(np.sum(eff_w * s_grid * p_grid) * area)
    omega14 = float(np.sum(eff_w * r_grid ** 2 * p_grid) * area)
    omega15 = float(np.sum(eff_w * s_star_grid * p_star_grid * pi_ratio_sq) * area)
    omega2 = float(np.sum(eff_w ** 2 * p_grid ** 4) * area)

    ev_given_x = np.sum(v_grid * p_grid, axis=1) * dz

    return PluginQuantities(
        omega11=omega11, omega12=omega12, omega13=omega13, omega14=omega14,
        omega15=omega15, omega2=omega2,
        x_grid=x_grid, z_grid=z_grid, dx=dx, dz=dz, weight_grid=eff_w,
        pi_x=pi_x, pi_z=pi_z, p_grid=p_grid, r_grid=r_grid, s_grid=s_grid,
        p_star_grid=p_star_grid, s_star_grid=s_star_grid,
        v_grid=v_grid, v_min_raw=v_min_raw, ev_given_x=ev_given_x,
        floor=floor)


def calibration_t1(q: PluginQuantities, bw: Bandwidths,
                   kernel_w, kernel_k) -> Calibration:
    """Null mean/sd of the density statistics from plug-in functionals."""
    kernel_w = _as_kernel(kernel_w)
    kernel_k = _as_kernel(kernel_k)
    nw2 = kernel_w.l2_norm_sq
    nk2 = kernel_k.l2_norm_sq
    mu = (q.omega11 * nw2 * nk2 / (bw.h1 * bw.h2)
          - q.omega12 * nw2 / bw.h1
          + (q.omega13 - q.omega14) * nw2 / bw.h3
          + q.omega15 * nk2 / bw.b2)
    sigma_sq = (2.0 * q.omega2 * kernel_w.conv_l2_norm_sq
                * kernel_k.conv_l2_norm_sq / (bw.h1 * bw.h2))
    if mu <= 0.0 or sigma_sq <= 0.0:
        raise CalibrationError(
            f"plug-in calibration failed (mu={mu:g}, sigma^2={sigma_sq:g}); "
            "fall back to the bootstrap")
    sigma = float(np.sqrt(sigma_sq))
    r_scale = 2.0 * mu / sigma_sq
    return Calibration(mu=float(mu), sigma=sigma, r_scale=float(r_scale),
                       dof=float(r_scale * mu))


def calibration_t2(q: PluginQuantities, omega: TrimWeight, bw: Bandwidths,
                   kernel_w) -> Calibration:
    """Null mean/sd of the distribution statistic from plug-in functionals."""
    kernel_w = _as_kernel(kernel_w)
    wx = omega.x_factor(q.x_grid)
    mass = omega.x_mass()
    v_part = float(np.sum(wx * q.ev_given_x) * q.dx)
    mu = kernel_w.l2_norm_sq * (mass / (6.0 * bw.h1) + v_part / bw.h3)
    sigma_sq = kernel_w.conv_l2_norm_sq * omega.x_l2() / (45.0 * bw.h1)
    if mu <= 0.0 or sigma_sq <= 0.0:
        raise CalibrationError(
            f"plug-in calibration failed (mu={mu:g}, sigma^2={sigma_sq:g})")
    sigma = float(np.sqrt(sigma_sq))
    r_scale = 2.0 * mu / sigma_sq
    return Calibration(mu=float(mu), sigma=sigma, r_scale=float(r_scale),
                       dof=float(r_scale * mu))


def pvalues(report: TestReport, calibration: Calibration | None = None,
            bootstrap_distribution=None) -> TestReport:
    """Fill normal/chi-square p-values from a calibration and a bootstrap
    p-value from a replicate distribution, when supplied."""
    if calibration is not None:
        if calibration.sigma <= 0:
            raise CalibrationError("sigma must be positive")
        report.mu = calibration.mu
        report.sigma = calibration.sigma
        report.r_scale = calibration.r_scale
        report.dof = calibration.dof
        report.z_score = (report.statistic - calibration.mu) / calibration.sigma
        report.p_normal = float(norm.sf(report.z_score))
        report.p_chisq = float(chi2.sf(calibration.r_scale * report.statistic,
                                       calibration.dof))
    if bootstrap_distribution is not None:
        draws = np.asarray(bootstrap_distribution, dtype=float)
        b = draws.size
        if b == 0:
            raise ValueError("empty bootstrap distribution")
        report.p_bootstrap = float(
            (1.0 + np.sum(draws >= report.statistic)) / (b + 1.0))
        report.diagnostics.setdefault("bootstrap_replicates", int(b))
    return report
