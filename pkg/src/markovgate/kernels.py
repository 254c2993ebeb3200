"""Compact-support kernels and the local-linear effective-weight machinery.

Every estimator in the package is a weighted sum with weights

    W_n(z, y; b) = W_b(z) * (s2(y) - (z/b) * s1(y)) / (s0(y)*s2(y) - s1(y)^2),

the effective kernel of a local-linear fit, where s_j(y) are the kernel
moments of the conditioning sample around y.  This module owns the kernel
functions, their norm constants, the moment computation, and the windowed
(ragged) evaluation helpers shared by the batch estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateDesignError, DegenerateWindowError

__all__ = [
    "KernelSpec",
    "LocalMoments",
    "get_kernel",
    "kernel_eval",
    "conv_norm",
    "local_moments",
    "effective_weights",
    "local_linear_fit",
]

# Ridge added to the normal-equation determinant when it is nearly
# singular relative to s0*s2.  The relative form keeps effective weights
# exactly invariant under affine rescaling of the data with
# proportionally scaled bandwidths; the conditional application keeps the
# local-linear reproduction identities exact on sound designs.
RIDGE_REL = 1e-8
RIDGE_ABS = 1e-300


def ridged_determinant(s0, s1, s2):
    """s0*s2 - s1^2, ridged only when within RIDGE_REL of singular."""
    det = s0 * s2 - s1 * s1
    ridge = RIDGE_REL * (s0 * s2 + RIDGE_ABS)
    return np.where(det > ridge, det, det + ridge)

KERNEL_NAMES = ("epanechnikov", "quartic", "triweight")

# Integer codes for the jitted evaluators in _fast.py.
KERNEL_CODES = {name: i for i, name in enumerate(KERNEL_NAMES)}


def _raw_eval(name: str, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    t = 1.0 - u * u
    inside = np.abs(u) <= 1.0
    if name == "epanechnikov":
        vals = 0.75 * t
    elif name == "quartic":
        vals = (15.0 / 16.0) * t * t
    elif name == "triweight":
        vals = (35.0 / 32.0) * t * t * t
    else:
        raise ValueError(f"unknown kernel: {name!r}")
    return np.where(inside, vals, 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric compact-support kernel with cached norm constants.

    Constants are computed by adaptive quadrature when the spec is built
    (see :func:`get_kernel`), not copied from tables.
    """

    name: str
    support_radius: float
    l2_norm_sq: float        # ||K||^2 = int K^2
    conv_l2_norm_sq: float   # ||K*K||^2, * = convolution
    mu0: float               # int K  (= 1)
    mu2: float               # int u^2 K

    def __call__(self, u) -> np.ndarray:
        return _raw_eval(self.name, u)

    @property
    def code(self) -> int:
        return KERNEL_CODES[self.name]


def _conv_value(name: str, u: float) -> float:
    # (K*K)(u) for |u| <= 2; integrand support is |v|<=1 and |u-v|<=1
    lo, hi = max(-1.0, u - 1.0), min(1.0, u + 1.0)
    if lo >= hi:
        return 0.0
    val, _ = quad(
        lambda v: float(_raw_eval(name, v) * _raw_eval(name, u - v)),
        lo, hi, epsabs=1e-12, epsrel=1e-12,
    )
    return val


@lru_cache(maxsize=None)
def get_kernel(name: str) -> KernelSpec:
    """Build a kernel spec, computing its constants by quadrature."""
    if name not in KERNEL_NAMES:
        raise ValueError(f"unknown kernel: {name!r} (choose from {KERNEL_NAMES})")
    mu0, _ = quad(lambda u: float(_raw_eval(name, u)), -1, 1, epsabs=1e-12)
    mu2, _ = quad(lambda u: float(u * u * _raw_eval(name, u)), -1, 1, epsabs=1e-12)
    l2, _ = quad(lambda u: float(_raw_eval(name, u)) ** 2, -1, 1, epsabs=1e-12)
    conv_l2, _ = quad(
        lambda u: _conv_value(name, u) ** 2, -2, 2,
        epsabs=1e-10, epsrel=1e-10, limit=200, points=[-1.0, 0.0, 1.0],
    )
    return KernelSpec(
        name=name,
        support_radius=1.0,
        l2_norm_sq=l2,
        conv_l2_norm_sq=conv_l2,
        mu0=mu0,
        mu2=mu2,
    )


def kernel_eval(k: KernelSpec, u) -> np.ndarray | float:
    """Evaluate K(u); zero outside the support."""
    out = _raw_eval(k.name, u)
    return float(out) if np.isscalar(u) else out


def conv_norm(k: KernelSpec) -> float:
    """||K*K||^2 where * is convolution."""
    return k.conv_l2_norm_sq


@dataclass(frozen=True)
class LocalMoments:
    """Kernel-weighted design moments s_j(y) = (1/n) sum u_i^j W_b(Y_i - y)."""

    s0: float
    s1: float
    s2: float
    n_window: int          # points inside the kernel window
    distinct: bool         # window holds >= 2 distinct values

    @property
    def determinant(self) -> float:
        return self.s0 * self.s2 - self.s1 * self.s1

    @property
    def ridged_determinant(self) -> float:
        return float(ridged_determinant(self.s0, self.s1, self.s2))


# ---------------------------------------------------------------------------
# Windowed (ragged) evaluation over a sorted sample
# ---------------------------------------------------------------------------

def window_bounds(sorted_vals: np.ndarray, points: np.ndarray, radius: float):
    """Index ranges [lo, hi) of sorted_vals within +-radius of each point."""
    points = np.asarray(points, dtype=float)
    lo = np.searchsorted(sorted_vals, points - radius, side="left")
    hi = np.searchsorted(sorted_vals, points + radius, side="right")
    return lo, hi


def ragged_index(lo: np.ndarray, hi: np.ndarray):
    """Flatten per-point windows into (rows, idx) index arrays."""
    cnt = hi - lo
    total = int(cnt.sum())
    rows = np.repeat(np.arange(lo.size), cnt)
    offsets = np.concatenate(([0], np.cumsum(cnt)[:-1]))
    idx = np.arange(total) - offsets[rows] + lo[rows]
    return rows, idx, cnt


def moments_batch(sorted_vals: np.ndarray, points: np.ndarray, b: float,
                  k: KernelSpec, n_total: int):
    """Local moments s0, s1, s2 at many points over a pre-sorted sample.

    Returns (s0, s1, s2, n_window, distinct) arrays.  Moments are averaged
    over ``n_total`` (the full sample size), matching the unwindowed sums
    because the kernel vanishes outside the window.
    """
    points = np.asarray(points, dtype=float)
    radius = b * k.support_radius
    lo, hi = window_bounds(sorted_vals, points, radius)
    rows, idx, cnt = ragged_index(lo, hi)
    u = (sorted_vals[idx] - points[rows]) / b
    w = _raw_eval(k.name, u) / b
    m = points.size
    s0 = np.bincount(rows, weights=w, minlength=m) / n_total
    s1 = np.bincount(rows, weights=w * u, minlength=m) / n_total
    s2 = np.bincount(rows, weights=w * u * u, minlength=m) / n_total
    distinct = (cnt >= 2) & (sorted_vals[np.minimum(hi - 1, len(sorted_vals) - 1)]
                             > sorted_vals[np.minimum(lo, len(sorted_vals) - 1)])
    return s0, s1, s2, cnt, distinct


# ---------------------------------------------------------------------------
# Public single-point operations
# ---------------------------------------------------------------------------

def local_moments(sample, y: float, b: float, k: KernelSpec) -> LocalMoments:
    """Moments s0, s1, s2 of ``sample`` around ``y`` at bandwidth ``b``.

    Raises DegenerateWindowError when no sample point falls inside the
    kernel window.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise DegenerateWindowError("empty sample")
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    sorted_vals = np.sort(sample)
    s0, s1, s2, cnt, distinct = moments_batch(
        sorted_vals, np.array([y]), b, k, sample.size)
    if cnt[0] == 0:
        raise DegenerateWindowError(
            f"no sample points within {b * k.support_radius:g} of y={y:g}")
    return LocalMoments(float(s0[0]), float(s1[0]), float(s2[0]),
                        int(cnt[0]), bool(distinct[0]))


def effective_weights(sample, y: float, b: float, k: KernelSpec):
    """Local-linear effective weights W_n(Y_i - y, y; b) for in-window points.

    Returns (weights, indices) where ``indices`` maps into the original
    sample.  The weights satisfy (1/n) sum w_i = 1 and
    sum w_i (Y_i - y) = 0 up to the determinant ridge.
    """
    sample = np.asarray(sample, dtype=float)
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    order = np.argsort(sample, kind="stable")
    sorted_vals = sample[order]
    radius = b * k.support_radius
    lo, hi = window_bounds(sorted_vals, np.array([float(y)]), radius)
    lo, hi = int(lo[0]), int(hi[0])
    if hi - lo == 0:
        raise DegenerateWindowError(
            f"no sample points within {radius:g} of y={y:g}")
    window = sorted_vals[lo:hi]
    if hi - lo < 2 or window[-1] <= window[0]:
        raise DegenerateDesignError(
            "local-linear design needs >= 2 distinct points in the window")
    n = sample.size
    u = (window - y) / b
    wb = _raw_eval(k.name, u) / b
    s0 = wb.sum() / n
    s1 = (wb * u).sum() / n
    s2 = (wb * u * u).sum() / n
    det = float(ridged_determinant(s0, s1, s2))
    if det <= 0.0:
        raise DegenerateDesignError("ridged design determinant is not positive")
    weights = wb * (s2 - u * s1) / det
    return weights, order[lo:hi]


def local_linear_fit(xs, responses, y: float, b: float, k: KernelSpec) -> float:
    """Local-linear regression estimate at ``y``: (1/n) sum w_i response_i."""
    xs = np.asarray(xs, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if xs.shape != responses.shape:
        raise ValueError("xs and responses must have matching length")
    weights, idx = effective_weights(xs, y, b, k)
    return float(weights @ responses[idx]) / xs.size
