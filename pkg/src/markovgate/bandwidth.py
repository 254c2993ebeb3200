"""Default bandwidth selection respecting the tests' rate requirements.

The empirical rule is a robust-spread normal-reference rule with the rate
exponent tied to the statistic family: n^(-1/5) for the density-based
tests, n^(-2/9) for the distribution-based test.  Cross-validation is an
opt-in, offline selector for the scale multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, DegenerateWindowError, ZeroSpreadError
from .estimators import Bandwidths, TripleSample
from .kernels import get_kernel, local_linear_fit

__all__ = ["BandwidthRule", "select_bandwidths", "robust_spread",
           "cross_validate_scale"]

TARGET_EXPONENTS = {"t1_family": 1.0 / 5.0, "t2": 2.0 / 9.0}
MIN_SELECT_N = 30


@dataclass(frozen=True)
class BandwidthRule:
    """How to choose the five bandwidths.

    ``empirical_rule`` scales a robust spread by c_scale * n^(-exponent);
    ``fixed`` uses the provided bandwidths verbatim; ``cv`` first
    cross-validates c_scale, then applies the empirical rule.
    """

    kind: str = "empirical_rule"
    c_scale: float = 1.0
    exponent: float | None = None     # default set by the target family
    fixed: Bandwidths | None = None

    def __post_init__(self):
        if self.kind not in ("empirical_rule", "fixed", "cv"):
            raise ValueError(f"unknown bandwidth rule kind: {self.kind!r}")
        if self.c_scale <= 0:
            raise ValueError("c_scale must be positive")
        if self.exponent is not None and not 0.0 < self.exponent < 0.5:
            raise ValueError("exponent must lie in (0, 0.5)")
        if self.kind == "fixed" and self.fixed is None:
            raise ValueError("fixed rule needs explicit bandwidths")


def robust_spread(values) -> float:
    """min(sd, IQR/1.349); raises on samples with no spread."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    est = min(sd, iqr / 1.349) if iqr > 0 else sd
    if est <= 0:
        raise ZeroSpreadError("sample has no spread")
    return est


def select_bandwidths(rule: BandwidthRule, sample: TripleSample,
                      target: str = "t1_family") -> Bandwidths:
    """Produce the five bandwidths for one statistic family."""
    if target not in TARGET_EXPONENTS:
        raise ValueError(f"unknown target: {target!r}")
    if rule.kind == "fixed":
        return rule.fixed
    if sample.n < MIN_SELECT_N:
        raise ValueError(f"bandwidth selection needs n >= {MIN_SELECT_N}")
    exponent = rule.exponent if rule.exponent is not None else TARGET_EXPONENTS[target]
    c = rule.c_scale
    if rule.kind == "cv":
        c = c * cross_validate_scale(sample, target, exponent=exponent)
    rate = float(sample.n) ** (-exponent)
    h1 = c * robust_spread(sample.x) * rate
    h2 = c * robust_spread(sample.z) * rate
    return Bandwidths(b1=h1, b2=h2, h1=h1, h2=h2, h3=h1)


def cross_validate_scale(sample: TripleSample, target: str = "t1_family",
                         *, exponent: float | None = None,
                         scale_grid=None, max_points: int = 150,
                         kernel: str = "epanechnikov",
                         seed: int = 0) -> float:
    """Leave-one-out scale multiplier for the composing regression.

    Scores each candidate multiplier by the LOO squared error of the
    local-linear regression of the two-step response on the conditioning
    value, on a subsample of points.  Deliberately offline: cost grows
    with n * len(scale_grid).
    """
    if exponent is None:
        exponent = TARGET_EXPONENTS[target]
    if scale_grid is None:
        scale_grid = np.geomspace(0.5, 3.0, 8)
    k = get_kernel(kernel)
    x = sample.x
    z = sample.z
    n = sample.n
    base = robust_spread(x) * float(n) ** (-exponent)
    rng = np.random.default_rng(seed)
    idx = np.arange(n) if n <= max_points else rng.choice(n, max_points,
                                                          replace=False)
    best_c, best_score = 1.0, np.inf
    for c in scale_grid:
        h = c * base
        score = 0.0
        used = 0
        for i in idx:
            keep = np.ones(n, dtype=bool)
            keep[i] = False
            try:
                pred = local_linear_fit(x[keep], z[keep], x[i], h, k)
            except (DegenerateWindowError, DegenerateDesignError):
                continue
            score += (z[i] - pred) ** 2
            used += 1
        if used and score / used < best_score:
            best_score = score / used
            best_c = float(c)
    return best_c
