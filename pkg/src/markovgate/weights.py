"""Smooth trimming weights over marginal quantile boxes.

Test statistics downweight sparse boundary regions where nonparametric
estimates are unreliable.  The weights used here are products of
one-dimensional bumps: zero outside a marginal quantile box, one on the
inner core, with a twice continuously differentiable quintic taper in
between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

__all__ = ["WeightSpec", "TrimWeight", "build_weight"]

WEIGHT_KINDS = ("density_weight", "ratio_weight", "x_only_weight")


@dataclass(frozen=True)
class WeightSpec:
    """Configuration for a trimming weight.

    kind
        ``density_weight``  -- w(x, z), used by the density-difference test;
        ``ratio_weight``    -- w*(x, z), used by the ratio and GLR tests;
        ``x_only_weight``   -- omega(x), used by the distribution test.
    trim_quantile
        Marginal quantile tau defining the box [q_tau, q_{1-tau}] per axis.
    smoothness
        Taper width as a fraction of the trimmed range per side.
    """

    kind: str = "density_weight"
    trim_quantile: float = 0.05
    smoothness: float = 0.1

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind: {self.kind!r}")
        if not 0.0 < self.trim_quantile < 0.5:
            raise ValueError("trim_quantile must be in (0, 0.5)")
        if not 0.0 < self.smoothness <= 0.5:
            raise ValueError("smoothness must be in (0, 0.5]")


def _smoothstep(t: np.ndarray) -> np.ndarray:
    # quintic 6t^5 - 15t^4 + 10t^3: C^2 with zero first/second derivative
    # at both ends, so the assembled bump is twice continuously
    # differentiable everywhere.
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _bump(x: np.ndarray, lo: float, hi: float, taper: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    rise = _smoothstep((x - lo) / taper)
    fall = _smoothstep((hi - x) / taper)
    return rise * fall


@dataclass(frozen=True)
class TrimWeight:
    """A weight function fitted to a sample's marginal quantiles."""

    kind: str
    x_lo: float
    x_hi: float
    x_taper: float
    z_lo: float | None = None
    z_hi: float | None = None
    z_taper: float | None = None

    @property
    def bivariate(self) -> bool:
        return self.z_lo is not None

    def x_factor(self, x) -> np.ndarray:
        return _bump(x, self.x_lo, self.x_hi, self.x_taper)

    def z_factor(self, z) -> np.ndarray:
        if not self.bivariate:
            raise ValueError("x-only weight has no z factor")
        return _bump(z, self.z_lo, self.z_hi, self.z_taper)

    def __call__(self, x, z=None) -> np.ndarray:
        wx = self.x_factor(x)
        if not self.bivariate:
            return wx
        if z is None:
            raise ValueError("bivariate weight needs both coordinates")
        return wx * self.z_factor(z)

    def x_grid(self, num: int = 101) -> np.ndarray:
        """Midpoint grid over the trimmed x-support."""
        step = (self.x_hi - self.x_lo) / num
        return self.x_lo + step * (np.arange(num) + 0.5)

    def z_grid(self, num: int = 101) -> np.ndarray:
        if not self.bivariate:
            raise ValueError("x-only weight has no z grid")
        step = (self.z_hi - self.z_lo) / num
        return self.z_lo + step * (np.arange(num) + 0.5)

    def x_mass(self) -> float:
        """Integral of the x factor."""
        val, _ = quad(lambda t: float(self.x_factor(t)), self.x_lo, self.x_hi,
                      epsabs=1e-10, limit=100)
        return val

    def x_l2(self) -> float:
        """Integral of the squared x factor."""
        val, _ = quad(lambda t: float(self.x_factor(t)) ** 2,
                      self.x_lo, self.x_hi, epsabs=1e-10, limit=100)
        return val


def build_weight(spec: WeightSpec, x_sample, z_sample=None) -> TrimWeight:
    """Fit a trimming weight to marginal sample quantiles."""
    x_sample = np.asarray(x_sample, dtype=float)
    tau = spec.trim_quantile
    x_lo, x_hi = np.quantile(x_sample, [tau, 1.0 - tau])
    if x_hi <= x_lo:
        raise ValueError("degenerate x quantile box")
    x_taper = spec.smoothness * (x_hi - x_lo)
    if spec.kind == "x_only_weight":
        return TrimWeight(spec.kind, float(x_lo), float(x_hi), float(x_taper))
    if z_sample is None:
        raise ValueError(f"{spec.kind} needs a z sample")
    z_sample = np.asarray(z_sample, dtype=float)
    z_lo, z_hi = np.quantile(z_sample, [tau, 1.0 - tau])
    if z_hi <= z_lo:
        raise ValueError("degenerate z quantile box")
    z_taper = spec.smoothness * (z_hi - z_lo)
    return TrimWeight(spec.kind, float(x_lo), float(x_hi), float(x_taper),
                      float(z_lo), float(z_hi), float(z_taper))
