"""Direct and composed (Chapman-Kolmogorov) transition estimators.

From a path sampled every ``delta`` time units we form overlapping triples
(X_i, Y_i, Z_i) = (X_{i d}, X_{(i+1) d}, X_{(i+2) d}).  Four objects are
estimated by local-linear smoothing:

* the one-step transition density  phat(z | y)   from (Y_i, Z_i) pairs,
* the one-step transition distribution Phat(z | y),
* the two-step transition density directly from (X_i, Z_i) pairs,
* the two-step transition estimated indirectly, by regressing the
  one-step estimate at Y_i on X_i (the Chapman-Kolmogorov composition).

Under the Markov hypothesis the direct and indirect two-step estimates
agree up to sampling noise; the statistics in :mod:`markovgate.stats`
measure their discrepancy.

All estimators share one prepared, sorted view of the sample and evaluate
through compact-support kernel windows, so batch evaluation at the n
sample points costs O(n k^2) rather than O(n^3), with k the mean window
size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _fast
from .errors import DegenerateDesignError
from .kernels import (KernelSpec, get_kernel, moments_batch, ragged_index,
                      ridged_determinant, window_bounds)

__all__ = ["TripleSample", "Bandwidths", "EstimatorHandle"]

MIN_TRIPLES = 10

# Fraction of an outer window allowed to sit on degenerate inner designs
# before the composed estimators refuse to renormalize around them.
MAX_INNER_DROP_FRAC = 0.01


@dataclass(frozen=True)
class TripleSample:
    """Overlapping triples from a single path; y and z are shifts of x."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    delta: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name,
                               np.ascontiguousarray(getattr(self, name), dtype=float))
        n = self.x.size
        if self.y.size != n or self.z.size != n:
            raise ValueError("x, y, z must have equal length")
        if n < MIN_TRIPLES:
            raise ValueError(f"need at least {MIN_TRIPLES} triples, got {n}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not (np.array_equal(self.y[:-1], self.x[1:])
                and np.array_equal(self.z[:-1], self.y[1:])):
            raise ValueError("y must be x shifted by one index and z by two; "
                             "build with TripleSample.from_path")
        if not (np.all(np.isfinite(self.x)) and np.isfinite(self.y[-1])
                and np.isfinite(self.z[-1])):
            raise ValueError("sample contains non-finite values")

    @classmethod
    def from_path(cls, values, delta: float) -> "TripleSample":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1:
            raise ValueError("path must be one-dimensional")
        n = values.size - 2
        return cls(values[:n], values[1:n + 1], values[2:], delta)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def path(self) -> np.ndarray:
        return np.concatenate([self.x, self.y[-1:], self.z[-1:]])

    def reversed(self) -> "TripleSample":
        return TripleSample.from_path(self.path[::-1], self.delta)


@dataclass(frozen=True)
class Bandwidths:
    """The five smoothing parameters.

    b1/b2 localize the one-step density's conditioning/response variables,
    h1/h2 the direct two-step density's, and h3 the composing regression.
    """

    b1: float
    b2: float
    h1: float
    h2: float
    h3: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(vals > 0):
            raise ValueError("all bandwidths must be strictly positive")
        ratio = vals.max() / vals.min()
        if ratio > 10.0:
            warnings.warn(
                f"bandwidths span a {ratio:.1f}x range; the asymptotic "
                "calibration assumes they are of the same order",
                UserWarning, stacklevel=2)

    def as_array(self) -> np.ndarray:
        return np.array([self.b1, self.b2, self.h1, self.h2, self.h3])

    def scaled(self, a: float) -> "Bandwidths":
        return Bandwidths(*(self.as_array() * a))


class _SortedView:
    """A sample sorted once, with the map back to original indices."""

    __slots__ = ("values", "order")

    def __init__(self, values: np.ndarray):
        self.order = np.argsort(values, kind="stable")
        self.values = np.ascontiguousarray(values[self.order])


class EstimatorHandle:
    """Prepared estimators over one triple sample.

    Immutable after construction; evaluations at distinct points are
    independent and safe to run concurrently.
    """

    def __init__(self, sample: TripleSample, bw: Bandwidths,
                 kernel_w: str | KernelSpec = "epanechnikov",
                 kernel_k: str | KernelSpec = "epanechnikov"):
        self.sample = sample
        self.bw = bw
        self.kernel_w = kernel_w if isinstance(kernel_w, KernelSpec) else get_kernel(kernel_w)
        self.kernel_k = kernel_k if isinstance(kernel_k, KernelSpec) else get_kernel(kernel_k)
        self._x = _SortedView(sample.x)
        self._y = _SortedView(sample.y)
        self._z = _SortedView(sample.z)
        self._y_of_zsorted = np.ascontiguousarray(sample.y[self._z.order])
        # inner local-linear coefficients at every data point Y_j
        s0, s1, s2, _, distinct = moments_batch(
            self._y.values, sample.y, bw.b1, self.kernel_w, sample.n)
        det = ridged_determinant(s0, s1, s2)
        ok = distinct & (det > 0.0)
        safe = np.where(ok, det, 1.0)
        self._inner_a = np.where(ok, s2 / safe, 0.0)
        self._inner_b = np.where(ok, s1 / safe, 0.0)
        self._inner_ok = ok
        self._inner_dist = None     # lazy ragged prefix structure

    # -- prepared pieces ----------------------------------------------------

    @property
    def n(self) -> int:
        return self.sample.n

    @property
    def inner_ok(self) -> np.ndarray:
        """Data points whose one-step conditioning design is usable."""
        return self._inner_ok

    def _view(self, var: str) -> _SortedView:
        return {"x": self._x, "y": self._y, "z": self._z}[var]

    def _moments(self, var: str, points: np.ndarray, b: float):
        view = self._view(var)
        s0, s1, s2, cnt, distinct = moments_batch(
            view.values, points, b, self.kernel_w, self.n)
        det = ridged_determinant(s0, s1, s2)
        ok = distinct & (det > 0.0)
        return s1, s2, det, ok, cnt

    def eval_moments(self, var: str, points, b: float):
        """Design moments (s1, s2, ridged det) of a conditioning variable
        at evaluation points, raising on any degenerate design."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        s1, s2, det, ok, cnt = self._moments(var, points, b)
        if not ok.all():
            i = int(np.flatnonzero(~ok)[0])
            raise DegenerateDesignError(
                f"degenerate design at {var}={points[i]:g} "
                f"(window holds {int(cnt[i])} points)")
        return s1, s2, det

    def weight_matrix_masked(self, var: str, points, b: float):
        """Sparse local-linear weight matrix W_n (rows = evaluation points,
        columns = original data indices) plus a per-row validity mask.
        Rows with degenerate designs are left empty."""
        view = self._view(var)
        points = np.atleast_1d(np.asarray(points, dtype=float))
        s1, s2, det, ok, _ = self._moments(var, points, b)
        lo, hi = window_bounds(view.values, points, b * self.kernel_w.support_radius)
        lo = np.where(ok, lo, 0)
        hi = np.where(ok, hi, 0)
        rows, idx, _ = ragged_index(lo, hi)
        u = (view.values[idx] - points[rows]) / b
        wb = self.kernel_w(u) / b
        vals = wb * (s2[rows] - u * s1[rows]) / det[rows]
        mat = sp.csr_matrix((vals, (rows, view.order[idx])),
                            shape=(points.size, self.n))
        return mat, ok

    def weight_matrix(self, var: str, points, b: float) -> sp.csr_matrix:
        mat, ok = self.weight_matrix_masked(var, points, b)
        if not ok.all():
            pts = np.atleast_1d(np.asarray(points, dtype=float))
            i = int(np.flatnonzero(~ok)[0])
            raise DegenerateDesignError(f"degenerate design at {var}={pts[i]:g}")
        return mat

    def ll_apply(self, var: str, points, b: float, responses: np.ndarray,
                 col_keep: np.ndarray | None = None):
        """Local-linear regression of per-data-point responses on one
        conditioning variable, evaluated at ``points``.

        ``col_keep`` masks out data points whose responses are unusable;
        the remaining weight mass is renormalized per row.  Returns
        (values, ok_rows).
        """
        mat, ok = self.weight_matrix_masked(var, points, b)
        responses = np.asarray(responses, dtype=float)
        flat = responses.ndim == 1
        resp = responses[:, None] if flat else responses
        if col_keep is not None and not col_keep.all():
            mat = mat.multiply(col_keep.astype(float)[None, :]).tocsr()
            mass = np.asarray(mat.sum(axis=1)).ravel() / self.n
            out = np.asarray(mat @ resp) / self.n
            good = mass > 0.0
            out[good] /= mass[good, None]
            ok = ok & good
        else:
            out = np.asarray(mat @ resp) / self.n
        return (out.ravel() if flat else out), ok

    # -- one-step estimators -------------------------------------------------

    def density_1step_many(self, ys, zs) -> np.ndarray:
        """phat(z | y) over paired evaluation arrays."""
        return self._direct("y", ys, zs, self.bw.b1, self.bw.b2, "density")

    def distribution_1step_many(self, ys, zs) -> np.ndarray:
        return self._direct("y", ys, zs, self.bw.b1, self.bw.b2, "distribution")

    def density_1step(self, y: float, z: float) -> float:
        return float(self.density_1step_many([y], [z])[0])

    def distribution_1step(self, y: float, z: float) -> float:
        return float(self.distribution_1step_many([y], [z])[0])

    # -- two-step direct -----------------------------------------------------

    def density_2step_direct_many(self, xs, zs) -> np.ndarray:
        return self._direct("x", xs, zs, self.bw.h1, self.bw.h2, "density")

    def distribution_2step_direct_many(self, xs, zs) -> np.ndarray:
        return self._direct("x", xs, zs, self.bw.h1, self.bw.h2, "distribution")

    def density_2step_direct(self, x: float, z: float) -> float:
        return float(self.density_2step_direct_many([x], [z])[0])

    def distribution_2step_direct(self, x: float, z: float) -> float:
        return float(self.distribution_2step_direct_many([x], [z])[0])

    def _direct(self, var: str, pts, zs, b_cond: float, b_resp: float,
                mode: str) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        if pts.shape != zs.shape:
            raise ValueError("evaluation arrays must have matching shape")
        view = self._view(var)
        s1, s2, det = self.eval_moments(var, pts, b_cond)
        lo, hi = window_bounds(view.values, pts, b_cond * self.kernel_w.support_radius)
        rows, idx, _ = ragged_index(lo, hi)
        u = (view.values[idx] - pts[rows]) / b_cond
        wb = self.kernel_w(u) / b_cond
        wn = wb * (s2[rows] - u * s1[rows]) / det[rows]
        rv = self.sample.z[view.order[idx]]
        if mode == "density":
            resp_vals = self.kernel_k((rv - zs[rows]) / b_resp) / b_resp
        else:
            resp_vals = (rv < zs[rows]).astype(float)
        return np.bincount(rows, weights=wn * resp_vals, minlength=pts.size) / self.n

    # -- two-step indirect (Chapman-Kolmogorov composition) -------------------

    def density_2step_indirect_many(self, xs, zs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        if xs.shape != zs.shape:
            raise ValueError("evaluation arrays must have matching shape")
        s1, s2, det = self.eval_moments("x", xs, self.bw.h3)
        out, bad_frac = _fast.indirect_density_batch(
            self._x.values, self._x.order,
            self.sample.y, self._inner_a, self._inner_b, self._inner_ok,
            self._z.values, self._y_of_zsorted,
            xs, zs, s1, s2, det,
            self.bw.h3, self.bw.b1, self.bw.b2,
            self.kernel_w.code, self.kernel_k.code, self.n)
        self._check_inner_drops(bad_frac)
        return out

    def distribution_2step_indirect_many(self, xs, zs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        if xs.shape != zs.shape:
            raise ValueError("evaluation arrays must have matching shape")
        s1, s2, det = self.eval_moments("x", xs, self.bw.h3)
        start, win_z, win_cumw = self._inner_dist_prefix()
        out, bad_frac = _fast.indirect_distribution_batch(
            self._x.values, self._x.order, self._inner_ok,
            start, win_z, win_cumw,
            xs, zs, s1, s2, det,
            self.bw.h3, self.kernel_w.code, self.n)
        self._check_inner_drops(bad_frac)
        return out

    def density_2step_indirect(self, x: float, z: float) -> float:
        return float(self.density_2step_indirect_many([x], [z])[0])

    def distribution_2step_indirect(self, x: float, z: float) -> float:
        return float(self.distribution_2step_indirect_many([x], [z])[0])

    def _check_inner_drops(self, bad_frac: np.ndarray) -> None:
        worst = bad_frac.max() if bad_frac.size else 0.0
        if worst > MAX_INNER_DROP_FRAC:
            raise DegenerateDesignError(
                f"{worst:.1%} of an outer window sits on degenerate inner "
                "designs; refusing to renormalize")

    def _inner_dist_prefix(self):
        """Per data point: its conditioning window sorted by response value,
        with inclusive prefix sums of the inner effective weights."""
        if self._inner_dist is None:
            y = self.sample.y
            b1 = self.bw.b1
            lo, hi = window_bounds(self._y.values, y,
                                   b1 * self.kernel_w.support_radius)
            rows, idx, cnt = ragged_index(lo, hi)
            u = (self._y.values[idx] - y[rows]) / b1
            wb = self.kernel_w(u) / b1
            # _inner_a/_inner_b already fold in 1/det; rows flagged not-ok
            # are skipped at query time
            wn = wb * (self._inner_a[rows] - u * self._inner_b[rows])
            zv = self.sample.z[self._y.order[idx]]
            order = np.lexsort((zv, rows))
            zv = zv[order]
            wn = wn[order]
            csum = np.cumsum(wn)
            starts = np.concatenate(([0], np.cumsum(cnt))).astype(np.int64)
            shifted = np.concatenate(([0.0], csum[:-1]))
            base = shifted[starts[:-1]]
            seg = csum - np.repeat(base, cnt)
            self._inner_dist = (starts, np.ascontiguousarray(zv),
                                np.ascontiguousarray(seg))
        return self._inner_dist

    # -- calibration-grid helpers ---------------------------------------------

    def inner_density_at_data(self, z_grid: np.ndarray) -> np.ndarray:
        """Matrix G[j, g] = phat(z_grid[g] | Y_j) at every data point.

        Rows where ``inner_ok`` is false are zero; exclude them downstream.
        """
        z_grid = np.asarray(z_grid, dtype=float)
        kz = self.kernel_k((self.sample.z[:, None] - z_grid[None, :]) / self.bw.b2)
        kz /= self.bw.b2
        win, _ = self.weight_matrix_masked("y", self.sample.y, self.bw.b1)
        return np.asarray(win @ kz) / self.n

    def inner_distribution_at_data(self, z_grid: np.ndarray) -> np.ndarray:
        """Matrix G[j, g] = Phat(z_grid[g] | Y_j) at every data point."""
        z_grid = np.asarray(z_grid, dtype=float)
        ind = (self.sample.z[:, None] < z_grid[None, :]).astype(float)
        win, _ = self.weight_matrix_masked("y", self.sample.y, self.bw.b1)
        return np.asarray(win @ ind) / self.n

    def density_2step_direct_grid(self, x_grid, z_grid) -> np.ndarray:
        """phat(z | x, 2 delta) on the tensor grid, rows = x."""
        z_grid = np.asarray(z_grid, dtype=float)
        kz = self.kernel_k((self.sample.z[:, None] - z_grid[None, :]) / self.bw.h2)
        kz /= self.bw.h2
        wd = self.weight_matrix("x", x_grid, self.bw.h1)
        return np.asarray(wd @ kz) / self.n

    def marginal_density(self, points, b: float) -> np.ndarray:
        """Kernel density estimate of the X marginal."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        s0, _, _, _, _ = moments_batch(self._x.values, points, b,
                                       self.kernel_w, self.n)
        return s0
