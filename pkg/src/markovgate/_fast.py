"""Jitted inner loops: batched indirect estimators and SDE integrators.

The indirect (composed) estimators are the package's cost center.  The
loops here exploit three facts: the conditioning samples are pre-sorted,
the kernels have compact support, and the composing response kernel
restricts the inner sum to the intersection of a conditioning window and
a response window.  Evaluating at all n sample points costs
O(n * k * (log k + |intersection|)) with k the mean window size.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# Scalar kernel evaluation (codes match kernels.KERNEL_CODES)
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _kval(code: int, u: float) -> float:
    if u <= -1.0 or u >= 1.0:
        return 0.0
    t = 1.0 - u * u
    if code == 0:
        return 0.75 * t
    elif code == 1:
        return 0.9375 * t * t
    return 1.09375 * t * t * t


# ---------------------------------------------------------------------------
# Indirect density:  (1/n) sum_j W_n(X_j - x, x; h3) * phat(z | Y_j, b1, b2)
# ---------------------------------------------------------------------------


@njit(cache=True)
def indirect_density_batch(
    x_sorted, x_orig,            # conditioning sample sorted + original index
    y_vals,                      # Y value per original index
    a_in, b_in, ok_in,           # inner-moment coefficients s2/det, s1/det
    z_sorted, y_of_zsorted,      # response sample sorted + matched Y values
    xe, ze,                      # evaluation points
    s1x, s2x, detx,              # outer moments at evaluation points
    h3, b1, b2,
    wcode, kcode,
    n,
):
    m = xe.size
    out = np.zeros(m)
    bad_frac = np.zeros(m)
    inv_h3 = 1.0 / h3
    inv_b1 = 1.0 / b1
    inv_b2 = 1.0 / b2
    inner_scale = inv_b1 * inv_b2 / n
    for i in range(m):
        zi = ze[i]
        zlo = np.searchsorted(z_sorted, zi - b2)
        zhi = np.searchsorted(z_sorted, zi + b2)
        # response window resorted by the inner conditioning coordinate
        sub_y = y_of_zsorted[zlo:zhi]
        sub_z = z_sorted[zlo:zhi]
        order = np.argsort(sub_y)
        sy = sub_y[order]
        sz = sub_z[order]

        xlo = np.searchsorted(x_sorted, xe[i] - h3)
        xhi = np.searchsorted(x_sorted, xe[i] + h3)
        a_out = s2x[i] / detx[i] * inv_h3
        b_out = s1x[i] / detx[i] * inv_h3
        acc = 0.0
        good_mass = 0.0
        n_bad = 0
        for jj in range(xlo, xhi):
            ux = (x_sorted[jj] - xe[i]) * inv_h3
            wout = _kval(wcode, ux) * (a_out - ux * b_out)
            j = x_orig[jj]
            if not ok_in[j]:
                n_bad += 1
                continue
            yj = y_vals[j]
            tlo = np.searchsorted(sy, yj - b1)
            thi = np.searchsorted(sy, yj + b1)
            s0 = 0.0
            s1 = 0.0
            for t in range(tlo, thi):
                uy = (sy[t] - yj) * inv_b1
                ky = _kval(wcode, uy)
                kz = _kval(kcode, (sz[t] - zi) * inv_b2)
                kk = ky * kz
                s0 += kk
                s1 += uy * kk
            pj = (a_in[j] * s0 - b_in[j] * s1) * inner_scale
            acc += wout * pj
            good_mass += wout
        if xhi > xlo:
            nwin = xhi - xlo
            bad_frac[i] = n_bad / nwin
            if n_bad == 0:
                out[i] = acc / n
            elif good_mass > 0.0:
                out[i] = acc / good_mass
    return out, bad_frac


# ---------------------------------------------------------------------------
# Indirect distribution:  (1/n) sum_j W_n(X_j - x, x; h3) * Phat(z | Y_j)
# Inner transition distributions are served from per-point prefix sums
# over the conditioning windows sorted by response value.
# ---------------------------------------------------------------------------


@njit(cache=True)
def indirect_distribution_batch(
    x_sorted, x_orig,
    ok_in,
    win_start,                   # (n+1,) offsets into the ragged arrays
    win_z, win_cumw,             # per-point window: z-sorted values, inclusive
                                 # prefix sums of inner effective weights
    xe, ze,
    s1x, s2x, detx,
    h3,
    wcode,
    n,
):
    m = xe.size
    out = np.zeros(m)
    bad_frac = np.zeros(m)
    inv_h3 = 1.0 / h3
    inv_n = 1.0 / n
    for i in range(m):
        zi = ze[i]
        xlo = np.searchsorted(x_sorted, xe[i] - h3)
        xhi = np.searchsorted(x_sorted, xe[i] + h3)
        a_out = s2x[i] / detx[i] * inv_h3
        b_out = s1x[i] / detx[i] * inv_h3
        acc = 0.0
        good_mass = 0.0
        n_bad = 0
        for jj in range(xlo, xhi):
            ux = (x_sorted[jj] - xe[i]) * inv_h3
            wout = _kval(wcode, ux) * (a_out - ux * b_out)
            j = x_orig[jj]
            if not ok_in[j]:
                n_bad += 1
                continue
            s, e = win_start[j], win_start[j + 1]
            pos = np.searchsorted(win_z[s:e], zi)
            inner = 0.0 if pos == 0 else win_cumw[s + pos - 1]
            acc += wout * (inner * inv_n)
            good_mass += wout
        if xhi > xlo:
            nwin = xhi - xlo
            bad_frac[i] = n_bad / nwin
            if n_bad == 0:
                out[i] = acc / n
            elif good_mass > 0.0:
                out[i] = acc / good_mass
    return out, bad_frac


# ---------------------------------------------------------------------------
# SDE integrators (coefficients precomputed, noise passed in)
# ---------------------------------------------------------------------------


@njit(cache=True)
def ar1_recursion(x0: float, c: float, rho: float, eps) -> np.ndarray:
    """x_{k+1} = c + rho * x_k + eps_k, returning the full path."""
    n = eps.size
    out = np.empty(n + 1)
    out[0] = x0
    for k in range(n):
        out[k + 1] = c + rho * out[k] + eps[k]
    return out


@njit(cache=True)
def euler_mean_reverting(x0, kappa, level, dt, sig_dw) -> np.ndarray:
    """dX = kappa (level_k - X) dt + sig_dw_k with per-step level and noise."""
    n = sig_dw.size
    out = np.empty(n + 1)
    out[0] = x0
    for k in range(n):
        out[k + 1] = out[k] + kappa * (level[k] - out[k]) * dt + sig_dw[k]
    return out


@njit(cache=True)
def euler_ou(x0, kappa, alpha, sigma, dt, eps) -> np.ndarray:
    n = eps.size
    sqdt = np.sqrt(dt)
    out = np.empty(n + 1)
    out[0] = x0
    for k in range(n):
        out[k + 1] = out[k] + kappa * (alpha - out[k]) * dt + sigma * sqdt * eps[k]
    return out


@njit(cache=True)
def euler_cir_full_truncation(v0, kappa, level, sigma, dt, eps) -> np.ndarray:
    """Square-root diffusion with drift/diffusion evaluated at max(v, 0).

    Returns the truncated (nonnegative) path max(v_k, 0).
    """
    n = eps.size
    sqdt = np.sqrt(dt)
    out = np.empty(n + 1)
    v = v0
    out[0] = v0 if v0 > 0.0 else 0.0
    for k in range(n):
        vp = v if v > 0.0 else 0.0
        v = v + kappa * (level - vp) * dt + sigma * np.sqrt(vp) * sqdt * eps[k]
        out[k + 1] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def euler_ou_jumps(x0, kappa, alpha, sigma, dt, eps, jump_add) -> np.ndarray:
    n = eps.size
    sqdt = np.sqrt(dt)
    out = np.empty(n + 1)
    out[0] = x0
    for k in range(n):
        out[k + 1] = (out[k] + kappa * (alpha - out[k]) * dt
                      + sigma * sqdt * eps[k] + jump_add[k])
    return out


@njit(cache=True)
def euler_ou_stochvol(x0, kappa, alpha, theta, sigma, vol_path, dt, eps) -> np.ndarray:
    """dX = kappa (alpha - X) dt + ((1-theta) sigma + theta vol_k) dW."""
    n = eps.size
    sqdt = np.sqrt(dt)
    out = np.empty(n + 1)
    out[0] = x0
    for k in range(n):
        diff = (1.0 - theta) * sigma + theta * vol_path[k]
        out[k + 1] = out[k] + kappa * (alpha - out[k]) * dt + diff * sqdt * eps[k]
    return out
