"""Essentially non-oscillatory (ENO) cubic interpolation on value slices.

1-D interpolation is periodic in theta; the 2-D version is a tensor
product over (r, theta) with the theta axis periodic and r clamped to
[0, r_max]. Stencils grow from the bracketing interval by repeatedly
adding the neighbor whose divided difference is smaller in magnitude,
so the cubic avoids straddling kinks in the data where possible.

The solvers evaluate millions of these per slice, so the core lives in
numba kernels; the hot path additionally reads precomputed per-interval
theta coefficients. Queries that land exactly on a gridpoint return the
stored value bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import GridSpec, validate_slice
from .model import TWO_PI


class InterpError(ValueError):
    """Bad interpolation input (too few samples, non-finite data)."""


@dataclass(frozen=True)
class GridSlice2D:
    """Immutable (n_r+1, n_theta) value slice bound to its grid."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        try:
            validate_slice(vals, self.grid)
        except ValueError as exc:
            raise InterpError(str(exc)) from exc
        object.__setattr__(self, "values", vals)


@njit(cache=True, inline="always")
def _eno_window_eval(w, m, ib, x):
    """Adaptive-stencil Newton cubic on w[0:m], unit spacing.

    Query lies in interval [ib, ib+1] at local offset x in [0, 1). The
    stencil grows from that interval toward the smaller divided
    differences, degrading below cubic only when fewer than 4 points
    exist.
    """
    lo = ib
    hi = ib + 1
    while hi - lo < 3:
        can_l = lo >= 1
        can_r = hi <= m - 2
        if can_l and can_r:
            if hi - lo == 1:
                dl = w[lo - 1] - 2.0 * w[lo] + w[lo + 1]
                dr = w[lo] - 2.0 * w[lo + 1] + w[lo + 2]
            else:
                dl = -w[lo - 1] + 3.0 * w[lo] - 3.0 * w[lo + 1] + w[lo + 2]
                dr = -w[lo] + 3.0 * w[lo + 1] - 3.0 * w[lo + 2] + w[lo + 3]
            if abs(dl) <= abs(dr):
                lo -= 1
            else:
                hi += 1
        elif can_l:
            lo -= 1
        elif can_r:
            hi += 1
        else:
            break
    xs = (ib - lo) + x
    n = hi - lo + 1
    if n == 4:
        a0 = w[lo]
        a1 = w[lo + 1]
        a2 = w[lo + 2]
        a3 = w[lo + 3]
        c1 = a1 - a0
        c2 = (a2 - 2.0 * a1 + a0) * 0.5
        c3 = (a3 - 3.0 * a2 + 3.0 * a1 - a0) / 6.0
        return a0 + xs * (c1 + (xs - 1.0) * (c2 + (xs - 2.0) * c3))
    if n == 3:
        a0 = w[lo]
        a1 = w[lo + 1]
        a2 = w[lo + 2]
        c1 = a1 - a0
        c2 = (a2 - 2.0 * a1 + a0) * 0.5
        return a0 + xs * (c1 + (xs - 1.0) * c2)
    if n == 2:
        return w[lo] + xs * (w[lo + 1] - w[lo])
    return w[lo]


@njit(cache=True, inline="always")
def _wrap_theta(th):
    """Wrap into [0, 2pi); cheap for values already near the range."""
    while th >= TWO_PI:
        th -= TWO_PI
    while th < 0.0:
        th += TWO_PI
    return th


@njit(cache=True, inline="always")
def _theta_loc(theta, dtheta, n_th):
    """(bracketing interval j0, local offset x, snapped node or -1)."""
    th = _wrap_theta(theta)
    t = th / dtheta
    j0 = int(t)
    if j0 > n_th - 1:
        j0 = n_th - 1
    if th == j0 * dtheta:
        return j0, 0.0, j0
    jp = j0 + 1
    if th == jp * dtheta:
        if jp == n_th:
            jp = 0
        return j0, 0.0, jp
    return j0, t - j0, -1


@njit(cache=True)
def _eno1p(row, theta, dtheta, scratch):
    """Periodic 1-D ENO cubic over a theta row; scratch holds >= 6 floats."""
    n = row.shape[0]
    j0, x, jsnap = _theta_loc(theta, dtheta, n)
    if jsnap >= 0:
        return row[jsnap]
    for k in range(6):
        scratch[k] = row[(j0 - 2 + k) % n]
    return _eno_window_eval(scratch, 6, 2, x)


@njit(cache=True, inline="always")
def _r_locate(rf, dr, rmax, n_r1):
    """Clamp a radial query and resolve its window.

    Returns (rlo, m, ib, xr, r_snap): window start row, window length,
    bracket position within the window, local offset in the bracket
    interval, and the exactly-hit row index (-1 if none).
    """
    if rf < 0.0:
        rf = 0.0
    elif rf > rmax:
        rf = rmax
    tr = rf / dr
    ir = int(tr)
    if ir > n_r1 - 1:
        ir = n_r1 - 1
    r_snap = -1
    if rf == ir * dr:
        r_snap = ir
    elif ir + 1 <= n_r1 - 1 and rf == (ir + 1) * dr:
        r_snap = ir + 1
    if ir > n_r1 - 2:
        ir = n_r1 - 2
    rlo = ir - 2
    if rlo < 0:
        rlo = 0
    rhi = ir + 3
    if rhi > n_r1 - 1:
        rhi = n_r1 - 1
    return rlo, rhi - rlo + 1, ir - rlo, tr - ir, r_snap


@njit(cache=True)
def _bicubic(values, dr, dtheta, rmax, r, theta, scratch_th, scratch_r):
    """Tensor-product ENO bicubic: theta pass per radial row, then an
    ENO pass across r (one-sided near the radial boundaries)."""
    n_r1 = values.shape[0]
    rlo, m, ib, xr, r_snap = _r_locate(r, dr, rmax, n_r1)
    if r_snap >= 0:
        return _eno1p(values[r_snap], theta, dtheta, scratch_th)
    for k in range(m):
        scratch_r[k] = _eno1p(values[rlo + k], theta, dtheta, scratch_th)
    return _eno_window_eval(scratch_r, m, ib, xr)


@njit(cache=True)
def _theta_coeffs(values, coefs, i_lo, i_hi):
    """Precompute periodic theta-direction ENO cubics for a slice.

    coefs has shape (n_theta, n_r+1, 4): coefs[j, i] holds p0..p3 with
    value = p0 + x(p1 + x(p2 + x p3)) for x in [0, 1) the offset within
    interval [theta_j, theta_{j+1}) of row i. Interval-major layout keeps
    the radial gather of a query within one contiguous block.
    """
    n_th = values.shape[1]
    for i in range(i_lo, i_hi + 1):
        rowv = values[i]
        for j in range(n_th):
            wm2 = rowv[(j - 2) % n_th]
            wm1 = rowv[(j - 1) % n_th]
            w0 = rowv[j]
            w1 = rowv[(j + 1) % n_th]
            w2 = rowv[(j + 2) % n_th]
            w3 = rowv[(j + 3) % n_th]
            ddl = wm1 - 2.0 * w0 + w1
            ddr = w0 - 2.0 * w1 + w2
            if abs(ddl) <= abs(ddr):
                d3l = -wm2 + 3.0 * wm1 - 3.0 * w0 + w1
                d3r = -wm1 + 3.0 * w0 - 3.0 * w1 + w2
                if abs(d3l) <= abs(d3r):
                    b = 2.0
                    a0 = wm2
                    a1 = wm1
                    a2 = w0
                    a3 = w1
                else:
                    b = 1.0
                    a0 = wm1
                    a1 = w0
                    a2 = w1
                    a3 = w2
            else:
                d3l = -wm1 + 3.0 * w0 - 3.0 * w1 + w2
                d3r = -w0 + 3.0 * w1 - 3.0 * w2 + w3
                if abs(d3l) <= abs(d3r):
                    b = 1.0
                    a0 = wm1
                    a1 = w0
                    a2 = w1
                    a3 = w2
                else:
                    b = 0.0
                    a0 = w0
                    a1 = w1
                    a2 = w2
                    a3 = w3
            c1 = a1 - a0
            c2 = (a2 - 2.0 * a1 + a0) * 0.5
            c3 = (a3 - 3.0 * a2 + 3.0 * a1 - a0) / 6.0
            ca = c2 + (b - 2.0) * c3
            e0 = c1 + (b - 1.0) * ca
            e1 = (b - 1.0) * c3 + ca
            coefs[j, i, 0] = a0 + b * e0
            coefs[j, i, 1] = e0 + b * e1
            coefs[j, i, 2] = e1 + b * c3
            coefs[j, i, 3] = c3


@njit(cache=True, inline="always")
def _foot_value(values, coefs, rlo, m, ib, xr, r_snap, theta, dtheta, n_th,
                scratch):
    """One bicubic evaluation given a resolved radial window, reading
    precomputed theta coefficients."""
    j0, x, jsnap = _theta_loc(theta, dtheta, n_th)
    if r_snap >= 0:
        if jsnap >= 0:
            return values[r_snap, jsnap]
        c = coefs[j0, r_snap]
        return c[0] + x * (c[1] + x * (c[2] + x * c[3]))
    if jsnap >= 0:
        for k in range(m):
            scratch[k] = values[rlo + k, jsnap]
    else:
        cj = coefs[j0]
        for k in range(m):
            c = cj[rlo + k]
            scratch[k] = c[0] + x * (c[1] + x * (c[2] + x * c[3]))
    return _eno_window_eval(scratch, m, ib, xr)


@njit(cache=True, inline="always")
def _feet_mean(values, coefs, dr, dtheta, rmax, rf, thc, spread, scratch):
    """Mean of the two diffusion feet (rf, thc +- spread), unclamped;
    the radial window is resolved once and shared."""
    n_r1 = values.shape[0]
    n_th = values.shape[1]
    rlo, m, ib, xr, r_snap = _r_locate(rf, dr, rmax, n_r1)
    if spread == 0.0:
        return _foot_value(values, coefs, rlo, m, ib, xr, r_snap, thc,
                           dtheta, n_th, scratch)
    vp = _foot_value(values, coefs, rlo, m, ib, xr, r_snap, thc + spread,
                     dtheta, n_th, scratch)
    vm = _foot_value(values, coefs, rlo, m, ib, xr, r_snap, thc - spread,
                     dtheta, n_th, scratch)
    return 0.5 * (vp + vm)


@njit(cache=True, inline="always")
def _steer_feet(values, coefs, dr, dtheta, rmax, rf, thc, spread, scratch):
    """Probability-valued feet mean, clamped into [0, 1]."""
    v = _feet_mean(values, coefs, dr, dtheta, rmax, rf, thc, spread, scratch)
    if v < 0.0:
        v = 0.0
    elif v > 1.0:
        v = 1.0
    return v


def eno_cubic_1d_periodic(row: np.ndarray, theta_query: float) -> float:
    """Periodic ENO cubic over one theta row spanning [0, 2pi)."""
    row = np.ascontiguousarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size < 4:
        raise InterpError("periodic ENO interpolation needs at least 4 samples")
    if not np.isfinite(row).all():
        raise InterpError("row contains non-finite values")
    scratch = np.empty(6)
    return float(_eno1p(row, float(theta_query), TWO_PI / row.size, scratch))


def eno_bicubic(slice2d: GridSlice2D, r_query: float, theta_query: float) -> float:
    """Bicubic ENO value of a slice at (r, theta); r clamps to [0, r_max]."""
    g = slice2d.grid
    scratch_th = np.empty(6)
    scratch_r = np.empty(6)
    return float(
        _bicubic(
            slice2d.values, g.delta_r, g.delta_theta, g.r_max,
            float(r_query), float(theta_query), scratch_th, scratch_r,
        )
    )


def theta_interval_coefficients(values: np.ndarray) -> np.ndarray:
    """All periodic theta-direction cubic coefficients for a slice,
    shape (n_theta, n_r+1, 4)."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    coefs = np.empty((values.shape[1], values.shape[0], 4))
    _theta_coeffs(values, coefs, 0, values.shape[0] - 1)
    return coefs
