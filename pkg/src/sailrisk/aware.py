"""Deadline-aware value function and policy by causal budget marching.

Solves, on the (r, theta, q, s) grid, for the maximal probability
W(r, theta, q, s) of reaching the target within the remaining time
budget s, together with the maximizing feedback action at every
gridpoint. Budget slices are filled in increasing s order in a single
sweep: slice s_k only reads the finalized slice s_{k-1} (steering) and
the slice C earlier (tack switch), so no iteration is needed.

Per cell the steering branch maximizes the two-foot semi-Lagrangian
average over a scanned angle grid refined by golden-section search;
the switch branch, available once s_k >= C, takes the three-node
Gauss-Hermite expectation of the opposite-tack slice at s_k - C.
Cells whose straight-line time floor (r - R_tgt)/f_max already exceeds
the budget are set to zero without work.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import GridSpec
from .interp import (
    GridSlice2D,
    _bicubic,
    _eno1p,
    _steer_feet,
    _theta_coeffs,
    eno_cubic_1d_periodic,
)
from .model import (
    Action,
    ModelParams,
    action_from_code,
    polar_speed,
    tack_sign,
)
from .quadrature import switch_expectation
from .search import scan_then_gss

logger = logging.getLogger(__name__)

PI = math.pi
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SQ32 = math.sqrt(1.5)

DEFAULT_ANGLE_COUNT = 65
DEFAULT_GSS_TOL = 1e-4


@dataclass
class ValueField:
    """Success probabilities W on the grid, shape (n_s+1, 2, n_r+1, n_theta).

    Tack index 0 holds q = 1, index 1 holds q = 2. The array may be a
    disk-backed memmap for large grids.
    """

    W: np.ndarray
    grid: GridSpec
    params: ModelParams

    def slice2d(self, k: int, q: int) -> GridSlice2D:
        return GridSlice2D(
            values=np.asarray(self.W[k, q - 1], dtype=np.float64),
            grid=self.grid,
        )

    def value_nearest(self, r: float, theta: float, q: int, s: float) -> float:
        i = self.grid.nearest_r_index(r)
        j = self.grid.nearest_theta_index(theta)
        k = self.grid.nearest_s_index(s)
        return float(self.W[k, q - 1, i, j])

    def w_curve(self, r: float, theta: float, q: int) -> np.ndarray:
        """W across all budget slices at the nearest (r, theta) gridpoint."""
        i = self.grid.nearest_r_index(r)
        j = self.grid.nearest_theta_index(theta)
        return np.asarray(self.W[:, q - 1, i, j], dtype=np.float64)


@dataclass
class PolicyField:
    """Per-gridpoint maximizing actions, encoded as float32 codes
    (steering angle, or -1.0 for the tack switch)."""

    A: np.ndarray
    grid: GridSpec
    params: ModelParams

    def action_at(self, k: int, q: int, i: int, j: int) -> Action:
        return action_from_code(float(self.A[k, q - 1, i, j]))


@njit(cache=True)
def _polar_eval(bp, pc, u):
    """Piecewise-cubic boat speed (coefficients pre-scaled by f_max)."""
    n = bp.shape[0]
    if u <= bp[0]:
        u = bp[0]
    elif u >= bp[n - 1]:
        u = bp[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bp[mid] <= u:
            lo = mid
        else:
            hi = mid
    t = u - bp[lo]
    c = pc[lo]
    v = c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    if v < 0.0:
        v = 0.0
    return v


@njit(cache=True)
def _update_slice_aware(values_prev, coefs_prev, opp_slice, use_switch,
                        out_w, out_pol, r_pts, dr, dth, rmax, r_tgt, f_max,
                        tau, sigma, a, C, sign_q, u_scan, f_scan, cos_tab,
                        sin_tab, polar_bp, polar_pc, s_k, gss_tol, greedy_u,
                        i_hi):
    n_r1 = values_prev.shape[0]
    n_th = values_prev.shape[1]
    n_u = u_scan.shape[0]
    du = u_scan[1] - u_scan[0]
    spread = sigma * math.sqrt(tau)
    sq2c = sigma * math.sqrt(2.0 * C) * SQ32
    a_c = a * C
    a_t = tau * a
    scratch = np.empty(6)
    scratch_th = np.empty(6)
    best_v = np.empty(n_th)
    best_m = np.empty(n_th, dtype=np.int64)
    for i in range(n_r1):
        r_i = r_pts[i]
        if r_i <= r_tgt + 1e-15:
            for j in range(n_th):
                out_w[i, j] = 1.0
                out_pol[i, j] = greedy_u[j]
            continue
        if i > i_hi or (r_i - r_tgt) / f_max > s_k:
            for j in range(n_th):
                out_w[i, j] = 0.0
                out_pol[i, j] = greedy_u[j]
            continue
        inv_r = 1.0 / r_i
        for j in range(n_th):
            best_v[j] = -1.0
            best_m[j] = 0
        # scan: angle-outer loop so coefficient reads stay cache-local
        for m in range(n_u):
            fr = tau * f_scan[m]
            ft = fr * inv_r
            crow = cos_tab[m]
            srow = sin_tab[m]
            for j in range(n_th):
                rf = r_i - fr * crow[j]
                thc = j * dth + ft * srow[j] + a_t
                v = _steer_feet(values_prev, coefs_prev, dr, dth, rmax, rf,
                                thc, spread, scratch)
                if v > best_v[j]:
                    best_v[j] = v
                    best_m[j] = m
        for j in range(n_th):
            theta_j = j * dth
            bv = best_v[j]
            bu = u_scan[best_m[j]]
            # golden-section refinement inside one grid step of the winner
            lo = bu - du
            hi = bu + du
            if lo < 0.0:
                lo = 0.0
            if hi > PI:
                hi = PI
            c = hi - INV_PHI * (hi - lo)
            d = lo + INV_PHI * (hi - lo)
            f_u = _polar_eval(polar_bp, polar_pc, c)
            rel = theta_j - sign_q * c
            rf = r_i - tau * f_u * math.cos(rel)
            thc = theta_j + tau * f_u * math.sin(rel) * inv_r + a_t
            fc = _steer_feet(values_prev, coefs_prev, dr, dth, rmax, rf, thc,
                             spread, scratch)
            if fc > bv:
                bv = fc
                bu = c
            f_u = _polar_eval(polar_bp, polar_pc, d)
            rel = theta_j - sign_q * d
            rf = r_i - tau * f_u * math.cos(rel)
            thc = theta_j + tau * f_u * math.sin(rel) * inv_r + a_t
            fd = _steer_feet(values_prev, coefs_prev, dr, dth, rmax, rf, thc,
                             spread, scratch)
            if fd > bv:
                bv = fd
                bu = d
            while hi - lo > gss_tol:
                if fc > fd:
                    hi = d
                    d = c
                    fd = fc
                    c = hi - INV_PHI * (hi - lo)
                    x = c
                    took_c = True
                else:
                    lo = c
                    c = d
                    fc = fd
                    d = lo + INV_PHI * (hi - lo)
                    x = d
                    took_c = False
                f_u = _polar_eval(polar_bp, polar_pc, x)
                rel = theta_j - sign_q * x
                rf = r_i - tau * f_u * math.cos(rel)
                thc = theta_j + tau * f_u * math.sin(rel) * inv_r + a_t
                v = _steer_feet(values_prev, coefs_prev, dr, dth, rmax, rf,
                                thc, spread, scratch)
                if took_c:
                    fc = v
                else:
                    fd = v
                if v > bv:
                    bv = v
                    bu = x
            w_val = bv
            pol = bu
            if use_switch:
                row = opp_slice[i]
                eta_mid = theta_j + a_c
                v1 = _eno1p(row, eta_mid - sq2c, dth, scratch_th)
                v2 = _eno1p(row, eta_mid, dth, scratch_th)
                v3 = _eno1p(row, eta_mid + sq2c, dth, scratch_th)
                sw = (v1 + 4.0 * v2 + v3) / 6.0
                if sw < 0.0:
                    sw = 0.0
                elif sw > 1.0:
                    sw = 1.0
                if sw > w_val:
                    w_val = sw
                    pol = -1.0
            out_w[i, j] = w_val
            out_pol[i, j] = pol


def _angle_tables(grid: GridSpec, angles: np.ndarray):
    """Precomputed cos/sin of (theta_j - sign_q * u_m) per tack."""
    thetas = grid.theta_points()
    tabs = []
    for q in (1, 2):
        rel = thetas[None, :] - tack_sign(q) * angles[:, None]
        tabs.append((np.cos(rel), np.sin(rel)))
    return tabs


def _greedy_angles(grid: GridSpec, params: ModelParams) -> np.ndarray:
    """Best instantaneous-closure steering angle per (tack, theta_j).

    Stored at cells where the value is pinned (target or pruned) and no
    maximization runs: keeps simulated boats moving toward the target
    instead of idling when they stray into such cells.
    """
    fine = np.linspace(0.0, PI, 721)
    speeds = np.array([polar_speed(params.polar, float(u)) for u in fine])
    thetas = grid.theta_points()
    out = np.empty((2, grid.n_theta), dtype=np.float32)
    for qi, q in enumerate((1, 2)):
        closure = speeds[:, None] * np.cos(
            thetas[None, :] - tack_sign(q) * fine[:, None]
        )
        out[qi] = fine[np.argmax(closure, axis=0)].astype(np.float32)
    return out


def _polar_kernel_tables(params: ModelParams):
    bp = np.ascontiguousarray(params.polar.angles, dtype=np.float64)
    pc = np.ascontiguousarray(params.polar.coeffs * params.polar.f_max,
                              dtype=np.float64)
    return bp, pc


def steer_value(slice_prev: GridSlice2D, i: int, j: int, u: float,
                params: ModelParams, grid: GridSpec, q: int = 1) -> float:
    """Two-foot semi-Lagrangian average for steering angle u over one
    budget step, reading the finalized previous slice. Clamped to [0, 1]."""
    return steer_value_at(slice_prev, i * grid.delta_r, j * grid.delta_theta,
                          q, u, params, grid)


def steer_value_at(slice_prev: GridSlice2D, r_i: float, theta_j: float,
                   q: int, u: float, params: ModelParams,
                   grid: GridSpec) -> float:
    tau = grid.delta_s
    f = polar_speed(params.polar, u)
    rel = theta_j - tack_sign(q) * u
    rf = r_i - tau * f * math.cos(rel)
    rf = min(max(rf, 0.0), grid.r_max)
    thc = theta_j + tau * ((f / r_i) * math.sin(rel) + params.wind.a)
    spread = params.wind.sigma * math.sqrt(tau)
    scratch_th = np.empty(6)
    scratch_r = np.empty(6)
    if spread == 0.0:
        v = _bicubic(slice_prev.values, grid.delta_r, grid.delta_theta,
                     grid.r_max, rf, thc, scratch_th, scratch_r)
    else:
        vp = _bicubic(slice_prev.values, grid.delta_r, grid.delta_theta,
                      grid.r_max, rf, thc + spread, scratch_th, scratch_r)
        vm = _bicubic(slice_prev.values, grid.delta_r, grid.delta_theta,
                      grid.r_max, rf, thc - spread, scratch_th, scratch_r)
        v = 0.5 * (vp + vm)
    return float(min(max(v, 0.0), 1.0))


def maximize_steering(slice_prev: GridSlice2D, i: int, j: int,
                      params: ModelParams, grid: GridSpec,
                      angles: np.ndarray,
                      gss_tol: float = DEFAULT_GSS_TOL,
                      q: int = 1) -> tuple[float, float]:
    """Scan the angle grid, then refine with golden-section search.

    Returns (best angle, its steering value); scan ties break toward the
    smaller angle.
    """
    r_i = i * grid.delta_r
    theta_j = j * grid.delta_theta

    def fn(u: float) -> float:
        return steer_value_at(slice_prev, r_i, theta_j, q, u, params, grid)

    return scan_then_gss(fn, angles, gss_tol)


def switch_value(field: ValueField, k: int, q: int, i: int, j: int,
                 params: ModelParams) -> float:
    """Three-node Gauss-Hermite expectation of the opposite-tack slice at
    budget s_k - C; requires s_k >= C so that slice exists."""
    grid = field.grid
    k_c = grid.switch_stride(params.C)
    if k < k_c:
        raise ValueError(f"switch needs s_k >= C (slice {k} < stride {k_c})")
    row = np.asarray(field.W[k - k_c, 2 - q, i], dtype=np.float64)
    theta_j = j * grid.delta_theta

    def sampler(z: float) -> float:
        return eno_cubic_1d_periodic(row, z)

    v = switch_expectation(sampler, theta_j, params.wind, params.C)
    return float(min(max(v, 0.0), 1.0))


def solve_aware(grid: GridSpec, params: ModelParams,
                angle_count: int = DEFAULT_ANGLE_COUNT,
                gss_tol: float = DEFAULT_GSS_TOL,
                value_dtype=np.float64,
                storage_dir: str | None = None,
                log_every: int = 0) -> tuple[ValueField, PolicyField]:
    """March the budget axis once, filling value and policy fields.

    With storage_dir set, the two output arrays are disk-backed memmaps
    (for grids too large for memory); marching precision is kept in a
    float64 ring buffer holding the last C/delta_s slices either way.
    """
    if angle_count < 3:
        raise ValueError("angle grid needs at least 3 points")
    k_c = grid.switch_stride(params.C)
    n_r1 = grid.n_r + 1
    n_th = grid.n_theta
    shape = grid.shape4()

    if storage_dir is not None:
        os.makedirs(storage_dir, exist_ok=True)
        W = np.lib.format.open_memmap(
            os.path.join(storage_dir, "aware_value.npy"), mode="w+",
            dtype=value_dtype, shape=shape)
        A = np.lib.format.open_memmap(
            os.path.join(storage_dir, "aware_policy.npy"), mode="w+",
            dtype=np.float32, shape=shape)
    else:
        W = np.zeros(shape, dtype=value_dtype)
        A = np.zeros(shape, dtype=np.float32)

    r_pts = grid.r_points()
    target = grid.target_mask(params.R_tgt)
    angles = np.linspace(0.0, PI, angle_count)
    f_scan = np.array([polar_speed(params.polar, float(u)) for u in angles])
    tabs = _angle_tables(grid, angles)
    greedy = _greedy_angles(grid, params)
    polar_bp, polar_pc = _polar_kernel_tables(params)

    ring = np.empty((k_c + 1, 2, n_r1, n_th))
    coefs = np.empty((n_th, n_r1, 4))
    pol_buf = np.empty((n_r1, n_th), dtype=np.float32)

    indicator = np.where(target[:, None], 1.0, 0.0) * np.ones((1, n_th))
    for qi in (0, 1):
        ring[0, qi] = indicator
        W[0, qi] = indicator.astype(W.dtype)
        A[0, qi] = np.broadcast_to(greedy[qi], (n_r1, n_th))

    tau = grid.delta_s
    f_max = params.f_max
    for k in range(1, grid.n_s + 1):
        s_k = k * grid.delta_s
        use_switch = k >= k_c
        slot = k % (k_c + 1)
        prev_slot = (k - 1) % (k_c + 1)
        opp_slot = (k - k_c) % (k_c + 1) if use_switch else prev_slot
        # rows the feet of active cells can reach, plus the stencil width
        i_hi = min(grid.n_r,
                   int((params.R_tgt + f_max * (s_k + tau)) / grid.delta_r) + 5)
        for qi in (0, 1):
            prev = ring[prev_slot, qi]
            _theta_coeffs(prev, coefs, 0, i_hi)
            opp = ring[opp_slot, 1 - qi]
            out_w = ring[slot, qi]
            _update_slice_aware(
                prev, coefs, opp, use_switch, out_w, pol_buf, r_pts,
                grid.delta_r, grid.delta_theta, grid.r_max, params.R_tgt,
                f_max, tau, params.wind.sigma, params.wind.a, params.C,
                tack_sign(qi + 1), angles, f_scan, tabs[qi][0], tabs[qi][1],
                polar_bp, polar_pc, s_k, gss_tol, greedy[qi], i_hi,
            )
            W[k, qi] = out_w.astype(W.dtype) if W.dtype != np.float64 else out_w
            A[k, qi] = pol_buf
        if log_every and k % log_every == 0:
            logger.info("budget slice %d/%d (s=%.3f)", k, grid.n_s, s_k)

    return ValueField(W=W, grid=grid, params=params), \
        PolicyField(A=A, grid=grid, params=params)
