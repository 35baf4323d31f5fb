"""Scalar maximization over a steering-angle interval.

The solvers pick the best steering angle in two stages: a direct scan
over an equispaced angle grid to bracket the winner, then a golden
section search inside the bracket. These pure-Python versions define
the reference behavior; the solver kernels replicate it in compiled
form and are cross-checked against these in the tests.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fn: Callable[[float], float], lo: float, hi: float,
                       tol: float) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi] down to interval width tol.

    Returns the best (x, fn(x)) among all evaluated points; for a
    unimodal fn this is within tol of the maximizer.
    """
    if hi < lo:
        lo, hi = hi, lo
    best_x = lo
    best_v = -math.inf
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc = fn(c)
    fd = fn(d)
    if fc > best_v:
        best_x, best_v = c, fc
    if fd > best_v:
        best_x, best_v = d, fd
    while hi - lo > tol:
        if fc > fd:
            hi = d
            d = c
            fd = fc
            c = hi - INV_PHI * (hi - lo)
            fc = fn(c)
            if fc > best_v:
                best_x, best_v = c, fc
        else:
            lo = c
            c = d
            fc = fd
            d = lo + INV_PHI * (hi - lo)
            fd = fn(d)
            if fd > best_v:
                best_x, best_v = d, fd
    return best_x, best_v


def scan_then_gss(fn: Callable[[float], float], angles: np.ndarray,
                  tol: float) -> tuple[float, float]:
    """Grid scan followed by golden-section refinement.

    Scans the equispaced angle grid, breaking ties toward the smaller
    angle, then refines within one grid step on either side of the scan
    winner. Returns the best angle seen over all evaluations.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.size < 3:
        raise ValueError("angle grid needs at least 3 points")
    best_idx = 0
    best_v = fn(float(angles[0]))
    for m in range(1, angles.size):
        v = fn(float(angles[m]))
        if v > best_v:
            best_v = v
            best_idx = m
    best_x = float(angles[best_idx])
    du = float(angles[1] - angles[0])
    lo = max(best_x - du, float(angles[0]))
    hi = min(best_x + du, float(angles[-1]))
    gx, gv = golden_section_max(fn, lo, hi, tol)
    if gv > best_v:
        return gx, gv
    return best_x, best_v
