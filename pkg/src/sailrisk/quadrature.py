"""Gauss-Hermite quadrature for the two stochastic averages.

The per-step diffusion over a short time tau is averaged with the
two-node rule (the two "feet" of a semi-Lagrangian step); the C-long
diffusion incurred by a tack switch uses the three-node rule, which is
exact for polynomials up to degree 5 under the Gaussian weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import ModelParams, WindParams, reduced_drift

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class Gh3:
    """Three-node Gauss-Hermite rule: roots of the 3rd Hermite polynomial
    and their weights (summing to sqrt(pi))."""

    nodes: tuple = field(default=(-math.sqrt(1.5), 0.0, math.sqrt(1.5)))
    weights: tuple = field(
        default=(SQRT_PI / 6.0, 2.0 * SQRT_PI / 3.0, SQRT_PI / 6.0)
    )


GH3 = Gh3()

# Equivalent probability weights 1/6, 2/3, 1/6 (the gamma_m / sqrt(pi)).
GH3_PROB = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)


def switch_nodes(theta_j: float, wind: WindParams, C: float) -> np.ndarray:
    """The three angles eta_m = theta_j + a C + sigma sqrt(2C) x_m at which
    the opposite-tack value is sampled after a switch of duration C."""
    if not C > 0.0:
        raise ValueError("switch duration C must be positive")
    scale = wind.sigma * math.sqrt(2.0 * C)
    return np.array([theta_j + wind.a * C + scale * x for x in GH3.nodes])


def switch_expectation(row_sampler: Callable[[float], float], theta_j: float,
                       wind: WindParams, C: float) -> float:
    """Gaussian expectation of a theta-function after a switch.

    Approximates E[psi(theta(C))] for theta following the wind drift
    a and diffusion sigma over the switch duration C, starting at
    theta_j: (1/sqrt(pi)) * sum_m gamma_m psi(eta_m). Exact for
    polynomials of degree <= 5 in (theta - theta_j - aC).
    """
    etas = switch_nodes(theta_j, wind, C)
    acc = 0.0
    for p, eta in zip(GH3_PROB, etas):
        acc += p * float(row_sampler(float(eta)))
    return acc


def diffusion_feet(r_i: float, theta_j: float, u: float, q: int, tau: float,
                   params: ModelParams) -> tuple[tuple[float, float],
                                                 tuple[float, float]]:
    """Two semi-Lagrangian foot points after steering at u for time tau.

    Both feet share the drifted radius; the theta coordinates split by
    +- sigma sqrt(tau). Averaging slice values at the feet with weights
    1/2, 1/2 is the two-node Gauss-Hermite approximation of the step
    expectation. Coordinates are returned unclamped and unwrapped; the
    caller owns boundary treatment.
    """
    if not tau > 0.0:
        raise ValueError("tau must be positive")
    r_dot, theta_dot = reduced_drift(params, r_i, theta_j, q, u)
    r_foot = r_i + tau * r_dot
    theta_center = theta_j + tau * theta_dot
    spread = params.wind.sigma * math.sqrt(tau)
    return (r_foot, theta_center + spread), (r_foot, theta_center - spread)
