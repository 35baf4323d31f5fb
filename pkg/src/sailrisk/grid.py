"""Uniform (r, theta, s) grid used by both solvers.

Radial points r_i = i * dr for i = 0..n_r, periodic angular points
theta_j = j * dtheta for j = 0..n_theta-1, budget slices s_k = k * ds
for k = 0..n_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TWO_PI


class GridError(ValueError):
    """Invalid grid configuration."""


@dataclass(frozen=True)
class GridSpec:
    n_r: int
    n_theta: int
    n_s: int
    r_max: float
    s_bar: float

    def __post_init__(self):
        if self.n_theta < 4:
            raise GridError("need at least 4 angular points")
        if self.n_r < 3:
            raise GridError("need at least 3 radial cells")
        if self.n_s < 1:
            raise GridError("need at least one budget slice")
        if not (self.r_max > 0.0 and self.s_bar > 0.0):
            raise GridError("r_max and s_bar must be positive")

    @property
    def delta_r(self) -> float:
        return self.r_max / self.n_r

    @property
    def delta_theta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def delta_s(self) -> float:
        return self.s_bar / self.n_s

    def r_points(self) -> np.ndarray:
        return np.arange(self.n_r + 1) * self.delta_r

    def theta_points(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.delta_theta

    def s_points(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.delta_s

    def switch_stride(self, C: float) -> int:
        """Number of s-slices spanned by the switch duration C.

        The s-step must divide C exactly so that looking up the value
        C time units back lands on a stored slice.
        """
        ratio = C / self.delta_s
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise GridError(
                f"delta_s={self.delta_s!r} must divide the switch duration "
                f"C={C!r} exactly (budget after a switch must land on a slice)"
            )
        return k

    def nearest_r_index(self, r: float) -> int:
        i = int(round(r / self.delta_r))
        return min(max(i, 0), self.n_r)

    def nearest_theta_index(self, theta: float) -> int:
        j = int(round((theta % TWO_PI) / self.delta_theta))
        return j % self.n_theta

    def nearest_s_index(self, s: float) -> int:
        k = int(round(s / self.delta_s))
        return min(max(k, 0), self.n_s)

    def target_mask(self, r_tgt: float) -> np.ndarray:
        """Boolean (n_r+1,) mask of radial points inside the target."""
        return self.r_points() <= r_tgt + 1e-15

    def shape4(self) -> tuple[int, int, int, int]:
        return (self.n_s + 1, 2, self.n_r + 1, self.n_theta)


def grid_from_steps(n_r: int, n_theta: int, r_max: float, s_bar: float,
                    delta_s: float) -> GridSpec:
    """Build a GridSpec from a requested s-step (must divide s_bar)."""
    ratio = s_bar / delta_s
    n_s = int(round(ratio))
    if abs(ratio - n_s) > 1e-9 * max(1.0, ratio) or n_s < 1:
        raise GridError(f"delta_s={delta_s!r} must divide s_bar={s_bar!r}")
    return GridSpec(n_r=n_r, n_theta=n_theta, n_s=n_s, r_max=r_max, s_bar=s_bar)


def nearest_gridpoint(grid: GridSpec, r: float, theta: float) -> tuple[int, int]:
    return grid.nearest_r_index(r), grid.nearest_theta_index(theta)


def validate_slice(values: np.ndarray, grid: GridSpec) -> None:
    if values.shape != (grid.n_r + 1, grid.n_theta):
        raise GridError(
            f"slice shape {values.shape} does not match grid "
            f"({grid.n_r + 1}, {grid.n_theta})"
        )
    if not np.isfinite(values).all():
        raise GridError("slice contains non-finite values")
