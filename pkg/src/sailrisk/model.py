"""Physical model: wind process, boat speed polar, reduced dynamics.

Coordinates follow the target-centered reduction: the boat state is
(r, theta, q) where r is the distance to the target center, theta the
upwind direction measured against the boat-to-target line (periodic in
[0, 2pi)), and q in {1, 2} the current tack. The absolute upwind angle
phi is carried along only so trajectories can be mapped back to the
plane for plotting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Default speed polar, sampled every 5 degrees and normalized to peak 1.
# Shape: dead zone near upwind, steep rise past ~40 deg, peak near 105 deg,
# mild decline toward dead downwind. Replace via polar CSV for other boats.
_DEFAULT_POLAR_DEG = np.arange(0.0, 181.0, 5.0)
_DEFAULT_POLAR_SPEED = np.array([
    0.000, 0.005, 0.015, 0.030, 0.050, 0.080, 0.120, 0.175, 0.260,
    0.400, 0.540, 0.650, 0.730, 0.790, 0.840, 0.880, 0.910, 0.935,
    0.955, 0.975, 0.990, 1.000, 0.995, 0.985, 0.970, 0.950, 0.930,
    0.905, 0.880, 0.855, 0.830, 0.805, 0.785, 0.765, 0.750, 0.740,
    0.735,
])


class ModelError(ValueError):
    """Invalid model parameter or out-of-domain evaluation."""


def _pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Monotonicity-preserving cubic slopes (weighted-harmonic-mean rule).

    Interior nodes get the weighted harmonic mean of neighboring secant
    slopes whenever those agree in sign, zero otherwise; endpoints use the
    shape-limited one-sided three-point formula.
    """
    h = np.diff(x)
    m = np.diff(y) / h
    n = len(x)
    d = np.zeros(n)
    if n == 2:
        d[:] = m[0]
        return d

    smk = np.sign(m)
    flat = (smk[1:] != smk[:-1]) | (m[1:] == 0.0) | (m[:-1] == 0.0)
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        hmean = (w1 + w2) / (w1 / m[:-1] + w2 / m[1:])
    d[1:-1] = np.where(flat, 0.0, hmean)

    def edge(h0, h1, m0, m1):
        de = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
        if np.sign(de) != np.sign(m0):
            return 0.0
        if np.sign(m0) != np.sign(m1) and abs(de) > 3.0 * abs(m0):
            return 3.0 * m0
        return de

    d[0] = edge(h[0], h[1], m[0], m[1])
    d[-1] = edge(h[-1], h[-2], m[-1], m[-2])
    return d


def _hermite_coeffs(x: np.ndarray, y: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Per-piece cubic coefficients c[i] for y(t) with t local in [0, h_i]:
    y = c0 + c1 t + c2 t^2 + c3 t^3."""
    h = np.diff(x)
    c = np.empty((len(x) - 1, 4))
    c[:, 0] = y[:-1]
    c[:, 1] = d[:-1]
    c[:, 2] = (3.0 * (y[1:] - y[:-1]) / h - 2.0 * d[:-1] - d[1:]) / h
    c[:, 3] = (d[:-1] + d[1:] - 2.0 * (y[1:] - y[:-1]) / h) / h**2
    return c


@dataclass(frozen=True)
class WindParams:
    """Brownian wind-direction model: dphi = a dt + sigma dB."""

    a: float = 0.0
    sigma: float = 0.05

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ModelError("wind drift a must be finite")
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ModelError("wind sigma must be finite and >= 0")


@dataclass(frozen=True)
class PolarCurve:
    """Boat speed profile over steering angle.

    ``angles`` are radians in [0, pi], strictly increasing, starting at 0;
    ``speeds`` are normalized to [0, 1] with zero dead upwind and max 1.
    Evaluation uses a monotone cubic through the samples, scaled by f_max.
    """

    angles: np.ndarray
    speeds: np.ndarray
    f_max: float = 0.05
    # derived monotone-cubic data, filled in __post_init__
    slopes: np.ndarray = field(repr=False, default=None)
    coeffs: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float)
        spd = np.asarray(self.speeds, dtype=float)
        if ang.ndim != 1 or ang.shape != spd.shape or len(ang) < 2:
            raise ModelError("polar needs matching 1-D angle/speed samples")
        if ang[0] != 0.0 or spd[0] != 0.0:
            raise ModelError("polar must start at (0, 0): speed is zero dead upwind")
        if np.any(np.diff(ang) <= 0.0):
            raise ModelError("polar angles must be strictly increasing")
        if ang[-1] > math.pi + 1e-12:
            raise ModelError("polar angles must lie within [0, pi]")
        if np.any(spd < 0.0) or np.any(spd > 1.0):
            raise ModelError("normalized polar speeds must lie in [0, 1]")
        if abs(spd.max() - 1.0) > 1e-12:
            raise ModelError("normalized polar speeds must peak at exactly 1")
        if not (self.f_max > 0.0):
            raise ModelError("f_max must be positive")
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "speeds", spd)
        d = _pchip_slopes(ang, spd)
        object.__setattr__(self, "slopes", d)
        object.__setattr__(self, "coeffs", _hermite_coeffs(ang, spd, d))

    @classmethod
    def default(cls, f_max: float = 0.05) -> "PolarCurve":
        return cls(
            angles=np.deg2rad(_DEFAULT_POLAR_DEG),
            speeds=_DEFAULT_POLAR_SPEED.copy(),
            f_max=f_max,
        )

    @classmethod
    def from_csv(cls, path, f_max: float = 0.05) -> "PolarCurve":
        """Load a polar from CSV with header ``angle_deg,speed``."""
        import csv

        angles_deg, speeds = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header[:2]] != ["angle_deg", "speed"]:
                raise ModelError(f"{path}: expected CSV header 'angle_deg,speed'")
            for row in reader:
                if not row or not row[0].strip():
                    continue
                angles_deg.append(float(row[0]))
                speeds.append(float(row[1]))
        return cls(
            angles=np.deg2rad(np.asarray(angles_deg)),
            speeds=np.asarray(speeds),
            f_max=f_max,
        )

    def speed(self, u: float) -> float:
        return polar_speed(self, u)

    def speed_array(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        flat_u = u.ravel()
        flat_o = out.ravel()
        for k in range(flat_u.size):
            flat_o[k] = polar_speed(self, float(flat_u[k]))
        return out


def polar_speed(polar: PolarCurve, u: float) -> float:
    """Boat speed f(u) >= 0 at steering angle u in [0, pi]."""
    if not (0.0 <= u <= math.pi + 1e-12):
        raise ModelError(f"steering angle {u!r} outside [0, pi]")
    u = min(u, float(polar.angles[-1]))
    ang = polar.angles
    i = int(np.searchsorted(ang, u, side="right")) - 1
    if i < 0:
        i = 0
    if i > len(ang) - 2:
        i = len(ang) - 2
    t = u - ang[i]
    c = polar.coeffs[i]
    val = c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    # rounding guard: interpolant stays within sample bounds analytically
    if val < 0.0:
        val = 0.0
    return float(polar.f_max * val)


@dataclass(frozen=True)
class ModelParams:
    """Full model: wind process, speed polar, switch cost, geometry."""

    wind: WindParams
    polar: PolarCurve
    C: float = 2.0       # tack-switch duration
    R_tgt: float = 0.1   # target radius
    R_max: float = 2.0   # outer domain radius

    def __post_init__(self):
        if not (self.C > 0.0):
            raise ModelError("switch duration C must be positive")
        if not (0.0 < self.R_tgt < self.R_max):
            raise ModelError("need 0 < R_tgt < R_max")

    @property
    def f_max(self) -> float:
        return self.polar.f_max


@dataclass
class SimState:
    """Continuous boat state. theta is stored modulo 2pi; q in {1, 2}."""

    r: float
    theta: float
    q: int
    s: float = 0.0    # remaining time budget
    phi: float = 0.0  # absolute upwind angle, for xy reconstruction only

    def __post_init__(self):
        if self.r < 0.0:
            raise ModelError("r must be >= 0")
        if self.q not in (1, 2):
            raise ModelError("tack q must be 1 or 2")
        self.theta = self.theta % TWO_PI

    @property
    def opposite_tack(self) -> int:
        return 3 - self.q


@dataclass(frozen=True)
class Steer:
    """Hold course at steering angle u (radians in [0, pi])."""

    u: float

    def __post_init__(self):
        if not (0.0 <= self.u <= math.pi + 1e-12):
            raise ModelError(f"steering angle {self.u!r} outside [0, pi]")


@dataclass(frozen=True)
class Switch:
    """Tack-switch maneuver: boat speed is zero for duration C."""


Action = Steer | Switch

# Policy fields encode Switch as -1.0 and Steer(u) as the angle itself.
SWITCH_CODE = -1.0


def action_to_code(action: Action) -> float:
    if isinstance(action, Switch):
        return SWITCH_CODE
    return float(action.u)


def action_from_code(code: float) -> Action:
    if code == SWITCH_CODE:
        return Switch()
    return Steer(float(code))


def tack_sign(q: int) -> float:
    """(-1)^q: the sign with which u enters the motion direction."""
    return -1.0 if q == 1 else 1.0


def reduced_drift(params: ModelParams, r: float, theta: float, q: int,
                  u: float) -> tuple[float, float]:
    """Deterministic drift (r_dot, theta_dot) of the reduced dynamics."""
    if r <= 0.0:
        raise ModelError("reduced drift is singular at r = 0")
    if q not in (1, 2):
        raise ModelError("tack q must be 1 or 2")
    f = polar_speed(params.polar, u)
    rel = theta - tack_sign(q) * u
    r_dot = -f * math.cos(rel)
    theta_dot = (f / r) * math.sin(rel) + params.wind.a
    return r_dot, theta_dot


def to_xy(state: SimState) -> tuple[float, float]:
    """Absolute plane position of the boat (target at the origin)."""
    rel = state.theta - state.phi
    return -state.r * math.sin(rel), -state.r * math.cos(rel)
