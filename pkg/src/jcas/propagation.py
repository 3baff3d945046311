"""User channels (Rayleigh / LoS / Rice), target reflection coefficient
and the large-scale link-budget models.

The upstream references for the path-loss constants do not ship with the
model, so documented substitutes live here in one place:

* three-slope: exponents 2.0 / 3.5 / 4.0 with breakpoints at 10 m and
  50 m, anchored so beta(50 m) = -100 dB, log-normal shadowing 8 dB
  (used for Rayleigh and Rice users);
* LoS: 28.0 + 22 log10(d_3d) + 20 log10(f_c/GHz) dB, no shadowing;
* LoS probability (urban macro): p(d) = min(18/d, 1)(1 - e^{-d/63}) + e^{-d/63}.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, Direction, SPEED_OF_LIGHT, steering_vector
from .errors import JcasError

RICE_K_CAP = 1e3  # numerically LoS beyond this


@dataclass(frozen=True)
class UserGeometry:
    """Position of one user and its range/bearing as seen from the BS."""

    position: tuple  # (x, y, z) meters, BS array at (0, 0, bs_height)
    distance_2d: float
    distance_3d: float
    direction: Direction

    def __post_init__(self):
        if self.distance_2d <= 0 or self.distance_3d <= 0:
            raise ValueError("distances must be positive")
        if self.distance_2d > self.distance_3d + 1e-9:
            raise ValueError("2D distance cannot exceed 3D distance")


def user_geometry_from_position(x, y, z, bs_height) -> UserGeometry:
    d2 = float(np.hypot(x, y))
    dz = z - bs_height
    d3 = float(np.sqrt(d2 * d2 + dz * dz))
    direction = Direction(
        azimuth=float(np.arctan2(y, x)),
        elevation=float(np.arccos(dz / d3)),
    )
    return UserGeometry((float(x), float(y), float(z)), d2, d3, direction)


@dataclass(frozen=True)
class UserModel:
    """Large-scale description of one user's channel: which fading model,
    its power gain and, for the models with a specular component, the
    LoS direction and Rice factor."""

    kind: str  # "rayleigh" | "los" | "rice"
    beta: float
    direction: Optional[Direction] = None
    rice_k: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("rayleigh", "los", "rice"):
            raise ValueError(f"unknown channel model {self.kind!r}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.kind in ("los", "rice") and self.direction is None:
            raise ValueError(f"{self.kind} model needs a direction")
        if self.kind == "rice" and (self.rice_k is None or self.rice_k < 0):
            raise ValueError("rice model needs rice_k >= 0")


@dataclass(frozen=True)
class UserChannel:
    """One small-scale channel realization."""

    h: np.ndarray
    model: str
    beta: float
    rice_k: Optional[float] = None
    los_dir: Optional[Direction] = None
    los_phase: Optional[float] = None


@dataclass(frozen=True)
class RadarTarget:
    """Point target: bearing, kinematics and the resulting echo channel
    parameters (two-way delay, Doppler, complex amplitude)."""

    direction: Direction
    range_m: float
    radial_speed: float
    rcs: float
    alpha: complex
    delay: float
    doppler: float

    def __post_init__(self):
        if self.range_m <= 0 or self.rcs <= 0:
            raise ValueError("range and RCS must be positive")


def complex_normal(rng, shape, variance=1.0):
    """i.i.d. circular complex Gaussian entries, total variance per entry."""
    if np.isscalar(shape):
        shape = (shape,)
    scale = np.sqrt(variance / 2.0)
    draws = rng.standard_normal(tuple(shape) + (2,))
    return scale * draws.view(np.complex128)[..., 0]


def rayleigh_channel(beta, n_a, rng) -> UserChannel:
    """h = sqrt(beta) * g with g ~ CN(0, I)."""
    h = np.sqrt(beta) * complex_normal(rng, n_a)
    return UserChannel(h=h, model="rayleigh", beta=beta)


def los_channel(beta, direction, geom, rng) -> UserChannel:
    """h = sqrt(beta) * e^{j psi} * a(direction), psi ~ U[0, 2pi)."""
    psi = float(rng.uniform(0.0, 2.0 * np.pi))
    h = np.sqrt(beta) * np.exp(1j * psi) * steering_vector(geom, direction)
    return UserChannel(h=h, model="los", beta=beta, los_dir=direction, los_phase=psi)


def rice_channel(beta, rice_k, direction, geom, rng) -> UserChannel:
    """h = sqrt(beta/(K+1)) * (sqrt(K) e^{j psi} a + g)."""
    if rice_k < 0:
        raise ValueError("rice_k must be nonnegative")
    psi = float(rng.uniform(0.0, 2.0 * np.pi))
    a = steering_vector(geom, direction)
    g = complex_normal(rng, geom.n_elements)
    h = np.sqrt(beta / (rice_k + 1.0)) * (np.sqrt(rice_k) * np.exp(1j * psi) * a + g)
    return UserChannel(
        h=h, model="rice", beta=beta, rice_k=rice_k, los_dir=direction, los_phase=psi
    )


def draw_channel(model: UserModel, geom: ArrayGeometry, rng) -> UserChannel:
    if model.kind == "rayleigh":
        return rayleigh_channel(model.beta, geom.n_elements, rng)
    if model.kind == "los":
        return los_channel(model.beta, model.direction, geom, rng)
    return rice_channel(model.beta, model.rice_k, model.direction, geom, rng)


def los_probability(d_2d) -> float:
    """Urban-macro LoS probability as a function of 2D distance."""
    if d_2d <= 0:
        raise ValueError("d_2d must be positive")
    decay = np.exp(-d_2d / 63.0)
    return float(min(18.0 / d_2d, 1.0) * (1.0 - decay) + decay)


def rice_k_factor(d_2d, k_max=RICE_K_CAP) -> float:
    """K = p_LoS / (1 - p_LoS), capped at k_max when p_LoS -> 1."""
    p = los_probability(d_2d)
    if p >= 1.0:
        return float(k_max)
    return float(min(p / (1.0 - p), k_max))


def target_alpha(n_a, rcs, range_m, wavelength) -> complex:
    """Two-way echo amplitude: linear antenna gain N_A times
    sqrt(rcs / L) with L = (4 pi)^3 / lambda^2 * range^4."""
    if n_a <= 0 or rcs <= 0 or wavelength <= 0:
        raise ValueError("n_a, rcs and wavelength must be positive")
    if range_m <= 0:
        raise ValueError("range must be positive")
    loss = (4.0 * np.pi) ** 3 / wavelength**2 * range_m**4
    return complex(n_a * np.sqrt(rcs / loss))


def make_radar_target(
    direction, range_m, radial_speed, rcs, n_a, carrier_frequency_hz, phase=0.0
) -> RadarTarget:
    """Bundle target kinematics with the derived echo parameters."""
    wavelength = SPEED_OF_LIGHT / carrier_frequency_hz
    alpha = target_alpha(n_a, rcs, range_m, wavelength) * np.exp(1j * phase)
    return RadarTarget(
        direction=direction,
        range_m=range_m,
        radial_speed=radial_speed,
        rcs=rcs,
        alpha=alpha,
        delay=2.0 * range_m / SPEED_OF_LIGHT,
        doppler=2.0 * radial_speed * carrier_frequency_hz / SPEED_OF_LIGHT,
    )


@dataclass(frozen=True)
class PathLossParams:
    """Constants of the documented substitute link-budget models."""

    breakpoints_m: tuple = (10.0, 50.0)
    exponents: tuple = (2.0, 3.5, 4.0)
    anchor_distance_m: float = 50.0
    anchor_beta_db: float = -100.0
    shadowing_sigma_db: float = 8.0
    los_intercept_db: float = 28.0
    los_decade_slope_db: float = 22.0
    carrier_frequency_hz: float = 3.0e9


def _three_slope_db(d, params: PathLossParams) -> float:
    b1, b2 = params.breakpoints_m
    n1, n2, n3 = params.exponents
    anchor = params.anchor_beta_db  # beta at b2
    if d > b2:
        return anchor - 10.0 * n3 * np.log10(d / b2)
    at_b1 = anchor + 10.0 * n2 * np.log10(b2 / b1)
    if d > b1:
        return anchor + 10.0 * n2 * np.log10(b2 / d)
    return at_b1 + 10.0 * n1 * np.log10(b1 / d)


def pathloss(model, user: UserGeometry, rng, params: PathLossParams = PathLossParams()):
    """Linear power gain beta for one user.

    `three_slope` and `rice_base` add log-normal shadowing (sigma from
    `params`, drawn from `rng`); the LoS model is deterministic.
    """
    d = user.distance_3d
    if model in ("three_slope", "rice_base"):
        beta_db = _three_slope_db(d, params)
        if params.shadowing_sigma_db > 0:
            beta_db += params.shadowing_sigma_db * rng.standard_normal()
    elif model == "los_3gpp":
        pl_db = (
            params.los_intercept_db
            + params.los_decade_slope_db * np.log10(d)
            + 20.0 * np.log10(params.carrier_frequency_hz / 1e9)
        )
        beta_db = -pl_db
    else:
        raise JcasError(f"unsupported path-loss model {model!r}")
    return float(10.0 ** (beta_db / 10.0))
