"""Planar-array geometry, steering vectors and beam patterns.

The array is a uniform rectangular grid of n_y x n_z elements in the
y-z plane. Element (a_y, a_z) sits at (y, z) = (a_y*d, a_z*d) and the
element phase toward azimuth phi / zenith angle theta is
exp(-j*(2*pi/lambda)*d*(a_y*sin(phi)*sin(theta) + a_z*cos(theta))).
Elements are flattened row-major over (a_y, a_z) with a_z varying
fastest; element (0, 0) is the phase reference.
"""

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


@dataclass(frozen=True)
class Direction:
    """Look direction: azimuth in [-pi, pi], elevation measured from
    zenith in [0, pi] (users below the array horizon have elevation
    > pi/2)."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (np.isfinite(self.azimuth) and np.isfinite(self.elevation)):
            raise ValueError("direction angles must be finite")
        if not -np.pi <= self.azimuth <= np.pi:
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi]")
        if not 0.0 <= self.elevation <= np.pi:
            raise ValueError(f"elevation {self.elevation} outside [0, pi]")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: n_y horizontal x n_z vertical elements,
    inter-element spacing and carrier wavelength in meters."""

    n_y: int
    n_z: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ValueError("array needs at least one element per axis")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ValueError("spacing and wavelength must be positive")

    @property
    def n_elements(self):
        return self.n_y * self.n_z

    @property
    def wavenumber(self):
        return 2.0 * np.pi / self.wavelength


def half_wavelength_array(n_y, n_z, wavelength):
    """Array with the standard grating-lobe-free d = lambda/2 spacing."""
    return ArrayGeometry(n_y, n_z, spacing=wavelength / 2.0, wavelength=wavelength)


def steering_vector(geom: ArrayGeometry, direction: Direction) -> np.ndarray:
    """Array response toward `direction`, shape (n_elements,), unit-modulus
    entries, ordered with a_z fastest."""
    a_y = np.arange(geom.n_y)
    a_z = np.arange(geom.n_z)
    phase = (
        a_y[:, None] * (np.sin(direction.azimuth) * np.sin(direction.elevation))
        + a_z[None, :] * np.cos(direction.elevation)
    )
    return np.exp(-1j * geom.wavenumber * geom.spacing * phase).reshape(-1)


def beam_gain(geom: ArrayGeometry, weights: np.ndarray, direction: Direction) -> float:
    """Power pattern |w^H a(direction)|^2 of a beamforming vector."""
    weights = np.asarray(weights)
    if weights.shape != (geom.n_elements,):
        raise ValueError(
            f"weights length {weights.shape} does not match {geom.n_elements} elements"
        )
    if not np.linalg.norm(weights) > 0:
        raise ValueError("weights must not be all zero")
    return float(np.abs(np.vdot(weights, steering_vector(geom, direction))) ** 2)
