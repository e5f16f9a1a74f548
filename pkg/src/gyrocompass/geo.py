"""Reference-frame math, earth-rate projection, and model-based gyrocompassing.

Angles are radians and rates rad/s throughout; degrees appear only at
CLI / report boundaries.  Frames: body (b), local-level NED navigation
(n), earth-centered earth-fixed (e).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSignal, EmptyWindow

# Earth rotation rate, WGS-84 [rad/s].
EARTH_RATE = 7.292115e-5

TWO_PI = 2.0 * np.pi

# Below this magnitude [rad/s] the heading numerator/denominator pair is
# treated as carrying no information (e.g. measurements at the poles).
_DEGENERATE_RATE = 1e-15


def wrap_heading(angle):
    """Wrap an angle (scalar or array) into [0, 2*pi)."""
    wrapped = np.mod(angle, TWO_PI)
    # np.mod of a tiny negative input can round up to the period itself.
    if np.ndim(wrapped) == 0:
        return 0.0 if wrapped >= TWO_PI else float(wrapped)
    wrapped = np.asarray(wrapped)
    wrapped[wrapped >= TWO_PI] = 0.0
    return wrapped


@dataclass(frozen=True)
class EulerAngles:
    """Body attitude: roll, pitch, yaw [rad].

    roll in [-pi, pi], pitch in [-pi/2, pi/2], yaw in [0, 2*pi).
    """

    roll: float
    pitch: float
    yaw: float

    def __post_init__(self):
        if not (-np.pi <= self.roll <= np.pi):
            raise ValueError(f"roll {self.roll} outside [-pi, pi]")
        if not (-np.pi / 2 <= self.pitch <= np.pi / 2):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not (0.0 <= self.yaw < TWO_PI):
            raise ValueError(f"yaw {self.yaw} outside [0, 2*pi)")


@dataclass(frozen=True)
class GeoPosition:
    """Geodetic position: latitude in [-pi/2, pi/2], longitude in [-pi, pi]."""

    latitude: float
    longitude: float = 0.0

    def __post_init__(self):
        if not (-np.pi / 2 <= self.latitude <= np.pi / 2):
            raise ValueError(f"latitude {self.latitude} outside [-pi/2, pi/2]")
        if not (-np.pi <= self.longitude <= np.pi):
            raise ValueError(f"longitude {self.longitude} outside [-pi, pi]")


@dataclass(frozen=True)
class AngularRate:
    """Body-frame angular rate components [rad/s]."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError("angular rate components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class EarthModel:
    """Earth rotation rate constant (fixed WGS-84 value, not configurable)."""

    omega_ie: float = field(default=EARTH_RATE, init=False)


WGS84 = EarthModel()


def _rate_vector(rates) -> np.ndarray:
    if isinstance(rates, AngularRate):
        return rates.as_array()
    vec = np.asarray(rates, dtype=float)
    if vec.shape != (3,):
        raise ValueError(f"expected 3 rate components, got shape {vec.shape}")
    return vec


def body_to_nav_matrix(angles: EulerAngles) -> np.ndarray:
    """Attitude DCM resolving navigation-frame (NED) vectors in the body frame.

    Orthonormal with determinant +1 for any valid attitude.
    """
    s_phi, c_phi = np.sin(angles.roll), np.cos(angles.roll)
    s_th, c_th = np.sin(angles.pitch), np.cos(angles.pitch)
    s_psi, c_psi = np.sin(angles.yaw), np.cos(angles.yaw)
    return np.array(
        [
            [c_th * c_psi, c_th * s_psi, -s_th],
            [s_phi * s_th * c_psi - c_phi * s_psi, s_phi * s_th * s_psi + c_phi * c_psi, s_phi * c_th],
            [c_phi * s_th * c_psi + s_phi * s_psi, c_phi * s_th * s_psi - s_phi * c_psi, c_phi * c_th],
        ]
    )


def ecef_to_nav_matrix(pos: GeoPosition) -> np.ndarray:
    """DCM resolving ECEF vectors in the local NED navigation frame."""
    s_lat, c_lat = np.sin(pos.latitude), np.cos(pos.latitude)
    s_lon, c_lon = np.sin(pos.longitude), np.cos(pos.longitude)
    return np.array(
        [
            [-s_lat * c_lon, -s_lat * s_lon, c_lat],
            [-s_lon, c_lon, 0.0],
            [-c_lat * c_lon, -c_lat * s_lon, -s_lat],
        ]
    )


def earth_rate_in_body(angles: EulerAngles, pos: GeoPosition, earth: EarthModel = WGS84) -> AngularRate:
    """Project the earth rotation vector into the body frame.

    For a leveled platform (roll = pitch = 0) the components reduce to
    omega_ie * (cos(yaw)cos(lat), -sin(yaw)cos(lat), -sin(lat)).
    """
    omega_e = np.array([0.0, 0.0, earth.omega_ie])
    omega_b = body_to_nav_matrix(angles) @ (ecef_to_nav_matrix(pos) @ omega_e)
    return AngularRate(*omega_b)


def max_horizontal_signal(pos: GeoPosition, earth: EarthModel = WGS84) -> float:
    """Peak horizontal earth-rate magnitude available at a latitude [rad/s]."""
    return earth.omega_ie * np.cos(pos.latitude)


def heading_from_rates(rates, roll: float, pitch: float) -> float:
    """Heading [0, 2*pi) from body rates at a known roll/pitch attitude.

    Raises DegenerateSignal when both the sine and cosine channels fall
    below 1e-15 rad/s in magnitude (no heading information, e.g. poles).
    """
    wx, wy, wz = _rate_vector(rates)
    s_phi, c_phi = np.sin(roll), np.cos(roll)
    s_th, c_th = np.sin(pitch), np.cos(pitch)
    s_psi = -wy * c_phi + wz * s_phi
    c_psi = wx * c_th + wy * s_phi * s_th + wz * c_phi * s_th
    if abs(s_psi) < _DEGENERATE_RATE and abs(c_psi) < _DEGENERATE_RATE:
        raise DegenerateSignal("heading channels below 1e-15 rad/s")
    return wrap_heading(np.arctan2(s_psi, c_psi))


def heading_from_rates_leveled(rates) -> float:
    """Heading [0, 2*pi) from body rates on a leveled platform."""
    wx, wy, _ = _rate_vector(rates)
    if abs(wy) < _DEGENERATE_RATE and abs(wx) < _DEGENERATE_RATE:
        raise DegenerateSignal("heading channels below 1e-15 rad/s")
    return wrap_heading(np.arctan2(-wy, wx))


def classical_gyrocompass(seq, window_seconds: float) -> float:
    """Model-based gyrocompassing: average the first window, then solve heading.

    ``seq`` is any object with ``samples`` ([n, 3] rad/s) and
    ``sample_rate`` (Hz) attributes.  Stationary, leveled setting.
    """
    n = int(round(window_seconds * seq.sample_rate))
    if n < 1:
        raise EmptyWindow(f"window of {window_seconds} s covers no samples")
    if n > seq.samples.shape[0]:
        raise EmptyWindow(
            f"window of {window_seconds} s exceeds the {seq.samples.shape[0]}-sample sequence"
        )
    mean_rates = seq.samples[:n].mean(axis=0)
    return heading_from_rates_leveled(mean_rates)
