"""Rotor geometry and rigid-rotation kinematics shared by both solvers.

Coordinate and sign conventions (used consistently across the package):

* Free stream blows along +x. Rotation is counterclockwise for omega > 0.
* Azimuth theta = 0 when the blade sits at the most-upwind point
  (-radius, 0), increasing in the rotation direction. A configurable
  offset shifts the origin if a different convention is needed.
* position(theta) = -radius * (cos theta, sin theta)
* velocity(theta) = omega * radius * (sin theta, -cos theta)
* chord_direction points from leading edge to trailing edge, so at zero
  pitch it is exactly opposite the blade velocity. Positive pitch swings
  the leading edge outboard (away from the rotation axis), i.e. the
  chord vector is rotated by -pitch_angle in the plane.
* The outward blade normal is chord_direction rotated +90 deg; at zero
  pitch this is exactly the radial direction.

All internal angles and rates are in radians; unit conversions (rpm,
degrees) happen at config parsing.
"""

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TurbineGeometry:
    """Fixed H-rotor geometry. Lengths in metres, pitch_angle in radians."""

    radius: float
    blade_count: int
    blade_length: float
    chord_mid: float
    tip_chord: float
    taper_length: float
    pitch_angle: float
    hub_height: float
    swept_area: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.blade_count < 1:
            raise ValueError(f"blade_count must be >= 1, got {self.blade_count}")
        if self.blade_length <= 0.0:
            raise ValueError(f"blade_length must be positive, got {self.blade_length}")
        if not 0.0 < self.tip_chord <= self.chord_mid:
            raise ValueError(
                f"need 0 < tip_chord <= chord_mid, got tip_chord={self.tip_chord}, "
                f"chord_mid={self.chord_mid}"
            )
        if not 0.0 <= self.taper_length <= 0.5 * self.blade_length:
            raise ValueError(
                f"taper_length must lie in [0, blade_length/2], got {self.taper_length}"
            )
        if self.swept_area <= 0.0:
            raise ValueError(f"swept_area must be positive, got {self.swept_area}")
        # Rated swept area may disagree with 2*r*L (rounded rotor data sheets);
        # accept up to 2 percent mismatch.
        mismatch = abs(self.swept_area - 2.0 * self.radius * self.blade_length)
        if mismatch / self.swept_area > 0.02:
            raise ValueError(
                f"swept_area {self.swept_area} m^2 deviates more than 2% from "
                f"2*radius*blade_length = {2.0 * self.radius * self.blade_length} m^2"
            )


@dataclass(frozen=True)
class OperatingPoint:
    """Run condition: rotor speed omega [rad/s], free stream u_inf [m/s], air density rho [kg/m^3]."""

    omega: float
    u_inf: float
    rho: float = 1.225

    def __post_init__(self):
        if self.omega < 0.0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.u_inf <= 0.0:
            raise ValueError(f"u_inf must be positive, got {self.u_inf}")
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class BladeState:
    """Kinematic state of one blade section at a given instant."""

    blade_index: int
    azimuth: float
    position: np.ndarray
    velocity: np.ndarray
    chord_direction: np.ndarray


def tip_speed_ratio(op: OperatingPoint, geom: TurbineGeometry) -> float:
    """Tip speed ratio lambda = omega * radius / u_inf."""
    if op.u_inf <= 0.0:
        raise ValueError("tip speed ratio undefined for u_inf <= 0")
    return op.omega * geom.radius / op.u_inf


def blade_azimuth(geom: TurbineGeometry, op: OperatingPoint, t: float,
                  blade_index: int, azimuth_offset: float = 0.0) -> float:
    """Azimuth of one blade at time t, wrapped to [0, 2*pi)."""
    if not 0 <= blade_index < geom.blade_count:
        raise ValueError(
            f"blade_index {blade_index} out of range for {geom.blade_count} blades"
        )
    theta = azimuth_offset + op.omega * t + blade_index * TWO_PI / geom.blade_count
    return theta % TWO_PI


def blade_state(geom: TurbineGeometry, op: OperatingPoint, t: float,
                blade_index: int, azimuth_offset: float = 0.0) -> BladeState:
    """Position, velocity and chord direction of one blade at time t."""
    theta = blade_azimuth(geom, op, t, blade_index, azimuth_offset)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    position = np.array([-geom.radius * cos_t, -geom.radius * sin_t])
    velocity = np.array([op.omega * geom.radius * sin_t,
                         -op.omega * geom.radius * cos_t])
    # Zero-pitch chord (LE -> TE) opposes the velocity; positive pitch
    # rotates it by -pitch_angle so the leading edge swings outboard.
    chord0 = np.array([-sin_t, cos_t])
    cb, sb = np.cos(geom.pitch_angle), np.sin(geom.pitch_angle)
    chord = np.array([cb * chord0[0] + sb * chord0[1],
                      -sb * chord0[0] + cb * chord0[1]])
    return BladeState(blade_index, theta, position, velocity, chord)


def outward_normal(chord_direction: np.ndarray) -> np.ndarray:
    """Chord direction rotated +90 deg; points radially out at zero pitch."""
    return np.array([-chord_direction[1], chord_direction[0]])


def chord_at_span(geom: TurbineGeometry, s: float) -> float:
    """Chord length at distance s from the blade tip (linear tip taper)."""
    if not 0.0 <= s <= geom.blade_length:
        raise ValueError(f"span position {s} outside [0, {geom.blade_length}]")
    if s >= geom.taper_length or geom.taper_length == 0.0:
        return geom.chord_mid
    return geom.tip_chord + (geom.chord_mid - geom.tip_chord) * s / geom.taper_length
