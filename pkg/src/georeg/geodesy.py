"""Spherical-Earth propagation of an image-center pose.

Geocentric axes: X points to (lat 0, lon 90 deg), Y to the north pole and
Z to (lat 0, lon 0). Angles are radians throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpeed, PoleSingularity
from .registration import RigidTransform2D

EARTH_RADIUS = 6_370_000.0
POLE_COS_CUTOFF = 1e-6

STRICT = "strict"
PHYSICAL = "physical"
GEODESY_MODES = (STRICT, PHYSICAL)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class GeoPose:
    lat: float
    lon: float
    alt: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        vals = (self.lat, self.lon, self.alt, self.heading)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose: {self}")
        if abs(self.lat) > math.pi / 2:
            raise ValueError(f"latitude out of range: {self.lat}")
        if self.alt < 0:
            raise ValueError(f"altitude must be >= 0, got {self.alt}")

    @classmethod
    def from_degrees(cls, lat, lon, alt=0.0, heading=0.0) -> GeoPose:
        return cls(math.radians(lat), wrap_angle(math.radians(lon)), alt,
                   wrap_angle(math.radians(heading)))

    def to_degrees(self) -> tuple[float, float, float, float]:
        return (math.degrees(self.lat), math.degrees(self.lon), self.alt,
                math.degrees(self.heading))


def geocentric_of(pose: GeoPose, radius: float = EARTH_RADIUS) -> np.ndarray:
    r = radius + pose.alt
    cl = math.cos(pose.lat)
    return r * np.array([cl * math.sin(pose.lon), math.sin(pose.lat), cl * math.cos(pose.lon)])


def local_frame_matrix(heading: float, lat: float, lon: float) -> np.ndarray:
    """3x2 matrix taking image-plane (t_x, t_y) to geocentric components."""
    ca, sa = math.cos(heading), math.sin(heading)
    cl, sl = math.cos(lat), math.sin(lat)
    cp, sp = math.cos(lon), math.sin(lon)
    return np.array([
        [ca * cp - sa * sl * sp, -sa * cp - ca * sl * sp],
        [sa * cl, ca * cl],
        [-ca * sp - sa * sl * cp, sa * sp - ca * sl * cp],
    ])


def local_to_geocentric(pose: GeoPose, t_local) -> np.ndarray:
    return local_frame_matrix(pose.heading, pose.lat, pose.lon) @ np.asarray(t_local, dtype=float)


def _canonical(lat: float, lon: float) -> tuple[float, float]:
    # crossing a pole reflects latitude and flips longitude by half a turn
    lat = wrap_angle(lat)
    if lat > math.pi / 2:
        lat, lon = math.pi - lat, lon + math.pi
    elif lat < -math.pi / 2:
        lat, lon = -math.pi - lat, lon + math.pi
    return lat, wrap_angle(lon)


def propagate_pose(pose: GeoPose, motion: RigidTransform2D, mode: str = STRICT,
                   radius: float = EARTH_RADIUS) -> GeoPose:
    """Move the image center by ``motion`` and update the heading.

    ``mode="strict"`` divides the latitude increment by cos(lat);
    ``mode="physical"`` uses (R + h) alone for that denominator. The two
    agree on the equator.
    """
    if mode not in GEODESY_MODES:
        raise ValueError(f"unknown geodesy mode {mode!r}")
    cl = math.cos(pose.lat)
    if cl < POLE_COS_CUTOFF:
        raise PoleSingularity(f"cos(lat) = {cl:.3g} below {POLE_COS_CUTOFF}")
    r = radius + pose.alt
    T = local_to_geocentric(pose, (motion.t_x, motion.t_y))
    d_lat = T[1] / (r * cl) if mode == STRICT else T[1] / r
    d_lon = (math.cos(pose.lon) * T[0] - math.sin(pose.lon) * T[2]) / (r * cl)

    motion = motion.normalized()
    # cos/sin of (theta + heading)
    c = motion.cos_theta * math.cos(pose.heading) - motion.sin_theta * math.sin(pose.heading)
    s = motion.sin_theta * math.cos(pose.heading) + motion.cos_theta * math.sin(pose.heading)
    k = math.sin(pose.lat) * d_lon
    heading = math.atan2(s - c * k, c + s * k)

    lat, lon = _canonical(pose.lat + d_lat, pose.lon + d_lon)
    return GeoPose(lat, lon, pose.alt, wrap_angle(heading))


def footprint(h: float, theta_l: float) -> float:
    """Along-track ground extent of an image for field of view ``theta_l``."""
    if not 0.0 < theta_l < math.pi:
        raise ValueError("field of view must be in (0, pi)")
    if h <= 0:
        raise ValueError("altitude must be positive")
    return 2.0 * h * math.tan(theta_l / 2.0)


def scan_time_limit(b: float, v: float) -> float:
    """Time for the aircraft to fly over one footprint length."""
    if v <= 0:
        raise InvalidSpeed(f"speed must be positive, got {v}")
    return b / v
