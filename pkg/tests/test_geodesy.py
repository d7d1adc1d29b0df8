import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from georeg.errors import InvalidSpeed, PoleSingularity
from georeg.geodesy import (
    EARTH_RADIUS,
    PHYSICAL,
    GeoPose,
    footprint,
    geocentric_of,
    local_frame_matrix,
    local_to_geocentric,
    propagate_pose,
    scan_time_limit,
    wrap_angle,
)
from georeg.registration import RigidTransform2D

R = 6.37e6


def direct_propagation(lat, lon, h, alpha, theta, tx, ty):
    """Written out term by term from the published matrix and increments."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cl, sl = math.cos(lat), math.sin(lat)
    cp, sp = math.cos(lon), math.sin(lon)
    Tx = (ca * cp - sa * sl * sp) * tx + (-sa * cp - ca * sl * sp) * ty
    Ty = (sa * cl) * tx + (ca * cl) * ty
    Tz = (-ca * sp - sa * sl * cp) * tx + (sa * sp - ca * sl * cp) * ty
    dlat = Ty / ((R + h) * cl)
    dlon = (cp * Tx - sp * Tz) / ((R + h) * cl)
    cos_a = math.cos(theta + alpha) + math.sin(theta + alpha) * sl * dlon
    sin_a = math.sin(theta + alpha) - math.cos(theta + alpha) * sl * dlon
    return lat + dlat, lon + dlon, math.atan2(sin_a, cos_a)


def ang(a, b):
    return abs(math.remainder(a - b, 2 * math.pi))


@pytest.mark.parametrize("lat, lon, h, expected", [
    (0, 0, 0, (0, 0, 6.37e6)),
    (90, 0, 0, (0, 6.37e6, 0)),
    (0, 0, 1000, (0, 0, 6.371e6)),
])
def test_geocentric_examples(lat, lon, h, expected):
    v = geocentric_of(GeoPose.from_degrees(lat, lon, h))
    assert v == pytest.approx(expected, abs=1e-6)


def test_earth_radius():
    assert EARTH_RADIUS == 6_370_000.0


def test_local_to_geocentric_examples():
    assert local_to_geocentric(GeoPose(0, 0, 0, 0), (5, 7)) == pytest.approx([5, 7, 0])
    rng = np.random.default_rng(1)
    for _ in range(20):
        pose = GeoPose(rng.uniform(-1.5, 1.5), rng.uniform(-3, 3), 0, rng.uniform(-3, 3))
        assert np.all(local_to_geocentric(pose, (0, 0)) == 0)


def test_frame_matrix_orthonormal_sample():
    rng = np.random.default_rng(7)
    worst = 0.0
    for a, lat, lon in zip(rng.uniform(-math.pi, math.pi, 10_000), rng.uniform(-math.pi / 2, math.pi / 2, 10_000),
                           rng.uniform(-math.pi, math.pi, 10_000)):
        M = local_frame_matrix(a, lat, lon)
        worst = max(worst, np.abs(M.T @ M - np.eye(2)).max())
    assert worst < 1e-9


def test_norm_sample():
    rng = np.random.default_rng(8)
    for lat, lon, h in zip(rng.uniform(-math.pi / 2, math.pi / 2, 10_000), rng.uniform(-math.pi, math.pi, 10_000),
                           rng.uniform(0, 2e4, 10_000)):
        v = geocentric_of(GeoPose(lat, lon, h))
        assert abs(np.linalg.norm(v) / (R + h) - 1) < 1e-9


def test_propagate_identity():
    pose = GeoPose.from_degrees(43.6, 1.44, 1000, 30)
    out = propagate_pose(pose, RigidTransform2D.identity())
    assert out.lat == pose.lat and out.lon == pose.lon
    assert ang(out.heading, pose.heading) < 1e-15


@pytest.mark.parametrize("mode", ["strict", "physical"])
def test_propagate_north_1e3(mode):
    out = propagate_pose(GeoPose(0, 0, 0, 0), RigidTransform2D(1, 0, 0, 6370), mode)
    assert out.lat == pytest.approx(1e-3, rel=1e-12)
    assert out.lon == pytest.approx(0, abs=1e-18)


def test_heading_at_equator_is_theta_plus_alpha():
    out = propagate_pose(GeoPose(0, 0, 0, 0), RigidTransform2D.from_angle(math.radians(30), 3, 4))
    assert math.degrees(out.heading) == pytest.approx(30.0, abs=1e-12)


def test_pole_singularity():
    with pytest.raises(PoleSingularity):
        propagate_pose(GeoPose(math.pi / 2, 0, 0, 0), RigidTransform2D(1, 0, 1, 1))


def test_unknown_mode():
    with pytest.raises(ValueError):
        propagate_pose(GeoPose(0, 0), RigidTransform2D.identity(), "ellipsoid")


def test_physical_differs_off_equator():
    pose = GeoPose.from_degrees(60, 0, 0, 0)
    m = RigidTransform2D(1, 0, 0, 1000)
    strict = propagate_pose(pose, m)
    phys = propagate_pose(pose, m, PHYSICAL)
    assert (strict.lat - pose.lat) == pytest.approx(2 * (phys.lat - pose.lat), rel=1e-9)
    # T_y already carries cos(lat), so the default form moves north by arc length / radius
    assert strict.lat - pose.lat == pytest.approx(1000 / R, rel=1e-12)


def test_pole_crossing_is_canonical():
    pose = GeoPose(math.pi / 2 - 1e-3, 0.5, 0, 0)
    out = propagate_pose(pose, RigidTransform2D(1, 0, 0, 0.01 * R), PHYSICAL)
    assert abs(out.lat) <= math.pi / 2
    assert -math.pi < out.lon <= math.pi


@pytest.mark.parametrize("h, th, b", [(1000, 60, 1154.7005), (500, 90, 1000)])
def test_footprint(h, th, b):
    assert footprint(h, math.radians(th)) == pytest.approx(b, rel=1e-7)


def test_footprint_small_angle():
    assert footprint(1000, 1e-9) == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        footprint(1000, 0)


def test_scan_time_limit():
    assert scan_time_limit(1154.70, 50) == pytest.approx(23.094)
    assert scan_time_limit(7.5, 7.5) == 1.0
    assert scan_time_limit(0, 50) == 0
    with pytest.raises(InvalidSpeed):
        scan_time_limit(100, 0)


def test_wrap_angle():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


lat_s = st.floats(-1.4, 1.4)
lon_s = st.floats(-math.pi, math.pi)
small = st.floats(-5000, 5000)


@settings(max_examples=300, deadline=None)
@given(lat=lat_s, lon=lon_s, h=st.floats(0, 1e4), alpha=lon_s, theta=lon_s, tx=small, ty=small)
def test_propagate_matches_direct_evaluation(lat, lon, h, alpha, theta, tx, ty):
    pose = GeoPose(lat, lon, h, alpha)
    out = propagate_pose(pose, RigidTransform2D.from_angle(theta, tx, ty))
    lat2, lon2, head2 = direct_propagation(lat, lon, h, alpha, theta, tx, ty)
    assert abs(out.lat - lat2) < 1e-12
    assert ang(out.lon, lon2) < 1e-12
    assert ang(out.heading, head2) < 1e-12


@settings(max_examples=200, deadline=None)
@given(lon=lon_s, alpha=lon_s, theta=lon_s, tx=small, ty=small, h=st.floats(0, 1e4))
def test_modes_agree_on_equator(lon, alpha, theta, tx, ty, h):
    pose = GeoPose(0.0, lon, h, alpha)
    m = RigidTransform2D.from_angle(theta, tx, ty)
    assert propagate_pose(pose, m) == propagate_pose(pose, m, PHYSICAL)


@settings(max_examples=200, deadline=None)
@given(lat=lat_s, lon=lon_s, alpha=lon_s, theta=lon_s)
def test_pure_rotation_changes_heading_only(lat, lon, alpha, theta):
    # zero displacement gives zero longitude change, so no heading correction
    pose = GeoPose(lat, lon, 0.0, alpha)
    out = propagate_pose(pose, RigidTransform2D.from_angle(theta))
    assert out.lat == pose.lat and ang(out.lon, pose.lon) == 0
    assert ang(out.heading, alpha + theta) < 1e-12
