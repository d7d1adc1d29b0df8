import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from georeg.errors import AllPairsDegenerate, DegenerateMatchPair, InsufficientMatches, InvalidCount
from georeg.registration import (
    AveragingPolicy,
    DescriptorMatch,
    RigidTransform2D,
    apply_transform,
    displacement_std,
    estimate_pairwise,
    estimate_transform,
    quantization_error_bound,
)

ROT90 = RigidTransform2D.from_angle(math.pi / 2, 10.0, 0.0)


def forward(t, pts):
    # independent forward model: p' = Rot(theta) (p - t) with Rot = [[c, s], [-s, c]]
    d = pts - np.array([t.t_x, t.t_y])
    c, s = t.cos_theta, t.sin_theta
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


def angle_diff(a, b):
    return abs(math.remainder(a - b, 2 * math.pi))


def test_apply_identity():
    assert apply_transform(RigidTransform2D.identity(), (3.0, 4.0)) == pytest.approx((3.0, 4.0))


@pytest.mark.parametrize("p, expected", [((11, 2), (2, -1)), ((10, 1), (1, 0))])
def test_apply_rot90(p, expected):
    assert apply_transform(ROT90, p) == pytest.approx(expected, abs=1e-12)


def test_apply_array_matches_tuple():
    pts = np.array([[1.0, 2.0], [-3.0, 5.5], [0.0, 0.0]])
    t = RigidTransform2D.from_angle(0.7, 1.5, -2.0)
    out = apply_transform(t, pts)
    for row, p in zip(out, pts):
        assert tuple(row) == pytest.approx(apply_transform(t, tuple(p)))


def test_pairwise_rot90():
    m1 = DescriptorMatch(11, 2, 2, -1)
    m2 = DescriptorMatch(10, 1, 1, 0)
    t = estimate_pairwise(m1, m2)
    assert math.degrees(t.theta) == pytest.approx(90.0)
    assert (t.t_x, t.t_y) == pytest.approx((10.0, 0.0), abs=1e-12)


def test_pairwise_identity():
    t = estimate_pairwise(DescriptorMatch(0, 0, 0, 0), DescriptorMatch(1, 0, 1, 0))
    assert t.theta == pytest.approx(0.0, abs=1e-15)
    assert (t.t_x, t.t_y) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_pairwise_coincident():
    with pytest.raises(DegenerateMatchPair):
        estimate_pairwise(DescriptorMatch(0, 0, 0, 0), DescriptorMatch(0, 0, 0, 0))


def test_pairwise_is_unit_under_scale_mismatch():
    # frame R' points twice as far apart: raw (cos, sin) has norm 1/2
    t = estimate_pairwise(DescriptorMatch(0, 0, 0, 0), DescriptorMatch(1, 0, 2, 0))
    assert math.hypot(t.cos_theta, t.sin_theta) == pytest.approx(1.0, abs=1e-12)


def test_match_rejects_nan():
    with pytest.raises(ValueError):
        DescriptorMatch(float("nan"), 0, 0, 0)


def test_estimate_two_matches_equals_pairwise():
    ms = [DescriptorMatch(11, 2, 2, -1), DescriptorMatch(10, 1, 1, 0)]
    est = estimate_transform(ms)
    assert math.degrees(est.transform.theta) == pytest.approx(90.0)
    assert (est.transform.t_x, est.transform.t_y) == pytest.approx((10.0, 0.0), abs=1e-12)
    assert est.n_pairs_used == 1
    assert est.residual_rms < 1e-12


def test_estimate_fifty_noiseless():
    rng = np.random.default_rng(3)
    t = RigidTransform2D.from_angle(rng.uniform(-math.pi, math.pi), *rng.uniform(-500, 500, 2))
    p1 = rng.uniform(-300, 300, (50, 2))
    est = estimate_transform((p1, forward(t, p1)))
    assert angle_diff(est.transform.theta, t.theta) < 1e-9
    assert abs(est.transform.t_x - t.t_x) < 1e-9 and abs(est.transform.t_y - t.t_y) < 1e-9
    assert est.residual_rms < 1e-9
    assert est.n_pairs_used == 50 * 49 // 2


def test_estimate_errors():
    with pytest.raises(InsufficientMatches):
        estimate_transform([DescriptorMatch(0, 0, 0, 0)])
    with pytest.raises(AllPairsDegenerate):
        estimate_transform([DescriptorMatch(k, 0, 5, 5) for k in range(4)])


def test_degenerate_pairs_skipped():
    ms = [DescriptorMatch(11, 2, 2, -1), DescriptorMatch(10, 1, 1, 0), DescriptorMatch(11, 2, 2, -1)]
    est = estimate_transform(ms)
    assert est.n_pairs_used == 2
    assert math.degrees(est.transform.theta) == pytest.approx(90.0)


def test_pair_cap_sampling_is_seeded():
    rng = np.random.default_rng(5)
    p1 = rng.uniform(-100, 100, (300, 2))
    p2 = forward(ROT90, p1) + rng.normal(0, 0.5, p1.shape)
    pol = AveragingPolicy(all_pairs_limit=256, pair_cap=1000, seed=11)
    a = estimate_transform((p1, p2), pol)
    b = estimate_transform((p1, p2), pol)
    assert a == b
    assert a.n_pairs_used <= 1000


@pytest.mark.parametrize("sigma, n, expected", [(10, 1, 10), (10, 100, 1), (24.49, 600, 1.0)])
def test_displacement_std(sigma, n, expected):
    assert displacement_std(sigma, n) == pytest.approx(expected, rel=1e-3)


def test_displacement_std_zero():
    with pytest.raises(InvalidCount):
        displacement_std(10, 0)


@pytest.mark.parametrize("res, expected", [(1.19, 0.595), (2.0, 1.0)])
def test_quantization(res, expected):
    assert quantization_error_bound(res) == pytest.approx(expected)


def test_quantization_rejects_zero():
    with pytest.raises(ValueError):
        quantization_error_bound(0.0)


coord = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(theta=st.floats(-math.pi, math.pi), tx=coord, ty=coord, seed=st.integers(0, 2**32 - 1),
       n=st.integers(2, 40))
def test_roundtrip_property(theta, tx, ty, seed, n):
    t = RigidTransform2D.from_angle(theta, tx, ty)
    p1 = np.random.default_rng(seed).uniform(-500, 500, (n, 2))
    est = estimate_transform((p1, forward(t, p1))).transform
    assert math.hypot(est.cos_theta, est.sin_theta) == pytest.approx(1.0, abs=1e-12)
    assert angle_diff(est.theta, theta) < 1e-9
    assert abs(est.t_x - tx) < 1e-9 and abs(est.t_y - ty) < 1e-9


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 60), noise=st.floats(0.0, 5.0))
def test_unit_norm_and_permutation_invariance(seed, n, noise):
    rng = np.random.default_rng(seed)
    t = RigidTransform2D.from_angle(rng.uniform(-3, 3), *rng.uniform(-50, 50, 2))
    p1 = rng.uniform(-200, 200, (n, 2))
    p2 = forward(t, p1) + rng.normal(0, noise, p1.shape)
    a = estimate_transform((p1, p2)).transform
    perm = rng.permutation(n)
    b = estimate_transform((p1[perm], p2[perm])).transform
    assert math.hypot(a.cos_theta, a.sin_theta) == pytest.approx(1.0, abs=1e-12)
    assert angle_diff(a.theta, b.theta) < 1e-9
    assert abs(a.t_x - b.t_x) < 1e-9 and abs(a.t_y - b.t_y) < 1e-9


def translation_rms(n, trials, sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    sq = 0.0
    for _ in range(trials):
        t = RigidTransform2D.from_angle(rng.uniform(-math.pi, math.pi), *rng.uniform(-100, 100, 2))
        p1 = rng.uniform(-250, 250, (n, 2))
        p2 = forward(t, p1) + rng.normal(0, sigma, (n, 2))
        e = estimate_transform((p1, p2)).transform
        sq += (e.t_x - t.t_x) ** 2 + (e.t_y - t.t_y) ** 2
    return math.sqrt(sq / trials)


@pytest.mark.slow
def test_noise_scaling_slope():
    ns = np.array([10, 100, 1000, 10000])
    rms = np.array([translation_rms(int(n), 500, seed=int(n)) for n in ns])
    slope = np.polyfit(np.log(ns), np.log(rms), 1)[0]
    assert abs(slope + 0.5) <= 0.05


@pytest.mark.parametrize("n, cap", [(300, 1000), (257, 32640), (2000, 32640)])
def test_sampled_pairs_are_distinct_and_ordered(n, cap):
    from georeg.registration import _pair_index

    i, j = _pair_index(n, AveragingPolicy(pair_cap=cap, seed=2))
    assert len(i) == min(cap, n * (n - 1) // 2)
    assert ((0 <= i) & (i < j) & (j < n)).all()
    assert len(set(zip(i.tolist(), j.tolist()))) == len(i)
