"""Rigid 2D motion between consecutive frames from matched descriptors.

Frame convention: a point ``p`` expressed in the frame of image 1 maps to
``Rot(theta) @ (p - t)`` in the frame of image 2, where

    Rot(theta) = [[ cos, sin],
                  [-sin, cos]]

and ``t`` is the displacement of the image-2 origin expressed in image-1
coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AllPairsDegenerate,
    DegenerateMatchPair,
    InsufficientMatches,
    InvalidCount,
)

# C(256, 2)
DEFAULT_PAIR_CAP = 32640
DEFAULT_ALL_PAIRS_LIMIT = 256


@dataclass(frozen=True)
class DescriptorMatch:
    """One descriptor seen at (x1, y1) in image 1 and (x2, y2) in image 2, meters."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise ValueError(f"non-finite match coordinates: {self}")


@dataclass(frozen=True)
class RigidTransform2D:
    cos_theta: float
    sin_theta: float
    t_x: float
    t_y: float

    @classmethod
    def from_angle(cls, theta: float, t_x: float = 0.0, t_y: float = 0.0) -> RigidTransform2D:
        return cls(math.cos(theta), math.sin(theta), t_x, t_y)

    @classmethod
    def identity(cls) -> RigidTransform2D:
        return cls(1.0, 0.0, 0.0, 0.0)

    @property
    def theta(self) -> float:
        return math.atan2(self.sin_theta, self.cos_theta)

    def normalized(self) -> RigidTransform2D:
        norm = math.hypot(self.cos_theta, self.sin_theta)
        if norm == 0.0:
            raise ValueError("rotation part has zero norm")
        return RigidTransform2D(self.cos_theta / norm, self.sin_theta / norm, self.t_x, self.t_y)


@dataclass(frozen=True)
class TransformEstimate:
    transform: RigidTransform2D
    n_pairs_used: int
    residual_rms: float


@dataclass(frozen=True)
class AveragingPolicy:
    """How rotation contributions are pooled over match pairs.

    All pairs are used up to ``all_pairs_limit`` matches; above that a
    seeded sample of ``pair_cap`` distinct pairs is drawn.
    """

    all_pairs_limit: int = DEFAULT_ALL_PAIRS_LIMIT
    pair_cap: int = DEFAULT_PAIR_CAP
    seed: int = 0


def apply_transform(t: RigidTransform2D, p) -> tuple[float, float] | np.ndarray:
    """Map point(s) from the image-1 frame into the image-2 frame.

    ``p`` is either an ``(x, y)`` pair or an array of shape ``(..., 2)``.
    """
    c, s = t.cos_theta, t.sin_theta
    arr = np.asarray(p, dtype=float)
    dx = arr[..., 0] - t.t_x
    dy = arr[..., 1] - t.t_y
    out = np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)
    if arr.ndim == 1:
        return float(out[0]), float(out[1])
    return out


def _rotation_terms(d1: np.ndarray, d2: np.ndarray):
    """Unnormalised (cos, sin) numerators and the shared denominator per pair."""
    dx, dy = d1[..., 0], d1[..., 1]
    dxp, dyp = d2[..., 0], d2[..., 1]
    den = dxp * dxp + dyp * dyp
    cos_num = dxp * dx + dyp * dy
    sin_num = dxp * dy - dyp * dx
    return cos_num, sin_num, den


def _translation(p1: np.ndarray, p2: np.ndarray, c: float, s: float) -> np.ndarray:
    tx = -p2[..., 0] * c + p2[..., 1] * s + p1[..., 0]
    ty = -p2[..., 0] * s - p2[..., 1] * c + p1[..., 1]
    return np.stack([tx, ty], axis=-1)


def estimate_pairwise(m1: DescriptorMatch, m2: DescriptorMatch) -> RigidTransform2D:
    """Closed-form rotation and translation from exactly two matches."""
    d1 = np.array([m2.x1 - m1.x1, m2.y1 - m1.y1])
    d2 = np.array([m2.x2 - m1.x2, m2.y2 - m1.y2])
    cos_num, sin_num, den = _rotation_terms(d1, d2)
    if den == 0.0:
        raise DegenerateMatchPair("matches coincide in the second frame")
    c, s = cos_num / den, sin_num / den
    norm = math.hypot(c, s)
    if norm == 0.0:
        raise DegenerateMatchPair("matches coincide in the first frame")
    c, s = c / norm, s / norm
    tx, ty = _translation(np.array([m1.x1, m1.y1]), np.array([m1.x2, m1.y2]), c, s)
    return RigidTransform2D(float(c), float(s), float(tx), float(ty))


def _pair_index(n: int, policy: AveragingPolicy) -> tuple[np.ndarray, np.ndarray]:
    total = n * (n - 1) // 2
    if n <= policy.all_pairs_limit or total <= policy.pair_cap:
        return np.triu_indices(n, k=1)
    rng = np.random.default_rng(policy.seed)
    k = np.sort(rng.choice(total, size=policy.pair_cap, replace=False))
    # k = j*(j-1)/2 + i with 0 <= i < j
    j = ((1 + np.sqrt(1 + 8 * k.astype(float))) // 2).astype(np.int64)
    base = j * (j - 1) // 2
    j = np.where(base > k, j - 1, j)
    j = np.where((j + 1) * j // 2 <= k, j + 1, j)
    i = k - j * (j - 1) // 2
    return i, j


def matches_to_arrays(matches: Sequence[DescriptorMatch]) -> tuple[np.ndarray, np.ndarray]:
    p1 = np.array([[m.x1, m.y1] for m in matches], dtype=float).reshape(-1, 2)
    p2 = np.array([[m.x2, m.y2] for m in matches], dtype=float).reshape(-1, 2)
    return p1, p2


def estimate_transform(matches, policy: AveragingPolicy | None = None) -> TransformEstimate:
    """Estimate the frame-to-frame rigid motion from many matches.

    Each usable pair contributes its unit (cos, sin) from the two-match
    closed form; the contributions are summed and renormalised. The
    translation is the mean of the per-match translations under that
    rotation.

    ``matches`` may be a sequence of :class:`DescriptorMatch` or a pair of
    ``(n, 2)`` arrays ``(p1, p2)``.
    """
    policy = policy or AveragingPolicy()
    if isinstance(matches, tuple) and len(matches) == 2 and isinstance(matches[0], np.ndarray):
        p1, p2 = (np.asarray(a, dtype=float) for a in matches)
    else:
        p1, p2 = matches_to_arrays(matches)
    n = len(p1)
    if n < 2:
        raise InsufficientMatches(f"need at least 2 matches, got {n}")

    i, j = _pair_index(n, policy)
    cos_num, sin_num, den = _rotation_terms(p1[j] - p1[i], p2[j] - p2[i])
    ok = den > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(ok, cos_num / den, 0.0)
        s = np.where(ok, sin_num / den, 0.0)
    norm = np.hypot(c, s)
    ok &= norm > 0.0
    if not ok.any():
        raise AllPairsDegenerate(f"all {len(i)} match pairs are degenerate")
    c_sum = float(np.sum(c[ok] / norm[ok]))
    s_sum = float(np.sum(s[ok] / norm[ok]))
    r = math.hypot(c_sum, s_sum)
    if r == 0.0:
        raise AllPairsDegenerate("pairwise rotations cancel out")
    c_hat, s_hat = c_sum / r, s_sum / r

    t = _translation(p1, p2, c_hat, s_hat).mean(axis=0)
    est = RigidTransform2D(c_hat, s_hat, float(t[0]), float(t[1]))
    resid = apply_transform(est, p1) - p2
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return TransformEstimate(est, int(ok.sum()), rms)


def displacement_std(sigma_match: float, n: int) -> float:
    """Standard deviation of a displacement averaged over ``n`` matches."""
    if n < 1:
        raise InvalidCount(f"match count must be >= 1, got {n}")
    if sigma_match < 0:
        raise ValueError("sigma_match must be non-negative")
    return sigma_match / math.sqrt(n)


def quantization_error_bound(resolution: float) -> float:
    """Half-pixel registration error for a ground resolution in meters/pixel."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    return resolution / 2.0
