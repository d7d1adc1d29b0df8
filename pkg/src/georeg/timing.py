"""Per-phase execution time of one relative registration, and its fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign
from .registration import displacement_std

# standard deviation of one match displacement, so that 600 matches give ~1 m
DEFAULT_SIGMA_MATCH = 24.49


@dataclass(frozen=True)
class TimingParams:
    """Timing constants, all in seconds except ``rho`` (descriptors per pixel^2).

    ``a_c`` per computed descriptor, ``l`` fixed image load, ``t0_pair`` per
    descriptor-pair comparison, ``b`` per match threshold check, ``t_c``
    for the final transform computation.
    """

    a_c: float = 234e-6
    l: float = 9e-6
    t0_pair: float = 1e-6
    b: float = 5e-6
    t_c: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        for name in ("a_c", "l", "t0_pair", "b", "t_c", "rho"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class TimingSample:
    n_descriptors: int
    t_load: float
    t_match: float
    t_threshold: float


@dataclass(frozen=True)
class TimingFit:
    params: TimingParams
    r2_load: float
    r2_match: float
    r2_threshold: float


def load_time(tp: TimingParams, area_px: float) -> float:
    if area_px <= 0:
        raise ValueError("image area must be positive")
    return tp.a_c * tp.rho * area_px + tp.l


def load_time_n(tp: TimingParams, n: float) -> float:
    """Load time written directly in the descriptor count."""
    return tp.a_c * n + tp.l


def match_time(tp: TimingParams, n: float) -> float:
    return tp.t0_pair * n * n


def threshold_time(tp: TimingParams, n: float) -> float:
    return tp.b * n


def total_exec_time(tp: TimingParams, n: float) -> float:
    return tp.t0_pair * n * n + (tp.a_c + tp.b) * n + tp.l + tp.t_c


def _r2(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def _wls(X: np.ndarray, y: np.ndarray, iterations: int = 3) -> np.ndarray:
    # timing noise scales with the timing itself: weight each row by 1/model
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    for _ in range(iterations):
        model = X @ coef
        scale = np.where(model > 0, model, np.where(y > 0, y, 1.0))
        coef = np.linalg.lstsq(X / scale[:, None], y / scale, rcond=None)[0]
    return coef


def fit_timing(samples, rho: float = 0.0, t_c: float = 0.0) -> TimingFit:
    """Fit load (affine), match (quadratic through 0) and threshold (linear through 0).

    Each fit is a relative least-squares fit, i.e. residuals are weighted by
    the inverse of the modelled time, which suits timings whose scatter
    grows with their magnitude.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise DegenerateDesign(f"need at least 3 samples, got {len(samples)}")
    n = np.array([s.n_descriptors for s in samples], dtype=float)
    if np.unique(n).size < 2:
        raise DegenerateDesign("all samples have the same descriptor count")
    t_load = np.array([s.t_load for s in samples], dtype=float)
    t_match = np.array([s.t_match for s in samples], dtype=float)
    t_thr = np.array([s.t_threshold for s in samples], dtype=float)

    a_c, l = _wls(np.column_stack([n, np.ones_like(n)]), t_load)
    pos = n > 0
    if not pos.any():
        raise DegenerateDesign("no sample with a positive descriptor count")
    (t0_pair,) = _wls((n[pos] ** 2)[:, None], t_match[pos])
    (b,) = _wls(n[pos][:, None], t_thr[pos])

    params = TimingParams(a_c=max(float(a_c), 0.0), l=max(float(l), 0.0),
                          t0_pair=max(float(t0_pair), 0.0), b=max(float(b), 0.0),
                          t_c=t_c, rho=rho)
    return TimingFit(
        params,
        r2_load=_r2(t_load, a_c * n + l),
        r2_match=_r2(t_match, t0_pair * n * n),
        r2_threshold=_r2(t_thr, b * n),
    )


def synthetic_samples(tp: TimingParams, n_values, noise: float = 0.0,
                      rng: np.random.Generator | None = None) -> list[TimingSample]:
    """Timing samples generated from ``tp`` with multiplicative Gaussian noise."""
    rng = rng or np.random.default_rng(0)
    out = []
    for n in n_values:
        jitter = 1 + noise * rng.standard_normal(3) if noise else np.ones(3)
        out.append(TimingSample(
            int(n),
            float(load_time_n(tp, n) * jitter[0]),
            float(match_time(tp, n) * jitter[1]),
            float(threshold_time(tp, n) * jitter[2]),
        ))
    return out


def drift_of_matches(n: int, sigma_match: float = DEFAULT_SIGMA_MATCH) -> float:
    """Drift of one relative registration using ``n`` matched descriptors."""
    return displacement_std(sigma_match, n)
