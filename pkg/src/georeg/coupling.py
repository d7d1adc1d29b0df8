"""Closed-form models of the sequential, parallel and combined coupling modes.

Units: meters, seconds, m/s. ``k1`` is seconds of absolute-registration
work per candidate database image.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable

from scipy import integrate

from .errors import NumericalFailure, ProvisoViolated, SpeedTooHigh, VerdictMismatch

BOUNDARY_RTOL = 1e-9
MAX_ITERATIONS = 1_000_000
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class ModeParams:
    """Physical parameters shared by the three coupling modes.

    a, b: footprint across / along track (m); i: absolute-registration
    inaccuracy (m); d_u: drift of one relative registration (m); t0:
    duration of one relative registration (s); k1: scan cost per DB image
    (s); v: speed (m/s); t_0_mission: mission duration (s); r_min: minimum
    turn radius (m).
    """

    a: float
    b: float
    i: float
    d_u: float
    t0: float
    k1: float
    v: float
    t_0_mission: float = 3600.0
    r_min: float = 1000.0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not math.isfinite(val):
                raise ValueError(f"{f.name} must be finite")
            if f.name in ("i", "v"):
                if val < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {val}")
            elif val <= 0:
                raise ValueError(f"{f.name} must be > 0, got {val}")

    def replace(self, **changes) -> ModeParams:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ModeParams(**d)


@dataclass(frozen=True)
class ParallelCoeffs:
    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class CombinedCoeffs:
    sigma: float
    sigma_prime: float


class Status(str, Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class IterationResult:
    outcome: str  # "converged", "diverged" or "undetermined"
    value: float
    steps: int


@dataclass(frozen=True)
class ModeVerdict:
    status: Status
    fixed_points: list[float] = field(default_factory=list)
    violated_conditions: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    iteration: IterationResult | None = None

    def __post_init__(self):
        if self.status is Status.CONVERGES and not self.fixed_points:
            raise ValueError("a converging verdict needs a fixed point")


# --- sequential mode ---------------------------------------------------------

def seq_db_scan_count(p: ModeParams, d_t: float) -> float:
    """Number of DB images covering the footprint inflated by the drift bound."""
    return (p.a + p.i + 2 * d_t) * (p.b + p.i + 2 * d_t) / (p.a * p.b)


def seq_abs_exec_time(p: ModeParams, n: float) -> float:
    return p.k1 * seq_db_scan_count(p, n * p.d_u)


def seq_failure_prob(t_exe: float, p: ModeParams) -> float:
    """Failure probability of an absolute registration lasting ``t_exe``.

    Not clamped: values above 1 flag an infeasible regime.
    """
    return p.v / p.b * t_exe


def seq_v_max(p: ModeParams) -> float:
    return p.a * p.b ** 2 / (p.k1 * (p.a + p.i) * (p.b + p.i))


def seq_n_max_closed_form(p: ModeParams) -> float:
    """The n_max expression without the feasibility check (negative above v_max)."""
    if p.v == 0:
        return math.inf
    rad = math.sqrt((p.a - p.b) ** 2 + 4 * p.a * p.b ** 2 / (p.k1 * p.v))
    return (-p.a - p.b - 2 * p.i + rad) / (4 * p.d_u)


def seq_n_max(p: ModeParams) -> float:
    """Largest relative count per cycle before the absolute surely fails."""
    v_max = seq_v_max(p)
    if p.v >= v_max:
        raise SpeedTooHigh(f"v = {p.v:g} m/s >= v_max = {v_max:g} m/s")
    return seq_n_max_closed_form(p)


def seq_cycle_time(p: ModeParams, n: float) -> float:
    return n * p.t0 + seq_abs_exec_time(p, n)


def _poly_coeffs(p: ModeParams):
    A = 4 * p.d_u ** 2
    B = 2 * p.d_u * (p.a + p.b + 2 * p.i)
    C = (p.a + p.i) * (p.b + p.i)
    B_prime = B + p.t0 * p.a * p.b / p.k1
    return A, B, C, B_prime


def seq_expected_failures(p: ModeParams, n: float) -> float:
    """Expected absolute-registration failures over the mission, n relatives per cycle."""
    A, B, C, Bp = _poly_coeffs(p)
    return p.t_0_mission * p.v / p.b * (A * n * n + B * n + C) / (A * n * n + Bp * n + C)


def seq_optimal_n(p: ModeParams) -> tuple[float, int]:
    """Real minimiser of the expected failures and the best feasible integer.

    Ties between floor and ceil go to the smaller count.
    """
    n_real = math.sqrt((p.a + p.i) * (p.b + p.i)) / (2 * p.d_u)
    n_max = seq_n_max(p)
    hi = math.floor(n_max * (1 + BOUNDARY_RTOL)) if math.isfinite(n_max) else math.inf
    if hi < 1:
        raise SpeedTooHigh(f"no feasible relative count: n_max = {n_max:g}")
    cands = sorted({min(max(c, 1), hi) for c in (math.floor(n_real), math.ceil(n_real))})
    best = min(cands, key=lambda n: (seq_expected_failures(p, n), n))
    return n_real, int(best)


def _bracket(p: ModeParams) -> float:
    ab = p.a * p.b
    return 1 + p.t0 * ab / (4 * p.k1 * p.d_u * (math.sqrt(ab) + (p.a + p.b) / 2))


def _check_proviso(p: ModeParams) -> None:
    try:
        n_max = seq_n_max(p)
    except SpeedTooHigh as exc:
        raise ProvisoViolated(str(exc)) from exc
    n_approx = math.sqrt(p.a * p.b) / (2 * p.d_u)
    if n_approx > n_max * (1 + BOUNDARY_RTOL):
        raise ProvisoViolated(f"sqrt(ab)/(2 d_u) = {n_approx:g} > n_max = {n_max:g}")


def seq_min_expected_failures(p: ModeParams) -> float:
    """Approximate minimum of the expected failures (inaccuracy neglected)."""
    _check_proviso(p)
    return p.t_0_mission * p.v / p.b / _bracket(p)


def seq_min_expected_failures_exact(p: ModeParams) -> float:
    """Expected failures evaluated at the real-valued optimum."""
    return seq_expected_failures(p, seq_optimal_n(p)[0])


def seq_T0_max(p: ModeParams) -> float:
    """Longest mission keeping the minimal expected failure count below one."""
    _check_proviso(p)
    if p.v == 0:
        return math.inf
    return p.b / p.v * _bracket(p)


# --- fixed-point iteration ---------------------------------------------------

def iterate_map(step: Callable[[float], float], t_first: float, *,
                threshold: float, max_steps: int = MAX_ITERATIONS,
                abs_tol: float = 0.0, rel_tol: float = 1e-14) -> IterationResult:
    """Iterate ``step`` until it settles, exceeds ``threshold`` or runs out of steps."""
    t = t_first
    for k in range(1, max_steps + 1):
        nxt = step(t)
        if not math.isfinite(nxt) or nxt > threshold:
            return IterationResult("diverged", nxt, k)
        if abs(nxt - t) <= max(abs_tol, rel_tol * abs(nxt)):
            return IterationResult("converged", nxt, k)
        t = nxt
    return IterationResult("undetermined", t, max_steps)


def _near(x: float, ref: float) -> bool:
    return abs(x - ref) <= BOUNDARY_RTOL * max(abs(ref), 1e-300)


def _cross_check(verdict: ModeVerdict, it: IterationResult, near_boundary: bool) -> ModeVerdict:
    expected = "converged" if verdict.status is Status.CONVERGES else "diverged"
    notes = list(verdict.notes)
    if it.outcome != expected:
        if near_boundary or it.outcome == "undetermined":
            notes.append(f"iteration check {it.outcome} (boundary case)")
        else:
            raise VerdictMismatch(
                f"conditions give {verdict.status.value} but iteration {it.outcome} "
                f"after {it.steps} steps")
    return ModeVerdict(verdict.status, verdict.fixed_points, verdict.violated_conditions,
                       notes, it)


# --- parallel mode -----------------------------------------------------------

def par_db_scan_count(p: ModeParams, t_exe: float) -> float:
    """DB images for the next absolute after ``t_exe / t0`` relatives of drift."""
    return seq_db_scan_count(p, t_exe / p.t0 * p.d_u)


def par_coeffs(p: ModeParams) -> ParallelCoeffs:
    ab = p.a * p.b
    return ParallelCoeffs(
        alpha=4 * p.d_u ** 2 * p.k1 / (ab * p.t0 ** 2),
        beta=2 * p.d_u * (p.a + p.b + 2 * p.i) * p.k1 / (ab * p.t0),
        gamma=p.k1 * (p.a + p.i) * (p.b + p.i) / ab,
    )


def par_step(c: ParallelCoeffs, t: float) -> float:
    return c.alpha * t * t + c.beta * t + c.gamma


def par_fixed_points(c: ParallelCoeffs) -> tuple[float, float] | None:
    """Roots t1 < t2 of the quadratic fixed-point equation, when both exist and are positive."""
    disc = (c.beta - 1) ** 2 - 4 * c.alpha * c.gamma
    if not (disc > 0 and c.beta < 1):
        return None
    root = math.sqrt(disc)
    t2 = ((1 - c.beta) + root) / (2 * c.alpha)
    # product of roots is gamma/alpha; avoids cancellation in the small root
    t1 = 2 * c.gamma / ((1 - c.beta) + root)
    return t1, t2


def par_verdict(c: ParallelCoeffs, t_first: float) -> ModeVerdict:
    """Convergence of the parallel-mode recurrence from ``t_first``.

    Condition labels: 1 beta < 1, 2 positive discriminant, 3 t1 <= t_first <= t2.
    Starting below t1 still converges to t1; that case keeps the
    ``condition 3`` label with a note.
    """
    if t_first <= 0:
        raise ValueError("t_first must be positive")
    disc = (c.beta - 1) ** 2 - 4 * c.alpha * c.gamma
    violated = []
    if not c.beta < 1:
        violated.append("condition 1")
    if not disc > 0:
        violated.append("condition 2")
    near = _near(c.beta, 1.0) or abs(disc) <= BOUNDARY_RTOL * max((c.beta - 1) ** 2, 1e-300)
    if violated:
        verdict = ModeVerdict(Status.NOT_APPLICABLE, [], violated)
    else:
        t1, t2 = par_fixed_points(c)
        near = near or _near(t_first, t2) or _near(t_first, t1)
        if _near(t_first, t2):
            verdict = ModeVerdict(Status.CONVERGES, [t2], [], ["starts on the unstable fixed point t2"])
        elif t_first > t2:
            verdict = ModeVerdict(Status.DIVERGES, [], ["condition 3"])
        elif t_first < t1:
            verdict = ModeVerdict(Status.CONVERGES, [t1], ["condition 3"],
                                  ["below t1: converges to t1 from below"])
        else:
            verdict = ModeVerdict(Status.CONVERGES, [t1], [])
    it = iterate_map(lambda t: par_step(c, t), t_first,
                     threshold=DIVERGENCE_FACTOR * max(c.gamma, t_first))
    return _cross_check(verdict, it, near)


# --- combined mode -----------------------------------------------------------

def comb_reach_point(r: float, v: float, t_exe: float) -> tuple[float, float]:
    """Image corner position after turning at radius ``r`` for ``t_exe`` seconds."""
    if math.isinf(r):
        return 0.0, v * t_exe
    phi = v * t_exe / r
    # 1 - cos(phi) = 2 sin^2(phi/2)
    return 2 * r * math.sin(phi / 2) ** 2, r * math.sin(phi)


def _area_integrand(u: float, w: float) -> float:
    # y(R) dx/du with u = 1/R and w = v * t_exe
    z = w * u
    if z < 1e-4:
        y = w * (1 - z * z / 6)
        dx = w * w * (0.5 - z * z / 8)
    else:
        y = math.sin(z) / u
        dx = w * w * (z * math.sin(z) - 2 * math.sin(z / 2) ** 2) / (z * z)
    return y * dx


def comb_area_exact(v: float, t_exe: float, r_min: float, rtol: float = 1e-10) -> float:
    """Area under the reachable-corner curve for turn radii in [r_min, inf), by quadrature."""
    w = v * t_exe
    if w == 0:
        return 0.0
    val, err, info = integrate.quad(_area_integrand, 0.0, 1.0 / r_min, args=(w,),
                                    epsabs=0.0, epsrel=rtol, limit=200, full_output=True)[:3]
    if err > max(rtol * abs(val), 1e-300) * 10:
        raise NumericalFailure(f"quadrature did not converge: {val} +/- {err}")
    return val


def comb_area_approx(p: ModeParams, t_exe: float) -> float:
    """Approximate likely-presence area during an absolute registration."""
    w = p.v * t_exe
    if w / p.r_min > 0.3:
        warnings.warn(f"v*t_exe/r_min = {w / p.r_min:.3g} is not small; area approximation degrades",
                      stacklevel=2)
    return 2 * w ** 3 / (3 * p.r_min) + p.a * w


def comb_db_scan_count(p: ModeParams, t_exe: float) -> float:
    w = p.v * t_exe
    return 2 * w ** 3 / (3 * p.r_min * p.a * p.b) + w / p.b


def comb_coeffs(p: ModeParams) -> CombinedCoeffs:
    return CombinedCoeffs(
        sigma=2 * p.k1 * p.v ** 3 / (3 * p.r_min * p.a * p.b),
        sigma_prime=p.k1 * p.v / p.b,
    )


def comb_step(c: CombinedCoeffs, t: float) -> float:
    return c.sigma * t ** 3 + c.sigma_prime * t


def comb_fixed_point(c: CombinedCoeffs) -> float | None:
    """Positive nonzero fixed point s1, when the recurrence can converge."""
    if not c.sigma_prime < 1:
        return None
    if c.sigma == 0:
        return math.inf
    return math.sqrt((1 - c.sigma_prime) / c.sigma)


def comb_verdict(c: CombinedCoeffs, t_first: float) -> ModeVerdict:
    """Convergence of the combined-mode recurrence towards zero.

    Condition labels: 1 sigma' < 1, 2 t_first in [0, s1).
    """
    if t_first <= 0:
        raise ValueError("t_first must be positive")
    s1 = comb_fixed_point(c)
    near = _near(c.sigma_prime, 1.0)
    if s1 is None:
        verdict = ModeVerdict(Status.NOT_APPLICABLE, [], ["condition 1"])
        scale = t_first
    else:
        scale = max(s1, t_first)
        near = near or _near(t_first, s1)
        if _near(t_first, s1):
            verdict = ModeVerdict(Status.CONVERGES, [s1], [], ["starts on the unstable fixed point s1"])
        elif t_first > s1:
            verdict = ModeVerdict(Status.DIVERGES, [], ["condition 2"])
        else:
            verdict = ModeVerdict(Status.CONVERGES, [0.0], [])
    it = iterate_map(lambda t: comb_step(c, t), t_first,
                     threshold=DIVERGENCE_FACTOR * scale, abs_tol=1e-13, rel_tol=1e-14)
    return _cross_check(verdict, it, near)
