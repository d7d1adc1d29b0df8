"""Monte-Carlo flights exercising the three coupling modes.

The aircraft flies a straight line along +y at constant speed and altitude.
Position error is tracked as a 2D vector; the scalar drift bound ``d_t``
sizes database scans exactly as the closed-form models do.

Random streams are derived from ``(seed, trial, stream)`` so any trial can
be reproduced on its own, in any order or process.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coupling
from .coupling import ModeParams
from .geodesy import STRICT, GeoPose, propagate_pose
from .registration import RigidTransform2D, displacement_std
from .timing import DEFAULT_SIGMA_MATCH, TimingParams, total_exec_time

SEQUENTIAL, PARALLEL, COMBINED = "sequential", "parallel", "combined"
MODES = (SEQUENTIAL, PARALLEL, COMBINED)

RELATIVE_REG, ABSOLUTE_START, ABSOLUTE_DONE, ABSOLUTE_FAILED = range(4)
EVENT_NAMES = ("relative_reg", "absolute_start", "absolute_done", "absolute_failed")

_STREAM_EVENTS, _STREAM_DRIFT, _STREAM_RESET = range(3)


@dataclass(frozen=True)
class TerrainModel:
    """Descriptor density (descriptors per image footprint) on a regular grid.

    ``densities[row, col]`` covers y in ``[y0 + row*cell, y0 + (row+1)*cell)``
    and x likewise with ``x0``. Lookups outside the grid use the nearest edge cell.
    """

    densities: np.ndarray
    cell_size: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.densities, dtype=float))
        if (d < 0).any() or not np.isfinite(d).all():
            raise ValueError("densities must be finite and non-negative")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "densities", d)

    @classmethod
    def uniform(cls, density: float, length: float, width: float = 1.0) -> TerrainModel:
        return cls(np.array([[density]]), max(length, width), x0=-width / 2)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        ny, nx = self.densities.shape
        return (self.x0, self.x0 + nx * self.cell_size, self.y0, self.y0 + ny * self.cell_size)

    def covers(self, x: float, y_from: float, y_to: float) -> bool:
        x_lo, x_hi, y_lo, y_hi = self.extent
        return x_lo <= x < x_hi and y_lo <= y_from and y_to <= y_hi

    def density_at(self, x: float, y: float) -> float:
        ny, nx = self.densities.shape
        col = min(max(int((x - self.x0) // self.cell_size), 0), nx - 1)
        row = min(max(int((y - self.y0) // self.cell_size), 0), ny - 1)
        return float(self.densities[row, col])


@dataclass(frozen=True)
class TileDatabase:
    """Grid of geo-referenced a x b tiles; ``capacity`` bounds one scan."""

    tile_a: float
    tile_b: float
    capacity: int = 1_000_000
    origin: GeoPose = field(default_factory=lambda: GeoPose(0.0, 0.0, 1000.0, 0.0))


@dataclass(frozen=True)
class SimConfig:
    params: ModeParams
    timing: TimingParams = field(default_factory=TimingParams)
    terrain: TerrainModel | None = None
    mode: str = SEQUENTIAL
    sigma_match: float = DEFAULT_SIGMA_MATCH
    trials: int = 1000
    seed: int = 0
    geodesy_mode: str = STRICT
    shot_interval: float | None = None
    n_relatives: int | None = None
    t_exe_first: float | None = None
    drift_source: str = "params"
    retry: bool = False
    random_phase: bool = True
    min_scan_count: float = 1.0
    db_capacity: int = 1_000_000
    origin: GeoPose = field(default_factory=lambda: GeoPose(0.0, 0.0, 1000.0, 0.0))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.shot_interval is not None and self.shot_interval <= 0:
            raise ValueError("shot_interval must be positive")
        if self.drift_source not in ("params", "terrain"):
            raise ValueError(f"unknown drift source {self.drift_source!r}")
        if self.drift_source == "terrain":
            if self.terrain is None:
                raise ValueError("terrain drift needs a terrain model")
            path_end = self.params.v * self.params.t_0_mission
            if not self.terrain.covers(0.0, 0.0, path_end):
                raise ValueError("terrain does not cover the flight path")
        if self.n_relatives is not None and self.n_relatives < 1:
            raise ValueError("n_relatives must be >= 1")
        if self.t_exe_first is not None and self.t_exe_first <= 0:
            raise ValueError("t_exe_first must be positive")

    @property
    def database(self) -> TileDatabase:
        return TileDatabase(self.params.a, self.params.b, self.db_capacity, self.origin)


@dataclass
class SimTrace:
    """Event log of one simulated flight. Columns are parallel arrays."""

    t: np.ndarray
    event: np.ndarray
    pos_err: np.ndarray
    d_t: np.ndarray
    t_exe: np.ndarray
    db_images: np.ndarray
    failed: bool = False
    n_failures: int = 0
    expected_failures: float = 0.0
    relative_failures: int = 0
    end_pose: GeoPose | None = None

    def __len__(self):
        return len(self.t)

    @property
    def absolute_t_exe(self) -> np.ndarray:
        """Durations of the absolute registrations started during the flight."""
        return self.t_exe[self.event == ABSOLUTE_START]

    def rows(self):
        for k in range(len(self.t)):
            yield (float(self.t[k]), EVENT_NAMES[self.event[k]], float(self.pos_err[k, 0]),
                   float(self.pos_err[k, 1]), float(self.d_t[k]), float(self.t_exe[k]),
                   int(self.db_images[k]))


class _Recorder:
    def __init__(self):
        self.chunks = []

    def add(self, t, kind, err, d_t, t_exe, db=0):
        self.chunks.append((np.atleast_1d(np.asarray(t, float)),
                            np.full(np.size(t), kind, dtype=np.int8),
                            np.asarray(err, float).reshape(-1, 2),
                            np.broadcast_to(np.asarray(d_t, float), np.shape(np.atleast_1d(t))),
                            np.broadcast_to(np.asarray(t_exe, float), np.shape(np.atleast_1d(t))),
                            np.broadcast_to(np.asarray(db, np.int64), np.shape(np.atleast_1d(t)))))

    def trace(self, **kw) -> SimTrace:
        if not self.chunks:
            cols = (np.empty(0), np.empty(0, np.int8), np.empty((0, 2)), np.empty(0),
                    np.empty(0), np.empty(0, np.int64))
        else:
            cols = [np.concatenate([c[k] for c in self.chunks]) for k in range(6)]
        return SimTrace(*cols, **kw)


@dataclass(frozen=True)
class RelativeStep:
    drift: np.ndarray
    n_matches: int
    t_exe: float
    zero_matches: bool


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial, stream)))


def isotropic(rng: np.random.Generator, radial_rms: float, size=None) -> np.ndarray:
    """2D Gaussian vectors whose root-mean-square length is ``radial_rms``."""
    shape = (2,) if size is None else (size, 2)
    return rng.normal(0.0, radial_rms / math.sqrt(2.0), shape)


def relative_step(density: float, sigma_match: float, rng: np.random.Generator,
                  overlap: float = 1.0, timing: TimingParams | None = None) -> RelativeStep:
    """One relative registration over terrain with ``density`` descriptors per image.

    Zero matches leave the registration without a solution; the drift is
    then drawn as if from a single match and ``zero_matches`` is set.
    """
    if density < 0:
        raise ValueError("density must be non-negative")
    n = int(math.floor(min(max(overlap, 0.0), 1.0) * density))
    drift = isotropic(rng, displacement_std(sigma_match, max(n, 1)))
    t_exe = total_exec_time(timing, density) if timing is not None else 0.0
    return RelativeStep(drift, n, t_exe, n == 0)


def _db_count(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def _end_pose(cfg: SimConfig, t_end: float, err: np.ndarray) -> GeoPose:
    # estimated end position: true straight-line track plus position error
    origin = cfg.database.origin
    dx, dy = float(err[0]), cfg.params.v * max(t_end, 0.0) + float(err[1])
    return propagate_pose(origin, RigidTransform2D(1.0, 0.0, dx, dy), cfg.geodesy_mode)


def run_sequential(cfg: SimConfig, trial: int) -> SimTrace:
    """Cycles of n relative registrations followed by one absolute registration.

    The mission window starts at a uniformly random phase of the cycle when
    ``cfg.random_phase`` is set. A failed absolute ends the mission unless
    ``cfg.retry``, in which case the failure is counted, the position error
    is left uncorrected and the next cycle starts.
    """
    if cfg.drift_source == "terrain":
        return _run_sequential_terrain(cfg, trial)
    p = cfg.params
    n = cfg.n_relatives or coupling.seq_optimal_n(p)[1]
    ev_rng = trial_rng(cfg.seed, trial, _STREAM_EVENTS)
    drift_rng = trial_rng(cfg.seed, trial, _STREAM_DRIFT)
    reset_rng = trial_rng(cfg.seed, trial, _STREAM_RESET)
    half_i = p.i / 2

    t_abs = coupling.seq_abs_exec_time(p, n)
    db = _db_count(coupling.seq_db_scan_count(p, n * p.d_u))
    p_fail = min(max(coupling.seq_failure_prob(t_abs, p), 0.0), 1.0)
    t_end = p.t_0_mission
    cycle = n * p.t0 + t_abs
    t_start = -ev_rng.uniform(0.0, cycle) if cfg.random_phase else 0.0

    # every cycle has the same timing, so the whole window is laid out at once
    k_cycles = int(math.floor((t_end - t_start) / cycle)) + 1
    k = np.arange(k_cycles)
    begin = t_start + k * cycle
    abs_start = begin + n * p.t0
    abs_done = abs_start + t_abs
    judged = (abs_done >= 0) & (abs_done <= t_end)
    fail = judged & (ev_rng.random(k_cycles) < p_fail)
    if not cfg.retry and fail.any():
        k_cycles = int(np.argmax(fail)) + 1
        k, begin, abs_start, abs_done = k[:k_cycles], begin[:k_cycles], abs_start[:k_cycles], abs_done[:k_cycles]
        judged, fail = judged[:k_cycles], fail[:k_cycles]

    # position error: uniform residual after each success, plus drift accumulated since
    steps = isotropic(drift_rng, p.d_u, k_cycles * n).reshape(k_cycles, n, 2)
    resets = reset_rng.uniform(-half_i, half_i, (k_cycles + 1, 2))
    drift = np.cumsum(steps.reshape(-1, 2), axis=0).reshape(k_cycles, n, 2)
    drift_before = np.concatenate([np.zeros((1, 2)), drift[:, -1]])  # total drift before cycle k
    # cycle k starts from the reset drawn after the latest success before it
    success = ~fail
    last_reset = np.maximum.accumulate(np.where(np.concatenate([[True], success[:-1]]),
                                                np.arange(k_cycles), 0))
    base = resets[last_reset] - drift_before[last_reset]
    rel_err = base[:, None, :] + drift
    start_err = rel_err[:, -1]
    done_err = np.where(success[:, None], resets[k + 1], start_err)

    rows = n + 2
    t = np.empty((k_cycles, rows))
    t[:, :n] = begin[:, None] + p.t0 * np.arange(1, n + 1)
    t[:, n] = abs_start
    t[:, n + 1] = abs_done
    ev = np.empty((k_cycles, rows), dtype=np.int8)
    ev[:, :n] = RELATIVE_REG
    ev[:, n] = ABSOLUTE_START
    ev[:, n + 1] = np.where(fail, ABSOLUTE_FAILED, ABSOLUTE_DONE)
    err = np.concatenate([rel_err, start_err[:, None], done_err[:, None]], axis=1)
    d_t = np.empty((k_cycles, rows))
    d_t[:, :n] = p.d_u * np.arange(1, n + 1)
    d_t[:, n] = n * p.d_u
    d_t[:, n + 1] = np.where(fail, n * p.d_u, 0.0)
    t_exe = np.zeros((k_cycles, rows))
    t_exe[:, n:] = t_abs
    dbs = np.zeros((k_cycles, rows), dtype=np.int64)
    dbs[:, n:] = db

    keep = ((t >= 0) & (t <= t_end)).ravel()
    trace = SimTrace(t.ravel()[keep], ev.ravel()[keep], err.reshape(-1, 2)[keep], d_t.ravel()[keep],
                     t_exe.ravel()[keep], dbs.ravel()[keep])
    trace.n_failures = int(fail.sum())
    trace.failed = bool(fail.any()) and not cfg.retry
    trace.expected_failures = float(judged.sum() * p_fail)
    trace.end_pose = _end_of(cfg, trace)
    return trace


def _end_of(cfg: SimConfig, trace: SimTrace) -> GeoPose:
    if len(trace):
        return _end_pose(cfg, float(trace.t[-1]), trace.pos_err[-1])
    return _end_pose(cfg, 0.0, np.zeros(2))


def _run_sequential_terrain(cfg: SimConfig, trial: int) -> SimTrace:
    # relative registrations depend on the terrain under the aircraft, one at a time
    p = cfg.params
    n = cfg.n_relatives or coupling.seq_optimal_n(p)[1]
    ev_rng = trial_rng(cfg.seed, trial, _STREAM_EVENTS)
    drift_rng = trial_rng(cfg.seed, trial, _STREAM_DRIFT)
    reset_rng = trial_rng(cfg.seed, trial, _STREAM_RESET)
    half_i = p.i / 2

    t_abs = coupling.seq_abs_exec_time(p, n)
    db = _db_count(coupling.seq_db_scan_count(p, n * p.d_u))
    p_fail = min(max(coupling.seq_failure_prob(t_abs, p), 0.0), 1.0)
    t_end = p.t_0_mission
    shot = cfg.shot_interval or p.t0
    overlap = 1.0 - p.v * shot / p.b

    t = -ev_rng.uniform(0.0, n * p.t0 + t_abs) if cfg.random_phase else 0.0
    err = reset_rng.uniform(-half_i, half_i, 2)
    rec = _Recorder()
    n_fail, expected, rel_fail, failed = 0, 0.0, 0, False
    while True:
        times, errs, rel_t = np.empty(n), np.empty((n, 2)), np.empty(n)
        e = err.copy()
        tt = t
        for k in range(n):
            dens = cfg.terrain.density_at(0.0, p.v * max(tt, 0.0))
            st = relative_step(dens, cfg.sigma_match, drift_rng, overlap, cfg.timing)
            rel_fail += st.zero_matches and 0 <= tt <= t_end
            tt += p.t0
            e = e + st.drift
            times[k], errs[k], rel_t[k] = tt, e, st.t_exe
        d_ts = p.d_u * np.arange(1, n + 1)
        keep = (times >= 0) & (times <= t_end)
        if keep.any():
            rec.add(times[keep], RELATIVE_REG, errs[keep], d_ts[keep], rel_t[keep])
        t, err = float(times[-1]), errs[-1]
        if t > t_end:
            break
        d_t = n * p.d_u
        if t >= 0:
            rec.add(t, ABSOLUTE_START, err, d_t, t_abs, db)
        t_done = t + t_abs
        if t_done > t_end:
            break
        fail = False
        if t_done >= 0:
            expected += p_fail
            fail = bool(ev_rng.random() < p_fail)
        t = t_done
        if fail:
            n_fail += 1
            rec.add(t, ABSOLUTE_FAILED, err, d_t, t_abs, db)
            if not cfg.retry:
                failed = True
                break
        else:
            err = reset_rng.uniform(-half_i, half_i, 2)
            if t >= 0:
                rec.add(t, ABSOLUTE_DONE, err, 0.0, t_abs, db)
    trace = rec.trace(failed=failed, n_failures=n_fail, expected_failures=expected,
                      relative_failures=int(rel_fail))
    trace.end_pose = _end_of(cfg, trace)
    return trace


def run_parallel(cfg: SimConfig, trial: int) -> SimTrace:
    """Back-to-back absolute registrations with relatives ticking every t0.

    Each absolute is sized by the relatives elapsed during the previous one,
    ``ceil(t_exe / t0)``. On completion the error accumulated before its
    start is removed; drift gathered since the start stays.
    """
    p = cfg.params
    drift_rng = trial_rng(cfg.seed, trial, _STREAM_DRIFT)
    reset_rng = trial_rng(cfg.seed, trial, _STREAM_RESET)
    half_i = p.i / 2
    t_end = p.t_0_mission
    cap = cfg.db_capacity

    d = cfg.t_exe_first or coupling.par_coeffs(p).gamma
    count = d / p.k1
    s, d_t, tick = 0.0, 0.0, 1
    err = reset_rng.uniform(-half_i, half_i, 2)
    rec = _Recorder()
    failed = False
    while True:
        db = _db_count(count)
        if d > t_end or db > cap:
            rec.add(s, ABSOLUTE_FAILED, err, d_t, d, db)
            failed = True
            break
        rec.add(s, ABSOLUTE_START, err, d_t, d, db)
        err_start = err.copy()
        done = s + d
        last = min(done, t_end)
        k_hi = int(math.floor(last / p.t0 + 1e-9))
        m = max(k_hi - tick + 1, 0)
        if m:
            times = p.t0 * np.arange(tick, k_hi + 1)
            errs = err + np.cumsum(isotropic(drift_rng, p.d_u, m), axis=0)
            d_ts = d_t + p.d_u * np.arange(1, m + 1)
            rec.add(times, RELATIVE_REG, errs, d_ts, p.t0)
            err, d_t, tick = errs[-1], float(d_ts[-1]), k_hi + 1
        if done > t_end:
            break
        err = reset_rng.uniform(-half_i, half_i, 2) + (err - err_start)
        d_t = m * p.d_u
        rec.add(done, ABSOLUTE_DONE, err, d_t, d, db)
        n_rel = math.ceil(d / p.t0 - 1e-9)
        count = coupling.seq_db_scan_count(p, n_rel * p.d_u)
        s, d = done, p.k1 * count
    return rec.trace(failed=failed, n_failures=int(failed),
                     end_pose=_end_pose(cfg, min(s, t_end), err))


def run_combined(cfg: SimConfig, trial: int) -> SimTrace:
    """Absolute registrations alone, each sized by the previous one's reachable area.

    Scan counts never drop below ``cfg.min_scan_count`` tiles.
    """
    p = cfg.params
    reset_rng = trial_rng(cfg.seed, trial, _STREAM_RESET)
    half_i = p.i / 2
    t_end = p.t_0_mission
    floor = cfg.min_scan_count

    d = cfg.t_exe_first or p.k1 * floor
    count = d / p.k1
    s, d_t = 0.0, 0.0
    err = reset_rng.uniform(-half_i, half_i, 2)
    rec = _Recorder()
    failed = False
    while True:
        db = _db_count(count)
        if d > t_end or db > cfg.db_capacity:
            rec.add(s, ABSOLUTE_FAILED, err, d_t, d, db)
            failed = True
            break
        rec.add(s, ABSOLUTE_START, err, d_t, d, db)
        done = s + d
        if done > t_end:
            break
        err = reset_rng.uniform(-half_i, half_i, 2)
        rec.add(done, ABSOLUTE_DONE, err, 0.0, d, db)
        d_t = p.v * d
        count = max(coupling.comb_db_scan_count(p, d), floor)
        s, d = done, p.k1 * count
    return rec.trace(failed=failed, n_failures=int(failed),
                     end_pose=_end_pose(cfg, min(s, t_end), err))


_RUNNERS = {SEQUENTIAL: run_sequential, PARALLEL: run_parallel, COMBINED: run_combined}


def run_trial(cfg: SimConfig, trial: int) -> SimTrace:
    return _RUNNERS[cfg.mode](cfg, trial)


def _run_chunk(args) -> list[SimTrace]:
    cfg, lo, hi = args
    return [run_trial(cfg, k) for k in range(lo, hi)]


def run_trials(cfg: SimConfig, trials: int | None = None, jobs: int = 1) -> list[SimTrace]:
    """Run trials ``0 .. trials-1``; the result does not depend on ``jobs``."""
    trials = cfg.trials if trials is None else trials
    if jobs <= 1 or trials < 2:
        return [run_trial(cfg, k) for k in range(trials)]
    bounds = np.linspace(0, trials, min(jobs * 4, trials) + 1).astype(int)
    chunks = [(cfg, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return [tr for part in pool.map(_run_chunk, chunks) for tr in part]


def summarize(traces: list[SimTrace]) -> dict:
    """Aggregate statistics over a list of traces, in trace order."""
    if not traces:
        raise ValueError("need at least one trace")
    n = len(traces)
    failed = np.array([tr.failed for tr in traces], dtype=float)
    fails = np.array([tr.n_failures for tr in traces], dtype=float)
    expected = np.array([tr.expected_failures for tr in traces], dtype=float)
    errs = np.concatenate([np.hypot(tr.pos_err[:, 0], tr.pos_err[:, 1]) for tr in traces])
    starts = [tr.absolute_t_exe for tr in traces]
    depth = max((len(x) for x in starts), default=0)
    mean_t_exe = [float(np.mean([x[k] for x in starts if len(x) > k])) for k in range(depth)]
    d_t_start = np.concatenate([tr.d_t[tr.event == ABSOLUTE_START] for tr in traces])

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    return {
        "trials": n,
        "mission_failure_rate": float(failed.mean()),
        "mission_failure_rate_se": se(failed),
        "mean_failures": float(fails.mean()),
        "mean_failures_se": se(fails),
        "mean_expected_failures": float(expected.mean()),
        "pos_err_mean_m": float(errs.mean()) if errs.size else 0.0,
        "pos_err_p95_m": float(np.percentile(errs, 95)) if errs.size else 0.0,
        "mean_d_t_at_absolute_start_m": float(d_t_start.mean()) if d_t_start.size else 0.0,
        "relative_failures": int(sum(tr.relative_failures for tr in traces)),
        "mean_t_exe_by_absolute_s": mean_t_exe,
    }
