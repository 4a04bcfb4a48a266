"""Monte Carlo engine for first-hitting times.

Trajectories are simulated in fixed-size chunks of consecutive indices.  Each
trajectory draws only from its own counter-based stream (see :mod:`driftkit.rng`),
so the batch is identical whatever the number of worker threads, and
:func:`run_trajectory` reproduces any single trajectory of a batch exactly.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import AllCensored, InvalidParameter
from .process import ProcessSpec, StoppingRule, validate_spec
from .rng import MASK64, RngStream, derive_seeds, uniforms_at

CHUNK_SIZE = 8192
DEFAULT_TRIALS = 100_000
DEFAULT_MAX_STEPS = 1_000_000
DEFAULT_SEED = 42
Z95 = 1.96


@dataclass(frozen=True)
class SimulationConfig:
    trials: int = DEFAULT_TRIALS
    max_steps: int = DEFAULT_MAX_STEPS
    master_seed: int = DEFAULT_SEED
    record_paths: bool = False

    def violations(self) -> list[tuple[str, str]]:
        out = []
        for name in ("trials", "max_steps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                out.append((name, f"must be an integer >= 1, got {v!r}"))
        s = self.master_seed
        if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or not 0 <= s <= MASK64:
            out.append(("seed", f"must be a 64-bit unsigned integer, got {s!r}"))
        if not isinstance(self.record_paths, bool):
            out.append(("record_paths", "must be a boolean"))
        return out

    def validate(self) -> None:
        if self.violations():
            raise InvalidParameter(self.violations())

    def to_dict(self) -> dict:
        return {"trials": self.trials, "max_steps": self.max_steps,
                "seed": self.master_seed, "record_paths": self.record_paths}


@dataclass(frozen=True)
class TrajectoryOutcome:
    """``hitting_time`` is None when the trajectory was censored at the horizon."""

    hitting_time: int | None
    final_value: float
    path: tuple[float, ...] | None = None

    @property
    def censored(self) -> bool:
        return self.hitting_time is None


@dataclass(frozen=True)
class HittingTimeEstimate:
    mean: float
    stderr: float
    ci95: tuple[float, float]
    trials: int
    censored_count: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "ci95": list(self.ci95),
                "trials": self.trials, "censored_count": self.censored_count}


def worker_count() -> int:
    """Thread cap from ``DRIFTKIT_THREADS``; affects speed only."""
    raw = os.environ.get("DRIFTKIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def run_trajectory(spec: ProcessSpec, rule: StoppingRule, rng: RngStream,
                   max_steps: int = DEFAULT_MAX_STEPS, record: bool = False) -> TrajectoryOutcome:
    """Step ``spec`` from its start until ``rule`` stops it or ``max_steps`` is spent."""
    validate_spec(spec)
    state = spec.initial_state()
    value = spec.value(state)
    path = [value] if record else None
    if rule.is_stopped(value):
        return TrajectoryOutcome(0, value, tuple(path) if record else None)
    for t in range(1, max_steps + 1):
        state = spec.next_state(state, rng.uniform())
        value = spec.value(state)
        if record:
            path.append(value)
        if rule.is_stopped(value):
            return TrajectoryOutcome(t, value, tuple(path) if record else None)
    return TrajectoryOutcome(None, value, tuple(path) if record else None)


class TrajectoryBatch:
    """Outcomes of consecutive trajectories ``0 .. trials-1``.

    Recorded paths are stored flat: ``values[offsets[i]:offsets[i+1]]`` is
    ``X_0 .. X_L`` of trajectory ``i``, where ``L`` is its hitting time or the
    horizon when censored.
    """

    def __init__(self, hitting_times: np.ndarray, initial_values: np.ndarray,
                 final_values: np.ndarray, values: np.ndarray | None = None,
                 offsets: np.ndarray | None = None, max_steps: int | None = None):
        self.hitting_times = hitting_times
        self.initial_values = initial_values
        self.final_values = final_values
        self.values = values
        self.offsets = offsets
        self.max_steps = max_steps

    def __len__(self) -> int:
        return len(self.hitting_times)

    @property
    def recorded(self) -> bool:
        return self.values is not None

    @property
    def censored(self) -> np.ndarray:
        return self.hitting_times < 0

    @property
    def censored_count(self) -> int:
        return int(np.count_nonzero(self.censored))

    def path(self, i: int) -> np.ndarray:
        self._need_paths()
        return self.values[self.offsets[i]:self.offsets[i + 1]]

    def outcome(self, i: int) -> TrajectoryOutcome:
        t = int(self.hitting_times[i])
        path = tuple(float(v) for v in self.path(i)) if self.recorded else None
        return TrajectoryOutcome(None if t < 0 else t, float(self.final_values[i]), path)

    def outcomes(self) -> Iterator[TrajectoryOutcome]:
        return (self.outcome(i) for i in range(len(self)))

    def _need_paths(self):
        if not self.recorded:
            raise InvalidParameter("batch was simulated without record_paths", "record_paths")

    def _position_index(self) -> tuple[np.ndarray, np.ndarray]:
        lengths = np.diff(self.offsets)
        traj = np.repeat(np.arange(len(self)), lengths)
        t = np.arange(len(self.values)) - self.offsets[traj]
        return traj, t

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(trajectory_index, t, value)`` for every recorded path entry."""
        self._need_paths()
        traj, t = self._position_index()
        return traj, t, self.values

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(trajectory_index, t, X_t, X_{t+1})`` for every observed step with ``t < T``."""
        self._need_paths()
        traj, t = self._position_index()
        is_origin = np.ones(len(self.values), dtype=bool)
        is_origin[self.offsets[1:] - 1] = False
        pos = np.flatnonzero(is_origin)
        return traj[pos], t[pos], self.values[pos], self.values[pos + 1]

    def prestopping_mask(self) -> np.ndarray:
        """Entries with ``t < T``: everything except the stopping value itself."""
        self._need_paths()
        mask = np.ones(len(self.values), dtype=bool)
        stopped = np.flatnonzero(~self.censored)
        mask[self.offsets[stopped + 1] - 1] = False
        return mask

    def map_values(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "TrajectoryBatch":
        """Batch of the transformed process ``Y_t = fn(t, X_t)``, same stopping times."""
        self._need_paths()
        _, t = self._position_index()
        new = np.asarray(fn(t, self.values), dtype=np.float64)
        return TrajectoryBatch(self.hitting_times.copy(), new[self.offsets[:-1]],
                               new[self.offsets[1:] - 1], new, self.offsets.copy(),
                               self.max_steps)

    def dump_csv(self, path) -> None:
        traj, t, values = self.entries()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trajectory_index", "t", "value"])
            for row in zip(traj.tolist(), t.tolist(), values.tolist()):
                w.writerow((row[0], row[1], repr(row[2])))


def _simulate_chunk(spec: ProcessSpec, rule: StoppingRule, master: int, start: int, stop: int,
                    max_steps: int, record: bool):
    m = stop - start
    seeds = derive_seeds(master, np.arange(start, stop, dtype=np.uint64))
    state = np.full(m, spec.initial_state(), dtype=spec.state_dtype)
    val = np.array(spec.values(state), dtype=np.float64)
    x0 = val.copy()
    hit = np.full(m, -1, dtype=np.int64)
    final = np.empty(m, dtype=np.float64)
    done0 = rule.stopped(val)
    hit[done0] = 0
    final[done0] = val[done0]
    alive = np.flatnonzero(~done0)
    rec_idx = [np.arange(m)] if record else None
    rec_val = [val] if record else None
    t = 0
    while alive.size and t < max_steps:
        u = uniforms_at(seeds[alive], t)
        nxt = spec.next_states(state[alive], u)
        state[alive] = nxt
        v = np.asarray(spec.values(nxt), dtype=np.float64)
        if record:
            rec_idx.append(alive)
            rec_val.append(v)
        t += 1
        s = rule.stopped(v)
        if s.any():
            done = alive[s]
            hit[done] = t
            final[done] = v[s]
            alive = alive[~s]
    if alive.size:
        final[alive] = spec.values(state[alive])
    values = offsets = None
    if record:
        idx = np.concatenate(rec_idx)
        order = np.argsort(idx, kind="stable")
        values = np.concatenate(rec_val)[order]
        counts = np.bincount(idx, minlength=m)
        offsets = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
    return hit, x0, final, values, offsets


def simulate_batch(spec: ProcessSpec, rule: StoppingRule, config: SimulationConfig,
                   threads: int | None = None) -> TrajectoryBatch:
    validate_spec(spec)
    config.validate()
    n = config.trials
    chunks = [(a, min(a + CHUNK_SIZE, n)) for a in range(0, n, CHUNK_SIZE)]
    threads = worker_count() if threads is None else max(1, threads)

    def work(ab):
        return _simulate_chunk(spec, rule, int(config.master_seed), ab[0], ab[1],
                               config.max_steps, config.record_paths)

    if threads == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))

    hit = np.concatenate([p[0] for p in parts])
    x0 = np.concatenate([p[1] for p in parts])
    final = np.concatenate([p[2] for p in parts])
    values = offsets = None
    if config.record_paths:
        values = np.concatenate([p[3] for p in parts])
        pieces = [np.zeros(1, dtype=np.int64)]
        base = 0
        for p in parts:
            pieces.append(p[4][1:] + base)
            base += p[4][-1]
        offsets = np.concatenate(pieces)
    return TrajectoryBatch(hit, x0, final, values, offsets, config.max_steps)


def summarize(hitting_times: np.ndarray) -> HittingTimeEstimate:
    """Mean, standard error and normal 95% interval over uncensored samples."""
    hitting_times = np.asarray(hitting_times)
    done = hitting_times[hitting_times >= 0].astype(np.float64)
    censored = int(len(hitting_times) - len(done))
    if len(done) == 0:
        raise AllCensored(f"all {len(hitting_times)} trajectories were censored")
    mean = float(math.fsum(done) / len(done))
    if len(done) > 1:
        var = math.fsum((done - mean) ** 2) / (len(done) - 1)
        stderr = math.sqrt(var / len(done))
    else:
        stderr = 0.0
    return HittingTimeEstimate(mean, stderr, (mean - Z95 * stderr, mean + Z95 * stderr),
                               int(len(hitting_times)), censored)


def estimate_hitting_time(spec: ProcessSpec, rule: StoppingRule, config: SimulationConfig,
                          threads: int | None = None) -> HittingTimeEstimate:
    """Estimate ``E[T | X0]`` from ``config.trials`` independent trajectories.

    The mean over uncensored samples underestimates the true mean whenever
    censoring occurred; ``censored_count`` reports how many were cut off.
    """
    batch = simulate_batch(spec, rule, config, threads)
    return summarize(batch.hitting_times)
