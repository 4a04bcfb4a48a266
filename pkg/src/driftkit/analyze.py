"""Precondition checks, empirical martingale laws and the exact finite-chain oracle.

Checks look only at what happens before the stopping time: a transition
``X_t -> X_{t+1}`` is examined iff ``t < T``.  Conditions that are exact
statements about every observed value (nonnegativity, state bound,
deterministic step bound) use exact comparisons.  Conditions about
conditional expectations are estimated per state bin and only refuted when the
estimate misses by more than three standard errors.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bounds import (ABOVE_TARGET, ADDITIVE_DRIFT, ADDITIVE_DRIFT_UPPER, AZUMA_TAIL,
                     H_MONOTONE, MULTIPLICATIVE_DRIFT, NONNEGATIVITY, OPTIONAL_STOPPING,
                     START_AT_TARGET, STATE_BOUND, STEP_BOUND_DET, STEP_BOUND_EXP, THEOREMS,
                     VARIABLE_DRIFT, HFunction, LinearH, StepBoundMode, azuma_tail)
from .errors import (CensoredBatch, InvalidParameter, MissingCheck, NoTransitions,
                     PreconditionFailed, SingularSystem)
from .process import ADDITIVE_RULE, MarkovChainSpec, StoppingRule, validate_spec, MarkovChain
from .simulate import TrajectoryBatch

SLACK_SE = 3.0
DEFAULT_BINS = 20
DEFAULT_MIN_SAMPLES = 30
MAX_WITNESSES = 100
# rounding allowance for estimated conditions, relative to the largest |X_t| in play
FLOAT_RTOL = 1e-9


@dataclass(frozen=True)
class DriftBin:
    low: float
    high: float
    mean_decrease: float
    sample_count: int
    stderr: float

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "mean_decrease": self.mean_decrease,
                "sample_count": self.sample_count, "stderr": self.stderr}


@dataclass(frozen=True)
class DriftProfile:
    bins: tuple[DriftBin, ...]
    global_min_decrease: float
    min_samples: int
    pooled_stderr: float = 0.0
    scale: float = 1.0

    @property
    def qualifying(self) -> list[DriftBin]:
        return [b for b in self.bins if b.sample_count >= self.min_samples]

    @property
    def total_samples(self) -> int:
        return sum(b.sample_count for b in self.bins)

    def to_dict(self) -> dict:
        return {"bins": [b.to_dict() for b in self.bins],
                "global_min_decrease": self.global_min_decrease,
                "min_samples": self.min_samples, "pooled_stderr": self.pooled_stderr}


@dataclass
class CheckReport:
    """Outcome of one condition check.

    ``margin`` is the worst observed slack (negative when the raw estimate is on
    the wrong side); ``tolerance`` is the statistical allowance, so
    ``holds == (margin >= -tolerance)``.  Exact checks have tolerance 0.
    """

    condition: str
    holds: bool
    margin: float
    witnesses: list[tuple[int, int, float]] = field(default_factory=list)
    tolerance: float = 0.0
    statistical: bool = False
    vacuous: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        d = {"condition": self.condition, "holds": self.holds, "margin": self.margin,
             "tolerance": self.tolerance, "statistical": self.statistical,
             "witnesses": [list(w) for w in self.witnesses]}
        if self.vacuous:
            d["vacuous"] = True
        if self.note:
            d["note"] = self.note
        return d


@dataclass(frozen=True)
class ExactHittingTimes:
    per_state: tuple[float, ...]
    start_value: float
    start_state: int = 0

    @property
    def start_time(self) -> float:
        return self.per_state[self.start_state]

    def to_dict(self) -> dict:
        return {"per_state": [v if math.isfinite(v) else "Infinite" for v in self.per_state],
                "start_state": self.start_state, "start_value": self.start_value,
                "start_time": self.start_time if math.isfinite(self.start_time) else "Infinite"}


@dataclass(frozen=True)
class Applicability:
    theorem: str
    applicable: bool
    missing: tuple[str, ...]
    unchecked: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return THEOREMS[self.theorem].label

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "label": self.label, "applicable": self.applicable,
                "missing": list(self.missing), "unchecked": list(self.unchecked)}


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class _Binned:
    index: np.ndarray      # bin of every sample
    edges: np.ndarray
    count: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    var: np.ndarray


def _bin(x: np.ndarray, q: np.ndarray, bin_count: int) -> _Binned:
    lo, hi = float(x.min()), float(x.max())
    if hi > lo:
        width = (hi - lo) / bin_count
        idx = np.clip(((x - lo) / width).astype(np.int64), 0, bin_count - 1)
        edges = lo + width * np.arange(bin_count + 1)
        edges[-1] = hi
    else:
        idx = np.zeros(len(x), dtype=np.int64)
        edges = np.array([lo] + [hi] * bin_count)
    count = np.bincount(idx, minlength=bin_count)
    total = np.bincount(idx, weights=q, minlength=bin_count)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count
        dev2 = np.bincount(idx, weights=(q - mean[idx]) ** 2, minlength=bin_count)
        var = np.where(count > 1, dev2 / np.maximum(count - 1, 1), 0.0)
        stderr = np.sqrt(var / np.maximum(count, 1))
    return _Binned(idx, edges, count, mean, stderr, var)


def _witnesses(traj, t, value, mask) -> list[tuple[int, int, float]]:
    pos = np.flatnonzero(mask)[:MAX_WITNESSES]
    return [(int(traj[p]), int(t[p]), float(value[p])) for p in pos]


def _scale(*arrays) -> float:
    m = max((float(np.max(np.abs(a))) for a in arrays if len(a)), default=0.0)
    return max(1.0, m)


# ---------------------------------------------------------------------------
# drift estimation and drift checks


def estimate_drift(batch: TrajectoryBatch, bin_count: int = DEFAULT_BINS,
                   min_samples: int = DEFAULT_MIN_SAMPLES) -> DriftProfile:
    """Mean one-step decrease ``X_t - X_{t+1}`` in equal-width bins of ``X_t``.

    Only nonempty bins are kept.  Bins with fewer than ``min_samples``
    transitions do not count towards ``global_min_decrease`` (NaN when no bin
    qualifies).
    """
    if bin_count < 1 or min_samples < 1:
        raise InvalidParameter("bin_count and min_samples must be >= 1", "bin_count")
    _, _, x, y = batch.transitions()
    if len(x) == 0:
        raise NoTransitions("no pre-stopping transition was observed")
    b = _bin(x, x - y, bin_count)
    bins = tuple(DriftBin(float(b.edges[i]), float(b.edges[i + 1]), float(b.mean[i]),
                          int(b.count[i]), float(b.stderr[i]))
                 for i in range(bin_count) if b.count[i] > 0)
    ok = [i for i in range(bin_count) if b.count[i] >= min_samples]
    if ok:
        j = min(ok, key=lambda i: b.mean[i])
        dof = sum(int(b.count[i]) - 1 for i in ok)
        pooled_var = sum(b.var[i] * (b.count[i] - 1) for i in ok) / dof if dof > 0 else 0.0
        pooled_se = math.sqrt(pooled_var / b.count[j])
        gmin = float(b.mean[j])
    else:
        pooled_se, gmin = 0.0, math.nan
    return DriftProfile(bins, gmin, min_samples, pooled_se, _scale(x, y))


def check_additive_drift(profile: DriftProfile, delta: float) -> CheckReport:
    """Drift at least ``delta``: the smallest well-sampled bin mean may fall short
    of ``delta`` by at most three pooled standard errors."""
    if math.isnan(profile.global_min_decrease):
        return CheckReport(ADDITIVE_DRIFT, False, math.nan, statistical=True,
                           note=f"no bin reached {profile.min_samples} samples")
    margin = profile.global_min_decrease - delta
    tol = SLACK_SE * profile.pooled_stderr + FLOAT_RTOL * profile.scale
    return CheckReport(ADDITIVE_DRIFT, margin >= -tol, margin, tolerance=tol, statistical=True)


def check_additive_drift_upper(profile: DriftProfile, delta: float) -> CheckReport:
    """Drift at most ``delta`` in every well-sampled bin, up to three of its standard errors."""
    bins = profile.qualifying
    if not bins:
        return CheckReport(ADDITIVE_DRIFT_UPPER, False, math.nan, statistical=True,
                           note=f"no bin reached {profile.min_samples} samples")
    eps = FLOAT_RTOL * profile.scale
    worst = min(bins, key=lambda b: delta - b.mean_decrease + SLACK_SE * b.stderr)
    holds = all(b.mean_decrease <= delta + SLACK_SE * b.stderr + eps for b in bins)
    return CheckReport(ADDITIVE_DRIFT_UPPER, holds, delta - worst.mean_decrease,
                       tolerance=SLACK_SE * worst.stderr + eps, statistical=True)


def check_variable_drift(batch: TrajectoryBatch, h: HFunction, bin_count: int = DEFAULT_BINS,
                         min_samples: int = DEFAULT_MIN_SAMPLES,
                         condition: str = VARIABLE_DRIFT) -> CheckReport:
    """Drift at least ``h(X_t)``.

    Works on the excess ``X_t - X_{t+1} - h(X_t)``, whose conditional mean is
    nonnegative at every state when the condition holds, so its bin averages
    must be nonnegative up to three standard errors.
    """
    traj, t, x, y = batch.transitions()
    if len(x) == 0:
        return CheckReport(condition, True, 0.0, vacuous=True, statistical=True)
    excess = (x - y) - h.evaluate(x)
    b = _bin(x, excess, bin_count)
    ok = [i for i in range(bin_count) if b.count[i] >= min_samples]
    if not ok:
        return CheckReport(condition, False, math.nan, statistical=True,
                           note=f"no bin reached {min_samples} samples")
    eps = FLOAT_RTOL * _scale(x, y)
    bad = [i for i in ok if b.mean[i] < -(SLACK_SE * b.stderr[i] + eps)]
    j = min(ok, key=lambda i: b.mean[i] + SLACK_SE * b.stderr[i])
    mask = np.isin(b.index, bad) & (excess < 0)
    return CheckReport(condition, not bad, float(b.mean[j]), _witnesses(traj, t, x, mask),
                       tolerance=float(SLACK_SE * b.stderr[j] + eps), statistical=True)


def check_multiplicative_drift(batch: TrajectoryBatch, delta: float,
                               bin_count: int = DEFAULT_BINS,
                               min_samples: int = DEFAULT_MIN_SAMPLES) -> CheckReport:
    return check_variable_drift(batch, LinearH(delta), bin_count, min_samples,
                                condition=MULTIPLICATIVE_DRIFT)


def check_h_monotone(h: HFunction, x_min: float, x0: float) -> CheckReport:
    """``h`` nondecreasing and strictly positive on ``[x_min, x0]``."""
    margin = h.monotone_margin()
    low = h(x_min) if x_min >= h.domain_low else -math.inf
    holds = margin >= 0 and low > 0 and x_min >= h.domain_low
    note = "" if holds else f"monotone margin {margin}, h(x_min) = {low}"
    return CheckReport(H_MONOTONE, holds, min(margin, low) if low > 0 else low, note=note)


# ---------------------------------------------------------------------------
# exact path conditions


def check_nonnegativity(batch: TrajectoryBatch, floor: float = 0.0,
                        condition: str = NONNEGATIVITY) -> CheckReport:
    """Every recorded value up to and including ``X_T`` is ``>= floor``."""
    if len(batch) == 0:
        return CheckReport(condition, True, 0.0, vacuous=True)
    traj, t, v = batch.entries()
    bad = v < floor
    return CheckReport(condition, not bad.any(), float(v.min()) - floor,
                       _witnesses(traj, t, v, bad))


def check_above_target(batch: TrajectoryBatch, x_min: float) -> CheckReport:
    return check_nonnegativity(batch, x_min, ABOVE_TARGET)


def check_start_above_target(batch: TrajectoryBatch, x_min: float) -> CheckReport:
    if len(batch) == 0:
        return CheckReport(START_AT_TARGET, True, 0.0, vacuous=True)
    x0 = batch.initial_values
    bad = x0 < x_min
    idx = np.arange(len(x0))
    return CheckReport(START_AT_TARGET, not bad.any(), float(x0.min()) - x_min,
                       _witnesses(idx, np.zeros_like(idx), x0, bad))


def check_state_bound(batch: TrajectoryBatch, c: float) -> CheckReport:
    """Every value with ``t < T`` is ``<= c``."""
    traj, t, v = batch.entries()
    pre = batch.prestopping_mask()
    if not pre.any():
        return CheckReport(STATE_BOUND, True, 0.0, vacuous=True)
    bad = pre & (v > c)
    return CheckReport(STATE_BOUND, not bad.any(), c - float(v[pre].max()),
                       _witnesses(traj, t, v, bad))


def check_step_bound(batch: TrajectoryBatch, c: float,
                     mode: StepBoundMode | str = StepBoundMode.DETERMINISTIC,
                     bin_count: int = DEFAULT_BINS,
                     min_samples: int = DEFAULT_MIN_SAMPLES) -> CheckReport:
    """``|X_{t+1} - X_t| <= c`` for every step, or in conditional mean per state bin.

    Witness values are the offending step sizes.
    """
    mode = StepBoundMode(mode)
    traj, t, x, y = batch.transitions()
    cond = STEP_BOUND_DET if mode is StepBoundMode.DETERMINISTIC else STEP_BOUND_EXP
    if len(x) == 0:
        return CheckReport(cond, True, 0.0, vacuous=True,
                           statistical=mode is StepBoundMode.EXPECTED)
    size = np.abs(y - x)
    if mode is StepBoundMode.DETERMINISTIC:
        bad = size > c
        return CheckReport(cond, not bad.any(), c - float(size.max()),
                           _witnesses(traj, t, size, bad))
    b = _bin(x, size, bin_count)
    ok = [i for i in range(bin_count) if b.count[i] >= min_samples]
    if not ok:
        return CheckReport(cond, False, math.nan, statistical=True,
                           note=f"no bin reached {min_samples} samples")
    eps = FLOAT_RTOL * _scale(x, y)
    bad_bins = [i for i in ok if b.mean[i] > c + SLACK_SE * b.stderr[i] + eps]
    j = max(ok, key=lambda i: b.mean[i] - SLACK_SE * b.stderr[i])
    mask = np.isin(b.index, bad_bins) & (size > c)
    return CheckReport(cond, not bad_bins, float(c - b.mean[j]), _witnesses(traj, t, size, mask),
                       tolerance=float(SLACK_SE * b.stderr[j] + eps), statistical=True)


# ---------------------------------------------------------------------------
# theorem routing


def applicable_theorems(reports: Iterable[CheckReport], theorems: Sequence[str] | None = None,
                        allow_unchecked: bool = False) -> list[Applicability]:
    """Which theorems have all of their conditions confirmed by ``reports``.

    A condition with several reports holds only if every one of them holds.
    A condition without any report raises :class:`MissingCheck`, unless
    ``allow_unchecked`` is set, in which case the theorem is reported as not
    applicable with the condition listed under ``unchecked``.
    """
    status: dict[str, bool] = {}
    for r in reports:
        status[r.condition] = status.get(r.condition, True) and bool(r.holds)
    out = []
    for tid in (theorems if theorems is not None else list(THEOREMS)):
        conds = THEOREMS[tid].conditions
        absent = [c for c in conds if c not in status]
        if absent and not allow_unchecked:
            raise MissingCheck(tid, absent)
        missing = tuple(c for c in conds if c in status and not status[c])
        out.append(Applicability(tid, not missing and not absent, missing, tuple(absent)))
    return out


# ---------------------------------------------------------------------------
# exact finite-chain analysis


def _stopped_states(chain: MarkovChainSpec, rule: StoppingRule) -> np.ndarray:
    return rule.stopped(chain.values_array)


def _reach_backward(adj_rev: list[list[int]], sources: Iterable[int], n: int) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    queue = deque(sources)
    for s in queue:
        seen[s] = True
    while queue:
        j = queue.popleft()
        for i in adj_rev[j]:
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return seen


def exact_hitting_time_markov(chain: MarkovChainSpec,
                              rule: StoppingRule = ADDITIVE_RULE) -> ExactHittingTimes:
    """Expected hitting times of ``rule`` from every state, by a direct linear solve.

    Solves ``E_s = 1 + sum_j p_sj E_j`` over the live states.  States that can
    reach, with positive probability, a state from which the target is
    unreachable get ``inf``; they are found by graph search before solving.
    The diagonal of ``I - Q`` is formed as the off-diagonal row mass, which
    avoids cancellation in ``1 - p_ss``.
    """
    validate_spec(MarkovChain(chain))
    n = chain.n_states
    P = chain.matrix
    stopped = _stopped_states(chain, rule)
    rev: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        if stopped[i]:
            continue
        for j in np.flatnonzero(P[i] > 0):
            if j != i:
                rev[int(j)].append(i)
    reaches_target = _reach_backward(rev, np.flatnonzero(stopped).tolist(), n)
    trapped = np.flatnonzero(~reaches_target)
    infinite = _reach_backward(rev, trapped.tolist(), n) & ~stopped
    live = np.flatnonzero(~stopped & ~infinite)
    times = np.zeros(n)
    times[infinite] = math.inf
    if live.size:
        A = -P[np.ix_(live, live)]
        for k, s in enumerate(live):
            row = P[s]
            A[k, k] = math.fsum(row[j] for j in range(n) if j != s)
        try:
            sol = np.linalg.solve(A, np.ones(live.size))
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"linear system over {live.size} live states is singular") from exc
        if not np.all(np.isfinite(sol)):
            raise SingularSystem("linear solve produced non-finite times")
        times[live] = sol
    return ExactHittingTimes(tuple(float(v) for v in times),
                             chain.state_values[chain.start_state], chain.start_state)


def exact_drift_markov(chain: MarkovChainSpec, rule: StoppingRule = ADDITIVE_RULE) -> np.ndarray:
    """``value(s) - sum_j p_sj value(j)`` for live states, NaN for stopped ones."""
    v = chain.values_array
    drift = v - chain.matrix @ v
    drift[_stopped_states(chain, rule)] = np.nan
    return drift


# ---------------------------------------------------------------------------
# martingale laws


def empirical_optional_stopping(batch: TrajectoryBatch, direction: str = "super") -> CheckReport:
    """Compare the mean of ``X_T`` with the mean of ``X_0``.

    ``super``: ``mean X_T <= mean X_0`` up to three standard errors of the
    per-trajectory difference; ``sub``: the reverse.  ``margin`` is the signed
    gap in the direction that must be nonnegative.
    """
    if direction not in ("super", "sub"):
        raise InvalidParameter(f"direction must be 'super' or 'sub', got {direction!r}",
                               "direction")
    if batch.censored_count:
        raise CensoredBatch(f"{batch.censored_count} trajectories were censored")
    if len(batch) == 0:
        return CheckReport(OPTIONAL_STOPPING, True, 0.0, vacuous=True, statistical=True)
    diff = batch.final_values - batch.initial_values
    n = len(diff)
    mean_diff = math.fsum(diff) / n
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    margin = -mean_diff if direction == "super" else mean_diff
    tol = SLACK_SE * se + FLOAT_RTOL * _scale(batch.initial_values, batch.final_values)
    return CheckReport(OPTIONAL_STOPPING, margin >= -tol, margin, tolerance=tol, statistical=True,
                       note=f"mean X_0 = {math.fsum(batch.initial_values) / n!r}, "
                            f"mean X_T = {math.fsum(batch.final_values) / n!r}")


def empirical_azuma(batch: TrajectoryBatch, c: float, t: int, r: float,
                    bin_count: int = DEFAULT_BINS,
                    min_samples: int = DEFAULT_MIN_SAMPLES) -> CheckReport:
    """Observed frequency of ``X_t - X_0 >= r`` against ``azuma_tail(t, c, r)``.

    Trajectories that stopped before ``t`` contribute their stopped value.
    The step bound is checked as ``|X_{s+1} - X_s| <= c``.  Preconditions
    (step bound, nonnegative drift per bin) are verified first.  The binomial
    standard error is taken at the bound, ``sqrt(b (1 - b) / N)``.
    """
    bound = azuma_tail(t, c, r)
    step = check_step_bound(batch, c, StepBoundMode.DETERMINISTIC)
    if not step.holds:
        raise PreconditionFailed(f"step sizes exceed c={c}", [step])
    profile = estimate_drift(batch, bin_count, min_samples)
    eps = FLOAT_RTOL * profile.scale
    neg = [b for b in profile.qualifying if b.mean_decrease < -(SLACK_SE * b.stderr + eps)]
    if neg:
        raise PreconditionFailed("drift is negative in some state bin; not a supermartingale")
    lengths = np.diff(batch.offsets) - 1
    short = (lengths < t) & batch.censored
    if short.any():
        raise InvalidParameter(f"{int(short.sum())} censored paths are shorter than t={t}", "t")
    pos = batch.offsets[:-1] + np.minimum(lengths, t)
    dev = batch.values[pos] - batch.initial_values
    hit = dev >= r
    n = len(dev)
    freq = float(np.count_nonzero(hit)) / n
    se = math.sqrt(bound * (1.0 - bound) / n)
    idx = np.arange(n)
    return CheckReport(AZUMA_TAIL, freq <= bound + SLACK_SE * se, bound - freq,
                       _witnesses(idx, np.minimum(lengths, t), dev, hit),
                       tolerance=SLACK_SE * se, statistical=True,
                       note=f"frequency {freq!r}, bound {bound!r}")
