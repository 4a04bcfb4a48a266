"""Random-process data model: built-in families, finite chains and one-step dynamics.

A process is a closed set of parameterized families plus finite Markov chains.
Every family is Markovian: the next state depends only on the current state and
one uniform draw, which keeps simulation vectorizable and the exact chain
oracle applicable.

Each step consumes exactly one uniform from the trajectory's stream, also for
deterministic families, so draw ``k`` always drives transition ``k -> k + 1``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, ClassVar, Mapping

import numpy as np

from .errors import InvalidParameter, NonStochasticRow, UnknownFamily
from .rng import RngStream

ROW_SUM_TOL = 1e-12


class Mode(str, Enum):
    BELOW = "below"
    AT_OR_BELOW = "at_or_below"


@dataclass(frozen=True)
class StoppingRule:
    """Target ``x_min`` and whether reaching it means ``<`` or ``<=``."""

    x_min: float = 0.0
    mode: Mode = Mode.AT_OR_BELOW

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "x_min", float(self.x_min))

    def is_stopped(self, value: float) -> bool:
        if self.mode is Mode.BELOW:
            return value < self.x_min
        return value <= self.x_min

    def stopped(self, values: np.ndarray) -> np.ndarray:
        if self.mode is Mode.BELOW:
            return values < self.x_min
        return values <= self.x_min

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "mode": self.mode.value}


ADDITIVE_RULE = StoppingRule(0.0, Mode.AT_OR_BELOW)


def is_stopped(rule: StoppingRule, value: float) -> bool:
    return rule.is_stopped(value)


def _is_real(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) \
        and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


class ProcessSpec:
    """Base class of all process families.

    States are plain floats for the value-valued families and integer indices
    for finite chains; :meth:`value` maps a state to the real value ``X_t``.
    """

    family: ClassVar[str] = ""

    def violations(self) -> list[tuple[str, str]]:
        raise NotImplementedError

    def initial_state(self):
        return float(self.x0)

    def value(self, state) -> float:
        return float(state)

    def values(self, states: np.ndarray) -> np.ndarray:
        return states

    def next_state(self, state, u: float):
        raise NotImplementedError

    def next_states(self, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def state_dtype(self):
        return np.float64

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DeterministicDecrease(ProcessSpec):
    """``X_{t+1} = X_t - delta``."""

    delta: float
    x0: float
    family: ClassVar[str] = "deterministic"

    def violations(self):
        out = []
        if not _is_real(self.delta) or self.delta <= 0:
            out.append(("delta", f"must be > 0, got {self.delta!r}"))
        if not _is_real(self.x0) or self.x0 < 0:
            out.append(("x0", f"must be >= 0, got {self.x0!r}"))
        return out

    def next_state(self, state, u):
        return state - self.delta

    def next_states(self, states, u):
        return states - self.delta

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "x0": self.x0}


@dataclass(frozen=True)
class Example1(ProcessSpec):
    """Starts at 1; stays with probability 1 - 1/n, else jumps to -n + 1."""

    n: int
    family: ClassVar[str] = "example1"

    @property
    def x0(self) -> float:
        return 1.0

    def violations(self):
        if not _is_int(self.n) or self.n <= 1:
            return [("n", f"must be an integer > 1, got {self.n!r}")]
        return []

    def next_state(self, state, u):
        return float(1 - self.n) if u < 1.0 / self.n else state

    def next_states(self, states, u):
        return np.where(u < 1.0 / self.n, float(1 - self.n), states)

    def to_dict(self):
        return {"family": self.family, "n": self.n}


@dataclass(frozen=True)
class Example2(ProcessSpec):
    """Starts at 2; drops to 0 with probability 1/2, else moves to ``2 X_t - 2 delta``."""

    delta: float
    family: ClassVar[str] = "example2"

    @property
    def x0(self) -> float:
        return 2.0

    def violations(self):
        if not _is_real(self.delta) or not 0 < self.delta < 1:
            return [("delta", f"must lie in the open interval (0, 1), got {self.delta!r}")]
        return []

    def next_state(self, state, u):
        return 0.0 if u < 0.5 else 2.0 * state - 2.0 * self.delta

    def next_states(self, states, u):
        return np.where(u < 0.5, 0.0, 2.0 * states - 2.0 * self.delta)

    def to_dict(self):
        return {"family": self.family, "delta": self.delta}


@dataclass(frozen=True)
class Example3(ProcessSpec):
    """``X_{t+1} = (1 - delta) X_t`` from ``x0 > 1``."""

    delta: float
    x0: float
    family: ClassVar[str] = "example3"

    def violations(self):
        out = []
        if not _is_real(self.delta) or not 0 < self.delta < 1:
            out.append(("delta", f"must lie in the open interval (0, 1), got {self.delta!r}"))
        if not _is_real(self.x0) or self.x0 <= 1:
            out.append(("x0", f"must be > 1, got {self.x0!r}"))
        return out

    def next_state(self, state, u):
        return (1.0 - self.delta) * state

    def next_states(self, states, u):
        return (1.0 - self.delta) * states

    def to_dict(self):
        return {"family": self.family, "delta": self.delta, "x0": self.x0}


@dataclass(frozen=True)
class BiasedWalk(ProcessSpec):
    """Walk on ``{0, ..., n_states - 1}``.

    Moves down with probability ``p_down`` and up otherwise.  An up move from
    the top state stays put and state 0 is absorbing.
    """

    n_states: int
    p_down: float
    start: int
    family: ClassVar[str] = "biased_walk"

    @property
    def x0(self) -> float:
        return float(self.start)

    def violations(self):
        out = []
        if not _is_int(self.n_states) or self.n_states < 2:
            out.append(("n_states", f"must be an integer >= 2, got {self.n_states!r}"))
        if not _is_real(self.p_down) or not 0 < self.p_down < 1:
            out.append(("p_down", f"must lie in the open interval (0, 1), got {self.p_down!r}"))
        if not _is_int(self.start) or (
                _is_int(self.n_states) and not 0 <= self.start < self.n_states):
            out.append(("start", f"must be an integer state index, got {self.start!r}"))
        return out

    def next_state(self, state, u):
        if state <= 0:
            return state
        if u < self.p_down:
            return state - 1.0
        return min(state + 1.0, float(self.n_states - 1))

    def next_states(self, states, u):
        moved = np.where(u < self.p_down, states - 1.0,
                         np.minimum(states + 1.0, float(self.n_states - 1)))
        return np.where(states <= 0, states, moved)

    def to_dict(self):
        return {"family": self.family, "n_states": self.n_states,
                "p_down": self.p_down, "start": self.start}


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    """Finite chain: the value of each state, a row-stochastic matrix, a start index."""

    state_values: tuple
    transition_rows: tuple
    start_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "state_values", tuple(float(v) for v in self.state_values))
        object.__setattr__(self, "transition_rows",
                           tuple(tuple(float(p) for p in row) for row in self.transition_rows))

    def __eq__(self, other):
        return (isinstance(other, MarkovChainSpec)
                and self.state_values == other.state_values
                and self.transition_rows == other.transition_rows
                and self.start_state == other.start_state)

    def __hash__(self):
        return hash((self.state_values, self.transition_rows, self.start_state))

    @property
    def n_states(self) -> int:
        return len(self.state_values)

    def violations(self) -> list[tuple[str, str]]:
        out = []
        n = len(self.state_values)
        if n == 0:
            out.append(("state_values", "must contain at least one state"))
        if not all(math.isfinite(v) for v in self.state_values):
            out.append(("state_values", "must all be finite"))
        if len(self.transition_rows) != n:
            out.append(("transition_rows", f"expected {n} rows, got {len(self.transition_rows)}"))
        for i, row in enumerate(self.transition_rows):
            if len(row) != n:
                out.append((f"transition_rows[{i}]", f"expected {n} entries, got {len(row)}"))
                continue
            if any(not (0.0 <= p <= 1.0) for p in row):
                out.append((f"transition_rows[{i}]", "entries must lie in [0, 1]"))
            s = math.fsum(row)
            if abs(s - 1.0) > ROW_SUM_TOL:
                out.append((f"transition_rows[{i}]", f"row sums to {s!r}, not 1"))
        if not _is_int(self.start_state) or not 0 <= self.start_state < max(n, 1):
            out.append(("start", f"must be a state index in [0, {n}), got {self.start_state!r}"))
        return out

    @cached_property
    def values_array(self) -> np.ndarray:
        return np.asarray(self.state_values, dtype=np.float64)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.transition_rows, dtype=np.float64)

    @cached_property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.matrix, axis=1)

    @cached_property
    def _cumulative_lists(self) -> list[list[float]]:
        return [list(map(float, row)) for row in self.cumulative]

    @cached_property
    def last_positive(self) -> np.ndarray:
        m = self.matrix
        return np.array([int(np.flatnonzero(row > 0)[-1]) for row in m], dtype=np.int64)

    def sample(self, state: int, u: float) -> int:
        j = bisect.bisect_right(self._cumulative_lists[state], u)
        return min(j, int(self.last_positive[state]))


@dataclass(frozen=True)
class MarkovChain(ProcessSpec):
    chain: MarkovChainSpec
    family: ClassVar[str] = "markov"

    def violations(self):
        return self.chain.violations()

    @property
    def x0(self) -> float:
        return self.chain.state_values[self.chain.start_state]

    def initial_state(self):
        return int(self.chain.start_state)

    def value(self, state) -> float:
        return self.chain.state_values[int(state)]

    def values(self, states):
        return self.chain.values_array[states]

    @property
    def state_dtype(self):
        return np.int64

    def next_state(self, state, u):
        return self.chain.sample(int(state), u)

    def next_states(self, states, u):
        out = np.empty_like(states)
        cum = self.chain.cumulative
        last = self.chain.last_positive
        for s in np.unique(states):
            sel = states == s
            j = np.searchsorted(cum[s], u[sel], side="right")
            out[sel] = np.minimum(j, last[s])
        return out

    def to_dict(self):
        return {"family": self.family,
                "state_values": list(self.chain.state_values),
                "transition_rows": [list(r) for r in self.chain.transition_rows],
                "start": self.chain.start_state}


def validate_spec(spec: ProcessSpec) -> None:
    """Raise if any parameter constraint of ``spec`` is broken.

    All violations are collected into one exception.  If any of them is a
    transition row that does not sum to one, :class:`NonStochasticRow` is
    raised, otherwise :class:`InvalidParameter`.
    """
    problems = spec.violations()
    if not problems:
        return
    if any("sums to" in msg for _, msg in problems):
        raise NonStochasticRow(problems)
    raise InvalidParameter(problems)


def step(spec: ProcessSpec, current, rng: RngStream):
    """Sample the successor of ``current``; chains take and return state indices."""
    return spec.next_state(current, rng.uniform())


FAMILIES = ("example1", "example2", "example3", "deterministic", "biased_walk", "markov")

PARAM_FIELDS = {
    "example1": ("n",),
    "example2": ("delta",),
    "example3": ("delta", "x0"),
    "deterministic": ("delta", "x0"),
    "biased_walk": ("n_states", "p_down", "start"),
    "markov": ("state_values", "transition_rows", "start"),
}


def _build(name: str, params: Mapping[str, Any]) -> ProcessSpec:
    missing = [k for k in PARAM_FIELDS[name] if k not in params and not (name == "markov" and k == "start")]
    if missing:
        raise InvalidParameter([(k, "required parameter missing") for k in missing])
    extra = sorted(set(params) - set(PARAM_FIELDS[name]))
    if extra:
        raise InvalidParameter([(k, f"not a parameter of family {name!r}") for k in extra])
    p = params
    if name == "example1":
        return Example1(p["n"])
    if name == "example2":
        return Example2(p["delta"])
    if name == "example3":
        return Example3(p["delta"], p["x0"])
    if name == "deterministic":
        return DeterministicDecrease(p["delta"], p["x0"])
    if name == "biased_walk":
        return BiasedWalk(p["n_states"], p["p_down"], p["start"])
    try:
        chain = MarkovChainSpec(p["state_values"], p["transition_rows"], p.get("start", 0))
    except (TypeError, ValueError) as exc:
        raise InvalidParameter(f"malformed chain: {exc}", "transition_rows") from exc
    return MarkovChain(chain)


def builtin_example(name: str, params: Mapping[str, Any] | None = None, **kwargs) -> ProcessSpec:
    """Build and validate a process of family ``name``.

    >>> builtin_example("example1", n=20).x0
    1.0
    """
    if name not in FAMILIES:
        raise UnknownFamily(f"unknown process family {name!r}; expected one of {', '.join(FAMILIES)}")
    merged = dict(params or {})
    merged.update(kwargs)
    spec = _build(name, merged)
    validate_spec(spec)
    return spec


def process_from_dict(data: Mapping[str, Any]) -> ProcessSpec:
    data = dict(data)
    name = data.pop("family", None)
    if name is None:
        raise InvalidParameter("required parameter missing", "family")
    return builtin_example(name, data)


def to_markov_chain(spec: ProcessSpec, rule: StoppingRule = ADDITIVE_RULE,
                    max_states: int = 100_000) -> MarkovChainSpec:
    """Finite-chain encoding of ``spec`` relative to ``rule``.

    Deterministic families are unrolled until they stop; Example 1 becomes a
    two-state chain.  Example 2 has infinitely many reachable values and is
    rejected.
    """
    validate_spec(spec)
    if isinstance(spec, MarkovChain):
        return spec.chain
    if isinstance(spec, Example1):
        p = 1.0 / spec.n
        return MarkovChainSpec([1.0, float(1 - spec.n)], [[1.0 - p, p], [0.0, 1.0]], 0)
    if isinstance(spec, BiasedWalk):
        n = spec.n_states
        rows = [[0.0] * n for _ in range(n)]
        rows[0][0] = 1.0
        for s in range(1, n):
            rows[s][s - 1] += spec.p_down
            rows[s][min(s + 1, n - 1)] += 1.0 - spec.p_down
        return MarkovChainSpec([float(s) for s in range(n)], rows, spec.start)
    if isinstance(spec, (DeterministicDecrease, Example3)):
        values = [spec.x0]
        while not rule.is_stopped(values[-1]):
            if len(values) >= max_states:
                raise InvalidParameter(f"more than {max_states} states before stopping", "x0")
            values.append(spec.next_state(values[-1], 0.0))
        n = len(values)
        rows = [[0.0] * n for _ in range(n)]
        for s in range(n - 1):
            rows[s][s + 1] = 1.0
        rows[-1][-1] = 1.0
        return MarkovChainSpec(values, rows, 0)
    raise InvalidParameter(f"family {spec.family!r} has no finite chain encoding", "family")
