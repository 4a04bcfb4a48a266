"""Hitting-time bound formulas for additive, variable and multiplicative drift.

Variable drift bounds need the integral of ``1/h`` over ``[x_min, x0]``.  The
constant, linear and power families are integrated in closed form; monotone
piecewise-linear ``h`` goes through adaptive Simpson quadrature, one
segment at a time, so the integrand is smooth on every panel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import (EmptyOrInvertedInterval, InvalidParameter, NegativeStart,
                     NonmonotoneH, NonpositiveDelta, NonpositiveH, StartBelowTarget,
                     TargetNotPositive)
from .process import Mode

DEFAULT_TOL = 1e-10
MAX_DEPTH = 60
ALPHA_LOG_BRANCH = 1e-12


class Direction(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class Theorem:
    id: str
    label: str
    direction: Direction
    conditions: tuple[str, ...]


# condition ids shared with the analysis module
NONNEGATIVITY = "nonnegativity"
ADDITIVE_DRIFT = "additive-drift-delta"
ADDITIVE_DRIFT_UPPER = "additive-drift-upper-delta"
STATE_BOUND = "state-bound-c"
STEP_BOUND_DET = "step-bound-c-deterministic"
STEP_BOUND_EXP = "step-bound-c-expected"
START_AT_TARGET = "start-at-or-above-target"
ABOVE_TARGET = "at-or-above-target"
MULTIPLICATIVE_DRIFT = "multiplicative-drift-delta"
VARIABLE_DRIFT = "variable-drift-h"
H_MONOTONE = "h-monotone"
OPTIONAL_STOPPING = "optional-stopping"
AZUMA_TAIL = "azuma-tail"

THEOREMS: dict[str, Theorem] = {t.id: t for t in (
    Theorem("additive-upper-bounded", "Upper Additive Drift, Bounded", Direction.UPPER,
            (NONNEGATIVITY, ADDITIVE_DRIFT, STATE_BOUND)),
    Theorem("additive-upper-bounded-step", "Upper Additive Drift, Bounded Step Size",
            Direction.UPPER, (NONNEGATIVITY, ADDITIVE_DRIFT, STEP_BOUND_DET)),
    Theorem("additive-upper-unbounded", "Upper Additive Drift, Unbounded", Direction.UPPER,
            (NONNEGATIVITY, ADDITIVE_DRIFT)),
    Theorem("additive-lower-expected-step", "Lower Additive Drift, Expected Bounded Step Size",
            Direction.LOWER, (ADDITIVE_DRIFT_UPPER, STEP_BOUND_EXP)),
    Theorem("variable-upper-below", "Upper Variable Drift, Unbounded, Below Target",
            Direction.UPPER, (START_AT_TARGET, NONNEGATIVITY, H_MONOTONE, VARIABLE_DRIFT)),
    Theorem("variable-upper-hitting", "Upper Variable Drift, Unbounded, Hitting Target",
            Direction.UPPER, (ABOVE_TARGET, H_MONOTONE, VARIABLE_DRIFT)),
    Theorem("multiplicative-upper-below", "Upper Multiplicative Drift, Unbounded, Below Target",
            Direction.UPPER, (START_AT_TARGET, NONNEGATIVITY, MULTIPLICATIVE_DRIFT)),
    Theorem("multiplicative-upper-hitting", "Upper Multiplicative Drift, Unbounded, Hitting Target",
            Direction.UPPER, (ABOVE_TARGET, MULTIPLICATIVE_DRIFT)),
)}

ADDITIVE_UPPER_THEOREMS = ("additive-upper-bounded", "additive-upper-bounded-step",
                           "additive-upper-unbounded")


@dataclass(frozen=True)
class HittingTimeBound:
    value: float
    direction: Direction
    theorem: str
    assumed_preconditions: tuple[str, ...]

    @property
    def label(self) -> str:
        return THEOREMS[self.theorem].label

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "label": self.label, "direction": self.direction.value,
                "value": self.value, "assumed_preconditions": list(self.assumed_preconditions)}


def _bound(value: float, theorem: str) -> HittingTimeBound:
    t = THEOREMS[theorem]
    return HittingTimeBound(float(value), t.direction, theorem, t.conditions)


# ---------------------------------------------------------------------------
# drift functions h


class HFunction:
    """Monotonically increasing drift function ``h``.

    ``domain_low`` is the left end of the interval on which ``h`` is defined.
    """

    kind: str = ""
    domain_low: float = -math.inf

    def __call__(self, z: float) -> float:
        raise NotImplementedError

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return np.vectorize(self.__call__, otypes=[float])(z)

    def monotone_margin(self) -> float:
        """Smallest increment of ``h`` between consecutive knots (>= 0 iff monotone)."""
        return 0.0

    def antiderivative_reciprocal(self, a: float, b: float) -> float | None:
        """Closed-form integral of ``1/h`` over ``[a, b]``, or None when there is none."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantH(HFunction):
    delta: float
    kind = "constant"

    def __call__(self, z):
        return self.delta

    def evaluate(self, z):
        return np.full(np.shape(z), self.delta, dtype=float)

    def antiderivative_reciprocal(self, a, b):
        return (b - a) / self.delta

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True)
class LinearH(HFunction):
    """``h(z) = delta * z``."""

    delta: float
    kind = "linear"
    domain_low = 0.0

    def __call__(self, z):
        return self.delta * z

    def evaluate(self, z):
        return self.delta * np.asarray(z, dtype=float)

    def antiderivative_reciprocal(self, a, b):
        return math.log(b / a) / self.delta

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True)
class PowerH(HFunction):
    """``h(z) = c * z**alpha``."""

    c: float
    alpha: float
    kind = "power"
    domain_low = 0.0

    def __call__(self, z):
        return self.c * z ** self.alpha

    def evaluate(self, z):
        return self.c * np.asarray(z, dtype=float) ** self.alpha

    def antiderivative_reciprocal(self, a, b):
        e = 1.0 - self.alpha
        if abs(e) <= ALPHA_LOG_BRANCH:
            return math.log(b / a) / self.c
        if a == 0.0:
            # alpha < 1 here; the integrand is integrable at 0
            return b ** e / (self.c * e)
        # a^e * (exp(e ln(b/a)) - 1) / e, stable for e near 0 and b near a
        return a ** e * math.expm1(e * math.log(b / a)) / (self.c * e)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "alpha": self.alpha}


@dataclass(frozen=True)
class PiecewiseLinearH(HFunction):
    """Linear interpolation through ``knots``; constant beyond the last knot."""

    knots: tuple[tuple[float, float], ...]
    kind = "piecewise"

    def __post_init__(self):
        pts = tuple((float(z), float(v)) for z, v in self.knots)
        object.__setattr__(self, "knots", pts)

    @property
    def domain_low(self) -> float:
        return self.knots[0][0]

    @property
    def zs(self) -> np.ndarray:
        return np.array([z for z, _ in self.knots])

    @property
    def hs(self) -> np.ndarray:
        return np.array([v for _, v in self.knots])

    def __call__(self, z):
        pts = self.knots
        if z <= pts[0][0]:
            return pts[0][1]
        for (z0, h0), (z1, h1) in zip(pts, pts[1:]):
            if z <= z1:
                return h0 + (h1 - h0) * (z - z0) / (z1 - z0)
        return pts[-1][1]

    def evaluate(self, z):
        return np.interp(np.asarray(z, dtype=float), self.zs, self.hs)

    def monotone_margin(self):
        hs = self.hs
        return float(np.min(np.diff(hs))) if len(hs) > 1 else 0.0

    def segments(self, a: float, b: float):
        """Yield ``(lo, hi, h(lo), slope)`` pieces covering ``[a, b]``."""
        pts = self.knots
        breaks = [a] + [z for z, _ in pts if a < z < b] + [b]
        for lo, hi in zip(breaks, breaks[1:]):
            mid = 0.5 * (lo + hi)
            slope = 0.0
            for (z0, h0), (z1, h1) in zip(pts, pts[1:]):
                if z0 <= mid <= z1:
                    slope = (h1 - h0) / (z1 - z0)
                    break
            yield lo, hi, self(lo), slope

    def to_dict(self):
        return {"kind": self.kind, "knots": [list(k) for k in self.knots]}


def h_from_dict(data: dict) -> HFunction:
    kind = data.get("kind")
    if kind == "constant":
        return ConstantH(float(data["delta"]))
    if kind == "linear":
        return LinearH(float(data["delta"]))
    if kind == "power":
        return PowerH(float(data["c"]), float(data["alpha"]))
    if kind == "piecewise":
        return PiecewiseLinearH(tuple(tuple(k) for k in data["knots"]))
    raise InvalidParameter(f"unknown h kind {kind!r}", "h_kind")


def validate_h(h: HFunction) -> None:
    problems = []
    if isinstance(h, (ConstantH, LinearH)):
        if not (math.isfinite(h.delta) and h.delta > 0):
            problems.append(("delta", f"must be > 0, got {h.delta!r}"))
    elif isinstance(h, PowerH):
        if not (math.isfinite(h.c) and h.c > 0):
            problems.append(("c", f"must be > 0, got {h.c!r}"))
        if not (math.isfinite(h.alpha) and h.alpha >= 0):
            problems.append(("alpha", f"must be >= 0, got {h.alpha!r}"))
    elif isinstance(h, PiecewiseLinearH):
        zs = [z for z, _ in h.knots]
        if len(zs) < 1 or not all(math.isfinite(v) for k in h.knots for v in k):
            problems.append(("knots", "need at least one finite (z, h) pair"))
        elif any(z1 <= z0 for z0, z1 in zip(zs, zs[1:])):
            problems.append(("knots", "z values must be strictly increasing"))
        elif h.monotone_margin() < 0:
            raise NonmonotoneH("knot values must be nondecreasing in z", "knots")
    else:
        problems.append(("h", f"unsupported h {h!r}"))
    if problems:
        raise InvalidParameter(problems)


def _check_positive(h: HFunction, a: float, b: float) -> None:
    if a < h.domain_low:
        raise NonpositiveH(f"interval start {a} lies outside the domain of h "
                           f"(starts at {h.domain_low})", "h")
    # h is nondecreasing, so its minimum on [a, b] sits at a
    if not h(a) > 0:
        raise NonpositiveH(f"h({a}) = {h(a)} is not positive", "h")


class DriftKind(str, Enum):
    ADDITIVE_UPPER = "additive_upper"
    ADDITIVE_LOWER = "additive_lower"
    MULTIPLICATIVE = "multiplicative"
    VARIABLE = "variable"


class StepBoundMode(str, Enum):
    DETERMINISTIC = "deterministic"
    EXPECTED = "expected"


@dataclass(frozen=True)
class DriftHypothesis:
    """The drift condition a user claims for a process.

    ``delta`` is used by the additive and multiplicative kinds, ``h`` by the
    variable kind.  ``state_bound_c`` and ``step_bound_c`` feed the optional
    boundedness conditions; additive lower bounds require ``step_bound_c``.
    """

    kind: DriftKind
    delta: float | None = None
    h: HFunction | None = None
    state_bound_c: float | None = None
    step_bound_c: float | None = None
    step_bound_mode: StepBoundMode | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        mode = self.step_bound_mode
        if mode is None and self.step_bound_c is not None:
            mode = (StepBoundMode.EXPECTED if self.kind is DriftKind.ADDITIVE_LOWER
                    else StepBoundMode.DETERMINISTIC)
        object.__setattr__(self, "step_bound_mode", None if mode is None else StepBoundMode(mode))

    def violations(self) -> list[tuple[str, str]]:
        out = []
        if self.kind is DriftKind.VARIABLE:
            if self.h is None:
                out.append(("h_kind", "variable drift needs an h function"))
            else:
                try:
                    validate_h(self.h)
                except InvalidParameter as exc:
                    out.extend((f"h_{f}" if f else "h", m) for f, m in exc.violations)
        else:
            d = self.delta
            if d is None or not (math.isfinite(d) and d > 0):
                out.append(("delta", f"must be > 0, got {d!r}"))
        for name in ("state_bound_c", "step_bound_c"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                out.append((name, f"must be >= 0, got {v!r}"))
        if self.kind is DriftKind.ADDITIVE_LOWER and self.step_bound_c is None:
            out.append(("step_bound_c", "required for additive lower bounds"))
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.delta is not None:
            d["delta"] = self.delta
        if self.h is not None:
            d["h"] = self.h.to_dict()
        if self.state_bound_c is not None:
            d["state_bound_c"] = self.state_bound_c
        if self.step_bound_c is not None:
            d["step_bound_c"] = self.step_bound_c
            d["step_bound_mode"] = self.step_bound_mode.value
        return d


# ---------------------------------------------------------------------------
# quadrature


def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = DEFAULT_TOL, max_depth: int = MAX_DEPTH) -> float:
    """Integrate ``f`` over ``[a, b]`` to relative accuracy ``tol``.

    Panels are bisected until the two-half estimate agrees with the whole-panel
    estimate to within ``15 * eps`` (eps halves with every split), followed by
    one Richardson correction.  A panel that reaches ``max_depth`` is accepted
    as is and a ``RuntimeWarning`` is issued.  Accuracy is relative to the
    refined integral, not to the first one-panel estimate.
    """
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m, fm, whole = _simpson(f, a, fa, b, fb)
    scale = abs(whole)
    # the one-panel estimate can overshoot badly (1/z over a wide range), so
    # the tolerance is rescaled to the refined result until the two agree
    for _ in range(4):
        total, hit_cap = _simpson_pass(f, a, fa, b, fb, m, fm, whole,
                                       tol * scale if scale else tol, max_depth)
        if abs(total) >= 0.5 * scale or total == 0.0:
            break
        scale = abs(total)
    if hit_cap:
        warnings.warn("adaptive Simpson hit the bisection depth cap", RuntimeWarning)
    return total


def _simpson_pass(f, a, fa, b, fb, m, fm, whole, eps, max_depth):
    total = 0.0
    hit_cap = False
    stack = [(a, fa, b, fb, m, fm, whole, eps, 0)]
    while stack:
        a_, fa_, b_, fb_, m_, fm_, s, e, depth = stack.pop()
        lm, flm, left = _simpson(f, a_, fa_, m_, fm_)
        rm, frm, right = _simpson(f, m_, fm_, b_, fb_)
        diff = left + right - s
        if abs(diff) <= 15.0 * e or depth >= max_depth:
            hit_cap |= depth >= max_depth and abs(diff) > 15.0 * e
            total += left + right + diff / 15.0
        else:
            stack.append((m_, fm_, b_, fb_, rm, frm, right, 0.5 * e, depth + 1))
            stack.append((a_, fa_, m_, fm_, lm, flm, left, 0.5 * e, depth + 1))
    return total, hit_cap


def _doubling_panels(lo: float, hi: float, h_lo: float, slope: float):
    """Split ``[lo, hi]`` where the linear ``h`` doubles, so ``1/h`` varies by at most 2x
    on each panel."""
    if slope <= 0:
        return [(lo, hi)]
    cuts = [lo]
    z = lo + h_lo / slope
    while z < hi:
        cuts.append(z)
        z = lo + (2.0 * (h_lo + slope * (z - lo)) - h_lo) / slope
    cuts.append(hi)
    return list(zip(cuts, cuts[1:]))


def integrate_reciprocal(h: HFunction, a: float, b: float, tol: float = DEFAULT_TOL) -> float:
    """``integral_a^b 1/h(z) dz`` (closed form where available)."""
    if not a <= b:
        raise EmptyOrInvertedInterval(f"need a <= b, got a={a}, b={b}", "interval")
    if not tol > 0:
        raise InvalidParameter(f"must be > 0, got {tol}", "tol")
    _check_positive(h, a, b)
    if a == b:
        return 0.0
    closed = h.antiderivative_reciprocal(a, b)
    if closed is not None:
        return closed
    if math.isinf(b):
        return math.inf
    if isinstance(h, PiecewiseLinearH):
        total = 0.0
        for lo, hi, h_lo, slope in h.segments(a, b):
            for p, q in _doubling_panels(lo, hi, h_lo, slope):
                total += adaptive_simpson(
                    lambda z, h0=h_lo, s=slope, z0=lo: 1.0 / (h0 + s * (z - z0)), p, q, tol)
        return total
    return adaptive_simpson(lambda z: 1.0 / h(z), a, b, tol)


# ---------------------------------------------------------------------------
# bound formulas


def _require_delta(delta: float) -> None:
    if not (isinstance(delta, (int, float, np.floating, np.integer)) and delta > 0
            and math.isfinite(delta)):
        raise NonpositiveDelta(f"must be > 0, got {delta!r}", "delta")


def additive_upper(x0: float, delta: float,
                   theorem: str = "additive-upper-unbounded") -> HittingTimeBound:
    """``E[T | X0] <= x0 / delta`` for a nonnegative process with drift at least delta."""
    _require_delta(delta)
    if theorem not in ADDITIVE_UPPER_THEOREMS:
        raise InvalidParameter(f"not an additive upper-bound theorem: {theorem!r}", "theorem")
    if x0 < 0:
        raise NegativeStart(f"must be >= 0, got {x0!r}", "x0")
    return _bound(x0 / delta, theorem)


def additive_lower(x0: float, delta: float) -> HittingTimeBound:
    """``E[T | X0] >= x0 / delta`` given drift at most delta and bounded expected steps.

    A start at or below zero gives the trivial bound 0.
    """
    _require_delta(delta)
    return _bound(max(0.0, x0 / delta), "additive-lower-expected-step")


def _require_target(x0, x_min, *, strict: bool) -> None:
    if strict and not x_min > 0:
        raise TargetNotPositive(f"must be > 0, got {x_min!r}", "x_min")
    if not strict and not x_min >= 0:
        raise TargetNotPositive(f"must be >= 0, got {x_min!r}", "x_min")
    if x0 < x_min:
        raise StartBelowTarget(f"x0={x0!r} lies below x_min={x_min!r}", "x0")


def variable_upper_below(x0: float, x_min: float, h: HFunction,
                         tol: float = DEFAULT_TOL) -> HittingTimeBound:
    _require_target(x0, x_min, strict=True)
    validate_h(h)
    value = x_min / h(x_min) if h(x_min) > 0 else math.nan
    value += integrate_reciprocal(h, x_min, x0, tol)
    return _bound(value, "variable-upper-below")


def variable_upper_hitting(x0: float, x_min: float, h: HFunction,
                           tol: float = DEFAULT_TOL) -> HittingTimeBound:
    _require_target(x0, x_min, strict=False)
    validate_h(h)
    if x0 == x_min:
        return _bound(0.0, "variable-upper-hitting")
    return _bound(integrate_reciprocal(h, x_min, x0, tol), "variable-upper-hitting")


def multiplicative_upper_below(x0: float, x_min: float, delta: float) -> HittingTimeBound:
    _require_delta(delta)
    _require_target(x0, x_min, strict=True)
    return _bound((1.0 + math.log(x0 / x_min)) / delta, "multiplicative-upper-below")


def multiplicative_upper_hitting(x0: float, x_min: float, delta: float) -> HittingTimeBound:
    _require_delta(delta)
    _require_target(x0, x_min, strict=True)
    return _bound(math.log(x0 / x_min) / delta, "multiplicative-upper-hitting")


# ---------------------------------------------------------------------------
# potential function


class PotentialFunction:
    """Rescaling ``g`` that turns drift ``h(x)`` into drift at least 1.

    Below mode: ``g(x) = 0`` for ``x < x_min``, otherwise
    ``x_min / h(x_min) + integral_{x_min}^x 1/h``.
    Hitting mode: ``g(x) = 0`` for ``x <= x_min``, otherwise the integral alone.

    For piecewise-linear ``h`` the integral up to each knot is cached, so an
    evaluation only integrates the final partial segment.
    """

    def __init__(self, h: HFunction, x_min: float, mode: Mode = Mode.BELOW,
                 tol: float = DEFAULT_TOL):
        validate_h(h)
        self.h = h
        self.x_min = float(x_min)
        self.mode = Mode(mode)
        self.tol = tol
        _check_positive(h, self.x_min, self.x_min)
        self.offset = self.x_min / h(self.x_min) if self.mode is Mode.BELOW else 0.0
        self._knots: list[float] = []
        self._prefix: list[float] = []
        if isinstance(h, PiecewiseLinearH):
            acc = 0.0
            prev = self.x_min
            for z, _ in h.knots:
                if z > self.x_min:
                    acc += integrate_reciprocal(h, prev, z, tol)
                    self._knots.append(z)
                    self._prefix.append(acc)
                    prev = z

    def _integral(self, x: float) -> float:
        if not self._knots:
            return integrate_reciprocal(self.h, self.x_min, x, self.tol)
        i = int(np.searchsorted(self._knots, x, side="right")) - 1
        if i < 0:
            return integrate_reciprocal(self.h, self.x_min, x, self.tol)
        return self._prefix[i] + integrate_reciprocal(self.h, self._knots[i], x, self.tol)

    def __call__(self, x: float) -> float:
        if self.mode is Mode.BELOW and x < self.x_min:
            return 0.0
        if self.mode is Mode.AT_OR_BELOW and x <= self.x_min:
            return 0.0
        return self.offset + self._integral(x)


def potential_transform(h: HFunction, x_min: float, mode: Mode | str = Mode.BELOW,
                        tol: float = DEFAULT_TOL) -> PotentialFunction:
    """``mode`` is ``"below"`` or ``"hitting"`` (``"at_or_below"`` is accepted as hitting)."""
    if mode == "hitting":
        mode = Mode.AT_OR_BELOW
    return PotentialFunction(h, x_min, Mode(mode), tol)


# ---------------------------------------------------------------------------
# concentration


def azuma_tail(t: int, c: float, r: float) -> float:
    """``min(1, exp(-r^2 / (2 t c^2)))``."""
    problems = []
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)) or t < 1:
        problems.append(("t", f"must be an integer >= 1, got {t!r}"))
    if not (math.isfinite(c) and c > 0):
        problems.append(("c", f"must be > 0, got {c!r}"))
    if not (math.isfinite(r) and r > 0):
        problems.append(("r", f"must be > 0, got {r!r}"))
    if problems:
        raise InvalidParameter(problems)
    return min(1.0, math.exp(-r * r / (2.0 * t * c * c)))


def bounds_for(hypothesis: DriftHypothesis, x0: float, x_min: float, mode: Mode,
               tol: float = DEFAULT_TOL) -> list[HittingTimeBound]:
    """Every bound whose conclusion follows from ``hypothesis`` for this target."""
    kind = hypothesis.kind
    mode = Mode(mode)
    if kind is DriftKind.ADDITIVE_UPPER:
        return [additive_upper(x0, hypothesis.delta, t) for t in ADDITIVE_UPPER_THEOREMS]
    if kind is DriftKind.ADDITIVE_LOWER:
        return [additive_lower(x0, hypothesis.delta)]
    if kind is DriftKind.MULTIPLICATIVE:
        if mode is Mode.BELOW:
            return [multiplicative_upper_below(x0, x_min, hypothesis.delta)]
        return [multiplicative_upper_hitting(x0, x_min, hypothesis.delta)]
    if mode is Mode.BELOW:
        return [variable_upper_below(x0, x_min, hypothesis.h, tol)]
    return [variable_upper_hitting(x0, x_min, hypothesis.h, tol)]
