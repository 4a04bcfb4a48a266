"""Experiment configs, the verification pipeline and report serialization.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines.  Values are JSON literals (numbers, ``true``/``false``, quoted
strings, nested lists) or bare words, which are read as strings.  The
sections are ``process``, ``rule``, ``hypothesis``, ``simulation`` and
``outputs``; any other section or key is an error.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import re
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import __version__
from .analyze import (Applicability, CheckReport, ExactHittingTimes, applicable_theorems,
                      check_above_target, check_additive_drift, check_additive_drift_upper,
                      check_h_monotone, check_multiplicative_drift, check_nonnegativity,
                      check_start_above_target, check_state_bound, check_step_bound,
                      check_variable_drift, estimate_drift, exact_hitting_time_markov)
from .bounds import (ADDITIVE_DRIFT, ADDITIVE_DRIFT_UPPER, ADDITIVE_UPPER_THEOREMS, DriftHypothesis,
                     DriftKind, HittingTimeBound, StepBoundMode, bounds_for, h_from_dict)
from .errors import (DriftkitError, InvalidParameter, NoTransitions, ParseError,
                     ValidationError)
from .process import (Example1, Example2, Example3, Mode, ProcessSpec, StoppingRule,
                      process_from_dict, to_markov_chain)
from .simulate import (HittingTimeEstimate, SimulationConfig, TrajectoryBatch, simulate_batch,
                       summarize)

SECTIONS = {
    "process": ("family", "n", "delta", "x0", "p_down", "n_states", "start", "state_values",
                "transition_rows"),
    "rule": ("x_min", "mode"),
    "hypothesis": ("kind", "delta", "state_bound_c", "step_bound_c", "step_bound_mode",
                   "h_kind", "h_delta", "h_c", "h_alpha", "h_knots"),
    "simulation": ("trials", "max_steps", "seed", "record_paths"),
    "outputs": ("report_path", "format", "dump_paths"),
}
FORMATS = ("json", "csv")
MAX_ORACLE_STATES = 2000
SIG_DIGITS = 12
DEFAULT_DELTA = 1.0


@dataclass(frozen=True)
class OutputConfig:
    report_path: str | None = None
    format: str = "json"
    dump_paths: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    process: ProcessSpec
    rule: StoppingRule = field(default_factory=StoppingRule)
    hypothesis: DriftHypothesis = field(
        default_factory=lambda: DriftHypothesis(DriftKind.ADDITIVE_UPPER, delta=DEFAULT_DELTA))
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        """Cross-section constraints; each failure names the offending field."""
        for f, msg in self.hypothesis.violations():
            raise ValidationError(f"hypothesis.{f}", msg)
        for f, msg in self.simulation.violations():
            raise ValidationError(f"simulation.{f}", msg)
        if not math.isfinite(self.rule.x_min):
            raise ValidationError("rule.x_min", "must be finite")
        kind = self.hypothesis.kind
        rule = self.rule
        if kind in (DriftKind.ADDITIVE_UPPER, DriftKind.ADDITIVE_LOWER):
            if rule.x_min != 0 or rule.mode is not Mode.AT_OR_BELOW:
                raise ValidationError("rule.x_min", "additive drift needs x_min = 0, mode at_or_below")
        else:
            strict = kind is DriftKind.MULTIPLICATIVE or rule.mode is Mode.BELOW
            if strict and not rule.x_min > 0:
                raise ValidationError("rule.x_min", "must be > 0 for this hypothesis")
            if rule.x_min < 0:
                raise ValidationError("rule.x_min", "must be >= 0")
            if self.process.x0 < rule.x_min:
                raise ValidationError("process.x0", f"start {self.process.x0} lies below x_min")
        if self.outputs.format not in FORMATS:
            raise ValidationError("outputs.format", f"must be one of {FORMATS}")

    def to_dict(self) -> dict:
        return {"process": self.process.to_dict(), "rule": self.rule.to_dict(),
                "hypothesis": self.hypothesis.to_dict(), "simulation": self.simulation.to_dict()}


# ---------------------------------------------------------------------------
# parsing


def _locate(text: str, section: str | None, key: str | None) -> tuple[int | None, int | None]:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no, line.index("[") + 1
            continue
        if key is not None and current == section:
            m = re.match(r"(\s*)([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and m.group(2).strip().lower() == key:
                return no, len(m.group(1)) + 1
    return None, None


def _value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if len(raw) >= 2 and raw[0] == raw[-1] == "'":
            return raw[1:-1]
        return raw


def _number(section: str, key: str, v, *, integer: bool = False):
    bad = isinstance(v, bool) or not isinstance(v, (int, float))
    if integer and (bad or not float(v).is_integer()):
        raise ValidationError(f"{section}.{key}", f"expected an integer, got {v!r}")
    if bad:
        raise ValidationError(f"{section}.{key}", f"expected a number, got {v!r}")
    return int(v) if integer else float(v)


def _flag(section: str, key: str, v) -> bool:
    if not isinstance(v, bool):
        raise ValidationError(f"{section}.{key}", f"expected true or false, got {v!r}")
    return v


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document.

    Raises :class:`ParseError` (with line and column) for malformed text and
    unknown sections or keys, and :class:`ValidationError` naming
    ``section.key`` for out-of-range values.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00defaults",
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", exc.lineno, 1) from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno, 1) from exc
    except configparser.DuplicateOptionError as exc:
        line, col = _locate(text, exc.section, exc.option)
        raise ParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, col) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line.strip()!r}", lineno, 1) from exc

    data: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        if section not in SECTIONS:
            line, col = _locate(text, section, None)
            raise ParseError(f"unknown section [{section}]; expected one of "
                             f"{', '.join(SECTIONS)}", line, col)
        data[section] = {}
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                line, col = _locate(text, section, key)
                raise ParseError(f"unknown key {key!r} in [{section}]", line, col)
            data[section][key] = _value(raw)

    if "process" not in data or "family" not in data["process"]:
        raise ValidationError("process.family", "a [process] section with a family is required")
    proc = dict(data["process"])
    for k in ("n", "n_states", "start"):
        if k in proc:
            proc[k] = _number("process", k, proc[k], integer=True)
    for k in ("delta", "x0", "p_down"):
        if k in proc:
            proc[k] = _number("process", k, proc[k])
    try:
        process = process_from_dict(proc)
    except InvalidParameter as exc:
        f, msg = exc.violations[0]
        raise ValidationError(f"process.{f or 'family'}", msg) from exc
    except DriftkitError as exc:
        raise ValidationError("process.family", str(exc)) from exc

    r = data.get("rule", {})
    mode = r.get("mode", Mode.AT_OR_BELOW.value)
    if mode not in {m.value for m in Mode}:
        raise ValidationError("rule.mode", f"expected 'below' or 'at_or_below', got {mode!r}")
    rule = StoppingRule(_number("rule", "x_min", r.get("x_min", 0.0)), Mode(mode))

    hypothesis = _parse_hypothesis(data.get("hypothesis", {}))

    s = data.get("simulation", {})
    sim = SimulationConfig(
        trials=_number("simulation", "trials", s.get("trials", SimulationConfig.trials), integer=True),
        max_steps=_number("simulation", "max_steps", s.get("max_steps", SimulationConfig.max_steps),
                          integer=True),
        master_seed=_number("simulation", "seed", s.get("seed", SimulationConfig.master_seed),
                            integer=True),
        record_paths=_flag("simulation", "record_paths", s.get("record_paths", False)),
    )

    o = data.get("outputs", {})
    report_path = o.get("report_path")
    if report_path is not None and not isinstance(report_path, str):
        raise ValidationError("outputs.report_path", "expected a path string")
    outputs = OutputConfig(report_path, str(o.get("format", "json")),
                           _flag("outputs", "dump_paths", o.get("dump_paths", False)))

    config = ExperimentConfig(process, rule, hypothesis, sim, outputs)
    config.validate()
    return config


def _parse_hypothesis(h: dict) -> DriftHypothesis:
    kind = h.get("kind", DriftKind.ADDITIVE_UPPER.value)
    if kind not in {k.value for k in DriftKind}:
        raise ValidationError("hypothesis.kind",
                              f"expected one of {[k.value for k in DriftKind]}, got {kind!r}")
    kind = DriftKind(kind)
    hf = None
    if kind is DriftKind.VARIABLE:
        hk = h.get("h_kind")
        spec: dict[str, Any] = {"kind": hk}
        needed = {"constant": ("h_delta",), "linear": ("h_delta",), "power": ("h_c", "h_alpha"),
                  "piecewise": ("h_knots",)}
        if hk not in needed:
            raise ValidationError("hypothesis.h_kind",
                                  f"expected one of {list(needed)}, got {hk!r}")
        for key in needed[hk]:
            if key not in h:
                raise ValidationError(f"hypothesis.{key}", "required for this h_kind")
            if key == "h_knots":
                knots = h[key]
                if not (isinstance(knots, list) and all(
                        isinstance(k, list) and len(k) == 2 for k in knots)):
                    raise ValidationError("hypothesis.h_knots", "expected [[z, h], ...]")
                spec["knots"] = [[_number("hypothesis", "h_knots", a) for a in k] for k in knots]
            else:
                spec[key[2:]] = _number("hypothesis", key, h[key])
        hf = h_from_dict(spec)
    else:
        h = dict(h)
        h["delta"] = _number("hypothesis", "delta", h.get("delta", DEFAULT_DELTA))
    opt = {k: _number("hypothesis", k, h[k]) for k in ("state_bound_c", "step_bound_c") if k in h}
    mode = h.get("step_bound_mode")
    if mode is not None and mode not in {m.value for m in StepBoundMode}:
        raise ValidationError("hypothesis.step_bound_mode",
                              f"expected 'deterministic' or 'expected', got {mode!r}")
    hyp = DriftHypothesis(kind, h.get("delta"), hf, opt.get("state_bound_c"),
                          opt.get("step_bound_c"), mode)
    for f, msg in hyp.violations():
        raise ValidationError(f"hypothesis.{f}", msg)
    return hyp


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Report:
    config: dict
    bounds: list[HittingTimeBound] = field(default_factory=list)
    estimate: HittingTimeEstimate | None = None
    checks: list[CheckReport] = field(default_factory=list)
    applicability: list[Applicability] = field(default_factory=list)
    oracle: ExactHittingTimes | None = None
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def applicable(self, theorem: str) -> bool:
        return any(a.theorem == theorem and a.applicable for a in self.applicability)

    def to_dict(self) -> dict:
        table = {a.theorem: a for a in self.applicability}
        bounds = []
        for b in self.bounds:
            d = b.to_dict()
            a = table.get(b.theorem)
            d["applicable"] = bool(a and a.applicable)
            d["unchecked"] = list(a.unchecked) if a else list(b.assumed_preconditions)
            bounds.append(d)
        out = {
            "config": self.config,
            "bounds": bounds,
            "estimate": self.estimate.to_dict() if self.estimate else None,
            "checks": [c.to_dict() for c in self.checks],
            "applicability": [a.to_dict() for a in self.applicability],
            "oracle": self.oracle.to_dict() if self.oracle else None,
            "warnings": list(self.warnings),
            "metadata": dict(self.metadata),
        }
        return _round(out)


def _round(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "Infinite" if obj > 0 else "-Infinite"
        return float(f"{obj:.{SIG_DIGITS}g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _drift_profile(batch: TrajectoryBatch):
    try:
        return estimate_drift(batch)
    except NoTransitions:
        return None


def _vacuous(condition: str) -> CheckReport:
    return CheckReport(condition, True, 0.0, vacuous=True, statistical=True)


def run_checks(batch: TrajectoryBatch, hypothesis: DriftHypothesis, rule: StoppingRule,
               x0: float) -> list[CheckReport]:
    """Every precondition check referenced by the bounds of ``hypothesis``."""
    kind = hypothesis.kind
    checks: list[CheckReport] = []
    if kind is DriftKind.ADDITIVE_UPPER:
        profile = _drift_profile(batch)
        checks.append(check_nonnegativity(batch))
        checks.append(check_additive_drift(profile, hypothesis.delta) if profile
                      else _vacuous(ADDITIVE_DRIFT))
        if hypothesis.state_bound_c is not None:
            checks.append(check_state_bound(batch, hypothesis.state_bound_c))
        if hypothesis.step_bound_c is not None:
            checks.append(check_step_bound(batch, hypothesis.step_bound_c,
                                           hypothesis.step_bound_mode))
    elif kind is DriftKind.ADDITIVE_LOWER:
        profile = _drift_profile(batch)
        checks.append(check_additive_drift_upper(profile, hypothesis.delta) if profile
                      else _vacuous(ADDITIVE_DRIFT_UPPER))
        checks.append(check_step_bound(batch, hypothesis.step_bound_c, StepBoundMode.EXPECTED))
    else:
        if rule.mode is Mode.BELOW:
            checks.append(check_start_above_target(batch, rule.x_min))
            checks.append(check_nonnegativity(batch))
        else:
            checks.append(check_above_target(batch, rule.x_min))
        if kind is DriftKind.MULTIPLICATIVE:
            checks.append(check_multiplicative_drift(batch, hypothesis.delta))
        else:
            checks.append(check_h_monotone(hypothesis.h, rule.x_min, x0))
            checks.append(check_variable_drift(batch, hypothesis.h))
    return checks


def finite_chain_oracle(process: ProcessSpec, rule: StoppingRule) -> ExactHittingTimes | None:
    """Exact hitting times when ``process`` has a small finite chain encoding."""
    try:
        chain = to_markov_chain(process, rule, max_states=MAX_ORACLE_STATES)
    except InvalidParameter:
        return None
    if chain.n_states > MAX_ORACLE_STATES:
        return None
    return exact_hitting_time_markov(chain, rule)


def compute_bounds(config: ExperimentConfig) -> list[HittingTimeBound]:
    return bounds_for(config.hypothesis, config.process.x0, config.rule.x_min, config.rule.mode)


def run_experiment(config: ExperimentConfig, threads: int | None = None,
                   batch: TrajectoryBatch | None = None) -> tuple[Report, TrajectoryBatch]:
    """Bounds, simulation, precondition checks, applicability table and oracle.

    Bounds whose preconditions fail stay in the report, marked not applicable.
    The simulated batch (with recorded paths) is returned alongside.
    """
    started = time.perf_counter()
    config.validate()
    bounds = compute_bounds(config)
    sim = replace(config.simulation, record_paths=True)
    if batch is None:
        batch = simulate_batch(config.process, config.rule, sim, threads)
    estimate = summarize(batch.hitting_times)
    checks = run_checks(batch, config.hypothesis, config.rule, config.process.x0)
    table = applicable_theorems(checks, [b.theorem for b in bounds], allow_unchecked=True)
    report = Report(config.to_dict(), bounds, estimate, checks, table,
                    finite_chain_oracle(config.process, config.rule))
    if estimate.censored_count:
        report.warnings.append(
            f"CENSORED: {estimate.censored_count} of {estimate.trials} trajectories reached "
            f"max_steps={sim.max_steps}; the mean is a lower estimate of E[T]")
    for a in table:
        if a.unchecked:
            report.warnings.append(f"{a.theorem}: unchecked conditions {list(a.unchecked)}")
    report.metadata = _metadata(config, started)
    return report, batch


def _metadata(config: ExperimentConfig, started: float) -> dict:
    return {"master_seed": config.simulation.master_seed, "tool_version": __version__,
            "wall_time_s": time.perf_counter() - started}


def bound_report(config: ExperimentConfig) -> Report:
    started = time.perf_counter()
    bounds = compute_bounds(config)
    table = applicable_theorems([], [b.theorem for b in bounds], allow_unchecked=True)
    return Report(config.to_dict(), bounds, applicability=table,
                  metadata=_metadata(config, started))


def simulate_report(config: ExperimentConfig,
                    threads: int | None = None) -> tuple[Report, TrajectoryBatch]:
    started = time.perf_counter()
    batch = simulate_batch(config.process, config.rule, config.simulation, threads)
    estimate = summarize(batch.hitting_times)
    report = Report(config.to_dict(), estimate=estimate, metadata=_metadata(config, started))
    if estimate.censored_count:
        report.warnings.append(
            f"CENSORED: {estimate.censored_count} of {estimate.trials} trajectories reached "
            f"max_steps={config.simulation.max_steps}; the mean is a lower estimate of E[T]")
    return report, batch


def oracle_report(config: ExperimentConfig) -> Report:
    started = time.perf_counter()
    chain = to_markov_chain(config.process, config.rule)
    oracle = exact_hitting_time_markov(chain, config.rule)
    return Report(config.to_dict(), oracle=oracle, metadata=_metadata(config, started))


# ---------------------------------------------------------------------------
# serialization


def report_json(report: Report, include_wall_time: bool = True) -> str:
    d = report.to_dict()
    if not include_wall_time:
        d["metadata"].pop("wall_time_s", None)
    return json.dumps(d, indent=2) + "\n"


def report_rows(report: Report) -> list[tuple[str, str, str, Any]]:
    """Flat ``(section, name, field, value)`` rows over the numeric report fields."""
    d = report.to_dict()
    rows = []
    for b in d["bounds"]:
        for f in ("value", "direction", "applicable"):
            rows.append(("bound", b["theorem"], f, b[f]))
    if d["estimate"]:
        e = d["estimate"]
        for f in ("mean", "stderr", "trials", "censored_count"):
            rows.append(("estimate", "", f, e[f]))
        rows.append(("estimate", "", "ci95_low", e["ci95"][0]))
        rows.append(("estimate", "", "ci95_high", e["ci95"][1]))
    for c in d["checks"]:
        for f in ("holds", "margin", "tolerance"):
            rows.append(("check", c["condition"], f, c[f]))
    for a in d["applicability"]:
        rows.append(("applicability", a["theorem"], "applicable", a["applicable"]))
        rows.append(("applicability", a["theorem"], "missing", ";".join(a["missing"])))
    if d["oracle"]:
        for i, v in enumerate(d["oracle"]["per_state"]):
            rows.append(("oracle", f"state_{i}", "time", v))
    for k, v in d["metadata"].items():
        rows.append(("metadata", "", k, v))
    return rows


def report_csv(report: Report, include_wall_time: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "name", "field", "value"])
    for row in report_rows(report):
        if not include_wall_time and row[2] == "wall_time_s":
            continue
        v = row[3]
        w.writerow(row[:3] + (repr(v) if isinstance(v, float) else
                              json.dumps(v) if isinstance(v, bool) or v is None else v,))
    return buf.getvalue()


def render(report: Report, fmt: str = "json") -> str:
    return report_csv(report) if fmt == "csv" else report_json(report)


# ---------------------------------------------------------------------------
# counterexample suite


@dataclass(frozen=True)
class CounterexampleResult:
    name: str
    expected: str
    observed: str
    passed: bool


def iterate_until_below(x0: Fraction, factor: Fraction, x_min: Fraction) -> int:
    """Steps of ``x <- factor * x`` until ``x < x_min``, in exact arithmetic."""
    x, t = x0, 0
    while not x < x_min:
        x *= factor
        t += 1
    return t


def run_counterexamples(trials: int = 100_000, seed: int = 42, threads: int | None = None,
                        n: int = 10, delta2: float = 0.5, delta3: float = 0.1,
                        x0_3: float = 1000.0) -> list[CounterexampleResult]:
    sim = SimulationConfig(trials, 1_000_000, seed, True)
    results = []

    cfg1 = ExperimentConfig(Example1(n), StoppingRule(),
                            DriftHypothesis(DriftKind.ADDITIVE_UPPER, delta=1.0, state_bound_c=1.0,
                                            step_bound_c=float(n)), sim)
    rep1, _ = run_experiment(cfg1, threads)
    exact = rep1.oracle.start_time
    refused = [a for a in rep1.applicability if a.theorem in ADDITIVE_UPPER_THEOREMS]
    ok1 = (exact == n and rep1.estimate.within(n)
           and len(refused) == 3
           and all(not a.applicable and a.missing == ("nonnegativity",) for a in refused))
    results.append(CounterexampleResult(
        f"example1 (n={n})",
        f"E[T]={n}; additive upper bound 1 refused: nonnegativity",
        f"exact {exact:g}, simulated {rep1.estimate.mean:.4f} +/- {rep1.estimate.stderr:.4f}; "
        f"refused: {sorted({c for a in refused for c in a.missing})}",
        ok1))

    c2 = 2.0 - delta2
    cfg2 = ExperimentConfig(Example2(delta2), StoppingRule(),
                            DriftHypothesis(DriftKind.ADDITIVE_LOWER, delta=delta2, step_bound_c=c2),
                            sim)
    rep2, _ = run_experiment(cfg2, threads)
    a2 = rep2.applicability[0]
    ok2 = rep2.estimate.within(2.0) and not a2.applicable and a2.missing == ("step-bound-c-expected",)
    results.append(CounterexampleResult(
        f"example2 (delta={delta2:g})",
        f"E[T]=2; lower bound {2 / delta2:g} refused: step-bound-c-expected",
        f"simulated {rep2.estimate.mean:.4f} +/- {rep2.estimate.stderr:.4f}; "
        f"refused: {list(a2.missing)}",
        ok2))

    cfg3 = ExperimentConfig(Example3(delta3, x0_3), StoppingRule(1.0, Mode.BELOW),
                            DriftHypothesis(DriftKind.MULTIPLICATIVE, delta=delta3),
                            replace(sim, trials=1))
    rep3, _ = run_experiment(cfg3, threads)
    t_exact = iterate_until_below(Fraction(x0_3), 1 - Fraction(delta3).limit_denominator(10**9),
                                  Fraction(1))
    t_sim = rep3.estimate.mean
    bound = rep3.bounds[0].value
    ratio = bound / t_sim if t_sim else math.inf
    ok3 = t_sim == t_exact and bound >= t_sim and 1.0 <= ratio <= 3.0 and rep3.applicable(
        "multiplicative-upper-below")
    results.append(CounterexampleResult(
        f"example3 (delta={delta3:g}, x0={x0_3:g})",
        f"T={t_exact}; bound >= T with bound/T in [1, 3]",
        f"T={t_sim:g}, bound {bound:.4f}, ratio {ratio:.3f}",
        ok3))
    return results
