"""Small documented input/output pairs for each public operation."""

import math

import numpy as np
import pytest

from driftkit.analyze import (applicable_theorems, check_additive_drift, check_nonnegativity,
                              check_state_bound, check_step_bound, empirical_azuma,
                              estimate_drift, exact_drift_markov, exact_hitting_time_markov)
from driftkit.bounds import (ConstantH, LinearH, PiecewiseLinearH, PowerH, additive_lower,
                             additive_upper, azuma_tail, integrate_reciprocal,
                             multiplicative_upper_below, multiplicative_upper_hitting,
                             variable_upper_below, variable_upper_hitting)
from driftkit.errors import InvalidParameter
from driftkit.process import (ADDITIVE_RULE, BiasedWalk, DeterministicDecrease, Example1,
                              Example2, Example3, MarkovChainSpec, Mode, StoppingRule,
                              builtin_example, step, to_markov_chain, validate_spec)
from driftkit.rng import RngStream
from driftkit.simulate import (SimulationConfig, TrajectoryBatch, estimate_hitting_time,
                               run_trajectory, simulate_batch)

UNIT_CHAIN = MarkovChainSpec([0, 1, 2, 3], [[1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0],
                                            [0, 0, 1, 0]], 3)


def paths(spec, rule=ADDITIVE_RULE, trials=10_000, max_steps=10**6, seed=42):
    return simulate_batch(spec, rule, SimulationConfig(trials, max_steps, seed, True))


def test_parameter_ranges():
    validate_spec(Example1(10))
    for bad in (Example3(1.0, 5.0), Example3(0.0, 5.0), Example2(1.0)):
        with pytest.raises(InvalidParameter):
            validate_spec(bad)


def test_single_steps():
    rng = RngStream(1)
    assert step(DeterministicDecrease(2.0, 10.0), 10.0, rng) == 8.0
    assert step(Example3(0.5, 8.0), 8.0, rng) == 4.0
    spec = Example1(4)
    draws = [step(spec, 1.0, RngStream(3, i)) for i in range(40_000)]
    assert set(draws) == {1.0, -3.0}
    assert draws.count(-3.0) / len(draws) == pytest.approx(0.25, abs=0.01)


def test_builtin_starts():
    assert builtin_example("example1", n=20).x0 == 1.0
    assert builtin_example("example2", delta=0.5).x0 == 2.0


def test_additive_examples():
    assert additive_upper(10, 1).value == 10
    assert additive_upper(1, 1).value == 1
    assert additive_upper(0, 5).value == 0
    assert additive_lower(2, 0.5).value == 4
    assert additive_lower(0, 1).value == 0
    assert additive_lower(100, 2).value == 50


def test_variable_and_multiplicative_examples():
    assert variable_upper_below(10, 1, ConstantH(2)).value == pytest.approx(5.0)
    assert variable_upper_below(1, 1, LinearH(0.25)).value == pytest.approx(4.0)
    assert variable_upper_hitting(10, 0, ConstantH(0.5)).value == pytest.approx(20.0)
    assert variable_upper_hitting(math.e, 1, PowerH(1, 1)).value == pytest.approx(1.0)
    assert multiplicative_upper_below(3, 3, 0.2).value == pytest.approx(5.0)
    assert multiplicative_upper_hitting(2 * math.e, 2, 1).value == pytest.approx(1.0)
    assert multiplicative_upper_hitting(4, 4, 1).value == 0.0


def test_integration_examples():
    assert integrate_reciprocal(ConstantH(2), 1, 5) == 2.0
    assert integrate_reciprocal(LinearH(0.5), 1, math.e) == pytest.approx(2.0)
    zs = np.linspace(1, math.e, 9)
    h = PiecewiseLinearH(tuple((z, z) for z in zs))
    assert abs(integrate_reciprocal(h, 1, math.e, tol=1e-10) - 1.0) <= 1e-10


def test_azuma_examples():
    assert azuma_tail(8, 1, 4) == pytest.approx(0.36787944117144233, rel=1e-15)
    assert azuma_tail(8, 1, 1e-12) == pytest.approx(1.0)


def test_run_trajectory_examples():
    assert run_trajectory(DeterministicDecrease(2, 10), ADDITIVE_RULE, RngStream(0)).hitting_time == 5
    out = run_trajectory(Example3(0.5, 8), StoppingRule(1, Mode.BELOW), RngStream(0), record=True)
    assert out.hitting_time == 4 and out.path == (8.0, 4.0, 2.0, 1.0, 0.5)
    # a draw of at least 1/n keeps Example 1 at 1, so one step is not enough
    i = next(i for i in range(100) if RngStream(5, i).uniform() >= 0.1)
    assert run_trajectory(Example1(10), ADDITIVE_RULE, RngStream(5, i), max_steps=1).censored


def test_estimate_examples():
    est = estimate_hitting_time(DeterministicDecrease(1, 10), ADDITIVE_RULE,
                                SimulationConfig(trials=100))
    assert (est.mean, est.stderr) == (10.0, 0.0)
    est = estimate_hitting_time(Example1(10), ADDITIVE_RULE,
                                SimulationConfig(trials=100_000, max_steps=10_000))
    assert est.within(10.0)
    est = estimate_hitting_time(Example2(0.5), ADDITIVE_RULE, SimulationConfig(trials=100_000))
    assert est.within(2.0)


def test_drift_profiles():
    prof = estimate_drift(paths(DeterministicDecrease(1, 10), trials=100))
    assert all(b.mean_decrease == 1.0 for b in prof.bins)
    ex1 = estimate_drift(paths(Example1(10)))
    at_one = next(b for b in ex1.bins if b.low <= 1.0 <= b.high)
    assert abs(at_one.mean_decrease - 1.0) <= 3 * at_one.stderr
    walk = estimate_drift(paths(BiasedWalk(20, 0.6, 10), trials=5000), bin_count=19)
    interior = [b for b in walk.qualifying if 1 <= b.low and b.high <= 18]
    assert interior
    assert all(abs(b.mean_decrease - 0.2) <= 4 * b.stderr for b in interior)


def test_additive_drift_margins():
    prof = estimate_drift(paths(DeterministicDecrease(1, 10), trials=100))
    ok = check_additive_drift(prof, 1.0)
    assert ok.holds and ok.margin == 0.0
    bad = check_additive_drift(prof, 2.0)
    assert not bad.holds and bad.margin == -1.0
    walk = estimate_drift(paths(BiasedWalk(6, 0.6, 3), trials=20_000))
    assert check_additive_drift(walk, 0.2).holds


def test_nonnegativity_examples():
    assert check_nonnegativity(paths(Example3(0.1, 1000), StoppingRule(1, Mode.BELOW), 5)).holds
    rep = check_nonnegativity(paths(Example1(10)))
    assert not rep.holds and {w[2] for w in rep.witnesses} == {-9.0}
    empty = TrajectoryBatch(np.array([], dtype=np.int64), np.array([]), np.array([]),
                            np.array([]), np.zeros(1, dtype=np.int64))
    rep = check_nonnegativity(empty)
    assert rep.holds and rep.vacuous and rep.margin == 0


def test_step_bound_examples():
    assert check_step_bound(paths(DeterministicDecrease(1, 10), trials=10), 1.0).holds
    ex2 = check_step_bound(paths(Example2(0.5)), 3.0, "deterministic")
    assert not ex2.holds and all(w[2] > 3.0 for w in ex2.witnesses)
    assert check_step_bound(paths(Example1(10)), 10.0, "deterministic").holds


def test_state_bound_examples():
    assert check_state_bound(paths(BiasedWalk(6, 0.6, 3), trials=2000), 5).holds
    rep = check_state_bound(paths(Example2(0.5), trials=50_000), 100)
    assert not rep.holds and all(w[2] > 100 for w in rep.witnesses)
    assert check_state_bound(paths(DeterministicDecrease(1, 10), trials=10), 10).holds


def test_theorem_routing_for_deterministic_decrease():
    b = paths(DeterministicDecrease(1, 10), trials=100)
    reports = [check_nonnegativity(b), check_additive_drift(estimate_drift(b), 1.0),
               check_state_bound(b, 10), check_step_bound(b, 1.0)]
    table = applicable_theorems(reports, ["additive-upper-bounded", "additive-upper-bounded-step",
                                          "additive-upper-unbounded"])
    assert all(a.applicable and not a.missing for a in table)


def test_exact_examples():
    assert exact_hitting_time_markov(UNIT_CHAIN).start_time == 3.0
    assert exact_hitting_time_markov(to_markov_chain(Example1(10))).start_time == 10.0
    walk = exact_hitting_time_markov(to_markov_chain(BiasedWalk(6, 0.6, 3))).start_time
    assert 5.0 <= walk <= 15.0
    assert walk == pytest.approx(11.872427983539096, rel=1e-12)


def test_exact_drift_examples():
    d = exact_drift_markov(UNIT_CHAIN)
    assert math.isnan(d[0]) and d[1:].tolist() == [1.0, 1.0, 1.0]
    walk = exact_drift_markov(to_markov_chain(BiasedWalk(6, 0.6, 3)))
    assert walk[1:5] == pytest.approx([0.2] * 4)
    ex1 = exact_drift_markov(to_markov_chain(Example1(10)))
    assert ex1[0] == pytest.approx(1.0)


def test_azuma_on_decreasing_process():
    b = paths(DeterministicDecrease(1, 10), trials=50, max_steps=20)
    rep = empirical_azuma(b, 1.0, 20, 3.0)
    assert rep.holds and rep.margin == azuma_tail(20, 1.0, 3.0)
    rep = empirical_azuma(b, 1.0, 5, 6.0)
    assert rep.holds and rep.margin > 0
