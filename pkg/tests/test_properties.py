import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from driftkit.analyze import exact_drift_markov, exact_hitting_time_markov
from driftkit.bounds import (ConstantH, LinearH, PiecewiseLinearH, PowerH, additive_upper,
                             azuma_tail, potential_transform, variable_upper_below,
                             variable_upper_hitting)
from driftkit.process import (ADDITIVE_RULE, BiasedWalk, DeterministicDecrease, Example1,
                              Example3, MarkovChain, MarkovChainSpec, Mode, StoppingRule,
                              to_markov_chain)
from driftkit.rng import MASK64, derive_seed, derive_seeds, uniforms_at
from driftkit.simulate import SimulationConfig, estimate_hitting_time, simulate_batch

scipy_stats = pytest.importorskip("scipy.stats")
pos = st.floats(1e-3, 1e3)


def test_example1_single_step_law():
    u = uniforms_at(derive_seeds(11, np.arange(100_000, dtype=np.uint64)), 0)
    nxt = Example1(10).next_states(np.ones(len(u)), u)
    frac = np.mean(nxt == -9.0)
    assert abs(frac - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / len(u))


@given(st.floats(0.01, 0.99), st.floats(1.001, 1e6))
def test_example3_paths_decrease_and_stay_positive(delta, x0):
    batch = simulate_batch(Example3(delta, x0), StoppingRule(1.0, Mode.BELOW),
                           SimulationConfig(trials=1, record_paths=True))
    p = batch.path(0)
    assert np.all(np.diff(p) < 0) and np.all(p > 0)


def test_markov_step_frequencies_chi_square():
    chain = MarkovChainSpec([0, 1, 2, 3], [[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25],
                                           [0.7, 0.0, 0.2, 0.1], [0.0, 0.0, 0.05, 0.95]], 0)
    spec = MarkovChain(chain)
    m = 100_000
    for s in range(4):
        u = uniforms_at(derive_seeds(100 + s, np.arange(m, dtype=np.uint64)), 0)
        counts = np.bincount(spec.next_states(np.full(m, s, dtype=np.int64), u), minlength=4)
        probs = np.array(chain.transition_rows[s])
        keep = probs > 0
        assert np.all(counts[~keep] == 0)
        assert scipy_stats.chisquare(counts[keep], m * probs[keep]).pvalue > 0.001


def test_seed_collisions():
    rng = np.random.default_rng(0)
    masters = rng.integers(0, 2**63, size=1000, dtype=np.uint64)
    seeds = np.concatenate([derive_seeds(int(s), np.arange(1000, dtype=np.uint64))
                            for s in masters])
    assert len(np.unique(seeds)) == len(seeds) == 10**6


def test_seed_avalanche():
    rng = random.Random(0)
    flips = []
    for _ in range(10_000):
        master, index, bit = rng.getrandbits(64), rng.randrange(10**9), rng.randrange(64)
        a = derive_seed(master, index)
        b = derive_seed(master ^ (1 << bit), index)
        flips.append(bin(a ^ b).count("1"))
    assert 24 <= sum(flips) / len(flips) <= 40
    assert derive_seed(MASK64, 0) == derive_seed(MASK64, 0)


@pytest.mark.parametrize("spec,rule", [
    (Example1(6), ADDITIVE_RULE),
    (BiasedWalk(9, 0.5, 4), ADDITIVE_RULE),
    (Example3(0.3, 50.0), StoppingRule(1.0, Mode.BELOW)),
    (MarkovChain(MarkovChainSpec([0, 2, 1], [[1, 0, 0], [0.2, 0.3, 0.5], [0.4, 0.6, 0]], 1)),
     StoppingRule(1.0, Mode.AT_OR_BELOW)),
])
def test_stopping_minimality(spec, rule):
    batch = simulate_batch(spec, rule, SimulationConfig(2000, 60, 5, True))
    for i in range(len(batch)):
        p = batch.path(i)
        t = batch.hitting_times[i]
        stopped = rule.stopped(p)
        if t >= 0:
            assert len(p) == t + 1 and stopped[-1] and not stopped[:-1].any()
        else:
            assert not stopped.any()


@given(st.floats(0.01, 10), st.floats(0, 100))
@settings(max_examples=50, deadline=None)
def test_deterministic_estimate_consistency(delta, x0):
    steps = max(1, math.ceil(x0 / delta) + 1)
    est = estimate_hitting_time(DeterministicDecrease(delta, x0), ADDITIVE_RULE,
                                SimulationConfig(trials=20, max_steps=steps))
    assert est.stderr == 0.0 and est.censored_count == 0


@pytest.mark.parametrize("spec,rule", [
    (Example1(5), ADDITIVE_RULE),
    (Example1(20), ADDITIVE_RULE),
    (BiasedWalk(6, 0.6, 3), ADDITIVE_RULE),
    (BiasedWalk(12, 0.55, 8), ADDITIVE_RULE),
    (DeterministicDecrease(0.5, 7.0), ADDITIVE_RULE),
    (Example3(0.2, 100.0), StoppingRule(1.0, Mode.BELOW)),
])
def test_oracle_agrees_with_monte_carlo(spec, rule):
    exact = exact_hitting_time_markov(to_markov_chain(spec, rule), rule).start_time
    est = estimate_hitting_time(spec, rule, SimulationConfig(trials=100_000))
    assert abs(est.mean - exact) <= 2.576 * est.stderr + 1e-12 * exact


@given(pos, pos, pos)
def test_additive_upper_monotone(x0, d1, d2):
    assume(d1 != d2)
    lo, hi = sorted((d1, d2))
    assert additive_upper(x0, lo).value > additive_upper(x0, hi).value
    assert additive_upper(x0, lo).value < additive_upper(x0 * 2, lo).value


@given(st.floats(0, 1e3), st.floats(0, 1e3), pos)
def test_constant_h_reduction(a, b, delta):
    x_min, x0 = sorted((a, b))
    v = variable_upper_hitting(x0, x_min, ConstantH(delta)).value
    assert v == (x0 - x_min) / delta
    assert variable_upper_hitting(x0, 0.0, ConstantH(delta)).value == \
        additive_upper(x0, delta).value


@given(st.integers(1, 10**4), pos, pos)
def test_azuma_range_and_monotone_in_c(t, c, r):
    v = azuma_tail(t, c, r)
    assert 0 < v <= 1 or v == 0.0 and r * r / (2 * t * c * c) > 745
    assert azuma_tail(t, 2 * c, r) >= v


@given(st.sampled_from(["below", "hitting"]), st.floats(0.1, 10),
       st.lists(st.floats(0, 1), min_size=2, max_size=30))
@settings(max_examples=100)
def test_potential_monotone_and_zero_below_target(mode, x_min, fractions):
    for h in (LinearH(0.3), PowerH(2.0, 1.5), PiecewiseLinearH(((x_min, 0.5), (2 * x_min, 3.0)))):
        g = potential_transform(h, x_min, mode)
        xs = sorted(x_min * (1 + 20 * f) for f in fractions)
        vals = [g(x) for x in xs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert g(x_min * 0.5) == 0.0
        assert (g(x_min) == 0.0) == (mode == "hitting")


def _suffix_min_h(values, drift, live):
    """Monotone piecewise h with h(value(s)) <= drift(s) at every live state."""
    pairs = sorted((values[s], drift[s]) for s in live)
    zs = sorted({v for v, _ in pairs})
    best = {z: min(d for v, d in pairs if v >= z) for z in zs}
    return zs, [best[z] for z in zs]


def test_variable_drift_soundness():
    rng = random.Random(99)
    checked = 0
    while checked < 300:
        n = rng.randint(2, 10)
        values = [0.0] + [rng.uniform(0.5, 20.0) for _ in range(n - 1)]
        rows = []
        for s in range(n):
            w = [rng.random() for _ in range(n)]
            w[0] += rng.uniform(0.5, 3.0)
            tot = math.fsum(w)
            row = [x / tot for x in w]
            row[0] = 1.0 - math.fsum(row[1:])
            rows.append(row)
        chain = MarkovChainSpec(values, rows, rng.randrange(1, n))
        drift = exact_drift_markov(chain)
        live = [s for s in range(n) if values[s] > 0]
        if min(drift[s] for s in live) <= 0:
            continue
        checked += 1
        zs, hs = _suffix_min_h(values, drift, live)
        x0 = values[chain.start_state]
        t = exact_hitting_time_markov(chain).start_time
        below = variable_upper_below(x0, zs[0], PiecewiseLinearH(tuple(zip(zs, hs)))).value
        assert t <= below * (1 + 1e-9)
        hitting_h = PiecewiseLinearH(tuple(zip([0.0] + zs, [hs[0]] + hs)))
        hitting = variable_upper_hitting(x0, 0.0, hitting_h).value
        assert t <= hitting * (1 + 1e-9)
