import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from driftkit.errors import InvalidParameter, NonStochasticRow, UnknownFamily
from driftkit.process import (ADDITIVE_RULE, BiasedWalk, DeterministicDecrease, Example1,
                              Example2, Example3, MarkovChain, MarkovChainSpec, Mode,
                              StoppingRule, builtin_example, is_stopped, process_from_dict,
                              step, to_markov_chain, validate_spec)
from driftkit.rng import RngStream

unit = st.floats(0.0, 1.0, exclude_max=True)


def test_stopping_modes():
    below = StoppingRule(1.0, Mode.BELOW)
    at = StoppingRule(1.0, Mode.AT_OR_BELOW)
    assert not below.is_stopped(1.0) and below.is_stopped(0.999)
    assert at.is_stopped(1.0) and not at.is_stopped(1.001)
    assert is_stopped(ADDITIVE_RULE, 0.0)
    assert at.stopped(np.array([0.5, 1.0, 2.0])).tolist() == [True, True, False]


def test_example1_transitions():
    p = Example1(10)
    assert p.x0 == 1.0
    assert p.next_state(1.0, 0.05) == -9.0
    assert p.next_state(1.0, 0.5) == 1.0
    assert p.next_state(1.0, 0.1) == 1.0


def test_example2_transitions():
    p = Example2(0.5)
    assert p.x0 == 2.0
    assert p.next_state(2.0, 0.2) == 0.0
    assert p.next_state(2.0, 0.7) == 3.0


def test_example3_and_deterministic():
    assert Example3(0.1, 1000.0).next_state(1000.0, 0.3) == pytest.approx(900.0)
    assert DeterministicDecrease(1.0, 3.0).next_state(3.0, 0.9) == 2.0


def test_biased_walk_reflects_at_top_and_absorbs_at_zero():
    w = BiasedWalk(5, 0.6, 2)
    assert w.next_state(2.0, 0.1) == 1.0
    assert w.next_state(2.0, 0.9) == 3.0
    assert w.next_state(4.0, 0.9) == 4.0
    assert w.next_state(0.0, 0.9) == 0.0


@given(st.lists(unit, min_size=1, max_size=40))
def test_vectorized_step_matches_scalar(us):
    u = np.array(us)
    for spec in (Example1(7), Example2(0.3), Example3(0.2, 50.0), BiasedWalk(6, 0.4, 3),
                 DeterministicDecrease(0.5, 4.0)):
        states = np.full(len(u), spec.initial_state(), dtype=spec.state_dtype)
        vec = spec.next_states(states, u)
        assert vec.tolist() == [spec.next_state(spec.initial_state(), x) for x in us]


@given(st.lists(unit, min_size=1, max_size=40))
def test_markov_vectorized_sampling(us):
    chain = MarkovChainSpec([0, 1, 2], [[1, 0, 0], [0.25, 0.5, 0.25], [0, 0.7, 0.3]], 1)
    spec = MarkovChain(chain)
    u = np.array(us)
    for s in range(3):
        vec = spec.next_states(np.full(len(u), s, dtype=np.int64), u)
        assert vec.tolist() == [chain.sample(s, x) for x in us]


def test_markov_sampling_frequencies():
    chain = MarkovChainSpec([0, 1, 2], [[1, 0, 0], [0.2, 0.3, 0.5], [0, 0, 1]], 1)
    u = (np.arange(100000) + 0.5) / 100000
    nxt = MarkovChain(chain).next_states(np.ones(len(u), dtype=np.int64), u)
    freq = np.bincount(nxt, minlength=3) / len(u)
    assert freq == pytest.approx([0.2, 0.3, 0.5], abs=1e-4)


def test_zero_probability_states_are_never_sampled():
    chain = MarkovChainSpec([0, 1, 2], [[1, 0, 0], [0.5, 0.5, 0.0], [0, 0, 1]], 1)
    assert chain.sample(1, 1.0 - 2**-53) == 1


def test_nonstochastic_row_rejected():
    spec = MarkovChain(MarkovChainSpec([0, 1], [[1, 0], [0.5, 0.4]], 1))
    with pytest.raises(NonStochasticRow) as exc:
        validate_spec(spec)
    assert "transition_rows[1]" in exc.value.fields


def test_builtin_example_errors():
    with pytest.raises(UnknownFamily):
        builtin_example("example9", {})
    with pytest.raises(InvalidParameter):
        builtin_example("example1", {"n": 0})
    with pytest.raises(InvalidParameter):
        builtin_example("example2", {"delta": -0.5})


@pytest.mark.parametrize("spec", [Example1(10), Example2(0.5), Example3(0.1, 1000.0),
                                  DeterministicDecrease(1.0, 10.0), BiasedWalk(6, 0.6, 3),
                                  MarkovChain(MarkovChainSpec([0, 2], [[1, 0], [0.5, 0.5]], 1))])
def test_dict_round_trip(spec):
    assert process_from_dict(spec.to_dict()) == spec


def test_step_uses_one_draw_per_transition():
    rng = RngStream(42, 0)
    twin = RngStream(42, 0)
    spec = Example1(3)
    x = step(spec, 1.0, rng)
    assert x == spec.next_state(1.0, twin.uniform())
    assert rng.counter == twin.counter == 1


def test_to_markov_chain_encodings():
    c1 = to_markov_chain(Example1(4))
    assert c1.state_values == (1.0, -3.0)
    assert c1.transition_rows[0] == (0.75, 0.25)
    unrolled = to_markov_chain(DeterministicDecrease(1.0, 3.0))
    assert unrolled.state_values == (3.0, 2.0, 1.0, 0.0)
    ex3 = to_markov_chain(Example3(0.1, 1000.0), StoppingRule(1.0, Mode.BELOW))
    assert ex3.n_states == 67
    with pytest.raises(InvalidParameter):
        to_markov_chain(Example2(0.5))
    walk = to_markov_chain(BiasedWalk(4, 0.6, 2))
    assert all(math.fsum(r) == 1.0 for r in walk.transition_rows)
