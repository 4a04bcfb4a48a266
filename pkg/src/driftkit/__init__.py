"""Drift-theorem hitting-time bounds with simulation and precondition checks."""

__version__ = "0.1.0"

from .analyze import (Applicability, CheckReport, DriftProfile, ExactHittingTimes,
                      applicable_theorems, empirical_azuma, empirical_optional_stopping,
                      estimate_drift, exact_drift_markov, exact_hitting_time_markov)
from .bounds import (THEOREMS, ConstantH, DriftHypothesis, DriftKind, HittingTimeBound, LinearH,
                     PiecewiseLinearH, PotentialFunction, PowerH, additive_lower, additive_upper,
                     adaptive_simpson, azuma_tail, bounds_for, integrate_reciprocal,
                     multiplicative_upper_below, multiplicative_upper_hitting, potential_transform,
                     variable_upper_below, variable_upper_hitting)
from .errors import DriftkitError, InvalidParameter, ParseError, ValidationError
from .experiment import ExperimentConfig, Report, parse_config, run_counterexamples, run_experiment
from .process import (BiasedWalk, DeterministicDecrease, Example1, Example2, Example3,
                      MarkovChain, MarkovChainSpec, Mode, StoppingRule, builtin_example,
                      to_markov_chain)
from .rng import RngStream
from .simulate import (HittingTimeEstimate, SimulationConfig, TrajectoryBatch,
                       estimate_hitting_time, run_trajectory, simulate_batch)
