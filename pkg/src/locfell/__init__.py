"""Exploding cadlag paths, random time changes, local Skorokhod distances and
Monte Carlo checks of martingale local problems for locally Feller families."""

from .martingale import (feller_tail_check, generator_estimate, markov_conditioning_check,
                         martingale_statistic, martingale_suite, quasi_continuity_check,
                         semigroup_estimate, unstopped_martingale_statistic)
from .operators import (Operator, Pair, TestFunction, chain_operator, cpoisson_operator,
                        diffusion_operator, gaussian_bump, pmp_check, poly_bump, scale_operator,
                        trig_bump)
from .paths import StepPath, read_path_csv, write_path_csv
from .simulators import (Ensemble, FamilySimulator, InitialLaw, TimeChangedFamily, ensemble,
                         simulate_chain, simulate_cpoisson, simulate_diffusion, simulate_ode)
from .skorokhod import aldous_tightness, global_distance, local_distance
from .state_space import DELTA, OpenInterval, StateSpace
from .time_change import SpeedFunction, apply, clock, clock_inverse, speed

__version__ = "0.1.0"

__all__ = [
    "DELTA", "OpenInterval", "StateSpace", "StepPath", "read_path_csv", "write_path_csv",
    "SpeedFunction", "speed", "apply", "clock", "clock_inverse",
    "global_distance", "local_distance", "aldous_tightness",
    "TestFunction", "Operator", "Pair", "gaussian_bump", "poly_bump", "trig_bump",
    "diffusion_operator", "cpoisson_operator", "chain_operator", "scale_operator", "pmp_check",
    "martingale_statistic", "unstopped_martingale_statistic", "martingale_suite",
    "generator_estimate", "semigroup_estimate", "feller_tail_check", "quasi_continuity_check",
    "markov_conditioning_check",
    "FamilySimulator", "TimeChangedFamily", "InitialLaw", "Ensemble", "ensemble",
    "simulate_ode", "simulate_diffusion", "simulate_cpoisson", "simulate_chain",
]
