"""Robust (least absolute deviation) identification of partially observed
linear systems whose process noise is hit by sparse adversarial attacks."""

from .model import (
    ConfigurationError,
    MarkovMatrix,
    SystemRealization,
    gen_general_system,
    gen_nilpotent_system,
    hankel_from_markov,
    markov_parameters,
    spectral_norm,
)
from .sim import AttackModel, InputModel, assemble_regression, simulate
from .estimate import LADConvergenceError, LADOptions, frobenius_error, lad_fit, ls_fit
from .realize import ho_kalman, markov_product_error, true_balanced_truncation
from .bounds import attack_mass_q, bound_report

__version__ = "0.1.0"

__all__ = [
    "AttackModel", "ConfigurationError", "InputModel", "LADConvergenceError", "LADOptions",
    "MarkovMatrix", "SystemRealization", "assemble_regression", "attack_mass_q", "bound_report",
    "frobenius_error", "gen_general_system", "gen_nilpotent_system", "hankel_from_markov",
    "ho_kalman", "lad_fit", "ls_fit", "markov_parameters", "markov_product_error", "simulate",
    "spectral_norm", "true_balanced_truncation",
]
