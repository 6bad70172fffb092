"""Simultaneous input and state estimation for switched linear systems.

The package splits along the pipeline:

``models``
    Mode models (continuous or discrete), zero-order-hold discretization,
    the unknown-input measurement decomposition, well-posedness checks.
``filtering``
    The single-mode filter: joint minimum-variance input and state
    estimates plus the generalized innovation.
``likelihood``
    Degenerate-Gaussian log-likelihoods of generalized innovations and
    the Bayesian mode-probability update.
``bank``
    Static and dynamic (interacting) multiple-model estimators built from
    per-mode filters.
``asymptotics``
    Steady-state gains, stationary covariance of mismatched filters, and
    the divergence analysis predicting which mode wins.
``sim`` / ``presets`` / ``config`` / ``cli``
    Scenario simulation, the two-vehicle intersection preset, TOML
    configuration, and the command-line front end.
"""

from . import (asymptotics, bank, config, filtering, likelihood, models,
               presets, sim)
from .asymptotics import (KLReport, WinnerPrediction, analyze_model_set,
                          kl_divergence, mean_ratio_trace, predict_winner,
                          steady_state_gains)
from .bank import (FusedEstimate, MMState, StaticMMConfig, dynamic_step,
                   init_mm, static_step)
from .errors import (ConfigError, DegenerateInnovation, DegenerateUpdate,
                     InvalidModel, ModeFilterError, ModeUnreachableWarning,
                     NoConvergence, NoSteadyState, NumericalBreakdown,
                     RankDeficient, Unstable)
from .filtering import FilterState, GenInnovation, generalized_innovation
from .likelihood import log_likelihood, update_probabilities
from .models import (ContinuousModeModel, DecomposedModeModel,
                     DiscreteModeModel, SwitchedSystem, check_well_posed,
                     decompose, discretize_zoh)
from .presets import intersection_scenario, intersection_system, \
    intersection_transition
from .sim import (EstimatorConfig, ExplicitSchedule, GroundTruth,
                  MarkovSchedule, Scenario, Traces, Waveform, metrics,
                  run_estimator, simulate)

__version__ = "0.1.0"

__all__ = [
    "ContinuousModeModel", "DiscreteModeModel", "DecomposedModeModel",
    "SwitchedSystem", "discretize_zoh", "decompose", "check_well_posed",
    "FilterState", "GenInnovation", "generalized_innovation",
    "log_likelihood", "update_probabilities",
    "FusedEstimate", "MMState", "StaticMMConfig", "init_mm",
    "dynamic_step", "static_step",
    "steady_state_gains", "kl_divergence", "analyze_model_set",
    "predict_winner", "mean_ratio_trace", "KLReport", "WinnerPrediction",
    "Scenario", "Waveform", "ExplicitSchedule", "MarkovSchedule",
    "GroundTruth", "EstimatorConfig", "Traces", "simulate", "run_estimator",
    "metrics", "intersection_system", "intersection_scenario",
    "intersection_transition",
    "ModeFilterError", "InvalidModel", "RankDeficient",
    "NumericalBreakdown", "DegenerateInnovation", "DegenerateUpdate",
    "Unstable", "NoSteadyState", "NoConvergence", "ConfigError",
    "ModeUnreachableWarning",
    "models", "filtering", "likelihood", "bank", "asymptotics", "sim",
    "presets", "config",
]
