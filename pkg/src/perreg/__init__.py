"""perreg: output regulation for periodic linear systems.

Synthesis and simulation of periodic-tracking controllers built on the
steady-state response operator of a stable tau-periodic plant: exact
feedforward, finite-dimensional error feedback, an internal-model robust
design, and a reduced robust design with a computable asymptotic error.
"""

from .closed_loop import (ClosedLoopMatrix, ClosedLoopTrace, RobustnessReport,
                          TuneResult, build_closed_loop_matrix,
                          fit_decay_rate, robustness_experiment,
                          simulate_closed_loop, tune_epsilon)
from .errors import (AllUnstableError, BasisMismatchError,
                     CorruptedSignalError, EstimateUnavailableError,
                     IntegrationBlowupError, NothingToTrackError,
                     NotStableError, PerregError, SurjectivityError,
                     UnsolvableRegulationError, YNRangeError)
from .identification import (IdentificationConfig, assemble_measured_operator,
                             measure_P, measure_Pd_w)
from .lifting import (LiftedSteadyStateOperator, LiftedSystem, lift,
                      steady_state_operator)
from .plant import (EvolutionFamily, PeriodicPlant, PlantDelta,
                    StabilityVerdict, Trajectory, as_evolution_family)
from .regulators import (AsymptoticEstimate, ExosystemData,
                         FeedbackController, FeedforwardLaw,
                         InternalModelReport, RegulatorSolution,
                         asymptotic_error_estimate, check_internal_model,
                         harmonic_band_indices, make_triangle_reference,
                         synthesize_approx_robust, synthesize_feedforward,
                         synthesize_orp_feedback, synthesize_robust,
                         triangle_wave, verify_regulator_equations)
from .signals import (PeriodicSignal, SignalBasis, inner_product, project,
                      quadrature_grid, signal_from_trace)

__version__ = "0.1.0"

__all__ = [
    "AllUnstableError", "AsymptoticEstimate", "BasisMismatchError",
    "ClosedLoopMatrix", "ClosedLoopTrace", "CorruptedSignalError",
    "EstimateUnavailableError", "EvolutionFamily", "ExosystemData",
    "FeedbackController", "FeedforwardLaw", "IdentificationConfig",
    "IntegrationBlowupError", "InternalModelReport",
    "LiftedSteadyStateOperator", "LiftedSystem", "NothingToTrackError",
    "NotStableError", "PeriodicPlant", "PeriodicSignal", "PerregError",
    "PlantDelta", "RegulatorSolution", "RobustnessReport", "SignalBasis",
    "StabilityVerdict", "SurjectivityError", "Trajectory", "TuneResult",
    "UnsolvableRegulationError", "YNRangeError",
    "as_evolution_family", "assemble_measured_operator",
    "asymptotic_error_estimate", "build_closed_loop_matrix",
    "check_internal_model", "fit_decay_rate", "harmonic_band_indices",
    "inner_product", "lift", "make_triangle_reference", "measure_P",
    "measure_Pd_w", "project", "quadrature_grid", "robustness_experiment",
    "signal_from_trace", "simulate_closed_loop", "steady_state_operator",
    "synthesize_approx_robust", "synthesize_feedforward",
    "synthesize_orp_feedback", "synthesize_robust", "triangle_wave",
    "tune_epsilon", "verify_regulator_equations",
]
