"""Desk-scale simulator for robust downlink beamforming in FDD ultra-dense C-RAN.

The package covers the full pipeline: random network deployment, pilot
allocation by capacity-limited graph coloring, MMSE channel estimation under
pilot reuse, per-RRH limited feedback (RVQ codebooks plus scalar phase
quantization), closed-form conditional channel statistics, the SCA power
minimization solver with Lagrange dual decomposition, slack-based user
admission, and a seeded Monte Carlo experiment harness.
"""

from .topology import NetworkConfig, Topology, generate
from .pilots import ConflictGraph, PilotAssignment, build_conflict_graph, dsatur_color
from .channels import (
    EstimationStats,
    ChannelDraw,
    estimation_stats,
    sample_channels,
    estimate_from_pilots,
    noise_power_mw,
)
from .feedback import FeedbackConfig, FeedbackState, generate_codebooks, build_feedback
from .statistics import BeliefModel, LemmaConstants, StatSet, build_statset, lemma_constants
from .ratemodel import RateConfig, BeamSet, sinr, net_rate, constraint_residuals
from .solver import SolveReport, SolverOptions, fota_solve, verify_kkt
from .admission import (
    AdmissionResult,
    solve_p8,
    successive_deletion,
    bisection_selection,
    exhaustive_selection,
)
from .harness import ExperimentConfig, TrialRecord, run_trial, run_sweep

__version__ = "0.1.0"

__all__ = [
    "NetworkConfig", "Topology", "generate",
    "ConflictGraph", "PilotAssignment", "build_conflict_graph", "dsatur_color",
    "EstimationStats", "ChannelDraw", "estimation_stats", "sample_channels",
    "estimate_from_pilots", "noise_power_mw",
    "FeedbackConfig", "FeedbackState", "generate_codebooks", "build_feedback",
    "BeliefModel", "LemmaConstants", "StatSet", "build_statset", "lemma_constants",
    "RateConfig", "BeamSet", "sinr", "net_rate", "constraint_residuals",
    "SolveReport", "SolverOptions", "fota_solve", "verify_kkt",
    "AdmissionResult", "solve_p8", "successive_deletion", "bisection_selection",
    "exhaustive_selection",
    "ExperimentConfig", "TrialRecord", "run_trial", "run_sweep",
]
