"""Survival and first-detection statistics of a tight-binding particle under repeated measurement."""

from .absorbing import build_hnh, evolve_hnh, gamma_for_tau, strong_weak_corollary_check, tau_for_gamma
from .analysis import ComparisonReport, PowerLawFit, compare_series, estimate_plateau, fit_power_law
from .dynamics import (
    MeasurementProtocol,
    StateVector,
    SurvivalSeries,
    evolve,
    kron_step_operator,
    position_state,
    step_operator,
)
from .effective import build_heff, decay_modes, evolve_heff
from .lattice import DetectorSet, Hamiltonian, LatticeSpec, build, load_graph
from .meanfield import mf_series, mf_solve, mf_steady_state, mf_total_detection
from .numerics import eig_sym, expm_complex, propagator

__version__ = "0.1.0"

__all__ = [
    "ComparisonReport", "DetectorSet", "Hamiltonian", "LatticeSpec", "MeasurementProtocol",
    "PowerLawFit", "StateVector", "SurvivalSeries", "build", "build_heff", "build_hnh",
    "compare_series", "decay_modes", "eig_sym", "estimate_plateau", "evolve", "evolve_heff",
    "evolve_hnh", "expm_complex", "fit_power_law", "gamma_for_tau", "kron_step_operator",
    "load_graph", "mf_series", "mf_solve", "mf_steady_state", "mf_total_detection",
    "position_state", "propagator", "step_operator", "strong_weak_corollary_check",
    "tau_for_gamma",
]
