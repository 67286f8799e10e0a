"""Quantum dynamics with time-dependent metric operators.

Finite-dimensional propagation, positive-definite dynamical invariants used
as inner-product metrics, phase decomposition over metric eigenbranches,
metric-changing symmetry maps and a dissipative extension of the metric
equation.
"""
from .config import ScenarioConfig, load_config, save_config
from .covariance import (
    geometric_equivalence_check,
    metric_permutation,
    rho_inverse_trajectory,
    transform_hamiltonian,
    verify_hamiltonian_invariance,
)
from .errors import *  # noqa: F401,F403
from .hamiltonian import HamiltonianSpec, TimeGrid
from .lindblad import LindbladSet, dissipator, evolve_metric_lindblad, nonunitarity_wrt_eta
from .metric import MetricTrajectory, evolve_metric_general, evolve_metric_hermitian
from .phases import cyclic_phase, decompose_phases, reconstruct_evolution, track_eigenbranches
from .propagator import evolve, solve_schrodinger
from .report import CheckResult, RunReport

__version__ = "0.1.0"

__all__ = [
    "CheckResult", "HamiltonianSpec", "LindbladSet", "MetricTrajectory", "RunReport",
    "ScenarioConfig", "TimeGrid", "cyclic_phase", "decompose_phases", "dissipator", "evolve",
    "evolve_metric_general", "evolve_metric_hermitian", "evolve_metric_lindblad",
    "geometric_equivalence_check", "load_config", "metric_permutation", "nonunitarity_wrt_eta",
    "reconstruct_evolution", "rho_inverse_trajectory", "save_config", "solve_schrodinger",
    "track_eigenbranches", "transform_hamiltonian", "verify_hamiltonian_invariance",
]
