"""Exact dynamics and spectral statistics of a closed, disordered qubit register."""

__version__ = "0.1.0"

from .register import (ConfigError, DisorderRealization, Hamiltonian, RegisterConfig,
                       ResourceCapError, build_hamiltonian, sample_disorder,
                       second_moment, split_by_parity)
from .spectral import (Spectrum, StrengthFunction, density_of_states, diagonalize,
                       eigenstate_profile, eigenstate_profiles, fit_breit_wigner,
                       golden_rule_width, pooled_strength_function, strength_function)
from .dynamics import (AnalyticModelParams, Trajectory, analytic_survival,
                       central_basis_state, critical_time, entropy_estimates,
                       entropy_trajectory, evolve, measure_critical_time,
                       perturbative_component, stationary_component,
                       survival_probability)
from .chaos_stats import chaos_boundary_scan, spacing_statistics, unfold
from .ensemble import (RunManifest, ensemble_dynamics, parse_manifest,
                       run_ensemble)

__all__ = [
    "__version__", "ConfigError", "ResourceCapError", "RegisterConfig",
    "DisorderRealization", "Hamiltonian", "sample_disorder", "build_hamiltonian",
    "second_moment", "split_by_parity", "Spectrum", "StrengthFunction", "diagonalize",
    "strength_function", "pooled_strength_function", "fit_breit_wigner",
    "golden_rule_width", "eigenstate_profile", "eigenstate_profiles",
    "density_of_states", "Trajectory", "AnalyticModelParams", "evolve",
    "survival_probability", "entropy_trajectory", "analytic_survival",
    "perturbative_component", "stationary_component", "entropy_estimates",
    "critical_time", "measure_critical_time", "central_basis_state", "unfold",
    "spacing_statistics", "chaos_boundary_scan", "RunManifest", "parse_manifest",
    "run_ensemble", "ensemble_dynamics",
]
