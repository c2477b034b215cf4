"""Spectral simulator and property checks for a two-layer energy balance model."""

from .integrator import (
    StepControls,
    TrajectoryRecord,
    detect_blowup,
    integrate,
    integrate_batch,
    step_etd1,
    step_etdrk2,
)
from .legendre import SpectralField, SpectralGrid, analyze, apply_A, norms, semigroup_apply, sup_norm, synthesize
from .model import Coalbedo, Forcing, ModelParams, StateVec, default_forcing, eval_G, eval_G_jacobian, validate
from .ode import find_equilibria, integrate_ode, minimal_rectangle, warmest_equilibrium
from .qualitative import (
    check_comparison,
    check_comparison_pairs,
    check_positivity,
    check_rectangle,
    energy_series,
    solve_equilibrium,
)

__version__ = "0.1.0"

__all__ = [
    "Coalbedo", "Forcing", "ModelParams", "SpectralField", "SpectralGrid", "StateVec",
    "StepControls", "TrajectoryRecord", "analyze", "apply_A", "check_comparison",
    "check_comparison_pairs", "default_forcing", "integrate_batch",
    "check_positivity", "check_rectangle", "detect_blowup", "energy_series", "eval_G",
    "eval_G_jacobian", "find_equilibria", "integrate", "integrate_ode", "minimal_rectangle",
    "norms", "semigroup_apply", "solve_equilibrium", "step_etd1", "step_etdrk2", "sup_norm",
    "synthesize", "validate", "warmest_equilibrium",
]
