"""Shell-based simulation of radially symmetric Vlasov-Poisson dynamics in the plane."""
from .core import (DistributionSpec, Ensemble, ModelKind, RadialState, quartic_bump, richardson_ratios,
                   sample_ensemble, total_mass)
from .diagnostics import (DiagnosticsFrame, TimeSeries, compute_frame, density_profile, kinetic_energy,
                          potential_energy, potential_sup_norm, support_extrema)
from .dynamics import (DormandPrince, IntegrationResult, IntegratorConfig, RadialSystem, StepSizeUnderflow,
                       geometric_schedule, integrate, step_ensemble, turn_around_time)
from .field import (MassProfile, build_profile, field_at, field_lp_norm, field_sup_norm, mass_at,
                    potential_at)
from .oracle import RingConfig, cartesian_field, compare_models, lift_to_rings
from .rates import RateTolerances, TheoremReport, check_theorem, fit_power_log

__version__ = "0.1.0"

__all__ = [
    "DistributionSpec", "Ensemble", "ModelKind", "RadialState", "quartic_bump", "richardson_ratios",
    "sample_ensemble", "total_mass", "DiagnosticsFrame", "TimeSeries", "compute_frame", "density_profile",
    "kinetic_energy", "potential_energy", "potential_sup_norm", "support_extrema", "DormandPrince",
    "IntegrationResult", "IntegratorConfig", "RadialSystem", "StepSizeUnderflow", "geometric_schedule",
    "integrate", "step_ensemble", "turn_around_time", "MassProfile", "build_profile", "field_at",
    "field_lp_norm", "field_sup_norm", "mass_at", "potential_at", "RingConfig", "cartesian_field",
    "compare_models", "lift_to_rings", "RateTolerances", "TheoremReport", "check_theorem", "fit_power_log",
]
