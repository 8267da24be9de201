"""Attainability bounds for quantum multi-parameter estimation.

Builds and solves the semidefinite programs behind the Holevo and
Nagaoka-Hayashi bounds, evaluates the SLD Cramer-Rao bound, and checks
the results against analytic saturating measurements.
"""
from .bound_builders import (
    BoundError,
    BoundResult,
    holevo_bound,
    nagaoka_explicit_two_obs,
    nagaoka_hayashi_bound,
    nh_u_bound,
)
from .measurement import (
    Estimator,
    POVM,
    check_unbiased,
    estimator_to_X,
    interferometer_povm,
    mse_matrix,
    phase_damping_povm,
    sample,
    validate_povm,
)
from .model import (
    StatisticalModel,
    holland_burnett_probe,
    interferometer_model,
    phase_damping_model,
    random_model,
    sld,
    sld_bound,
)

__all__ = [
    "BoundError",
    "BoundResult",
    "Estimator",
    "POVM",
    "StatisticalModel",
    "check_unbiased",
    "estimator_to_X",
    "holevo_bound",
    "holland_burnett_probe",
    "interferometer_model",
    "interferometer_povm",
    "mse_matrix",
    "nagaoka_explicit_two_obs",
    "nagaoka_hayashi_bound",
    "nh_u_bound",
    "phase_damping_model",
    "phase_damping_povm",
    "random_model",
    "sample",
    "sld",
    "sld_bound",
    "validate_povm",
]

__version__ = "0.1.0"
