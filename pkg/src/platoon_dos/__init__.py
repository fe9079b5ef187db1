"""Delay-resilient control of vehicle platoons in the spatial domain.

Modules: ``model`` (vehicle and error dynamics), ``dos`` (delay traces),
``discretization`` (exact lifted model), ``polytope`` (vertex embedding),
``synthesis`` (LMI programs), ``certify`` (independent checks),
``simulator`` and ``cli``.
"""
from .certify import Certificate, check_lyapunov_grid, run_certification, l2_gain_estimate, spectral_radius_scan
from .discretization import AugmentedModel, build_augmented, build_LG, discrete_step
from .dos import AttackSchedule, DelayTrace, decompose, generate_schedule
from .model import ErrorState, PlatoonParams, ReferenceVelocityProfile, VehiclePhysState, study_profile
from .polytope import coefficient_bounds, decompose_integral, enumerate_vertices
from .simulator import SimConfig, SimTrace, l2_norms, run, scenario_library
from .synthesis import SynthesisOptions, SynthesisResult, bisect_gamma, solve, sweep_p, synthesize

__all__ = [
    "AttackSchedule", "AugmentedModel", "Certificate", "DelayTrace", "ErrorState", "PlatoonParams",
    "ReferenceVelocityProfile", "SimConfig", "SimTrace", "SynthesisOptions", "SynthesisResult",
    "VehiclePhysState", "bisect_gamma", "build_LG", "build_augmented", "check_lyapunov_grid", "run_certification",
    "coefficient_bounds", "decompose", "decompose_integral", "discrete_step", "enumerate_vertices",
    "generate_schedule", "l2_gain_estimate", "l2_norms", "run", "scenario_library", "solve",
    "spectral_radius_scan", "study_profile", "sweep_p", "synthesize",
]
