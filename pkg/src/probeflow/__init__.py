"""Probe-coupled scalar traffic flow: modelling, exact solvers, and
calibration.

The package simulates a one-dimensional traffic density whose flux is
locally reshaped by probe vehicles with measured speeds, provides exact
Riemann and wave-front-tracking references for the underlying conservation
law, and recovers speed-law parameters from the records such probes
produce.
"""

from .errors import DomainError, FrontTrackError, ProbeStateError, StabilityError
from .fronttrack import (
    Curve,
    FrontState,
    FrontTrackSolution,
    PiecewiseConstant,
    PiecewiseLinearFlux,
    from_datum,
    ft_evolve,
    ft_riemann,
    piecewise_linearize,
    quantize_datum,
    sample_curve_integral,
)
from .fvsolver import (
    CFL_DEFAULT,
    SNAPSHOTS_DEFAULT,
    Grid,
    RunResult,
    advance_probes,
    boundary_flux_rates,
    cfl_dt,
    init_field,
    l1_distance,
    lxf_step,
    resolve_probe_speeds,
    run,
    trace_density,
)
from .inverse import (
    ErrorFunctionalReport,
    Lemma1Report,
    MinimizeResult,
    ModulusReport,
    PhiLimits,
    PhiReport,
    RescalingReport,
    ScanResult,
    error_functional,
    evaluate_candidate,
    lemma1_check,
    minimize_E,
    modulus_bound,
    phi_epsilon,
    phi_one_sided_limits,
    probe_records,
    rescaling_check,
    scan_E,
    score_records,
)
from .model import (
    AdmissibilityReport,
    CutoffProfile,
    EpsilonLaw,
    ExogenousSpeed,
    FluxModel,
    Greenshields,
    LipschitzConstants,
    ModelCoupled,
    ProbeTrajectory,
    SpeedLaw,
    StabilityConstant,
    TabulatedLaw,
    check_admissible,
    eval_encoded_speed,
    eval_flux,
    eval_g,
    eval_speed_law,
    harmonic_speed,
    lipschitz_constants,
    mixed_difference_constant,
    stability_constant_C,
)
from .riemann import RiemannSolution, sample_solution, solve_riemann
from .scenarios import (
    Finding,
    Scenario,
    builtin,
    get_scenario,
    run_scenario,
    scenario_names,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "CFL_DEFAULT",
    "Curve",
    "CutoffProfile",
    "DomainError",
    "EpsilonLaw",
    "ErrorFunctionalReport",
    "ExogenousSpeed",
    "Finding",
    "FluxModel",
    "FrontState",
    "FrontTrackError",
    "FrontTrackSolution",
    "Greenshields",
    "Grid",
    "Lemma1Report",
    "LipschitzConstants",
    "MinimizeResult",
    "ModelCoupled",
    "ModulusReport",
    "PhiLimits",
    "PhiReport",
    "PiecewiseConstant",
    "PiecewiseLinearFlux",
    "ProbeStateError",
    "ProbeTrajectory",
    "RescalingReport",
    "RiemannSolution",
    "RunResult",
    "SNAPSHOTS_DEFAULT",
    "ScanResult",
    "Scenario",
    "SpeedLaw",
    "StabilityConstant",
    "StabilityError",
    "TabulatedLaw",
    "advance_probes",
    "boundary_flux_rates",
    "builtin",
    "cfl_dt",
    "check_admissible",
    "error_functional",
    "eval_encoded_speed",
    "eval_flux",
    "eval_g",
    "eval_speed_law",
    "evaluate_candidate",
    "from_datum",
    "ft_evolve",
    "ft_riemann",
    "get_scenario",
    "harmonic_speed",
    "init_field",
    "l1_distance",
    "lemma1_check",
    "lipschitz_constants",
    "lxf_step",
    "minimize_E",
    "mixed_difference_constant",
    "modulus_bound",
    "phi_epsilon",
    "phi_one_sided_limits",
    "piecewise_linearize",
    "probe_records",
    "quantize_datum",
    "rescaling_check",
    "resolve_probe_speeds",
    "run",
    "run_scenario",
    "sample_curve_integral",
    "sample_solution",
    "scan_E",
    "scenario_names",
    "score_records",
    "solve_riemann",
    "stability_constant_C",
    "trace_density",
]
