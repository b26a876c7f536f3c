"""Numerical laboratory for a Brownian particle in a critically tilted
washboard potential.

The package computes the deterministic critical-tilt structure
(:mod:`washboard.deterministic`), simulates the noisy dynamics with
reproducible per-trial randomness (:mod:`washboard.sde`), and runs the
statistical campaigns that verify the half-by-half crossing law, the
variance formulas, and the scale hierarchy (:mod:`washboard.experiments`).
"""

from .params import (
    ModelParams,
    ParameterError,
    THETA_MAX,
    make_params,
    nonlinear_remainder,
    nu_window,
    potential_eval,
    saddle_remainder,
)
from .deterministic import (
    DetState,
    OrbitClass,
    OrbitTable,
    ShootingError,
    classify_orbit,
    critical_tilt,
    heteroclinic_table,
    integrate_det,
    load_orbit,
    omega_along,
    orbit_ode_residuals,
    save_orbit,
)
from .functionals import (
    NumericalConsistencyError,
    QuadratureError,
    TrappingError,
    rho_propagation,
    sigma_functional,
    sigma_r_profile,
    sigma_y_profile,
)
from .sde import (
    CAP_HIT,
    CrossingEvent,
    KMAX_REACHED,
    SdeState,
    SimulationError,
    TRAPPED,
    TrialRecord,
    advance_to_stop,
    default_dt,
    default_t_max,
    em_step,
    initial_condition,
    ou_exact_step,
    simulate_trial,
    trial_stream,
    zv_inverse,
    zv_transform,
)
from .experiments import (
    BatchSummary,
    comparison_lemma_check,
    geometric_gof,
    marcus_shepp_check,
    run_batch,
    scaling_suite,
    synthetic_summary,
    timescale_scan,
    trapping_check,
    variance_validation,
    wilson_interval,
)
from .config import ConfigError, RunConfig, parse_config

__version__ = "0.1.0"
