"""Distributed platoon control with artificial potential functions and
predecessor feedforward, plus numerical certification of its guarantees."""

from .apf import ApfParams, apf_deriv, apf_grad_follower, apf_grad_predecessor, apf_value, eta_c
from .controller import (
    ConstantInput,
    ControllerConfig,
    PiecewiseLinearInput,
    SinusoidInput,
    StopAndGo,
    Variant,
    compose_control,
    compute_all_controls,
    leader_input,
    local_control,
)
from .dynamics import (
    AgentState,
    CustomModel,
    LinearDrag,
    SignedQuadraticDrag,
    accel,
    alpha_bound,
    alpha_estimate,
    gamma_bound,
    initial_platoon,
)
from .scenario import CertifySettings, GuardSettings, Scenario, flagship, load_scenario
from .sigma_math import SigmaParam, euclid_from_sigma, sigma_norm, sigma_norm_grad
from .simulator import TrajectoryLog, guard_step, rk4_step, run

__version__ = "0.1.0"

__all__ = [
    "ApfParams",
    "apf_deriv",
    "apf_grad_follower",
    "apf_grad_predecessor",
    "apf_value",
    "eta_c",
    "ConstantInput",
    "ControllerConfig",
    "PiecewiseLinearInput",
    "SinusoidInput",
    "StopAndGo",
    "Variant",
    "compose_control",
    "compute_all_controls",
    "leader_input",
    "local_control",
    "AgentState",
    "CustomModel",
    "LinearDrag",
    "SignedQuadraticDrag",
    "accel",
    "alpha_bound",
    "alpha_estimate",
    "gamma_bound",
    "initial_platoon",
    "CertifySettings",
    "GuardSettings",
    "Scenario",
    "flagship",
    "load_scenario",
    "SigmaParam",
    "euclid_from_sigma",
    "sigma_norm",
    "sigma_norm_grad",
    "TrajectoryLog",
    "guard_step",
    "rk4_step",
    "run",
]
