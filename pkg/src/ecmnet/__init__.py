"""Recurrent state estimation for ODE systems with unmeasurable states,
trained through an integration-embedded output loss; demonstrated on a
first-order equivalent-circuit battery cell with concurrent parameter
identification, with a conventional multi-term physics loss as the
comparison baseline."""

from . import (
    autodiff,
    ecm,
    errors,
    evaluation,
    losses,
    network,
    profiles,
    rng,
    simulate,
    training,
)
from .autodiff import Tape, Var, fd_compare, finite_difference
from .ecm import (
    OCV_COEFFS_DEFAULT,
    EcmParams,
    EcmState,
    LambdaVec,
    f_dynamics,
    g_output,
    lambda_from_params,
    load_ocv_coeffs,
    ocv,
    params_from_lambda,
    rk4_step,
)
from .errors import ConfigError, DataError, EcmnetError, NumericsError
from .evaluation import (
    StateEstimate,
    estimate_states,
    ident_report,
    state_errors,
)
from .losses import (
    LambdaBounds,
    LossConfig,
    LossValue,
    OdeSystemSpec,
    bounds_from_params,
    ecm_system,
    integration_loss,
    project_lambda,
    rk4_rollout,
    standard_pinn_loss,
)
from .network import NetworkParams, NormSpec, forward, init_weights
from .profiles import CurrentProfile, load_profile_csv, synth_dynamic_profile
from .simulate import SimTrace, add_gaussian_noise, load_trace_csv
from .training import (
    AdamState,
    TrainConfig,
    TrainResult,
    WindowDataset,
    adam_step,
    build_windows,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConfigError",
    "CurrentProfile",
    "DataError",
    "EcmParams",
    "EcmState",
    "EcmnetError",
    "LambdaBounds",
    "LambdaVec",
    "LossConfig",
    "LossValue",
    "NetworkParams",
    "NormSpec",
    "NumericsError",
    "OCV_COEFFS_DEFAULT",
    "OdeSystemSpec",
    "SimTrace",
    "StateEstimate",
    "Tape",
    "TrainConfig",
    "TrainResult",
    "Var",
    "WindowDataset",
    "adam_step",
    "add_gaussian_noise",
    "bounds_from_params",
    "build_windows",
    "ecm_system",
    "estimate_states",
    "f_dynamics",
    "fd_compare",
    "finite_difference",
    "forward",
    "g_output",
    "gradient_check",
    "ident_report",
    "init_weights",
    "integration_loss",
    "lambda_from_params",
    "load_checkpoint",
    "load_ocv_coeffs",
    "load_profile_csv",
    "load_trace_csv",
    "ocv",
    "params_from_lambda",
    "project_lambda",
    "rk4_rollout",
    "rk4_step",
    "save_checkpoint",
    "standard_pinn_loss",
    "state_errors",
    "synth_dynamic_profile",
    "train",
]
