"""Linear quadratic control with untrusted disturbance predictions."""

from .controllers import (
    LambdaConfident,
    OneConfident,
    SelfTuning,
    SelfTuningState,
    Threshold,
    ThresholdState,
    ZeroConfident,
    lambda_confident_action,
    offline_optimal_rollout,
    one_confident_action,
    self_tuning_step,
    threshold_step,
    zero_confident_action,
)
from .errors import *  # noqa: F401,F403
from .experiment import ExperimentConfig, SweepRow, emit_csv, emit_trace, load_config, run_sweep
from .metrics import (
    competitive_ratio,
    gap_identity,
    lambda_confident_psi,
    optimal_trust,
    prediction_error,
    self_variation,
    w_bar,
)
from .riccati import RiccatiSolution, SystemMatrices, solve_dare
from .simulation import CartPoleParams, PredictionWindow, Rollout, rollout_cartpole, rollout_linear

__version__ = "0.1.0"
