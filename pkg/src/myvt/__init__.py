"""Regularized distributional optimization with smoothed nonsmooth penalties.

A generator network is trained to sample from a target distribution while an
expectation of a convex penalty (l1 or total variation) is kept small by
following the gradient of the penalty's quadratic-smoothed envelope; a plain
particle method without the penalty term serves as the baseline.
"""

__version__ = "0.1.0"

from .data import Dataset, SyntheticSpec, load_dataset, make_dataset, make_truth, save_dataset
from .divergence import (
    DualCritic,
    critic_update,
    dual_objective,
    h_from_hprime_grad,
    js_dual_objective,
    kl_dual_objective,
    witness_values_and_grads,
)
from .nn import AdamState, Mlp, NumericalError, Rng, adam_step, load_mlp, mlp_init, save_mlp, sgd_step
from .prox import Regularizer, envelope_grad, envelope_value, prox, prox_l1, prox_tv1d, prox_tv2d, reg_value
from .train import (
    MetricsRow,
    TrainConfig,
    TrainState,
    case_study_config,
    case_study_spec,
    evaluate_metrics,
    init_particles,
    init_state,
    myvt_iteration,
    particle_delta,
    run_training,
    smoothed_objective_estimate,
    vt_iteration,
)

__all__ = [
    "__version__",
    "Dataset", "SyntheticSpec", "load_dataset", "make_dataset", "make_truth", "save_dataset",
    "DualCritic", "critic_update", "dual_objective", "h_from_hprime_grad",
    "js_dual_objective", "kl_dual_objective", "witness_values_and_grads",
    "AdamState", "Mlp", "NumericalError", "Rng", "adam_step", "load_mlp",
    "mlp_init", "save_mlp", "sgd_step",
    "Regularizer", "envelope_grad", "envelope_value", "prox", "prox_l1",
    "prox_tv1d", "prox_tv2d", "reg_value",
    "MetricsRow", "TrainConfig", "TrainState", "case_study_config",
    "case_study_spec", "evaluate_metrics", "init_particles", "init_state",
    "myvt_iteration", "particle_delta", "run_training",
    "smoothed_objective_estimate", "vt_iteration",
]
