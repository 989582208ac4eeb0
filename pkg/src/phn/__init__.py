"""Preference-conditioned hypernetworks that learn a whole Pareto front at once."""

from .autodiff import Tape, Tensor, backward, finite_diff_gradient, forward
from .metrics import hypervolume, hypervolume_mc, uniformity
from .moo import (
    epo_weights,
    even_rays,
    linear_scalarization,
    min_norm_weights,
    non_dominated_filter,
    sample_preferences,
)
from .networks import HyperNetSpec, PointSpec, TargetSpec, hypernet_weights, init_params, load_checkpoint, save_checkpoint
from .problems import ToyProblem, load_csv_problem, make_problem, synth_regression, toy_front_oracle
from .trainer import TrainConfig, baseline_train, evaluate_front, phn_train

__version__ = "0.1.0"

__all__ = [
    "HyperNetSpec", "PointSpec", "Tape", "TargetSpec", "Tensor", "ToyProblem", "TrainConfig",
    "backward", "baseline_train", "epo_weights", "evaluate_front", "even_rays", "finite_diff_gradient", "forward",
    "hypernet_weights", "hypervolume", "hypervolume_mc", "init_params", "linear_scalarization", "load_checkpoint",
    "load_csv_problem", "make_problem", "min_norm_weights", "non_dominated_filter", "phn_train", "sample_preferences",
    "save_checkpoint", "synth_regression", "toy_front_oracle", "uniformity",
]
