"""Manifold regularization for feedforward networks.

Penalizes the input gradient of the loss (label-aware) or the input Jacobian
of the scores (label-independent, hence usable on unlabeled data), trained
through cheap stochastic approximations: squared differences between clean
and Gaussian-perturbed forward passes.
"""

from .data import Dataset, SplitSpec, holdout_split, load_idx, save_idx, split_semi, synth_blobs, synth_digits
from .loss import LossKind, loss_grad_scores, loss_value
from .nn import (Conv2D, Dense, Flatten, MaxPool2D, NetworkSpec, Params, Relu,
                 backward_input, backward_params, forward, init_glorot,
                 input_jacobian, load_params, predict, save_params)
from .optimizer import AdadeltaConfig, AdadeltaState, SgdConfig, adadelta_step, objective_grad, sgd_step
from .regularizer import (RegConfig, RegKind, RegMode, batch_penalty,
                          feature_noise_augment, lamr_exact, lamr_stochastic,
                          limr_exact, limr_stochastic)
from .tensor import RngState, elementwise, frobenius_norm_sq, gaussian_sample, matmul
from .trainer import MetricsRecord, TrainConfig, TrainResult, evaluate, sweep, train

__all__ = [
    "AdadeltaConfig", "AdadeltaState", "Conv2D", "Dataset", "Dense", "Flatten",
    "LossKind", "MaxPool2D", "MetricsRecord", "NetworkSpec", "Params",
    "RegConfig", "RegKind", "RegMode", "Relu", "RngState", "SgdConfig",
    "SplitSpec", "TrainConfig", "TrainResult", "adadelta_step",
    "backward_input", "backward_params", "batch_penalty", "elementwise",
    "evaluate", "feature_noise_augment", "forward", "frobenius_norm_sq",
    "gaussian_sample", "holdout_split", "init_glorot", "input_jacobian",
    "lamr_exact", "lamr_stochastic", "limr_exact", "limr_stochastic",
    "load_idx", "load_params", "loss_grad_scores", "loss_value", "matmul",
    "objective_grad", "predict", "save_idx", "save_params", "sgd_step",
    "split_semi", "sweep", "synth_blobs", "synth_digits", "train",
]

__version__ = "0.1.0"
