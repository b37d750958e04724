"""Convolutional feature banks trained on contextual groups of image patches."""

import json

from ._core import (
    ClassifierHead,
    ConfigError,
    FeatureBank,
    InvalidInput,
    IoError,
    NumericalError,
    TrainingFailure,
    build_task,
    classify,
    conv_forward,
    feature_forward,
    has_converged,
    knn_classify,
    loss_and_grads,
    slide_lattice_size,
    synthetic_images,
    train,
    transfer_utility,
)
from ._core import default_config as _default_config
from ._core import run_command as _run_command


def default_config(mode="train", hsi=False):
    """Default configuration for a mode as a nested dict."""
    return json.loads(_default_config(mode, hsi))


def run(mode, config=None, overrides=()):
    """Run a CLI command in-process. Returns (summary line, list of artifact paths)."""
    summary, artifacts = _run_command(mode, json.dumps(config) if config else "", list(overrides))
    return summary, [str(p) for p in artifacts]


__all__ = [
    "ClassifierHead",
    "ConfigError",
    "FeatureBank",
    "InvalidInput",
    "IoError",
    "NumericalError",
    "TrainingFailure",
    "build_task",
    "classify",
    "conv_forward",
    "default_config",
    "feature_forward",
    "has_converged",
    "knn_classify",
    "loss_and_grads",
    "run",
    "slide_lattice_size",
    "synthetic_images",
    "train",
    "transfer_utility",
]
