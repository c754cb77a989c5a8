"""Self-contrastive classifiers for microwave-radiometry breast exams.

The package bundles a small reverse-mode autodiff engine (``mwrnet.engine``),
the five model architectures, training, a synthetic data generator and the
experiment/CLI plumbing around them.
"""
from .engine import NumericError, ShapeError, Tensor, backward, grad_check, no_grad
from .models import KINDS, SUB_KINDS, ConfigurationError, build_model
from .data import (DataError, Dataset, GeneratorConfig, generate_synthetic, parse_csv,
                   stratified_split, write_csv)
from .training import TrainConfig, train
from .metrics import evaluate_scores, mcc, roc_auc
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "grad_check", "no_grad", "NumericError", "ShapeError",
    "KINDS", "SUB_KINDS", "ConfigurationError", "build_model",
    "DataError", "Dataset", "GeneratorConfig", "generate_synthetic", "parse_csv",
    "stratified_split", "write_csv", "TrainConfig", "train",
    "evaluate_scores", "mcc", "roc_auc", "load_checkpoint", "save_checkpoint",
]
