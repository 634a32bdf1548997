"""Evidential joint classification and segmentation with uncertainty-gated mutual learning."""
from ._accel import BACKEND
from .config import RunConfig, load_config
from .errors import CheckpointError, ConfigurationError, InvalidInputError, NumericalError
from .evidential import classification_opinion, expected_probability, segmentation_opinion, softplus_evidence
from .model import ModelConfig, MutualNet, build_model
from .synthdata import DataConfig, make_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CheckpointError",
    "ConfigurationError",
    "DataConfig",
    "InvalidInputError",
    "ModelConfig",
    "MutualNet",
    "NumericalError",
    "RunConfig",
    "build_model",
    "classification_opinion",
    "expected_probability",
    "load_config",
    "make_dataset",
    "segmentation_opinion",
    "softplus_evidence",
]
