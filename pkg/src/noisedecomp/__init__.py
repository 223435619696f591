"""Noisy shared-reward decomposition for cooperative multi-agent learning.

Approximates a noisy global reward signal as a Gaussian mixture, assigns one
component per agent for local distributional TD training, supports
risk-distorted action selection, and can stretch scarce reward data with a
small denoising-diffusion model. A compiled extension accelerates the hot
kernels when available; set NOISEDECOMP_PURE_PYTHON=1 to force the pure
NumPy backend.
"""

__version__ = "0.1.0"

from . import backend
from .backend import BACKEND_NAME
from .dists import (
    GMM,
    EmpiricalDistribution,
    Gaussian,
    QuantileGrid,
    fit_empirical,
    wasserstein,
)
from .distortion import DistortionFn, distort, distorted_expectation, parse_spec
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DomainError,
    NumericError,
    ShapeError,
    StateError,
)
from .nets import DenseNet, RandomSource
from .noise import NoiseModel, load_preset

__all__ = [
    "__version__",
    "backend",
    "BACKEND_NAME",
    "GMM",
    "EmpiricalDistribution",
    "Gaussian",
    "QuantileGrid",
    "fit_empirical",
    "wasserstein",
    "DistortionFn",
    "distort",
    "distorted_expectation",
    "parse_spec",
    "ConfigError",
    "DataError",
    "DegenerateDataError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "StateError",
    "DenseNet",
    "RandomSource",
    "NoiseModel",
    "load_preset",
]
