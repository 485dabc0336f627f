"""Kalman smoothing with Student's t process and measurement noise."""
from .errors import DimensionMismatch, InvalidPreset, NotPositiveDefinite
from .gauss_newton import SmootherConfig, SmootherResult, Status, run
from .linalg import BlockTridiagonalSystem, factor, solve
from .model import (FunctionMeasurement, FunctionProcess, LinearMeasurement, LinearProcess,
                    NoisePartition, PrecisionSpec, ProblemSpec, residuals)
from .objective import evaluate, gradient_check, objective_value
from .presets import PresetKind, make_preset, trend_robust_partition

__version__ = "0.1.0"
