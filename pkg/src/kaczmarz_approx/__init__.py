"""Randomized Kaczmarz for approximate solutions of linear systems."""
__version__ = "0.1.0"

from ._backend import kernels as _kernels
from .engine import (
    BatchResult,
    IterateState,
    LinearSystem,
    MaxSteps,
    ResidualBelow,
    RunHistory,
    SamplingDistribution,
    TargetRatio,
    build_distribution,
    kaczmarz_step,
    project_onto_row,
    run,
    run_batch,
    sample_row,
)
from .matrix import (
    SpectralSummary,
    frobenius_norm,
    hilbert,
    numerical_rank,
    operator_norm,
    sigma_min_estimate,
    spectral_summary,
    svd_small,
)

BACKEND = _kernels.name
