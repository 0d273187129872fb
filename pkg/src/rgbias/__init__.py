"""Ritz-Galerkin vs. neural-network solvers for Poisson problems with sampled sources."""
from __future__ import annotations

__version__ = "0.1.0"

from .analytic_limit import GreenSeries2D, LimitSolution1D, eval_green_2d, eval_limit_1d, green_series_2d, limit_solution_1d
from .dnn_solver import Activation, LossKind, NetworkParams, TrainConfig, TrainingTrace, forward, init_network, train
from .fprinciple import GammaKernel, band_convergence, fp_norm_minimize, nudft, simulate_gradient_flow
from .metrics import ComparisonReport, compare_values
from .rg_solver import BasisFamily, BasisKind, RGSolution, assemble_stiffness, eval_rg, solve_rg
from .sampling import Domain, SampleSet, example1_samples, example2_samples, example3_samples

__all__ = [
    "Activation",
    "BasisFamily",
    "BasisKind",
    "ComparisonReport",
    "Domain",
    "GammaKernel",
    "GreenSeries2D",
    "LimitSolution1D",
    "LossKind",
    "NetworkParams",
    "RGSolution",
    "SampleSet",
    "TrainConfig",
    "TrainingTrace",
    "assemble_stiffness",
    "band_convergence",
    "compare_values",
    "eval_green_2d",
    "eval_limit_1d",
    "eval_rg",
    "example1_samples",
    "example2_samples",
    "example3_samples",
    "forward",
    "fp_norm_minimize",
    "green_series_2d",
    "init_network",
    "limit_solution_1d",
    "nudft",
    "simulate_gradient_flow",
    "solve_rg",
    "train",
]
