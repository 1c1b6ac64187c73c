"""Rebalancing imbalanced regression samples toward a target covariate law.

Weighted resampling (WR) draws whole observations with probabilities
proportional to ``f0(x) / max(f_hat(x), e_n)``; DA-WR first augments the
sample with a synthetic generator and then applies WR to the synthetic pool.
"""
from .core import RebalanceError, RebalanceWarning, Sample, Schema, SeedSpec, ValidationError, read_csv, write_csv
from .density import (
    BetaTarget,
    KdeModel,
    KdeTarget,
    NormalTarget,
    TargetDensity,
    eval_kde,
    eval_kde_trimmed,
    eval_target,
    fit_kde,
    parse_target,
)
from .diagnostics import Ecdf, ImbalanceReport, histogram, imbalance_report, ks_distance, ks_to_target
from .generators import GeneratorSpec, generate
from .pipeline import PipelineSpec, run_dawr, run_wr
from .resampling import DrawWeights, compute_weights, weighted_ecdf, weighted_resample

__version__ = "0.1.0"

__all__ = [
    "BetaTarget",
    "DrawWeights",
    "Ecdf",
    "GeneratorSpec",
    "ImbalanceReport",
    "KdeModel",
    "KdeTarget",
    "NormalTarget",
    "PipelineSpec",
    "RebalanceError",
    "RebalanceWarning",
    "Sample",
    "Schema",
    "SeedSpec",
    "TargetDensity",
    "ValidationError",
    "compute_weights",
    "eval_kde",
    "eval_kde_trimmed",
    "eval_target",
    "fit_kde",
    "generate",
    "histogram",
    "imbalance_report",
    "ks_distance",
    "ks_to_target",
    "parse_target",
    "read_csv",
    "run_dawr",
    "run_wr",
    "weighted_ecdf",
    "weighted_resample",
    "write_csv",
]
