"""Synthetic data generators for the data-augmentation step."""
from .copula import CopulaModel, fit_copula, gen_gaussian_copula, sample_copula
from .factor import FaModel, fit_factor_analysis, gen_factor_analysis, sample_factor_model
from .gmm import GmmModel, fit_gmm, gen_gmm, gmm_labels, sample_gmm
from .perturbation import gen_gaussian_noise, gen_smoothed_bootstrap, smoothed_bootstrap_bandwidth
from .registry import (
    KINDS,
    GeneratorSpec,
    allocate_counts,
    gen_cluster_conditioned,
    generate,
    generate_base,
)
from .smote import gen_smote, nearest_neighbors

__all__ = [
    "CopulaModel",
    "FaModel",
    "GeneratorSpec",
    "GmmModel",
    "KINDS",
    "allocate_counts",
    "fit_copula",
    "fit_factor_analysis",
    "fit_gmm",
    "gen_cluster_conditioned",
    "gen_factor_analysis",
    "gen_gaussian_copula",
    "gen_gaussian_noise",
    "gen_gmm",
    "gen_smote",
    "gen_smoothed_bootstrap",
    "generate",
    "generate_base",
    "gmm_labels",
    "nearest_neighbors",
    "sample_copula",
    "sample_factor_model",
    "sample_gmm",
    "smoothed_bootstrap_bandwidth",
]
