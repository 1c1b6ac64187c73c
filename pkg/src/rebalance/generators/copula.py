"""Gaussian copula with empirical marginals."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import rankdata

from ..core import RebalanceWarning, Sample, ValidationError, as_seed

__all__ = ["CopulaModel", "fit_copula", "sample_copula", "gen_gaussian_copula"]


@dataclass(frozen=True, eq=False)
class CopulaModel:
    """Sorted column values (n, d) for the empirical marginals; correlation R (d, d)."""

    marginals: np.ndarray
    correlation: np.ndarray
    shrinkage: float = 0.0

    @property
    def dim(self) -> int:
        return self.marginals.shape[1]

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Per-column empirical quantile, linear between order statistics at i/(n+1)."""
        n = self.marginals.shape[0]
        grid = np.arange(1, n + 1) / (n + 1.0)
        return np.column_stack(
            [np.interp(u[:, j], grid, self.marginals[:, j]) for j in range(self.dim)]
        )


def _regularize(R: np.ndarray) -> tuple[np.ndarray, float]:
    d = R.shape[0]
    s = 0.0
    trial = R
    while True:
        try:
            np.linalg.cholesky(trial)
            return trial, s
        except np.linalg.LinAlgError:
            s = 1e-10 if s == 0 else s * 10
            trial = (1.0 - s) * R + s * np.eye(d)


def fit_copula(data) -> CopulaModel:
    z = data.joint() if isinstance(data, Sample) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = z.shape
    if n < 3:
        raise ValidationError(f"copula needs at least 3 rows, got {n}")
    if np.any(np.ptp(z, axis=0) == 0):
        raise ValidationError("copula needs non-constant columns")
    u = rankdata(z, axis=0) / (n + 1.0)
    scores = special.ndtri(u)
    R = np.atleast_2d(np.corrcoef(scores, rowvar=False))
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    R_pd, s = _regularize(R)
    if s > 0:
        warnings.warn(
            f"normal-score correlation is rank-deficient; shrunk toward I by {s:g}",
            RebalanceWarning,
            stacklevel=2,
        )
    return CopulaModel(np.sort(z, axis=0), R_pd, s)


def sample_copula(model: CopulaModel, n_out: int, seed) -> np.ndarray:
    rng = as_seed(seed).rng()
    L = np.linalg.cholesky(model.correlation)
    g = rng.standard_normal((int(n_out), model.dim)) @ L.T
    return model.quantile(special.ndtr(g))


def gen_gaussian_copula(sample: Sample, n_out: int, seed) -> Sample:
    return sample.from_joint(sample_copula(fit_copula(sample), n_out, seed))
