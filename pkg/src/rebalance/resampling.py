"""Density-ratio drawing weights and weighted resampling of whole observations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RebalanceError, Sample, SeedSpec, ValidationError, as_seed
from .density import KdeModel, TargetDensity, eval_kde_trimmed, eval_target

__all__ = [
    "DrawWeights",
    "normalize_weights",
    "compute_weights",
    "weighted_resample",
    "draw_indices",
    "weighted_ecdf",
]

_UNDERFLOW = 1e-300


@dataclass(frozen=True, eq=False)
class DrawWeights:
    """Raw weights ``omega`` and drawing probabilities ``q = omega / sum(omega)``."""

    omega: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("omega", "q"):
            arr = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.omega.shape != self.q.shape:
            raise ValidationError("omega and q lengths differ")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @classmethod
    def from_omega(cls, omega) -> "DrawWeights":
        omega = np.asarray(omega, dtype=float).reshape(-1)
        return cls(omega, normalize_weights(omega))


def normalize_weights(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.size == 0:
        raise ValidationError("no weights to normalize")
    if np.any(omega < 0) or not np.all(np.isfinite(omega)):
        raise ValidationError("weights must be finite and nonnegative")
    total = omega.sum()
    if total < _UNDERFLOW:
        raise RebalanceError(
            "all drawing weights vanish: the target puts no mass on the sample's support"
        )
    return omega / total


def compute_weights(sample: Sample, target: TargetDensity, kde: KdeModel) -> DrawWeights:
    """``omega_i = f0(X_i) / max(f_hat(X_i), e_n)`` over the sample's covariates."""
    if kde.p != sample.p:
        raise ValidationError(f"KDE has {kde.p} coordinates, sample has {sample.p}")
    f0 = np.asarray(eval_target(target, sample.x), dtype=float).reshape(-1)
    fhat = np.asarray(eval_kde_trimmed(kde, sample.x), dtype=float).reshape(-1)
    return DrawWeights.from_omega(f0 / fhat)


def draw_indices(q, size: int, rng: np.random.Generator) -> np.ndarray:
    """Categorical draws by binary search on the cumulative probabilities."""
    cum = np.cumsum(np.asarray(q, dtype=float))
    u = rng.random(int(size)) * cum[-1]
    idx = np.searchsorted(cum, u, side="right")
    # guards the u == cum[-1] rounding edge; zero-probability tail rows are skipped
    last = int(np.flatnonzero(np.asarray(q) > 0)[-1])
    return np.minimum(idx, last)


def weighted_resample(
    sample: Sample, weights: DrawWeights, n_star: int | None = None, seed: SeedSpec | int = 0
) -> Sample:
    """Draw ``n_star`` rows (default ``n``) i.i.d. with replacement using ``weights.q``."""
    if weights.n != sample.n:
        raise ValidationError(f"{weights.n} weights for a sample of {sample.n} rows")
    n_star = sample.n if n_star is None else int(n_star)
    if n_star < 0:
        raise ValidationError("n_star must be nonnegative")
    idx = draw_indices(weights.q, n_star, as_seed(seed).rng())
    return sample.take(idx)


def weighted_ecdf(sample, weights, x, coordinate: int = 0):
    """``sum_i q_i 1{X_i[coordinate] <= x}``; ``x`` may be a scalar or an array."""
    values = sample.x if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if not 0 <= coordinate < values.shape[1]:
        raise ValidationError(f"coordinate {coordinate} out of range for p={values.shape[1]}")
    q = weights.q if isinstance(weights, DrawWeights) else np.asarray(weights, dtype=float)
    col = values[:, coordinate]
    order = np.argsort(col, kind="stable")
    sorted_col = col[order]
    cum = np.concatenate([[0.0], np.cumsum(q[order])])
    pos = np.searchsorted(sorted_col, np.asarray(x, dtype=float), side="right")
    out = cum[pos]
    # clamp the top to 1 exactly so rounding in the cumulative sum cannot leak
    out = np.where(pos == col.size, 1.0, out)
    return float(out) if np.ndim(out) == 0 else out
