"""Perturbation generators: Gaussian noise and the smoothed bootstrap."""
from __future__ import annotations

import warnings

import numpy as np

from ..core import RebalanceWarning, Sample, ValidationError, as_seed
from ..density import bandwidth_factor

__all__ = ["gen_gaussian_noise", "smoothed_bootstrap_bandwidth", "gen_smoothed_bootstrap"]


def _seed_rows(n: int, n_out: int, rng, selection: str) -> np.ndarray:
    if selection == "uniform":
        return rng.integers(0, n, size=n_out)
    if selection == "sequential":
        return np.arange(n_out) % n
    raise ValidationError(f"unknown seed selection {selection!r}")


def gen_gaussian_noise(
    sample: Sample, delta: float, n_out: int, seed, seed_selection: str = "uniform"
) -> Sample:
    """Seed rows plus independent N(0, delta * var_col) noise on every column.

    ``seed_selection="sequential"`` perturbs rows in order (row ``m`` uses source
    row ``m mod n``) instead of drawing seeds uniformly; with ``delta=0`` and
    ``n_out=n`` that makes the generator the identity.
    """
    if sample.n < 2:
        raise ValidationError("Gaussian noise needs at least 2 rows")
    if delta < 0:
        raise ValidationError(f"delta must be nonnegative, got {delta}")
    rng = as_seed(seed).rng()
    z = sample.joint()
    var = z.var(axis=0, ddof=1)
    if delta > 0 and np.any(var == 0):
        warnings.warn(
            f"zero-variance column(s) {np.flatnonzero(var == 0).tolist()}: no noise added there",
            RebalanceWarning,
            stacklevel=2,
        )
    rows = _seed_rows(sample.n, int(n_out), rng, seed_selection)
    noise = rng.standard_normal((int(n_out), sample.d)) * np.sqrt(delta * var)
    return sample.from_joint(z[rows] + noise)


def smoothed_bootstrap_bandwidth(z: np.ndarray, rule: str) -> np.ndarray:
    """Joint-space bandwidth matrix ``H`` with kernel covariance ``H @ H.T``.

    ``rose``: ``diag(c * sd_j)``. ``silverman``: ``c * S^(1/2)``, i.e. covariance
    ``c**2 * S``. ``c = (4 / ((d + 2) n)) ** (1 / (d + 4))``.
    """
    n, d = z.shape
    c = bandwidth_factor(n, d)
    rule = rule.lower()
    if rule == "rose":
        return np.diag(c * z.std(axis=0, ddof=1))
    if rule == "silverman":
        cov = np.atleast_2d(np.cov(z, rowvar=False))
        w, v = np.linalg.eigh(cov)
        if w.min() <= 1e-12 * max(w.max(), 1e-300):
            warnings.warn(
                "singular empirical covariance; adding a 1e-8 ridge",
                RebalanceWarning,
                stacklevel=3,
            )
            cov = cov + 1e-8 * max(np.trace(cov) / d, 1.0) * np.eye(d)
            w, v = np.linalg.eigh(cov)
        return c * (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    raise ValidationError(f"unknown smoothed bootstrap rule {rule!r}")


def gen_smoothed_bootstrap(
    sample: Sample, rule: str, n_out: int, seed, bandwidth: np.ndarray | None = None
) -> Sample:
    """Uniform seed rows plus a Gaussian kernel draw in the joint (x, y, aux) space.

    ``bandwidth`` overrides the plug-in rule; a zero matrix yields a plain bootstrap.
    """
    if sample.n < 2:
        raise ValidationError("smoothed bootstrap needs at least 2 rows")
    z = sample.joint()
    H = smoothed_bootstrap_bandwidth(z, rule) if bandwidth is None else np.atleast_2d(bandwidth)
    if H.shape != (sample.d, sample.d):
        raise ValidationError(f"bandwidth must be {sample.d}x{sample.d}")
    rng = as_seed(seed).rng()
    rows = rng.integers(0, sample.n, size=int(n_out))
    eps = rng.standard_normal((int(n_out), sample.d))
    return sample.from_joint(z[rows] + eps @ H.T)
