"""Factor analysis ``z = W h + mu + eps`` fitted by EM, used as a generator."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import RebalanceWarning, Sample, ValidationError, as_seed

__all__ = ["FaModel", "fit_factor_analysis", "sample_factor_model", "gen_factor_analysis"]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class FaModel:
    loading: np.ndarray  # (d, r)
    mean: np.ndarray  # (d,)
    noise_var: np.ndarray  # (d,)
    log_likelihood_path: tuple[float, ...] = field(default=())
    converged: bool = True

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.loading, dtype=float))
        mu = np.asarray(self.mean, dtype=float).reshape(-1)
        psi = np.asarray(self.noise_var, dtype=float).reshape(-1)
        if W.shape[0] != mu.size or psi.size != mu.size:
            raise ValidationError("inconsistent factor model shapes")
        if np.any(psi <= 0):
            raise ValidationError("noise variances must be positive")
        object.__setattr__(self, "loading", W)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "noise_var", psi)

    @property
    def covariance(self) -> np.ndarray:
        """Model-implied covariance ``W W^T + diag(noise_var)``."""
        return self.loading @ self.loading.T + np.diag(self.noise_var)


def _loglik(S: np.ndarray, n: int, W: np.ndarray, psi: np.ndarray) -> float:
    C = W @ W.T + np.diag(psi)
    sign, logdet = np.linalg.slogdet(C)
    d = S.shape[0]
    return float(-0.5 * n * (d * _LOG_2PI + logdet + np.trace(np.linalg.solve(C, S))))


def fit_factor_analysis(
    data, r: int, max_iter: int = 5000, tol: float = 1e-8
) -> FaModel:
    """Maximum-likelihood factor analysis by EM.

    Starts from the leading principal directions. Stops when the relative
    log-likelihood gain drops below ``tol``; at ``max_iter`` the best iterate is
    returned with a warning.
    """
    z = data.joint() if isinstance(data, Sample) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = z.shape
    if not 1 <= r < d:
        raise ValidationError(f"number of factors must lie in [1, {d - 1}], got {r}")
    if n <= d:
        raise ValidationError(f"need more than {d} rows, got {n}")
    mu = z.mean(axis=0)
    S = np.cov(z, rowvar=False, bias=True)
    diag = np.diag(S).copy()
    if np.any(diag <= 0):
        raise ValidationError("factor analysis needs non-constant columns")
    floor = 1e-8 * diag

    w, v = np.linalg.eigh(S)
    order = np.argsort(w)[::-1][:r]
    resid = w[np.argsort(w)[::-1][r:]].mean()
    W = v[:, order] * np.sqrt(np.maximum(w[order] - resid, 1e-3 * w[order]))
    psi = np.maximum(diag - (W * W).sum(axis=1), np.maximum(floor, 1e-3 * diag))

    path = [_loglik(S, n, W, psi)]
    best = (path[0], W, psi)
    converged = False
    eye = np.eye(r)
    for _ in range(max_iter):
        C = W @ W.T + np.diag(psi)
        beta = np.linalg.solve(C, W).T  # W^T C^{-1}, (r, d)
        SbT = S @ beta.T
        Ehh = eye - beta @ W + beta @ SbT
        W = SbT @ np.linalg.inv(Ehh)
        psi = np.maximum(np.diag(S - W @ beta @ S), floor)
        ll = _loglik(S, n, W, psi)
        path.append(ll)
        if ll > best[0]:
            best = (ll, W, psi)
        if abs(path[-1] - path[-2]) <= tol * max(1.0, abs(ll)):
            converged = True
            break
    if not converged:
        warnings.warn(
            f"factor analysis EM did not converge in {max_iter} iterations",
            RebalanceWarning,
            stacklevel=2,
        )
    _, W, psi = best
    return FaModel(W, mu, psi, tuple(path), converged)


def sample_factor_model(model: FaModel, n_out: int, seed) -> np.ndarray:
    n_out = int(n_out)
    rng = as_seed(seed).rng()
    d, r = model.loading.shape
    h = rng.standard_normal((n_out, r))
    eps = rng.standard_normal((n_out, d)) * np.sqrt(model.noise_var)
    return h @ model.loading.T + model.mean + eps


def gen_factor_analysis(sample: Sample, r: int, n_out: int, seed) -> Sample:
    model = fit_factor_analysis(sample, r)
    return sample.from_joint(sample_factor_model(model, n_out, seed))
