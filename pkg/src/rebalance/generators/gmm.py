"""Gaussian mixture fitted by EM on the joint (x, y, aux) columns."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..core import RebalanceError, RebalanceWarning, Sample, ValidationError, as_seed
from ..resampling import draw_indices

__all__ = ["GmmModel", "fit_gmm", "sample_gmm", "gmm_log_resp", "gmm_labels", "gen_gmm"]

_LOG_2PI = math.log(2.0 * math.pi)
_COLLAPSE = 1e-10


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture weights (G,), means (G, d), covariances (G, d, d).

    ``objective_path`` is the per-iteration value of the EM objective, the
    log-likelihood minus the covariance ridge penalty; it is nondecreasing.
    ``log_likelihood`` is the plain log-likelihood at the returned parameters
    and ``log_likelihood_path`` its value at every iteration.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float = math.nan
    objective_path: tuple[float, ...] = field(default=())
    log_likelihood_path: tuple[float, ...] = field(default=())
    n_iter: int = 0
    converged: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        G, d = mu.shape
        if w.shape != (G,) or cov.shape != (G, d, d):
            raise ValidationError("inconsistent mixture parameter shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("mixture weights must be nonnegative and sum to 1")
        chol = np.empty_like(cov)
        for g in range(G):
            try:
                chol[g] = np.linalg.cholesky(cov[g])
            except np.linalg.LinAlgError:
                raise ValidationError(f"covariance {g} is not positive definite") from None
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _log_gauss(z: np.ndarray, means: np.ndarray, chol: np.ndarray) -> np.ndarray:
    n, d = z.shape
    out = np.empty((n, means.shape[0]))
    for g in range(means.shape[0]):
        L = chol[g]
        sol = np.linalg.solve(L, (z - means[g]).T)
        out[:, g] = (
            -0.5 * (sol * sol).sum(axis=0)
            - np.log(np.diag(L)).sum()
            - 0.5 * d * _LOG_2PI
        )
    return out


def gmm_log_resp(model: GmmModel, z) -> tuple[np.ndarray, np.ndarray]:
    """Per-row log responsibilities (n, G) and per-row log densities (n,)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    lj = _log_gauss(z, model.means, model._chol) + np.log(np.maximum(model.weights, 1e-300))
    ld = logsumexp(lj, axis=1)
    return lj - ld[:, None], ld


def gmm_labels(model: GmmModel, z) -> np.ndarray:
    """Hard assignment to the component of maximal responsibility."""
    log_resp, _ = gmm_log_resp(model, z)
    return np.argmax(log_resp, axis=1)


def _kmeanspp(z: np.ndarray, G: int, rng) -> np.ndarray:
    n = z.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((z - z[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, G):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(draw_indices(d2 / total, 1, rng)[0])
        centers.append(nxt)
        d2 = np.minimum(d2, ((z - z[nxt]) ** 2).sum(axis=1))
    return z[centers]


def _m_step(z, resp, ridge_scale):
    n, d = z.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    means = (resp.T @ z) / nk[:, None]
    G = resp.shape[1]
    cov = np.empty((G, d, d))
    eye = np.eye(d)
    for g in range(G):
        diff = z - means[g]
        cov[g] = (resp[:, g][:, None] * diff).T @ diff / nk[g] + (ridge_scale / nk[g]) * eye
    return weights, means, cov, nk


class _Collapse(Exception):
    pass


def _em(z, G, max_iter, tol, rng, ridge_scale):
    n, d = z.shape
    centers = _kmeanspp(z, G, rng)
    d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, G))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0
    weights, means, cov, nk = _m_step(z, resp, ridge_scale)
    path = []
    ll_path = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        chol = np.linalg.cholesky(cov)
        lj = _log_gauss(z, means, chol) + np.log(weights)
        ld = logsumexp(lj, axis=1)
        ll = float(ld.sum())
        # penalty matches the (ridge_scale / N_g) I term of the M-step
        inv_traces = sum(
            float(np.trace(np.linalg.inv(cov[g]))) for g in range(G)
        )
        path.append(ll - 0.5 * ridge_scale * inv_traces)
        ll_path.append(ll)
        if len(path) > 1 and abs(path[-1] - path[-2]) < tol * max(1.0, abs(path[-1])):
            converged = True
            break
        resp = np.exp(lj - ld[:, None])
        weights, means, cov, nk = _m_step(z, resp, ridge_scale)
        if np.min(nk) / n < _COLLAPSE:
            raise _Collapse()
    return weights, means, cov, path, it, converged, ll_path


def fit_gmm(
    data, G: int, max_iter: int = 200, tol: float = 1e-8, seed=0, reg: float = 1e-6, n_init: int = 3
) -> GmmModel:
    """EM fit of a G-component full-covariance mixture.

    Columns are standardized internally and parameters mapped back. Each
    covariance gets a ridge of about ``reg * trace(S) / d`` (exactly that for
    equal-size components). k-means++ initialisation, ``n_init`` restarts,
    best objective kept. G=1 returns the closed-form maximum-likelihood fit.
    """
    z = data.joint() if isinstance(data, Sample) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = z.shape
    G = int(G)
    if G < 1:
        raise ValidationError("G must be at least 1")
    if n < G * (d + 1):
        raise ValidationError(f"need at least {G * (d + 1)} rows for G={G}, d={d}; got {n}")
    loc = z.mean(axis=0)
    scale = z.std(axis=0)
    scale[scale == 0] = 1.0
    zs = (z - loc) / scale
    log_jac = -n * np.log(scale).sum()

    if G == 1:
        mean = z.mean(axis=0)
        cov = np.atleast_2d(np.cov(z, rowvar=False, bias=True))
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            warnings.warn("singular covariance; adding ridge", RebalanceWarning, stacklevel=2)
            cov = cov + reg * max(np.trace(cov) / d, 1e-12) * np.eye(d)
        model = GmmModel(np.ones(1), mean[None], cov[None])
        _, ld = gmm_log_resp(model, z)
        ll = float(ld.sum())
        return GmmModel(np.ones(1), mean[None], cov[None], ll, (ll,), (ll,), 0, True)

    ridge_scale = reg * (np.trace(np.atleast_2d(np.cov(zs, rowvar=False, bias=True))) / d) * n / G
    rng = as_seed(seed).rng()
    best = None
    for _ in range(max(1, n_init)):
        try:
            res = _em(zs, G, max_iter, tol, rng, ridge_scale)
        except (_Collapse, np.linalg.LinAlgError):
            continue
        if best is None or res[3][-1] > best[3][-1]:
            best = res
    if best is None:
        if G == 1:
            raise RebalanceError("EM failed for a single component")
        warnings.warn(
            f"EM collapsed with G={G}; refitting with G={G - 1}", RebalanceWarning, stacklevel=2
        )
        return fit_gmm(z, G - 1, max_iter, tol, seed, reg, n_init)
    weights, means_s, cov_s, path, it, converged, ll_path = best
    means = loc + means_s * scale
    cov = cov_s * np.outer(scale, scale)[None]
    weights = weights / weights.sum()
    model = GmmModel(weights, means, cov)
    _, ld = gmm_log_resp(model, z)
    return GmmModel(
        weights,
        means,
        cov,
        float(ld.sum()),
        tuple(v + log_jac for v in path),
        tuple(v + log_jac for v in ll_path),
        it,
        converged,
    )


def sample_gmm(model: GmmModel, n_out: int, seed) -> np.ndarray:
    """Draw ``n_out`` joint rows: component by weight, then a Gaussian draw."""
    n_out = int(n_out)
    rng = as_seed(seed).rng()
    comp = draw_indices(model.weights, n_out, rng) if n_out else np.empty(0, dtype=np.intp)
    eps = rng.standard_normal((n_out, model.dim))
    return model.means[comp] + np.einsum("nij,nj->ni", model._chol[comp], eps)


def gen_gmm(sample: Sample, G: int, n_out: int, seed, max_iter: int = 200) -> Sample:
    seed = as_seed(seed)
    model = fit_gmm(sample, G, max_iter=max_iter, seed=seed.child(0))
    return sample.from_joint(sample_gmm(model, n_out, seed.child(1)))
