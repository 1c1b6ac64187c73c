"""SMOTE-style interpolation between a seed row and one of its nearest neighbours."""
from __future__ import annotations

import numpy as np

from ..core import Sample, ValidationError, as_seed

__all__ = ["nearest_neighbors", "gen_smote"]


def nearest_neighbors(x: np.ndarray, rows: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of ``x`` for each row in ``rows``.

    Euclidean distance; equal distances are ordered by row index.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((rows.size, k), dtype=np.intp)
    sq = (x * x).sum(axis=1)
    for start in range(0, rows.size, chunk):
        r = rows[start : start + chunk]
        dist = sq[r][:, None] - 2.0 * x[r] @ x.T + sq[None, :]
        # exact zero for duplicates so the index tie-break applies
        dist[np.isclose(dist, 0.0, atol=1e-12 * (1.0 + sq.max()))] = 0.0
        np.maximum(dist, 0.0, out=dist)
        dist[np.arange(r.size), r] = np.inf
        out[start : start + chunk] = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return out


def gen_smote(sample: Sample, k: int, n_out: int, seed, lam: float | None = None) -> Sample:
    """Interpolate all columns between a uniform seed row and a random k-NN (in x).

    ``lam`` fixes the interpolation coefficient (test hook); by default it is U(0, 1)
    per synthetic row.
    """
    n = sample.n
    if n < 2:
        raise ValidationError("SMOTE needs at least 2 rows")
    if not 1 <= k <= n - 1:
        raise ValidationError(f"k must lie in [1, {n - 1}], got {k}")
    n_out = int(n_out)
    rng = as_seed(seed).rng()
    seeds = rng.integers(0, n, size=n_out)
    pick = rng.integers(0, k, size=n_out)
    lam_draw = rng.random(n_out)
    if lam is not None:
        lam_draw = np.full(n_out, float(lam))
    uniq, inverse = np.unique(seeds, return_inverse=True)
    nbrs = nearest_neighbors(sample.x, uniq, k)
    partners = nbrs[inverse, pick]
    z = sample.joint()
    zi, zj = z[seeds], z[partners]
    return sample.from_joint(zi + lam_draw[:, None] * (zj - zi))
