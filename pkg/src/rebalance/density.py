"""Gaussian kernel density estimation with a trimming floor, and target densities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .core import Sample, ValidationError, read_csv

__all__ = [
    "KdeModel",
    "TargetDensity",
    "BetaTarget",
    "NormalTarget",
    "KdeTarget",
    "bandwidth_factor",
    "rose_bandwidth",
    "silverman_bandwidth",
    "fit_kde",
    "eval_kde",
    "eval_kde_trimmed",
    "eval_target",
    "parse_target",
    "default_trimming",
]

_LOG_2PI = math.log(2.0 * math.pi)


def default_trimming(n: int) -> float:
    return 1.0 / (10.0 * n)


def bandwidth_factor(n: int, p: int) -> float:
    """Scalar ``(4 / ((p + 2) n)) ** (1 / (p + 4))`` shared by both plug-in rules."""
    return (4.0 / ((p + 2.0) * n)) ** (1.0 / (p + 4.0))


def _check_spread(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 points for a plug-in bandwidth, got {n}")
    sd = points.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        bad = np.flatnonzero(sd <= 0).tolist()
        raise ValidationError(f"zero-variance column(s) {bad}: bandwidth is degenerate")
    return sd


def rose_bandwidth(points: np.ndarray) -> np.ndarray:
    """Diagonal bandwidth with entries ``factor * sd_j``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sd = _check_spread(points)
    n, p = points.shape
    return np.diag(bandwidth_factor(n, p) * sd)


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    """Full bandwidth ``factor * S^(1/2)``; the kernel covariance is ``factor**2 * S``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_spread(points)
    n, p = points.shape
    cov = np.atleast_2d(np.cov(points, rowvar=False))
    w, v = np.linalg.eigh(cov)
    if np.min(w) <= 0:
        raise ValidationError("empirical covariance is singular")
    root = (v * np.sqrt(w)) @ v.T
    return bandwidth_factor(n, p) * root


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Fitted Gaussian product/full-matrix KDE.

    ``H`` is the bandwidth matrix in units of x; the kernel covariance is ``H @ H.T``.
    """

    points: np.ndarray
    H: np.ndarray
    e_n: float
    kernel: str = "gaussian"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.asarray(self.points).ndim == 1:
            pts = pts.T
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        p = pts.shape[1]
        if H.shape != (p, p):
            raise ValidationError(f"bandwidth must be {p}x{p}, got {H.shape}")
        if not np.allclose(H, H.T):
            raise ValidationError("bandwidth matrix must be symmetric")
        cov = H @ H.T
        try:
            if np.linalg.eigvalsh(H).min() <= 0:
                raise np.linalg.LinAlgError
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValidationError("bandwidth matrix must be positive definite") from None
        if not self.e_n > 0:
            raise ValidationError(f"trimming floor must be positive, got {self.e_n}")
        if self.kernel != "gaussian":
            raise ValidationError(f"unsupported kernel {self.kernel!r}")
        pts = pts.copy()
        pts.setflags(write=False)
        H = H.copy()
        H.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "e_n", float(self.e_n))
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_log_norm", -0.5 * p * _LOG_2PI - np.log(np.diag(chol)).sum())
        object.__setattr__(self, "_white", solve_triangular(chol, pts.T, lower=True).T)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


def _points(x, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if p == 1 else x.reshape(1, -1)
    if x.shape[1] != p:
        raise ValidationError(f"points must have {p} coordinates, got {x.shape[1]}")
    return x


def fit_kde(sample, bandwidth="silverman", e_n="default") -> KdeModel:
    """Fit a Gaussian KDE to the covariates of ``sample``.

    Parameters
    ----------
    sample : Sample or array of shape (n, p)
    bandwidth : {"silverman", "rose"} or array
        Plug-in rule name, or an explicit (p, p) bandwidth matrix (scalar for p=1).
    e_n : "default" or float
        Trimming floor; the default is ``1 / (10 n)``.
    """
    pts = sample.x if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n = pts.shape[0]
    if isinstance(bandwidth, str):
        rule = bandwidth.lower()
        if rule == "silverman":
            H = silverman_bandwidth(pts)
        elif rule == "rose":
            H = rose_bandwidth(pts)
        else:
            raise ValidationError(f"unknown bandwidth rule {bandwidth!r}")
    else:
        if n < 1:
            raise ValidationError("cannot fit a KDE to an empty sample")
        H = np.atleast_2d(np.asarray(bandwidth, dtype=float))
    if isinstance(e_n, str):
        if e_n != "default":
            raise ValidationError(f"unknown trimming rule {e_n!r}")
        e_n = default_trimming(n)
    return KdeModel(pts, H, float(e_n))


def eval_kde(model: KdeModel, x, chunk: int = 2048) -> np.ndarray | float:
    """``(1/n) sum_j K_H(x - X_j)`` at one point or an (m, p) batch of points."""
    scalar = np.ndim(x) == 0 or (np.ndim(x) == 1 and model.p > 1)
    pts = _points(x, model.p)
    data_w = model._white
    query_w = solve_triangular(model._chol, pts.T, lower=True).T
    out = np.empty(pts.shape[0])
    log_n = math.log(model.n)
    for start in range(0, pts.shape[0], chunk):
        q = query_w[start : start + chunk]
        if model.p == 1:
            sq = (q[:, :1] - data_w[:, 0][None, :]) ** 2
        else:
            sq = (
                (q**2).sum(1)[:, None]
                - 2.0 * q @ data_w.T
                + (data_w**2).sum(1)[None, :]
            )
            np.maximum(sq, 0.0, out=sq)
        out[start : start + chunk] = np.exp(
            special.logsumexp(-0.5 * sq, axis=1) + model._log_norm - log_n
        )
    return float(out[0]) if scalar else out


def eval_kde_trimmed(model: KdeModel, x):
    """``max(f_hat(x), e_n)``."""
    return np.maximum(eval_kde(model, x), model.e_n)


class TargetDensity:
    """An evaluatable target density over covariate space.

    Analytic targets are univariate; for p > 1 they act as the product of
    identical marginals over the coordinates.
    """

    name = "target"

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, t) -> np.ndarray:
        """Marginal CDF of the first coordinate."""
        raise NotImplementedError

    def ppf(self, u) -> np.ndarray:
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def spec_string(self) -> str:
        raise NotImplementedError

    def rvs(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` values of the first-coordinate law."""
        raise NotImplementedError


def _product(values: np.ndarray) -> np.ndarray:
    return values.prod(axis=1) if values.ndim == 2 else values


@dataclass(frozen=True)
class BetaTarget(TargetDensity):
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValidationError(f"Beta parameters must be positive, got ({self.a}, {self.b})")

    def _logpdf1(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        inside = (x > 0) & (x < 1)
        xi = x[inside]
        log_b = special.gammaln(self.a) + special.gammaln(self.b) - special.gammaln(self.a + self.b)
        out[inside] = (self.a - 1) * np.log(xi) + (self.b - 1) * np.log1p(-xi) - log_b
        # closed endpoints: finite only when the exponent vanishes
        for edge, expo in ((0.0, self.a), (1.0, self.b)):
            at = x == edge
            if np.any(at):
                if expo == 1:
                    out[at] = -log_b
                elif expo < 1:
                    out[at] = np.inf
        return out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _product(np.exp(self._logpdf1(x)))

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return special.betainc(self.a, self.b, t)

    def ppf(self, u):
        return special.betaincinv(self.a, self.b, np.asarray(u, dtype=float))

    @property
    def support(self):
        return (0.0, 1.0)

    def spec_string(self):
        return f"beta:{self.a:g},{self.b:g}"

    def rvs(self, size, rng):
        return rng.beta(self.a, self.b, size=int(size))


@dataclass(frozen=True)
class NormalTarget(TargetDensity):
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"Normal sigma must be positive, got {self.sigma}")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _product(np.exp(-0.5 * z * z - 0.5 * _LOG_2PI) / self.sigma)

    def cdf(self, t):
        return special.ndtr((np.asarray(t, dtype=float) - self.mu) / self.sigma)

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float))

    def spec_string(self):
        return f"normal:{self.mu:g},{self.sigma:g}"

    def rvs(self, size, rng):
        return rng.normal(self.mu, self.sigma, size=int(size))


@dataclass(frozen=True, eq=False)
class KdeTarget(TargetDensity):
    """Target given by a trimmed KDE, typically fitted on a reference population."""

    model: KdeModel
    source: str = ""

    def pdf(self, x):
        return eval_kde_trimmed(self.model, x)

    def cdf(self, t):
        # untrimmed kernel mixture CDF of the first coordinate
        t = np.asarray(t, dtype=float)
        h = math.sqrt((self.model.H @ self.model.H.T)[0, 0])
        centers = self.model.points[:, 0]
        flat = t.reshape(-1)
        out = np.empty(flat.shape)
        for start in range(0, flat.size, 2048):
            block = flat[start : start + 2048]
            out[start : start + 2048] = special.ndtr(
                (block[:, None] - centers[None, :]) / h
            ).mean(axis=1)
        return out.reshape(t.shape)

    def ppf(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        h = math.sqrt((self.model.H @ self.model.H.T)[0, 0])
        lo = self.model.points[:, 0].min() - 12 * h
        hi = self.model.points[:, 0].max() + 12 * h
        out = np.empty(u.shape)
        for i, ui in enumerate(u):
            if ui <= 0:
                out[i] = -np.inf
            elif ui >= 1:
                out[i] = np.inf
            else:
                out[i] = brentq(lambda t: float(self.cdf(t)) - ui, lo, hi, xtol=1e-12)
        return out

    def spec_string(self):
        return f"kde:{self.source}"

    def rvs(self, size, rng):
        h = math.sqrt((self.model.H @ self.model.H.T)[0, 0])
        rows = rng.integers(0, self.model.n, size=int(size))
        return self.model.points[rows, 0] + h * rng.standard_normal(int(size))


def eval_target(target: TargetDensity, x):
    """Target density at one point or a batch of points."""
    return target.pdf(x)


def parse_target(text: str, bandwidth="silverman", schema=None) -> TargetDensity:
    """Parse ``beta:a,b``, ``normal:mu,sigma`` or ``kde:<path.csv>``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind in ("beta", "normal"):
        try:
            params = [float(v) for v in rest.split(",")]
        except ValueError:
            raise ValidationError(f"bad target parameters in {text!r}") from None
        if len(params) != 2:
            raise ValidationError(f"{kind} target needs two parameters, got {text!r}")
        return BetaTarget(*params) if kind == "beta" else NormalTarget(*params)
    if kind == "kde":
        path = Path(rest)
        ref = read_csv(path, schema)
        return KdeTarget(fit_kde(ref, bandwidth), str(path))
    raise ValidationError(f"unknown target kind in {text!r}")
