"""Downstream regression learners (penalized cubic spline, random forest) and RMSE."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import RebalanceWarning, Sample, ValidationError, as_seed

__all__ = [
    "SplineModel",
    "ForestModel",
    "RegressionTree",
    "fit_spline",
    "fit_tree",
    "fit_forest",
    "predict",
    "rmse",
    "fit_model",
]


def rmse(y_true, y_pred) -> float:
    """Root mean squared error."""
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValidationError("rmse of empty vectors")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def _xs(xs) -> np.ndarray:
    if isinstance(xs, Sample):
        return xs.x
    xs = np.asarray(xs, dtype=float)
    return xs.reshape(-1, 1) if xs.ndim <= 1 else xs


# ---------------------------------------------------------------------------
# penalized regression spline


@dataclass(frozen=True, eq=False)
class SplineModel:
    """Truncated-power cubic spline in ``u = (x - center) / scale``.

    ``coef`` is ordered ``[1, u, u^2, u^3, (u - k_1)_+^3, ...]``; the
    polynomial part continues unchanged beyond the outermost knots.
    """

    knots: np.ndarray
    coef: np.ndarray
    lam: float
    center: float = 0.0
    scale: float = 1.0

    def basis(self, x) -> np.ndarray:
        return _spline_basis((np.asarray(x, dtype=float).reshape(-1) - self.center) / self.scale,
                             (self.knots - self.center) / self.scale)


def _spline_basis(u: np.ndarray, knots_u: np.ndarray) -> np.ndarray:
    cols = [np.ones_like(u), u, u * u, u**3]
    cols += [np.clip(u - k, 0.0, None) ** 3 for k in knots_u]
    return np.column_stack(cols)


def fit_spline(train: Sample, knot_count: int = 20, lam: float = 1e-4) -> SplineModel:
    """Ridge-penalized least squares on a cubic truncated-power basis.

    Knots sit at the ``k / (knot_count + 1)`` quantiles of the training
    covariate; the penalty ``lam`` applies to the knot coefficients only.
    """
    if train.p != 1:
        raise ValidationError("the spline learner handles a single covariate")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    x = train.x[:, 0]
    y = train.y
    if train.n <= knot_count + 4:
        raise ValidationError(f"need more than {knot_count + 4} rows, got {train.n}")
    knots = np.unique(np.quantile(x, np.arange(1, knot_count + 1) / (knot_count + 1.0)))
    center = float(x.min())
    scale = float(np.ptp(x)) or 1.0
    u = (x - center) / scale
    B = _spline_basis(u, (knots - center) / scale)
    ncol = B.shape[1]
    pen = np.zeros(ncol)
    pen[4:] = 1.0
    lam_used = float(lam)
    while True:
        A = np.vstack([B, np.diag(np.sqrt(lam_used * pen))])
        rhs = np.concatenate([y, np.zeros(ncol)])
        coef, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
        if rank == ncol or lam_used > 1e6:
            break
        new = lam_used * 10 if lam_used > 0 else 1e-10
        warnings.warn(
            f"rank-deficient spline system at lambda={lam_used:g}; retrying with {new:g}",
            RebalanceWarning,
            stacklevel=2,
        )
        lam_used = new
    return SplineModel(knots, coef, lam_used, center, scale)


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat tree: internal nodes have ``feature >= 0``; go left iff ``x[f] <= threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_size: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.value[node]
            rows = np.flatnonzero(internal)
            n_i = node[rows]
            go_left = X[rows, f[rows]] <= self.threshold[n_i]
            node[rows] = np.where(go_left, self.left[n_i], self.right[n_i])


def fit_tree(X, y, max_depth: int = 8, min_leaf: int = 5, mtry: int | None = None,
             rng: np.random.Generator | None = None) -> RegressionTree:
    """CART regression tree grown breadth-first, one vectorized pass per level.

    Splits maximise the decrease in within-node squared error; each node
    considers ``mtry`` randomly chosen features (all of them by default).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    mtry = p if mtry is None else max(1, min(int(mtry), p))
    if mtry < p and rng is None:
        raise ValidationError("feature subsampling needs an rng")

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [float(y.mean()) if n else 0.0]
    size = [n]
    node_of = np.zeros(n, dtype=np.intp)
    active = np.array([0]) if (max_depth > 0 and n >= 2 * min_leaf) else np.empty(0, dtype=np.intp)
    scale = float(np.sum(y * y)) + 1.0

    for _ in range(max_depth):
        if active.size == 0:
            break
        slot = np.full(len(feature), -1)
        slot[active] = np.arange(active.size)
        rows = np.flatnonzero(slot[node_of] >= 0)
        seg_of_row = slot[node_of[rows]]
        A = active.size
        best_gain = np.full(A, -np.inf)
        best_feat = np.full(A, -1)
        best_thr = np.zeros(A)
        if mtry < p:
            keys = rng.random((A, p))
            allowed = np.argsort(keys, axis=1)[:, :mtry]
            allow = np.zeros((A, p), dtype=bool)
            allow[np.arange(A)[:, None], allowed] = True
        else:
            allow = np.ones((A, p), dtype=bool)
        for f in range(p):
            xf = X[rows, f]
            order = np.lexsort((xf, seg_of_row))
            seg = seg_of_row[order]
            xs = xf[order]
            ys = y[rows][order]
            m = seg.size
            starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
            seg_ids = seg[starts]
            lengths = np.diff(np.r_[starts, m])
            cs = np.cumsum(ys)
            base = np.r_[0.0, cs][starts]
            seg_start = np.repeat(starts, lengths)
            seg_len = np.repeat(lengths, lengths)
            tot = np.repeat(np.r_[0.0, cs][starts + lengths] - base, lengths)
            n_left = np.arange(m) - seg_start + 1
            n_right = seg_len - n_left
            s_left = cs - np.repeat(base, lengths)
            nxt = np.r_[xs[1:], np.inf]
            valid = (n_left >= min_leaf) & (n_right >= min_leaf) & (xs < nxt)
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = s_left**2 / n_left + (tot - s_left) ** 2 / n_right - tot**2 / seg_len
            gain = np.where(valid, gain, -np.inf)
            seg_best = np.maximum.reduceat(gain, starts)
            # first position attaining each segment's maximum
            hit = gain == np.repeat(seg_best, lengths)
            hit &= np.isfinite(gain)
            first = np.full(A, -1)
            pos = np.flatnonzero(hit)
            if pos.size:
                seg_for_pos = seg[pos]
                uniq, idx = np.unique(seg_for_pos, return_index=True)
                first[uniq] = pos[idx]
            cand = np.full(A, -np.inf)
            cand[seg_ids] = seg_best
            better = allow[:, f] & (cand > best_gain) & (first >= 0)
            if better.any():
                b = np.flatnonzero(better)
                j = first[b]
                lo, hi = xs[j], xs[j + 1]
                thr = lo + 0.5 * (hi - lo)
                thr = np.where(thr >= hi, lo, thr)
                best_gain[b] = cand[b]
                best_feat[b] = f
                best_thr[b] = thr
        split = (best_feat >= 0) & (best_gain > 1e-12 * scale)
        next_active = []
        child_left = np.full(A, -1)
        child_right = np.full(A, -1)
        for a in np.flatnonzero(split):
            node = int(active[a])
            lid = len(feature)
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
            value += [0.0, 0.0]
            size += [0, 0]
            feature[node] = int(best_feat[a])
            threshold[node] = float(best_thr[a])
            left[node], right[node] = lid, lid + 1
            child_left[a], child_right[a] = lid, lid + 1
        if not split.any():
            break
        r_split = split[seg_of_row]
        sr = rows[r_split]
        a_of = seg_of_row[r_split]
        go_left = X[sr, best_feat[a_of]] <= best_thr[a_of]
        new_nodes = np.where(go_left, child_left[a_of], child_right[a_of])
        node_of[sr] = new_nodes
        counts = np.bincount(new_nodes, minlength=len(feature))
        sums = np.bincount(new_nodes, weights=y[sr], minlength=len(feature))
        for a in np.flatnonzero(split):
            for c in (child_left[a], child_right[a]):
                size[c] = int(counts[c])
                value[c] = float(sums[c] / counts[c])
                if size[c] >= 2 * min_leaf:
                    next_active.append(c)
        active = np.array(next_active, dtype=np.intp)

    return RegressionTree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right),
        np.array(value), np.array(size),
    )


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    n_trees: int
    max_depth: int
    min_leaf: int
    mtry: int
    params: dict = field(default_factory=dict)


def fit_forest(
    train: Sample,
    trees: int = 200,
    max_depth: int = 8,
    min_leaf: int = 5,
    seed=0,
    mtry: int | None = None,
) -> ForestModel:
    """Bagged CART trees on bootstrap resamples; ``mtry`` defaults to ``max(1, p // 3)``.

    Tree ``t`` draws from ``seed.child(t)``. With one covariate this is bagging.
    """
    if min_leaf < 1 or max_depth < 0 or trees < 1:
        raise ValidationError("need trees >= 1, max_depth >= 0 and min_leaf >= 1")
    if train.n < 2 * min_leaf:
        raise ValidationError(f"need at least {2 * min_leaf} rows, got {train.n}")
    seed = as_seed(seed)
    X, y = train.x, train.y
    n, p = X.shape
    mtry = max(1, p // 3) if mtry is None else int(mtry)
    out = []
    for t in range(int(trees)):
        rng = seed.child(t).rng()
        boot = rng.integers(0, n, size=n)
        out.append(fit_tree(X[boot], y[boot], max_depth, min_leaf, mtry, rng))
    params = {"trees": int(trees), "max_depth": max_depth, "min_leaf": min_leaf, "mtry": mtry}
    return ForestModel(tuple(out), int(trees), max_depth, min_leaf, mtry, params)


def predict(model, xs) -> np.ndarray:
    """Predictions of a fitted spline or forest at covariate rows ``xs``."""
    X = _xs(xs)
    if isinstance(model, SplineModel):
        return model.basis(X[:, 0]) @ model.coef
    if isinstance(model, ForestModel):
        if not model.trees:
            raise ValidationError("empty forest")
        acc = np.zeros(X.shape[0])
        for tree in model.trees:
            acc += tree.predict(X)
        return acc / len(model.trees)
    if isinstance(model, RegressionTree):
        return model.predict(X)
    raise ValidationError(f"cannot predict with {type(model).__name__}")


def fit_model(name: str, train: Sample, seed=0, **params):
    """Fit ``"spline"`` or ``"forest"`` with keyword hyperparameters."""
    allowed = {"spline": {"knot_count", "lam"}, "forest": {"trees", "max_depth", "min_leaf", "mtry"}}
    if name in allowed and set(params) - allowed[name]:
        raise ValidationError(f"unknown {name} parameters {sorted(set(params) - allowed[name])}")
    if name == "spline":
        return fit_spline(train, params.get("knot_count", 20), params.get("lam", 1e-4))
    if name == "forest":
        return fit_forest(
            train,
            params.get("trees", 200),
            params.get("max_depth", 8),
            params.get("min_leaf", 5),
            seed,
            params.get("mtry"),
        )
    raise ValidationError(f"unknown model {name!r}; expected 'spline' or 'forest'")
