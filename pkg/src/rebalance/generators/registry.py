"""Generator configuration, dispatch, and the GMM-cluster-conditioned wrapper."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core import RebalanceWarning, Sample, ValidationError, as_seed
from .copula import gen_gaussian_copula
from .factor import gen_factor_analysis
from .gmm import fit_gmm, gen_gmm, gmm_labels
from .perturbation import gen_gaussian_noise, gen_smoothed_bootstrap
from .smote import gen_smote

__all__ = [
    "KINDS",
    "GeneratorSpec",
    "generate",
    "generate_base",
    "gen_cluster_conditioned",
    "allocate_counts",
]

# short name -> (long name, parameters it accepts)
KINDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "gn": ("GaussianNoise", ("delta", "seed_selection")),
    "rose": ("SmoothedBootstrapROSE", ()),
    "kde": ("SmoothedBootstrapSilverman", ()),
    "smote": ("Smote", ("k_neighbors",)),
    "gmm": ("Gmm", ("n_components",)),
    "fa": ("FactorAnalysis", ("n_factors",)),
    "copula": ("GaussianCopula", ()),
}
_LONG = {long.lower(): short for short, (long, _) in KINDS.items()}
_DEFAULTS = {
    "delta": 0.05,
    "seed_selection": "uniform",
    "k_neighbors": 5,
    "n_components": 3,
    "n_factors": 1,
}
_ALL_PARAMS = tuple(_DEFAULTS)


@dataclass(frozen=True)
class GeneratorSpec:
    """One DA generator; ``clustered`` is the GMM cluster count or ``None``.

    Only the parameters relevant to ``kind`` are kept; the others are ``None``.
    """

    kind: str
    delta: float | None = None
    k_neighbors: int | None = None
    n_components: int | None = None
    n_factors: int | None = None
    seed_selection: str | None = None
    clustered: int | None = None
    params: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        kind = str(self.kind).strip().lower()
        kind = _LONG.get(kind, kind)
        if kind not in KINDS:
            raise ValidationError(f"unknown generator kind {self.kind!r}; expected one of {list(KINDS)}")
        object.__setattr__(self, "kind", kind)
        allowed = KINDS[kind][1]
        for name in _ALL_PARAMS:
            value = getattr(self, name)
            if name in allowed:
                if value is None:
                    object.__setattr__(self, name, _DEFAULTS[name])
            elif value is not None:
                raise ValidationError(f"parameter {name!r} does not apply to generator {kind!r}")
        if self.delta is not None and self.delta < 0:
            raise ValidationError("delta must be nonnegative")
        for name in ("k_neighbors", "n_components", "n_factors"):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.clustered is not None and int(self.clustered) < 1:
            raise ValidationError("cluster count must be at least 1")

    @property
    def label(self) -> str:
        return self.kind + ("-gmm" if self.clustered else "")

    def base(self) -> "GeneratorSpec":
        """This generator without clustering."""
        return GeneratorSpec(**{**self.to_kwargs(), "clustered": None})

    def to_kwargs(self) -> dict:
        out = {"kind": self.kind, "clustered": self.clustered}
        for name in KINDS[self.kind][1]:
            out[name] = getattr(self, name)
        return out

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in KINDS[self.kind][1]:
            out[name] = getattr(self, name)
        if self.clustered:
            out["clustered"] = {"g": int(self.clustered)}
        return out

    @classmethod
    def from_dict(cls, data: Mapping | str) -> "GeneratorSpec":
        if isinstance(data, str):
            return cls(kind=data)
        data = dict(data)
        if "kind" not in data:
            raise ValidationError("generator spec needs a 'kind'")
        clustered = data.pop("clustered", None)
        if isinstance(clustered, Mapping):
            clustered = clustered.get("g")
        elif clustered is True:
            clustered = _DEFAULTS["n_components"]
        elif clustered is False:
            clustered = None
        unknown = set(data) - {"kind", *_ALL_PARAMS}
        if unknown:
            raise ValidationError(f"unknown generator keys {sorted(unknown)}")
        return cls(clustered=clustered, **data)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        return cls.from_dict(json.loads(text))


def generate_base(spec: GeneratorSpec, sample: Sample, n_out: int, seed) -> Sample:
    """Run the unclustered generator."""
    kind = spec.kind
    if kind == "gn":
        return gen_gaussian_noise(sample, spec.delta, n_out, seed, spec.seed_selection)
    if kind == "rose":
        return gen_smoothed_bootstrap(sample, "rose", n_out, seed)
    if kind == "kde":
        return gen_smoothed_bootstrap(sample, "silverman", n_out, seed)
    if kind == "smote":
        return gen_smote(sample, min(spec.k_neighbors, sample.n - 1), n_out, seed)
    if kind == "gmm":
        G = spec.n_components
        # inside small clusters the mixture size adapts to the available rows
        G = max(1, min(G, sample.n // (sample.d + 1)))
        return gen_gmm(sample, G, n_out, seed)
    if kind == "fa":
        return gen_factor_analysis(sample, min(spec.n_factors, sample.d - 1), n_out, seed)
    if kind == "copula":
        return gen_gaussian_copula(sample, n_out, seed)
    raise ValidationError(f"unknown generator kind {kind!r}")


def _min_rows(spec: GeneratorSpec, d: int) -> int:
    if spec.kind == "fa":
        return d + 1
    if spec.kind in ("copula", "gmm"):
        return max(3, d + 1)
    return 2


def allocate_counts(sizes, n_out: int) -> np.ndarray:
    """Largest-remainder split of ``n_out`` proportional to ``sizes``."""
    sizes = np.asarray(sizes, dtype=float)
    quota = n_out * sizes / sizes.sum()
    counts = np.floor(quota).astype(int)
    left = int(n_out - counts.sum())
    if left:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:left]] += 1
    return counts


def _merge_small(labels: np.ndarray, z: np.ndarray, min_rows: int) -> np.ndarray:
    labels = labels.copy()
    while True:
        uniq, counts = np.unique(labels, return_counts=True)
        small = uniq[counts < min_rows]
        if small.size == 0 or uniq.size == 1:
            return labels
        g = small[np.argmin(counts[counts < min_rows])]
        others = uniq[uniq != g]
        means = np.array([z[labels == o].mean(axis=0) for o in others])
        own = z[labels == g].mean(axis=0)
        target = others[np.argmin(((means - own) ** 2).sum(axis=1))]
        warnings.warn(
            f"cluster with {int((labels == g).sum())} row(s) merged into its nearest cluster",
            RebalanceWarning,
            stacklevel=3,
        )
        labels[labels == g] = target


def gen_cluster_conditioned(spec: GeneratorSpec, sample: Sample, n_out: int, seed) -> Sample:
    """Fit a GMM on the joint data, run the base generator inside each hard cluster.

    Cluster ``c`` (in increasing label order after merging) draws from stream
    ``seed.child(1 + c)``; the GMM fit uses ``seed.child(0)``. Output counts are
    proportional to cluster sizes, and clusters are concatenated in order.
    """
    if not spec.clustered:
        raise ValidationError("generator spec is not clustered")
    seed = as_seed(seed)
    base = spec.base()
    z = sample.joint()
    G = int(spec.clustered)
    if G == 1:
        labels = np.zeros(sample.n, dtype=int)
    else:
        model = fit_gmm(z, G, seed=seed.child(0))
        labels = gmm_labels(model, z)
    labels = _merge_small(labels, z, _min_rows(base, sample.d))
    clusters = np.unique(labels)
    rows = [np.flatnonzero(labels == c) for c in clusters]
    counts = allocate_counts([r.size for r in rows], int(n_out))
    parts = []
    for c, (idx, m) in enumerate(zip(rows, counts)):
        if m == 0:
            continue
        parts.append(generate_base(base, sample.take(idx), int(m), seed.child(1 + c)))
    if not parts:
        return sample.take(np.empty(0, dtype=np.intp))
    return Sample.concat(parts)


def generate(spec: GeneratorSpec, sample: Sample, n_out: int, seed) -> Sample:
    """Produce ``n_out`` synthetic rows with the source's column layout."""
    if n_out < 0:
        raise ValidationError("n_out must be nonnegative")
    if spec.clustered:
        return gen_cluster_conditioned(spec, sample, n_out, seed)
    return generate_base(spec, sample, n_out, seed)
