"""Synthetic illustration: population, disjoint test/balanced/imbalanced draws,
rebalanced training sets, model scores, and multi-replicate studies.

Seed layout for one illustration run on stream ``s``: population ``s.child(0)``,
test/balanced/imbalanced draws ``s.child(1..3)``, WR ``s.child(4)``, generator
``i`` ``s.child(10 + i)``, models for label ``j`` ``s.child(1000 + j)``.
Replicate ``r`` of a study with master stream ``m`` runs on ``m.child(1).child(r)``
against the shared population drawn from ``m.child(0)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import Sample, ValidationError, as_seed
from .density import BetaTarget, TargetDensity, parse_target
from .diagnostics import ks_to_target
from .generators import GeneratorSpec
from .models import fit_model, predict, rmse
from .pipeline import PipelineSpec, run_dawr, run_wr

__all__ = [
    "ResponseLaw",
    "ExperimentSpec",
    "ExperimentSamples",
    "ResultTable",
    "synthesize_population",
    "draw_without_replacement",
    "draw_biased_sample",
    "draw_samples",
    "run_illustration",
    "run_replicates",
    "DEFAULT_GENERATORS",
]

DEFAULT_GENERATORS = (
    {"kind": "gn", "delta": 0.05},
    {"kind": "gn", "delta": 0.05, "clustered": {"g": 3}},
    {"kind": "rose"},
    {"kind": "rose", "clustered": {"g": 3}},
    {"kind": "kde"},
    {"kind": "kde", "clustered": {"g": 3}},
    {"kind": "gmm", "n_components": 3},
    {"kind": "fa", "clustered": {"g": 3}},
    {"kind": "copula"},
    {"kind": "smote"},
    {"kind": "smote", "clustered": {"g": 3}},
)

BASE_LABELS = ("balanced", "imbalanced", "wr")


@dataclass(frozen=True)
class ResponseLaw:
    """``Y ~ N(offset + amplitude * sin(frequency * x + phase), sigma)``.

    With ``noise_is_variance`` the last parameter is read as a variance.
    """

    offset: float = 10.0
    amplitude: float = 1.0
    frequency: float = 7.0
    phase: float = -0.5
    sigma: float = 0.1
    noise_is_variance: bool = False

    @property
    def noise_sd(self) -> float:
        return math.sqrt(self.sigma) if self.noise_is_variance else self.sigma

    def mean(self, x) -> np.ndarray:
        return self.offset + self.amplitude * np.sin(self.frequency * np.asarray(x) + self.phase)


def _target(value, default: TargetDensity | None = None) -> TargetDensity | None:
    if value is None:
        return default
    if isinstance(value, TargetDensity):
        return value
    return parse_target(str(value))


@dataclass(frozen=True)
class ExperimentSpec:
    n_population: int = 10_000
    n: int = 1_000
    covariate: TargetDensity = BetaTarget(5, 5)
    target: TargetDensity | None = None
    bias: TargetDensity | None = BetaTarget(9, 9)
    response: ResponseLaw = ResponseLaw()
    generators: tuple[GeneratorSpec, ...] = ()
    big_n: int = 4_000
    n_star: int | None = None
    preliminary_wr: bool = False
    bandwidth: str = "silverman"
    e_n: str | float = "default"
    wr_kde_source: str = "synthetic"
    models: tuple[tuple[str, dict], ...] = (("spline", {}), ("forest", {}))
    replicates: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("sample size must be positive")
        if 3 * self.n > self.n_population:
            raise ValidationError(
                f"need n <= n_population / 3 for three disjoint draws; got n={self.n}, "
                f"n_population={self.n_population}"
            )
        if self.target is None:
            object.__setattr__(self, "target", self.covariate)
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "models", tuple((m, dict(p)) for m, p in self.models))
        for name, _ in self.models:
            if name not in ("spline", "forest"):
                raise ValidationError(f"unknown model {name!r}")
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate training-sample labels: {labels}")

    @property
    def labels(self) -> tuple[str, ...]:
        return BASE_LABELS + tuple(g.label for g in self.generators)

    @property
    def model_names(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.models)

    def pipeline(self, generator: GeneratorSpec) -> PipelineSpec:
        return PipelineSpec(
            generator,
            big_n=self.big_n,
            n_star=self.n_star if self.n_star is not None else self.n,
            preliminary_wr=self.preliminary_wr,
            bandwidth=self.bandwidth,
            e_n=self.e_n,
            wr_kde_source=self.wr_kde_source,
        )

    @classmethod
    def from_config(cls, cfg: Mapping) -> "ExperimentSpec":
        """Build from the JSON config layout (keys population, bias, samples,
        generators, pipeline, models, replicates, seed)."""
        known = {"population", "bias", "samples", "generators", "pipeline", "models", "replicates", "seed"}
        unknown = set(cfg) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        kw: dict = {}
        pop = dict(cfg.get("population", {}))
        if "size" in pop:
            kw["n_population"] = int(pop.pop("size"))
        if "covariate" in pop:
            kw["covariate"] = _target(pop.pop("covariate"))
        if "response" in pop:
            try:
                kw["response"] = ResponseLaw(**pop.pop("response"))
            except TypeError as exc:
                raise ValidationError(f"bad response law: {exc}") from None
        if pop:
            raise ValidationError(f"unknown population keys {sorted(pop)}")
        if "bias" in cfg:
            bias = cfg["bias"]
            kw["bias"] = None if bias in (None, "uniform") else _target(bias)
        samples = dict(cfg.get("samples", {}))
        if "n" in samples:
            kw["n"] = int(samples.pop("n"))
        if "target" in samples:
            kw["target"] = _target(samples.pop("target"))
        if samples:
            raise ValidationError(f"unknown samples keys {sorted(samples)}")
        if "generators" in cfg:
            kw["generators"] = tuple(GeneratorSpec.from_dict(g) for g in cfg["generators"])
        pipe = dict(cfg.get("pipeline", {}))
        if "N" in pipe:
            pipe["big_n"] = pipe.pop("N")
        for key in ("big_n", "n_star", "preliminary_wr", "bandwidth", "e_n", "wr_kde_source"):
            if key in pipe:
                kw[key] = pipe.pop(key)
        if pipe:
            raise ValidationError(f"unknown pipeline keys {sorted(pipe)}")
        if "models" in cfg:
            models = cfg["models"]
            if isinstance(models, Mapping):
                kw["models"] = tuple((k, dict(v or {})) for k, v in models.items())
            else:
                kw["models"] = tuple((m, {}) for m in models)
        if "replicates" in cfg:
            kw["replicates"] = int(cfg["replicates"])
        if "seed" in cfg:
            kw["seed"] = int(cfg["seed"])
        return cls(**kw)


def synthesize_population(spec: ExperimentSpec, seed) -> Sample:
    """``n_population`` i.i.d. rows: x from the covariate law, y from the response law."""
    rng = as_seed(seed).rng()
    x = spec.covariate.rvs(spec.n_population, rng)
    y = spec.response.mean(x) + spec.response.noise_sd * rng.standard_normal(x.size)
    return Sample(x.reshape(-1, 1), y, column_names=("x", "y"))


def draw_without_replacement(weights, n: int, seed) -> np.ndarray:
    """Weighted draw of ``n`` distinct indices by exponential keys ``-ln(u) / w``."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    n = int(n)
    positive = int((w > 0).sum())
    if n > positive:
        raise ValidationError(f"cannot draw {n} rows: only {positive} have positive weight")
    u = as_seed(seed).rng().random(w.size)
    with np.errstate(divide="ignore"):
        keys = np.where(w > 0, -np.log(u) / np.where(w > 0, w, 1.0), np.inf)
    return np.argsort(keys, kind="stable")[:n]


def draw_biased_sample(population: Sample, bias: TargetDensity | None, n: int, seed):
    """Draw ``n`` rows without replacement with probability proportional to the
    bias density at each row's x; ``bias=None`` is a simple random sample.

    Returns ``(drawn, remainder, drawn_index, remainder_index)``; the remainder
    keeps population order.
    """
    if n > population.n:
        raise ValidationError(f"cannot draw {n} rows from {population.n}")
    w = np.ones(population.n) if bias is None else np.asarray(bias.pdf(population.x), dtype=float)
    idx = draw_without_replacement(w, n, seed)
    mask = np.ones(population.n, dtype=bool)
    mask[idx] = False
    rest = np.flatnonzero(mask)
    return population.take(idx), population.take(rest), idx, rest


@dataclass(frozen=True, eq=False)
class ExperimentSamples:
    population: Sample
    test: Sample
    balanced: Sample
    imbalanced: Sample
    test_index: np.ndarray
    balanced_index: np.ndarray
    imbalanced_index: np.ndarray


def draw_samples(spec: ExperimentSpec, population: Sample, seed) -> ExperimentSamples:
    """Test (uniform), then balanced (uniform), then imbalanced (bias-weighted),
    each from what the previous draws left."""
    seed = as_seed(seed)
    test, rest, t_idx, rest_idx = draw_biased_sample(population, None, spec.n, seed.child(1))
    balanced, rest2, b_idx, rest2_idx = draw_biased_sample(rest, None, spec.n, seed.child(2))
    imbalanced, _, i_idx, _ = draw_biased_sample(rest2, spec.bias, spec.n, seed.child(3))
    return ExperimentSamples(
        population,
        test,
        balanced,
        imbalanced,
        t_idx,
        rest_idx[b_idx],
        rest_idx[rest2_idx[i_idx]],
    )


@dataclass
class ResultTable:
    """Long-format results: one row per (replicate, label, model)."""

    rows: list[dict] = field(default_factory=list)
    labels: tuple[str, ...] = ()
    models: tuple[str, ...] = ()

    COLUMNS = ("replicate", "label", "model", "rmse", "ks")

    def sorted(self) -> "ResultTable":
        li = {l: i for i, l in enumerate(self.labels)}
        mi = {m: i for i, m in enumerate(self.models)}
        rows = sorted(self.rows, key=lambda r: (r["replicate"], li[r["label"]], mi[r["model"]]))
        return ResultTable(rows, self.labels, self.models)

    def values(self, label: str, model: str, column: str = "rmse") -> np.ndarray:
        return np.array(
            [r[column] for r in self.rows if r["label"] == label and r["model"] == model]
        )

    def median(self, label: str, model: str, column: str = "rmse") -> float:
        return float(np.median(self.values(label, model, column)))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for r in self.sorted().rows:
                writer.writerow(
                    [r["replicate"], r["label"], r["model"], repr(float(r["rmse"])), repr(float(r["ks"]))]
                )

    def summary(self) -> list[dict]:
        """Median RMSE and KS per (label, model)."""
        out = []
        for label in self.labels:
            for model in self.models:
                out.append(
                    {
                        "label": label,
                        "model": model,
                        "median_rmse": self.median(label, model),
                        "median_ks": self.median(label, model, "ks"),
                    }
                )
        return out


def training_sets(spec: ExperimentSpec, samples: ExperimentSamples, seed) -> dict[str, Sample]:
    seed = as_seed(seed)
    sets = {
        "balanced": samples.balanced,
        "imbalanced": samples.imbalanced,
        "wr": run_wr(
            samples.imbalanced, spec.target, spec.n_star or spec.n, seed.child(4), spec.bandwidth, spec.e_n
        ),
    }
    for i, gen in enumerate(spec.generators):
        sets[gen.label] = run_dawr(samples.imbalanced, spec.target, spec.pipeline(gen), seed.child(10 + i))
    return sets


def run_illustration(
    spec: ExperimentSpec, seed=None, population: Sample | None = None, replicate: int = 0
) -> ResultTable:
    """Train every model on every training sample, score RMSE on the test sample
    and the KS distance of the training x to the target."""
    seed = as_seed(spec.seed if seed is None else seed)
    if population is None:
        population = synthesize_population(spec, seed.child(0))
    samples = draw_samples(spec, population, seed)
    sets = training_sets(spec, samples, seed)
    test = samples.test
    rows = []
    for j, label in enumerate(spec.labels):
        train = sets[label]
        ks = ks_to_target(train, spec.target)
        for name, params in spec.models:
            model = fit_model(name, train, seed.child(1000 + j), **params)
            rows.append(
                {
                    "replicate": replicate,
                    "label": label,
                    "model": name,
                    "rmse": rmse(test.y, predict(model, test.x)),
                    "ks": ks,
                }
            )
    return ResultTable(rows, spec.labels, spec.model_names)


def replicate_seed(seed, r: int):
    return as_seed(seed).child(1).child(r)


def _one_replicate(args):
    spec, seed, population, r = args
    return run_illustration(spec, replicate_seed(seed, r), population, replicate=r).rows


def run_replicates(
    spec: ExperimentSpec, R: int | None = None, seed=None, workers: int = 1
) -> ResultTable:
    """Repeat the illustration ``R`` times on a fixed population with fresh draws.

    Output is identical for any ``workers``: replicates own their streams and
    rows are sorted before being returned.
    """
    R = spec.replicates if R is None else int(R)
    if R < 1:
        raise ValidationError("R must be at least 1")
    seed = as_seed(spec.seed if seed is None else seed)
    population = synthesize_population(spec, seed.child(0))
    jobs = [(spec, seed, population, r) for r in range(R)]
    rows: list[dict] = []
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_one_replicate, jobs):
                rows.extend(part)
    else:
        for job in jobs:
            rows.extend(_one_replicate(job))
    return ResultTable(rows, spec.labels, spec.model_names).sorted()
