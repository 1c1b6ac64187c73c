"""Weighted resampling (WR) and data augmentation followed by WR (DA-WR).

Seed streams: the preliminary WR uses ``seed.child(0)``, the DA step
``seed.child(1)`` and the final WR step ``seed.child(2)``. ``run_wr`` draws
directly from the stream it is given.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .core import Sample, ValidationError, as_seed
from .density import TargetDensity, fit_kde
from .generators import GeneratorSpec, generate
from .resampling import DrawWeights, compute_weights, weighted_resample

__all__ = ["PipelineSpec", "wr_weights", "run_wr", "augment", "dawr_weights", "run_dawr"]

PRELIMINARY, DA, WR = 0, 1, 2


@dataclass(frozen=True)
class PipelineSpec:
    """DA-WR configuration. ``big_n`` is the DA pool size N (default 4 n)."""

    generator: GeneratorSpec
    big_n: int | None = None
    n_star: int | None = None
    preliminary_wr: bool = False
    bandwidth: str = "silverman"
    e_n: str | float = "default"
    wr_kde_source: str = "synthetic"

    def __post_init__(self):
        if self.big_n is not None and self.big_n < 1:
            raise ValidationError("N must be at least 1")
        if self.n_star is not None and self.n_star < 1:
            raise ValidationError("n_star must be at least 1")
        if self.wr_kde_source not in ("synthetic", "original"):
            raise ValidationError("wr_kde_source must be 'synthetic' or 'original'")

    @classmethod
    def from_dict(cls, data: Mapping, generator: GeneratorSpec | None = None) -> "PipelineSpec":
        data = dict(data)
        gen = data.pop("generator", None)
        if generator is None:
            if gen is None:
                raise ValidationError("pipeline spec needs a generator")
            generator = GeneratorSpec.from_dict(gen)
        if "N" in data:
            data["big_n"] = data.pop("N")
        known = {"big_n", "n_star", "preliminary_wr", "bandwidth", "e_n", "wr_kde_source"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown pipeline keys {sorted(unknown)}")
        return cls(generator=generator, **data)


def wr_weights(sample: Sample, target: TargetDensity, bandwidth="silverman", e_n="default") -> DrawWeights:
    """Fit the KDE on ``sample`` and return its drawing weights toward ``target``."""
    return compute_weights(sample, target, fit_kde(sample, bandwidth, e_n))


def run_wr(
    sample: Sample,
    target: TargetDensity,
    n_star: int | None = None,
    seed=0,
    bandwidth="silverman",
    e_n="default",
) -> Sample:
    """Weighted resampling: ``n_star`` whole rows drawn with q_i proportional to f0 / f_hat."""
    weights = wr_weights(sample, target, bandwidth, e_n)
    return weighted_resample(sample, weights, n_star, seed)


def augment(sample: Sample, target: TargetDensity, spec: PipelineSpec, seed) -> Sample:
    """The DA step (with the optional preliminary WR): the synthetic pool of size N."""
    seed = as_seed(seed)
    source = sample
    if spec.preliminary_wr:
        source = run_wr(sample, target, sample.n, seed.child(PRELIMINARY), spec.bandwidth, spec.e_n)
    big_n = spec.big_n if spec.big_n is not None else 4 * sample.n
    return generate(spec.generator, source, big_n, seed.child(DA))


def dawr_weights(
    pool: Sample, target: TargetDensity, spec: PipelineSpec, original: Sample | None = None
) -> DrawWeights:
    """Drawing weights over the synthetic pool.

    The KDE is refit on the pool (trimming ``1/(10 N)``) unless
    ``spec.wr_kde_source == "original"``, in which case the KDE of the original
    sample is evaluated at the pool's covariates.
    """
    if spec.wr_kde_source == "original":
        if original is None:
            raise ValidationError("the original sample is required for wr_kde_source='original'")
        kde = fit_kde(original, spec.bandwidth, spec.e_n)
    else:
        kde = fit_kde(pool, spec.bandwidth, spec.e_n)
    return compute_weights(pool, target, kde)


def run_dawr(sample: Sample, target: TargetDensity, spec: PipelineSpec, seed) -> Sample:
    """DA step, then a WR step over the synthetic pool; returns ``n_star`` rows (default n)."""
    seed = as_seed(seed)
    pool = augment(sample, target, spec, seed)
    weights = dawr_weights(pool, target, spec, sample)
    n_star = spec.n_star if spec.n_star is not None else sample.n
    return weighted_resample(pool, weights, n_star, seed.child(WR))
