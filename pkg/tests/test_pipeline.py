import numpy as np
import pytest
from scipy import stats

from rebalance.core import Sample, SeedSpec, ValidationError
from rebalance.density import KdeTarget, fit_kde
from rebalance.diagnostics import ks_to_target
from rebalance.generators import GeneratorSpec
from rebalance.pipeline import PipelineSpec, augment, dawr_weights, run_dawr, run_wr, wr_weights
from rebalance.resampling import weighted_resample

from conftest import illustration_samples

IDENTITY = GeneratorSpec("gn", delta=0.0, seed_selection="sequential")


def _rows(s):
    return {tuple(r) for r in s.joint()}


def test_wr_with_kde_target_is_bootstrap(samples0):
    s = samples0.imbalanced
    target = KdeTarget(fit_kde(s))
    w = wr_weights(s, target)
    np.testing.assert_allclose(w.q, 1 / s.n, rtol=1e-12)


def test_wr_rows_come_from_input(samples0, beta55):
    s = samples0.imbalanced
    out = run_wr(s, beta55, seed=SeedSpec(1))
    assert out.n == s.n
    assert _rows(out) <= _rows(s)


def test_wr_moves_toward_target(beta55):
    wins = 0
    for k in range(20):
        s = illustration_samples(k).imbalanced
        out = run_wr(s, beta55, seed=SeedSpec(k, 7))
        wins += ks_to_target(out, beta55) < ks_to_target(s, beta55)
    assert wins >= 18


def test_identity_generator_reduces_to_wr(samples0, beta55):
    s = samples0.imbalanced
    spec = PipelineSpec(IDENTITY, big_n=s.n, n_star=s.n)
    seed = SeedSpec(3)
    assert augment(s, beta55, spec, seed).equals(s)
    assert run_dawr(s, beta55, spec, seed).equals(run_wr(s, beta55, s.n, seed.child(2)))


def test_dawr_output_from_pool(samples0, beta55):
    s = samples0.imbalanced
    spec = PipelineSpec(GeneratorSpec("smote"), big_n=2000, n_star=500)
    seed = SeedSpec(4)
    pool = augment(s, beta55, spec, seed)
    out = run_dawr(s, beta55, spec, seed)
    assert pool.n == 2000 and out.n == 500
    assert _rows(out) <= _rows(pool)
    one = run_dawr(s, beta55, PipelineSpec(GeneratorSpec("smote"), big_n=2000, n_star=1), seed)
    assert one.n == 1 and _rows(one) <= _rows(pool)


def test_default_sizes(samples0, beta55):
    s = samples0.imbalanced.take(np.arange(200))
    spec = PipelineSpec(GeneratorSpec("gn"))
    assert augment(s, beta55, spec, SeedSpec(5)).n == 800
    assert run_dawr(s, beta55, spec, SeedSpec(5)).n == 200


def test_refit_kde_on_pool(samples0, beta55):
    s = samples0.imbalanced
    spec = PipelineSpec(GeneratorSpec("gn", delta=0.05), big_n=3000)
    pool = augment(s, beta55, spec, SeedSpec(6))
    w = dawr_weights(pool, beta55, spec, s)
    x = pool.x[:, 0]
    h = (4 / (3 * x.size)) ** (1 / 5) * x.std(ddof=1)
    f_hat = stats.norm.pdf((x[:, None] - x[None, :]) / h).mean(axis=1) / h
    want = stats.beta(5, 5).pdf(x) / np.maximum(f_hat, 1 / 30000)
    np.testing.assert_allclose(w.omega, want, rtol=1e-10)
    orig = dawr_weights(pool, beta55, PipelineSpec(spec.generator, wr_kde_source="original"), s)
    assert not np.allclose(orig.omega, w.omega)
    with pytest.raises(ValidationError):
        dawr_weights(pool, beta55, PipelineSpec(spec.generator, wr_kde_source="original"))


def test_preliminary_wr_changes_source(samples0, beta55):
    s = samples0.imbalanced
    base = PipelineSpec(GeneratorSpec("gn"), big_n=1000)
    pre = PipelineSpec(GeneratorSpec("gn"), big_n=1000, preliminary_wr=True)
    a = augment(s, beta55, base, SeedSpec(7))
    b = augment(s, beta55, pre, SeedSpec(7))
    assert not a.equals(b)
    # balancing before augmenting spreads the pool toward the tails
    assert np.var(b.x) > np.var(a.x)


def test_spec_validation():
    with pytest.raises(ValidationError):
        PipelineSpec(IDENTITY, big_n=0)
    with pytest.raises(ValidationError):
        PipelineSpec(IDENTITY, n_star=0)
    with pytest.raises(ValidationError):
        PipelineSpec(IDENTITY, wr_kde_source="both")
    spec = PipelineSpec.from_dict({"N": 10, "n_star": 5, "generator": {"kind": "rose"}})
    assert spec.big_n == 10 and spec.generator.kind == "rose"
    with pytest.raises(ValidationError):
        PipelineSpec.from_dict({"M": 1}, IDENTITY)


def test_seeded_determinism(samples0, beta55):
    s = samples0.imbalanced
    spec = PipelineSpec(GeneratorSpec("kde", clustered=3), big_n=2000)
    assert run_dawr(s, beta55, spec, SeedSpec(8)).equals(run_dawr(s, beta55, spec, SeedSpec(8)))
    assert not run_dawr(s, beta55, spec, SeedSpec(8)).equals(run_dawr(s, beta55, spec, SeedSpec(9)))
