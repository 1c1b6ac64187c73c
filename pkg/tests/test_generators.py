import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rebalance.core import RebalanceWarning, Sample, SeedSpec, ValidationError
from rebalance.density import bandwidth_factor
from rebalance.diagnostics import Ecdf, ks_distance
from rebalance.generators import (
    FaModel,
    GeneratorSpec,
    GmmModel,
    allocate_counts,
    fit_copula,
    fit_factor_analysis,
    fit_gmm,
    gen_cluster_conditioned,
    gen_factor_analysis,
    gen_gaussian_copula,
    gen_gaussian_noise,
    gen_gmm,
    gen_smoothed_bootstrap,
    gen_smote,
    generate,
    sample_factor_model,
    sample_gmm,
)

ALL_SPECS = [
    GeneratorSpec("gn", delta=0.05),
    GeneratorSpec("rose"),
    GeneratorSpec("kde"),
    GeneratorSpec("smote", k_neighbors=5),
    GeneratorSpec("gmm", n_components=2),
    GeneratorSpec("fa", n_factors=1),
    GeneratorSpec("copula"),
    GeneratorSpec("gn", delta=0.05, clustered=2),
]


def _sample(n=200, seed=0, aux=True):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 1))
    y = np.sin(7 * x[:, 0]) + 0.1 * rng.standard_normal(n)
    return Sample(x, y, aux=rng.standard_normal((n, 1)) if aux else None)


def _rows(s):
    return {tuple(r) for r in s.joint()}


# -- shape, finiteness, determinism for every generator


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label)
def test_structure_and_determinism(spec):
    s = _sample()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RebalanceWarning)
        a = generate(spec, s, 123, SeedSpec(9))
        b = generate(spec, s, 123, SeedSpec(9))
    assert a.n == 123 and a.column_names == s.column_names and a.d == s.d
    assert np.all(np.isfinite(a.joint()))
    assert a.equals(b)


# -- Gaussian noise


def test_gn_delta_zero_copies():
    s = _sample()
    out = gen_gaussian_noise(s, 0.0, 500, SeedSpec(1))
    assert _rows(out) <= _rows(s)


def test_gn_identity_hook():
    s = _sample()
    assert gen_gaussian_noise(s, 0.0, s.n, SeedSpec(1), seed_selection="sequential").equals(s)


def test_gn_variance_inflation():
    s = _sample(n=500)
    out = gen_gaussian_noise(s, 0.1, 10**5, SeedSpec(2))
    want = 1.1 * s.joint().var(axis=0, ddof=1)
    # seed-row resampling contributes (n-1)/n of the source variance
    got = out.joint().var(axis=0, ddof=1)
    np.testing.assert_allclose(got, want, rtol=0.01)


def test_gn_empty_and_zero_variance():
    s = _sample()
    assert gen_gaussian_noise(s, 0.1, 0, SeedSpec(0)).n == 0
    flat = Sample(s.x, np.ones(s.n))
    with pytest.warns(RebalanceWarning):
        out = gen_gaussian_noise(flat, 0.1, 50, SeedSpec(0))
    assert np.all(out.y == 1.0)


# -- smoothed bootstrap


def test_smoothed_zero_bandwidth_is_bootstrap():
    s = _sample()
    out = gen_smoothed_bootstrap(s, "rose", 300, SeedSpec(3), bandwidth=np.zeros((3, 3)))
    assert _rows(out) <= _rows(s)


def test_rose_noise_scale():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((1000, 2))
    z = (z - z.mean(0)) / z.std(0, ddof=1)
    s = Sample(z[:, :1], z[:, 1])
    out = gen_smoothed_bootstrap(s, "rose", 1, SeedSpec(0))
    assert out.n == 1
    from rebalance.generators.perturbation import smoothed_bootstrap_bandwidth

    H = smoothed_bootstrap_bandwidth(s.joint(), "rose")
    np.testing.assert_allclose(np.diag(H), 0.001 ** (1 / 6), atol=1e-12)
    assert bandwidth_factor(1000, 2) == pytest.approx(0.31623, abs=1e-5)
    # the kernel draw around each seed has that standard deviation
    seeds = np.zeros((20000, 1))
    flat = Sample(np.concatenate([seeds, seeds + 1e-12]), np.zeros(40000))
    pert = gen_smoothed_bootstrap(flat, "rose", 20000, SeedSpec(1), bandwidth=H)
    assert np.std(pert.x[:, 0]) == pytest.approx(0.31623, rel=0.02)


def test_silverman_singular_warns():
    x = np.random.default_rng(5).random((50, 1))
    s = Sample(x, 2 * x[:, 0])  # y collinear with x
    with pytest.warns(RebalanceWarning, match="ridge"):
        gen_smoothed_bootstrap(s, "silverman", 10, SeedSpec(0))


def test_smoothed_bootstrap_consistency(samples0):
    s = samples0.imbalanced
    out = gen_smoothed_bootstrap(s, "silverman", 10**5, SeedSpec(6))
    assert ks_distance(Ecdf(out.x[:, 0]), Ecdf(s.x[:, 0])) < 0.05


# -- SMOTE


def test_smote_two_points_segment():
    s = Sample([[0.0], [1.0]], [0.0, 1.0])
    out = gen_smote(s, 1, 500, SeedSpec(7))
    assert np.all((out.x[:, 0] >= 0) & (out.x[:, 0] <= 1))
    np.testing.assert_allclose(out.y, out.x[:, 0], atol=1e-15)


def test_smote_lambda_zero():
    s = _sample()
    assert _rows(gen_smote(s, 3, 200, SeedSpec(8), lam=0.0)) <= _rows(s)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_smote_range_bound(seed, k):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((12, 3))
    s = Sample(z[:, :2], z[:, 2])
    out = gen_smote(s, k, 300, SeedSpec(seed)).joint()
    assert np.all(out.min(0) >= z.min(0) - 1e-12) and np.all(out.max(0) <= z.max(0) + 1e-12)


def test_smote_ties_and_bounds():
    s = Sample([[0.0], [0.0], [0.0], [1.0]], [1.0, 2.0, 3.0, 4.0])
    from rebalance.generators.smote import nearest_neighbors

    nn = nearest_neighbors(s.x, np.arange(4), 2)
    np.testing.assert_array_equal(nn[0], [1, 2])
    np.testing.assert_array_equal(nn[3], [0, 1])
    with pytest.raises(ValidationError):
        gen_smote(s, 4, 5, SeedSpec(0))


# -- GMM


def test_gmm_single_component_closed_form():
    z = np.random.default_rng(9).standard_normal((300, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.2], [0, 0, 2]])
    m = fit_gmm(z, 1)
    np.testing.assert_allclose(m.means[0], z.mean(0), atol=1e-12)
    np.testing.assert_allclose(m.covariances[0], np.cov(z.T, bias=True), atol=1e-12)


def test_gmm_recovers_two_clusters():
    rng = np.random.default_rng(10)
    z = np.concatenate([rng.normal(0, 0.1, (500, 2)), rng.normal(5, 0.1, (500, 2))])
    m = fit_gmm(z, 2, seed=SeedSpec(1))
    means = m.means[np.argsort(m.means[:, 0])]
    assert np.all(np.abs(means - [[0, 0], [5, 5]]) < 0.1)
    assert abs(m.weights.sum() - 1) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_gmm_em_monotone(seed):
    rng = np.random.default_rng(seed)
    z = np.concatenate([rng.standard_normal((100, 2)) + c for c in ([0, 0], [3, 1], [-2, 4])])
    m = fit_gmm(z, 3, seed=seed)
    for path in (m.objective_path, m.log_likelihood_path):
        steps = np.diff(path)
        assert np.all(steps >= -1e-9 * max(1.0, abs(path[-1])))


def test_gmm_too_few_rows():
    with pytest.raises(ValidationError):
        fit_gmm(np.zeros((5, 2)), 2)


def test_gmm_collapse_refits_smaller():
    # 9 identical rows plus 3 distinct ones: a third component has nothing to hold
    z = np.concatenate([np.zeros((9, 1)), [[1.0], [1.0], [1.0]]])
    with pytest.warns(RebalanceWarning):
        m = fit_gmm(z + 1e-9 * np.arange(12)[:, None], 3)
    assert m.n_components < 3


def test_sample_gmm_cases():
    m = GmmModel([1.0], np.zeros((1, 2)), np.eye(2)[None])
    out = sample_gmm(m, 10**5, SeedSpec(11))
    assert np.all(np.abs(out.mean(0)) < 0.02)
    assert sample_gmm(m, 0, SeedSpec(0)).shape == (0, 2)
    two = GmmModel([1.0, 0.0], [[0.0], [100.0]], np.ones((2, 1, 1)))
    assert np.all(sample_gmm(two, 1000, SeedSpec(1)) < 50)


# -- factor analysis


def test_fa_zero_loading_is_independent_gaussians():
    m = FaModel(np.zeros((3, 1)), [1.0, 2.0, 3.0], [0.5, 1.0, 2.0])
    out = sample_factor_model(m, 10**5, SeedSpec(12))
    np.testing.assert_allclose(out.var(0), [0.5, 1.0, 2.0], rtol=0.02)


def test_fa_recovers_one_factor():
    rng = np.random.default_rng(13)
    W = np.array([[1.0], [0.8], [-0.5]])
    z = rng.standard_normal((20000, 1)) @ W.T + rng.standard_normal((20000, 3)) * np.sqrt([0.2, 0.3, 0.4])
    m = fit_factor_analysis(z, 1)
    assert np.linalg.norm(m.covariance - np.cov(z.T, bias=True)) < 0.05
    assert np.all(np.diff(m.log_likelihood_path) >= -1e-9 * abs(m.log_likelihood_path[-1]))
    gen = sample_factor_model(m, 10**5, SeedSpec(14))
    assert np.linalg.norm(np.cov(gen.T) - m.covariance) < 0.05


def test_fa_preconditions():
    with pytest.raises(ValidationError):
        fit_factor_analysis(np.random.default_rng(0).random((50, 3)), 3)
    with pytest.raises(ValidationError):
        fit_factor_analysis(np.random.default_rng(0).random((3, 3)), 1)


def test_fa_nonconvergence_warns():
    z = np.random.default_rng(15).standard_normal((200, 4))
    with pytest.warns(RebalanceWarning):
        m = fit_factor_analysis(z, 2, max_iter=2, tol=0.0)
    assert not m.converged


# -- copula


def test_copula_independent_columns():
    z = np.random.default_rng(16).random((10**4, 3))
    R = fit_copula(z).correlation
    assert np.max(np.abs(R[np.triu_indices(3, 1)])) < 0.05


def test_copula_duplicated_column():
    x = np.random.default_rng(17).random(200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RebalanceWarning)
        R = fit_copula(np.column_stack([x, x])).correlation
    assert abs(R[0, 1] - 1) < 1e-6


def test_copula_range_and_spearman(samples0):
    s = samples0.imbalanced
    out = gen_gaussian_copula(s, 10**4, SeedSpec(18))
    z, g = s.joint(), out.joint()
    assert np.all(g.min(0) >= z.min(0)) and np.all(g.max(0) <= z.max(0))
    rho_src = stats.spearmanr(z[:, 0], z[:, 1]).statistic
    rho_gen = stats.spearmanr(g[:, 0], g[:, 1]).statistic
    assert abs(rho_src - rho_gen) < 0.05


def test_copula_preconditions():
    with pytest.raises(ValidationError):
        fit_copula(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        fit_copula(np.column_stack([np.arange(5.0), np.ones(5)]))


# -- clustering and spec


def test_allocation():
    np.testing.assert_array_equal(allocate_counts([700, 300], 10), [7, 3])
    assert allocate_counts([1, 1, 1], 10).sum() == 10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 500), min_size=1, max_size=6), st.integers(0, 5000))
def test_allocation_sums(sizes, n_out):
    counts = allocate_counts(sizes, n_out)
    assert counts.sum() == n_out and np.all(counts >= 0)
    exact = np.array(sizes) * n_out / sum(sizes)
    assert np.all(np.abs(counts - exact) < 1)


def test_cluster_g1_matches_base():
    s = _sample()
    spec = GeneratorSpec("gn", delta=0.05, clustered=1)
    out = gen_cluster_conditioned(spec, s, 100, SeedSpec(19))
    direct = gen_gaussian_noise(s, 0.05, 100, SeedSpec(19).child(1))
    assert out.equals(direct)


def test_clustered_gn_avoids_gap():
    rng = np.random.default_rng(20)
    a = rng.normal(0, 0.1, (300, 2))
    b = rng.normal(5, 0.1, (300, 2))
    z = np.concatenate([a, b])
    s = Sample(z[:, :1], z[:, 1])
    out = generate(GeneratorSpec("gn", delta=0.05, clustered=2), s, 10**4, SeedSpec(21)).joint()
    far_a = np.linalg.norm(out - a.mean(0), axis=1) > 3 * 0.1 * np.sqrt(2) + 0.5
    far_b = np.linalg.norm(out - b.mean(0), axis=1) > 3 * 0.1 * np.sqrt(2) + 0.5
    assert not np.any(far_a & far_b)
    # without clustering the noise scale follows the pooled spread and fills the gap
    pooled = generate(GeneratorSpec("gn", delta=0.05), s, 10**4, SeedSpec(21)).joint()
    far_a = np.linalg.norm(pooled - a.mean(0), axis=1) > 3 * 0.1 * np.sqrt(2) + 0.5
    far_b = np.linalg.norm(pooled - b.mean(0), axis=1) > 3 * 0.1 * np.sqrt(2) + 0.5
    assert np.any(far_a & far_b)


def test_small_cluster_merges_with_warning():
    rng = np.random.default_rng(22)
    z = np.concatenate([rng.normal(0, 0.1, (100, 2)), [[9.0, 9.0]]])
    from rebalance.generators.registry import _merge_small

    with pytest.warns(RebalanceWarning):
        labels = _merge_small(np.r_[np.zeros(100, int), 1], z, 2)
    assert np.all(labels == 0)


def test_spec_parsing():
    spec = GeneratorSpec.from_json('{"kind":"gn","delta":0.1,"clustered":{"g":3}}')
    assert spec.kind == "gn" and spec.delta == 0.1 and spec.clustered == 3
    assert spec.label == "gn-gmm"
    assert GeneratorSpec.from_dict(spec.to_dict()) == spec
    assert json.loads(json.dumps(spec.to_dict()))["clustered"] == {"g": 3}
    assert GeneratorSpec.from_dict({"kind": "SmoothedBootstrapROSE"}).kind == "rose"
    with pytest.raises(ValidationError):
        GeneratorSpec("smote", delta=0.1)
    with pytest.raises(ValidationError):
        GeneratorSpec.from_dict({"kind": "gan"})
    with pytest.raises(ValidationError):
        GeneratorSpec("gn", delta=-1.0)


def test_gen_gmm_and_fa_fit_joint():
    s = _sample(n=400)
    assert gen_gmm(s, 2, 50, SeedSpec(0)).d == s.d
    assert gen_factor_analysis(s, 1, 50, SeedSpec(0)).d == s.d
