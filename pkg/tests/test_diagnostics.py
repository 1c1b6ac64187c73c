import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import integrate, stats

from rebalance.core import SeedSpec, ValidationError
from rebalance.density import BetaTarget, KdeTarget, NormalTarget, fit_kde
from rebalance.diagnostics import (
    Ecdf,
    adaptive_simpson,
    equal_mass_partition,
    histogram,
    imbalance_report,
    interval_mass,
    ks_distance,
    ks_to_target,
)
from rebalance.core import Sample


def brute_ks(a, b):
    """Scan both ECDFs at every observed value: the exact two-sample statistic."""
    pts = np.concatenate([a, b])
    return max(abs(np.mean(a <= t) - np.mean(b <= t)) for t in pts)


def test_ks_hand_cases():
    assert ks_distance([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ks_distance(Ecdf([0.0]), Ecdf([1.0]), [0.0, 0.5, 1.0]) == 1.0
    assert ks_distance([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]) == pytest.approx(1 / 3, abs=1e-15)


small = hnp.arrays(np.float64, st.integers(1, 10), elements=st.integers(-3, 3).map(float))


@settings(max_examples=200, deadline=None)
@given(small, small)
def test_ks_matches_brute_force(a, b):
    assert ks_distance(a, b) == brute_ks(a, b)


@settings(max_examples=100, deadline=None)
@given(small, small)
def test_ks_symmetric_and_bounded(a, b):
    d = ks_distance(a, b)
    assert d == ks_distance(b, a)
    assert 0.0 <= d <= 1.0
    assert (d == 0) == all(np.mean(a <= t) == np.mean(b <= t) for t in np.concatenate([a, b]))


def test_ks_to_continuous_cdf_is_exact():
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.beta(4, 6, size=int(rng.integers(5, 300)))
        want = stats.kstest(x, stats.beta(5, 5).cdf).statistic
        assert ks_to_target(x, BetaTarget(5, 5)) == pytest.approx(want, abs=1e-14)


def test_weighted_ks_to_target():
    x = np.array([0.2, 0.5, 0.8])
    w = np.array([0.25, 0.5, 0.25])
    grid = np.linspace(0, 1, 100001)
    F = stats.beta(5, 5).cdf(grid)
    E = Ecdf(x, w)
    want = max(np.abs(E(grid) - F).max(), np.abs(E.left_limit(grid) - F).max())
    assert ks_to_target(x, BetaTarget(5, 5), weights=w) == pytest.approx(want, abs=1e-6)


def test_adaptive_simpson_against_quad():
    for f, a, b in ((np.sin, 0, 3), (lambda t: math.exp(-t * t), -2, 5), (lambda t: t**7, 0, 1)):
        assert adaptive_simpson(f, a, b) == pytest.approx(integrate.quad(f, a, b)[0], abs=1e-8)


def test_interval_mass_matches_cdf():
    for t in (BetaTarget(5, 5), NormalTarget(1, 2)):
        for lo, hi in ((0.1, 0.4), (0.3, 0.9), (-np.inf, 0.5), (0.5, np.inf)):
            want = float(t.cdf(hi) - t.cdf(lo))
            assert interval_mass(t, lo, hi) == pytest.approx(want, abs=1e-8)


def test_equal_mass_partition():
    part = equal_mass_partition(BetaTarget(5, 5), 20)
    assert part[0][0] == 0.0 and part[-1][1] == 1.0
    masses = [interval_mass(BetaTarget(5, 5), a, b) for a, b in part]
    np.testing.assert_allclose(masses, 0.05, atol=1e-9)
    assert sum(masses) <= 1 + 1e-9


def test_hand_report_uniform():
    x = np.array([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.6, 0.8])
    r = imbalance_report(x, BetaTarget(1, 1), [(0.0, 0.5), (0.5, 1.0)], alpha=0.5, beta=0.4)
    np.testing.assert_allclose(r.p_hat, [0.8, 0.2])
    np.testing.assert_allclose(r.deviation, [0.6, 0.6], atol=1e-9)
    assert r.verdict
    assert not r.verdict_for(0.61, 0.4)


def test_target_sample_not_flagged():
    x = stats.beta(5, 5).rvs(size=10**5, random_state=1)
    r = imbalance_report(x, BetaTarget(5, 5), bins=10)
    assert not r.verdict
    assert all(0 <= p <= 1 for p in r.p_hat + r.p0)


def test_imbalanced_sample_flagged(samples0, beta55):
    r = imbalance_report(samples0.imbalanced, beta55)
    assert r.verdict and r.worst_mass >= 0.05 - 1e-9


def test_mass_tolerance_boundary():
    part = [(0.0, 0.5), (0.5, 1.0)]
    x = np.r_[np.full(9, 0.25), 0.75]
    r = imbalance_report(x, BetaTarget(1, 1), part, alpha=0.5, beta=0.5 + 1e-10)
    assert r.verdict


def test_off_support_bins():
    x = np.array([0.2, 0.4, 0.6, 1.5])
    r = imbalance_report(x, BetaTarget(1, 1), [(0.0, 0.5), (0.5, 1.0), (1.0, 2.0)], beta=0.1)
    assert r.off_support == [2]
    assert r.deviation[2] is None
    assert 2 not in r.worst_set
    json.dumps(r.to_dict())


def test_overlapping_partition_rejected():
    with pytest.raises(ValidationError):
        imbalance_report([0.5], BetaTarget(1, 1), [(0.0, 0.6), (0.5, 1.0)])


def test_report_json_with_unbounded_bins():
    x = np.random.default_rng(2).normal(0, 1, 500)
    d = imbalance_report(x, NormalTarget(0, 1), bins=5).to_dict()
    text = json.dumps(d, allow_nan=False)
    assert json.loads(text)["partition"][0][0] == "-inf"


def test_kde_target_report():
    ref = Sample(np.random.default_rng(3).random((200, 1)), np.zeros(200))
    t = KdeTarget(fit_kde(ref))
    r = imbalance_report(ref, t, bins=5)
    assert sum(r.p0) <= 1 + 1e-9 and sum(r.p0) == pytest.approx(1.0, abs=1e-6)
    assert not r.verdict


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 10_000),
    st.floats(0.0, 1.0),
    st.floats(0.0, 0.5),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_verdict_monotone(seed, alpha, beta, da, db):
    x = np.random.default_rng(seed).beta(9, 9, size=60)
    r = imbalance_report(x, BetaTarget(5, 5), alpha=alpha, beta=beta, bins=10)
    if r.verdict:
        assert r.verdict_for(alpha * da, beta * db)


def test_histogram_cases():
    counts, edges = histogram(np.array([0.1, 0.9]), bins=2, range=(0, 1))
    np.testing.assert_array_equal(counts, [1, 1])
    counts, _ = histogram(np.full(7, 3.0), bins=4)
    assert sorted(counts)[-1] == 7 and counts.sum() == 7
    counts, _ = histogram(np.array([0.0, 1.0]), bins=3, range=(0, 1))
    assert counts[-1] == 1
    with pytest.raises(ValidationError):
        histogram(np.array([1.0]), bins=0)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e3, 1e3)), st.integers(1, 30))
def test_histogram_counts_sum(x, bins):
    assert histogram(x, bins=bins)[0].sum() == x.size


def test_imbalanced_centre_exceeds_edges(samples0):
    counts, _ = histogram(samples0.imbalanced, bins=20, range=(0, 1))
    assert counts[8:12].min() > max(counts[:3].max(), counts[-3:].max())
