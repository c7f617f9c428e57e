import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from funcinfo.errors import InvalidPartition
from funcinfo.explain import (
    CONDITION_ON_INPUT,
    MARGINALIZE,
    EstimatorConfig,
    aggregate_token_scores,
    default_noise_variance,
    dependent_fisher_total,
    explain,
    feature_contributions,
    fisher_independent,
    functional_entropy_mc,
    load_attribution,
    save_attribution,
    smoothgrad,
    smoothgrad_sq,
    subset_contributions,
    vargrad,
)
from funcinfo.gaussian import GaussianMeasure, Partition, ScaledIdentity
from funcinfo.model import AnalyticFunction, FrozenComplement, linear_softmax
from funcinfo.verify import random_mlp, random_spd


def within(est, se, expected, k=3.0):
    return np.all(np.abs(np.asarray(est) - expected) <= k * np.asarray(se) + 1e-12)


def test_constant_entropy_is_exactly_zero():
    f = AnalyticFunction("constant", [0.0, 0.0], 0.3)
    e = functional_entropy_mc(f, 0, GaussianMeasure([1.0, 2.0], np.eye(2)), EstimatorConfig(n=100))
    assert e.value == 0.0 and e.std_error == 0.0


def test_exp_entropy_closed_form():
    f = AnalyticFunction("exp", [1.0])
    e = functional_entropy_mc(f, 0, GaussianMeasure([0.0], [[1.0]]), EstimatorConfig(n=200_000, seed=1))
    assert e.value == pytest.approx(0.5 * math.exp(0.5), rel=0.05)


def test_exp_fisher_equality_case():
    f = AnalyticFunction("exp", [1.0])
    a = fisher_independent(f, 0, [0.0], EstimatorConfig(n=200_000, seed=2))
    assert a.total == pytest.approx(math.exp(0.5), rel=0.05)


def test_constant_f_gives_zero_scores():
    f = AnalyticFunction("constant", [0.0, 0.0, 0.0], 1.0)
    cfg = EstimatorConfig(n=16)
    x = np.ones(3)
    for a in (
        fisher_independent(f, 0, x, cfg),
        feature_contributions(f, 0, GaussianMeasure(x, random_spd(3, np.random.default_rng(0))), cfg),
        smoothgrad(f, 0, x, cfg),
        smoothgrad_sq(f, 0, x, cfg),
        vargrad(f, 0, x, cfg),
    ):
        np.testing.assert_array_equal(a.scores, 0.0)


def test_irrelevant_feature_scores_zero():
    m = linear_softmax([[1.0, 0.0, -2.0], [0.5, 0.0, 1.0]])
    x = np.array([0.2, 5.0, -0.3])
    a = fisher_independent(m, 0, x, EstimatorConfig(n=64))
    assert a.scores[1] == 0.0
    b = feature_contributions(m, 1, GaussianMeasure(x, np.diag([1.0, 2.0, 3.0])), EstimatorConfig(n=64))
    assert b.scores[1] == 0.0


def test_identity_covariance_matches_independent():
    net, x, _ = random_mlp(3)
    cfg = EstimatorConfig(n=128, seed=9, normalize_by_f=True)
    ours = feature_contributions(net, 1, GaussianMeasure(x, np.eye(net.d)), cfg)
    ind = fisher_independent(net, 1, x, cfg)
    np.testing.assert_allclose(ours.scores, ind.scores, rtol=1e-12, atol=0)


def test_linear_function_closed_form():
    w = np.array([0.5, -1.0, 2.0])
    f = AnalyticFunction("linear", w, 100.0)
    S = random_spd(3, np.random.default_rng(1))
    a = feature_contributions(f, 0, GaussianMeasure(np.zeros(3), S), EstimatorConfig(n=500))
    expected = (S @ w) * w
    assert within(a.scores, a.std_errors, expected)
    np.testing.assert_allclose(a.scores, expected, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_half_fisher_bounds_entropy(seed):
    net, x, rng = random_mlp(100 + seed)
    g = GaussianMeasure(x, random_spd(net.d, rng))
    cfg = EstimatorConfig(n=4000, seed=seed, normalize_by_f=True)
    a = feature_contributions(net, 0, g, cfg)
    e = functional_entropy_mc(net, 0, g, cfg)
    assert 0.5 * a.total >= e.value - 3 * math.hypot(0.5 * a.total_se, e.std_error)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_scores_sum_to_scalar_total(seed, normalize):
    net, x, rng = random_mlp(seed)
    g = GaussianMeasure(x, random_spd(net.d, rng))
    cfg = EstimatorConfig(n=64, seed=seed, normalize_by_f=normalize)
    total, _ = dependent_fisher_total(net, 0, g, cfg)
    assert abs(feature_contributions(net, 0, g, cfg).scores.sum() - total) <= 1e-10 * max(1.0, abs(total))


def test_determinism():
    net, x, rng = random_mlp(7)
    g = GaussianMeasure(x, random_spd(net.d, rng))
    a = feature_contributions(net, 2, g, EstimatorConfig(n=32, seed=4))
    b = feature_contributions(net, 2, g, EstimatorConfig(n=32, seed=4))
    np.testing.assert_array_equal(a.scores, b.scores)
    np.testing.assert_array_equal(a.std_errors, b.std_errors)
    assert np.all(a.std_errors >= 0)


# subsets

def test_subset_block_diagonal_equals_restriction():
    net, x, rng = random_mlp(11, min_dim=4)
    d = net.d
    p = Partition.from_subset(range(2), d)
    S = np.zeros((d, d))
    S[:2, :2] = random_spd(2, rng)
    S[2:, 2:] = random_spd(d - 2, rng)
    cfg = EstimatorConfig(n=64, seed=5)
    sub = subset_contributions(net, 0, GaussianMeasure(x, S), p, cfg, CONDITION_ON_INPUT)
    direct = feature_contributions(FrozenComplement(net, p, x[2:]), 0, GaussianMeasure(x[:2], S[:2, :2]), cfg)
    np.testing.assert_array_equal(sub.scores, direct.scores)
    np.testing.assert_array_equal(sub.indices, [0, 1])


def test_subset_exp_closed_form():
    # conditional of z1 given z2 = 0 is N(0, 0.75); E[e^z1] = e^{0.375}; score = 0.75 * that
    f = AnalyticFunction("exp", [1.0, 1.0])
    g = GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    cfg = EstimatorConfig(n=100_000, seed=3, normalize_by_f=True)
    a = subset_contributions(f, 0, g, Partition.from_subset([0], 2), cfg)
    assert within(a.scores, a.std_errors, [0.75 * math.exp(0.375)])


def test_subset_needs_nonempty_complement():
    g = GaussianMeasure([0.0, 0.0], np.eye(2))
    for mode in (CONDITION_ON_INPUT, MARGINALIZE):
        with pytest.raises(InvalidPartition):
            subset_contributions(AnalyticFunction("exp", [1.0, 1.0]), 0, g, Partition.from_subset([0, 1], 2),
                                 EstimatorConfig(n=8), mode)


def test_marginalize_under_independence_matches_expectation():
    # with Sigma = I the conditional law ignores z2; for f = e^{z1+z2} the
    # normalized contribution of z1 is E[e^{z1+z2}] under N(0, I) = e
    f = AnalyticFunction("exp", [1.0, 1.0])
    g = GaussianMeasure([0.0, 0.0], np.eye(2))
    cfg = EstimatorConfig(n=200, seed=1, normalize_by_f=True)
    a = subset_contributions(f, 0, g, Partition.from_subset([0], 2), cfg, MARGINALIZE, 500)
    assert within(a.scores, a.std_errors, [math.e])


# baselines

def test_smoothgrad_linear_stub():
    w = np.array([0.5, -1.0, 2.0])
    f = AnalyticFunction("linear", w, 10.0)
    cfg = EstimatorConfig(n=32)
    np.testing.assert_allclose(smoothgrad(f, 0, np.zeros(3), cfg, 1.0).scores, w)
    np.testing.assert_allclose(smoothgrad_sq(f, 0, np.zeros(3), cfg, 1.0).scores, w**2)
    np.testing.assert_array_equal(vargrad(f, 0, np.zeros(3), cfg, 1.0).scores, 0.0)


def test_vargrad_is_variance_decomposition():
    net, x, _ = random_mlp(21)
    cfg = EstimatorConfig(n=2000, seed=6)
    sg, sq, vg = (m(net, 0, x, cfg, 0.5) for m in (smoothgrad, smoothgrad_sq, vargrad))
    # same draws: unbiased variance = n/(n-1) * (mean of squares - square of mean)
    np.testing.assert_allclose(vg.scores * (cfg.n - 1) / cfg.n, sq.scores - sg.scores**2, rtol=1e-9, atol=1e-15)
    assert within(vg.scores, vg.std_errors, sq.scores - sg.scores**2)


def test_smoothgrad_sq_equals_fisher_times_constant():
    f = AnalyticFunction("constant", [0.0, 0.0], 2.0)
    cfg = EstimatorConfig(n=64)
    sq = smoothgrad_sq(f, 0, np.zeros(2), cfg, 1.0)
    fi = fisher_independent(f, 0, np.zeros(2), cfg)
    np.testing.assert_array_equal(sq.scores, fi.scores * 2.0)


def test_smoothgrad_sq_is_unnormalized_fisher_at_unit_noise():
    net, x, _ = random_mlp(5)
    cfg = EstimatorConfig(n=64, seed=2)
    sq = smoothgrad_sq(net, 0, x, cfg, 1.0)
    ours = feature_contributions(net, 0, GaussianMeasure(x, ScaledIdentity(1.0, net.d)), cfg)
    np.testing.assert_allclose(sq.scores, ours.scores, rtol=1e-12)


def test_default_noise_variance():
    assert default_noise_variance(10.0) == pytest.approx(1.0)
    assert default_noise_variance(0.0) == 0.01


def test_explain_dispatch():
    net, x, _ = random_mlp(2)
    cfg = EstimatorConfig(n=8)
    assert explain("smoothgrad", net, 0, x, cfg, sigma2=0.1).method == "smoothgrad"
    assert explain("ours", net, 0, x, cfg, covariance=np.eye(net.d)).method == "ours"
    with pytest.raises(ValueError):
        explain("lime", net, 0, x, cfg)
    with pytest.raises(ValueError):
        explain("ours", net, 0, x, cfg)


@pytest.mark.parametrize("scores, layout, expected", [
    ([1.0, 2.0, 3.0], (3, 1), [1.0, 2.0, 3.0]),
    ([0.0] * 6, (2, 3), [0.0, 0.0]),
    ([1, 2, 3, 4, 5, 6], (2, 3), [6.0, 15.0]),
])
def test_aggregate_token_scores(scores, layout, expected):
    np.testing.assert_array_equal(aggregate_token_scores(scores, layout), expected)


def test_attribution_round_trip(tmp_path):
    net, x, rng = random_mlp(8)
    a = feature_contributions(net, 1, GaussianMeasure(x, random_spd(net.d, rng)), EstimatorConfig(n=16, seed=3))
    save_attribution(a, tmp_path / "a.csv", {"covariance_scheme": "full"})
    b = load_attribution(tmp_path / "a.csv")
    np.testing.assert_array_equal(a.scores, b.scores)
    np.testing.assert_array_equal(a.std_errors, b.std_errors)
    assert (b.method, b.target, b.n, b.seed) == ("ours", 1, 16, 3)
    assert b.meta["covariance_scheme"] == "full"
    assert (tmp_path / "a.csv").read_text().splitlines()[1] == "feature_index,score,std_error"
