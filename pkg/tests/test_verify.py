import numpy as np
import pytest

from funcinfo.data import grouped_suite, generate
from funcinfo.evaluation import Masker
from funcinfo.explain import EstimatorConfig
from funcinfo.model import init_mlp, train
from funcinfo.pipeline import attribution_matrix, class_covariances, compare_methods, derive_seed
from funcinfo.verify import VerifyConfig, exp_closed_form, run_all


def test_closed_form_values():
    assert exp_closed_form(0.0, 1.0) == pytest.approx(0.8244, abs=1e-4)
    assert exp_closed_form(1.0, 4.0) == pytest.approx(2 * np.exp(3))


@pytest.fixture(scope="module")
def default_checks():
    return run_all(VerifyConfig())


def test_default_checks_pass(default_checks):
    failed = [c.line() for c in default_checks if not c.passed]
    assert not failed, failed


def test_tampered_estimator_is_caught():
    checks = run_all(VerifyConfig(trials=10, n_bound=1000, n_exact=50_000, tamper=True))
    names = {c.name for c in checks if not c.passed}
    assert "log-Sobolev dependent (random SPD)" in names
    assert "exp equality N(0,1)" in names


def test_check_line_format(default_checks):
    assert default_checks[0].line().startswith("[PASS] exp equality N(0,1): analytic 0.8244")


def test_derive_seed_distinct_and_stable():
    seeds = [derive_seed(0, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [derive_seed(0, i) for i in range(100)]


def test_compare_methods_layout():
    data, _ = generate(grouped_suite(0))
    tr, te = data.split(0.8)
    te = te.subset(slice(0, 10))
    model, _ = train(init_mlp([tr.d, 8, tr.num_classes], 0), tr.features, tr.labels, 5, 0.05, 32, 0)
    cfg = EstimatorConfig(n=8)
    covs = class_covariances(tr)
    res = compare_methods(model, te, ["ours", "random"], cfg, covs, 1.0, masker=Masker())
    assert [(r["method"], r["target"], r["metric"]) for r in res] == [
        ("ours", "gt", "accuracy"), ("ours", "predicted", "accuracy"), ("ours", "predicted", "consistency"),
        ("random", "gt", "accuracy"), ("random", "predicted", "accuracy"), ("random", "predicted", "consistency"),
    ]
    S = attribution_matrix("ours", model, te.features, te.labels, cfg, covs)
    np.testing.assert_array_equal(S, attribution_matrix("ours", model, te.features, te.labels, cfg, covs))
