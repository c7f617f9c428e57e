"""
Acceptance criteria, one test each. Every test prints a single
``[PASS]`` / ``[FAIL]`` line; run with ``pytest -s tests/test_acceptance.py``
or ``python3 tests/test_acceptance.py`` to see them.
"""
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from funcinfo.cli import main as cli_main
from funcinfo.data import generate, grouped_suite, save_csv
from funcinfo.evaluation import GROUND_TRUTH, PREDICTED, auc, posthoc_accuracy, posthoc_consistency, random_scores
from funcinfo.experiments import BASELINES, consistency_study, prepare, rank_agreement_study
from funcinfo.gaussian import GaussianMeasure, Partition, condition, log_density, marginal
from funcinfo.model import MlpModel, evaluate, input_gradient
from funcinfo.pipeline import derive_seed
from funcinfo.verify import (
    VerifyConfig,
    check_chain_rule,
    check_change_of_variables,
    check_decomposition,
    check_exp_equality,
    check_log_sobolev,
    random_mlp,
    random_spd,
)


def report(number, title, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail}")
    assert ok, detail


def test_exp_equality():
    start = time.perf_counter()
    checks = check_exp_equality(VerifyConfig(n_exact=1_000_000))
    elapsed = time.perf_counter() - start
    ok = all(c.passed for c in checks) and elapsed < 30
    report(1, "exp equality", ok, "; ".join(c.detail for c in checks) + f"; {elapsed:.1f}s")


def test_log_sobolev_bounds():
    start = time.perf_counter()
    cfg = VerifyConfig(trials=100, max_dim=8, classes=3, n_bound=4000)
    ind = check_log_sobolev(cfg, dependent=False)
    dep = check_log_sobolev(cfg, dependent=True)
    elapsed = time.perf_counter() - start
    ok = ind.passed and dep.passed and elapsed < 120
    report(2, "log-Sobolev bounds", ok, f"identity {ind.detail}; random SPD {dep.detail}; {elapsed:.1f}s")


def _grid_moments(logp, dims, pts):
    axis = np.linspace(-5.0, 5.0, pts)
    mesh = np.stack(np.meshgrid(*([axis] * dims), indexing="ij"), axis=-1).reshape(-1, dims)
    lp = logp(mesh)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    mu = w @ mesh
    r = mesh - mu
    return mu, (r * w[:, None]).T @ r


def _grid_marginal(g, z2, lo=-12.0, hi=12.0, pts=6001):
    z1 = np.linspace(lo, hi, pts)
    return trapezoid(np.exp(log_density(g, np.column_stack([z1, np.full(pts, z2)]))), z1)


def test_conditional_gaussian():
    worst = 0.0
    # d = 2: condition z1 on z2 and read the marginal of z2
    g2 = GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    p2 = Partition.from_subset([0], 2)
    for z2 in (-1.0, 0.0, 1.0):
        c = condition(g2, p2, [z2])
        mu, cov = _grid_moments(lambda z: log_density(g2, np.column_stack([z[:, 0], np.full(len(z), z2)])), 1, 2001)
        worst = max(worst, np.max(np.abs(c.mean - mu)), np.max(np.abs(c.dense_covariance() - cov)))
        worst = max(worst, abs(_grid_marginal(g2, z2) - np.exp(log_density(marginal(g2, p2), [z2]))))
    # d = 3: random SPD, condition on the last coordinate
    rng = np.random.default_rng(0)
    g3 = GaussianMeasure(0.3 * rng.standard_normal(3), random_spd(3, rng))
    p3 = Partition.from_subset([0, 1], 3)
    for z3 in (-0.5, 0.4):
        c = condition(g3, p3, [z3])
        mu, cov = _grid_moments(lambda z: log_density(g3, np.column_stack([z, np.full(len(z), z3)])), 2, 401)
        worst = max(worst, np.max(np.abs(c.mean - mu)), np.max(np.abs(c.dense_covariance() - cov)))
    chain = check_chain_rule(VerifyConfig(), points=1000)
    ok = worst < 1e-3 and chain.passed
    report(3, "conditional Gaussian", ok, f"grid oracle max deviation {worst:.1e}; chain rule {chain.detail}")


def _central_difference(f, z, y, h=1e-4):
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        out[i] = (evaluate(f, z + e)[y] - evaluate(f, z - e)[y]) / (2 * h)
    return out


def test_gradient_fidelity():
    worst = 0.0
    for t in range(100):
        net, x, rng = random_mlp(derive_seed(4, t))
        y = int(rng.integers(net.k))
        ref = _central_difference(net, x, y)
        err = np.max(np.abs(input_gradient(net, x, y) - ref)) / max(np.max(np.abs(ref)), 1e-8)
        worst = max(worst, err)
    report(4, "gradient fidelity", worst < 1e-4, f"max relative error {worst:.1e} over 100 triples")


def test_identities():
    cfg = VerifyConfig()
    dec = check_decomposition(cfg)
    cov = check_change_of_variables(cfg)
    report(5, "decomposition and change of variables", dec.passed and cov.passed,
           f"decomposition {dec.detail}; change of variables {cov.detail}")


def test_rank_agreement():
    r = rank_agreement_study(prepare(0), examples=50)
    ok = r["identity"] > 0.9 and r["class"] < 0.6
    report(6, "Spearman observation", ok,
           f"mean rho over {r['examples']} examples: identity {r['identity']:.3f} (> 0.9), "
           f"class covariance {r['class']:.3f} (< 0.6)")


def test_consistency_ordering():
    start = time.perf_counter()
    means, _ = consistency_study(range(5))
    elapsed = time.perf_counter() - start
    beats_baselines = all(means["ours"] >= means[b] for b in BASELINES)
    beats_random = all(means[m] > means["random"] for m in ("ours", *BASELINES))
    ok = beats_baselines and beats_random and elapsed < 300
    table = ", ".join(f"{m} {v:.3f}" for m, v in means.items())
    report(7, "consistency AUC ordering", ok, f"mean over 5 seeds: {table}; {elapsed:.1f}s")


def test_protocol_identities():
    p = prepare(1)
    X, labels = p.test.features, p.test.labels
    S = random_scores(*X.shape, 0)
    acc = posthoc_accuracy(p.model, X, labels, S, target=PREDICTED)
    con = posthoc_consistency(p.model, X, S)
    same = np.array_equal(acc.values, con.values) and acc.auc == con.auc
    b = np.zeros(3)
    b[2] = 4.0
    constant = MlpModel([np.zeros((X.shape[1], 3))], [b])
    const_auc = posthoc_consistency(constant, X, S).auc
    hand = (auc(np.arange(10) / 10, [1.0] * 10), auc([0, 1], [1, 0]), auc([0, 0.5, 1], [1.0, 0.8, 0.2]))
    gt = posthoc_accuracy(p.model, X, labels, S, target=GROUND_TRUTH)
    gt_ok = gt.values[0] == np.mean(p.model.predict(X) == labels)
    ok = same and const_auc == 1.0 and hand == (1.0, 0.5, 0.70) and gt_ok
    report(8, "protocol identities", ok,
           f"consistency == predicted accuracy: {same}; constant model AUC {const_auc}; hand AUCs {hand}")


def test_cli_reproducibility(tmp_path, capsys):
    data, _ = generate(grouped_suite(0))
    save_csv(data, tmp_path / "data.csv")
    assert cli_main(["train", "--data", str(tmp_path / "data.csv"), "--hidden", "16", "32",
                     "--out", str(tmp_path / "model.json")]) == 0
    common = ["--model", str(tmp_path / "model.json"), "--data", str(tmp_path / "data.csv")]
    runs = {
        "explain": ["explain", *common, "--index", "7", "--out", str(tmp_path / "a.csv")],
        "evaluate": ["evaluate", *common, "--limit", "20", "--out", str(tmp_path / "e.csv")],
    }
    outputs = {"explain": ["a.csv"], "evaluate": ["e.csv", "e.summary.csv"]}
    same = {}
    for name, args in runs.items():
        assert cli_main(args) == 0
        first = [(tmp_path / f).read_bytes() for f in outputs[name]]
        assert cli_main(args) == 0
        same[name] = first == [(tmp_path / f).read_bytes() for f in outputs[name]]
    capsys.readouterr()
    report(9, "CLI reproducibility", all(same.values()),
           ", ".join(f"{k} byte-identical: {v}" for k, v in same.items()))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
