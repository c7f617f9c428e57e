"""
Numerical checks of the entropy / Fisher-information relations.

Each check returns a :class:`Check`. ``tamper=True`` negates every Fisher
estimate before comparison; it exists so tests can confirm the checks are
able to fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .explain import (
    CONDITION_ON_INPUT,
    EstimatorConfig,
    dependent_fisher_total,
    feature_contributions,
    fisher_independent,
    functional_entropy_mc,
    subset_contributions,
)
from .gaussian import (
    GaussianMeasure,
    Partition,
    condition,
    generator,
    log_density,
    marginal,
    sample,
)
from .model import AnalyticFunction, FrozenComplement, MlpModel, Reparameterized, init_mlp
from .pipeline import derive_seed


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    trials: int = 100
    n_bound: int = 4000
    n_exact: int = 1_000_000
    max_dim: int = 8
    classes: int = 3
    exact_rtol: float = 0.05
    identity_atol: float = 1e-10
    min_pass_share: float = 0.99
    tamper: bool = False


def exp_closed_form(mean: float, var: float) -> float:
    """Entropy of ``e^z`` under N(mean, var): ``var/2 * exp(mean + var/2)``."""
    return 0.5 * var * math.exp(mean + 0.5 * var)


def random_spd(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix with eigenvalues bounded away from zero."""
    A = rng.standard_normal((d, d))
    return A @ A.T / d + 0.1 * np.eye(d)


def random_mlp(seed: int, max_dim: int = 8, classes: int = 3, gain: float = 3.0, min_dim: int = 1):
    """A small ReLU net with inflated weights so its outputs vary visibly."""
    rng = generator(seed)
    d = int(rng.integers(min_dim, max_dim + 1))
    hidden = int(rng.integers(2, 9))
    m = init_mlp([d, hidden, classes], seed)
    net = MlpModel([gain * w for w in m.weights], [rng.standard_normal(b.shape) for b in m.biases])
    return net, rng.standard_normal(d), rng


def _sign(cfg: VerifyConfig) -> float:
    return -1.0 if cfg.tamper else 1.0


def check_exp_equality(cfg: VerifyConfig) -> list:
    """Entropy and half the Fisher information of ``e^z`` against the closed form."""
    f = AnalyticFunction("exp", [1.0])
    out = []
    for mean, var in ((0.0, 1.0), (1.0, 4.0)):
        exact = exp_closed_form(mean, var)
        est = EstimatorConfig(n=cfg.n_exact, seed=cfg.seed, normalize_by_f=True)
        g = GaussianMeasure([mean], [[var]])
        ent = functional_entropy_mc(f, 0, g, est).value
        if var == 1.0:
            fisher = fisher_independent(f, 0, [mean], est).total
        else:
            fisher = feature_contributions(f, 0, g, est).total
        half = 0.5 * _sign(cfg) * fisher
        ok = abs(ent / exact - 1) <= cfg.exact_rtol and abs(half / exact - 1) <= cfg.exact_rtol
        out.append(Check(
            f"exp equality N({mean:g},{var:g})", ok,
            f"analytic {exact:.4f}, entropy {ent:.4f}, half Fisher {half:.4f}",
        ))
    return out


def check_exp_equality_multivariate(cfg: VerifyConfig, d: int = 3) -> Check:
    rng = generator(cfg.seed + 1)
    w = 0.5 * rng.standard_normal(d)
    x = 0.5 * rng.standard_normal(d)
    S = random_spd(d, rng)
    q = float(w @ S @ w)
    exact = exp_closed_form(float(w @ x), q)
    f = AnalyticFunction("exp", w)
    est = EstimatorConfig(n=cfg.n_exact, seed=cfg.seed, normalize_by_f=True)
    half = 0.5 * _sign(cfg) * feature_contributions(f, 0, GaussianMeasure(x, S), est).total
    ok = abs(half / exact - 1) <= cfg.exact_rtol
    return Check("exp equality, multivariate", ok, f"analytic {exact:.4f}, half Fisher {half:.4f}")


def _bound_trial(f, y, g, est, fisher_total, fisher_se, sign):
    ent = functional_entropy_mc(f, y, g, est)
    half, half_se = 0.5 * sign * fisher_total, 0.5 * fisher_se
    return half >= ent.value - 3.0 * math.hypot(half_se, ent.std_error)


def check_log_sobolev(cfg: VerifyConfig, dependent: bool) -> Check:
    """Half the Fisher information bounds the entropy on random small nets."""
    passed = 0
    for t in range(cfg.trials):
        seed = derive_seed(cfg.seed, t)
        net, x, rng = random_mlp(seed, cfg.max_dim, cfg.classes)
        y = int(rng.integers(cfg.classes))
        est = EstimatorConfig(n=cfg.n_bound, seed=seed, normalize_by_f=True)
        if dependent:
            g = GaussianMeasure(x, random_spd(net.d, rng))
            a = feature_contributions(net, y, g, est)
        else:
            g = GaussianMeasure(x, np.eye(net.d))
            a = fisher_independent(net, y, x, est)
        passed += _bound_trial(net, y, g, est, a.total, a.total_se, _sign(cfg))
    share = passed / cfg.trials
    label = "dependent (random SPD)" if dependent else "independent (identity)"
    return Check(f"log-Sobolev {label}", share >= cfg.min_pass_share, f"{passed}/{cfg.trials} trials hold")


def check_subset_bounds(cfg: VerifyConfig, trials: int = 20, n_outer: int = 30) -> Check:
    """Conditional log-Sobolev bounds on random nets.

    Averaged over complement draws ``z2`` from the marginal, the conditional
    entropy of the subset is bounded by half the conditional information;
    and the same holds with the complement frozen at ``x2``. Both sides use
    the conditional covariance and subset-only gradients.
    """
    passed = 0
    sign = _sign(cfg)
    for t in range(trials):
        seed = derive_seed(cfg.seed + 7, t)
        net, x, rng = random_mlp(seed, cfg.max_dim, cfg.classes, min_dim=2)
        y = int(rng.integers(cfg.classes))
        g = GaussianMeasure(x, random_spd(net.d, rng))
        p = Partition.from_subset(range(net.d // 2), net.d)
        est = EstimatorConfig(n=cfg.n_bound, seed=seed, normalize_by_f=True)

        gaps = []
        for j, z2 in enumerate(sample(marginal(g, p), n_outer, seed)):
            inner = replace(est, seed=derive_seed(seed, j))
            fz = FrozenComplement(net, p, z2)
            cond = condition(g, p, z2)
            ent = functional_entropy_mc(fz, y, cond, inner).value
            gaps.append(0.5 * sign * feature_contributions(fz, y, cond, inner).total - ent)
        gaps = np.array(gaps)
        ok1 = gaps.mean() >= -3.0 * gaps.std(ddof=1) / math.sqrt(n_outer)

        a = subset_contributions(net, y, g, p, est, CONDITION_ON_INPUT)
        x2 = x[list(p.complement)]
        ok2 = _bound_trial(FrozenComplement(net, p, x2), y, condition(g, p, x2), est, a.total, a.total_se, sign)
        passed += ok1 and ok2
    share = passed / trials
    return Check("subset (conditional) bounds", share >= cfg.min_pass_share, f"{passed}/{trials} trials hold")


def check_decomposition(cfg: VerifyConfig, trials: int = 20) -> Check:
    """Per-feature scores sum to the scalar dependent-Fisher total."""
    worst = 0.0
    for t in range(trials):
        seed = derive_seed(cfg.seed + 11, t)
        net, x, rng = random_mlp(seed, cfg.max_dim, cfg.classes)
        g = GaussianMeasure(x, random_spd(net.d, rng))
        for normalize in (False, True):
            est = EstimatorConfig(n=256, seed=seed, normalize_by_f=normalize)
            a = feature_contributions(net, 0, g, est)
            total, _ = dependent_fisher_total(net, 0, g, est)
            worst = max(worst, abs(_sign(cfg) * a.scores.sum() - total) / max(1.0, abs(total)))
    return Check("per-feature decomposition", worst <= cfg.identity_atol, f"max deviation {worst:.2e}")


def check_change_of_variables(cfg: VerifyConfig, trials: int = 20) -> Check:
    """Dependent Fisher total under N(x, S) equals the independent total of
    ``u -> f(x + L u)`` under N(0, I), on the same standard-normal draws."""
    worst = 0.0
    for t in range(trials):
        seed = derive_seed(cfg.seed + 13, t)
        net, x, rng = random_mlp(seed, cfg.max_dim, cfg.classes)
        g = GaussianMeasure(x, random_spd(net.d, rng))
        est = EstimatorConfig(n=256, seed=seed, normalize_by_f=True)
        direct = feature_contributions(net, 0, g, est).total
        whitened = fisher_independent(Reparameterized(net, x, g.cov.factor), 0, np.zeros(net.d), est).total
        worst = max(worst, abs(_sign(cfg) * direct - whitened) / max(1.0, abs(direct)))
    return Check("change of variables", worst <= cfg.identity_atol, f"max deviation {worst:.2e}")


def check_chain_rule(cfg: VerifyConfig, points: int = 1000) -> Check:
    """Joint log density = marginal + conditional log densities."""
    rng = generator(cfg.seed + 17)
    worst = 0.0
    per = max(1, points // 10)
    for t in range(10):
        d = int(rng.integers(2, 6))
        g = GaussianMeasure(rng.standard_normal(d), random_spd(d, rng))
        p = Partition.from_subset(sorted(rng.choice(d, size=int(rng.integers(1, d)), replace=False)), d)
        marg = marginal(g, p)
        for z in sample(g, per, derive_seed(cfg.seed, t)):
            z1, z2 = z[list(p.subset)], z[list(p.complement)]
            joint = log_density(g, z)
            split = log_density(marg, z2) + log_density(condition(g, p, z2), z1)
            worst = max(worst, abs(joint - split))
    return Check("density chain rule", worst <= 1e-8, f"max deviation {worst:.2e} over {10 * per} points")


def run_all(cfg: VerifyConfig = VerifyConfig()) -> list:
    checks = check_exp_equality(cfg)
    checks.append(check_exp_equality_multivariate(cfg))
    checks.append(check_log_sobolev(cfg, dependent=False))
    checks.append(check_log_sobolev(cfg, dependent=True))
    checks.append(check_subset_bounds(cfg))
    checks.append(check_decomposition(cfg))
    checks.append(check_change_of_variables(cfg))
    checks.append(check_chain_rule(cfg))
    return checks
