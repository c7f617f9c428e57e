"""
Desk-scale experiments on the grouped synthetic suite.

:func:`consistency_study` trains one MLP per seed and compares methods by
post-hoc consistency AUC. :func:`rank_agreement_study` measures how closely
covariance-weighted scores track SmoothGrad-squared, with and without the
class covariance.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import CovarianceScheme
from .data import GroupedSuite, generate, grouped_suite
from .evaluation import DEFAULT_FRACTIONS, posthoc_consistency, random_scores, spearman
from .explain import EstimatorConfig, default_noise_variance, feature_contributions, smoothgrad_sq
from .gaussian import GaussianMeasure, ScaledIdentity
from .model import accuracy, init_mlp, train
from .pipeline import attribution_matrix, class_covariances, derive_seed

BASELINES = ("smoothgrad", "smoothgrad_sq", "vargrad")


@dataclass(frozen=True)
class StudyConfig:
    suite: GroupedSuite = field(default_factory=GroupedSuite)
    hidden: tuple = (16, 32)
    epochs: int = 60
    lr: float = 0.05
    batch_size: int = 32
    train_fraction: float = 0.8
    test_examples: int = 60
    n: int = 64
    fractions: tuple = DEFAULT_FRACTIONS


@dataclass
class Prepared:
    seed: int
    model: object
    train: object
    test: object
    informative: np.ndarray
    train_accuracy: float


def prepare(seed: int, cfg: StudyConfig = StudyConfig()) -> Prepared:
    """Generate the suite for ``seed``, split it and train the classifier."""
    data, informative = generate(grouped_suite(seed, cfg.suite))
    tr, te = data.split(cfg.train_fraction)
    widths = [tr.d, *cfg.hidden, tr.num_classes]
    model, _ = train(init_mlp(widths, seed), tr.features, tr.labels, cfg.epochs, cfg.lr, cfg.batch_size, seed)
    return Prepared(seed, model, tr, te.subset(slice(0, cfg.test_examples)), informative,
                    accuracy(model, tr.features, tr.labels))


def consistency_aucs(p: Prepared, cfg: StudyConfig = StudyConfig()) -> dict:
    """Consistency AUC per method (predicted-class attributions)."""
    X = p.test.features
    predicted = p.model.predict(X)
    est = EstimatorConfig(n=cfg.n, seed=p.seed)
    covs = class_covariances(p.train, CovarianceScheme("full"))
    sigma2 = default_noise_variance(np.ptp(p.train.features))
    out = {}
    for method in ("ours", *BASELINES):
        S = attribution_matrix(method, p.model, X, predicted, est, covs, sigma2)
        out[method] = posthoc_consistency(p.model, X, S, cfg.fractions).auc
    out["random"] = posthoc_consistency(p.model, X, random_scores(*X.shape, p.seed), cfg.fractions).auc
    return out


def consistency_study(seeds, cfg: StudyConfig = StudyConfig()) -> tuple[dict, list]:
    """Mean consistency AUC per method over ``seeds``, plus per-seed rows."""
    rows = []
    for seed in seeds:
        p = prepare(seed, cfg)
        rows.append(dict(seed=seed, train_accuracy=p.train_accuracy, **consistency_aucs(p, cfg)))
    methods = [k for k in rows[0] if k not in ("seed", "train_accuracy")]
    return {m: float(np.mean([r[m] for r in rows])) for m in methods}, rows


def rank_agreement_study(p: Prepared, examples: int = 50, n: int = 64, sigma2: float = 1.0) -> dict:
    """Mean Spearman correlation with SmoothGrad-squared over test examples.

    ``identity``: normalized scores under N(x, I). ``class``: normalized
    scores under the class covariance of the predicted class. Both share
    the per-example seed with the SmoothGrad-squared run, which uses noise
    variance ``sigma2``.
    """
    covs = class_covariances(p.train, CovarianceScheme("full"))
    X = p.test.features[:examples]
    predicted = p.model.predict(X)
    rho_identity, rho_class = [], []
    for i, (x, y) in enumerate(zip(X, predicted)):
        est = EstimatorConfig(n=n, seed=derive_seed(p.seed, i), normalize_by_f=True)
        sq = smoothgrad_sq(p.model, int(y), x, replace(est, normalize_by_f=False), sigma2).scores
        ident = feature_contributions(p.model, int(y), GaussianMeasure(x, ScaledIdentity(1.0, len(x))), est).scores
        cls = feature_contributions(p.model, int(y), GaussianMeasure(x, covs[int(y)]), est).scores
        rho_identity.append(spearman(ident, sq))
        rho_class.append(spearman(cls, sq))
    return {"identity": float(np.mean(rho_identity)), "class": float(np.mean(rho_class)), "examples": len(X)}
