"""Batch attribution and the method-comparison protocol over a test set."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .covariance import CovarianceScheme, DEFAULT_JITTER, estimate_class_covariance
from .evaluation import (
    DEFAULT_FRACTIONS,
    GROUND_TRUTH,
    PREDICTED,
    Masker,
    posthoc_accuracy,
    posthoc_consistency,
    random_scores,
)
from .explain import EstimatorConfig, explain


def derive_seed(seed: int, index: int) -> int:
    """Independent per-example seed from a base seed and an example index."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def class_covariances(train, scheme: CovarianceScheme = CovarianceScheme(), jitter: float = DEFAULT_JITTER,
                      pooled: bool = False) -> dict:
    return {
        y: estimate_class_covariance(train, y, scheme, jitter, pooled)
        for y in range(train.num_classes)
        if pooled or np.any(train.labels == y)
    }


def attribution_matrix(method, model, X, targets, cfg: EstimatorConfig, covariances=None, sigma2=None):
    """Score matrix ``(m, d)``: example ``i`` explained for class ``targets[i]``
    with seed ``derive_seed(cfg.seed, i)``."""
    X = np.atleast_2d(X)
    rows = []
    for i, (x, y) in enumerate(zip(X, np.asarray(targets, dtype=int))):
        c = replace(cfg, seed=derive_seed(cfg.seed, i))
        cov = covariances[int(y)] if covariances is not None else None
        rows.append(explain(method, model, int(y), x, c, cov, sigma2).scores)
    return np.array(rows)


def compare_methods(model, test, methods, cfg: EstimatorConfig, covariances=None, sigma2=None,
                    fractions=DEFAULT_FRACTIONS, masker: Masker = Masker(), random_seed=None):
    """Accuracy (GT and predicted targets) and consistency curves per method.

    Returns a list of dicts with keys method, target, metric, curve. The
    pseudo-method ``random`` uses uniform random scores seeded by
    ``random_seed`` (default: the config seed).
    """
    X, labels = test.features, test.labels
    predicted = np.argmax(model.predict_proba(X), axis=1)
    results = []
    for method in methods:
        if method == "random":
            seed = cfg.seed if random_seed is None else random_seed
            S_gt = S_pred = random_scores(X.shape[0], X.shape[1], seed)
        else:
            S_gt = attribution_matrix(method, model, X, labels, cfg, covariances, sigma2)
            S_pred = attribution_matrix(method, model, X, predicted, cfg, covariances, sigma2)
        results.append(dict(method=method, target=GROUND_TRUTH, metric="accuracy",
                            curve=posthoc_accuracy(model, X, labels, S_gt, fractions, masker, GROUND_TRUTH)))
        results.append(dict(method=method, target=PREDICTED, metric="accuracy",
                            curve=posthoc_accuracy(model, X, labels, S_pred, fractions, masker, PREDICTED)))
        results.append(dict(method=method, target=PREDICTED, metric="consistency",
                            curve=posthoc_consistency(model, X, S_pred, fractions, masker)))
    return results
