"""
Negative-perturbation evaluation.

Features are masked from least to most important and the model's
agreement with a reference label is tracked per masking fraction. The
default schedule is 0%, 10%, ..., 90%, with the unmasked point included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatch, MissingAttribution, TooFewPoints
from .explain import Attribution, aggregate_token_scores
from .gaussian import generator

DEFAULT_FRACTIONS = tuple(i / 10 for i in range(10))
GROUND_TRUTH = "gt"
PREDICTED = "predicted"


@dataclass(frozen=True)
class Masker:
    """``kind="value"`` writes ``value`` into masked features.
    ``kind="token_rows"`` masks whole tokens of a ``(t, e)`` layout by
    writing ``row`` (length ``e``) over them, ranking tokens by the sum of
    their coordinate scores."""

    kind: str = "value"
    value: float = 0.0
    row: Optional[tuple] = None
    layout: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("value", "token_rows"):
            raise ValueError(f"unknown masker kind {self.kind!r}")
        if self.kind == "token_rows":
            if self.layout is None or self.row is None:
                raise ValueError("token_rows masker needs layout and row")
            if len(self.row) != self.layout[1]:
                raise DimensionMismatch("replacement row length must equal embedding size")


def n_masked(fraction: float, count: int) -> int:
    """``floor(fraction * count)``, tolerant of 0.1*10-style rounding."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    return min(count, int(math.floor(fraction * count + 1e-9)))


def _lowest(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort: ties go to the lower index first
    return np.argsort(scores, kind="stable")[:k]


def mask(x, scores, fraction: float, masker: Masker = Masker()) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(-1)
    if isinstance(scores, Attribution):
        scores = scores.scores
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.shape != x.shape:
        raise DimensionMismatch(f"{scores.shape[0]} scores for {x.shape[0]} features")
    if masker.kind == "value":
        x[_lowest(scores, n_masked(fraction, x.shape[0]))] = masker.value
        return x
    t, e = masker.layout
    if t * e != x.shape[0]:
        raise DimensionMismatch("token layout does not fit input")
    tokens = x.reshape(t, e)
    tokens[_lowest(aggregate_token_scores(scores, (t, e)), n_masked(fraction, t))] = masker.row
    return tokens.reshape(-1)


def auc(fractions: Sequence[float], values: Sequence[float]) -> float:
    """Trapezoidal area divided by the fraction span; a constant-1 curve gives 1."""
    f = np.asarray(fractions, dtype=float)
    v = np.asarray(values, dtype=float)
    if f.shape[0] < 2 or f.shape != v.shape:
        raise TooFewPoints("AUC needs at least two points")
    if np.any(np.diff(f) <= 0):
        raise ValueError("fractions must be strictly increasing")
    steps = np.diff(f)
    area = math.fsum(0.5 * (v[:-1] + v[1:]) * steps)
    return area / math.fsum(steps)


@dataclass
class PerturbationCurve:
    fractions: np.ndarray
    values: np.ndarray
    metric: str = ""
    target: str = ""

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("curve values must lie in [0, 1]")

    @property
    def auc(self) -> float:
        return auc(self.fractions, self.values)


def _predict(model, X) -> np.ndarray:
    return np.argmax(model.predict_proba(X), axis=1)


def _score_matrix(attributions, m: int, d: int) -> np.ndarray:
    if attributions is None:
        raise MissingAttribution("no attributions given")
    if isinstance(attributions, np.ndarray):
        S = np.atleast_2d(attributions).astype(float)
    else:
        S = np.array([a.scores if isinstance(a, Attribution) else np.asarray(a, float) for a in attributions])
    if S.ndim != 2 or S.shape[0] != m:
        raise MissingAttribution(f"need one attribution per example ({m}), got {S.shape[0] if S.ndim else 0}")
    if S.shape[1] != d:
        raise DimensionMismatch("attribution length does not match input dimension")
    return S


def agreement_curve(model, X, reference, attributions, fractions=DEFAULT_FRACTIONS,
                    masker: Masker = Masker()) -> np.ndarray:
    """Share of examples whose masked-input prediction equals ``reference``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    reference = np.asarray(reference, dtype=int).reshape(-1)
    S = _score_matrix(attributions, X.shape[0], X.shape[1])
    fractions = np.asarray(fractions, dtype=float)
    if np.any(np.diff(fractions) <= 0):
        raise ValueError("fractions must be strictly increasing")
    out = np.empty(fractions.shape[0])
    for j, q in enumerate(fractions):
        Xm = np.array([mask(x, s, q, masker) for x, s in zip(X, S)])
        out[j] = np.mean(_predict(model, Xm) == reference)
    return out


def posthoc_accuracy(model, X, labels, attributions, fractions=DEFAULT_FRACTIONS,
                     masker: Masker = Masker(), target: str = GROUND_TRUTH) -> PerturbationCurve:
    """Accuracy under masking against the ground truth (``target="gt"``) or
    the unmasked prediction (``target="predicted"``)."""
    if target == GROUND_TRUTH:
        reference = labels
    elif target == PREDICTED:
        reference = _predict(model, np.atleast_2d(X))
    else:
        raise ValueError(f"unknown target {target!r}")
    vals = agreement_curve(model, X, reference, attributions, fractions, masker)
    return PerturbationCurve(fractions, vals, "accuracy", target)


def posthoc_consistency(model, X, attributions, fractions=DEFAULT_FRACTIONS,
                        masker: Masker = Masker()) -> PerturbationCurve:
    """Agreement of masked-input predictions with unmasked predictions."""
    reference = _predict(model, np.atleast_2d(X))
    vals = agreement_curve(model, X, reference, attributions, fractions, masker)
    return PerturbationCurve(fractions, vals, "consistency", PREDICTED)


def spearman(a, b) -> float:
    """Pearson correlation of average-tied ranks. Returns 0 when either
    input is constant."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape or a.shape[0] < 2:
        raise DimensionMismatch("spearman needs two equal-length vectors of length >= 2")
    ra = rankdata(a) - (a.shape[0] + 1) / 2
    rb = rankdata(b) - (a.shape[0] + 1) / 2
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        return 0.0
    return float(np.clip((ra @ rb) / den, -1.0, 1.0))


def random_scores(m: int, d: int, seed: int) -> np.ndarray:
    """Uniform random attributions, the floor every method should beat."""
    return generator(seed).random((m, d))
