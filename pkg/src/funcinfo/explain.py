"""
Monte-Carlo attribution estimators.

Functional-information scores (independent, covariance-weighted and
subset-conditional) plus the SmoothGrad, SmoothGradSQ and VarGrad
baselines. Every estimator draws its perturbations through
:func:`funcinfo.gaussian.sample`, so two estimators given the same seed and
the same measure see the same points.

Standard errors are per feature, from the sample variance of the per-draw
summands.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .gaussian import (
    Conditioner,
    GaussianMeasure,
    Partition,
    ScaledIdentity,
    condition,
    generator,
    marginal,
    sample,
)
from .model import FrozenComplement

DEFAULT_N = 64
DEFAULT_VALUE_FLOOR = 1e-12

MARGINALIZE = "marginalize"
CONDITION_ON_INPUT = "condition"


@dataclass(frozen=True)
class EstimatorConfig:
    n: int = DEFAULT_N
    seed: int = 0
    value_floor: float = DEFAULT_VALUE_FLOOR
    normalize_by_f: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.value_floor > 0:
            raise ValueError("value_floor must be > 0")


@dataclass
class Attribution:
    scores: np.ndarray
    std_errors: np.ndarray
    method: str
    target: int
    n: int
    seed: int
    total: Optional[float] = None
    total_se: Optional[float] = None
    indices: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).reshape(-1)
        self.std_errors = np.asarray(self.std_errors, dtype=float).reshape(-1)
        if self.scores.shape != self.std_errors.shape:
            raise DimensionMismatch("scores and std_errors differ in length")
        if np.any(self.std_errors < 0):
            raise ValueError("standard errors must be >= 0")
        if self.indices is None:
            self.indices = np.arange(self.scores.shape[0])

    @property
    def d(self) -> int:
        return self.scores.shape[0]

    def header(self) -> dict:
        h = {"method": self.method, "class": self.target, "n": self.n, "seed": self.seed}
        if self.total is not None:
            h["total"] = self.total
            h["total_se"] = self.total_se
        h.update(self.meta)
        return h


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    std_error: float
    n: int


def _mean_and_se(summands: np.ndarray):
    n = summands.shape[0]
    mean = summands.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, summands.std(axis=0, ddof=1) / np.sqrt(n)


def _from_summands(summands, method, y, cfg, with_total=True, **meta) -> Attribution:
    scores, se = _mean_and_se(summands)
    total = total_se = None
    if with_total:
        t, tse = _mean_and_se(summands.sum(axis=1))
        total, total_se = float(t), float(tse)
    return Attribution(scores, se, method, int(y), cfg.n, cfg.seed, total, total_se, meta=meta)


def _values_and_grads(f, y, Z):
    val, grad = f.value_and_gradient(Z, y)
    return np.asarray(val, dtype=float), np.asarray(grad, dtype=float)


def functional_entropy_mc(f, y: int, g: GaussianMeasure, cfg: EstimatorConfig) -> EntropyEstimate:
    """Plug-in estimate of ``E[f log f] - E[f] log E[f]`` under ``g``.

    The plug-in form is biased low for small ``n`` (the log of a sample
    mean); it exists to check the Fisher bounds, not as an attribution.
    The standard error is the delta-method one.
    """
    if cfg.n < 2:
        raise ValueError("entropy estimate needs n >= 2")
    Z = sample(g, cfg.n, cfg.seed)
    fz = np.asarray(f.predict_proba(Z)[:, y], dtype=float)
    if np.any(fz < 0):
        raise ValueError("functional entropy needs a non-negative function")
    if np.ptp(fz) == 0:
        return EntropyEstimate(0.0, 0.0, cfg.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(fz > 0, fz * np.log(fz), 0.0)
    m = fz.mean()
    value = phi.mean() - m * np.log(m)
    influence = phi - (np.log(m) + 1.0) * fz
    return EntropyEstimate(float(value), float(influence.std(ddof=1) / np.sqrt(cfg.n)), cfg.n)


def fisher_independent(f, y: int, x, cfg: EstimatorConfig) -> Attribution:
    """Per-feature ``E[(d_i f)^2 / f]`` under N(x, I); ``total`` is their sum."""
    x = np.asarray(x, dtype=float).reshape(-1)
    Z = sample(GaussianMeasure(x, ScaledIdentity(1.0, x.shape[0])), cfg.n, cfg.seed)
    fz, G = _values_and_grads(f, y, Z)
    summands = G * G / np.maximum(fz, cfg.value_floor)[:, None]
    return _from_summands(summands, "fisher_independent", y, cfg)


def _weighted_summands(fz, G, cov, cfg):
    summands = cov.matvec(G) * G
    if cfg.normalize_by_f:
        summands = summands / np.maximum(fz, cfg.value_floor)[:, None]
    return summands


def feature_contributions(f, y: int, g: GaussianMeasure, cfg: EstimatorConfig) -> Attribution:
    """Covariance-weighted contributions ``E[(Sigma grad f)_i * (grad f)_i]``.

    Draws ``z ~ g``. With ``cfg.normalize_by_f`` each summand is divided by
    ``max(f(z), value_floor)``, and ``total`` then estimates the dependent
    functional Fisher information.
    """
    Z = sample(g, cfg.n, cfg.seed)
    fz, G = _values_and_grads(f, y, Z)
    summands = _weighted_summands(fz, G, g.cov, cfg)
    return _from_summands(
        summands, "ours", y, cfg, normalize_by_f=cfg.normalize_by_f, covariance=type(g.cov).__name__
    )


def dependent_fisher_total(f, y: int, g: GaussianMeasure, cfg: EstimatorConfig) -> tuple[float, float]:
    """Scalar ``E[<Sigma grad f, grad f> / f]`` (or without ``/ f`` when the
    config says so), reduced per draw before averaging."""
    Z = sample(g, cfg.n, cfg.seed)
    fz, G = _values_and_grads(f, y, Z)
    per_draw = np.einsum("ij,ij->i", g.cov.matvec(G), G)
    if cfg.normalize_by_f:
        per_draw = per_draw / np.maximum(fz, cfg.value_floor)
    t, se = _mean_and_se(per_draw)
    return float(t), float(se)


def subset_contributions(
    f,
    y: int,
    g: GaussianMeasure,
    p: Partition,
    cfg: EstimatorConfig,
    mode: str = CONDITION_ON_INPUT,
    n_outer: Optional[int] = None,
) -> Attribution:
    """Contributions of the subset features of ``p``.

    ``mode="condition"`` freezes the complement at the mean of ``g`` and
    samples the subset from its conditional law. ``mode="marginalize"``
    draws ``n_outer`` complement points from the marginal, then ``cfg.n``
    subset points from the conditional law given each; the standard errors
    come from the spread of the per-outer-draw averages.
    """
    if p.dim != g.dim:
        raise DimensionMismatch("partition does not match measure dimension")
    p.require_proper()
    sub = np.array(p.subset)
    if mode == CONDITION_ON_INPUT:
        x2 = g.mean[list(p.complement)]
        inner = feature_contributions(FrozenComplement(f, p, x2), y, condition(g, p, x2), cfg)
        inner.method = "ours_subset_condition"
        inner.indices = sub
        return inner
    if mode != MARGINALIZE:
        raise ValueError(f"unknown subset mode {mode!r}")

    n_outer = cfg.n if n_outer is None else n_outer
    if n_outer < 1:
        raise ValueError("n_outer must be >= 1")
    cond = Conditioner(g, p)
    marg = marginal(g, p)
    rng = generator(cfg.seed)
    d1, d2 = len(p.subset), len(p.complement)
    z2 = marg.transform(rng.standard_normal((n_outer, d2)))
    u1 = rng.standard_normal((n_outer * cfg.n, d1))
    z1 = np.repeat(cond.mean(z2), cfg.n, axis=0) + cond.covariance.scale(u1)
    Z = p.join(z1, np.repeat(z2, cfg.n, axis=0))
    fz, G = _values_and_grads(f, y, Z)
    summands = _weighted_summands(fz, G[:, sub], cond.covariance, cfg)
    per_outer = summands.reshape(n_outer, cfg.n, d1).mean(axis=1)
    scores, se = _mean_and_se(per_outer)
    totals = per_outer.sum(axis=1)
    total, total_se = _mean_and_se(totals)
    return Attribution(
        scores, se, "ours_subset_marginalize", int(y), cfg.n, cfg.seed,
        float(total), float(total_se), indices=sub,
        meta={"normalize_by_f": cfg.normalize_by_f, "n_outer": n_outer},
    )


def default_noise_variance(value_range: float) -> float:
    """SmoothGrad convention: ``(0.1 * range)^2``, or 0.01 for a zero range."""
    value_range = float(value_range)
    return 0.01 * value_range**2 if value_range > 0 else 0.01


def _noisy_gradients(f, y, x, cfg, sigma2):
    x = np.asarray(x, dtype=float).reshape(-1)
    if sigma2 is None:
        sigma2 = default_noise_variance(np.ptp(x))
    Z = sample(GaussianMeasure(x, ScaledIdentity(float(sigma2), x.shape[0])), cfg.n, cfg.seed)
    return _values_and_grads(f, y, Z)[1], float(sigma2)


def smoothgrad(f, y: int, x, cfg: EstimatorConfig, sigma2: Optional[float] = None) -> Attribution:
    G, s2 = _noisy_gradients(f, y, x, cfg, sigma2)
    return _from_summands(G, "smoothgrad", y, cfg, with_total=False, sigma2=s2)


def smoothgrad_sq(f, y: int, x, cfg: EstimatorConfig, sigma2: Optional[float] = None) -> Attribution:
    G, s2 = _noisy_gradients(f, y, x, cfg, sigma2)
    return _from_summands(G * G, "smoothgrad_sq", y, cfg, with_total=False, sigma2=s2)


def vargrad(f, y: int, x, cfg: EstimatorConfig, sigma2: Optional[float] = None) -> Attribution:
    """Unbiased sample variance of each partial derivative under noise."""
    if cfg.n < 2:
        raise ValueError("vargrad needs n >= 2")
    G, s2 = _noisy_gradients(f, y, x, cfg, sigma2)
    dev2 = (G - G.mean(axis=0)) ** 2
    scores = dev2.sum(axis=0) / (cfg.n - 1)
    se = dev2.std(axis=0, ddof=1) * np.sqrt(cfg.n) / (cfg.n - 1)
    return Attribution(scores, se, "vargrad", int(y), cfg.n, cfg.seed, meta={"sigma2": s2})


METHODS = ("ours", "fisher_independent", "smoothgrad", "smoothgrad_sq", "vargrad")


def explain(method: str, f, y: int, x, cfg: EstimatorConfig, covariance=None, sigma2=None) -> Attribution:
    """Dispatch on a method tag. ``ours`` needs ``covariance``."""
    if method == "ours":
        if covariance is None:
            raise ValueError("method 'ours' needs a covariance")
        return feature_contributions(f, y, GaussianMeasure(x, covariance), cfg)
    if method == "fisher_independent":
        return fisher_independent(f, y, x, cfg)
    if method == "smoothgrad":
        return smoothgrad(f, y, x, cfg, sigma2)
    if method == "smoothgrad_sq":
        return smoothgrad_sq(f, y, x, cfg, sigma2)
    if method == "vargrad":
        return vargrad(f, y, x, cfg, sigma2)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def aggregate_token_scores(scores, layout) -> np.ndarray:
    """Sum coordinate scores per token; ``layout`` is ``(t, e)`` or a token Layout."""
    if isinstance(scores, Attribution):
        scores = scores.scores
    t, e = getattr(layout, "shape", layout)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if t * e != scores.shape[0]:
        raise DimensionMismatch(f"token layout {t}x{e} does not fit {scores.shape[0]} scores")
    return scores.reshape(t, e).sum(axis=1)


def save_attribution(a: Attribution, path, extra: dict | None = None) -> None:
    """CSV with a ``# {json}`` metadata line, then feature_index,score,std_error."""
    header = a.header()
    if extra:
        header.update(extra)
    lines = ["# " + json.dumps(header, sort_keys=True), "feature_index,score,std_error"]
    for i, s, e in zip(a.indices, a.scores, a.std_errors):
        lines.append(f"{int(i)},{format(s, '.17g')},{format(e, '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_attribution(path) -> Attribution:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise ValueError(f"{path}: missing metadata header")
    meta = json.loads(text[0][2:])
    rows = [r.split(",") for r in text[2:] if r.strip()]
    idx = np.array([int(r[0]) for r in rows])
    scores = np.array([float(r[1]) for r in rows])
    se = np.array([float(r[2]) for r in rows])
    known = {"method", "class", "n", "seed", "total", "total_se"}
    return Attribution(
        scores, se, meta.get("method", "?"), int(meta.get("class", 0)), int(meta.get("n", 0)),
        int(meta.get("seed", 0)), meta.get("total"), meta.get("total_se"), indices=idx,
        meta={k: v for k, v in meta.items() if k not in known},
    )
