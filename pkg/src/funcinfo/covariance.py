"""Per-class covariance estimation with block sharing and diagonal jitter."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset, Layout
from .errors import EmptyClass, NotPositiveDefinite, StillNotPositiveDefinite
from .gaussian import Diagonal, ScaledIdentity, SharedBlock, SpdMatrix, _symmetrized

DEFAULT_JITTER = 1e-6
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CovarianceScheme:
    """``full``, ``shared`` (block_size * groups == d), ``diagonal`` or
    ``identity`` (``variance`` times I)."""

    kind: str = "full"
    block_size: int = 0
    groups: int = 0
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("full", "shared", "diagonal", "identity"):
            raise ValueError(f"unknown covariance scheme {self.kind!r}")
        if self.kind == "shared" and (self.block_size < 1 or self.groups < 1):
            raise ValueError("shared scheme needs block_size and groups")
        if self.kind == "identity" and not self.variance > 0:
            raise ValueError("identity variance must be > 0")

    @classmethod
    def shared_for(cls, layout: Layout) -> "CovarianceScheme":
        """Shared blocks per layout: one H*W block per image channel, one
        embedding-size block per token position."""
        if layout.kind == "image":
            h, w, c = layout.shape
            return cls("shared", h * w, c)
        if layout.kind == "tokens":
            t, e = layout.shape
            return cls("shared", e, t)
        raise ValueError("shared scheme needs an image or token layout")

    def check(self, d: int):
        if self.kind == "shared" and self.block_size * self.groups != d:
            raise ValueError(f"block_size*groups = {self.block_size * self.groups} != d = {d}")

    @property
    def tag(self) -> str:
        if self.kind == "shared":
            return f"shared:{self.block_size}x{self.groups}"
        if self.kind == "identity":
            return f"identity:{self.variance!r}"
        return self.kind


def sample_covariance(X: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance of the rows; zeros for a single row."""
    X = np.atleast_2d(X)
    if X.shape[0] < 2:
        return np.zeros((X.shape[1], X.shape[1]))
    r = X - X.mean(axis=0)
    c = r.T @ r / (X.shape[0] - 1)
    return 0.5 * (c + c.T)


def regularize_spd(m, jitter: float = DEFAULT_JITTER) -> SpdMatrix:
    """Add ``eps * I`` so the result factorizes.

    ``eps = jitter * trace(m) / d`` when both are positive, otherwise
    ``eps = jitter``.
    """
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    m = _symmetrized(m)
    d = m.shape[0]
    tr = float(np.trace(m))
    eps = jitter * tr / d if jitter > 0 and tr > 0 else jitter
    out = SpdMatrix(m + eps * np.eye(d))
    try:
        out.factor
    except NotPositiveDefinite as exc:
        raise StillNotPositiveDefinite(f"jitter {jitter} too small: {exc}") from None
    return out


def estimate_class_covariance(
    data: LabeledDataset,
    y: int,
    scheme: CovarianceScheme = CovarianceScheme(),
    jitter: float = DEFAULT_JITTER,
    pooled: bool = False,
):
    """Regularized empirical covariance of the class-``y`` rows.

    Returns an object usable as a :class:`~funcinfo.gaussian.GaussianMeasure`
    covariance: :class:`SpdMatrix` for ``full``, :class:`SharedBlock` for
    ``shared`` (its ``block`` is the averaged ``b x b`` matrix),
    :class:`Diagonal` or :class:`ScaledIdentity`. With ``pooled`` every row
    is used regardless of label.
    """
    scheme.check(data.d)
    if scheme.kind == "identity":
        return ScaledIdentity(scheme.variance, data.d)
    X = data.features if pooled else data.features[data.labels == y]
    if X.shape[0] == 0:
        raise EmptyClass(f"no examples of class {y}")
    if scheme.kind == "shared":
        b, g = scheme.block_size, scheme.groups
        blocks = X.reshape(X.shape[0], g, b)
        c = sum(sample_covariance(blocks[:, i, :]) for i in range(g)) / g
        return SharedBlock(regularize_spd(c, jitter), g)
    c = sample_covariance(X)
    if scheme.kind == "diagonal":
        v = np.diag(c).copy()
        tr = float(v.sum())
        eps = jitter * tr / v.size if jitter > 0 and tr > 0 else jitter
        try:
            return Diagonal(v + eps)
        except NotPositiveDefinite as exc:
            raise StillNotPositiveDefinite(str(exc)) from None
    return regularize_spd(c, jitter)


def save_covariance(cov, path, meta: dict | None = None) -> None:
    if isinstance(cov, SharedBlock):
        doc = {"scheme": "shared", "dims": [cov.block.dim, cov.groups],
               "entries": cov.block.array.reshape(-1).tolist()}
    elif isinstance(cov, SpdMatrix):
        doc = {"scheme": "full", "dims": [cov.dim], "entries": cov.array.reshape(-1).tolist()}
    elif isinstance(cov, Diagonal):
        doc = {"scheme": "diagonal", "dims": [cov.dim], "entries": cov.variances.tolist()}
    elif isinstance(cov, ScaledIdentity):
        doc = {"scheme": "identity", "dims": [cov.dim], "entries": [cov.variance]}
    else:
        raise TypeError(f"cannot save {type(cov).__name__}")
    doc["format_version"] = FORMAT_VERSION
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_covariance(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported covariance file {path}")
    e = np.array(doc["entries"], dtype=float)
    kind, dims = doc["scheme"], doc["dims"]
    if kind == "shared":
        b, g = dims
        return SharedBlock(SpdMatrix(e.reshape(b, b)), g)
    if kind == "full":
        return SpdMatrix(e.reshape(dims[0], dims[0]))
    if kind == "diagonal":
        return Diagonal(e)
    if kind == "identity":
        return ScaledIdentity(float(e[0]), dims[0])
    raise ValueError(f"unknown scheme {kind!r}")
