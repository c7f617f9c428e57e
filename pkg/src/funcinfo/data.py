"""
Labeled datasets: synthetic generation and CSV round-tripping.

CSV schema: one header row ``f0,...,f{d-1},label`` then one row per
example, features written with 17 significant digits and an integer class
label in the last column. Image or token layouts go in a JSON sidecar at
``<csv path>.layout.json`` holding ``{"kind": ..., "shape": [...]}``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError
from .gaussian import GaussianMeasure, generator


@dataclass(frozen=True)
class Layout:
    """How the flat feature vector maps onto structured data.

    ``image`` has shape ``(H, W, C)`` flattened channel-major, so pixel
    ``(h, w)`` of channel ``c`` is feature ``c*H*W + h*W + w``. ``tokens``
    has shape ``(t, e)`` flattened row-major, so token ``i`` occupies
    features ``i*e .. i*e + e - 1``.
    """

    kind: str = "raw"
    shape: tuple = ()

    def __post_init__(self):
        if self.kind not in ("raw", "image", "tokens"):
            raise ValueError(f"unknown layout kind {self.kind!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.kind == "image" and len(self.shape) != 3:
            raise ValueError("image layout needs (H, W, C)")
        if self.kind == "tokens" and len(self.shape) != 2:
            raise ValueError("token layout needs (t, e)")

    @property
    def size(self) -> int | None:
        return int(np.prod(self.shape)) if self.shape else None

    def check(self, d: int):
        if self.size is not None and self.size != d:
            raise DimensionMismatch(f"layout {self.kind}{self.shape} does not fit d={d}")


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int | None = None
    layout: Layout = field(default_factory=Layout)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch("features and labels differ in length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")
        self.layout.check(self.d)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "LabeledDataset":
        return LabeledDataset(self.features[rows], self.labels[rows], self.num_classes, self.layout)

    def split(self, fraction: float) -> tuple["LabeledDataset", "LabeledDataset"]:
        """First ``fraction`` of rows and the rest."""
        cut = int(round(fraction * self.m))
        return self.subset(slice(0, cut)), self.subset(slice(cut, None))


@dataclass
class SyntheticSpec:
    """Gaussian class-conditional data.

    ``covariance`` is either one ``(d, d)`` matrix shared by all classes or a
    ``(k, d, d)`` stack. Features whose mean differs between classes are the
    informative ones.
    """

    class_means: np.ndarray
    covariance: np.ndarray
    m_per_class: int
    seed: int = 0
    layout: Layout = field(default_factory=Layout)

    def __post_init__(self):
        self.class_means = np.atleast_2d(np.asarray(self.class_means, dtype=float))
        self.covariance = np.asarray(self.covariance, dtype=float)
        k, d = self.class_means.shape
        if self.covariance.shape not in ((d, d), (k, d, d)):
            raise DimensionMismatch(f"covariance shape {self.covariance.shape} does not fit k={k}, d={d}")

    @property
    def k(self) -> int:
        return self.class_means.shape[0]

    @property
    def d(self) -> int:
        return self.class_means.shape[1]

    def class_covariance(self, y: int) -> np.ndarray:
        return self.covariance if self.covariance.ndim == 2 else self.covariance[y]

    def informative_mask(self) -> np.ndarray:
        return np.any(self.class_means != self.class_means[0], axis=0)


def generate(spec: SyntheticSpec) -> tuple[LabeledDataset, np.ndarray]:
    """Draw the dataset described by ``spec``; rows come out shuffled."""
    rng = generator(spec.seed)
    m = spec.m_per_class
    u = rng.standard_normal((spec.k * m, spec.d))
    blocks = []
    for y in range(spec.k):
        g = GaussianMeasure(spec.class_means[y], spec.class_covariance(y))
        blocks.append(g.transform(u[y * m:(y + 1) * m]))
    X = np.concatenate(blocks, axis=0)
    labels = np.repeat(np.arange(spec.k), m)
    order = rng.permutation(spec.k * m)
    data = LabeledDataset(X[order], labels[order], spec.k, spec.layout)
    return data, spec.informative_mask()


def save_csv(data: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(data.d)] + ["label"])
        for row, label in zip(data.features, data.labels):
            w.writerow([format(v, ".17g") for v in row] + [int(label)])
    sidecar = Path(str(path) + ".layout.json")
    if data.layout.kind != "raw":
        sidecar.write_text(json.dumps({"kind": data.layout.kind, "shape": list(data.layout.shape)}) + "\n")


def load_csv(path, num_classes: int | None = None) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    ncol = len(header)
    if ncol < 2:
        raise ParseError(f"{path}: need at least one feature and a label", row=1)
    feats, labels = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != ncol:
            raise ParseError(f"{path}: expected {ncol} fields, got {len(row)}", row=r)
        vals = []
        for c, cell in enumerate(row[:-1], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: not a number: {cell!r}", row=r, column=c) from None
            if not np.isfinite(v):
                raise ParseError(f"{path}: non-finite value", row=r, column=c)
            vals.append(v)
        try:
            labels.append(int(row[-1]))
        except ValueError:
            raise ParseError(f"{path}: label is not an integer: {row[-1]!r}", row=r, column=ncol) from None
        feats.append(vals)
    if not feats:
        raise ParseError(f"{path}: no data rows", row=2)
    layout = Layout()
    sidecar = Path(str(path) + ".layout.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        layout = Layout(meta["kind"], tuple(meta["shape"]))
    return LabeledDataset(np.array(feats), np.array(labels), num_classes, layout)


@dataclass(frozen=True)
class GroupedSuite:
    """Parameters of :func:`grouped_suite`."""

    classes: int = 3
    group_size: int = 4
    background: int = 4
    shift: float = 1.0
    amplitude: float = 1.0
    noise: float = 0.5
    scale_range: tuple = (0.3, 3.0)
    m_per_class: int = 300


def grouped_suite(seed: int, params: GroupedSuite = GroupedSuite()) -> SyntheticSpec:
    """Object-on-background data with class-specific correlated groups.

    Class ``y`` owns features ``y*g .. y*g + g - 1`` (``g = group_size``).
    On class-``y`` examples that group is lit up to ``shift * s_j`` and
    varies through one shared amplitude (std ``amplitude * s_j``), so the
    class covariance has a dense, strongly correlated block there. Every
    feature also carries independent noise of std ``noise * s_j``. The
    per-feature scales ``s_j`` are log-uniform over ``scale_range`` and
    drawn from ``seed``. Background features never carry class signal.
    Zero is the "dark" value of every feature.
    """
    p = params
    d = p.classes * p.group_size + p.background
    rng = generator(10_000 + seed)
    lo, hi = p.scale_range
    s = np.exp(rng.uniform(np.log(lo), np.log(hi), d))
    means = np.zeros((p.classes, d))
    covs = np.zeros((p.classes, d, d))
    for y in range(p.classes):
        block = slice(y * p.group_size, (y + 1) * p.group_size)
        means[y, block] = p.shift * s[block]
        covs[y][block, block] = p.amplitude**2 * np.outer(s[block], s[block])
        covs[y] += np.diag((p.noise * s) ** 2)
    return SyntheticSpec(means, covs, p.m_per_class, seed=seed)


def blobs_spec(seed: int, d: int = 2, k: int = 2, separation: float = 6.0, m_per_class: int = 100) -> SyntheticSpec:
    """Unit-variance isotropic blobs whose means differ only in feature 0."""
    means = np.zeros((k, d))
    means[:, 0] = separation * (np.arange(k) - (k - 1) / 2)
    return SyntheticSpec(means, np.eye(d), m_per_class, seed=seed)
