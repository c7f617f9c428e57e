"""
Small differentiable classifiers with exact input gradients.

Every decision function exposes ``d``, ``k`` and a batched
``value_and_gradient(Z, y)`` returning ``f_y(Z)`` of shape ``(n,)`` and its
input gradient of shape ``(n, d)``. The gradient is computed by hand-written
reverse mode, no autodiff framework.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ClassOutOfRange, DimensionMismatch
from .gaussian import generator

CHECKPOINT_VERSION = 1


class DecisionFunction(Protocol):
    d: int
    k: int

    def predict_proba(self, Z: np.ndarray) -> np.ndarray: ...

    def value_and_gradient(self, Z: np.ndarray, y: int) -> tuple[np.ndarray, np.ndarray]: ...


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(f, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    Z2 = np.atleast_2d(Z)
    if Z2.ndim != 2 or Z2.shape[1] != f.d:
        raise DimensionMismatch(f"expected inputs of length {f.d}, got shape {Z.shape}")
    return Z2


def _check_class(f, y) -> int:
    if not 0 <= int(y) < f.k:
        raise ClassOutOfRange(f"class {y} not in 0..{f.k - 1}")
    return int(y)


@dataclass
class MlpModel:
    """Fully connected ReLU network with a softmax head.

    ``weights[i]`` has shape ``(widths[i], widths[i + 1])`` so a layer maps
    row batches as ``a @ W + b``. With ``widths == [d, k]`` the model is a
    plain linear-softmax classifier.
    """

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape[0] != w.shape[1]:
                raise DimensionMismatch(f"layer {i}: bad shapes {w.shape}, {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatch(f"layer {i}: width chain broken")

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def d(self) -> int:
        return self.weights[0].shape[0]

    @property
    def k(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _forward(self, Z):
        acts = [Z]
        a = Z
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
            acts.append(a)
        logits = a @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def logits(self, Z) -> np.ndarray:
        return self._forward(_check_batch(self, Z))[1]

    def predict_proba(self, Z) -> np.ndarray:
        return softmax(self.logits(Z))

    def predict(self, Z) -> np.ndarray:
        return np.argmax(self.logits(Z), axis=1)

    def _backward_input(self, acts, delta):
        # delta: d(output)/d(logits), shape (n, k)
        for i in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return delta @ self.weights[0].T

    def value_and_gradient(self, Z, y):
        Z = _check_batch(self, Z)
        y = _check_class(self, y)
        acts, logits = self._forward(Z)
        p = softmax(logits)
        py = p[:, y]
        # d p_y / d logits = p_y (e_y - p)
        delta = -py[:, None] * p
        delta[:, y] += py
        return py, self._backward_input(acts, delta)


def linear_softmax(W, b=None) -> MlpModel:
    """Linear-softmax classifier with logits ``W @ z + b``; ``W`` is ``(k, d)``."""
    W = np.asarray(W, dtype=float)
    if b is None:
        b = np.zeros(W.shape[0])
    return MlpModel([W.T], [b])


def init_mlp(widths: Sequence[int], seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = generator(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


@dataclass
class AnalyticFunction:
    """Closed-form test functions with k = 1.

    kind ``"exp"``: ``exp(w.z + c)``; ``"linear"``: ``w.z + c``;
    ``"constant"``: ``c``. The linear form is only non-negative where
    ``w.z + c >= 0``, which callers must ensure.
    """

    kind: str
    w: np.ndarray
    c: float = 0.0
    k: int = field(default=1, init=False)

    def __post_init__(self):
        if self.kind not in ("exp", "linear", "constant"):
            raise ValueError(f"unknown analytic kind {self.kind!r}")
        self.w = np.array(self.w, dtype=float).reshape(-1)
        self.c = float(self.c)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def _value(self, Z):
        if self.kind == "exp":
            return np.exp(Z @ self.w + self.c)
        if self.kind == "linear":
            return Z @ self.w + self.c
        return np.full(Z.shape[0], self.c)

    def predict_proba(self, Z):
        return self._value(_check_batch(self, Z))[:, None]

    def value_and_gradient(self, Z, y=0):
        Z = _check_batch(self, Z)
        _check_class(self, y)
        f = self._value(Z)
        if self.kind == "exp":
            grad = f[:, None] * self.w
        elif self.kind == "linear":
            grad = np.broadcast_to(self.w, Z.shape).copy()
        else:
            grad = np.zeros_like(Z)
        return f, grad


class Reparameterized:
    """``g(u) = f(shift + L u)``, whose gradient is ``L^T grad f``."""

    def __init__(self, f, shift, L):
        self.f = f
        self.shift = np.asarray(shift, dtype=float)
        self.L = np.asarray(L, dtype=float)
        self.d = self.L.shape[1]
        self.k = f.k

    def predict_proba(self, U):
        return self.f.predict_proba(self.shift + np.atleast_2d(U) @ self.L.T)

    def value_and_gradient(self, U, y):
        U = _check_batch(self, U)
        val, grad = self.f.value_and_gradient(self.shift + U @ self.L.T, y)
        return val, grad @ self.L


class FrozenComplement:
    """Restriction of ``f`` to the subset coordinates of a partition.

    Complement coordinates are held at ``fixed``; gradients are taken with
    respect to the subset coordinates only.
    """

    def __init__(self, f, partition, fixed):
        self.f = f
        self.partition = partition
        self.fixed = np.asarray(fixed, dtype=float).reshape(-1)
        if self.fixed.shape[0] != len(partition.complement):
            raise DimensionMismatch("fixed values must cover the complement")
        self.d = len(partition.subset)
        self.k = f.k

    def predict_proba(self, Z1):
        Z1 = _check_batch(self, Z1)
        return self.f.predict_proba(self.partition.join(Z1, self.fixed))

    def value_and_gradient(self, Z1, y):
        Z1 = _check_batch(self, Z1)
        val, grad = self.f.value_and_gradient(self.partition.join(Z1, self.fixed), y)
        return val, grad[:, list(self.partition.subset)]


def evaluate(f, z) -> np.ndarray:
    """Class probabilities at a single point ``z`` (length ``k``)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatch("evaluate expects a single vector")
    return f.predict_proba(z[None, :])[0]


def input_gradient(f, z, y: int) -> np.ndarray:
    """Gradient of ``f_y`` with respect to the input at a single point."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatch("input_gradient expects a single vector")
    return f.value_and_gradient(z[None, :], y)[1][0]


def cross_entropy(model: MlpModel, X, labels) -> float:
    p = model.predict_proba(X)
    return float(-np.mean(np.log(np.maximum(p[np.arange(len(labels)), labels], 1e-300))))


def accuracy(model, X, labels) -> float:
    return float(np.mean(np.argmax(model.predict_proba(X), axis=1) == np.asarray(labels)))


def _param_grads(model: MlpModel, X, labels):
    acts, logits = model._forward(X)
    p = softmax(logits)
    delta = p
    delta[np.arange(len(labels)), labels] -= 1.0
    delta /= X.shape[0]
    gw, gb = [], []
    for i in range(len(model.weights) - 1, -1, -1):
        gw.append(acts[i].T @ delta)
        gb.append(delta.sum(axis=0))
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return gw[::-1], gb[::-1]


def train(
    model: MlpModel,
    X,
    labels,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
) -> tuple[MlpModel, list]:
    """Mini-batch SGD on mean cross-entropy.

    Returns a trained copy and the full-data loss after each epoch. Batch
    order comes from a fresh permutation per epoch drawn from ``seed``.
    """
    X = _check_batch(model, X)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if labels.shape[0] != X.shape[0]:
        raise DimensionMismatch("labels and features differ in length")
    if labels.min() < 0 or labels.max() >= model.k:
        raise ClassOutOfRange("label outside model classes")
    model = model.copy()
    rng = generator(seed)
    losses = []
    m = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start:start + batch_size]
            gw, gb = _param_grads(model, X[idx], labels[idx])
            for w, b, dw, db in zip(model.weights, model.biases, gw, gb):
                w -= lr * dw
                b -= lr * db
        losses.append(cross_entropy(model, X, labels))
    return model, losses


def save_checkpoint(model: MlpModel, path, meta: dict | None = None) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "mlp",
        "widths": model.widths,
        "layers": [
            {"weight": w.reshape(-1).tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> MlpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION or doc.get("kind") != "mlp":
        raise ValueError(f"unsupported checkpoint format in {path}")
    widths = doc["widths"]
    weights, biases = [], []
    for (fan_in, fan_out), layer in zip(zip(widths[:-1], widths[1:]), doc["layers"]):
        weights.append(np.array(layer["weight"], dtype=float).reshape(fan_in, fan_out))
        biases.append(np.array(layer["bias"], dtype=float))
    return MlpModel(weights, biases)
