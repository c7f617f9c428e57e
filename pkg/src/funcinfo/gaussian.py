"""
Multivariate Gaussian measures over R^d.

All randomness goes through :func:`standard_normal`, which uses numpy's
``Philox`` (Philox4x32-10, a counter-based generator) keyed by the integer
seed, with normal variates from ``Generator.standard_normal`` (numpy's
ziggurat transform). A draw from N(x, Sigma) is ``x + L u`` where
``Sigma = L L^T`` is the lower Cholesky factor and ``u`` is one row of
standard normals.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidPartition, NotPositiveDefinite

SYMMETRY_RTOL = 1e-10
LOG_2PI = float(np.log(2.0 * np.pi))


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def standard_normal(n: int, d: int, seed: int) -> np.ndarray:
    """Return an ``(n, d)`` block of N(0, 1) draws, reproducible from ``seed``."""
    return generator(seed).standard_normal((n, d))


def _symmetrized(m) -> np.ndarray:
    m = np.array(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def _cholesky(m: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > 0):
        raise NotPositiveDefinite("non-positive pivot")
    return L


class SpdMatrix:
    """Symmetric positive-definite matrix with a lazily cached lower factor.

    The entries are symmetrized on construction and stored read-only.
    Positive definiteness is only checked when the factor is first needed.
    """

    def __init__(self, entries):
        a = _symmetrized(entries)
        a.setflags(write=False)
        self._a = a

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @cached_property
    def factor(self) -> np.ndarray:
        # idempotent fill: concurrent callers compute the same value
        L = _cholesky(self._a)
        L.setflags(write=False)
        return L

    # covariance protocol
    def scale(self, u: np.ndarray) -> np.ndarray:
        return u @ self.factor.T

    def matvec(self, g: np.ndarray) -> np.ndarray:
        return g @ self._a

    def dense(self) -> np.ndarray:
        return np.array(self._a)

    def whiten(self, r: np.ndarray) -> np.ndarray:
        return solve_triangular(self.factor, np.atleast_2d(r).T, lower=True).T

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.factor))))

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class Diagonal:
    variances: np.ndarray

    def __post_init__(self):
        v = np.array(self.variances, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("variances must be finite")
        if np.any(v <= 0):
            raise NotPositiveDefinite("diagonal variances must be > 0")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.variances.shape[0]

    def scale(self, u):
        return u * np.sqrt(self.variances)

    def matvec(self, g):
        return g * self.variances

    def dense(self):
        return np.diag(self.variances)

    def whiten(self, r):
        return np.atleast_2d(r) / np.sqrt(self.variances)

    def logdet(self):
        return float(np.sum(np.log(self.variances)))


@dataclass(frozen=True)
class ScaledIdentity:
    variance: float
    dim: int

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("ScaledIdentity variance must be > 0")

    def scale(self, u):
        return u * np.sqrt(self.variance)

    def matvec(self, g):
        return g * self.variance

    def dense(self):
        return self.variance * np.eye(self.dim)

    def whiten(self, r):
        return np.atleast_2d(r) / np.sqrt(self.variance)

    def logdet(self):
        return self.dim * float(np.log(self.variance))


@dataclass(frozen=True, eq=False)
class SharedBlock:
    """Block-diagonal covariance ``I_groups (x) block``.

    Features are laid out group-major: feature ``j`` of group ``i`` sits at
    index ``i * block.dim + j``.
    """

    block: SpdMatrix
    groups: int

    @property
    def dim(self) -> int:
        return self.block.dim * self.groups

    def _split(self, a):
        a = np.atleast_2d(a)
        return a.reshape(a.shape[0], self.groups, self.block.dim)

    def scale(self, u):
        n = np.atleast_2d(u).shape[0]
        return (self._split(u) @ self.block.factor.T).reshape(n, self.dim)

    def matvec(self, g):
        n = np.atleast_2d(g).shape[0]
        return (self._split(g) @ self.block.array).reshape(n, self.dim)

    def dense(self):
        return np.kron(np.eye(self.groups), self.block.array)

    def whiten(self, r):
        s = self._split(r)
        n = s.shape[0]
        flat = s.reshape(n * self.groups, self.block.dim)
        return self.block.whiten(flat).reshape(n, self.dim)

    def logdet(self):
        return self.groups * self.block.logdet()


Covariance = Union[SpdMatrix, Diagonal, ScaledIdentity, SharedBlock]


class GaussianMeasure:
    """N(mean, covariance).

    ``covariance`` may be a 2-d array (full), a 1-d array (diagonal), a
    positive scalar (scaled identity), or any of the covariance classes.
    """

    def __init__(self, mean, covariance):
        mean = np.array(mean, dtype=float).reshape(-1)
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        mean.setflags(write=False)
        if isinstance(covariance, (SpdMatrix, Diagonal, ScaledIdentity, SharedBlock)):
            cov = covariance
        elif np.ndim(covariance) == 0:
            cov = ScaledIdentity(float(covariance), mean.shape[0])
        elif np.ndim(covariance) == 1:
            cov = Diagonal(covariance)
        else:
            cov = SpdMatrix(covariance)
        if cov.dim != mean.shape[0]:
            raise DimensionMismatch(
                f"covariance dim {cov.dim} does not match mean length {mean.shape[0]}"
            )
        self.mean = mean
        self.cov = cov

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map standard-normal rows ``u`` to draws ``mean + L u``."""
        return self.mean + self.cov.scale(np.atleast_2d(u))

    def dense_covariance(self) -> np.ndarray:
        return self.cov.dense()

    def __repr__(self):
        return f"GaussianMeasure(dim={self.dim}, cov={type(self.cov).__name__})"


def factorize(m) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Accepts an :class:`SpdMatrix` (factor cached on it) or a plain array,
    which is symmetrized first.

    Raises
    ------
    NotPositiveDefinite
        If a non-positive pivot is met. Regularize with
        :func:`funcinfo.covariance.regularize_spd` and retry.
    """
    if not isinstance(m, SpdMatrix):
        m = SpdMatrix(m)
    return m.factor


def sample(g: GaussianMeasure, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points from ``g`` as an ``(n, d)`` array."""
    return g.transform(standard_normal(n, g.dim, seed))


@dataclass(frozen=True)
class Partition:
    """Split of feature indices into a subset of interest and its complement."""

    subset: tuple
    complement: tuple

    def __post_init__(self):
        s = tuple(int(i) for i in self.subset)
        c = tuple(int(i) for i in self.complement)
        object.__setattr__(self, "subset", s)
        object.__setattr__(self, "complement", c)
        if set(s) & set(c):
            raise InvalidPartition("subset and complement overlap")
        if len(set(s)) != len(s) or len(set(c)) != len(c):
            raise InvalidPartition("repeated index")
        if sorted(s + c) != list(range(len(s) + len(c))):
            raise InvalidPartition("indices must cover 0..d-1")

    @classmethod
    def from_subset(cls, subset: Sequence[int], d: int) -> "Partition":
        s = [int(i) for i in subset]
        bad = [i for i in s if not 0 <= i < d]
        if bad:
            raise InvalidPartition(f"indices out of range: {bad}")
        chosen = set(s)
        return cls(tuple(s), tuple(i for i in range(d) if i not in chosen))

    @property
    def dim(self) -> int:
        return len(self.subset) + len(self.complement)

    def require_proper(self):
        if not self.subset or not self.complement:
            raise InvalidPartition("both sides of the partition must be non-empty")

    def join(self, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
        """Assemble full points from subset rows ``z1`` and complement rows ``z2``."""
        z1 = np.atleast_2d(z1)
        z2 = np.atleast_2d(z2)
        n = max(z1.shape[0], z2.shape[0])
        out = np.empty((n, self.dim))
        out[:, list(self.subset)] = z1
        out[:, list(self.complement)] = z2
        return out


class Conditioner:
    """Conditional law of the subset given complement values.

    Precomputes the gain ``S12 S22^-1`` and the Schur complement through
    triangular solves against the factor of ``S22``.
    """

    def __init__(self, g: GaussianMeasure, p: Partition):
        p.require_proper()
        if p.dim != g.dim:
            raise DimensionMismatch("partition does not match measure dimension")
        s = g.dense_covariance()
        i1, i2 = list(p.subset), list(p.complement)
        s11 = s[np.ix_(i1, i1)]
        s12 = s[np.ix_(i1, i2)]
        L22 = factorize(s[np.ix_(i2, i2)])
        # W = L22^-1 S21, so S12 S22^-1 S21 = W^T W
        w = solve_triangular(L22, s12.T, lower=True)
        self._L22 = L22
        self._w = w
        self.x1 = g.mean[i1]
        self.x2 = g.mean[i2]
        self.covariance = SpdMatrix(s11 - w.T @ w)

    def mean(self, z2: np.ndarray) -> np.ndarray:
        """Conditional means for complement rows ``z2`` (shape ``(n, d2)``)."""
        r = np.atleast_2d(z2) - self.x2
        v = solve_triangular(self._L22, r.T, lower=True)
        return self.x1 + (self._w.T @ v).T

    def measure(self, z2: np.ndarray) -> GaussianMeasure:
        return GaussianMeasure(self.mean(z2)[0], self.covariance)


def condition(g: GaussianMeasure, p: Partition, observed) -> GaussianMeasure:
    """Law of the subset coordinates given complement coordinates ``observed``."""
    observed = np.asarray(observed, dtype=float).reshape(-1)
    if observed.shape[0] != len(p.complement):
        raise DimensionMismatch("observed length must equal complement size")
    return Conditioner(g, p).measure(observed)


def marginal(g: GaussianMeasure, p: Partition) -> GaussianMeasure:
    """Law of the complement coordinates.

    An empty subset is allowed here and returns ``g`` itself.
    """
    if p.dim != g.dim:
        raise DimensionMismatch("partition does not match measure dimension")
    if not p.complement:
        raise InvalidPartition("complement is empty")
    if not p.subset:
        return g
    idx = list(p.complement)
    return GaussianMeasure(g.mean[idx], g.dense_covariance()[np.ix_(idx, idx)])


def log_density(g: GaussianMeasure, z) -> Union[float, np.ndarray]:
    """Log density of ``g`` at ``z``; vectorized over rows when ``z`` is 2-d."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    r = np.atleast_2d(z) - g.mean
    if r.shape[1] != g.dim:
        raise DimensionMismatch("point dimension does not match measure")
    w = g.cov.whiten(r)
    out = -0.5 * np.sum(w * w, axis=1) - 0.5 * (g.dim * LOG_2PI + g.cov.logdet())
    return float(out[0]) if single else out
