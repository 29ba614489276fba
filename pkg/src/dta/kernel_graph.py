"""Per-domain affinity graphs and diffusion operators.

Affinities use the alpha-decay kernel with a per-point adaptive bandwidth
(the distance to the k-th nearest neighbour).  Row normalising the kernel
gives a Markov transition matrix, and powering it gives multi-step
transition probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import BadShapes, DegenerateBandwidth


@dataclass
class DomainData:
    """One view of the data: an ``(n, q)`` feature matrix plus optional metadata."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: Optional[Sequence[str]] = None
    domain_id: str = "domain"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.features.ndim != 2:
            raise BadShapes(f"{self.domain_id}: features must be a 2-D matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"{self.domain_id}: features contain NaN or Inf")
        n, q = self.features.shape
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(int)
            if self.labels.shape != (n,):
                raise BadShapes(
                    f"{self.domain_id}: {len(self.labels)} labels for {n} observations"
                )
        if self.feature_names is not None:
            self.feature_names = list(self.feature_names)
            if len(self.feature_names) != q:
                raise BadShapes(
                    f"{self.domain_id}: {len(self.feature_names)} feature names for {q} columns"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "DomainData":
        rows = np.asarray(rows, dtype=int)
        return DomainData(
            self.features[rows],
            None if self.labels is None else self.labels[rows],
            self.feature_names,
            self.domain_id,
        )


@dataclass(frozen=True)
class KernelConfig:
    k: int = 10
    alpha: float = 10.0
    t: int = 10
    mu: float = 0.5

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")


@dataclass
class DiffusionOperator:
    """Row-stochastic transition matrix together with the number of steps taken."""

    values: np.ndarray
    steps: int = 1
    square: bool = field(default=True)

    @property
    def shape(self):
        return self.values.shape


def _as_features(data) -> np.ndarray:
    if isinstance(data, DomainData):
        return data.features
    x = np.asarray(data, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def pairwise_distances(data) -> np.ndarray:
    x = _as_features(data)
    dist = cdist(x, x)
    np.fill_diagonal(dist, 0.0)
    return dist


def knn_bandwidths(data, k: int, distances: Optional[np.ndarray] = None) -> np.ndarray:
    """Distance from every observation to its k-th nearest neighbour (self excluded).

    Raises
    ------
    DegenerateBandwidth
        If some point has at least ``k`` exact duplicates, which makes its
        bandwidth zero.
    """
    dist = pairwise_distances(data) if distances is None else distances
    n = dist.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    sigma = np.partition(d, k - 1, axis=1)[:, k - 1]
    bad = np.flatnonzero(sigma <= 0)
    if bad.size:
        raise DegenerateBandwidth(bad)
    return sigma


def alpha_decay_kernel(data, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Symmetric alpha-decay affinity matrix.

    ``K[i, j] = 0.5 * exp(-(d_ij / s_i) ** alpha) + 0.5 * exp(-(d_ij / s_j) ** alpha)``
    with ``s_i`` the k-NN distance of point ``i``.  The diagonal is exactly 1.
    """
    dist = pairwise_distances(data)
    sigma = knn_bandwidths(data, cfg.k, distances=dist)
    with np.errstate(over="ignore", under="ignore"):
        left = np.exp(-np.power(dist / sigma[:, None], cfg.alpha))
    K = 0.5 * (left + left.T)
    np.fill_diagonal(K, 1.0)
    return K


def row_normalize(K: np.ndarray) -> DiffusionOperator:
    K = np.asarray(K, dtype=float)
    sums = K.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("row_normalize requires strictly positive row sums")
    return DiffusionOperator(K / sums, steps=1, square=K.shape[0] == K.shape[1])


def diffuse(P: DiffusionOperator, t: int) -> DiffusionOperator:
    """``t``-step transition matrix ``P ** t``.

    Uses sequential products for small ``t`` and repeated squaring beyond 8 steps.
    """
    if P.values.shape[0] != P.values.shape[1]:
        raise BadShapes("diffuse requires a square operator")
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    t = int(t)
    if t > 8:
        out = np.linalg.matrix_power(P.values, t)
    else:
        out = P.values
        for _ in range(t - 1):
            out = out @ P.values
    return DiffusionOperator(np.array(out, copy=True), steps=P.steps * t, square=True)


def diffusion_operator(data, cfg: KernelConfig = KernelConfig()):
    """Convenience: kernel, one-step operator and the ``cfg.t``-step operator."""
    K = alpha_decay_kernel(data, cfg)
    P = row_normalize(K)
    return K, P, diffuse(P, cfg.t)
