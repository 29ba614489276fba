"""Alignment outputs built from a coupling: projections, joint affinity, joint embedding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components

from .errors import BadShapes, DisconnectedGraph, SolverFailure
from .kernel_graph import DomainData
from .transport import TransportPlan


def _plan_values(T) -> np.ndarray:
    return np.asarray(T.values if isinstance(T, TransportPlan) else T, dtype=float)


def barycentric_project(T_tilde, target) -> Tuple[np.ndarray, np.ndarray]:
    """Project every source row onto the target as the plan-weighted mean of target rows.

    Rows of the plan are rescaled to sum to one before averaging.  Returns the
    ``(n, p)`` projections and a boolean mask that is ``True`` for source rows
    with no transported mass (their projection is left at zero).
    """
    W = _plan_values(T_tilde)
    Y = target.features if isinstance(target, DomainData) else np.asarray(target, dtype=float)
    if W.ndim != 2 or Y.ndim != 2 or W.shape[1] != Y.shape[0]:
        raise BadShapes(f"plan {W.shape} does not match target with {Y.shape[0]} rows")
    sums = W.sum(axis=1)
    empty = ~(sums > 0)
    weights = np.divide(W, sums[:, None], out=np.zeros_like(W), where=~empty[:, None])
    return weights @ Y, empty


def cross_similarity(W1: np.ndarray, W2: np.ndarray, T_tilde) -> np.ndarray:
    """``W1 @ T + T @ W2``: a source point is similar to its match and to the match's neighbours."""
    T = _plan_values(T_tilde)
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    n, m = T.shape
    if W1.shape != (n, n) or W2.shape != (m, m):
        raise BadShapes(f"W1 {W1.shape}, W2 {W2.shape} incompatible with plan {T.shape}")
    return W1 @ T + T @ W2


@dataclass
class JointAffinity:
    values: np.ndarray
    n: int
    m: int
    mu: float

    def blocks(self):
        n = self.n
        V = self.values
        return V[:n, :n], V[:n, n:], V[n:, :n], V[n:, n:]


def joint_affinity(W1: np.ndarray, W2: np.ndarray, W12: np.ndarray, mu: float = 0.5) -> JointAffinity:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    W1, W2, W12 = (np.asarray(a, dtype=float) for a in (W1, W2, W12))
    n, m = W12.shape
    if W1.shape != (n, n) or W2.shape != (m, m):
        raise BadShapes(f"W1 {W1.shape}, W2 {W2.shape} incompatible with W12 {W12.shape}")
    W = np.block([[mu * W1, (1 - mu) * W12], [(1 - mu) * W12.T, mu * W2]])
    return JointAffinity(W, n, m, float(mu))


@dataclass
class Embedding:
    coordinates: np.ndarray
    eigenvalues: np.ndarray
    domain_of_row: np.ndarray

    def split(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinates of domain-1 rows and domain-2 rows."""
        return (
            self.coordinates[self.domain_of_row == 1],
            self.coordinates[self.domain_of_row == 2],
        )


def _fix_signs(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    for c in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, c]) > tol)
        if nz.size and vecs[nz[0], c] < 0:
            vecs[:, c] = -vecs[:, c]
    return vecs


def laplacian_eigenmaps(W: np.ndarray, d: int, variant: str = "random-walk"):
    """Eigenvectors of the ``d`` smallest nontrivial Laplacian eigenvalues.

    ``variant`` is ``"random-walk"`` (``I - Deg^-1 W``) or ``"unnormalized"``
    (``Deg - W``).  The graph must be connected.
    """
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    if not 1 <= d <= N - 1:
        raise ValueError(f"d must satisfy 1 <= d <= {N - 1}, got {d}")
    ncomp, labels = connected_components(W > 0, directed=False)
    if ncomp > 1:
        raise DisconnectedGraph(labels)
    deg = W.sum(axis=1)
    try:
        if variant == "random-walk":
            # I - Deg^-1 W shares eigenvalues with the symmetric I - Deg^-1/2 W Deg^-1/2
            s = 1.0 / np.sqrt(deg)
            S = np.eye(N) - s[:, None] * W * s[None, :]
            vals, vecs = eigh((S + S.T) / 2, subset_by_index=[0, d])
            vecs = s[:, None] * vecs
        elif variant == "unnormalized":
            L = np.diag(deg) - W
            vals, vecs = eigh((L + L.T) / 2, subset_by_index=[0, d])
        else:
            raise ValueError(f"unknown Laplacian variant {variant!r}")
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"eigendecomposition failed: {exc}") from exc
    vals = np.clip(vals[1:], 0.0, None)
    vecs = vecs[:, 1:]
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    return vals, _fix_signs(vecs)


def joint_embedding(W: JointAffinity, d: int = 2, variant: str = "random-walk") -> Embedding:
    vals, vecs = laplacian_eigenmaps(W.values, d, variant)
    tags = np.concatenate([np.ones(W.n, dtype=int), np.full(W.m, 2, dtype=int)])
    return Embedding(vecs, vals, tags)
