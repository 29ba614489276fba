"""Connect two diffusion processes through known correspondences.

The columns and rows of each ``P^t`` at the correspondence indices are
multiplied to get cross-domain transition matrices, which are then compared
with the within-domain rows by cosine distance to produce an ``n x m`` cost.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from .errors import BadCorrespondence, BadLabels, BadShapes, UnreachablePoint
from .kernel_graph import DiffusionOperator


@dataclass
class CorrespondenceSet:
    """One-to-one index pairs ``(i, j)`` between domain 1 (size n) and domain 2 (size m)."""

    pairs: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        if len(pairs) < 1:
            raise BadCorrespondence("at least one correspondence is required")
        i, j = pairs[:, 0], pairs[:, 1]
        bad = np.flatnonzero((i < 0) | (i >= self.n) | (j < 0) | (j >= self.m))
        if bad.size:
            k = bad[0]
            raise BadCorrespondence(
                f"pair #{k} ({i[k]}, {j[k]}) is out of range for n={self.n}, m={self.m}"
            )
        if len(np.unique(i)) != len(i) or len(np.unique(j)) != len(j):
            raise BadCorrespondence("correspondences must be one-to-one (repeated index)")
        self.pairs = pairs

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]], n: int, m: int):
        return cls(np.array(list(pairs), dtype=int), n, m)

    def __len__(self):
        return len(self.pairs)

    @property
    def left(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.pairs[:, 1]


@dataclass
class BridgeBlocks:
    gamma1: np.ndarray  # n x |C|, columns of P1^t
    gamma2: np.ndarray  # m x |C|
    gamma1_t: np.ndarray  # |C| x n, rows of P1^t
    gamma2_t: np.ndarray  # |C| x m


def extract_blocks(
    Pt1: DiffusionOperator, Pt2: DiffusionOperator, corr: CorrespondenceSet
) -> BridgeBlocks:
    n, m = Pt1.values.shape[0], Pt2.values.shape[0]
    if Pt1.values.shape != (n, n) or Pt2.values.shape != (m, m):
        raise BadShapes("extract_blocks expects square diffusion operators")
    if Pt1.steps != Pt2.steps:
        raise ValueError(f"step counts differ ({Pt1.steps} vs {Pt2.steps})")
    if corr.n != n or corr.m != m:
        raise BadCorrespondence(
            f"correspondences built for ({corr.n}, {corr.m}) but operators are ({n}, {m})"
        )
    a, b = corr.left, corr.right
    return BridgeBlocks(
        gamma1=Pt1.values[:, a],
        gamma2=Pt2.values[:, b],
        gamma1_t=Pt1.values[a, :],
        gamma2_t=Pt2.values[b, :],
    )


def cross_operator(blocks: BridgeBlocks, direction: str = "1->2") -> DiffusionOperator:
    """Row-normalised cross-domain operator ``Gamma_1 @ Gamma~_2`` (or the reverse).

    Raises ``UnreachablePoint`` listing the source rows whose product row is
    identically zero, i.e. points that reach no correspondence in ``t`` steps.
    """
    if direction in ("1->2", "12"):
        prod, source = blocks.gamma1 @ blocks.gamma2_t, "domain1"
    elif direction in ("2->1", "21"):
        prod, source = blocks.gamma2 @ blocks.gamma1_t, "domain2"
    else:
        raise ValueError(f"direction must be '1->2' or '2->1', got {direction!r}")
    sums = prod.sum(axis=1)
    dead = np.flatnonzero(~(sums > 0))
    if dead.size:
        raise UnreachablePoint(dead, source)
    return DiffusionOperator(prod / sums[:, None], steps=0, square=False)


def _unit_rows(a: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1)
    dead = np.flatnonzero(~(norms > 0))
    if dead.size:
        raise UnreachablePoint(dead, what)
    return a / norms[:, None]


def cosine_distance_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``1 - cos(a[i], b[j])`` for every pair of rows."""
    return 1.0 - _unit_rows(a, "rows of a") @ _unit_rows(b, "rows of b").T


def inter_domain_cost(
    p12: DiffusionOperator,
    pt2: DiffusionOperator,
    p21: DiffusionOperator,
    pt1: DiffusionOperator,
) -> np.ndarray:
    """Inter-domain cost ``D`` of shape ``(n, m)``.

    ``D[i, j] = (1 - cos(p12[i], pt2[j])) + (1 - cos(p21[j], pt1[i]))``; both
    terms compare rows that live in the same space.
    """
    A12, B2 = p12.values, pt2.values
    A21, B1 = p21.values, pt1.values
    n, m = A12.shape
    if B2.shape != (m, m) or A21.shape != (m, n) or B1.shape != (n, n):
        raise BadShapes(
            f"inconsistent shapes p12={A12.shape} pt2={B2.shape} p21={A21.shape} pt1={B1.shape}"
        )
    first = 1.0 - _unit_rows(A12, "domain1") @ _unit_rows(B2, "domain2").T
    second = 1.0 - _unit_rows(B1, "domain1") @ _unit_rows(A21, "domain2").T
    D = first + second
    # rounding can push cosines a hair outside [0, 1]
    return np.clip(D, 0.0, 2.0)


def label_augment(D: np.ndarray, labels1, labels2) -> np.ndarray:
    """Add 1 to every cost entry whose two points carry different labels."""
    D = np.asarray(D, dtype=float)
    l1 = np.asarray(labels1).ravel()
    l2 = np.asarray(labels2).ravel()
    if l1.shape[0] != D.shape[0] or l2.shape[0] != D.shape[1]:
        raise BadLabels(
            f"label lengths ({len(l1)}, {len(l2)}) do not match cost shape {D.shape}"
        )
    return D + (l1[:, None] != l2[None, :]).astype(float)


def bridge_cost(Pt1: DiffusionOperator, Pt2: DiffusionOperator, corr: CorrespondenceSet):
    """Blocks, both cross operators and the cost matrix in one call."""
    blocks = extract_blocks(Pt1, Pt2, corr)
    p12 = cross_operator(blocks, "1->2")
    p21 = cross_operator(blocks, "2->1")
    return inter_domain_cost(p12, Pt2, p21, Pt1), p12, p21
