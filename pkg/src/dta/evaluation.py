"""Downstream metrics for judging an alignment.

kNN classification and Gaussian kernel ridge regression are implemented
directly so tie-breaking and bandwidth rules are fixed and testable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve
from scipy.spatial.distance import cdist, pdist

from .alignment import barycentric_project
from .errors import BadLabels, DegenerateVariableWarning
from .transport import TransportPlan, hard_assignment, minmax_normalize


@dataclass
class EvalReport:
    metric_name: str
    value: float
    config: dict = field(default_factory=dict)
    split_seed: int = 0

    def __post_init__(self):
        self.value = float(self.value)
        if not np.isfinite(self.value):
            raise ValueError(f"{self.metric_name}: metric value is not finite")


def _pairs_array(pairs) -> np.ndarray:
    if isinstance(pairs, TransportPlan):
        pairs = hard_assignment(pairs)
    return np.asarray(pairs, dtype=int).reshape(-1, 2)


# ------------------------------------------------------------------ kNN


def knn_classify(train_x, train_labels, test_x, k: int = 1, test_labels=None, chunk: int = 2048):
    """Majority vote among the ``k`` nearest training rows (Euclidean).

    Vote ties go to the label whose voting neighbours are closer on average,
    then to the smaller label.  Returns ``(predictions, accuracy)``; accuracy
    is ``None`` unless ``test_labels`` is given.
    """
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    train_labels = np.asarray(train_labels).astype(int)
    if train_x.shape[0] == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= train_x.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {train_x.shape[0]}]")
    classes = np.unique(train_labels)
    code = np.searchsorted(classes, train_labels)
    preds = np.empty(test_x.shape[0], dtype=int)
    for start in range(0, test_x.shape[0], chunk):
        dist = cdist(test_x[start:start + chunk], train_x)
        # stable sort: equal distances resolved by training index
        nbr = np.argsort(dist, axis=1, kind="stable")[:, :k]
        nd = np.take_along_axis(dist, nbr, axis=1)
        nc = code[nbr]
        votes = np.zeros((len(nbr), classes.size))
        dsum = np.zeros_like(votes)
        rows = np.repeat(np.arange(len(nbr)), k)
        np.add.at(votes, (rows, nc.ravel()), 1.0)
        np.add.at(dsum, (rows, nc.ravel()), nd.ravel())
        mean_d = np.divide(dsum, votes, out=np.full_like(dsum, np.inf), where=votes > 0)
        best = votes == votes.max(axis=1, keepdims=True)
        mean_d = np.where(best, mean_d, np.inf)
        # argmin returns the first minimum, i.e. the smallest label among exact ties
        preds[start:start + chunk] = classes[np.argmin(mean_d, axis=1)]
    acc = None
    if test_labels is not None:
        acc = float(np.mean(preds == np.asarray(test_labels).astype(int)))
    return preds, acc


# ------------------------------------------------------------------ KRR


def median_bandwidth(x) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 2:
        return 1.0
    h = float(np.median(pdist(x)))
    return h if h > 0 else 1.0


def krr_fit_predict(train_x, train_y, test_x, lam: float = 1e-2, bandwidth: Optional[float] = None, test_y=None):
    """Gaussian kernel ridge regression with centred targets.

    Solves ``(G + lam I) c = Y - mean(Y)`` with ``G_ab = exp(-|x_a - x_b|^2 / (2 h^2))``;
    ``h`` defaults to the median pairwise training distance.  Returns
    ``(predictions, test_mse)`` with the MSE ``None`` unless ``test_y`` is given.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X = np.atleast_2d(np.asarray(train_x, dtype=float))
    Xt = np.atleast_2d(np.asarray(test_x, dtype=float))
    Y = np.asarray(train_y, dtype=float)
    vec = Y.ndim == 1
    Y = Y[:, None] if vec else Y
    h = median_bandwidth(X) if bandwidth is None else float(bandwidth)
    G = np.exp(-cdist(X, X, "sqeuclidean") / (2.0 * h * h))
    off = Y.mean(axis=0)
    coef = solve(G + lam * np.eye(len(X)), Y - off, assume_a="pos")
    pred = np.exp(-cdist(Xt, X, "sqeuclidean") / (2.0 * h * h)) @ coef + off
    mse = None
    if test_y is not None:
        ty = np.asarray(test_y, dtype=float)
        ty = ty[:, None] if ty.ndim == 1 else ty
        mse = float(np.mean((pred - ty) ** 2))
    return (pred[:, 0] if vec else pred), mse


# ------------------------------------------------------------------ splits


def stratified_split(labels, test_fraction: float = 0.3, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class random split; every class with >= 2 members lands in both halves."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(test_fraction * idx.size))
        if idx.size >= 2:
            n_test = min(max(n_test, 1), idx.size - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# ------------------------------------------------------------------ evaluations


def _need_labels(pair, which=(1, 2)):
    for d in which:
        dom = pair.domain1 if d == 1 else pair.domain2
        if dom.labels is None:
            raise BadLabels(f"domain {d} has no labels")


def eval_domain_adaptation(plan: TransportPlan, pair, k: int = 1, seed: int = 0) -> EvalReport:
    """Train kNN on domain 2, test on barycentric projections of domain 1."""
    _need_labels(pair)
    T = plan if plan.normalized else minmax_normalize(plan)
    proj, empty = barycentric_project(T, pair.domain2)
    keep = ~empty
    _, acc = knn_classify(
        pair.domain2.features, pair.domain2.labels, proj[keep], k, pair.domain1.labels[keep]
    )
    return EvalReport(f"da_knn{k}_accuracy", acc, {"k": k, "n_tested": int(keep.sum())}, seed)


def _regression_target(pair, target: str) -> np.ndarray:
    if target == "domain2":
        return pair.domain2.features
    if target == "latent":
        if pair.latent is None or len(pair.latent) != pair.domain2.n:
            raise ValueError("latent target needs latent coordinates for every domain-2 row")
        return pair.latent
    raise ValueError(f"unknown regression target {target!r}")


def eval_regression(
    recovered,
    pair,
    known,
    target: str = "domain2",
    lam: float = 1e-2,
    bandwidth: Optional[float] = None,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> Dict[str, EvalReport]:
    """Test MSE of KRR trained on recovered pairs, known pairs only, and all true pairs.

    The test set is a random subset of ground-truth pairs whose domain-1 point
    is not a known correspondence; it is removed from every training set.
    Returns reports keyed ``"recovered"``, ``"prior_info"`` and ``"all_data"``.
    """
    truth = pair.ground_truth
    rec = _pairs_array(recovered)
    kn = _pairs_array(getattr(known, "pairs", known))
    if len(rec) == 0:
        raise ValueError("no recovered pairs")
    rng = np.random.default_rng(seed)
    candidates = truth[~np.isin(truth[:, 0], kn[:, 0])]
    n_test = int(round(test_fraction * len(truth)))
    n_test = min(n_test, len(candidates))
    if n_test < 1:
        raise ValueError("test split is empty")
    test = candidates[np.sort(rng.choice(len(candidates), n_test, replace=False))]
    test_rows = set(test[:, 0].tolist())
    X, Y = pair.domain1.features, _regression_target(pair, target)

    def fit(train_pairs):
        tp = train_pairs[[int(i) not in test_rows for i in train_pairs[:, 0]]]
        tp = tp[np.argsort(tp[:, 0], kind="stable")]
        _, mse = krr_fit_predict(X[tp[:, 0]], Y[tp[:, 1]], X[test[:, 0]], lam, bandwidth, Y[test[:, 1]])
        return mse, len(tp)

    out = {}
    for name, tp in (("recovered", rec), ("prior_info", kn), ("all_data", truth)):
        mse, n_train = fit(tp)
        out[name] = EvalReport(
            f"mse_{name}", mse,
            {"target": target, "lambda": lam, "bandwidth": bandwidth, "n_train": n_train, "n_test": n_test},
            seed,
        )
    return out


def eval_concat(pairs, pair, k: int = 1, test_fraction: float = 0.3, seed: int = 0) -> Dict[str, EvalReport]:
    """kNN accuracy on concatenated matched features versus each domain alone."""
    _need_labels(pair)
    p = _pairs_array(pairs)
    X = pair.domain1.features[p[:, 0]]
    Y = pair.domain2.features[p[:, 1]]
    l1 = pair.domain1.labels[p[:, 0]]
    l2 = pair.domain2.labels[p[:, 1]]
    tr, te = stratified_split(l1, test_fraction, seed)
    cfg = {"k": k, "test_fraction": test_fraction, "n_pairs": len(p)}
    out = {}
    for name, F, lab in (("concat", np.hstack([X, Y]), l1), ("domain1", X, l1), ("domain2", Y, l2)):
        _, acc = knn_classify(F[tr], lab[tr], F[te], k, lab[te])
        out[name] = EvalReport(f"{name}_knn{k}_accuracy", acc, cfg, seed)
    return out


class MatchScore(NamedTuple):
    exact: float
    label: Optional[float]


def match_accuracy(recovered, truth, labels1=None, labels2=None) -> MatchScore:
    """Fraction of recovered pairs that are true pairs, and that agree in label."""
    rec = _pairs_array(recovered)
    if len(rec) == 0:
        return MatchScore(0.0, None if labels1 is None else 0.0)
    tmap = {int(i): int(j) for i, j in np.asarray(truth, dtype=int).reshape(-1, 2)}
    exact = float(np.mean([tmap.get(int(i), -1) == int(j) for i, j in rec]))
    label = None
    if labels1 is not None and labels2 is not None:
        label = float(np.mean(np.asarray(labels1)[rec[:, 0]] == np.asarray(labels2)[rec[:, 1]]))
    return MatchScore(exact, label)


def mutual_information(x, y, bins: int = 16) -> float:
    """Plug-in MI (nats) from an equal-width ``bins x bins`` histogram over the observed ranges."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    if x.size == 0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        warnings.warn("constant variable: mutual information is zero", DegenerateVariableWarning)
        return 0.0
    joint, _, _ = np.histogram2d(x, y, bins=bins, range=[[x.min(), x.max()], [y.min(), y.max()]])
    # counts are integers, so marginals are exact; fsum makes the total independent
    # of traversal order and hence exactly symmetric in (x, y)
    total = joint.sum()
    p = joint / total
    px = joint.sum(axis=1) / total
    py = joint.sum(axis=0) / total
    nz = p > 0
    terms = p[nz] * (np.log(p[nz]) - np.log(np.outer(px, py)[nz]))
    return max(math.fsum(terms.tolist()), 0.0)


@dataclass
class MIRecord:
    feature1: int
    feature2: int
    reference: float
    known: float
    recovered: float


def eval_mi_recovery(pairs, pair, known, top_k: int = 25, bins: int = 16) -> List[MIRecord]:
    """MI of the ``top_k`` most dependent cross-domain feature pairs under three pairings.

    The reference uses the ground truth; it is compared with the MI estimated
    from the known correspondences alone and from the recovered pairing.
    """
    rec = _pairs_array(pairs)
    kn = _pairs_array(getattr(known, "pairs", known))
    truth = pair.ground_truth
    X, Y = pair.domain1.features, pair.domain2.features

    def mi(p, a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVariableWarning)
            return mutual_information(X[p[:, 0], a], Y[p[:, 1], b], bins)

    ref = np.array([[mi(truth, a, b) for b in range(Y.shape[1])] for a in range(X.shape[1])])
    order = np.argsort(-ref, axis=None, kind="stable")[: min(top_k, ref.size)]
    out = []
    for flat in order:
        a, b = np.unravel_index(flat, ref.shape)
        out.append(MIRecord(int(a), int(b), float(ref[a, b]), mi(kn, a, b), mi(rec, a, b)))
    return out
