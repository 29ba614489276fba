"""Partial optimal transport with capped marginals and a fixed total mass.

The inequality-constrained problem

    min_T  sum_ij D_ij T_ij
    s.t.   sum_i T_ij <= q_j,  sum_j T_ij <= v_i,  sum_ij T_ij = M,  T >= 0

is turned into a balanced transportation problem by adding one dummy source
(supply ``sum(q) - M``) and one dummy sink (demand ``sum(v) - M``), with zero
cost to the dummies and the dummy-to-dummy arc forbidden.  Mass a real row
sends to the dummy sink is mass that is not transported.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog, minimize
from scipy.special import logsumexp

from .errors import (
    ConstantPlan,
    FlatCurveWarning,
    InfeasibleMass,
    NotAVertexSolution,
    SolverFailure,
)

MASS_TOL = 1e-9


@dataclass
class TransportSpec:
    v: np.ndarray
    q: np.ndarray
    M: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).ravel()
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.M = float(self.M)
        if np.any(self.v < 0) or np.any(self.q < 0):
            raise ValueError("mass caps must be nonnegative")
        if not self.M > 0:
            raise InfeasibleMass(f"total mass must be positive, got {self.M}")
        cap = min(self.v.sum(), self.q.sum())
        if self.M > cap * (1 + 1e-12) + 1e-15:
            raise InfeasibleMass(
                f"mass M={self.M:.6g} exceeds min(sum v, sum q)={cap:.6g}"
            )
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass
class TransportPlan:
    values: np.ndarray
    objective: float
    mass: float
    normalized: bool = False
    info: dict = field(default_factory=dict)

    def support(self, tol: float = MASS_TOL) -> Tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.values > tol)


def hard_assignment_spec(n: int, m: int, mass: Optional[float] = None) -> TransportSpec:
    """Uniform caps ``1/n`` on both sides; ``mass`` defaults to ``min(n, m) / n``."""
    cap = 1.0 / n
    if mass is None:
        mass = min(n, m) * cap
    return TransportSpec(np.full(n, cap), np.full(m, cap), mass)


def _objective(D: np.ndarray, T: np.ndarray) -> float:
    return float(np.sum(D * T))


def _uniform_cap(spec: TransportSpec) -> Optional[Tuple[float, int]]:
    """Common cap ``c`` and integer ``k = M / c`` when the instance is an assignment problem."""
    if spec.v.size == 0 or spec.q.size == 0:
        return None
    c = spec.v[0]
    if c <= 0 or np.any(spec.v != c) or np.any(spec.q != c):
        return None
    k = spec.M / c
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, k) or kr < 1:
        return None
    return c, kr


def _solve_assignment(Ds: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """k-cardinality assignment on cost ``Ds`` (entries in [0, 1])."""
    n, m = Ds.shape
    if k == min(n, m):
        return linear_sum_assignment(Ds)
    # dummy reduction: m-k dummy rows, n-k dummy columns, dummy-dummy forbidden
    size = n + m - k
    big = 2.0 * size + 1.0
    C = np.zeros((size, size))
    C[:n, :m] = Ds
    C[n:, m:] = big
    rows, cols = linear_sum_assignment(C)
    keep = (rows < n) & (cols < m)
    if (C[rows, cols] >= big).any():
        raise SolverFailure("assignment reduction used a forbidden dummy-dummy arc")
    return rows[keep], cols[keep]


def dummy_reduction(D: np.ndarray, spec: TransportSpec):
    """Extended cost, supplies, demands and the forbidden-arc mask."""
    n, m = D.shape
    C = np.zeros((n + 1, m + 1))
    C[:n, :m] = D
    supply = np.append(spec.v, max(spec.q.sum() - spec.M, 0.0))
    demand = np.append(spec.q, max(spec.v.sum() - spec.M, 0.0))
    forbidden = np.zeros((n + 1, m + 1), dtype=bool)
    forbidden[n, m] = True
    return C, supply, demand, forbidden


def _solve_lp(Ds: np.ndarray, spec: TransportSpec) -> np.ndarray:
    n, m = Ds.shape
    C, supply, demand, forbidden = dummy_reduction(Ds, spec)
    N, Mm = C.shape
    nvar = N * Mm
    idx = np.arange(nvar).reshape(N, Mm)
    rows_r = np.repeat(np.arange(N), Mm)
    rows_c = N + np.tile(np.arange(Mm), N)
    A = sparse.csr_matrix(
        (np.ones(2 * nvar), (np.concatenate([rows_r, rows_c]), np.concatenate([idx.ravel(), idx.ravel()]))),
        shape=(N + Mm, nvar),
    )
    # balance exactly so the equality system is consistent in floating point
    demand = demand * (supply.sum() / demand.sum())
    b = np.concatenate([supply, demand])
    bounds = np.zeros((nvar, 2))
    bounds[:, 1] = np.inf
    bounds[forbidden.ravel(), 1] = 0.0
    res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise SolverFailure(f"LP solver failed (status {res.status}): {res.message}")
    X = np.maximum(res.x.reshape(N, Mm), 0.0)
    return X[:n, :m]


def solve_partial_ot(D: np.ndarray, spec: TransportSpec) -> TransportPlan:
    """Exact vertex solution of the partial transport LP.

    Uniform caps with ``M`` an integer multiple of the cap are solved as a
    (k-cardinality) assignment problem; anything else goes through a dual
    simplex LP on the dummy-reduced transportation problem.
    """
    D = np.asarray(D, dtype=float)
    n, m = D.shape
    if spec.v.shape != (n,) or spec.q.shape != (m,):
        raise ValueError(f"caps of length ({spec.v.size}, {spec.q.size}) for cost {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError("cost matrix must be finite")
    dmax = D.max() if D.size else 0.0
    Ds = D / dmax if dmax > 0 else D
    uniform = _uniform_cap(spec)
    if uniform is not None:
        c, k = uniform
        rows, cols = _solve_assignment(Ds, k)
        T = np.zeros((n, m))
        T[rows, cols] = c
        method = "assignment"
    else:
        T = _solve_lp(Ds, spec)
        method = "lp"
    return TransportPlan(T, _objective(D, T), spec.M, info={"method": method})


def _sinkhorn_stage(logK, loga, logb, f, g, max_iter, tol):
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = loga - logsumexp(logK + g[None, :], axis=1)
        g = logb - logsumexp(logK + f[:, None], axis=0)
        if it % 10 == 0 or it == max_iter:
            # g was just updated, so columns are exact; rows carry the violation
            err = np.abs(np.exp(logsumexp(logK + f[:, None] + g[None, :], axis=1)) - np.exp(loga)).max()
            if err < tol:
                break
    return f, g, it, err


def _semidual_polish(logK, loga, logb, u0, max_iter, tol):
    """Maximise the entropic semi-dual in the row potentials ``u`` (log units)."""
    a = np.exp(loga)

    def plan(u):
        Z = logK + u[:, None]
        return Z - logsumexp(Z, axis=0)[None, :] + logb[None, :]

    def negdual(u):
        Z = logK + u[:, None]
        lse = logsumexp(Z, axis=0)
        T = np.exp(Z - lse[None, :] + logb[None, :])
        return -(a @ u - np.exp(logb) @ lse), T.sum(axis=1) - a

    res = minimize(negdual, u0, jac=True, method="L-BFGS-B",
                   options={"gtol": tol, "ftol": 0.0, "maxiter": max_iter, "maxcor": 20})
    logT = plan(res.x)
    err = np.abs(np.exp(logsumexp(logT, axis=1)) - a).max()
    return logT, int(res.nit), float(err)


def solve_entropic(
    D: np.ndarray,
    spec: TransportSpec,
    max_iter: int = 10000,
    tol: float = 1e-7,
) -> TransportPlan:
    """Entropy-regularised partial transport via log-domain Sinkhorn on the reduced problem.

    ``spec.epsilon`` defaults to ``1e-2 * mean(D)``.  The returned objective is
    the unregularised transport cost ``sum(D * T)``.
    """
    D = np.asarray(D, dtype=float)
    n, m = D.shape
    eps = spec.epsilon
    if eps is None:
        eps = 1e-2 * float(D.mean())
    if not eps > 0:
        raise ValueError("entropic solver needs epsilon > 0")
    C, a, b, forbidden = dummy_reduction(D, spec)
    b = b * (a.sum() / b.sum())
    ra, cb = a > 0, b > 0
    C, forbidden = C[np.ix_(ra, cb)], forbidden[np.ix_(ra, cb)]
    a_, b_ = a[ra], b[cb]
    loga, logb = np.log(a_), np.log(b_)
    f = np.zeros(len(a_))
    g = np.zeros(len(b_))
    # epsilon scaling: warm-start the potentials along a geometric schedule
    top = float(C[~forbidden].max()) if (~forbidden).any() else 0.0
    schedule = []
    e = max(top, eps)
    while e > eps:
        schedule.append(e)
        e *= 0.5
    schedule.append(eps)
    # potentials are carried in cost units between stages
    for stage, e in enumerate(schedule):
        final = stage == len(schedule) - 1
        logK = np.where(forbidden, -np.inf, -C / e)
        fs, gs, it, err = _sinkhorn_stage(logK, loga, logb, f / e, g / e, max_iter if final else 200,
                                          tol if final else 1e-4)
        f, g = e * fs, e * gs
    method = "sinkhorn"
    if err < tol:
        logT = logK + fs[:, None] + gs[None, :]
    else:
        # near-ties in the optimal support can stall the scaling iterations;
        # finish on the same (strictly concave) semi-dual with L-BFGS
        logT, nit, err = _semidual_polish(logK, loga, logb, fs, max_iter, tol)
        it += nit
        method = "sinkhorn+lbfgs"
        if not err < tol:
            raise SolverFailure(
                f"Sinkhorn did not converge in {max_iter} iterations "
                f"(marginal violation {err:.3g}, epsilon {eps:.3g})"
            )
    full = np.zeros((n + 1, m + 1))
    full[np.ix_(ra, cb)] = np.exp(logT)
    T = full[:n, :m]
    return TransportPlan(
        T, _objective(D, T), spec.M,
        info={"method": method, "epsilon": eps, "iterations": it, "violation": float(err)},
    )


def solve(D: np.ndarray, spec: TransportSpec, mode: str = "exact") -> TransportPlan:
    if mode == "exact":
        return solve_partial_ot(D, spec)
    if mode == "entropic":
        return solve_entropic(D, spec)
    raise ValueError(f"unknown transport mode {mode!r}")


def ntc(D: np.ndarray, T: TransportPlan) -> float:
    """Normalised transportation cost ``sum(D * T) / M``."""
    if not T.mass > 0:
        raise ValueError("plan carries no mass")
    return _objective(np.asarray(D, dtype=float), T.values) / T.mass


def default_mass_grid(v, q, n_points: int = 20, lo: float = 0.05, hi: float = 1.0) -> np.ndarray:
    """Evenly spaced masses in ``[lo, hi] * min(sum v, sum q)``.

    With uniform caps every value is snapped to a multiple of the cap so the
    exact solver keeps returning hard assignments.
    """
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    total = min(v.sum(), q.sum())
    grid = np.linspace(lo, hi, n_points) * total
    c = v[0] if v.size else 0.0
    if c > 0 and np.all(v == c) and np.all(q == c):
        k = np.clip(np.round(grid / c), 1, np.floor(total / c + 1e-9))
        grid = np.unique(k) * c
    return grid


def knee_index(x: Sequence[float], y: Sequence[float]) -> Tuple[int, float]:
    """Index of the point farthest from the first-to-last chord, on unit-scaled axes.

    Returns ``(index, distance)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xr = x[-1] - x[0]
    yr = y.max() - y.min()
    if xr <= 0 or yr <= 0:
        return len(x) - 1, 0.0
    xs = (x - x[0]) / xr
    ys = (y - y.min()) / yr
    dx, dy = xs[-1] - xs[0], ys[-1] - ys[0]
    dist = np.abs(dx * (ys - ys[0]) - dy * (xs - xs[0])) / np.hypot(dx, dy)
    i = int(np.argmax(dist))
    return i, float(dist[i])


@dataclass
class MassSelection:
    M_star: float
    curve: List[Tuple[float, float]]
    flat: bool
    knee_distance: float
    plans: List[TransportPlan] = field(default_factory=list, repr=False)

    @property
    def plan(self) -> TransportPlan:
        """Plan solved at the selected mass."""
        for (M, _), p in zip(self.curve, self.plans):
            if M == self.M_star:
                return p
        raise LookupError("selected plan was not kept")


def select_mass(
    D: np.ndarray,
    v,
    q,
    grid: Optional[Sequence[float]] = None,
    mode: str = "exact",
    epsilon: Optional[float] = None,
) -> MassSelection:
    """Solve for every mass on ``grid`` and pick the knee of the NTC-vs-M curve."""
    D = np.asarray(D, dtype=float)
    if grid is None:
        grid = default_mass_grid(v, q)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 5:
        raise ValueError("select_mass needs a grid of at least 5 mass values")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("mass grid must be strictly increasing")
    plans, curve = [], []
    for M in grid:
        plan = solve(D, TransportSpec(v, q, M, epsilon), mode)
        plans.append(plan)
        curve.append((float(M), ntc(D, plan)))
    xs, ys = zip(*curve)
    i, dist = knee_index(xs, ys)
    flat = dist < 1e-9
    if flat:
        warnings.warn("NTC curve has no knee; using the largest mass", FlatCurveWarning)
        i = len(grid) - 1
    return MassSelection(float(grid[i]), curve, flat, dist, plans)


def minmax_normalize(T: TransportPlan) -> TransportPlan:
    """Global min-max rescaling of the plan entries to ``[0, 1]``."""
    lo, hi = T.values.min(), T.values.max()
    if not hi > lo:
        raise ConstantPlan("cannot min-max normalise a constant plan")
    return replace(T, values=(T.values - lo) / (hi - lo), normalized=True)


def hard_assignment(T: TransportPlan, tol: float = MASS_TOL) -> List[Tuple[int, int]]:
    """Injective ``(i, j)`` pairs of a vertex plan with at most one significant entry per row."""
    sig = T.values > tol
    counts = sig.sum(axis=1)
    bad = np.flatnonzero(counts > 1)
    if bad.size:
        raise NotAVertexSolution(
            f"{bad.size} row(s) split their mass, e.g. row {bad[0]} has {counts[bad[0]]} entries"
        )
    rows = np.flatnonzero(counts == 1)
    cols = np.argmax(T.values[rows], axis=1)
    if len(np.unique(cols)) != len(cols):
        raise NotAVertexSolution("two rows are assigned to the same column")
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def round_assignment(T: TransportPlan, cap: Optional[float] = None) -> List[Tuple[int, int]]:
    """Injective pairs carrying the most plan mass; used to read a matching off a diffuse plan.

    Keeps ``round(mass / cap)`` pairs (``cap`` defaults to ``1 / n``) out of the
    maximum-weight matching on ``T``.  Vertex plans give the same pairs as
    :func:`hard_assignment`.
    """
    V = T.values
    n = V.shape[0]
    cap = 1.0 / n if cap is None else float(cap)
    k = min(int(round(T.mass / cap)), min(V.shape))
    rows, cols = linear_sum_assignment(-V)
    keep = np.argsort(-V[rows, cols], kind="stable")[:k]
    return sorted((int(rows[a]), int(cols[a])) for a in keep)

