"""Small dense linear programs.

``solve_lp`` runs a two-phase revised simplex with Bland's smallest-index
rule for both the entering and the leaving variable, so it terminates on
degenerate problems (DEA programs are heavily degenerate). Problems here
have a few dozen columns, so the basis is re-factorized from scratch at
every pivot; that is slower than an updated LU but keeps round-off from
accumulating.

Any callable with the signature of ``simplex`` can be passed as ``backend``;
``highs_backend`` wraps SciPy's HiGHS and is used as a cross-check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_PIVOTS = 10_000
FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-11
_COST_TOL = 1e-11


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class LinearProgram:
    """maximize ``c @ x`` subject to ``A[i] @ x  (<=|>=|=)  b[i]``.

    Variables are non-negative unless flagged in ``free``.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    free: tuple[bool, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (b.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, c.size)}")
        if len(self.senses) != b.size or any(s not in ("<=", ">=", "=") for s in self.senses):
            raise ValueError("senses must be one of '<=', '>=', '=' per row")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("LP coefficients must be finite")
        free = (False,) * c.size if self.free is None else tuple(bool(f) for f in self.free)
        if len(free) != c.size:
            raise ValueError("free mask length differs from number of variables")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", tuple(self.senses))
        object.__setattr__(self, "free", free)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation at ``x``, scaled by row size."""
        x = np.asarray(x, dtype=float)
        r = self.A @ x - self.b
        scale = np.maximum(1.0, np.abs(self.A) @ np.abs(x) + np.abs(self.b))
        viol = np.zeros_like(r)
        for i, s in enumerate(self.senses):
            if s == "<=":
                viol[i] = max(r[i], 0.0)
            elif s == ">=":
                viol[i] = max(-r[i], 0.0)
            else:
                viol[i] = abs(r[i])
        worst = float(np.max(viol / scale)) if viol.size else 0.0
        bound = ~np.asarray(self.free)
        if bound.any():
            worst = max(worst, float(np.max(np.maximum(-x[bound], 0.0))))
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


Backend = Callable[..., LpSolution]


def _standard_form(lp: LinearProgram):
    """Equality form ``A x = b, x >= 0, b >= 0`` plus a starting basis.

    Returns ``(A, b, cost, basis, n_art, recover)`` where ``cost`` is the
    minimization cost over structural+slack columns, the last ``n_art``
    columns are artificials and ``recover`` maps a standard-form solution
    back to the original variables.
    """
    m, n = lp.shape
    free_idx = [j for j in range(n) if lp.free[j]]
    A = np.hstack([lp.A, -lp.A[:, free_idx]]) if free_idx else lp.A.copy()
    cost = -np.concatenate([lp.c, -lp.c[free_idx]])
    b = lp.b.copy()
    senses = list(lp.senses)
    for i, s in enumerate(senses):
        if s == ">=":
            A[i] *= -1
            b[i] *= -1
            senses[i] = "<="
    slack_rows = [i for i, s in enumerate(senses) if s == "<="]
    S = np.zeros((m, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0
    A = np.hstack([A, S])
    cost = np.concatenate([cost, np.zeros(len(slack_rows))])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    n_struct = A.shape[1]
    basis = [-1] * m
    for k, i in enumerate(slack_rows):
        if not neg[i]:
            basis[i] = A.shape[1] - len(slack_rows) + k
    art_rows = [i for i in range(m) if basis[i] < 0]
    if art_rows:
        R = np.zeros((m, len(art_rows)))
        for k, i in enumerate(art_rows):
            R[i, k] = 1.0
            basis[i] = n_struct + k
        A = np.hstack([A, R])

    def recover(z):
        x = z[:n].copy()
        for k, j in enumerate(free_idx):
            x[j] -= z[n + k]
        return x

    return A, b, cost, basis, len(art_rows), recover


def _iterate(A, b, cost, basis, allowed, max_pivots, pivots):
    """Bland-rule revised simplex on ``min cost @ x``; mutates ``basis``."""
    m, ncol = A.shape
    allowed_idx = np.flatnonzero(allowed)
    while True:
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, cost[basis])
        in_basis = np.zeros(ncol, bool)
        in_basis[basis] = True
        cand = allowed_idx[~in_basis[allowed_idx]]
        if cand.size == 0:
            return LpStatus.OPTIMAL, xB, pivots
        d = cost[cand] - y @ A[:, cand]
        scale = 1.0 + np.abs(cost[cand])
        enter = np.flatnonzero(d < -_COST_TOL * scale)
        if enter.size == 0:
            return LpStatus.OPTIMAL, xB, pivots
        if pivots >= max_pivots:
            return LpStatus.ITERATION_LIMIT, xB, pivots
        j = int(cand[enter[0]])
        u = np.linalg.solve(B, A[:, j])
        pos = u > _PIVOT_TOL
        if not pos.any():
            return LpStatus.UNBOUNDED, xB, pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / u[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + best))
        r = int(min(ties, key=lambda i: basis[i]))
        basis[r] = j
        pivots += 1


def simplex(lp: LinearProgram, max_pivots: int = DEFAULT_MAX_PIVOTS) -> LpSolution:
    m, n = lp.shape
    A, b, cost, basis, n_art, recover = _standard_form(lp)
    ncol = A.shape[1]
    n_real = ncol - n_art
    pivots = 0

    if n_art:
        phase1 = np.zeros(ncol)
        phase1[n_real:] = 1.0
        status, xB, pivots = _iterate(A, b, phase1, basis, np.ones(ncol, bool), max_pivots, pivots)
        if status is LpStatus.ITERATION_LIMIT:
            return LpSolution(status, np.nan, np.full(n, np.nan), pivots)
        infeas = float(np.sum(xB[np.asarray(basis) >= n_real]))
        if infeas > FEAS_TOL * (1.0 + np.abs(b).max()):
            return LpSolution(LpStatus.INFEASIBLE, np.nan, np.full(n, np.nan), pivots)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, bool)
        for r in range(m):
            if basis[r] < n_real:
                continue
            Binv_row = np.linalg.solve(A[:, basis].T, np.eye(m)[r])
            row = Binv_row @ A[:, :n_real]
            in_basis = set(basis)
            cand = [j for j in range(n_real) if j not in in_basis and abs(row[j]) > 1e-9]
            if cand:
                basis[r] = cand[0]
                pivots += 1
            else:
                keep[r] = False
        if not keep.all():
            basis = [basis[r] for r in range(m) if keep[r]]
            A, b = A[keep], b[keep]
        A = A[:, :n_real]
        cost = cost[:n_real]
        ncol = n_real

    status, xB, pivots = _iterate(A, b, cost, basis, np.ones(ncol, bool), max_pivots, pivots)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, np.nan, np.full(n, np.nan), pivots)
    z = np.zeros(ncol)
    z[basis] = xB
    z[np.abs(z) < 1e-14] = 0.0
    x = recover(z)
    return LpSolution(LpStatus.OPTIMAL, float(lp.c @ x), x, pivots)


def highs_backend(lp: LinearProgram, max_pivots: int = DEFAULT_MAX_PIVOTS) -> LpSolution:
    """Same contract as ``simplex`` but solved by SciPy's HiGHS."""
    from scipy.optimize import linprog

    ub = [i for i, s in enumerate(lp.senses) if s != "="]
    eq = [i for i, s in enumerate(lp.senses) if s == "="]
    sign = np.array([1.0 if lp.senses[i] == "<=" else -1.0 for i in ub])
    res = linprog(
        -lp.c,
        A_ub=lp.A[ub] * sign[:, None] if ub else None,
        b_ub=lp.b[ub] * sign if ub else None,
        A_eq=lp.A[eq] if eq else None,
        b_eq=lp.b[eq] if eq else None,
        bounds=[(None, None) if f else (0, None) for f in lp.free],
        method="highs",
        options={"maxiter": max_pivots},
    )
    status = {0: LpStatus.OPTIMAL, 1: LpStatus.ITERATION_LIMIT, 2: LpStatus.INFEASIBLE,
              3: LpStatus.UNBOUNDED}.get(res.status, LpStatus.INFEASIBLE)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, np.nan, np.full(lp.c.size, np.nan), int(res.nit))
    return LpSolution(status, float(lp.c @ res.x), np.asarray(res.x), int(res.nit))


def solve_lp(lp: LinearProgram, max_pivots: int = DEFAULT_MAX_PIVOTS,
             backend: Backend | None = None) -> LpSolution:
    """Solve ``lp``; an optimal answer is checked for feasibility before returning."""
    sol = (backend or simplex)(lp, max_pivots=max_pivots)
    if sol.optimal and lp.violation(sol.x) > FEAS_TOL:
        from .errors import SolverFailure

        raise SolverFailure(f"solution violates constraints by {lp.violation(sol.x):.3g}",
                            status=sol.status)
    return sol


def lp_from_rows(c: Sequence[float], rows: Sequence[tuple[Sequence[float], str, float]],
                 free: Sequence[bool] | None = None) -> LinearProgram:
    """Convenience constructor from ``(coefficients, sense, rhs)`` triples."""
    A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), len(c))
    return LinearProgram(np.asarray(c, float), A, np.array([r[2] for r in rows], float),
                         tuple(r[1] for r in rows), None if free is None else tuple(free))
