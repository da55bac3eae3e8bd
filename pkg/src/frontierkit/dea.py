"""Output-oriented DEA scores, one linear program per DMU and period.

For target ``j`` the program is

    max phi  s.t.  sum_i lam_i y_im >= phi * y_jm   (every output m)
                   sum_i lam_i x_ik <= x_jk         (every input k)
                   sum_i lam_i = 1                  (VRS only)
                   lam >= 0

and the reported efficiency is ``score = 1 / phi`` in (0, 1]. Each period is
scored against its own cross-section.

Rows are divided by the target's own output/input levels before solving.
This is an equivalent program, but it makes every coefficient O(1) and the
scores exactly invariant to the units of any column.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import SolverFailure, ValidationError
from .lp import DEFAULT_MAX_PIVOTS, Backend, LinearProgram, LpSolution, solve_lp
from .panel import FrontierSpec, PanelDataset

EFFICIENT_TOL = 1e-6
CHECK_TOL = 1e-8


@dataclass(frozen=True)
class DeaProblem:
    """Reference technology ``(Y, X)`` and one evaluated point ``(y0, x0)``.

    The evaluated point need not belong to the reference set; the bootstrap
    scores original observations against pseudo-samples.
    """

    Y: np.ndarray
    X: np.ndarray
    y0: np.ndarray
    x0: np.ndarray
    rts: str = "VRS"

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y0 = np.asarray(self.y0, dtype=float).reshape(-1)
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if Y.shape[0] != X.shape[0] or Y.shape[1] != y0.size or X.shape[1] != x0.size:
            raise ValidationError("inconsistent DEA dimensions")
        if min(Y.min(), X.min(), y0.min(), x0.min()) <= 0:
            raise ValidationError("DEA quantities must be strictly positive")
        if self.rts not in ("VRS", "CRS"):
            raise ValidationError(f"unknown returns to scale {self.rts!r}")
        for k, v in (("Y", Y), ("X", X), ("y0", y0), ("x0", x0)):
            object.__setattr__(self, k, v)

    @classmethod
    def for_member(cls, Y, X, j: int, rts: str = "VRS") -> "DeaProblem":
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not 0 <= j < Y.shape[0]:
            raise ValidationError(f"target index {j} outside 0..{Y.shape[0] - 1}")
        return cls(Y, X, Y[j], X[j], rts)


@dataclass(frozen=True)
class DeaResult:
    dmu: str
    period: int
    phi: float
    lambdas: np.ndarray = field(repr=False)
    reference: tuple[str, ...] = field(repr=False, default=())

    @property
    def score(self) -> float:
        return 1.0 / self.phi

    @property
    def is_efficient(self) -> bool:
        return abs(self.phi - 1.0) <= EFFICIENT_TOL

    @property
    def peers(self) -> dict[str, float]:
        return {d: float(w) for d, w in zip(self.reference, self.lambdas) if w > 1e-9}


def build_lp(problem: DeaProblem) -> LinearProgram:
    """Variables ``[phi, lam_1..lam_N]``; ``phi`` is free.

    Row order: outputs, inputs, then the convexity row under VRS.
    """
    Y, X = problem.Y, problem.X
    n, m = Y.shape
    k = X.shape[1]
    Ys = Y / problem.y0
    Xs = X / problem.x0
    rows = [np.concatenate([[-1.0], Ys[:, r]]) for r in range(m)]
    rows += [np.concatenate([[0.0], Xs[:, q]]) for q in range(k)]
    senses = [">="] * m + ["<="] * k
    rhs = [0.0] * m + [1.0] * k
    if problem.rts == "VRS":
        rows.append(np.concatenate([[0.0], np.ones(n)]))
        senses.append("=")
        rhs.append(1.0)
    c = np.zeros(n + 1)
    c[0] = 1.0
    return LinearProgram(c, np.array(rows), np.array(rhs), tuple(senses),
                         (True,) + (False,) * n)


def check_solution(problem: DeaProblem, phi: float, lam: np.ndarray, tol: float = CHECK_TOL) -> float:
    """Worst relative violation of the envelopment constraints at ``(phi, lam)``."""
    out = (lam @ problem.Y - phi * problem.y0) / problem.y0
    inp = (problem.x0 - lam @ problem.X) / problem.x0
    worst = max(0.0, -out.min(), -inp.min(), -lam.min())
    if problem.rts == "VRS":
        worst = max(worst, abs(lam.sum() - 1.0))
    return worst


def solve_problem(problem: DeaProblem, backend: Backend | None = None,
                  max_pivots: int = DEFAULT_MAX_PIVOTS) -> tuple[float, np.ndarray, LpSolution]:
    """Return ``(phi, lambdas, raw_solution)``; raises ``SolverFailure``."""
    sol = solve_lp(build_lp(problem), max_pivots=max_pivots, backend=backend)
    if not sol.optimal:
        raise SolverFailure(f"DEA program not solved: {sol.status.value}", status=sol.status)
    phi, lam = float(sol.x[0]), np.clip(sol.x[1:], 0.0, None)
    viol = check_solution(problem, phi, lam)
    if viol > CHECK_TOL:
        raise SolverFailure(f"DEA solution violates constraints by {viol:.3g}", status=sol.status)
    return phi, lam, sol


def dea_phi(Y, X, Y0=None, X0=None, rts: str = "VRS", backend: Backend | None = None) -> np.ndarray:
    """Expansion factors of the points ``(Y0, X0)`` against reference ``(Y, X)``.

    With ``Y0``/``X0`` omitted every reference member is scored.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y0 = Y if Y0 is None else np.atleast_2d(np.asarray(Y0, dtype=float))
    X0 = X if X0 is None else np.atleast_2d(np.asarray(X0, dtype=float))
    return np.array([solve_problem(DeaProblem(Y, X, y0, x0, rts), backend)[0]
                     for y0, x0 in zip(Y0, X0)])


def dea_score(panel: PanelDataset, spec: FrontierSpec, dmu: str, period: int,
              backend: Backend | None = None) -> DeaResult:
    spec.check(panel)
    Y = panel.matrix(spec.outputs, period)
    X = panel.matrix(spec.inputs, period)
    j = panel.dmu_index(dmu)
    try:
        phi, lam, _ = solve_problem(DeaProblem.for_member(Y, X, j, spec.rts), backend)
    except SolverFailure as exc:
        raise SolverFailure(f"({dmu}, {period}): {exc}", status=exc.status,
                            cells=[(dmu, period)]) from exc
    return DeaResult(str(dmu), int(period), phi, lam, panel.dmus)


@dataclass(frozen=True)
class DeaTable:
    results: tuple[DeaResult, ...]
    dmus: tuple[str, ...]
    periods: tuple[int, ...]

    def scores(self) -> np.ndarray:
        """``(n_dmus, n_periods)`` efficiency scores."""
        out = np.empty((len(self.dmus), len(self.periods)))
        for r in self.results:
            out[self.dmus.index(r.dmu), self.periods.index(r.period)] = r.score
        return out

    def phis(self) -> np.ndarray:
        return 1.0 / self.scores()

    def long(self) -> pd.DataFrame:
        return pd.DataFrame({
            "dmu": [r.dmu for r in self.results],
            "period": [r.period for r in self.results],
            "score": [r.score for r in self.results],
            "phi": [r.phi for r in self.results],
            "is_efficient": [r.is_efficient for r in self.results],
            "peers": [";".join(f"{d}:{w:.6g}" for d, w in r.peers.items()) for r in self.results],
        })

    def wide(self) -> pd.DataFrame:
        return score_table(self.scores(), self.dmus, self.periods)


def score_table(scores: np.ndarray, dmus: Sequence[str], periods: Sequence[int]) -> pd.DataFrame:
    """Per-period columns plus ``Mean`` and ``%Var`` = (last - first) / first * 100."""
    scores = np.asarray(scores, dtype=float)
    df = pd.DataFrame(scores, index=pd.Index(list(dmus), name="dmu"),
                      columns=[int(p) for p in periods])
    df["Mean"] = scores.mean(axis=1)
    df["%Var"] = (scores[:, -1] - scores[:, 0]) / scores[:, 0] * 100.0
    return df


def dea_all(panel: PanelDataset, spec: FrontierSpec, backend: Backend | None = None,
            n_jobs: int = 1) -> DeaTable:
    """Score every (dmu, period) cell; failures are collected and raised together."""
    spec.check(panel)
    cells = [(d, p) for d in panel.dmus for p in panel.periods]

    def one(cell):
        try:
            return dea_score(panel, spec, cell[0], cell[1], backend)
        except SolverFailure as exc:
            return exc

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            out = list(pool.map(one, cells))
    else:
        out = [one(c) for c in cells]
    failed = [c for c, r in zip(cells, out) if isinstance(r, SolverFailure)]
    if failed:
        raise SolverFailure(f"DEA failed for {len(failed)} cell(s): {failed[:5]}", cells=failed)
    return DeaTable(tuple(out), panel.dmus, panel.periods)
