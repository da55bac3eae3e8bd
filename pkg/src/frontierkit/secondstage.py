"""Second-stage regressions of efficiency scores on environmental covariates.

Two estimators:

* ``tobit_fit``: pooled two-limit Tobit (censoring at 0 and 1), used for
  stochastic-frontier efficiencies;
* ``simar_wilson``: truncated regression of DEA scores (truncation keeps
  ``theta <= 1``) with parametric bootstrap inference, optionally preceded
  by bootstrap bias correction of the scores themselves (double bootstrap).

The truncated regression is fitted in Olsen's parameterization
``(gamma, h) = (delta / sigma, 1 / sigma)``, in which the log-likelihood is
globally concave, so damped Newton converges from the OLS start. Bootstrap
replicates share the design matrix and are fitted as one batch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import log_ndtr

from .dea import EFFICIENT_TOL, dea_all, dea_phi
from .errors import (BootstrapDegenerate, CensoringDegeneracy, CovariateMismatch,
                     InsufficientInteriorScores, NonConvergence, NonFinite, PreconditionError,
                     ValidationError, ZeroVariance)
from .panel import FrontierSpec, PanelDataset
from .rng import stream
from .sfa import numeric_hessian, stars

INTERCEPT = "Constant"
CENSOR_TOL = 1e-9
_STAGE_INNER, _STAGE_OUTER = 1, 2

# range checks applied when a covariate of that name is present
DEFAULT_BOUNDS = {"HH": (0.0, 10000.0)}


def _lam(c):
    """Inverse Mills ratio ``phi(c) / Phi(c)``, stable in both tails."""
    return np.exp(stats.norm.logpdf(c) - log_ndtr(c))


# -- covariates -----------------------------------------------------------------

@dataclass(frozen=True)
class CovariateMatrix:
    """Design of the second stage; rows follow the panel's DMU-major order."""

    Z: np.ndarray
    names: tuple[str, ...]
    roles: tuple[str, ...]
    dmus: tuple[str, ...] = ()
    periods: tuple = ()

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        object.__setattr__(self, "Z", Z)
        if Z.ndim != 2 or Z.shape[1] != len(self.names) or len(self.roles) != len(self.names):
            raise ValidationError("Z, names and roles disagree in shape")
        if not np.all(np.isfinite(Z)):
            raise ValidationError("covariates must be finite")
        if sum(r == "intercept" for r in self.roles) != 1:
            raise ValidationError("exactly one intercept column is required")
        for j, (name, role) in enumerate(zip(self.names, self.roles)):
            col = Z[:, j]
            if role == "intercept":
                if not np.all(col == 1.0):
                    raise ValidationError("intercept column must be all ones")
                continue
            if np.ptp(col) == 0:
                raise ZeroVariance(f"covariate {name!r} is constant")
            if role == "dummy" and not np.all(np.isin(col, (0.0, 1.0))):
                raise ValidationError(f"dummy {name!r} has values outside {{0, 1}}")
            if role == "count" and not (np.all(col >= 0) and np.all(col == np.round(col))):
                raise ValidationError(f"count {name!r} must hold non-negative integers")
            if name in DEFAULT_BOUNDS:
                lo, hi = DEFAULT_BOUNDS[name]
                if col.min() < lo or col.max() > hi:
                    raise ValidationError(f"{name!r} outside [{lo:g}, {hi:g}]")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    def rows(self, mask) -> "CovariateMatrix":
        return CovariateMatrix(self.Z[mask], self.names, self.roles)

    @classmethod
    def from_panel(cls, panel: PanelDataset, names: Sequence[str] | None = None,
                   roles: Mapping[str, str] | None = None) -> "CovariateMatrix":
        """Stack covariates with a leading intercept; roles inferred when absent."""
        names = list(panel.covariates if names is None else names)
        for nm in names:
            panel.get(nm)  # raises UnknownVariable
        cols = [np.ones(panel.n_obs)] + [panel.flat(nm) for nm in names]
        rl = ["intercept"] + [(roles or {}).get(nm) or infer_role(panel.flat(nm)) for nm in names]
        return cls(np.column_stack(cols), (INTERCEPT, *names), tuple(rl), panel.dmus, panel.periods)

    @classmethod
    def from_array(cls, Z, names: Sequence[str] | None = None) -> "CovariateMatrix":
        """Wrap a raw matrix whose first column is the intercept."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        names = names or [INTERCEPT] + [f"z{j}" for j in range(1, Z.shape[1])]
        roles = ["intercept"] + [infer_role(Z[:, j]) for j in range(1, Z.shape[1])]
        return cls(Z, tuple(names), tuple(roles))


def infer_role(col) -> str:
    col = np.asarray(col, dtype=float)
    if np.all(np.isin(col, (0.0, 1.0))):
        return "dummy"
    if np.all(col >= 0) and np.all(col == np.round(col)) and col.max() <= 50:
        return "count"
    return "continuous"


def _as_design(Z) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(Z, CovariateMatrix):
        return Z.Z, Z.names
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return Z, (INTERCEPT, *[f"z{j}" for j in range(1, Z.shape[1])])


def _cluster_ids(Z, n):
    if isinstance(Z, CovariateMatrix) and Z.dmus and len(Z.dmus) * len(Z.periods) == n:
        return np.repeat(np.arange(len(Z.dmus)), len(Z.periods))
    return None


# -- Tobit ------------------------------------------------------------------------

@dataclass(frozen=True)
class TobitFit:
    names: tuple[str, ...]
    coef: np.ndarray
    sigma: float
    se: np.ndarray
    se_sigma: float
    loglik: float
    n_lower: int
    n_upper: int
    n_uncensored: int
    iterations: int = 0
    cov_type: str = "mle"

    @property
    def n_obs(self) -> int:
        return self.n_lower + self.n_upper + self.n_uncensored

    def table(self) -> pd.DataFrame:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.coef / self.se
        p = 2 * stats.norm.sf(np.abs(z))
        return pd.DataFrame({"Parameter": self.names, "Estimate": self.coef, "Est. Error": self.se,
                             "z": z, "p": p, "stars": [stars(v) for v in p]})


def tobit_loglik(theta, Z, y, lower=0.0, upper=1.0, per_obs=False):
    """Log-likelihood and gradient in ``(beta, log sigma)``."""
    p = Z.shape[1]
    beta, s = theta[:p], np.exp(theta[p])
    xb = Z @ beta
    lo = y <= lower + CENSOR_TOL
    hi = y >= upper - CENSOR_TOL
    mid = ~(lo | hi)
    ll = np.empty(y.size)
    gb = np.empty(y.size)  # d ll / d xb
    gs = np.empty(y.size)  # d ll / d log sigma
    z = (y[mid] - xb[mid]) / s
    ll[mid] = stats.norm.logpdf(z) - np.log(s)
    gb[mid] = z / s
    gs[mid] = z ** 2 - 1
    a = (lower - xb[lo]) / s
    ll[lo] = log_ndtr(a)
    gb[lo] = -_lam(a) / s
    gs[lo] = -_lam(a) * a
    b = (xb[hi] - upper) / s
    ll[hi] = log_ndtr(b)
    gb[hi] = _lam(b) / s
    gs[hi] = -_lam(b) * b
    scores = np.column_stack([gb[:, None] * Z, gs])
    if per_obs:
        return ll, scores
    return ll.sum(), scores.sum(0)


def tobit_fit(scores, Z, lower: float = 0.0, upper: float = 1.0, cluster=None,
              tol: float = 1e-8, max_iter: int = 1000) -> TobitFit:
    """Pooled two-limit Tobit by BFGS from the OLS start.

    ``cluster``: ``None`` for likelihood standard errors, ``"dmu"`` (or an
    array of group labels) for a cluster-robust sandwich.
    """
    Zm, names = _as_design(Z)
    y = np.asarray(scores, dtype=float).reshape(-1)
    if y.size != Zm.shape[0]:
        raise ValidationError(f"{y.size} scores but {Zm.shape[0]} covariate rows")
    if not np.all(np.isfinite(y)):
        raise NonFinite("scores must be finite")
    lo = y <= lower + CENSOR_TOL
    hi = y >= upper - CENSOR_TOL
    if lo.all() or hi.all() or (lo | hi).all():
        raise CensoringDegeneracy("every observation is censored")
    beta0, *_ = np.linalg.lstsq(Zm, y, rcond=None)
    s0 = max(np.sqrt(np.mean((y - Zm @ beta0) ** 2)), 1e-6)
    x0 = np.r_[beta0, np.log(s0)]

    def neg(x):
        ll, g = tobit_loglik(x, Zm, y, lower, upper)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(x)
        return -ll, -g

    res = optimize.minimize(neg, x0, jac=True, method="BFGS",
                            options={"gtol": tol, "maxiter": max_iter})
    x = res.x
    ll, g = tobit_loglik(x, Zm, y, lower, upper)
    if not np.isfinite(ll) or np.max(np.abs(g)) > 1e-4 * max(1.0, y.size ** 0.5):
        raise NonConvergence(f"Tobit did not converge (|grad| = {np.max(np.abs(g)):.3g})")
    p = Zm.shape[1]
    H = numeric_hessian(lambda t: tobit_loglik(t, Zm, y, lower, upper)[1], x)
    Hinv = np.linalg.inv(-H)
    cov_type = "mle"
    if cluster is not None:
        groups = _cluster_ids(Z, y.size) if isinstance(cluster, str) else np.asarray(cluster)
        if groups is None:
            raise ValidationError("cluster='dmu' needs a CovariateMatrix built from a panel")
        _, S = tobit_loglik(x, Zm, y, lower, upper, per_obs=True)
        labels, inv = np.unique(groups, return_inverse=True)
        G = labels.size
        Sg = np.zeros((G, S.shape[1]))
        np.add.at(Sg, inv, S)
        Hinv = Hinv @ (Sg.T @ Sg) @ Hinv * G / (G - 1)
        cov_type = "cluster"
    sd = np.sqrt(np.clip(np.diag(Hinv), 0, None))
    sigma = float(np.exp(x[p]))
    return TobitFit(tuple(names), x[:p].copy(), sigma, sd[:p], float(sd[p] * sigma), float(ll),
                    int(lo.sum()), int(hi.sum()), int((~(lo | hi)).sum()), int(res.nit), cov_type)


# -- truncated regression -----------------------------------------------------------

def truncreg_loglik(delta, sigma, Z, theta, upper=1.0):
    """Normal regression truncated to keep ``theta <= upper``."""
    m = np.asarray(Z, float) @ np.asarray(delta, float)
    z = (np.asarray(theta, float) - m) / sigma
    return float(np.sum(stats.norm.logpdf(z) - np.log(sigma) - log_ndtr((upper - m) / sigma)))


def _olsen_derivs(g, h, Z, Y, upper):
    """Batched log-likelihood, gradient and Hessian in ``(gamma, h)``.

    ``g``: (B, p), ``h``: (B,), ``Y``: (B, n).
    """
    zg = g @ Z.T                      # (B, n)
    w = h[:, None] * Y - zg
    c = h[:, None] * upper - zg
    lam = _lam(c)
    n = Y.shape[1]
    ll = n * np.log(h) - 0.5 * np.sum(w ** 2, 1) - np.sum(log_ndtr(c), 1)
    a = w + lam                       # d/d(zg) of -0.5 w^2 - log Phi(c)
    grad_g = a @ Z
    grad_h = n / h - np.sum(w * Y, 1) - upper * np.sum(lam, 1)
    v = 1.0 - lam * (c + lam)         # truncated-normal variance factor, in (0, 1)
    dlam = v - 1.0                    # d lam / d c
    Hgg = -np.einsum("bi,ij,ik->bjk", v, Z, Z)
    Hgh = np.einsum("bi,ij->bj", Y + upper * dlam, Z)
    Hhh = -n / h ** 2 - np.sum(Y ** 2, 1) - upper ** 2 * np.sum(dlam, 1)
    p = Z.shape[1]
    H = np.empty((g.shape[0], p + 1, p + 1))
    H[:, :p, :p] = Hgg
    H[:, :p, p] = Hgh
    H[:, p, :p] = Hgh
    H[:, p, p] = Hhh
    return ll, np.concatenate([grad_g, grad_h[:, None]], 1), H


def _truncreg_batch(Z, Y, upper=1.0, tol=1e-9, max_iter=100):
    """Fit every row of ``Y`` against the common design ``Z``.

    Returns ``(delta (B, p), sigma (B,), loglik (B,), converged (B,))``.
    """
    Y = np.atleast_2d(Y)
    B, n = Y.shape
    p = Z.shape[1]
    # OLS start, mapped to Olsen coordinates
    coef, *_ = np.linalg.lstsq(Z, Y.T, rcond=None)
    resid = Y - (Z @ coef).T
    s = np.sqrt(np.maximum(np.mean(resid ** 2, 1), 1e-12))
    g, h = coef.T / s[:, None], 1.0 / s
    ll, grad, H = _olsen_derivs(g, h, Z, Y, upper)
    done = np.zeros(B, bool)
    for _ in range(max_iter):
        scale = np.max(np.abs(grad), 1) / np.maximum(1.0, np.abs(ll) / n)
        done |= scale < tol
        act = np.flatnonzero(~done & np.isfinite(ll))
        if act.size == 0:
            break
        try:
            step = np.linalg.solve(-H[act], grad[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = grad[act] * 1e-3
        t = np.ones(act.size)
        pending = np.ones(act.size, bool)
        g_new, h_new = g[act].copy(), h[act].copy()
        for _ in range(40):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            gc = g[act][idx] + t[idx, None] * step[idx, :p]
            hc = h[act][idx] + t[idx] * step[idx, p]
            ok_h = hc > 0
            llc = np.full(idx.size, -np.inf)
            if ok_h.any():
                llc[ok_h] = _olsen_derivs(gc[ok_h], hc[ok_h], Z, Y[act][idx][ok_h], upper)[0]
            acc = llc >= ll[act][idx] - 1e-12 * np.abs(ll[act][idx])
            g_new[idx[acc]] = gc[acc]
            h_new[idx[acc]] = hc[acc]
            pending[idx[acc]] = False
            t[idx[~acc]] *= 0.5
        g[act], h[act] = g_new, h_new
        stalled = act[pending]
        ll_a, grad_a, H_a = _olsen_derivs(g[act], h[act], Z, Y[act], upper)
        ll[act], grad[act], H[act] = ll_a, grad_a, H_a
        done[stalled] = True  # no ascent possible: at the optimum to rounding
    scale = np.max(np.abs(grad), 1) / np.maximum(1.0, np.abs(ll) / n)
    conv = np.isfinite(ll) & (scale < 1e-6)
    sigma = 1.0 / h
    return g * sigma[:, None], sigma, ll, conv


@dataclass(frozen=True)
class TruncregFit:
    names: tuple[str, ...]
    delta: np.ndarray
    sigma: float
    loglik: float
    n_obs: int
    se: np.ndarray = field(default=None)


def truncreg_fit(scores, Z, upper: float = 1.0, check: bool = True) -> TruncregFit:
    """MLE of ``theta = Z delta + e`` with ``e`` normal and ``theta <= upper`` enforced.

    Efficient units must be removed beforehand; a score within
    ``EFFICIENT_TOL`` of ``upper`` raises ``PreconditionError``.
    """
    Zm, names = _as_design(Z)
    y = np.asarray(scores, dtype=float).reshape(-1)
    if y.size != Zm.shape[0]:
        raise ValidationError(f"{y.size} scores but {Zm.shape[0]} covariate rows")
    if check and np.any(y > upper - EFFICIENT_TOL):
        raise PreconditionError("scores at the truncation point must be dropped before truncreg")
    if y.size < Zm.shape[1] + 2:
        raise InsufficientInteriorScores(f"{y.size} interior scores for {Zm.shape[1]} covariates")
    delta, sigma, ll, conv = _truncreg_batch(Zm, y[None, :], upper)
    if not conv[0]:
        raise NonConvergence("truncated regression did not converge")
    se = _truncreg_se(delta[0], sigma[0], Zm, y, upper)
    return TruncregFit(tuple(names), delta[0], float(sigma[0]), float(ll[0]), y.size, se)


def _truncreg_se(delta, sigma, Z, y, upper):
    """Observed-information standard errors for ``(delta, sigma)``."""
    _, _, H = _olsen_derivs((delta / sigma)[None], np.array([1 / sigma]), Z, y[None], upper)
    try:
        cov = np.linalg.inv(-H[0])
    except np.linalg.LinAlgError:
        return np.full(delta.size + 1, np.nan)
    # delta = gamma / h, sigma = 1 / h
    p = delta.size
    h = 1 / sigma
    J = np.zeros((p + 1, p + 1))
    J[:p, :p] = np.eye(p) / h
    J[:p, p] = -delta / h
    J[p, p] = -1 / h ** 2
    return np.sqrt(np.clip(np.diag(J @ cov @ J.T), 0, None))


def draw_truncated(rng, mean, sigma, upper=1.0, lower=-np.inf):
    """Inverse-CDF draw of ``N(mean, sigma^2)`` restricted to ``[lower, upper]``."""
    mean = np.asarray(mean, float)
    u = rng.random(mean.shape)
    a = (lower - mean) / sigma
    b = (upper - mean) / sigma
    return mean + sigma * stats.truncnorm.ppf(u, a, b)


# -- Simar-Wilson ----------------------------------------------------------------------

@dataclass(frozen=True)
class SimarWilsonOptions:
    algorithm: int = 2
    l1: int = 100
    l2: int = 1000
    level: float = 0.95
    seed: int = 0
    n_jobs: int = 1
    df_correct: bool = True

    def __post_init__(self):
        if self.algorithm not in (1, 2):
            raise ValidationError("algorithm must be 1 or 2")
        if self.l1 < 1 and self.algorithm == 2:
            raise ValidationError("algorithm 2 needs l1 >= 1")
        if self.l2 < 0:
            raise ValidationError("l2 must be >= 0")
        if not 0 < self.level < 1:
            raise ValidationError("level must lie in (0, 1)")


@dataclass(frozen=True)
class SimarWilsonFit:
    names: tuple[str, ...]
    delta: np.ndarray
    sigma: float
    ci: np.ndarray                 # (p + 1, 2): coefficients then sigma
    level: float
    algorithm: int
    l1: int
    l2: int
    seed: int
    n_used: int
    scores: np.ndarray | None = field(default=None, repr=False)
    bias_corrected: np.ndarray | None = field(default=None, repr=False)
    replicates: np.ndarray | None = field(default=None, repr=False)
    n_failed: int = 0
    seconds: float = 0.0

    @property
    def se(self) -> np.ndarray:
        """Bootstrap standard deviation of each coefficient and sigma."""
        if self.replicates is None or len(self.replicates) < 2:
            return np.full(self.delta.size + 1, np.nan)
        return np.nanstd(self.replicates, axis=0, ddof=1)

    def interval(self, level: float) -> np.ndarray:
        return percentile_ci(self.replicates, level, self.delta.size + 1)

    def significance(self) -> list[str]:
        """Stars from the percentile intervals that exclude zero (90/95/99%)."""
        out = []
        p = self.delta.size
        lv = {lvl: self.interval(lvl) for lvl in (0.90, 0.95, 0.99)}
        for j in range(p):
            s = ""
            for lvl, mark in ((0.99, "***"), (0.95, "**"), (0.90, "*")):
                lo, hi = lv[lvl][j]
                if np.isfinite(lo) and (lo > 0 or hi < 0):
                    s = mark
                    break
            out.append(s)
        return out

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "Parameter": list(self.names) + ["sigma"],
            "Estimate": np.r_[self.delta, self.sigma],
            "Boot. SE": self.se,
            "CI lower": self.ci[:, 0], "CI upper": self.ci[:, 1],
            "stars": self.significance() + [""],
        })


def percentile_ci(reps, level, k):
    if reps is None or len(reps) == 0:
        return np.full((k, 2), np.nan)
    a = (1 - level) / 2
    return np.nanquantile(reps, [a, 1 - a], axis=0, method="median_unbiased").T


def _bootstrap(Zm, delta, sigma, l2, seed, stage, upper=1.0, lower=-np.inf, df_correct=True):
    """Parametric bootstrap of the truncated regression; returns (l2, p + 1) and failures.

    With ``df_correct`` the replicate errors use ``sigma * sqrt(n / (n - p))``,
    offsetting the small-sample downward bias of the ML scale estimate.
    """
    if l2 == 0:
        return np.empty((0, delta.size + 1)), 0
    n, p = Zm.shape
    if df_correct:
        sigma = sigma * np.sqrt(n / (n - p))
    mean = Zm @ delta
    # one uniform vector per replicate stream, transformed in a single call
    U = np.vstack([stream(seed, stage, b).random(mean.size) for b in range(l2)])
    Y = mean + sigma * stats.truncnorm.ppf(U, (lower - mean) / sigma, (upper - mean) / sigma)
    d, s, _, conv = _truncreg_batch(Zm, Y, upper)
    reps = np.column_stack([d, s])
    reps[~conv] = np.nan
    n_failed = int((~conv).sum())
    if n_failed > 0.5 * l2:
        raise BootstrapDegenerate(f"{n_failed} of {l2} bootstrap replicates failed")
    return reps, n_failed


def bootstrap_truncreg(scores, Z, l2: int = 1000, level: float = 0.95, seed: int = 0,
                       upper: float = 1.0, df_correct: bool = True) -> SimarWilsonFit:
    """Truncated regression on given interior scores with percentile intervals."""
    t0 = time.perf_counter()
    fit = truncreg_fit(scores, Z, upper)
    Zm, _ = _as_design(Z)
    reps, failed = _bootstrap(Zm, fit.delta, fit.sigma, l2, seed, _STAGE_OUTER, upper,
                              df_correct=df_correct)
    ci = percentile_ci(reps, level, fit.delta.size + 1)
    return SimarWilsonFit(fit.names, fit.delta, fit.sigma, ci, level, 1, 0, l2, seed, fit.n_obs,
                          np.asarray(scores, float), None, reps, failed, time.perf_counter() - t0)


def _period_blocks(panel: PanelDataset, spec: FrontierSpec):
    for t, period in enumerate(panel.periods):
        yield t, panel.matrix(spec.outputs, period), panel.matrix(spec.inputs, period)


def _bias_correct(panel, spec, theta, Zm, delta, sigma, l1, seed, backend=None, n_jobs=1):
    """Inner loop: pseudo-output replicates and bias-corrected scores.

    Pseudo outputs ``y * theta_star / theta_hat`` lie inside the estimated
    frontier, so each replicate expansion factor is at most the original one
    and the corrected score never exceeds the original.
    """
    N, T = theta.shape
    mean = (Zm @ delta).reshape(N, T)

    def replicate(b):
        rng = stream(seed, _STAGE_INNER, b)
        th_star = draw_truncated(rng, mean, sigma, 1.0, 0.0)
        th_star = np.clip(th_star, 1e-12, 1.0)
        phi = np.empty((N, T))
        for t, Y, X in _period_blocks(panel, spec):
            Ystar = Y * (th_star[:, t] / theta[:, t])[:, None]
            phi[:, t] = dea_phi(Ystar, X, Y, X, spec.rts, backend)
        return phi

    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(n_jobs) as pool:
            phis = list(pool.map(replicate, range(l1)))
    else:
        phis = [replicate(b) for b in range(l1)]
    phi_hat = 1.0 / theta
    mean_star = np.mean(phis, axis=0)
    phi_bc = np.maximum(2 * phi_hat - mean_star, phi_hat)
    return 1.0 / phi_bc


def simar_wilson(panel: PanelDataset, spec: FrontierSpec, Z: CovariateMatrix,
                 options: SimarWilsonOptions | None = None, backend=None, **kw) -> SimarWilsonFit:
    """Bootstrap truncated regression of VRS DEA scores on ``Z``.

    Algorithm 1 regresses the interior DEA scores and bootstraps the
    regression. Algorithm 2 first replaces the scores by bootstrap
    bias-corrected ones (``l1`` pseudo-frontiers), then proceeds likewise.
    """
    from dataclasses import replace

    opts = replace(options or SimarWilsonOptions(), **kw)
    t0 = time.perf_counter()
    spec.check(panel)
    Zm, names = _as_design(Z)
    if Zm.shape[0] != panel.n_obs:
        raise ValidationError(f"{Zm.shape[0]} covariate rows for {panel.n_obs} observations")
    theta = dea_all(panel, spec, backend, opts.n_jobs).scores()
    flat = theta.reshape(-1)
    interior = flat < 1.0 - EFFICIENT_TOL
    first = truncreg_fit(flat[interior], Zm[interior])

    bc = None
    if opts.algorithm == 1:
        used, fit = interior, first
    else:
        bc = _bias_correct(panel, spec, theta, Zm, first.delta, first.sigma, opts.l1, opts.seed,
                           backend, opts.n_jobs)
        used = bc.reshape(-1) < 1.0 - EFFICIENT_TOL
        fit = truncreg_fit(bc.reshape(-1)[used], Zm[used])
    reps, failed = _bootstrap(Zm[used], fit.delta, fit.sigma, opts.l2, opts.seed, _STAGE_OUTER,
                              df_correct=opts.df_correct)
    ci = percentile_ci(reps, opts.level, fit.delta.size + 1)
    return SimarWilsonFit(tuple(names), fit.delta, fit.sigma, ci, opts.level, opts.algorithm,
                          opts.l1 if opts.algorithm == 2 else 0, opts.l2, opts.seed, int(used.sum()),
                          theta, bc, reps, failed, time.perf_counter() - t0)


# -- reporting ------------------------------------------------------------------------

def determinants_report(tobit: TobitFit, sw: SimarWilsonFit, digits: int = 3,
                        labels=("Tobit (SFA)", "Simar Wilson (DEA)")) -> pd.DataFrame:
    """Side-by-side coefficients with significance stars."""
    if tuple(tobit.names) != tuple(sw.names):
        raise CovariateMismatch(f"covariates differ: {tobit.names} vs {sw.names}")
    t_tab = tobit.table()
    s_stars = sw.significance()

    def fmt(v, s):
        return f"{v:.{digits}f}{s}"

    return pd.DataFrame({
        "Variable": list(tobit.names),
        labels[0]: [fmt(v, s) for v, s in zip(tobit.coef, t_tab["stars"])],
        labels[1]: [fmt(v, s) for v, s in zip(sw.delta, s_stars)],
    })
