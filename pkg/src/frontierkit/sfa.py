"""Translog output-distance stochastic frontier with time-decaying inefficiency.

The estimating equation for observation (i, t) is

    -ln y_M,it = TL(x_it, y_it / y_M,it; beta) + u_it - v_it

with ``TL`` the translog in log inputs and log normalized outputs. Dividing
every output by ``y_M`` imposes linear homogeneity, and symmetry is
structural (one coefficient per unordered pair). Inefficiency follows the
time-decay form ``u_it = exp(-eta (t - T)) u_i`` with ``u_i`` normal with
mean ``mu`` and variance ``sigma_u^2`` truncated at zero, ``v_it`` is normal
noise, and technical efficiency is ``E[exp(-u_it) | residuals of DMU i]``.

The likelihood is written for the composed error ``e = X beta - r =
v - u`` and integrates ``u_i`` out analytically per DMU; its gradient is
analytic. Variances are parameterized as ``sigma^2 = sigma_v^2 + sigma_u^2``
and ``gamma = sigma_u^2 / sigma^2`` and optimized as ``log sigma^2`` and
``logit gamma``.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import expit, log_ndtr, logit

from .dea import score_table
from .errors import DegenerateDesign, NonConvergence, NonFinite, ValidationError
from .panel import FrontierSpec, PanelDataset
from .rng import stream

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class TranslogDesign:
    response: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]
    symbols: tuple[str, ...]
    dmus: tuple[str, ...]
    periods: tuple[int, ...]

    @property
    def n_dmus(self) -> int:
        return len(self.dmus)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    @property
    def structure(self) -> tuple[int, int]:
        return self.n_dmus, self.n_periods


def n_translog_terms(n_outputs: int, n_inputs: int) -> int:
    m, k = n_outputs - 1, n_inputs
    return 1 + m + m * (m + 1) // 2 + k + k * (k + 1) // 2 + k * m


def translog_columns(log_ratios: np.ndarray, log_inputs: np.ndarray,
                     ratio_names: Sequence[str], input_names: Sequence[str]):
    """Regressor matrix and labels.

    Squared terms carry the 1/2 of the translog; each unordered cross pair
    appears once with coefficient ``a_mn = a_nm``, so its regressor is the
    plain product.
    """
    ly = np.atleast_2d(log_ratios) if log_ratios.size else np.empty((log_inputs.shape[0], 0))
    lx = np.atleast_2d(log_inputs)
    m, k = ly.shape[1], lx.shape[1]
    cols = [np.ones(lx.shape[0])]
    names = ["Constant"]
    symbols = ["alpha_0"]
    for a in range(m):
        cols.append(ly[:, a]); names.append(ratio_names[a]); symbols.append(f"a_{a + 1}")
    for a in range(k):
        cols.append(lx[:, a]); names.append(input_names[a]); symbols.append(f"beta_{a + 1}")
    for a in range(m):
        cols.append(0.5 * ly[:, a] ** 2); names.append(f"{ratio_names[a]}2")
        symbols.append(f"a_{a + 1}{a + 1}")
    for a, b in itertools.combinations(range(m), 2):
        cols.append(ly[:, a] * ly[:, b]); names.append(f"{ratio_names[a]} x {ratio_names[b]}")
        symbols.append(f"a_{a + 1}{b + 1}")
    for a in range(k):
        cols.append(0.5 * lx[:, a] ** 2); names.append(f"{input_names[a]}2")
        symbols.append(f"beta_{a + 1}{a + 1}")
    for a, b in itertools.combinations(range(k), 2):
        cols.append(lx[:, a] * lx[:, b]); names.append(f"{input_names[a]} x {input_names[b]}")
        symbols.append(f"beta_{a + 1}{b + 1}")
    for a in range(k):
        for b in range(m):
            cols.append(lx[:, a] * ly[:, b]); names.append(f"{input_names[a]} x {ratio_names[b]}")
            symbols.append(f"gamma_{a + 1}{b + 1}")
    return np.column_stack(cols), names, symbols


def build_design(panel: PanelDataset, spec: FrontierSpec, check_rank: bool = True) -> TranslogDesign:
    """Translog regression for ``-ln y_M``; rows in DMU-major order."""
    spec.check(panel)
    yM = panel.flat(spec.normalizing_output)
    others = [o for o in spec.outputs if o != spec.normalizing_output]
    Y = panel.matrix(others) if others else np.empty((panel.n_obs, 0))
    Xin = panel.matrix(spec.inputs)
    if np.any(yM <= 0) or np.any(Y <= 0) or np.any(Xin <= 0):
        from .errors import NonPositiveQuantity

        raise NonPositiveQuantity("translog needs strictly positive outputs and inputs")
    X, names, symbols = translog_columns(np.log(Y / yM[:, None]), np.log(Xin),
                                         [f"{o}'" for o in others], list(spec.inputs))
    if check_rank:
        rank = np.linalg.matrix_rank(X)
        if rank < X.shape[1]:
            raise DegenerateDesign(f"translog design has rank {rank} < {X.shape[1]} columns")
    return TranslogDesign(-np.log(yM), X, tuple(names), tuple(symbols), panel.dmus, panel.periods)


@dataclass(frozen=True)
class SfaParams:
    beta: np.ndarray
    sigma_sq: float
    gamma: float
    mu: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).copy())
        if not self.sigma_sq > 0:
            raise ValidationError("sigma_sq must be > 0")
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must lie strictly inside (0, 1)")

    @property
    def sigma_u_sq(self) -> float:
        return self.gamma * self.sigma_sq

    @property
    def sigma_v_sq(self) -> float:
        return (1.0 - self.gamma) * self.sigma_sq

    def to_vector(self, truncated: bool = True) -> np.ndarray:
        """Unconstrained vector ``[beta, log sigma^2, logit gamma, (mu,) eta]``."""
        tail = [np.log(self.sigma_sq), logit(self.gamma)]
        tail += [self.mu, self.eta] if truncated else [self.eta]
        return np.concatenate([self.beta, tail])

    @classmethod
    def from_vector(cls, theta, n_coef: int, truncated: bool = True) -> "SfaParams":
        theta = np.asarray(theta, dtype=float)
        s2 = float(np.exp(theta[n_coef]))
        g = float(np.clip(expit(theta[n_coef + 1]), 1e-300, 1 - 1e-16))
        if truncated:
            return cls(theta[:n_coef], s2, g, float(theta[n_coef + 2]), float(theta[n_coef + 3]))
        return cls(theta[:n_coef], s2, g, 0.0, float(theta[n_coef + 2]))


def decay(eta: float, n_periods: int) -> np.ndarray:
    """``exp(-eta (t - T))`` for t = 1..T; equals 1 in the last period."""
    t = np.arange(1, n_periods + 1)
    return np.exp(-eta * (t - n_periods))


def _mills(z):
    """phi(z) / Phi(z), stable for large negative z."""
    return np.exp(stats.norm.logpdf(z) - log_ndtr(z))


def _as_vector(params, n_coef, truncated):
    if isinstance(params, SfaParams):
        return params.to_vector(truncated)
    theta = np.asarray(params, dtype=float)
    if theta.size != n_coef + (4 if truncated else 3):
        raise ValidationError(f"parameter vector has length {theta.size}, expected "
                              f"{n_coef + (4 if truncated else 3)}")
    return theta


def _loglik_and_grad(theta, X, r, N, T, truncated, want_grad=True):
    p = X.shape[1]
    beta = theta[:p]
    s2 = np.exp(theta[p])
    g = expit(theta[p + 1])
    mu, eta = (theta[p + 2], theta[p + 3]) if truncated else (0.0, theta[p + 2])
    U = g * s2
    V = (1.0 - g) * s2
    if not (np.isfinite(s2) and U > 0 and V > 0):
        raise NonFinite("variance parameters out of range")

    e = (X @ beta - r).reshape(N, T)
    tt = np.arange(1, T + 1) - T
    d = np.exp(-eta * tt)
    a = d @ d
    b = e @ d
    c = np.einsum("nt,nt->n", e, e)
    D = V + a * U
    sq = np.sqrt(D * V * U)
    z = (mu * V - b * U) / sq
    z0 = mu / np.sqrt(U)
    ll = (-0.5 * T * _LOG2PI - 0.5 * (T - 1) * np.log(V) - 0.5 * np.log(D) - c / (2 * V)
          + 0.5 * z ** 2 + log_ndtr(z)) - 0.5 * z0 ** 2 - log_ndtr(z0)
    total = float(np.sum(ll))
    if not np.isfinite(total):
        raise NonFinite("log-likelihood is not finite")
    if not want_grad:
        return total, None

    with np.errstate(over="ignore", invalid="ignore"):
        grad = _gradient(X, e, d, tt, a, b, c, D, sq, z, z0, U, V, mu, s2, g, T, truncated)
    if not np.all(np.isfinite(grad)):
        raise NonFinite("log-likelihood gradient is not finite")
    return total, grad


def _gradient(X, e, d, tt, a, b, c, D, sq, z, z0, U, V, mu, s2, g, T, truncated):
    Gz = z + _mills(z)
    Gz0 = z0 + _mills(z0)
    dl_db = -Gz * U / sq
    dl_dc = -0.5 / V
    dl_da = -0.5 * U / D - 0.5 * Gz * z * U / D
    dl_dmu = Gz * V / sq - Gz0 / np.sqrt(U)
    dl_dV = (-0.5 * (T - 1) / V - 0.5 / D + c / (2 * V ** 2)
             + Gz * (mu / sq - 0.5 * z * (V + D) / (D * V)))
    dl_dU = -0.5 * a / D + Gz * (-b / sq - 0.5 * z * (a * U + D) / (D * U)) + 0.5 * Gz0 * z0 / U

    w = dl_db[:, None] * d[None, :] + 2.0 * dl_dc * e
    g_beta = X.T @ w.reshape(-1)
    dd = -tt * d
    g_eta = np.sum(dl_da) * 2.0 * (d @ dd) + np.sum(dl_db * (e @ dd))
    sV, sU = np.sum(dl_dV), np.sum(dl_dU)
    g_s = sV * V + sU * U
    g_g = (sU - sV) * s2 * g * (1.0 - g)
    tail = [g_s, g_g] + ([np.sum(dl_dmu), g_eta] if truncated else [g_eta])
    return np.concatenate([g_beta, tail])


def loglik(params, design: TranslogDesign, truncated: bool = True) -> float:
    """Panel log-likelihood at ``params`` (``SfaParams`` or unconstrained vector)."""
    theta = _as_vector(params, design.n_coef, truncated)
    N, T = design.structure
    return _loglik_and_grad(theta, design.X, design.response, N, T, truncated, False)[0]


def grad_loglik(params, design: TranslogDesign, truncated: bool = True) -> np.ndarray:
    """Analytic gradient with respect to the unconstrained vector."""
    theta = _as_vector(params, design.n_coef, truncated)
    N, T = design.structure
    return _loglik_and_grad(theta, design.X, design.response, N, T, truncated)[1]


def conditional_posterior(params: SfaParams, design: TranslogDesign):
    """Per-DMU ``(mu_star, sigma_star)`` of ``u_i`` given its residuals."""
    N, T = design.structure
    e = (design.X @ params.beta - design.response).reshape(N, T)
    d = decay(params.eta, T)
    U, V = params.sigma_u_sq, params.sigma_v_sq
    D = V + (d @ d) * U
    mu_star = (params.mu * V - (e @ d) * U) / D
    sigma_star = np.sqrt(V * U / D)
    return mu_star, np.full(N, sigma_star)


def predict_te(params: SfaParams, design: TranslogDesign) -> np.ndarray:
    """``E[exp(-u_it) | e_i]`` as an ``(n_dmus, n_periods)`` array."""
    mu_star, s_star = conditional_posterior(params, design)
    d = decay(params.eta, design.n_periods)[None, :]
    ms, ss = mu_star[:, None], s_star[:, None]
    log_te = (-d * ms + 0.5 * d ** 2 * ss ** 2
              + log_ndtr(ms / ss - d * ss) - log_ndtr(ms / ss))
    return np.exp(log_te)


def predict_u(params: SfaParams, design: TranslogDesign) -> np.ndarray:
    """``E[u_it | e_i]``."""
    mu_star, s_star = conditional_posterior(params, design)
    d = decay(params.eta, design.n_periods)[None, :]
    z = mu_star / s_star
    return d * (mu_star + s_star * _mills(z))[:, None]


@dataclass(frozen=True)
class Convergence:
    iterations: int
    grad_norm: float
    restarts: int
    converged_starts: int
    seconds: float
    trace: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class SfaFit:
    params: SfaParams
    names: tuple[str, ...]
    se: dict
    loglik: float
    te: np.ndarray
    convergence: Convergence
    dmus: tuple[str, ...]
    periods: tuple[int, ...]
    truncated: bool = True
    cov: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_obs(self) -> int:
        return self.te.size

    def coef_table(self) -> pd.DataFrame:
        """Frontier coefficients and variance parameters with z-test stars."""
        est = list(self.params.beta) + [self.params.sigma_sq, self.params.gamma]
        names = list(self.names) + ["sigma2", "gamma"]
        ses = list(self.se["beta"]) + [self.se["sigma_sq"], self.se["gamma"]]
        if self.truncated:
            est.append(self.params.mu); names.append("mu"); ses.append(self.se["mu"])
        est.append(self.params.eta); names.append("eta"); ses.append(self.se["eta"])
        est, ses = np.asarray(est), np.asarray(ses)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = est / ses
        p = 2 * stats.norm.sf(np.abs(z))
        table = pd.DataFrame({"Parameter": names, "Estimate": est, "Est. Error": ses,
                              "z": z, "p": p, "stars": [stars(v) for v in p]})
        footer = pd.DataFrame({"Parameter": ["Log-likelihood", "N obs"],
                               "Estimate": [self.loglik, float(self.n_obs)],
                               "Est. Error": np.nan, "z": np.nan, "p": np.nan, "stars": ""})
        return pd.concat([table, footer], ignore_index=True)

    def te_table(self) -> pd.DataFrame:
        return score_table(self.te, self.dmus, self.periods)


def stars(pvalue: float) -> str:
    if not np.isfinite(pvalue):
        return ""
    return "***" if pvalue < 0.01 else "**" if pvalue < 0.05 else "*" if pvalue < 0.10 else ""


@dataclass(frozen=True)
class FitOptions:
    starts: int = 5
    tol: float = 1e-6
    max_iter: int = 500
    ftol: float = 1e-9
    truncated: bool = True
    seed: int = 0
    strict: bool = True


def numeric_hessian(grad, theta, h=1e-5):
    """Central differences of an analytic gradient, symmetrized."""
    n = theta.size
    H = np.empty((n, n))
    for j in range(n):
        step = h * max(1.0, abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += step
        tm[j] -= step
        H[:, j] = (grad(tp) - grad(tm)) / (2 * step)
    return 0.5 * (H + H.T)


def _ols(X, r):
    beta, *_ = np.linalg.lstsq(X, r, rcond=None)
    resid = r - X @ beta
    return beta, resid


def _start_vectors(design, opts):
    X, r = design.X, design.response
    beta, resid = _ols(X, r)
    s2 = max(resid.var(), 1e-8)
    su = np.sqrt(0.5 * s2)
    base_beta = beta.copy()
    # frontier intercept sits below the OLS line by the mean of u
    base_beta[0] -= su * np.sqrt(2 / np.pi)
    tail = [np.log(s2), 0.0] + ([0.0, 0.0] if opts.truncated else [0.0])
    starts = [np.concatenate([base_beta, tail])]
    rng = stream(opts.seed, 0x5FA)
    for _ in range(max(opts.starts - 1, 0)):
        b = base_beta + rng.normal(0.0, 0.05, beta.size) * (np.abs(base_beta) + 0.05)
        t = [np.log(s2) + rng.normal(0, 0.3), logit(rng.uniform(0.2, 0.9))]
        t += ([rng.normal(0, su), rng.normal(0, 0.05)] if opts.truncated else [rng.normal(0, 0.05)])
        starts.append(np.concatenate([b, t]))
    return starts


def _maximize(f_and_g, grad_nat, to_nat, x0, opts):
    """BFGS on the reparameterized vector followed by Newton polishing.

    Returns ``(x, loglik, grad_norm, iterations, trace, converged)``; the
    trace holds the log-likelihood at every accepted iterate.
    """
    trace = []

    def neg(x):
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                ll, gr = f_and_g(x)
        except NonFinite:
            # an overshooting line-search probe; report it as infinitely bad
            return np.inf, np.zeros_like(x)
        return -ll, -gr

    try:
        trace.append(f_and_g(x0)[0])
        res = optimize.minimize(neg, x0, jac=True, method="BFGS",
                                options={"gtol": opts.tol * 1e-2, "maxiter": opts.max_iter},
                                callback=lambda xk: trace.append(f_and_g(xk)[0]))
    except (NonFinite, FloatingPointError, np.linalg.LinAlgError):
        return x0, -np.inf, np.inf, 0, tuple(trace), False
    x = res.x
    ll, _ = f_and_g(x)
    it = int(res.nit)
    gnorm = float(np.linalg.norm(grad_nat(x)))

    prev = ll
    for _ in range(25):
        if gnorm < opts.tol:
            break
        H = numeric_hessian(lambda z: f_and_g(z)[1], x)
        try:
            w = np.linalg.eigvalsh(H)
            if w.max() >= 0:
                break
            step = np.linalg.solve(H, -f_and_g(x)[1])
        except np.linalg.LinAlgError:
            break
        lam, accepted = 1.0, False
        while lam > 1e-6:
            try:
                cand_ll = f_and_g(x + lam * step)[0]
            except NonFinite:
                cand_ll = -np.inf
            if cand_ll >= ll - 1e-12 * abs(ll):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        x = x + lam * step
        prev, ll = ll, max(cand_ll, ll)
        trace.append(ll)
        it += 1
        gnorm = float(np.linalg.norm(grad_nat(x)))
        if abs(ll - prev) <= opts.ftol * max(1.0, abs(ll)) and gnorm < opts.tol:
            break
    return x, ll, gnorm, it, tuple(trace), gnorm < opts.tol


def fit_sfa(design: TranslogDesign, options: FitOptions | None = None, **kw) -> SfaFit:
    """Maximum likelihood with multiple starts; keeps the best converged start.

    Coefficients are optimized after an orthogonalizing change of basis
    (``X = Q R``), which leaves the likelihood unchanged but removes the
    strong collinearity of translog columns.
    """
    opts = replace(options or FitOptions(), **kw)
    t0 = time.perf_counter()
    N, T = design.structure
    X, r = design.X, design.response
    p = X.shape[1]
    n = X.shape[0]
    Q, R = np.linalg.qr(X)
    if np.min(np.abs(np.diag(R))) < 1e-10 * np.max(np.abs(np.diag(R))):
        raise DegenerateDesign("design matrix is rank deficient")
    Qs, Rs = Q * np.sqrt(n), R / np.sqrt(n)

    def to_nat(x):
        return np.concatenate([np.linalg.solve(Rs, x[:p]), x[p:]])

    def to_work(theta):
        return np.concatenate([Rs @ theta[:p], theta[p:]])

    def f_and_g(x):
        ll, g = _loglik_and_grad(x, Qs, r, N, T, opts.truncated)
        return ll, g

    def grad_nat(x):
        return _loglik_and_grad(to_nat(x), X, r, N, T, opts.truncated)[1]

    best = None
    n_conv, iters, all_trace = 0, 0, ()
    for start in _start_vectors(design, opts):
        x, ll, gnorm, it, trace, ok = _maximize(f_and_g, grad_nat, to_nat, to_work(start), opts)
        iters += it
        n_conv += ok
        cand = (ok, ll, x, gnorm, trace)
        if best is None or (ok, ll) > (best[0], best[1]):
            best = cand
    ok, ll, x, gnorm, trace = best
    if not np.isfinite(ll) or (opts.strict and not ok):
        hint = ""
        if opts.truncated and np.isfinite(ll):
            est = SfaParams.from_vector(to_nat(x), p, True)
            if abs(est.mu) > 20 * np.sqrt(est.sigma_u_sq):
                hint = ("; mu is running to the boundary (no interior maximum), "
                        "the half-normal model (truncated=False) may be identified")
        raise NonConvergence(f"no start reached gradient norm < {opts.tol} "
                             f"(best {gnorm:.3g}, loglik {ll:.6g}){hint}")
    theta = to_nat(x)
    params = SfaParams.from_vector(theta, p, opts.truncated)
    cov, se = _standard_errors(theta, design, opts.truncated)
    conv = Convergence(iters, gnorm, opts.starts, n_conv, time.perf_counter() - t0, trace)
    return SfaFit(params, design.names, se, ll, predict_te(params, design), conv,
                  design.dmus, design.periods, opts.truncated, cov)


def _standard_errors(theta, design, truncated):
    """Inverse observed information, mapped to ``sigma^2`` and ``gamma`` by the delta method."""
    p = design.n_coef
    H = numeric_hessian(lambda z: grad_loglik(z, design, truncated), theta)
    try:
        cov = np.linalg.inv(-H)
        var = np.diag(cov).copy()
        var[var < 0] = np.nan
    except np.linalg.LinAlgError:
        cov = None
        var = np.full(theta.size, np.nan)
    sd = np.sqrt(var)
    s2 = np.exp(theta[p])
    g = expit(theta[p + 1])
    se = {
        "beta": sd[:p],
        "sigma_sq": sd[p] * s2,
        "gamma": sd[p + 1] * g * (1 - g),
        "mu": sd[p + 2] if truncated else np.nan,
        "eta": sd[-1],
    }
    return cov, se


def fit_panel(panel: PanelDataset, spec: FrontierSpec, options: FitOptions | None = None,
              **kw) -> SfaFit:
    return fit_sfa(build_design(panel, spec), options, **kw)
