"""Synthetic panels with known frontier, inefficiency and score determinants.

Each generator is a pure function of its seed. Random streams are split per
DMU (``(seed, tag, dmu_index)``), so changing the panel length of one DMU
never shifts the draws of another.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .errors import RejectionStall, ValidationError
from .panel import FrontierSpec, PanelDataset, Variable
from .rng import stream
from .sfa import decay, n_translog_terms, translog_columns

_TAG_SFA, _TAG_DEA, _TAG_SCORES, _TAG_AENA = 11, 12, 13, 14


def default_translog(n_outputs: int, n_inputs: int) -> np.ndarray:
    """A well-behaved distance function: Cobb-Douglas plus mild curvature."""
    m, k = n_outputs - 1, n_inputs
    coef = [0.5]
    coef += [0.3] * m
    coef += [-0.3] * k
    coef += [0.05] * m
    coef += [-0.02] * (m * (m - 1) // 2)
    coef += [-0.04] * k
    coef += [0.02] * (k * (k - 1) // 2)
    coef += [0.01] * (k * m)
    return np.array(coef)


@dataclass(frozen=True)
class SynthSpec:
    n_dmus: int = 50
    n_periods: int = 6
    n_outputs: int = 3
    n_inputs: int = 3
    beta: np.ndarray | None = None
    sigma_v: float = 0.1
    sigma_u: float = 0.3
    mu: float = 0.2
    eta: float = 0.05
    seed: int = 0
    input_bounds: tuple[float, float] = (1.0, 100.0)
    ratio_bounds: tuple[float, float] = (0.5, 2.0)
    first_period: int = 1

    def __post_init__(self):
        if min(self.n_dmus, self.n_periods, self.n_outputs, self.n_inputs) < 1:
            raise ValidationError("dimensions must be positive")
        if not (self.sigma_v > 0 and self.sigma_u > 0):
            raise ValidationError("sigma_v and sigma_u must be > 0")
        for lo, hi in (self.input_bounds, self.ratio_bounds):
            if not 0 < lo < hi:
                raise ValidationError("bounds must satisfy 0 < lo < hi")
        beta = default_translog(self.n_outputs, self.n_inputs) if self.beta is None else self.beta
        beta = np.asarray(beta, dtype=float)
        if beta.size != n_translog_terms(self.n_outputs, self.n_inputs):
            raise ValidationError("beta length does not match the translog for these dimensions")
        object.__setattr__(self, "beta", beta)

    @property
    def gamma(self) -> float:
        return self.sigma_u ** 2 / (self.sigma_u ** 2 + self.sigma_v ** 2)

    @property
    def sigma_sq(self) -> float:
        return self.sigma_u ** 2 + self.sigma_v ** 2

    def output_names(self):
        return [f"Y{m + 1}" for m in range(self.n_outputs)]

    def input_names(self):
        return [f"X{k + 1}" for k in range(self.n_inputs)]

    def frontier(self) -> FrontierSpec:
        return FrontierSpec(tuple(self.output_names()), tuple(self.input_names()), "Y1")


@dataclass(frozen=True)
class SynthTruth:
    te: np.ndarray
    u: np.ndarray
    params: dict = field(default_factory=dict)

    def frame(self, dmus, periods, column="te") -> pd.DataFrame:
        idx = pd.MultiIndex.from_product([list(dmus), list(periods)], names=["dmu", "year"])
        return pd.DataFrame({column: self.te.reshape(-1)}, index=idx).reset_index()


def truncated_normal_rejection(rng, mean, sd, lower=-np.inf, upper=np.inf, min_rate=1e-4):
    """Draw ``N(mean, sd^2)`` restricted to ``[lower, upper]`` by rejection.

    Returns ``(draws, acceptance_rate)``. Observations whose acceptance
    probability is below ``min_rate`` raise ``RejectionStall`` up front.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), mean.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), mean.shape)
    prob = stats.norm.cdf((upper - mean) / sd) - stats.norm.cdf((lower - mean) / sd)
    if np.any(prob < min_rate):
        raise RejectionStall(f"acceptance probability {prob.min():.2e} below {min_rate:g}")
    out = np.empty(mean.shape)
    todo = np.arange(mean.size)
    flat_m, flat_s = mean.reshape(-1), sd.reshape(-1)
    flat_lo, flat_hi = lower.reshape(-1), upper.reshape(-1)
    res = out.reshape(-1)
    tried = accepted = 0
    while todo.size:
        draw = rng.normal(flat_m[todo], flat_s[todo])
        ok = (draw >= flat_lo[todo]) & (draw <= flat_hi[todo])
        res[todo[ok]] = draw[ok]
        tried += todo.size
        accepted += int(ok.sum())
        todo = todo[~ok]
        if tried > 1e4 and accepted / tried < min_rate:
            raise RejectionStall(f"acceptance rate {accepted / tried:.2e} below {min_rate:g}")
    return out, accepted / max(tried, 1)


def _panel(dmus, periods, outputs: dict, inputs: dict, covariates: dict | None = None,
           units: dict | None = None, deflate=()) -> PanelDataset:
    units = units or {}
    reg, vals = {}, {}
    for role, block in (("output", outputs), ("input", inputs), ("covariate", covariates or {})):
        for name, arr in block.items():
            reg[name] = Variable(name, role, units.get(name, ""), name in deflate)
            vals[name] = arr
    return PanelDataset(tuple(dmus), tuple(periods), reg, vals)


def gen_sfa_panel(spec: SynthSpec) -> tuple[PanelDataset, SynthTruth]:
    """Invert the translog so the distance-function identity holds exactly.

    Inputs and output ratios are log-uniform; ``u_i`` is drawn by rejection
    from its parent normal; the normalizing output ``Y1`` then follows from
    ``-ln Y1 = TL + u_it - v_it``.
    """
    N, T, M, K = spec.n_dmus, spec.n_periods, spec.n_outputs, spec.n_inputs
    lx = np.empty((N, T, K))
    ly = np.empty((N, T, M - 1))
    u_i = np.empty(N)
    v = np.empty((N, T))
    for i in range(N):
        rng = stream(spec.seed, _TAG_SFA, i)
        lx[i] = rng.uniform(*np.log(spec.input_bounds), size=(T, K))
        ly[i] = rng.uniform(*np.log(spec.ratio_bounds), size=(T, M - 1))
        u_i[i] = truncated_normal_rejection(rng, np.array([spec.mu]), spec.sigma_u, lower=0.0)[0][0]
        v[i] = rng.normal(0.0, spec.sigma_v, size=T)
    X, _, _ = translog_columns(ly.reshape(N * T, M - 1), lx.reshape(N * T, K),
                               [f"Y{m + 2}'" for m in range(M - 1)], spec.input_names())
    u = u_i[:, None] * decay(spec.eta, T)[None, :]
    neg_log_y1 = (X @ spec.beta).reshape(N, T) + u - v
    y1 = np.exp(-neg_log_y1)
    outputs = {"Y1": y1}
    for m in range(M - 1):
        outputs[f"Y{m + 2}"] = np.exp(ly[:, :, m]) * y1
    inputs = {f"X{k + 1}": np.exp(lx[:, :, k]) for k in range(K)}
    dmus = [f"D{i + 1:03d}" for i in range(N)]
    periods = list(range(spec.first_period, spec.first_period + T))
    truth = SynthTruth(np.exp(-u), u, {
        "beta": spec.beta, "sigma_sq": spec.sigma_sq, "gamma": spec.gamma,
        "mu": spec.mu, "eta": spec.eta, "u_i": u_i,
    })
    return _panel(dmus, periods, outputs, inputs), truth


def gen_dea_panel(n_dmus: int = 10, n_periods: int = 1, n_outputs: int = 1, n_inputs: int = 1,
                  n_efficient: int | None = None, contraction: tuple[float, float] = (0.4, 0.95),
                  seed: int = 0, input_bounds: tuple[float, float] = (1.0, 100.0),
                  contractions: np.ndarray | None = None) -> tuple[PanelDataset, SynthTruth]:
    """Panel whose VRS output-oriented scores are known exactly.

    Efficient DMUs sit on ``y = f(x) d`` with ``f`` a concave Cobb-Douglas
    and ``d`` a positive unit direction; by concavity no convex combination
    of them dominates another. Each inefficient DMU copies the inputs of an
    efficient one and scales its outputs by a stored factor, which is then
    its true score.
    """
    n_eff = max(2, n_dmus // 2) if n_efficient is None else n_efficient
    if not 1 <= n_eff <= n_dmus:
        raise ValidationError("need 1 <= n_efficient <= n_dmus")
    expo = np.full(n_inputs, 0.8 / n_inputs)
    Y = np.empty((n_dmus, n_periods, n_outputs))
    Xs = np.empty((n_dmus, n_periods, n_inputs))
    theta = np.ones((n_dmus, n_periods))
    for t in range(n_periods):
        rng = stream(seed, _TAG_DEA, t)
        x = np.exp(rng.uniform(*np.log(input_bounds), size=(n_eff, n_inputs)))
        d = np.abs(rng.normal(size=(n_eff, n_outputs))) + 0.2
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        f = np.prod(x ** expo, axis=1)
        Xs[:n_eff, t] = x
        Y[:n_eff, t] = f[:, None] * d
        n_ineff = n_dmus - n_eff
        if n_ineff:
            src = rng.integers(0, n_eff, size=n_ineff)
            th = (contractions[n_eff:, t] if contractions is not None
                  else rng.uniform(*contraction, size=n_ineff))
            Xs[n_eff:, t] = x[src]
            Y[n_eff:, t] = th[:, None] * f[src, None] * d[src]
            theta[n_eff:, t] = th
    dmus = [f"U{i + 1:03d}" for i in range(n_dmus)]
    outputs = {f"Y{m + 1}": Y[:, :, m] for m in range(n_outputs)}
    inputs = {f"X{k + 1}": Xs[:, :, k] for k in range(n_inputs)}
    panel = _panel(dmus, range(1, n_periods + 1), outputs, inputs)
    return panel, SynthTruth(theta, -np.log(theta), {"n_efficient": n_eff})


def gen_truncated_scores(Z, delta, sigma: float, seed: int, upper: float = 1.0,
                         return_acceptance: bool = False):
    """Scores ``Z @ delta + e`` with ``e ~ N(0, sigma^2)`` restricted to keep scores <= ``upper``.

    ``Z`` carries its own intercept column.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    mean = Z @ np.asarray(delta, dtype=float)
    e, rate = truncated_normal_rejection(stream(seed, _TAG_SCORES), np.zeros_like(mean), sigma,
                                         upper=upper - mean)
    scores = mean + e
    return (scores, rate) if return_acceptance else scores


# -- bundled AENA-like sample -------------------------------------------------

# pooled means of outputs/inputs the bundled sample is scaled to
TARGET_MEANS = {
    "ATM": 47669.78, "SIZE": 73.66409, "NAR": 17.92023,
    "EMP": 9.548649, "RUNW": 3534.414, "TERM": 90938.5,
}
AENA_OUTPUTS = ("ATM", "SIZE", "NAR")
AENA_INPUTS = ("EMP", "RUNW", "TERM")
AENA_COVARIATES = ("ISLE", "HUB", "TOUR", "CONG", "LCC", "SUB", "EBITDA", "HSR", "HH",
                   "T11", "T12", "T13")
# a consumer-price-style index used to write nominal money columns
AENA_PRICE_INDEX = {2011: 100.0, 2012: 102.45, 2013: 103.89, 2014: 103.74}


def gen_aena_like(seed: int = 2011, sigma_u: float = 0.38, sigma_v: float = 0.15,
                  mu0: float = 0.0, size_spread: float = 0.5, hub_runways=(2.5, 2.0)):
    """38 airports x 2011-2014 resembling the published descriptive statistics.

    Returns ``(panel_frame, covariate_frame, truth)``. Money columns in the
    frames are nominal (inflated with ``AENA_PRICE_INDEX``) so that loading
    with deflation to 2011 recovers the real values. After generation each
    output/input is rescaled so its pooled real mean equals the published
    mean; both frontier methods are invariant to such rescaling.
    """
    n_hub, n_tour, n_reg = 2, 14, 22
    N, years = n_hub + n_tour + n_reg, [2011, 2012, 2013, 2014]
    T = len(years)
    kind = np.array(["hub"] * n_hub + ["tourist"] * n_tour + ["regional"] * n_reg)
    rng = stream(seed, _TAG_AENA, 0)

    isle = np.zeros(N, int)
    isle[n_hub:n_hub + 8] = 1
    isle[n_hub + n_tour:n_hub + n_tour + 3] = 1
    tour = (kind == "tourist").astype(int)
    hub = (kind == "hub").astype(int)
    cong = np.where(isle == 1, rng.integers(0, 2, N), np.minimum(rng.poisson(1.9, N), 5))
    cong[-2:] = 5
    hh = np.clip(rng.beta(1.6, 3.2, N) * 10000, 480, 9705)
    hh[hub == 1] = rng.uniform(2500, 3800, n_hub)
    lcc_p = np.where(tour == 1, 0.85, np.where(hub == 1, 0.5, 0.4))
    hsr = np.zeros((N, T), int)
    hsr_idx = rng.choice(np.flatnonzero(isle == 0), 8, replace=False)
    hsr[hsr_idx[:7]] = 1
    hsr[hsr_idx[7], 2:] = 1

    scale_mu = np.where(hub == 1, 3.4, np.where(tour == 1, 1.1, -0.2))
    ln_scale = scale_mu + rng.normal(0, np.where(hub == 1, 0.15, 0.75), N)

    # inputs: infrastructure fixed, staff cost drifting slightly
    ln_emp = 0.85 * ln_scale[:, None] + rng.normal(0, 0.25, N)[:, None] + rng.normal(0, 0.03, (N, T))
    ln_runw = np.repeat((0.30 * ln_scale + rng.normal(0, 0.15, N))[:, None], T, 1)
    ln_runw[hub == 1] += np.log(hub_runways)[:, None]
    ln_term = np.repeat((1.05 * ln_scale + rng.normal(0, 0.35, N))[:, None], T, 1)

    # output mix relative to ATM
    ln_size_r = (-0.75 * ln_scale + rng.normal(0, size_spread, N))[:, None] + rng.normal(0, 0.04, (N, T))
    ln_nar_r = (0.25 * ln_scale + rng.normal(0, 0.30, N))[:, None] + rng.normal(0, 0.06, (N, T))

    # inefficiency: BC92 decay with eta < 0 (efficiency erodes over the sample)
    eta = -0.03
    mu_i = mu0 + 0.06 * cong - 0.10 * tour + 0.12 * (hh / 10000) - 0.05 * isle
    u_i = np.empty(N)
    for i in range(N):
        u_i[i] = truncated_normal_rejection(stream(seed, _TAG_AENA, 100 + i), np.array([mu_i[i]]),
                                            sigma_u, lower=0.0)[0][0]
    u = u_i[:, None] * decay(eta, T)[None, :]
    v = rng.normal(0, sigma_v, (N, T))

    beta_y = np.array([0.25, 0.20])
    beta_x = np.array([-0.55, -0.15, -0.30])
    neg_ln_atm = (1.0 + ln_size_r * beta_y[0] + ln_nar_r * beta_y[1]
                  + ln_emp * beta_x[0] + ln_runw * beta_x[1] + ln_term * beta_x[2]
                  + 0.02 * ln_emp ** 2 + u - v)
    atm = np.exp(-neg_ln_atm)
    real = {
        "ATM": atm, "SIZE": np.exp(ln_size_r) * atm, "NAR": np.exp(ln_nar_r) * atm,
        "EMP": np.exp(ln_emp), "RUNW": np.exp(ln_runw), "TERM": np.exp(ln_term),
    }
    for k, target in TARGET_MEANS.items():
        real[k] = real[k] * (target / real[k].mean())
    real["ATM"] = np.round(real["ATM"])
    pax = np.round(real["SIZE"] * real["ATM"])
    real["SIZE"] = pax / real["ATM"]
    real["RUNW"] = np.round(real["RUNW"], 0)
    real["TERM"] = np.round(real["TERM"], 0)

    lcc = (rng.random((N, T)) < lcc_p[:, None]).astype(int)
    sub = np.clip(rng.lognormal(-0.6, 1.0, (N, T)) - 0.15, -0.26, None)
    ebitda = 2.1 * real["NAR"] - 3.5 + rng.normal(0, 1.5, (N, T))
    tdum = {f"T{y % 100}": np.tile((np.array(years) == y).astype(int), (N, 1)) for y in years[:-1]}

    dmus = [f"AP{i + 1:02d}" for i in range(N)]
    infl = np.array([AENA_PRICE_INDEX[y] / AENA_PRICE_INDEX[2011] for y in years])[None, :]

    def long(cols):
        idx = pd.MultiIndex.from_product([dmus, years], names=["dmu", "year"])
        return pd.DataFrame({k: np.asarray(v).reshape(-1) for k, v in cols.items()},
                            index=idx).reset_index()

    panel_df = long({
        "ATM": real["ATM"].astype(np.int64), "PAX": pax.astype(np.int64),
        "NAR": np.round(real["NAR"] * infl, 6), "EMP": np.round(real["EMP"] * infl, 6),
        "RUNW": real["RUNW"].astype(np.int64), "TERM": real["TERM"].astype(np.int64),
    })
    cov_df = long({
        "ISLE": np.repeat(isle[:, None], T, 1), "HUB": np.repeat(hub[:, None], T, 1),
        "TOUR": np.repeat(tour[:, None], T, 1), "CONG": np.repeat(cong[:, None], T, 1),
        "LCC": lcc, "SUB": np.round(sub * infl, 6), "EBITDA": np.round(ebitda * infl, 6),
        "HSR": hsr, "HH": np.round(np.repeat(hh[:, None], T, 1), 3), **tdum,
        "NARPAX": np.round(real["NAR"] * 1e6 / pax, 4),
    })
    truth = SynthTruth(np.exp(-u), u, {"eta": eta, "sigma_u": sigma_u, "sigma_v": sigma_v, "u_i": u_i})
    return panel_df, cov_df, truth


def aena_like_config(panel="aena_like_panel.csv", covariates="aena_like_covariates.csv",
                     prices="aena_like_prices.csv") -> dict:
    units = {"ATM": "movements", "SIZE": "pax/movement", "NAR": "EUR mill.",
             "EMP": "EUR mill.", "RUNW": "meters", "TERM": "m2", "SUB": "EUR mill.",
             "EBITDA": "EUR mill.", "CONG": "units"}
    money = {"NAR", "EMP", "SUB", "EBITDA"}
    variables = {}
    for name in AENA_OUTPUTS:
        variables[name] = {"role": "output", "units": units[name], "deflate": name in money}
    for name in AENA_INPUTS:
        variables[name] = {"role": "input", "units": units[name], "deflate": name in money}
    for name in AENA_COVARIATES:
        variables[name] = {"role": "covariate", "units": units.get(name, ""), "deflate": name in money}
    return {
        "panel": panel,
        "covariates": covariates,
        "price_index": prices,
        "base_year": 2011,
        "schema": {"id_column": "dmu", "period_column": "year", "variables": variables},
        "frontier": {"outputs": list(AENA_OUTPUTS), "inputs": list(AENA_INPUTS),
                     "normalizing_output": "ATM", "rts": "VRS"},
        "second_stage": {"covariates": list(AENA_COVARIATES)},
        "methods": {"sfa": True, "dea": True, "tobit": True, "simar_wilson": True},
        # mu is weakly identified on 38 x 4 panels; fit the half-normal case
        "sfa": {"starts": 5, "truncated": False},
        "bootstrap": {"algorithm": 2, "l1": 100, "l2": 1000, "level": 0.95},
        "seed": 20110101,
    }


def write_aena_like(out_dir, seed: int = 2011, **kw) -> dict[str, Path]:
    """Write the bundled sample (panel, covariates, price index, truth, config)."""
    import yaml

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel_df, cov_df, truth = gen_aena_like(seed, **kw)
    paths = {
        "panel": out / "aena_like_panel.csv",
        "covariates": out / "aena_like_covariates.csv",
        "prices": out / "aena_like_prices.csv",
        "truth": out / "aena_like_truth.csv",
        "config": out / "aena_like.yaml",
    }
    panel_df.to_csv(paths["panel"], index=False, lineterminator="\n")
    cov_df.to_csv(paths["covariates"], index=False, lineterminator="\n")
    pd.DataFrame({"year": list(AENA_PRICE_INDEX), "index": list(AENA_PRICE_INDEX.values())}).to_csv(
        paths["prices"], index=False, lineterminator="\n")
    dmus = panel_df["dmu"].unique()
    years = sorted(panel_df["year"].unique())
    truth.frame(dmus, years).to_csv(paths["truth"], index=False, lineterminator="\n",
                                    float_format="%.10g")
    with open(paths["config"], "w") as fh:
        yaml.safe_dump(aena_like_config(), fh, sort_keys=False)
    return paths


def write_synth_panel(panel: PanelDataset, truth: SynthTruth, out_dir, stem: str = "synth",
                      truth_column: str = "te") -> dict[str, Path]:
    """Panel CSV in the loader's schema plus a sidecar truth CSV."""
    import yaml

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"panel": out / f"{stem}_panel.csv", "truth": out / f"{stem}_truth.csv",
             "config": out / f"{stem}.yaml"}
    panel.frame().to_csv(paths["panel"], index=False, lineterminator="\n", float_format="%.17g")
    truth.frame(panel.dmus, panel.periods, truth_column).to_csv(
        paths["truth"], index=False, lineterminator="\n", float_format="%.17g")
    cfg = {
        "panel": paths["panel"].name,
        "schema": {"variables": {n: {"role": v.role} for n, v in panel.registry.items()}},
        "frontier": {"outputs": panel.outputs, "inputs": panel.inputs,
                     "normalizing_output": panel.outputs[0], "rts": "VRS"},
        "methods": {"sfa": True, "dea": True, "tobit": False, "simar_wilson": False},
        "seed": 0,
    }
    with open(paths["config"], "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)
    return paths
