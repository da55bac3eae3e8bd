import numpy as np
import pytest
from scipy import stats

from frontierkit.errors import DegenerateDesign, NonConvergence, ValidationError
from frontierkit.panel import FrontierSpec, load_panel
from frontierkit.report import RunConfig, bundled_config_path
from frontierkit.sfa import (FitOptions, SfaParams, build_design, decay, fit_panel, fit_sfa,
                             grad_loglik, loglik, n_translog_terms, predict_te)
from frontierkit.synth import (AENA_PRICE_INDEX, SynthSpec, aena_like_config, gen_aena_like,
                               gen_sfa_panel)

COEF_NAMES = ["Constant", "SIZE'", "NAR'", "EMP", "RUNW", "TERM", "SIZE'2", "NAR'2", "SIZE' x NAR'",
          "EMP2", "RUNW2", "TERM2", "EMP x RUNW", "EMP x TERM", "RUNW x TERM", "EMP x SIZE'",
          "EMP x NAR'", "RUNW x SIZE'", "RUNW x NAR'", "TERM x SIZE'", "TERM x NAR'"]


@pytest.fixture(scope="module")
def bundled():
    cfg = RunConfig.from_yaml(bundled_config_path())
    return cfg.load(), cfg.frontier


@pytest.fixture(scope="module")
def synth_fit():
    spec = SynthSpec(seed=7)
    panel, truth = gen_sfa_panel(spec)
    design = build_design(panel, spec.frontier())
    return spec, panel, truth, design, fit_sfa(design)


def test_term_counts():
    assert n_translog_terms(3, 3) == 21
    assert n_translog_terms(2, 1) == 6


def test_translog_parameter_list(bundled):
    panel, frontier = bundled
    assert list(build_design(panel, frontier).names) == COEF_NAMES


def test_homogeneity_per_row(bundled):
    panel, frontier = bundled
    base = build_design(panel, frontier)
    c = 3.7
    scaled = panel.replace({o: panel.get(o) * c for o in frontier.outputs})
    d2 = build_design(scaled, frontier)
    np.testing.assert_allclose(d2.response - base.response, -np.log(c), atol=1e-12, rtol=0)
    np.testing.assert_allclose(d2.X, base.X, atol=1e-12, rtol=0)


def test_normalizing_swap(bundled):
    panel, frontier = bundled
    a = build_design(panel, frontier)
    b = build_design(panel, FrontierSpec(frontier.outputs, frontier.inputs, "NAR"))
    np.testing.assert_allclose(b.response - a.response,
                               np.log(panel.flat("ATM") / panel.flat("NAR")), atol=1e-12)


def test_symmetry_one_column_per_pair(bundled):
    panel, frontier = bundled
    names = build_design(panel, frontier).names
    assert "NAR' x SIZE'" not in names and "SIZE' x NAR'" in names
    assert len(set(names)) == len(names)


def test_rank_deficient_design():
    panel, _ = gen_sfa_panel(SynthSpec(n_dmus=10, n_periods=3, n_outputs=2, n_inputs=2))
    panel = panel.replace({"X2": panel.get("X1") * 2.0})
    with pytest.raises(DegenerateDesign):
        build_design(panel, FrontierSpec(("Y1", "Y2"), ("X1", "X2")))


def test_params_validation():
    with pytest.raises(ValidationError):
        SfaParams(np.zeros(2), -1.0, 0.5)
    with pytest.raises(ValidationError):
        SfaParams(np.zeros(2), 1.0, 1.0)


def test_gamma_to_zero_is_gaussian_regression(synth_fit):
    spec, _, _, design, _ = synth_fit
    beta = spec.beta
    s2 = 0.05
    ll = loglik(SfaParams(beta, s2, 1e-24, 0.0, 0.0), design, truncated=False)
    resid = design.X @ beta - design.response
    gauss = stats.norm.logpdf(resid, scale=np.sqrt(s2)).sum()
    assert ll == pytest.approx(gauss, rel=1e-8)


def test_eta_zero_permutation_invariance(synth_fit):
    spec, _, _, design, _ = synth_fit
    N, T = design.structure
    params = SfaParams(spec.beta, 0.1, 0.7, 0.1, 0.0)
    perm = np.random.default_rng(0).permutation(T)
    idx = (np.arange(N)[:, None] * T + perm[None, :]).reshape(-1)
    from dataclasses import replace
    shuffled = replace(design, X=design.X[idx], response=design.response[idx])
    assert loglik(params, shuffled) == pytest.approx(loglik(params, design), rel=1e-12)


def test_truth_beats_perturbations():
    spec = SynthSpec(n_dmus=200, n_periods=6, seed=3)
    panel, _ = gen_sfa_panel(spec)
    design = build_design(panel, spec.frontier())
    truth = SfaParams(spec.beta, spec.sigma_sq, spec.gamma, spec.mu, spec.eta).to_vector()
    ll0 = loglik(truth, design)
    rng = np.random.default_rng(1)
    for _ in range(20):
        step = rng.normal(size=truth.size)
        step *= 0.25 / np.linalg.norm(step)
        assert loglik(truth + step, design) < ll0


def test_gradient_matches_finite_differences(synth_fit):
    _, _, _, design, fit = synth_fit
    rng = np.random.default_rng(2)
    base = fit.params.to_vector()
    for _ in range(5):
        theta = base + rng.normal(0, 0.1, base.size)
        g = grad_loglik(theta, design)
        h = 1e-5
        num = np.array([(loglik(theta + h * e, design) - loglik(theta - h * e, design)) / (2 * h)
                        for e in np.eye(theta.size)])
        assert np.max(np.abs(g - num)) <= 1e-6 * max(1.0, np.max(np.abs(num)))


def test_stationary_point(synth_fit):
    _, _, _, design, fit = synth_fit
    assert np.linalg.norm(grad_loglik(fit.params, design)) < 1e-6
    assert fit.convergence.grad_norm < 1e-6


def test_gamma_gradient_changes_sign(synth_fit):
    _, _, _, design, fit = synth_fit
    theta = fit.params.to_vector()
    j = design.n_coef + 1
    lo, hi = theta.copy(), theta.copy()
    lo[j] -= 0.2
    hi[j] += 0.2
    assert grad_loglik(lo, design)[j] > 0 > grad_loglik(hi, design)[j]


def test_monotone_trace(synth_fit):
    trace = np.array(synth_fit[4].convergence.trace)
    assert trace.size > 1 and np.all(np.diff(trace) >= -1e-9 * np.abs(trace[:-1]))


def test_coef_table_layout(synth_fit):
    tab = synth_fit[4].coef_table()
    assert {"Estimate", "Est. Error"} <= set(tab.columns)
    assert "Log-likelihood" in set(tab["Parameter"])
    assert list(tab["Parameter"][-6:]) == ["sigma2", "gamma", "mu", "eta", "Log-likelihood", "N obs"]


def test_te_table_layout(synth_fit):
    wide = synth_fit[4].te_table()
    assert list(wide.columns)[-2:] == ["Mean", "%Var"]
    s = wide.drop(columns=["Mean", "%Var"]).to_numpy()
    np.testing.assert_allclose(wide["%Var"], (s[:, -1] - s[:, 0]) / s[:, 0] * 100, atol=1e-9)


def test_te_strictly_inside_unit_interval(synth_fit):
    te = synth_fit[4].te
    assert np.all((te > 0) & (te < 1))


def test_te_rank_and_trend(synth_fit):
    te = synth_fit[4].te
    ranks = np.argsort(np.argsort(-te, axis=0), axis=0)
    assert np.all(ranks == ranks[:, [0]])
    trend = np.sign(np.diff(te, axis=1))
    assert np.all(trend == np.sign(synth_fit[4].params.eta))


@pytest.mark.parametrize("eta", [0.1, 0.0, -0.1])
def test_predicted_te_follows_eta(synth_fit, eta):
    _, _, _, design, fit = synth_fit
    from dataclasses import replace
    te = predict_te(replace(fit.params, eta=eta), design)
    d = np.diff(te, axis=1)
    if eta > 0:
        assert np.all(d > 0)
    elif eta < 0:
        assert np.all(d < 0)
    else:
        assert np.allclose(d, 0, atol=1e-15)


def test_pure_noise_data():
    spec = SynthSpec(sigma_u=1e-8, sigma_v=0.1, mu=0.0, seed=11)
    panel, truth = gen_sfa_panel(spec)
    assert np.allclose(truth.te, 1.0)
    design = build_design(panel, spec.frontier())
    fit = fit_sfa(design, truncated=False, strict=False)
    assert fit.params.gamma < 0.05
    beta_ols, *_ = np.linalg.lstsq(design.X, design.response, rcond=None)
    se = fit.se["beta"]
    assert np.all(np.abs(fit.params.beta[1:] - beta_ols[1:]) <= 2 * se[1:])


def test_boundary_reported_as_nonconvergence():
    cfg = aena_like_config()
    pdf, cdf, _ = gen_aena_like(2011, sigma_u=0.3, sigma_v=0.1, mu0=0.1, hub_runways=(2.5, 2.0))
    panel = load_panel(pdf, cfg["schema"], covariates=cdf, price_index=AENA_PRICE_INDEX,
                       base_year=2011)
    with pytest.raises(NonConvergence, match="boundary"):
        fit_panel(panel, FrontierSpec(("ATM", "SIZE", "NAR"), ("EMP", "RUNW", "TERM")))


def test_decay_last_period_is_one():
    d = decay(0.3, 5)
    assert d[-1] == 1.0 and np.all(np.diff(d) < 0)


def test_fit_is_deterministic(synth_fit):
    _, _, _, design, fit = synth_fit
    again = fit_sfa(design)
    assert np.array_equal(again.params.beta, fit.params.beta)
    assert again.loglik == fit.loglik
