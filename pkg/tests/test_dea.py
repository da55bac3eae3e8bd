import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from frontierkit.dea import (DeaProblem, build_lp, check_solution, dea_all, dea_phi, dea_score,
                             solve_problem)
from frontierkit.errors import ValidationError
from frontierkit.lp import highs_backend
from frontierkit.panel import FrontierSpec, PanelDataset, Variable, load_panel
from frontierkit.synth import gen_dea_panel

from oracles import grid_phi_edges, grid_phi_full

HAND_Y = np.array([[1.0], [4.0], [3.0]])
HAND_X = np.array([[1.0], [2.0], [3.0]])


def panel_from(Y, X, periods=(1,)):
    """Panel with outputs Y (N,T,M) and inputs X (N,T,K)."""
    Y, X = np.asarray(Y, float), np.asarray(X, float)
    if Y.ndim == 2:
        Y, X = Y[:, None, :], X[:, None, :]
    reg, vals = {}, {}
    for m in range(Y.shape[2]):
        reg[f"Y{m}"] = Variable(f"Y{m}", "output")
        vals[f"Y{m}"] = Y[:, :, m]
    for k in range(X.shape[2]):
        reg[f"X{k}"] = Variable(f"X{k}", "input")
        vals[f"X{k}"] = X[:, :, k]
    dmus = tuple(f"D{i}" for i in range(Y.shape[0]))
    return PanelDataset(dmus, tuple(periods), reg, vals)


def spec_of(panel, rts="VRS"):
    return FrontierSpec(tuple(panel.outputs), tuple(panel.inputs), rts=rts)


def test_hand_case_scores():
    phi = dea_phi(HAND_Y, HAND_X)
    np.testing.assert_allclose(1 / phi, [1.0, 1.0, 0.75], atol=1e-9)


def test_hand_case_peer():
    p = panel_from(HAND_Y, HAND_X)
    r = dea_score(p, spec_of(p), "D2", 1)
    assert r.phi == pytest.approx(4 / 3)
    assert r.peers == pytest.approx({"D1": 1.0})
    assert not r.is_efficient


def test_hand_case_crs():
    np.testing.assert_allclose(dea_phi(HAND_Y, HAND_X, rts="CRS"), [2.0, 1.0, 2.0], atol=1e-9)


def test_self_reference_is_efficient():
    assert dea_phi([[3.0, 2.0]], [[5.0]])[0] == pytest.approx(1.0)


def test_lp_dimensions():
    lp = build_lp(DeaProblem.for_member(HAND_Y, HAND_X, 2))
    assert lp.shape == (3, 4)
    assert lp.senses == (">=", "<=", "=")
    lp_crs = build_lp(DeaProblem.for_member(HAND_Y, HAND_X, 2, "CRS"))
    assert lp_crs.shape == (2, 4)


def test_bad_target_index():
    with pytest.raises(ValidationError):
        DeaProblem.for_member(HAND_Y, HAND_X, 5)


def test_constraints_hold_after_solve(rng):
    Y = rng.uniform(1, 10, (12, 2))
    X = rng.uniform(1, 10, (12, 3))
    for j in range(12):
        prob = DeaProblem.for_member(Y, X, j)
        phi, lam, _ = solve_problem(prob)
        assert check_solution(prob, phi, lam) <= 1e-8
        assert abs(lam.sum() - 1) <= 1e-8 and lam.min() >= 0


def test_highs_backend_agrees(rng):
    Y = rng.uniform(1, 10, (15, 2))
    X = rng.uniform(1, 10, (15, 2))
    np.testing.assert_allclose(dea_phi(Y, X), dea_phi(Y, X, backend=highs_backend), atol=1e-8)


def test_two_period_toy_matches_oracle():
    Y = np.array([[[1.0], [2.0]], [[4.0], [3.0]], [[3.0], [5.0]]])
    X = np.array([[[1.0], [1.5]], [[2.0], [2.0]], [[3.0], [2.5]]])
    p = panel_from(Y, X, periods=(2011, 2012))
    scores = dea_all(p, spec_of(p)).scores()
    for t in range(2):
        for j in range(3):
            ref = 1 / grid_phi_full(Y[:, t, 0], X[:, t, 0], j)
            assert scores[j, t] == pytest.approx(ref, abs=2e-3)


def test_constant_panel_has_zero_var():
    Y = np.repeat(np.array([[1.0], [4.0], [3.0]])[:, None, :], 3, axis=1)
    X = np.repeat(np.array([[1.0], [2.0], [3.0]])[:, None, :], 3, axis=1)
    p = panel_from(Y, X, periods=(1, 2, 3))
    wide = dea_all(p, spec_of(p)).wide()
    assert list(wide.columns) == [1, 2, 3, "Mean", "%Var"]
    assert np.all(wide["%Var"] == 0)
    assert np.allclose(wide[[1, 2, 3]].to_numpy(), wide[[1]].to_numpy())


def test_long_table_columns():
    p = panel_from(HAND_Y, HAND_X)
    long = dea_all(p, spec_of(p)).long()
    assert list(long.columns) == ["dmu", "period", "score", "phi", "is_efficient", "peers"]
    assert long.loc[2, "peers"] == "D1:1"


def test_generator_contraction_recovered():
    p, truth = gen_dea_panel(n_dmus=6, n_outputs=2, n_inputs=2, n_efficient=3,
                             contractions=np.full((6, 1), 0.75), seed=3)
    scores = dea_all(p, spec_of(p)).scores()
    np.testing.assert_allclose(scores[:3], 1.0, atol=1e-9)
    np.testing.assert_allclose(scores[3:], 0.75, atol=1e-6)


def test_two_dmu_degenerate_both_efficient():
    p, _ = gen_dea_panel(n_dmus=2, n_outputs=2, n_inputs=1, n_efficient=2, seed=1)
    assert np.allclose(dea_all(p, spec_of(p)).scores(), 1.0)


# properties -----------------------------------------------------------------------

def random_panel(seed, n=None, m=None, k=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 9))
    m = m or int(rng.integers(1, 3))
    k = k or int(rng.integers(1, 3))
    return rng.uniform(0.5, 20, (n, m)), rng.uniform(0.5, 20, (n, k)), rng


@given(st.integers(0, 10**6))
def test_small_instances_match_grid(seed):
    Y, X, _ = random_panel(seed, m=1, k=1)
    Y, X = Y[:5], X[:5]
    theta = 1 / dea_phi(Y, X)
    ref = np.array([1 / grid_phi_edges(Y[:, 0], X[:, 0], j) for j in range(len(Y))])
    np.testing.assert_allclose(theta, ref, atol=2e-3)


@given(st.integers(0, 10**6), st.floats(1e-3, 1e3), st.booleans())
def test_units_invariance(seed, c, scale_output):
    Y, X, rng = random_panel(seed)
    base = 1 / dea_phi(Y, X)
    Y2, X2 = Y.copy(), X.copy()
    if scale_output:
        Y2[:, rng.integers(Y.shape[1])] *= c
    else:
        X2[:, rng.integers(X.shape[1])] *= c
    assert np.max(np.abs(1 / dea_phi(Y2, X2) - base)) < 1e-9


@given(st.integers(0, 10**6))
def test_vrs_at_least_crs(seed):
    Y, X, _ = random_panel(seed)
    assert np.all(1 / dea_phi(Y, X) >= 1 / dea_phi(Y, X, rts="CRS") - 1e-9)


@given(st.integers(0, 10**6))
def test_dominated_insertion(seed):
    Y, X, rng = random_panel(seed)
    base = 1 / dea_phi(Y, X)
    src = rng.integers(len(Y))
    y_new = Y[src] * rng.uniform(0.3, 1.0, Y.shape[1])
    x_new = X[src] * rng.uniform(1.0, 3.0, X.shape[1])
    Y2, X2 = np.vstack([Y, y_new]), np.vstack([X, x_new])
    after = 1 / dea_phi(Y2, X2)
    assert np.max(np.abs(after[:-1] - base)) < 1e-9


@given(st.integers(0, 10**6))
def test_frontier_attained(seed):
    Y, X, _ = random_panel(seed)
    theta = 1 / dea_phi(Y, X)
    assert np.any(np.abs(theta - 1) <= 1e-6)
    assert np.all(theta <= 1 + 1e-9) and np.all(theta > 0)
