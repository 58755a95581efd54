import numpy as np
import pytest

from bayesscm import (
    ConstraintSet,
    CovariateBlock,
    Panel,
    RngStream,
    build_design,
    counterfactual,
    fit_adh,
    fit_dinet,
    fit_lscm,
    fit_psconv,
    solve_constrained,
    synthetic_path,
)
from bayesscm.errors import ConfigError, DimensionError
import oracles
from _helpers import random_panel


def outcome_panel(Y, pre):
    Y = np.asarray(Y, dtype=float)
    ids = tuple(f"u{i + 1}" for i in range(Y.shape[0]))
    return Panel(unit_ids=ids, times=tuple(range(1, Y.shape[1] + 1)), Y=Y,
                 pre_periods=pre)


DINET_D = np.array([
    [-1.925287, 0.121466], [0.679328, 0.494205], [-1.801328, -1.268923],
    [0.834846, -0.587604], [1.265845, 0.715126], [0.402641, 1.472892],
    [-0.75113, -1.182672], [1.185098, 0.412133],
])
DINET_Y = np.array([-1.325412, 0.590591, -0.455112, 1.024972, 1.21831,
                    0.93053, -0.022363, 1.549418])


def dinet_panel():
    Y = np.ones((3, 10))
    Y[0, :8] = DINET_Y
    Y[1, :8] = DINET_D[:, 0]
    Y[2, :8] = DINET_D[:, 1]
    return outcome_panel(Y, pre=8)


def test_adh_reproduces_a_matching_donor():
    Y = np.array([
        [1.0, 2.0, 3.0, 4.0, 9.0],
        [5.0, 1.0, 0.0, 2.0, 7.0],
        [1.0, 2.0, 3.0, 4.0, 2.0],
    ])
    fit = fit_adh(outcome_panel(Y, pre=4))
    assert fit.method == "ADH"
    assert fit.weights[0] == 0.0
    np.testing.assert_allclose(fit.weights[1:], [0.0, 1.0], atol=1e-10)
    assert fit.objective == pytest.approx(0.0, abs=1e-14)


def test_adh_single_donor_is_forced():
    Y = np.array([[1.0, 2.0, 9.0], [4.0, 4.0, 4.0]])
    fit = fit_adh(outcome_panel(Y, pre=2))
    np.testing.assert_array_equal(fit.weights, [0.0, 1.0])


def test_adh_delegates_to_the_simplex_solver():
    panel = random_panel(RngStream(70, 0).generator, n_units=5, n_times=8,
                         pre_periods=5, p=2)
    fit = fit_adh(panel)
    design = build_design(panel, use_covariates=True, use_intercept=False)
    sol = solve_constrained(design, None, ConstraintSet.CONV)
    np.testing.assert_array_equal(fit.weights, sol.weights)
    assert fit.objective == sol.objective
    assert fit.solution is not None


def test_lscm_recovers_a_proportional_donor():
    donor = np.array([1.0, 2.5, 0.5, 3.0, 1.5, 2.0])
    Y = np.stack([2.0 * donor, donor, np.array([5.0, 4.0, 3.0, 2.0, 1.0, 0.0])])
    fit = fit_lscm(outcome_panel(Y, pre=4))
    assert fit.weights[0] == pytest.approx(0.0, abs=1e-9)
    assert fit.weights[1] == pytest.approx(2.0, abs=1e-9)
    assert fit.weights[2] == pytest.approx(0.0, abs=1e-9)
    assert fit.objective == pytest.approx(0.0, abs=1e-14)


def test_lscm_shape_irrelevant_donors_get_zero():
    # both donors are orthogonal to the centered treated path, so the fit is
    # the pre-period mean alone
    Y = np.array([
        [1.0, 2.0, 3.0, 4.0, 0.0],
        [1.0, 2.0, 2.0, 1.0, 0.0],
        [2.0, 1.0, 1.0, 2.0, 0.0],
    ])
    fit = fit_lscm(outcome_panel(Y, pre=4))
    assert fit.weights[0] == pytest.approx(2.5, abs=1e-9)
    np.testing.assert_allclose(fit.weights[1:], [0.0, 0.0], atol=1e-9)


def test_psconv_absorbs_a_constant_offset():
    donor1 = np.array([1.0, 2.0, 1.5, 2.5, 1.0])
    donor2 = np.array([4.0, 0.5, 2.0, 1.0, 3.0])
    Y = np.stack([donor1 + 3.0, donor1, donor2])
    fit = fit_psconv(outcome_panel(Y, pre=4))
    assert fit.weights[0] == pytest.approx(3.0, abs=1e-9)
    np.testing.assert_allclose(fit.weights[1:], [1.0, 0.0], atol=1e-9)
    assert fit.objective == pytest.approx(0.0, abs=1e-14)


def test_psconv_two_units_reduces_to_the_mean_gap():
    Y = np.array([
        [4.1, 3.9, 4.0, 4.2, 3.8, 9.9, 9.9],
        [1.0, 0.9, 1.1, 1.0, 0.9, 1.0, 1.0],
    ])
    fit = fit_psconv(outcome_panel(Y, pre=5))
    gap = float(np.mean(Y[0, :5] - Y[1, :5]))
    assert fit.weights[0] == pytest.approx(gap, abs=1e-10)
    assert fit.weights[1] == pytest.approx(1.0, abs=1e-12)


def test_shifted_family_never_fits_worse():
    for i in range(8):
        panel = random_panel(RngStream(71, i).generator, n_units=6, n_times=9,
                             pre_periods=6, p=1)
        assert fit_psconv(panel).objective <= fit_adh(panel).objective + 1e-12


def test_fits_are_donor_permutation_equivariant():
    panel = random_panel(RngStream(72, 0).generator, n_units=6, n_times=9,
                         pre_periods=6, p=0)
    perm = [0, 3, 1, 4, 2, 5]
    shuffled = Panel(
        unit_ids=tuple(panel.unit_ids[i] for i in perm),
        times=panel.times,
        Y=panel.Y[perm],
        pre_periods=panel.pre_periods,
    )
    for fitter in (fit_adh, fit_psconv, fit_lscm):
        a, b = fitter(panel), fitter(shuffled)
        donor_perm = [i - 1 for i in perm[1:]]
        np.testing.assert_allclose(b.weights[1:], a.weights[1:][donor_perm], atol=1e-8)
        assert b.objective == pytest.approx(a.objective, rel=1e-8, abs=1e-12)


def test_counterfactual_identity_fit():
    Y = np.array([
        [1.0, 2.0, 3.0, 10.0, 11.0],
        [1.0, 2.0, 3.0, 4.0, 5.0],
        [9.0, 9.0, 9.0, 9.0, 9.0],
    ])
    panel = outcome_panel(Y, pre=3)
    fit = fit_adh(panel)
    series = counterfactual(fit, panel)
    assert series.times == (4, 5)
    np.testing.assert_allclose(series.counterfactual, [4.0, 5.0], atol=1e-10)
    np.testing.assert_allclose(series.effects, [6.0, 6.0], atol=1e-10)
    assert series.ate == pytest.approx(6.0, abs=1e-10)
    assert series.ate == float(np.mean(series.effects))


def test_counterfactual_uses_shift_and_full_path():
    Y = np.array([
        [4.0, 5.0, 4.5, 5.5, 9.0, 9.5],
        [1.0, 2.0, 1.5, 2.5, 2.0, 2.5],
    ])
    panel = outcome_panel(Y, pre=4)
    fit = fit_psconv(panel)
    path = synthetic_path(fit, panel)
    assert path.shape == (6,)
    np.testing.assert_allclose(path, Y[1] + 3.0, atol=1e-9)
    series = counterfactual(fit, panel)
    np.testing.assert_allclose(series.effects, [4.0, 4.0], atol=1e-9)


def test_synthetic_path_checks_weight_length():
    panel = outcome_panel(np.ones((3, 4)), pre=2)
    fit = fit_adh(panel)
    other = outcome_panel(np.ones((4, 4)), pre=2)
    with pytest.raises(DimensionError):
        synthetic_path(fit, other)


def test_dinet_matches_the_penalized_grid_oracle():
    fit = fit_dinet(dinet_panel(), alpha_grid=(1.0,), lambda_grid=[0.05])
    ref_obj, ref_w, ref_icpt = oracles.enet_grid_minimum(DINET_D, DINET_Y, 1.0, 0.05)
    assert ref_obj == pytest.approx(0.06911577875960769, abs=1e-12)
    # the coordinate-descent optimum may only improve on the grid point
    assert fit.objective <= ref_obj + 1e-9
    assert fit.objective == pytest.approx(ref_obj, abs=1e-6)
    np.testing.assert_allclose(fit.weights[1:], ref_w, atol=5e-4)
    assert fit.weights[0] == pytest.approx(ref_icpt, abs=1e-4)
    assert fit.weights[2] == 0.0
    assert fit.active_set == (2,)
    assert fit.tuning["alpha"] == 1.0 and fit.tuning["lam"] == 0.05


def test_dinet_full_shrinkage_is_the_premean():
    panel = dinet_panel()
    fit = fit_dinet(panel, alpha_grid=(1.0,), lambda_grid=[1e9])
    np.testing.assert_array_equal(fit.weights[1:], [0.0, 0.0])
    assert fit.weights[0] == pytest.approx(float(np.mean(DINET_Y)), abs=1e-12)


def test_dinet_unpenalized_is_ols():
    fit = fit_dinet(dinet_panel(), alpha_grid=(0.0,), lambda_grid=[0.0])
    X = np.column_stack([np.ones(8), DINET_D])
    beta = np.linalg.lstsq(X, DINET_Y, rcond=None)[0]
    np.testing.assert_allclose(fit.weights, beta, atol=1e-6)


def test_dinet_cv_ties_prefer_the_larger_penalty():
    fit = fit_dinet(dinet_panel(), alpha_grid=(1.0,), lambda_grid=[1e9, 2e9])
    assert fit.tuning["lam"] == 2e9


def test_dinet_default_search_beats_single_points():
    panel = dinet_panel()
    fit = fit_dinet(panel)
    assert 0.0 <= fit.tuning["alpha"] <= 1.0
    assert fit.tuning["lam"] > 0.0
    assert fit.tuning["folds"] == 8
    single = fit_dinet(panel, alpha_grid=(fit.tuning["alpha"],),
                       lambda_grid=[fit.tuning["lam"]])
    assert single.tuning["cv_mse"] == pytest.approx(fit.tuning["cv_mse"], rel=1e-9)


def test_dinet_configuration_errors():
    panel = dinet_panel()
    with pytest.raises(ConfigError):
        fit_dinet(panel, folds=1)
    with pytest.raises(ConfigError):
        fit_dinet(panel, folds=9)
    with pytest.raises(ConfigError):
        fit_dinet(panel, alpha_grid=())
    with pytest.raises(ConfigError):
        fit_dinet(panel, alpha_grid=(1.5,))
    with pytest.raises(ConfigError):
        fit_dinet(panel, lambda_grid=[])
    with pytest.raises(ConfigError):
        fit_dinet(panel, lambda_grid=[-0.1])


def test_covariates_enter_the_qp_methods_only():
    gen = RngStream(73, 0).generator
    panel = random_panel(gen, n_units=5, n_times=9, pre_periods=6, p=2)
    bare = Panel(unit_ids=panel.unit_ids, times=panel.times, Y=panel.Y,
                 pre_periods=panel.pre_periods)
    assert not np.allclose(fit_adh(panel).weights, fit_adh(bare).weights)
    a = fit_dinet(panel, alpha_grid=(1.0,), lambda_grid=[0.05])
    b = fit_dinet(bare, alpha_grid=(1.0,), lambda_grid=[0.05])
    np.testing.assert_array_equal(a.weights, b.weights)
