import numpy as np
import pytest

from robustsurv.core import RunConfig
from robustsurv.errors import ConvergenceError, FitError
from robustsurv.nuisance import (
    CoxBreslowModel,
    KaplanMeierModel,
    assign_folds,
    cox_partial_loglik,
    cox_score,
    fit_nuisances,
    fit_oracle,
    make_model,
)
from robustsurv.simulate import TRIAL, TRIAL_SCHEDULE, generate
from robustsurv.windows import WindowData, window_datasets


def make_window(x, event, history=None, weight=None, k=1, start=0.0, width=100.0):
    x = np.asarray(x, dtype=float)
    n = x.size
    event = np.asarray(event, dtype=bool)
    history = np.zeros((n, 1)) if history is None else np.asarray(history, dtype=float)
    return WindowData(
        k=k,
        start=start,
        width=width,
        idx=np.arange(n),
        history=history,
        x_local=x,
        event=event,
        censor=~event & (x < width),
        weight=np.ones(n) if weight is None else np.asarray(weight, dtype=float),
    )


class TestKaplanMeier:
    def test_product_limit_with_event_before_censor_ties(self):
        # x: 1(event), 2(censored), 3(event), 3(censored)
        wd = make_window([1.0, 2.0, 3.0, 3.0], [True, False, True, False])
        km = KaplanMeierModel().fit(wd, "event")
        curve = km.predict(None)
        assert curve.eval(1.0) == pytest.approx(3.0 / 4.0)
        assert curve.eval(2.0) == pytest.approx(3.0 / 4.0)
        assert curve.eval(3.0) == pytest.approx(3.0 / 8.0)

    def test_equals_empirical_survival_without_censoring(self):
        rng = np.random.default_rng(0)
        x = rng.exponential(1.0, 200)
        wd = make_window(x, np.ones(200, bool))
        curve = KaplanMeierModel().fit(wd, "event").predict(None)
        for t in np.quantile(x, [0.1, 0.3, 0.5, 0.7, 0.9]):
            assert curve.eval(t) == pytest.approx(np.mean(x > t), abs=1e-12)

    def test_censor_role_flips_indicator(self):
        wd = make_window([1.0, 2.0], [True, False])
        curve = KaplanMeierModel().fit(wd, "censor").predict(None)
        assert curve.eval(1.0) == 1.0
        assert curve.eval(2.0) == pytest.approx(0.0)

    def test_weights_scale_risk_and_event_mass(self):
        # duplicating a row equals doubling its weight
        wd_dup = make_window([1.0, 1.0, 2.0], [True, True, False])
        wd_w = make_window([1.0, 2.0], [True, False], weight=[2.0, 1.0])
        c1 = KaplanMeierModel().fit(wd_dup, "event").predict(None)
        c2 = KaplanMeierModel().fit(wd_w, "event").predict(None)
        assert c1.eval(1.0) == pytest.approx(c2.eval(1.0))

    def test_predict_grid_matches_curve(self):
        wd = make_window([1.0, 2.0, 3.0, 3.0], [True, False, True, False])
        km = KaplanMeierModel().fit(wd, "event")
        grid = np.array([0.5, 1.0, 2.5, 3.0, 4.0])
        curve = km.predict(None)
        np.testing.assert_allclose(km.predict_grid(None, grid)[0], curve.values_at(grid))


def simulate_cox_data(rng, n=300, beta=(0.8, -0.5)):
    Z = rng.standard_normal((n, len(beta)))
    u = rng.random(n)
    t = -np.log1p(-u) / np.exp(Z @ np.array(beta))
    c = rng.exponential(np.median(t) * 2, n)
    x = np.minimum(t, c)
    return make_window(x, t <= c, history=Z), Z


class TestCoxBreslow:
    def test_score_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        wd, Z = simulate_cox_data(rng)
        for _ in range(5):
            beta = rng.uniform(-1, 1, 2)
            score = cox_score(beta, wd.x_local, wd.event, Z, wd.weight)
            h = 1e-6
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                fd = (
                    cox_partial_loglik(beta + e, wd.x_local, wd.event, Z, wd.weight)
                    - cox_partial_loglik(beta - e, wd.x_local, wd.event, Z, wd.weight)
                ) / (2 * h)
                assert score[j] == pytest.approx(fd, abs=1e-4 * max(1, abs(fd)))

    def test_recovers_coefficients_on_proportional_hazards_data(self):
        rng = np.random.default_rng(2)
        wd, _ = simulate_cox_data(rng, n=2000)
        model = CoxBreslowModel().fit(wd, "event")
        np.testing.assert_allclose(model.beta, [0.8, -0.5], atol=0.15)

    def test_score_is_zero_at_fit(self):
        rng = np.random.default_rng(3)
        wd, Z = simulate_cox_data(rng)
        model = CoxBreslowModel().fit(wd, "event")
        Zc = (Z - model.center)[:, model.keep]
        assert np.linalg.norm(cox_score(model.beta, wd.x_local, wd.event, Zc, wd.weight)) < 1e-8

    def test_constant_columns_dropped(self):
        rng = np.random.default_rng(4)
        wd, Z = simulate_cox_data(rng)
        Z2 = np.column_stack([Z, np.ones(Z.shape[0])])
        wd2 = make_window(wd.x_local, wd.event, history=Z2)
        model = CoxBreslowModel().fit(wd2, "event")
        assert model.keep.tolist() == [True, True, False]

    def test_no_covariates_reduces_to_kaplan_meier_hazard(self):
        # with all columns constant, baseline is the Breslow (exp(-Nelson-Aalen)) curve
        wd = make_window([1.0, 2.0, 3.0], [True, True, True],
                         history=np.ones((3, 1)))
        model = CoxBreslowModel().fit(wd, "event")
        expected = np.exp(-np.cumsum([1 / 3, 1 / 2, 1 / 1]))
        np.testing.assert_allclose(model.base_surv, expected)

    def test_separated_data_diverges_or_hits_flat_region(self):
        # perfectly separated covariate: the partial likelihood has no finite
        # maximiser, so the fit either reports divergence or lands at a huge
        # coefficient where the gradient has flattened out
        x = np.array([1.0, 2.0, 3.0, 4.0])
        z = np.array([[3.0], [2.0], [1.0], [0.0]])
        wd = make_window(x, np.ones(4, bool), history=z)
        try:
            model = CoxBreslowModel().fit(wd, "event")
        except ConvergenceError:
            return
        assert abs(model.beta[0]) > 5.0

    def test_no_events_raises(self):
        wd = make_window([1.0, 2.0], [False, False])
        with pytest.raises(FitError):
            CoxBreslowModel().fit(wd, "event")


class TestOracle:
    def test_curves_match_empirical_conditional_survival(self):
        # window 2 event law at a fixed history: Weibull tail vs simulation
        h = np.array([[0.4, 1.0, -0.3, 0.8, 1.0]])
        shape, scales = TRIAL.weibull_params(2, "event", h)
        rng = np.random.default_rng(8)
        draws = scales[0] * (-np.log1p(-rng.random(10**5))) ** (1 / shape)
        model = make_model("oracle:trial")
        wd = make_window([5.0, 10.0, 20.0], [True, False, False], k=2,
                         start=30.0, width=30.0,
                         history=np.tile(h, (3, 1)))
        model.fit(wd, "event")
        for t in [3.0, 8.0, 15.0, 22.0, 29.0]:
            emp = np.mean(draws > t)
            se = np.sqrt(emp * (1 - emp) / draws.size)
            got = model.predict_grid(h, np.array([t]))[0, 0]
            assert abs(got - emp) < 3 * se + 1e-12

    def test_unknown_dgp_rejected(self):
        with pytest.raises(FitError):
            make_model("oracle:nonesuch")

    def test_fit_oracle_wrapper(self):
        wd = make_window([5.0], [True], k=1, start=0.0, width=30.0,
                         history=np.array([[0.0, 0.0, 0.0]]))
        model = fit_oracle("trial", wd, "event")
        curve = model.predict(np.array([0.0, 0.0, 0.0]))
        assert curve.eval(5.0) == pytest.approx(np.exp(-((5.0 / 30.0) ** 5)), abs=1e-12)


class TestFolds:
    def test_assignment_deterministic_and_balanced(self):
        a = assign_folds(100, 10, 7)
        b = assign_folds(100, 10, 7)
        np.testing.assert_array_equal(a, b)
        assert np.bincount(a).tolist() == [10] * 10
        assert not np.array_equal(a, assign_folds(100, 10, 8))

    def test_fit_nuisances_uses_training_complement(self):
        records = generate(200, seed=3)
        cfg = RunConfig(event_model="km", censor_model="km", folds=4, seed=1,
                        w_indices=(0, 1, 2))
        fitted = fit_nuisances(records, TRIAL_SCHEDULE, cfg)
        assert fitted.folds == 4
        assert set(fitted.event) == {(k, f) for k in (1, 2) for f in range(4)}
        # per-fold curves differ because training sets differ
        c0 = fitted.event[(1, 0)].predict(None)
        c1 = fitted.event[(1, 1)].predict(None)
        assert not np.array_equal(c0.post_jump_values, c1.post_jump_values)

    def test_single_fold_fits_everything_once(self):
        records = generate(100, seed=4)
        cfg = RunConfig(event_model="km", censor_model="km", folds=1, seed=1,
                        w_indices=(0, 1, 2))
        fitted = fit_nuisances(records, TRIAL_SCHEDULE, cfg)
        assert set(fitted.event) == {(1, 0), (2, 0)}
