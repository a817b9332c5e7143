import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustsurv.core import RunConfig
from robustsurv.errors import PositivityError
from robustsurv.nuisance import fit_km, fit_nuisances, make_model
from robustsurv.pseudo import (
    dr_transform,
    pseudo_g,
    pseudo_ipcw,
    pseudo_mr,
    transform_batch,
)
from robustsurv.simulate import TRIAL_SCHEDULE, generate
from robustsurv.stepfn import StepSurvival, constant_one
from robustsurv.windows import window_datasets

from conftest import random_step_curve


class TestDrTransform:
    def test_hand_computed_value(self):
        # S drops to 0.5 at 1 and 0.25 at 2; G drops to 0.8 at 1
        S = StepSurvival(0.0, np.array([1.0, 2.0]), np.array([0.5, 0.25]))
        G = StepSurvival(0.0, np.array([1.0]), np.array([0.8]))
        # event at x=2 with boundary 2:
        # event term: 1/(S(2) G(2-)) = 1/(0.25*0.8) = 5
        # integral: (0.5-1)/(0.5*1*1) + (0.25-0.5)/(0.25*0.5*0.8) = -1 - 2.5
        # total = -S(2) * (5 - 3.5) = -0.375
        assert dr_transform(S, G, 2.0, True, 2.0) == pytest.approx(-0.375, abs=1e-15)

    def test_zero_before_window(self):
        S = StepSurvival(5.0, np.array([6.0]), np.array([0.5]))
        G = constant_one(5.0)
        assert dr_transform(S, G, 5.0, True, 7.0) == 0.0
        assert dr_transform(S, G, 4.0, True, 7.0) == 0.0

    def test_unit_curves_give_event_indicator(self):
        S, G = constant_one(0.0), constant_one(0.0)
        assert dr_transform(S, G, 1.0, True, 2.0) == -1.0
        assert dr_transform(S, G, 1.0, False, 2.0) == 0.0
        assert dr_transform(S, G, 3.0, True, 2.0) == 0.0

    def test_positivity_violation_raises(self):
        S = StepSurvival(0.0, np.array([1.0]), np.array([0.0]))
        G = constant_one(0.0)
        with pytest.raises(PositivityError):
            dr_transform(S, G, 1.5, True, 2.0)

    def test_trim_floors_censoring_curve(self):
        S = constant_one(0.0)
        G = StepSurvival(0.0, np.array([1.0]), np.array([0.01]))
        # event at 2: G(2-) = 0.01 floored to 0.05
        assert dr_transform(S, G, 2.0, True, 3.0, trim=0.05) == pytest.approx(-20.0)

    def test_telescopes_to_survival_indicator_when_uncensored(self):
        # with G = 1, Y = S(tbar) + transform equals 1{x > tbar} for any S
        # whose jump times include x (exactly the observed-grid discretisation)
        rng = np.random.default_rng(6)
        for _ in range(20):
            S = random_step_curve(rng)
            G = constant_one(0.0)
            t_bar = 1.9
            for x in S.jump_times:
                y = S.eval(t_bar) + dr_transform(S, G, float(x), True, t_bar)
                assert y == pytest.approx(0.0 if x <= t_bar else 1.0, abs=1e-12)


class TestTransformBatch:
    def _batch_vs_scalar(self, rng, shared_s, shared_g):
        n = 40
        S_curve = random_step_curve(rng)
        G_curve = random_step_curve(rng)
        x = rng.uniform(0.05, 2.2, n)
        delta = rng.random(n) < 0.6
        t_bar = 1.7
        grid = np.unique(np.concatenate([S_curve.jump_times, G_curve.jump_times, x, [t_bar]]))
        Sv = S_curve.values_at(grid)[None, :]
        Gv = G_curve.values_at(grid)[None, :]
        if not shared_s:
            Sv = np.repeat(Sv, n, axis=0)
        if not shared_g:
            Gv = np.repeat(Gv, n, axis=0)
        terms, trimmed = transform_batch(grid, Sv, Gv, x, delta, t_bar, trim=0.05)
        for i in range(n):
            expected = dr_transform(S_curve, G_curve, x[i], bool(delta[i]), t_bar, trim=0.05)
            assert terms[i] == pytest.approx(expected, abs=1e-12), i

    def test_matches_scalar_shared_curves(self):
        self._batch_vs_scalar(np.random.default_rng(7), True, True)

    def test_matches_scalar_per_subject_curves(self):
        self._batch_vs_scalar(np.random.default_rng(8), False, False)

    def test_matches_scalar_mixed_shapes(self):
        self._batch_vs_scalar(np.random.default_rng(9), True, False)
        self._batch_vs_scalar(np.random.default_rng(10), False, True)

    def test_trim_flag_marks_floored_rows(self):
        grid = np.array([1.0, 2.0])
        S = np.array([[0.9, 0.8]])
        G = np.array([[0.01, 0.01]])
        x = np.array([0.5, 1.5, 2.5])
        delta = np.array([True, True, False])
        terms, trimmed = transform_batch(grid, S, G, x, delta, 2.0, trim=0.05)
        # row 0: event before any G jump is used at x=0.5 (G(0.5-) = 1), but
        # the S jump at 1.0 is past x -> no floored value used
        assert trimmed.tolist() == [False, True, True]

    def test_positivity_error_on_zero_event_curve(self):
        grid = np.array([1.0, 2.0])
        S = np.array([[0.5, 0.0]])
        G = np.array([[1.0, 1.0]])
        with pytest.raises(PositivityError):
            transform_batch(grid, S, G, np.array([2.5]), np.array([False]), 3.0, trim=0.05)


@pytest.fixture(scope="module")
def fitted_windows():
    records = generate(300, seed=12)
    cfg = RunConfig(event_model="km", censor_model="km", folds=3, seed=2,
                    w_indices=(0, 1, 2))
    wds = window_datasets(records, TRIAL_SCHEDULE)
    nuis = fit_nuisances(records, TRIAL_SCHEDULE, cfg)
    return records, cfg, wds, nuis


def _models(nuis, role, k):
    table = nuis.event if role == "event" else nuis.censor
    return {f: table[(k, f)] for f in range(nuis.folds)}


class TestPanels:
    def test_ipcw_equals_mr_with_unit_event_curve(self, fitted_windows):
        records, cfg, wds, nuis = fitted_windows

        class UnitModel:
            def predict_grid(self, history, grid_local):
                return np.ones((1, grid_local.size))

        from robustsurv.nuisance import ConditionalSurvivalModel

        ConditionalSurvivalModel.register(UnitModel)
        for wd in wds:
            ipcw = pseudo_ipcw(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "censor", wd.k),
                               trim=0.05, fold_of=nuis.fold_of)
            mr = pseudo_mr(wd, TRIAL_SCHEDULE, 60.0, UnitModel(),
                           _models(nuis, "censor", wd.k), trim=0.05, fold_of=nuis.fold_of)
            np.testing.assert_allclose(ipcw.y, mr.y, atol=1e-13)

    def test_g_panel_reads_curve_at_boundary(self, fitted_windows):
        records, cfg, wds, nuis = fitted_windows
        wd = wds[0]
        panel = pseudo_g(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "event", 1),
                         fold_of=nuis.fold_of)
        # KM ignores covariates: the pseudo-outcome is constant within a fold
        for f in range(nuis.folds):
            vals = panel.y[panel.fold == f]
            assert np.ptp(vals) == 0.0
            expected = nuis.event[(1, f)].predict(None).eval(30.0)
            assert vals[0] == pytest.approx(expected)

    def test_panel_covers_exactly_the_risk_set(self, fitted_windows):
        records, cfg, wds, nuis = fitted_windows
        for wd in wds:
            panel = pseudo_mr(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "event", wd.k),
                              _models(nuis, "censor", wd.k), trim=0.05,
                              fold_of=nuis.fold_of)
            np.testing.assert_array_equal(panel.idx, wd.idx)
            assert np.all(np.isfinite(panel.y))

    def test_trim_count_monotone_in_trim_level(self, fitted_windows):
        records, cfg, wds, nuis = fitted_windows
        wd = wds[1]
        counts = []
        for trim in (0.01, 0.05, 0.2, 0.4):
            panel = pseudo_ipcw(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "censor", 2),
                                trim=trim, fold_of=nuis.fold_of)
            counts.append(panel.trim_count)
        assert counts == sorted(counts)

    def test_ipcw_magnitude_nonincreasing_in_trim(self, fitted_windows):
        records, cfg, wds, nuis = fitted_windows
        wd = wds[1]
        y_tight = pseudo_ipcw(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "censor", 2),
                              trim=0.02, fold_of=nuis.fold_of).y
        y_loose = pseudo_ipcw(wd, TRIAL_SCHEDULE, 60.0, _models(nuis, "censor", 2),
                              trim=0.3, fold_of=nuis.fold_of).y
        assert np.all(np.abs(y_loose) <= np.abs(y_tight) + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_batch_matches_scalar_random(seed):
    rng = np.random.default_rng(seed)
    S_curve = random_step_curve(rng)
    G_curve = random_step_curve(rng)
    x = rng.uniform(0.05, 2.2, 5)
    delta = rng.random(5) < 0.5
    t_bar = float(rng.uniform(0.5, 2.0))
    grid = np.unique(np.concatenate([S_curve.jump_times, G_curve.jump_times, x, [t_bar]]))
    terms, _ = transform_batch(
        grid, S_curve.values_at(grid)[None, :], G_curve.values_at(grid)[None, :],
        x, delta, t_bar, trim=0.05,
    )
    for i in range(5):
        expected = dr_transform(S_curve, G_curve, x[i], bool(delta[i]), t_bar, trim=0.05)
        assert terms[i] == pytest.approx(expected, abs=1e-12)
