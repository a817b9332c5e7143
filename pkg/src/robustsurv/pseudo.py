"""Pseudo-outcomes per window: the augmented (doubly robust) transform and
its plug-in and inverse-weighting specialisations.

The augmented transform corrects a working event-survival curve using the
censoring curve; its risk-set mean recovers the true window survival
probability whenever either curve is correct.  Division by the censoring
curve is guarded by flooring its evaluations at a trim level; floored rows
are counted and reported rather than silently clipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import VisitSchedule
from .errors import PositivityError
from .nuisance import ConditionalSurvivalModel, subset_window
from .stepfn import StepSurvival
from .windows import WindowData


def dr_transform(
    S: StepSurvival,
    G: StepSurvival,
    x: float,
    delta: bool,
    t_bar: float,
    trim: float = 0.0,
) -> float:
    """Augmentation term for one subject against curves S (event) and G (censoring).

    ``x`` is the subject's follow-up on the absolute time axis; ``t_bar`` the
    window evaluation boundary.  Returns 0 for subjects whose follow-up does
    not enter the window.  Exact: the integral term is a finite sum over the
    jumps of S.
    """
    start = S.window_start
    if G.window_start != start:
        raise ValueError("S and G must share the window start")
    if t_bar <= start:
        raise ValueError("t_bar must exceed the window start")
    if x <= start:
        return 0.0

    def floored_g_before(s: float) -> float:
        g = max(G.left_limit(s), trim)
        if g == 0.0:
            raise PositivityError(s, "censoring")
        return g

    def integrand(s: float, pre: float, post: float) -> float:
        if pre == 0.0 or post == 0.0:
            raise PositivityError(s, "event")
        return 1.0 / (post * pre * floored_g_before(s))

    upper = min(x, t_bar)
    total = S.stieltjes_sum(start, upper, integrand)
    if delta and x <= t_bar:
        s_at_x = S.eval(x)
        if s_at_x == 0.0:
            raise PositivityError(x, "event")
        total += 1.0 / (s_at_x * floored_g_before(x))
    return -S.eval(t_bar) * total


def _lookup(curve: np.ndarray, grid: np.ndarray, t: np.ndarray, side: str) -> np.ndarray:
    """Values of step curves (rows of ``curve``) at times ``t``.

    ``side='right'`` gives the right-continuous value, ``side='left'`` the
    left limit.  ``curve`` has shape (m, J) with m == 1 (shared) or m == n.
    """
    idx = np.searchsorted(grid, t, side=side) - 1
    padded = np.concatenate((np.ones((curve.shape[0], 1)), curve), axis=1)
    if curve.shape[0] == 1:
        return padded[0, idx + 1]
    return padded[np.arange(curve.shape[0]), idx + 1]


def transform_batch(
    grid: np.ndarray,
    S: np.ndarray,
    G: np.ndarray,
    x: np.ndarray,
    delta: np.ndarray,
    t_bar: float,
    trim: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised augmentation term on a shared window-local grid.

    ``grid`` must contain every jump time of the step curves whose values at
    the grid points are the rows of ``S`` and ``G`` (shape (1, J) for curves
    shared by all subjects, (n, J) for per-subject curves), making the sums
    exact.  Returns the per-subject terms and a boolean mask of rows on
    which a floored censoring value was actually used.
    """
    n = x.size
    S = np.atleast_2d(S)
    G = np.atleast_2d(G)
    Sprev = np.concatenate((np.ones((S.shape[0], 1)), S[:, :-1]), axis=1)
    Gprev = np.concatenate((np.ones((G.shape[0], 1)), G[:, :-1]), axis=1)
    Gprev_f = np.maximum(Gprev, trim)
    dS = S - Sprev
    denom = S * Sprev * Gprev_f
    jumps = dS != 0
    bad = jumps & (denom == 0.0)
    integrand = np.zeros(np.broadcast_shapes(dS.shape, denom.shape))
    np.divide(dS, denom, out=integrand, where=jumps & ~bad)
    cum = np.cumsum(integrand, axis=1)

    upper = np.minimum(x, t_bar)
    iu = np.searchsorted(grid, upper, side="right") - 1
    if cum.shape[0] == 1:
        integral = np.where(iu >= 0, cum[0, iu], 0.0)
    else:
        integral = np.where(iu >= 0, cum[np.arange(n), np.maximum(iu, 0)], 0.0)

    if bad.any():
        _raise_first_bad(grid, bad, np.broadcast_to(S * Sprev == 0.0, bad.shape), iu)

    s_at_x = _lookup(S, grid, x, "right")
    g_before_x = _lookup(G, grid, x, "left")
    g_before_f = np.maximum(g_before_x, trim)
    event_used = delta & (x <= t_bar)
    if np.any(event_used & (s_at_x == 0.0)):
        t = float(x[event_used & (s_at_x == 0.0)][0])
        raise PositivityError(t, "event")
    if np.any(event_used & (g_before_f == 0.0)):
        t = float(x[event_used & (g_before_f == 0.0)][0])
        raise PositivityError(t, "censoring")
    event = np.where(event_used, 1.0, 0.0) / np.where(event_used, s_at_x * g_before_f, 1.0)

    s_tbar = _lookup(S, grid, np.full(n, t_bar), "right")
    terms = -s_tbar * (event + integral)

    floored = np.maximum.accumulate(Gprev < trim, axis=1) if trim > 0 else None
    if floored is None:
        trimmed = np.zeros(n, dtype=bool)
    else:
        if floored.shape[0] == 1:
            used_int = np.where(iu >= 0, floored[0, np.maximum(iu, 0)], False) & (iu >= 0)
        else:
            used_int = np.where(iu >= 0, floored[np.arange(n), np.maximum(iu, 0)], False)
        trimmed = used_int | (event_used & (g_before_x < trim))
    return terms, trimmed


def _raise_first_bad(grid, bad, s_zero, iu):
    """Positivity failure inside the integral term: name the offending time."""
    rows, cols = np.nonzero(bad)
    limit = iu if iu.ndim else np.full(rows.shape, iu)
    for r, c in zip(rows, cols):
        used_by = limit >= c if bad.shape[0] == 1 else limit[r] >= c
        if np.any(used_by):
            which = "event" if np.atleast_2d(s_zero)[r, c] else "censoring"
            raise PositivityError(float(grid[c]), which)


@dataclass(frozen=True)
class PseudoPanel:
    """Per-window pseudo-outcome rows: exactly the window's risk set."""

    k: int
    tau: float
    idx: np.ndarray      # positions into the original record list
    y: np.ndarray
    weight: np.ndarray
    fold: np.ndarray
    trim_count: int


ModelsByFold = Mapping[int, ConditionalSurvivalModel] | ConditionalSurvivalModel


def _fold_groups(wd: WindowData, fold_of: np.ndarray | None):
    if fold_of is None:
        yield 0, np.ones(wd.n, dtype=bool)
    else:
        labels = fold_of[wd.idx]
        for fold in np.unique(labels):
            yield int(fold), labels == fold


def _model_for(models: ModelsByFold, fold: int) -> ConditionalSurvivalModel:
    if isinstance(models, ConditionalSurvivalModel):
        return models
    return models[fold]


def _panel_grid(wd: WindowData, t_bar_local: float) -> np.ndarray:
    grid = np.unique(np.concatenate([wd.x_local, [wd.width, t_bar_local]]))
    return grid[grid > 0]


def pseudo_mr(
    wd: WindowData,
    schedule: VisitSchedule,
    tau: float,
    event_models: ModelsByFold,
    censor_models: ModelsByFold,
    trim: float = 0.05,
    fold_of: np.ndarray | None = None,
) -> PseudoPanel:
    """Augmented pseudo-outcome: working curve value plus correction term.

    With several folds, each subject's curves come from the models fitted
    without that subject's fold.
    """
    t_bar_local = schedule.clipped_tau(wd.k, tau) - wd.start
    grid = _panel_grid(wd, t_bar_local)
    y = np.empty(wd.n)
    fold_labels = np.zeros(wd.n, dtype=int)
    trim_count = 0
    for fold, mask in _fold_groups(wd, fold_of):
        sub = subset_window(wd, mask)
        S = _model_for(event_models, fold).predict_grid(sub.history, grid)
        G = _model_for(censor_models, fold).predict_grid(sub.history, grid)
        s_tbar = _lookup(np.atleast_2d(S), grid, np.full(sub.n, t_bar_local), "right")
        terms, trimmed = transform_batch(grid, S, G, sub.x_local, sub.event, t_bar_local, trim)
        y[mask] = s_tbar + terms
        fold_labels[mask] = fold
        trim_count += int(trimmed.sum())
    _check_finite(y, wd.k)
    return PseudoPanel(wd.k, tau, wd.idx, y, wd.weight, fold_labels, trim_count)


def pseudo_g(
    wd: WindowData,
    schedule: VisitSchedule,
    tau: float,
    event_models: ModelsByFold,
    fold_of: np.ndarray | None = None,
) -> PseudoPanel:
    """Plug-in pseudo-outcome: the working curve read at the window boundary."""
    t_bar_local = schedule.clipped_tau(wd.k, tau) - wd.start
    grid = _panel_grid(wd, t_bar_local)
    y = np.empty(wd.n)
    fold_labels = np.zeros(wd.n, dtype=int)
    for fold, mask in _fold_groups(wd, fold_of):
        sub = subset_window(wd, mask)
        S = np.atleast_2d(_model_for(event_models, fold).predict_grid(sub.history, grid))
        y[mask] = _lookup(S, grid, np.full(sub.n, t_bar_local), "right")
        fold_labels[mask] = fold
    _check_finite(y, wd.k)
    return PseudoPanel(wd.k, tau, wd.idx, y, wd.weight, fold_labels, 0)


def pseudo_ipcw(
    wd: WindowData,
    schedule: VisitSchedule,
    tau: float,
    censor_models: ModelsByFold,
    trim: float = 0.05,
    fold_of: np.ndarray | None = None,
) -> PseudoPanel:
    """Inverse-censoring-weighted pseudo-outcome."""
    t_bar_local = schedule.clipped_tau(wd.k, tau) - wd.start
    grid = _panel_grid(wd, t_bar_local)
    y = np.empty(wd.n)
    fold_labels = np.zeros(wd.n, dtype=int)
    trim_count = 0
    for fold, mask in _fold_groups(wd, fold_of):
        sub = subset_window(wd, mask)
        G = np.atleast_2d(_model_for(censor_models, fold).predict_grid(sub.history, grid))
        g_before = _lookup(G, grid, sub.x_local, "left")
        g_floored = np.maximum(g_before, trim)
        used = sub.event & (sub.x_local <= t_bar_local)
        if np.any(used & (g_floored == 0.0)):
            t = float(sub.x_local[used & (g_floored == 0.0)][0])
            raise PositivityError(wd.start + t, "censoring")
        y[mask] = 1.0 - np.where(used, 1.0, 0.0) / np.where(used, g_floored, 1.0)
        fold_labels[mask] = fold
        trim_count += int(np.sum(used & (g_before < trim)))
    _check_finite(y, wd.k)
    return PseudoPanel(wd.k, tau, wd.idx, y, wd.weight, fold_labels, trim_count)


def _check_finite(y: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(y)):
        raise PositivityError(float("nan"), f"window {k} pseudo-outcome")


def panel_to_csv_rows(panel: PseudoPanel, ids: list[str]) -> list[tuple]:
    """Debug dump rows (id, window, tau, pseudo-outcome, fold)."""
    return [
        (ids[i], panel.k, panel.tau, float(y), int(f))
        for i, y, f in zip(panel.idx, panel.y, panel.fold)
    ]
