"""Survival-probability estimators built from per-window pseudo-outcomes.

The conditional estimator regresses each window's pseudo-outcome on a basis
expansion of the anchor-visit covariates and multiplies the fitted window
regressions; the marginal estimator replaces the regression by a risk-set
mean and carries an influence-function standard error and Wald interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import RunConfig, SubjectRecord, VisitSchedule
from .errors import FitError, RegressionError
from .nuisance import FittedNuisance, fit_nuisances
from .pseudo import PseudoPanel, pseudo_g, pseudo_ipcw, pseudo_mr
from .windows import WindowData, window_datasets

KINDS = ("mr", "g", "ipcw")
_Z_95 = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# regression basis


@dataclass(frozen=True)
class Basis:
    """Deterministic polynomial/interaction expansion of the covariate matrix.

    Powers of binary columns are skipped (they would duplicate the column and
    make the design singular by construction).
    """

    spec: str
    n_columns: int
    binary: tuple[bool, ...]

    @staticmethod
    def build(W: np.ndarray, spec: str) -> "Basis":
        W = np.atleast_2d(W)
        binary = tuple(bool(np.all((col == 0) | (col == 1))) for col in W.T)
        return Basis(spec, W.shape[1], binary)

    def transform(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if W.shape[1] != self.n_columns:
            raise RegressionError(
                f"expected {self.n_columns} covariate columns, got {W.shape[1]}"
            )
        cols = [np.ones(W.shape[0])]
        if self.spec == "intercept":
            return np.column_stack(cols)
        cols.extend(W.T)
        if self.spec in ("interactions", "poly2", "poly3"):
            for i in range(self.n_columns):
                for j in range(i + 1, self.n_columns):
                    cols.append(W[:, i] * W[:, j])
        if self.spec in ("poly2", "poly3"):
            for i in range(self.n_columns):
                if not self.binary[i]:
                    cols.append(W[:, i] ** 2)
        if self.spec == "poly3":
            for i in range(self.n_columns):
                if not self.binary[i]:
                    cols.append(W[:, i] ** 3)
        return np.column_stack(cols)


def _weighted_mean(y: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * y) / np.sum(w))


def _wls(B: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least squares; intercept-only reduces to the exact weighted mean."""
    if B.shape[1] == 1 and np.all(B[:, 0] == 1.0):
        return np.array([_weighted_mean(y, w)])
    sw = np.sqrt(w)
    coef, _, rank, _ = np.linalg.lstsq(B * sw[:, None], y * sw, rcond=None)
    if rank < B.shape[1]:
        raise RegressionError(
            f"rank-deficient regression basis (rank {rank} < {B.shape[1]} columns)"
        )
    return coef


# ---------------------------------------------------------------------------
# isotonic post-projection


def isotonic_project(values: Sequence[float], weights: Sequence[float] | None = None) -> np.ndarray:
    """L2 projection onto nonincreasing sequences, then clamp to [0, 1].

    Pool-adjacent-violators on the reversed sequence.
    """
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    # project reversed sequence onto nondecreasing
    yr, wr = y[::-1], w[::-1]
    level_y: list[float] = []
    level_w: list[float] = []
    level_n: list[int] = []
    for yi, wi in zip(yr, wr):
        cy, cw, cn = yi, wi, 1
        while level_y and level_y[-1] >= cy:
            py, pw, pn = level_y.pop(), level_w.pop(), level_n.pop()
            cy = (cw * cy + pw * py) / (cw + pw)
            cw += pw
            cn += pn
        level_y.append(cy)
        level_w.append(cw)
        level_n.append(cn)
    out = np.concatenate([np.full(n, v) for v, n in zip(level_y, level_n)])
    return np.clip(out[::-1], 0.0, 1.0)


# ---------------------------------------------------------------------------
# conditional estimator


@dataclass
class ConditionalFit:
    """Fitted window regressions; the estimate at w is their product over windows.

    ``predict`` applies the [0, 1] clamp and (if configured) the isotonic
    projection over the evaluation-time grid; ``predict_raw`` returns the
    bare product.
    """

    kind: str
    schedule: VisitSchedule
    config: RunConfig
    basis: Basis
    coefs: dict[tuple[float, int], np.ndarray]
    n_at_risk_anchor: int
    trim_count: int

    @property
    def taus(self) -> tuple[float, ...]:
        return self.schedule.tau_grid

    def _windows_for(self, tau: float) -> list[int]:
        sched = self.schedule
        return [
            k
            for k in range(sched.anchor, sched.n_visits + 1)
            if sched.visit_times[k - 1] < tau
        ]

    def predict_raw(self, W: np.ndarray) -> np.ndarray:
        """(n_w, n_tau) matrix of un-postprocessed window-regression products."""
        B = self.basis.transform(W)
        out = np.empty((B.shape[0], len(self.taus)))
        for j, tau in enumerate(self.taus):
            prod = np.ones(B.shape[0])
            for k in self._windows_for(tau):
                prod *= B @ self.coefs[(tau, k)]
            out[:, j] = prod
        return out

    def predict(self, W: np.ndarray) -> np.ndarray:
        out = np.clip(self.predict_raw(W), 0.0, 1.0)
        if self.config.isotonic:
            for i in range(out.shape[0]):
                out[i] = isotonic_project(out[i])
        return out


def _panel_for(
    kind: str,
    wd: WindowData,
    schedule: VisitSchedule,
    tau: float,
    nuisances: FittedNuisance,
    trim: float,
) -> PseudoPanel:
    fold_of = nuisances.fold_of if nuisances.folds > 1 else None
    ev = {f: nuisances.event[(wd.k, f)] for f in range(nuisances.folds)} \
        if (wd.k, 0) in nuisances.event else None
    ce = {f: nuisances.censor[(wd.k, f)] for f in range(nuisances.folds)} \
        if (wd.k, 0) in nuisances.censor else None
    if kind == "mr":
        return pseudo_mr(wd, schedule, tau, ev, ce, trim, fold_of)
    if kind == "g":
        return pseudo_g(wd, schedule, tau, ev, fold_of)
    if kind == "ipcw":
        return pseudo_ipcw(wd, schedule, tau, ce, trim, fold_of)
    raise FitError(f"unknown estimator kind {kind!r}")


def _roles_for(kind: str) -> tuple[str, ...]:
    return {"mr": ("event", "censor"), "g": ("event",), "ipcw": ("censor",)}[kind]


def fit_conditional(
    records: Sequence[SubjectRecord],
    schedule: VisitSchedule,
    config: RunConfig,
    kind: str = "mr",
    nuisances: FittedNuisance | None = None,
) -> ConditionalFit:
    """Fit the conditional survival-probability function on the tau grid.

    Nuisance curves are fit once per window and fold and reused across the
    whole grid; only pseudo-outcomes and the final regressions are
    recomputed per evaluation time.
    """
    if kind not in KINDS:
        raise FitError(f"unknown estimator kind {kind!r}")
    wds = window_datasets(records, schedule)
    anchor_wd = wds[schedule.anchor - 1]
    if anchor_wd.n == 0:
        raise FitError("empty risk set at the anchor visit")
    if nuisances is None:
        nuisances = fit_nuisances(records, schedule, config, roles=_roles_for(kind))
    basis = Basis.build(anchor_wd.history[:, list(config.w_indices)], config.basis)
    coefs: dict[tuple[float, int], np.ndarray] = {}
    trim_total = 0
    for tau in schedule.tau_grid:
        for wd in wds[schedule.anchor - 1 :]:
            if wd.start >= tau:
                continue
            if wd.n == 0:
                raise FitError(f"window {wd.k}: empty risk set")
            panel = _panel_for(kind, wd, schedule, tau, nuisances, config.trim)
            W = wd.history[:, list(config.w_indices)]
            B = basis.transform(W)
            coefs[(tau, wd.k)] = _wls(B, panel.y, panel.weight)
            trim_total += panel.trim_count
    return ConditionalFit(
        kind=kind,
        schedule=schedule,
        config=config,
        basis=basis,
        coefs=coefs,
        n_at_risk_anchor=anchor_wd.n,
        trim_count=trim_total,
    )


def contrast_cde(
    fit: ConditionalFit,
    w_treated: np.ndarray,
    w_control: np.ndarray,
    tau: float,
    log_multiplicative: bool = False,
) -> float:
    """Difference in cumulative incidence between two covariate settings.

    The additive contrast is (1 - Q(w_treated)) - (1 - Q(w_control)); the
    log-multiplicative variant contrasts log cumulative incidences instead.
    """
    j = fit.taus.index(tau)
    q = fit.predict(np.vstack([np.atleast_1d(w_treated), np.atleast_1d(w_control)]))
    inc_t, inc_c = 1.0 - q[0, j], 1.0 - q[1, j]
    if log_multiplicative:
        return float(np.log(inc_t) - np.log(inc_c))
    return float(inc_t - inc_c)


# ---------------------------------------------------------------------------
# marginal estimator


@dataclass
class MarginalRow:
    tau: float
    estimate: float
    components: dict[int, float]
    at_risk_fractions: dict[int, float]
    influence: np.ndarray | None
    se: float | None
    ci: tuple[float, float] | None


@dataclass
class MarginalFit:
    kind: str
    schedule: VisitSchedule
    config: RunConfig
    rows: list[MarginalRow]
    n: int
    n_at_risk_anchor: int
    trim_count: int

    def row(self, tau: float) -> MarginalRow:
        for r in self.rows:
            if r.tau == tau:
                return r
        raise KeyError(tau)


def fit_marginal(
    records: Sequence[SubjectRecord],
    schedule: VisitSchedule,
    config: RunConfig,
    kind: str = "mr",
    nuisances: FittedNuisance | None = None,
) -> MarginalFit:
    """Marginal survival probability per evaluation time.

    Each window's component is the risk-set weighted mean of the
    pseudo-outcome; the estimate is their product.  For the augmented
    estimator a per-subject influence value yields the standard error and
    95% Wald interval; the plug-in and inverse-weighted variants report
    point estimates only.
    """
    if kind not in KINDS:
        raise FitError(f"unknown estimator kind {kind!r}")
    wds = window_datasets(records, schedule)
    anchor_wd = wds[schedule.anchor - 1]
    if anchor_wd.n == 0:
        raise FitError("empty risk set at the anchor visit")
    if nuisances is None:
        nuisances = fit_nuisances(records, schedule, config, roles=_roles_for(kind))
    n = len(records)
    weights = np.array([r.weight for r in records])
    total_w = weights.sum()
    rows: list[MarginalRow] = []
    trim_total = 0
    for tau in schedule.tau_grid:
        components: dict[int, float] = {}
        fractions: dict[int, float] = {}
        centered: dict[int, np.ndarray] = {}
        for wd in wds[schedule.anchor - 1 :]:
            if wd.start >= tau:
                continue
            if wd.n == 0:
                raise FitError(f"window {wd.k}: empty risk set")
            panel = _panel_for(kind, wd, schedule, tau, nuisances, config.trim)
            trim_total += panel.trim_count
            q_k = _weighted_mean(panel.y, panel.weight)
            pi_k = float(np.sum(weights[wd.idx]) / total_w)
            components[wd.k] = q_k
            fractions[wd.k] = pi_k
            d_k = np.zeros(n)
            d_k[wd.idx] = (panel.y - q_k) / pi_k
            centered[wd.k] = d_k
        estimate = float(np.prod(list(components.values())))
        influence = se = ci = None
        if kind == "mr":
            influence = np.zeros(n)
            for k, d_k in centered.items():
                other = np.prod([q for j, q in components.items() if j != k])
                influence += d_k * other
            se = float(np.sqrt(np.sum(weights * influence**2) / total_w / n))
            ci = (estimate - _Z_95 * se, estimate + _Z_95 * se)
        rows.append(MarginalRow(tau, estimate, components, fractions, influence, se, ci))
    return MarginalFit(
        kind=kind,
        schedule=schedule,
        config=config,
        rows=rows,
        n=n,
        n_at_risk_anchor=anchor_wd.n,
        trim_count=trim_total,
    )


# ---------------------------------------------------------------------------
# output table


def write_estimate_table(
    path: str | Path,
    fits: Sequence[MarginalFit | ConditionalFit],
    w_rows: np.ndarray | None = None,
    w_labels: Sequence[str] | None = None,
) -> None:
    """Write the plot-ready CSV: one row per (estimator, tau, covariate point).

    Conditional fits are evaluated at ``w_rows``; marginal fits emit one row
    per tau labelled "marginal".
    """
    w_labels = list(w_labels or [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["estimator", "tau", "w", "estimate", "se", "ci_lo", "ci_hi",
             "n_at_risk_anchor", "trim_count"]
        )
        for fit in fits:
            if isinstance(fit, MarginalFit):
                for row in fit.rows:
                    lo, hi = row.ci if row.ci else ("", "")
                    writer.writerow(
                        [fit.kind, row.tau, "marginal", repr(row.estimate),
                         "" if row.se is None else repr(row.se),
                         "" if lo == "" else repr(lo), "" if hi == "" else repr(hi),
                         fit.n_at_risk_anchor, fit.trim_count]
                    )
            else:
                if w_rows is None:
                    raise FitError("conditional fits need covariate rows for the table")
                q = fit.predict(w_rows)
                for i, w in enumerate(np.atleast_2d(w_rows)):
                    label = ";".join(repr(float(v)) for v in w)
                    for j, tau in enumerate(fit.taus):
                        writer.writerow(
                            [fit.kind, tau, label, repr(float(q[i, j])), "", "", "",
                             fit.n_at_risk_anchor, fit.trim_count]
                        )
