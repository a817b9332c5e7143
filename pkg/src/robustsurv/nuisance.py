"""Conditional survival models for the event and censoring times of a window.

Each model is fit on one window's risk set and predicts a survival curve
in window-local time, normalised to 1 at the window start.  The censoring
model is the same machinery with the event indicator flipped to "censored
inside the window".

Available models: a covariate-ignoring product-limit curve (``km``), a
proportional-hazards fit with a step baseline (``cox``), and the exact
conditional law of a named synthetic data-generating process
(``oracle:<name>``) discretised onto the pooled observed-time grid.
"""

from __future__ import annotations

import importlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import stepfn
from .core import RunConfig, SubjectRecord, VisitSchedule
from .errors import ConvergenceError, FitError
from .stepfn import StepSurvival
from .windows import WindowData, window_datasets

_MAX_NEWTON_ITER = 50
_GRADIENT_TOL = 1e-9
_BETA_DIVERGENCE_NORM = 50.0


class ConditionalSurvivalModel(ABC):
    """Interface: fit on a window risk set, predict per-history survival curves."""

    @abstractmethod
    def fit(self, wd: WindowData, role: str) -> "ConditionalSurvivalModel":
        """Fit on the window's risk set; ``role`` selects the event or censor flag."""

    @abstractmethod
    def predict(self, history: np.ndarray) -> StepSurvival:
        """Survival curve (absolute time) for one covariate history."""

    @abstractmethod
    def predict_grid(self, history: np.ndarray, grid_local: np.ndarray) -> np.ndarray:
        """Curve values at window-local grid times.

        Returns an array broadcastable to ``(n, len(grid_local))``; models
        that ignore covariates may return shape ``(1, J)``.
        """


def _role_flag(wd: WindowData, role: str) -> np.ndarray:
    if role == "event":
        return wd.event
    if role == "censor":
        return wd.censor
    raise ValueError(f"unknown role {role!r}")


def _product_limit(
    x: np.ndarray, flag: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted product-limit curve: (jump times, post-jump values).

    At tied times events are resolved before censorings, i.e. the risk set
    at time t contains everyone with x >= t.
    """
    times = np.unique(x[flag])
    if times.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(x, kind="stable")
    xs, ws, fs = x[order], weight[order], flag[order]
    total = ws.sum()
    # risk mass at t: weights with x >= t
    first_ge = np.searchsorted(xs, times, side="left")
    cum = np.concatenate(([0.0], np.cumsum(ws)))
    at_risk = total - cum[first_ge]
    ev_mass = np.zeros(times.size)
    pos = np.searchsorted(times, xs[fs])
    np.add.at(ev_mass, pos, ws[fs])
    factors = 1.0 - ev_mass / at_risk
    values = np.cumprod(factors)
    return times, np.clip(values, 0.0, 1.0)


class KaplanMeierModel(ConditionalSurvivalModel):
    """Covariate-ignoring product-limit curve for the window."""

    def __init__(self):
        self.start: float | None = None
        self.jump_times = np.empty(0)
        self.values = np.empty(0)

    def fit(self, wd: WindowData, role: str) -> "KaplanMeierModel":
        if wd.n == 0:
            raise FitError(f"window {wd.k}: empty risk set")
        self.start = wd.start
        self.jump_times, self.values = _product_limit(
            wd.x_local, _role_flag(wd, role), wd.weight
        )
        return self

    def predict(self, history: np.ndarray) -> StepSurvival:
        return StepSurvival(self.start, self.start + self.jump_times, self.values)

    def predict_grid(self, history: np.ndarray, grid_local: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.jump_times, grid_local, side="right") - 1
        padded = np.concatenate(([1.0], self.values))
        return padded[idx + 1][None, :]


class CoxBreslowModel(ConditionalSurvivalModel):
    """Proportional-hazards fit with a step baseline survival curve.

    Ties are handled with the simple (shared-denominator) convention, which
    matches the step baseline.  Covariates are centred before fitting; the
    baseline refers to the centred zero vector.
    """

    def __init__(self, feature_map: Callable[[np.ndarray], np.ndarray] | None = None):
        self.feature_map = feature_map
        self.beta: np.ndarray | None = None
        self.center: np.ndarray | None = None
        self.keep: np.ndarray | None = None
        self.start: float | None = None
        self.base_times = np.empty(0)
        self.base_surv = np.empty(0)

    def _features(self, history: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(history, dtype=float))
        return self.feature_map(h) if self.feature_map is not None else h

    def fit(self, wd: WindowData, role: str) -> "CoxBreslowModel":
        if wd.n == 0:
            raise FitError(f"window {wd.k}: empty risk set")
        flag = _role_flag(wd, role)
        if not flag.any():
            raise FitError(f"window {wd.k}: no events for Cox fit")
        Z = self._features(wd.history)
        self.start = wd.start
        self.center = Z.mean(axis=0)
        Zc = Z - self.center
        self.keep = np.ptp(Zc, axis=0) > 0
        Zc = Zc[:, self.keep]
        if Zc.shape[1] and np.linalg.matrix_rank(Zc) < Zc.shape[1]:
            raise FitError(f"window {wd.k}: design matrix rank-deficient after centering")
        self.beta = _newton_raphson_cox(wd.x_local, flag, Zc, wd.weight)
        self.base_times, self.base_surv = _breslow_baseline(
            wd.x_local, flag, Zc, wd.weight, self.beta
        )
        return self

    def _risk_score(self, history: np.ndarray) -> np.ndarray:
        Z = self._features(history)
        Zc = (Z - self.center)[:, self.keep]
        return np.exp(Zc @ self.beta)

    def predict(self, history: np.ndarray) -> StepSurvival:
        rr = float(self._risk_score(history)[0])
        return stepfn.from_grid(
            self.start, self.start + self.base_times, self.base_surv ** rr
        )

    def predict_grid(self, history: np.ndarray, grid_local: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.base_times, grid_local, side="right") - 1
        padded = np.concatenate(([1.0], self.base_surv))
        base = padded[idx + 1]
        rr = self._risk_score(history)
        return base[None, :] ** rr[:, None]


def cox_partial_loglik(
    beta: np.ndarray, x: np.ndarray, flag: np.ndarray, Z: np.ndarray, weight: np.ndarray
) -> float:
    """Log partial likelihood with shared denominators at tied times."""
    _, ll, _, _ = _cox_quantities(beta, x, flag, Z, weight, need_derivs=False)
    return ll


def cox_score(
    beta: np.ndarray, x: np.ndarray, flag: np.ndarray, Z: np.ndarray, weight: np.ndarray
) -> np.ndarray:
    """Gradient of the log partial likelihood."""
    _, _, score, _ = _cox_quantities(beta, x, flag, Z, weight, need_derivs=True)
    return score


def _cox_quantities(beta, x, flag, Z, weight, need_derivs=True):
    order = np.argsort(x, kind="stable")
    xs, Zs, ws, fs = x[order], Z[order], weight[order], flag[order]
    eta = Zs @ beta
    r = ws * np.exp(eta)
    # suffix sums over the risk sets {x >= t}
    suff_r = np.cumsum(r[::-1])[::-1]
    event_times, first = np.unique(xs[fs], return_index=True)
    start_idx = np.searchsorted(xs, event_times, side="left")
    d_mass = np.zeros(event_times.size)
    np.add.at(d_mass, np.searchsorted(event_times, xs[fs]), ws[fs])
    R = suff_r[start_idx]
    ll = float(np.sum(ws[fs] * eta[fs]) - np.sum(d_mass * np.log(R)))
    if not need_derivs:
        return event_times, ll, None, None
    rZ = r[:, None] * Zs
    suff_rZ = np.cumsum(rZ[::-1], axis=0)[::-1]
    num1 = suff_rZ[start_idx]  # (m, p)
    mean = num1 / R[:, None]
    score = Zs[fs].T @ ws[fs] - mean.T @ d_mass
    p = Z.shape[1]
    rZZ = rZ[:, :, None] * Zs[:, None, :]
    suff_rZZ = np.cumsum(rZZ[::-1], axis=0)[::-1]
    num2 = suff_rZZ[start_idx]
    hess = -(
        np.einsum("m,mij->ij", d_mass, num2 / R[:, None, None])
        - np.einsum("m,mi,mj->ij", d_mass, mean, mean)
    )
    return event_times, ll, score, hess


def _newton_raphson_cox(x, flag, Z, weight) -> np.ndarray:
    p = Z.shape[1]
    beta = np.zeros(p)
    if p == 0:
        return beta
    _, ll, score, hess = _cox_quantities(beta, x, flag, Z, weight)
    for _ in range(_MAX_NEWTON_ITER):
        grad_norm = float(np.linalg.norm(score))
        if grad_norm < _GRADIENT_TOL:
            return beta
        try:
            step = np.linalg.solve(hess, -score)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "singular Hessian in partial-likelihood optimisation", grad_norm
            ) from None
        # step halving until the likelihood does not decrease
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            _, ll_new, score_new, hess_new = _cox_quantities(cand, x, flag, Z, weight)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("step halving failed", grad_norm)
        beta, ll, score, hess = cand, ll_new, score_new, hess_new
        if np.linalg.norm(beta) > _BETA_DIVERGENCE_NORM:
            raise ConvergenceError(
                "divergent coefficients (monotone partial likelihood)",
                float(np.linalg.norm(score)),
            )
    grad_norm = float(np.linalg.norm(score))
    if grad_norm >= _GRADIENT_TOL:
        raise ConvergenceError(
            f"no convergence after {_MAX_NEWTON_ITER} iterations", grad_norm
        )
    return beta


def _breslow_baseline(x, flag, Z, weight, beta) -> tuple[np.ndarray, np.ndarray]:
    """Step baseline survival exp(-cumulative hazard) at the event times."""
    order = np.argsort(x, kind="stable")
    xs, Zs, ws, fs = x[order], Z[order], weight[order], flag[order]
    r = ws * np.exp(Zs @ beta)
    suff_r = np.cumsum(r[::-1])[::-1]
    event_times = np.unique(xs[fs])
    start_idx = np.searchsorted(xs, event_times, side="left")
    d_mass = np.zeros(event_times.size)
    np.add.at(d_mass, np.searchsorted(event_times, xs[fs]), ws[fs])
    hazard_increments = d_mass / suff_r[start_idx]
    surv = np.exp(-np.cumsum(hazard_increments))
    return event_times, surv


class WeibullOracle:
    """Interface a synthetic data generator exposes so the exact conditional
    laws can be used as nuisance curves.

    ``weibull_params(k, role, history)`` returns (shape, scales) of the
    window-local law for each row of ``history``.
    """

    def weibull_params(
        self, k: int, role: str, history: np.ndarray
    ) -> tuple[float, np.ndarray]:  # pragma: no cover - interface
        raise NotImplementedError


class OracleModel(ConditionalSurvivalModel):
    """The generating process's exact conditional curve, discretised onto the
    pooled observed-time grid of the window (plus the window endpoint) so the
    downstream sums touch every observed time."""

    def __init__(self, dgp: WeibullOracle, role: str | None = None):
        self.dgp = dgp
        self.k: int | None = None
        self.role: str | None = role
        self.start: float | None = None
        self.grid = np.empty(0)

    def fit(self, wd: WindowData, role: str) -> "OracleModel":
        self.k = wd.k
        self.role = role
        self.start = wd.start
        self.grid = np.unique(np.concatenate([wd.x_local, [wd.width]]))
        self.grid = self.grid[self.grid > 0]
        return self

    def predict(self, history: np.ndarray) -> StepSurvival:
        values = self.predict_grid(history, self.grid)[0]
        return stepfn.from_grid(self.start, self.start + self.grid, values)

    def predict_grid(self, history: np.ndarray, grid_local: np.ndarray) -> np.ndarray:
        shape, scales = self.dgp.weibull_params(
            self.k, self.role, np.atleast_2d(np.asarray(history, dtype=float))
        )
        with np.errstate(divide="ignore"):
            out = np.exp(-((grid_local[None, :] / scales[:, None]) ** shape))
        return out


_DGP_REGISTRY: dict[str, WeibullOracle] = {}


def register_dgp(name: str, dgp: WeibullOracle) -> None:
    _DGP_REGISTRY[name] = dgp


def make_model(name: str) -> ConditionalSurvivalModel:
    """Instantiate a model from its config name: ``km``, ``cox`` or ``oracle:<dgp>``."""
    if name == "km":
        return KaplanMeierModel()
    if name == "cox":
        return CoxBreslowModel()
    if name.startswith("oracle:"):
        dgp_name = name.split(":", 1)[1]
        if dgp_name not in _DGP_REGISTRY:
            importlib.import_module(".simulate", __package__)
        if dgp_name not in _DGP_REGISTRY:
            raise FitError(f"unknown data-generating process {dgp_name!r}")
        return OracleModel(_DGP_REGISTRY[dgp_name])
    raise FitError(f"unknown nuisance model {name!r}")


def fit_km(wd: WindowData, role: str = "event") -> KaplanMeierModel:
    """Fit the covariate-ignoring product-limit model on a window risk set."""
    return KaplanMeierModel().fit(wd, role)


def fit_cox_breslow(
    wd: WindowData,
    feature_map: Callable[[np.ndarray], np.ndarray] | None = None,
    role: str = "event",
) -> CoxBreslowModel:
    """Fit the proportional-hazards model with a step baseline."""
    return CoxBreslowModel(feature_map).fit(wd, role)


def fit_oracle(dgp: WeibullOracle | str, wd: WindowData, role: str = "event") -> OracleModel:
    """Expose a generating process's exact conditional curve as a fitted model."""
    if isinstance(dgp, str):
        model = make_model(f"oracle:{dgp}")
    else:
        model = OracleModel(dgp)
    return model.fit(wd, role)


@dataclass
class FittedNuisance:
    """Event and censoring models per (window, cross-fit fold).

    ``fold_of`` maps each record position to the fold whose held-out rows it
    belongs to; with a single fold everything is fit on the full sample.
    """

    folds: int
    fold_of: np.ndarray
    event: dict[tuple[int, int], ConditionalSurvivalModel] = field(default_factory=dict)
    censor: dict[tuple[int, int], ConditionalSurvivalModel] = field(default_factory=dict)

    def model(self, role: str, k: int, fold: int) -> ConditionalSurvivalModel:
        table = self.event if role == "event" else self.censor
        return table[(k, fold)]


def assign_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """Deterministic fold labels: a seeded permutation dealt round-robin."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    fold_of[rng.permutation(n)] = np.arange(n) % folds
    return fold_of


def fit_nuisances(
    records: Sequence[SubjectRecord],
    schedule: VisitSchedule,
    config: RunConfig,
    horizon: float | None = None,
    roles: tuple[str, ...] = ("event", "censor"),
) -> FittedNuisance:
    """Fit the configured event/censor model per window and fold.

    Models for fold f are trained on the risk-set rows of all other folds,
    so held-out pseudo-outcomes never see their own subject.
    """
    wds = window_datasets(records, schedule, horizon)
    fold_of = assign_folds(len(records), config.folds, config.seed)
    fitted = FittedNuisance(folds=config.folds, fold_of=fold_of)
    for wd in wds:
        if wd.k < schedule.anchor:
            continue
        for fold in range(config.folds):
            if config.folds > 1:
                train = fold_of[wd.idx] != fold
                sub = subset_window(wd, train)
            else:
                sub = wd
            if sub.n == 0:
                raise FitError(f"window {wd.k}: empty training risk set for fold {fold}")
            for role in roles:
                model = make_model(config.model_name(role, wd.k))
                table = fitted.event if role == "event" else fitted.censor
                table[(wd.k, fold)] = model.fit(sub, role)
    return fitted


def subset_window(wd: WindowData, mask: np.ndarray) -> WindowData:
    return WindowData(
        k=wd.k,
        start=wd.start,
        width=wd.width,
        idx=wd.idx[mask],
        history=wd.history[mask],
        x_local=wd.x_local[mask],
        event=wd.event[mask],
        censor=wd.censor[mask],
        weight=wd.weight[mask],
    )
