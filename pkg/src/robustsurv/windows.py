"""Per-window decomposition of subjects.

Each subject's follow-up is split across the windows between adjacent
visit times.  Within window k the subject is either not at risk (follow-up
ended earlier), or carries a window-local follow-up time in (0, width],
an event flag for an event inside the window, and the covariate history
observed up to the window start.  Events landing exactly on a visit time
belong to the window ending there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SubjectRecord, VisitSchedule


@dataclass(frozen=True)
class WindowView:
    """One subject restricted to one window."""

    k: int
    at_risk: bool
    x_local: float
    event: bool
    history: np.ndarray | None  # stacked covariates of visits 1..k, None if not at risk


def decompose(record: SubjectRecord, schedule: VisitSchedule, horizon: float) -> list[WindowView]:
    """Split a record into one view per window.

    Total function on valid records: window-local follow-ups sum back to the
    (horizon-capped) follow-up, and the event flag appears in exactly the
    window containing the event time.
    """
    if horizon < schedule.visit_times[-1]:
        raise ValueError("horizon must not precede the last visit time")
    views = []
    x, delta = record.followup, record.event
    for k in range(1, schedule.n_visits + 1):
        start = schedule.visit_times[k - 1]
        end = schedule.visit_times[k] if k < schedule.n_visits else horizon
        at_risk = x > start
        x_local = (min(x, end) - start) if at_risk else 0.0
        event = bool(delta and at_risk and x <= end)
        history = None
        if at_risk:
            history = np.concatenate([np.atleast_1d(c) for c in record.covariates[:k]])
        views.append(WindowView(k, at_risk, x_local, event, history))
    return views


@dataclass(frozen=True)
class WindowData:
    """Risk set of one window as flat arrays, ready for model fitting.

    ``x_local`` is follow-up inside the window, ``event`` flags an event in
    the window, ``censor`` flags censoring in the window (event indicator
    with the roles of event and censoring flipped).  Subjects whose
    follow-up crosses the window end carry ``x_local == width`` with both
    flags false.
    """

    k: int
    start: float
    width: float
    idx: np.ndarray       # positions into the original record list
    history: np.ndarray   # (n, d) stacked covariates of visits 1..k
    x_local: np.ndarray
    event: np.ndarray
    censor: np.ndarray
    weight: np.ndarray

    @property
    def n(self) -> int:
        return self.idx.size


def window_datasets(
    records: Sequence[SubjectRecord], schedule: VisitSchedule, horizon: float | None = None
) -> list[WindowData]:
    """Build the per-window risk-set arrays for all windows at once."""
    if horizon is None:
        horizon = schedule.horizon
    out = []
    followup = np.array([r.followup for r in records])
    delta = np.array([r.event for r in records], dtype=bool)
    weight = np.array([r.weight for r in records])
    for k in range(1, schedule.n_visits + 1):
        start = schedule.visit_times[k - 1]
        end = schedule.visit_times[k] if k < schedule.n_visits else horizon
        at_risk = followup > start
        idx = np.flatnonzero(at_risk)
        x_local = np.minimum(followup[idx], end) - start
        in_window = followup[idx] <= end
        event = delta[idx] & in_window
        censor = ~delta[idx] & in_window
        if idx.size:
            history = np.vstack(
                [
                    np.concatenate([np.atleast_1d(c) for c in records[i].covariates[:k]])
                    for i in idx
                ]
            )
        else:
            history = np.empty((0, 0))
        out.append(
            WindowData(
                k=k,
                start=start,
                width=end - start,
                idx=idx,
                history=history,
                x_local=x_local,
                event=event,
                censor=censor,
                weight=weight[idx],
            )
        )
    return out
