"""Shared domain types: visit schedules, subject records, dataset I/O, run config.

All types are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

from .errors import ConfigError, ParseError, ValidationError


@dataclass(frozen=True)
class VisitSchedule:
    """Visit times, anchor visit and evaluation-time grid.

    ``visit_times`` are the fixed times at which covariates are measured,
    strictly increasing.  ``anchor`` is the 1-based index of the visit whose
    covariates define the conditioning variable of the estimand.  All
    evaluation times in ``tau_grid`` must exceed the anchor visit time.
    """

    visit_times: tuple[float, ...]
    anchor: int
    tau_grid: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.visit_times)
        taus = tuple(sorted(float(t) for t in self.tau_grid))
        if len(times) < 1:
            raise ConfigError("at least one visit time is required")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("visit times must be strictly increasing")
        if not (1 <= self.anchor <= len(times)):
            raise ConfigError(f"anchor index {self.anchor} outside 1..{len(times)}")
        if not taus:
            raise ConfigError("tau grid must be nonempty")
        if taus[0] <= times[self.anchor - 1]:
            raise ConfigError(
                f"every evaluation time must exceed the anchor visit time "
                f"{times[self.anchor - 1]}"
            )
        object.__setattr__(self, "visit_times", times)
        object.__setattr__(self, "tau_grid", taus)

    @property
    def n_visits(self) -> int:
        return len(self.visit_times)

    @property
    def horizon(self) -> float:
        """End of the last window: nothing is evaluated past the largest tau."""
        return max(self.tau_grid[-1], self.visit_times[-1])

    def window_bounds(self, k: int) -> tuple[float, float]:
        """(start, end] of window ``k`` (1-based); the last window ends at the horizon."""
        start = self.visit_times[k - 1]
        end = self.visit_times[k] if k < self.n_visits else self.horizon
        return start, end

    def clipped_tau(self, k: int, tau: float) -> float:
        """Evaluation boundary for window ``k``: the window end capped at ``tau``."""
        _, end = self.window_bounds(k)
        return min(end, tau) if k < self.n_visits else tau


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: covariate history, follow-up time and event indicator.

    ``covariates[k]`` (0-based visit index) is the covariate vector measured
    at visit k+1, present exactly when follow-up exceeds that visit time.
    """

    id: str
    covariates: tuple[np.ndarray | None, ...]
    followup: float
    event: bool
    weight: float = 1.0

    def __post_init__(self):
        if not (self.followup > 0):
            raise ValidationError(f"subject {self.id}: follow-up must be positive")
        if not (self.weight > 0):
            raise ValidationError(f"subject {self.id}: weight must be positive")
        covs = tuple(
            None if c is None else np.asarray(c, dtype=float) for c in self.covariates
        )
        object.__setattr__(self, "covariates", covs)

    def validate_presence(self, schedule: VisitSchedule) -> None:
        """Check that covariates are present exactly while the subject is at risk."""
        if len(self.covariates) != schedule.n_visits:
            raise ValidationError(
                f"subject {self.id}: expected {schedule.n_visits} visits, "
                f"got {len(self.covariates)}"
            )
        for k, (t_k, cov) in enumerate(zip(schedule.visit_times, self.covariates), start=1):
            at_risk = self.followup > t_k
            if at_risk and cov is None:
                raise ValidationError(
                    f"subject {self.id}: covariates missing at visit {k} "
                    f"(t={t_k}) although follow-up {self.followup} exceeds it"
                )
            if not at_risk and cov is not None:
                raise ValidationError(
                    f"subject {self.id}: covariates present at visit {k} "
                    f"(t={t_k}) although follow-up {self.followup} does not exceed it"
                )


@dataclass(frozen=True)
class DatasetSchema:
    """Column mapping for the wide one-row-per-subject CSV layout."""

    id_column: str
    followup_column: str
    event_column: str
    visit_columns: tuple[tuple[str, ...], ...]
    weight_column: str | None = None

    def all_columns(self) -> list[str]:
        cols = [self.id_column, self.followup_column, self.event_column]
        if self.weight_column:
            cols.append(self.weight_column)
        for visit in self.visit_columns:
            cols.extend(visit)
        return cols

    def anchor_column_index(self, name: str, anchor: int) -> int:
        """Flat index of a named anchor-history column within the stacked history."""
        flat: list[str] = []
        for visit in self.visit_columns[:anchor]:
            flat.extend(visit)
        try:
            return flat.index(name)
        except ValueError:
            raise ConfigError(
                f"column {name!r} is not among the covariates measured by visit {anchor}"
            ) from None


@dataclass(frozen=True)
class RunConfig:
    """Estimation settings consumed by the fitting routines and the CLI.

    ``event_model`` / ``censor_model`` name the conditional survival model
    used per role, either one name for all windows or one per window.
    ``w_indices`` select columns of the stacked anchor history that make up
    the conditioning variable; ``basis`` names the regression expansion.
    """

    event_model: tuple[str, ...] | str = "cox"
    censor_model: tuple[str, ...] | str = "cox"
    folds: int = 10
    trim: float = 0.05
    seed: int = 0
    isotonic: bool = True
    w_indices: tuple[int, ...] = ()
    basis: str = "linear"

    def __post_init__(self):
        if not (0.0 < self.trim < 0.5):
            raise ConfigError("trim level must lie in (0, 0.5)")
        if self.folds < 1:
            raise ConfigError("fold count must be >= 1")
        if self.basis not in ("intercept", "linear", "interactions", "poly2", "poly3"):
            raise ConfigError(f"unknown basis {self.basis!r}")

    def model_name(self, role: str, k: int) -> str:
        names = self.event_model if role == "event" else self.censor_model
        if isinstance(names, str):
            return names
        return names[k - 1]

    def with_models(self, event: str, censor: str) -> "RunConfig":
        return replace(self, event_model=event, censor_model=censor)


def load_dataset(path: str | Path, schema: DatasetSchema, schedule: VisitSchedule) -> list[SubjectRecord]:
    """Read subject records from a wide CSV and validate the presence pattern.

    Covariate cells may be empty only where the subject's follow-up does not
    exceed the visit time; any other inconsistency raises a row-indexed error.
    """
    records: list[SubjectRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(0, "empty file")
        missing = [c for c in schema.all_columns() if c not in reader.fieldnames]
        if missing:
            raise ParseError(0, f"missing columns {missing}")
        for i, row in enumerate(reader, start=1):
            records.append(_parse_row(i, row, schema, schedule))
    return records


def _parse_row(
    i: int, row: dict[str, str], schema: DatasetSchema, schedule: VisitSchedule
) -> SubjectRecord:
    def number(col: str) -> float:
        raw = (row.get(col) or "").strip()
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(i, f"column {col!r}: cannot parse {raw!r} as a number") from None
        if math.isnan(value):
            raise ParseError(i, f"column {col!r}: NaN is not allowed")
        return value

    followup = number(schema.followup_column)
    event_raw = (row.get(schema.event_column) or "").strip()
    if event_raw not in ("0", "1"):
        raise ParseError(i, f"column {schema.event_column!r}: expected 0 or 1, got {event_raw!r}")
    weight = number(schema.weight_column) if schema.weight_column else 1.0

    covariates: list[np.ndarray | None] = []
    for k, (t_k, cols) in enumerate(zip(schedule.visit_times, schema.visit_columns), start=1):
        if not cols:
            covariates.append(np.empty(0) if followup > t_k else None)
            continue
        cells = [(row.get(c) or "").strip() for c in cols]
        present = [c != "" for c in cells]
        if any(present) and not all(present):
            raise ParseError(i, f"visit {k}: covariates partially missing")
        try:
            covariates.append(np.array([float(c) for c in cells]) if all(present) else None)
        except ValueError:
            raise ParseError(i, f"visit {k}: cannot parse covariate cells {cells!r}") from None

    try:
        record = SubjectRecord(
            id=row[schema.id_column],
            covariates=tuple(covariates),
            followup=followup,
            event=event_raw == "1",
            weight=weight,
        )
        record.validate_presence(schedule)
    except ValidationError as exc:
        raise ValidationError(f"row {i}: {exc}") from None
    return record


def write_dataset(
    path: str | Path,
    records: Sequence[SubjectRecord],
    schema: DatasetSchema,
) -> None:
    """Write records back to the wide CSV layout (round-trips ``load_dataset``)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [schema.id_column, schema.followup_column, schema.event_column]
        if schema.weight_column:
            header.append(schema.weight_column)
        for visit in schema.visit_columns:
            header.extend(visit)
        writer.writerow(header)
        for rec in records:
            row: list[str] = [rec.id, repr(rec.followup), "1" if rec.event else "0"]
            if schema.weight_column:
                row.append(repr(rec.weight))
            for cov, cols in zip(rec.covariates, schema.visit_columns):
                if cov is None:
                    row.extend([""] * len(cols))
                else:
                    row.extend(repr(float(v)) for v in cov)
            writer.writerow(row)


def load_config(path: str | Path) -> tuple[VisitSchedule, DatasetSchema, RunConfig]:
    """Parse the TOML run-configuration file.

    Expected sections: ``[schedule]`` (visit_times, anchor, tau_grid),
    ``[data]`` (column names plus ``[data.visits]``), ``[model]`` and
    ``[regression]``.
    """
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None

    try:
        sched_raw = raw["schedule"]
        schedule = VisitSchedule(
            visit_times=tuple(sched_raw["visit_times"]),
            anchor=int(sched_raw.get("anchor", 1)),
            tau_grid=tuple(sched_raw["tau_grid"]),
        )
        data_raw = raw["data"]
        visits_raw = data_raw.get("visits", {})
        visit_columns = tuple(
            tuple(visits_raw.get(str(k), ())) for k in range(1, schedule.n_visits + 1)
        )
        schema = DatasetSchema(
            id_column=data_raw.get("id", "id"),
            followup_column=data_raw.get("followup", "X"),
            event_column=data_raw.get("event", "Delta"),
            weight_column=data_raw.get("weight") or None,
            visit_columns=visit_columns,
        )
        model_raw = raw.get("model", {})
        reg_raw = raw.get("regression", {})
        w_columns = reg_raw.get("w_columns", ())
        w_indices = tuple(
            schema.anchor_column_index(name, schedule.anchor) for name in w_columns
        )

        def model_spec(value):
            return tuple(value) if isinstance(value, list) else str(value)

        config = RunConfig(
            event_model=model_spec(model_raw.get("event", "cox")),
            censor_model=model_spec(model_raw.get("censor", "cox")),
            folds=int(model_raw.get("folds", 10)),
            trim=float(model_raw.get("trim", 0.05)),
            seed=int(model_raw.get("seed", 0)),
            isotonic=bool(model_raw.get("isotonic", True)),
            w_indices=w_indices,
            basis=str(reg_raw.get("basis", "linear")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None
    return schedule, schema, config
