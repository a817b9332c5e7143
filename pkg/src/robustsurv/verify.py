"""Exact verification oracles on finite discrete laws.

Event and censoring times live on a small shared grid of support points, so
every expectation is a finite sum and identities can be checked to machine
precision: the inverse-weighting representation of the augmented
pseudo-outcome, its two robustness branches (risk-set mean equal to the true
window survival when either working curve is correct), the closed-form bias
when both curves are wrong, and multi-window robustness of the product
estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .pseudo import dr_transform
from .stepfn import StepSurvival


@dataclass(frozen=True)
class DiscreteLaw:
    """Law of a positive time on a finite grid, given by discrete hazards.

    ``hazards[j]`` is the conditional probability of the time equalling
    ``times[j]`` given it is >= ``times[j]``.  Mass ``survival_beyond`` may
    remain past the grid (the time then exceeds every support point).
    """

    times: tuple[float, ...]
    hazards: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        hazards = tuple(float(h) for h in self.hazards)
        if len(times) != len(hazards):
            raise ValueError("times and hazards must have equal length")
        if any(t <= 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing and positive")
        if any(not (0.0 <= h <= 1.0) for h in hazards):
            raise ValueError("hazards must lie in [0, 1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "hazards", hazards)

    @property
    def survival_values(self) -> np.ndarray:
        """S(t_j) = prod_{i<=j} (1 - hazard_i)."""
        return np.cumprod(1.0 - np.asarray(self.hazards))

    @property
    def pmf(self) -> np.ndarray:
        """P(time == t_j) = S(t_{j-1}) * hazard_j."""
        prev = np.concatenate(([1.0], self.survival_values[:-1]))
        return prev * np.asarray(self.hazards)

    @property
    def survival_beyond(self) -> float:
        s = self.survival_values
        return float(s[-1]) if s.size else 1.0

    def survival(self, t: float) -> float:
        """P(time > t), right-continuous step function."""
        return self.to_step().eval(t)

    def to_step(self, window_start: float = 0.0) -> StepSurvival:
        return StepSurvival(
            window_start,
            tuple(window_start + t for t in self.times),
            tuple(self.survival_values),
        )

    def hazards_on(self, grid: Sequence[float]) -> np.ndarray:
        """Hazards looked up per grid point (zero off the support)."""
        lookup = dict(zip(self.times, self.hazards))
        return np.array([lookup.get(t, 0.0) for t in grid])

    @staticmethod
    def constant_one(times: Sequence[float] = ()) -> "DiscreteLaw":
        """The degenerate law with all mass beyond the grid (survival == 1)."""
        return DiscreteLaw(tuple(times), (0.0,) * len(times))

    @staticmethod
    def random(rng: np.random.Generator, times: Sequence[float],
               low: float = 0.05, high: float = 0.95) -> "DiscreteLaw":
        return DiscreteLaw(tuple(times), tuple(rng.uniform(low, high, len(times))))


def hazard_survival_roundtrip(law: DiscreteLaw) -> float:
    """Max abs error of hazards recovered from the survival values.

    hazard_j = (S_{j-1} - S_j) / S_{j-1}; exact for nonvanishing survival.
    """
    s = law.survival_values
    prev = np.concatenate(([1.0], s[:-1]))
    recovered = np.divide(prev - s, prev, out=np.zeros_like(s), where=prev > 0)
    return float(np.max(np.abs(recovered - np.asarray(law.hazards)), initial=0.0))


def merged_grid(*laws: DiscreteLaw) -> tuple[float, ...]:
    return tuple(sorted({t for law in laws for t in law.times}))


def outcomes(
    law_t: DiscreteLaw, law_c: DiscreteLaw, t_bar: float
) -> Iterator[tuple[float, float, bool]]:
    """Enumerate (probability, follow-up, event flag) for independent T and C.

    Convention at ties: the event is observed (the subject is at risk for
    censoring at t only if still event-free after t), so the censoring curve
    enters the estimators through its left limit.  Times beyond both grids
    are collapsed to a single point past ``t_bar``, where the pseudo-outcome
    no longer depends on the exact value.
    """
    beyond = max([t_bar] + list(law_t.times) + list(law_c.times)) + 1.0
    t_support = list(zip(law_t.times, law_t.pmf)) + [(beyond, law_t.survival_beyond)]
    c_support = list(zip(law_c.times, law_c.pmf)) + [(beyond, law_c.survival_beyond)]
    for t, pt in t_support:
        for c, pc in c_support:
            p = pt * pc
            if p == 0.0:
                continue
            yield p, min(t, c), t <= c


def mr_expectation(
    s_true: DiscreteLaw,
    g_true: DiscreteLaw,
    s_hat: DiscreteLaw,
    g_hat: DiscreteLaw,
    t_bar: float,
) -> float:
    """E[augmented pseudo-outcome] by exact enumeration.

    The data law is (s_true, g_true); the pseudo-outcome uses the working
    curves (s_hat, g_hat).
    """
    S = s_hat.to_step()
    G = g_hat.to_step()
    s_tbar = S.eval(t_bar)
    total = 0.0
    for p, x, delta in outcomes(s_true, g_true, t_bar):
        total += p * (s_tbar + dr_transform(S, G, x, delta, t_bar))
    return total


def ipcw_expectation(g_true: DiscreteLaw, s_true: DiscreteLaw,
                     g_hat: DiscreteLaw, t_bar: float) -> float:
    """E[inverse-censoring-weighted pseudo-outcome] by exact enumeration."""
    G = g_hat.to_step()
    total = 0.0
    for p, x, delta in outcomes(s_true, g_true, t_bar):
        y = 1.0
        if delta and x <= t_bar:
            y -= 1.0 / G.left_limit(x)
        total += p * y
    return total


def ipcw_mr_gap(g_hat: DiscreteLaw, x: float, delta: bool, t_bar: float) -> float:
    """Pointwise difference between the inverse-weighted pseudo-outcome and
    the augmented one evaluated with the constant-one working event curve.

    Zero identically: the augmentation integral vanishes when the event
    curve has no jumps.
    """
    G = g_hat.to_step()
    ipcw = 1.0 - (1.0 / G.left_limit(x) if delta and x <= t_bar else 0.0)
    unit_s = DiscreteLaw.constant_one(g_hat.times).to_step()
    mr = 1.0 + dr_transform(unit_s, G, x, delta, t_bar)
    return ipcw - mr


def remainder_closed_form(
    s_true: DiscreteLaw,
    g_true: DiscreteLaw,
    s_hat: DiscreteLaw,
    g_hat: DiscreteLaw,
    t_bar: float,
) -> float:
    """Closed-form bias of the augmented pseudo-outcome mean.

    Equals ``mr_expectation(...) - s_true.survival(t_bar)`` exactly on
    discrete laws: a sum over the grid of products of the relative error of
    the censoring curve (up to the previous point) and the hazard error of
    the event curve, scaled by the working curve value at ``t_bar``.
    """
    grid = [t for t in merged_grid(s_true, g_true, s_hat, g_hat) if t <= t_bar]
    lam_hat = s_hat.hazards_on(grid)
    lam_true = s_true.hazards_on(grid)
    S_hat = s_hat.to_step()
    G_hat = g_hat.to_step()
    G_true = g_true.to_step()
    S_true = s_true.to_step()
    total = 0.0
    for j, t in enumerate(grid):
        prev = grid[j - 1] if j else 0.0
        g_hat_prev = G_hat.eval(prev)
        s_hat_t = S_hat.eval(t)
        if g_hat_prev == 0.0 or s_hat_t == 0.0:
            raise ZeroDivisionError("working curves must stay positive on the grid")
        total += (
            (g_hat_prev - G_true.eval(prev)) / g_hat_prev
            * S_true.eval(prev) * (lam_hat[j] - lam_true[j]) / s_hat_t
        )
    return -S_hat.eval(t_bar) * total


# ---------------------------------------------------------------------------
# two-window laws


@dataclass(frozen=True)
class WindowLaws:
    """True and working event/censoring laws for one window (local time)."""

    s_true: DiscreteLaw
    g_true: DiscreteLaw
    s_hat: DiscreteLaw
    g_hat: DiscreteLaw


@dataclass(frozen=True)
class TwoWindowLaw:
    """A two-visit process with a discrete covariate drawn at the second visit.

    Window 1 has one set of laws; subjects alive (event-free and uncensored)
    at its end draw a level with probabilities ``level_probs`` and follow the
    corresponding window-2 laws.  All laws are in window-local time.
    """

    window1: WindowLaws
    level_probs: tuple[float, ...]
    window2: tuple[WindowLaws, ...]
    width1: float

    def __post_init__(self):
        if len(self.level_probs) != len(self.window2):
            raise ValueError("one window-2 law set per level is required")
        if abs(sum(self.level_probs) - 1.0) > 1e-12:
            raise ValueError("level probabilities must sum to 1")

    def truth(self, tau: float) -> float:
        """P(event time > tau) for tau past the second visit."""
        s1 = self.window1.s_true.survival(self.width1)
        s2 = sum(
            p * laws.s_true.survival(tau - self.width1)
            for p, laws in zip(self.level_probs, self.window2)
        )
        return s1 * s2

    def with_working(
        self,
        s1_correct: bool,
        g1_correct: bool,
        s2_correct: bool,
        g2_correct: bool,
    ) -> "TwoWindowLaw":
        """Replace working curves by the true ones where flagged correct."""
        w1 = WindowLaws(
            self.window1.s_true,
            self.window1.g_true,
            self.window1.s_true if s1_correct else self.window1.s_hat,
            self.window1.g_true if g1_correct else self.window1.g_hat,
        )
        w2 = tuple(
            WindowLaws(
                l.s_true,
                l.g_true,
                l.s_true if s2_correct else l.s_hat,
                l.g_true if g2_correct else l.g_hat,
            )
            for l in self.window2
        )
        return TwoWindowLaw(w1, self.level_probs, w2, self.width1)

    def population_estimate(self, tau: float) -> float:
        """Infinite-data value of the product-of-risk-set-means estimator.

        Window components are exact conditional expectations of the
        augmented pseudo-outcome; the level distribution among the window-2
        risk set equals ``level_probs`` because the draw is independent of
        the window-1 outcome given survival.
        """
        w1 = self.window1
        q1 = mr_expectation(w1.s_true, w1.g_true, w1.s_hat, w1.g_hat, self.width1)
        q2 = sum(
            p * mr_expectation(l.s_true, l.g_true, l.s_hat, l.g_hat, tau - self.width1)
            for p, l in zip(self.level_probs, self.window2)
        )
        return q1 * q2


# ---------------------------------------------------------------------------
# randomized suites


def _random_times(rng: np.random.Generator, max_points: int, upper: float) -> tuple[float, ...]:
    m = int(rng.integers(1, max_points + 1))
    return tuple(np.sort(rng.uniform(0.05, upper, m)))


def random_window(
    rng: np.random.Generator, t_bar: float, max_points: int = 6
) -> WindowLaws:
    """Four independent random laws, each on its own random grid."""
    def law():
        return DiscreteLaw.random(rng, _random_times(rng, max_points, 1.3 * t_bar))
    return WindowLaws(law(), law(), law(), law())


def identity_suite(n_laws: int = 1000, seed: int = 0, max_points: int = 6,
                   t_bar: float = 1.0) -> dict[str, float]:
    """Max abs identity errors over random single-window discrete laws.

    Checked per law: the risk-set mean of the augmented pseudo-outcome hits
    the true window survival when the event curve is correct and when the
    censoring curve is correct; the closed-form remainder equals the actual
    bias when both are wrong; the inverse-weighted pseudo-outcome equals the
    augmented one with the constant-one event curve at every support
    outcome; the inverse-weighted mean is unbiased under the true censoring
    curve; and hazards round-trip through survival values.
    """
    rng = np.random.default_rng(seed)
    errs = {
        "event_curve_correct": 0.0,
        "censor_curve_correct": 0.0,
        "remainder": 0.0,
        "ipcw_representation": 0.0,
        "ipcw_unbiased": 0.0,
        "hazard_roundtrip": 0.0,
    }
    for _ in range(n_laws):
        laws = random_window(rng, t_bar, max_points)
        truth = laws.s_true.survival(t_bar)
        errs["event_curve_correct"] = max(
            errs["event_curve_correct"],
            abs(mr_expectation(laws.s_true, laws.g_true, laws.s_true, laws.g_hat, t_bar) - truth),
        )
        errs["censor_curve_correct"] = max(
            errs["censor_curve_correct"],
            abs(mr_expectation(laws.s_true, laws.g_true, laws.s_hat, laws.g_true, t_bar) - truth),
        )
        bias = mr_expectation(laws.s_true, laws.g_true, laws.s_hat, laws.g_hat, t_bar) - truth
        rem = remainder_closed_form(laws.s_true, laws.g_true, laws.s_hat, laws.g_hat, t_bar)
        # the remainder can be orders of magnitude above 1 when the working
        # censoring curve gets tiny; compare on the scale of the quantity
        errs["remainder"] = max(errs["remainder"], abs(bias - rem) / max(1.0, abs(bias)))
        for _, x, delta in outcomes(laws.s_true, laws.g_true, t_bar):
            errs["ipcw_representation"] = max(
                errs["ipcw_representation"], abs(ipcw_mr_gap(laws.g_hat, x, delta, t_bar))
            )
        errs["ipcw_unbiased"] = max(
            errs["ipcw_unbiased"],
            abs(ipcw_expectation(laws.g_true, laws.s_true, laws.g_true, t_bar) - truth),
        )
        for law in (laws.s_true, laws.g_true, laws.s_hat, laws.g_hat):
            errs["hazard_roundtrip"] = max(
                errs["hazard_roundtrip"], hazard_survival_roundtrip(law)
            )
    return errs


def random_two_window_law(rng: np.random.Generator, width1: float = 1.0,
                          n_levels: int = 3, max_points: int = 4) -> TwoWindowLaw:
    probs = rng.dirichlet(np.ones(n_levels))
    return TwoWindowLaw(
        window1=random_window(rng, width1, max_points),
        level_probs=tuple(probs),
        window2=tuple(random_window(rng, width1, max_points) for _ in range(n_levels)),
        width1=width1,
    )


def two_window_suite(n_laws: int = 50, seed: int = 0, tau: float = 2.0) -> float:
    """Max abs error of the population product estimator over all per-window
    correct-curve patterns (either curve correct in each window, independently)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_laws):
        law = random_two_window_law(rng)
        truth = law.truth(tau)
        for s1 in (True, False):
            for s2 in (True, False):
                patched = law.with_working(s1, not s1, s2, not s2)
                worst = max(worst, abs(patched.population_estimate(tau) - truth))
    return worst
