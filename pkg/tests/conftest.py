import numpy as np
import pytest

from robustsurv.core import RunConfig
from robustsurv.simulate import TRIAL_SCHEDULE, generate


@pytest.fixture(scope="session")
def trial_records():
    return generate(400, seed=20240817)


@pytest.fixture(scope="session")
def trial_schedule():
    return TRIAL_SCHEDULE


@pytest.fixture
def oracle_config():
    return RunConfig(
        event_model="oracle:trial",
        censor_model="oracle:trial",
        folds=4,
        trim=0.05,
        seed=5,
        w_indices=(0, 1, 2),
        basis="linear",
    )


def random_step_curve(rng, start=0.0, max_jumps=6, floor=0.02):
    """Random nonincreasing step curve bounded away from zero."""
    m = int(rng.integers(1, max_jumps + 1))
    times = start + np.sort(rng.uniform(0.05, 2.0, m))
    drops = rng.uniform(0.05, 0.6, m)
    values = np.cumprod(1.0 - drops)
    values = floor + (1.0 - floor) * values
    from robustsurv.stepfn import StepSurvival

    return StepSurvival(start, times, values)
