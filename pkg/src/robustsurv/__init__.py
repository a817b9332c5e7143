"""Multiply robust estimation of conditional and marginal survival
probabilities under right-censoring explained by covariates measured at
fixed visit times."""

from .core import (
    DatasetSchema,
    RunConfig,
    SubjectRecord,
    VisitSchedule,
    load_config,
    load_dataset,
    write_dataset,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    FitError,
    ParseError,
    PositivityError,
    RegressionError,
    RobustSurvError,
    ValidationError,
)
from .estimate import (
    ConditionalFit,
    MarginalFit,
    contrast_cde,
    fit_conditional,
    fit_marginal,
    isotonic_project,
    write_estimate_table,
)
from .nuisance import (
    CoxBreslowModel,
    KaplanMeierModel,
    OracleModel,
    fit_cox_breslow,
    fit_km,
    fit_nuisances,
    fit_oracle,
    make_model,
    register_dgp,
)
from .pseudo import dr_transform, pseudo_g, pseudo_ipcw, pseudo_mr
from .simulate import (
    TRIAL_SCHEDULE,
    generate,
    run_benchmark,
    truth_conditional,
    truth_marginal,
)
from .stepfn import StepSurvival
from .windows import WindowData, decompose, window_datasets

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
