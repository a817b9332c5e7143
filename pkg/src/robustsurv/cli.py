"""Command-line front end.

Subcommands: ``simulate`` (write a synthetic trial dataset), ``fit``
(estimate survival probabilities from a dataset plus TOML config),
``truth`` (Monte Carlo truth of the synthetic trial), ``verify`` (exact
identity checks on random discrete laws), ``benchmark`` (replication
study).  Exit codes: 0 success, 2 configuration error, 3 data error,
4 fit/numeric error (also used for failed verification).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import simulate
from .core import load_config, load_dataset, write_dataset
from .errors import ConfigError, DataError, FitError, RobustSurvError
from .estimate import fit_conditional, fit_marginal, write_estimate_table
from .verify import identity_suite, two_window_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIT = 4

CONFIG_KEYS_HELP = """\
config file keys (TOML):
  [schedule]    visit_times (list), anchor (int, default 1), tau_grid (list)
  [data]        id, followup, event, weight (column names)
  [data.visits] "1" = [cols...], "2" = [cols...], ... per visit
  [model]       event, censor (km | cox | oracle:<dgp>, or one per window),
                folds (default 10), trim (default 0.05), seed (default 0),
                isotonic (default true)
  [regression]  basis (intercept | linear | interactions | poly2 | poly3),
                w_columns (anchor-history column names)
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustsurv",
        description="Multiply robust survival-probability estimation "
        "under covariate-explained right-censoring.",
        epilog=CONFIG_KEYS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic trial dataset CSV")
    p.add_argument("--n", type=int, default=2000, help="number of subjects")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset CSV path")

    p = sub.add_parser("fit", help="estimate survival probabilities",
                       epilog=CONFIG_KEYS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=True, help="output estimate CSV")
    p.add_argument("--estimator", choices=("mr", "g", "ipcw"), default="mr")
    p.add_argument("--marginal", action="store_true",
                   help="marginal estimand instead of the conditional function")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed (fold assignment)")

    p = sub.add_parser("truth", help="Monte Carlo truth of the synthetic trial")
    p.add_argument("--n", type=int, default=10**6, help="Monte Carlo draws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=simulate.TAU)

    p = sub.add_parser("verify", help="exact identity checks on random discrete laws")
    p.add_argument("--reps", type=int, default=1000, help="number of random laws")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("benchmark", help="replication benchmark of the estimator arms")
    p.add_argument("--out", required=True,
                   help="output prefix; writes <out>.csv and <out>.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=None,
                   help="replications (default 500 marginal, 200 conditional)")
    p.add_argument("--n", type=int, nargs="+", default=None,
                   help="sample sizes (default 2000 marginal, 500 1000 2000 conditional)")
    p.add_argument("--threads", type=int, default=1, help="parallel worker cap")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--marginal", dest="mode", action="store_const",
                      const="marginal", help="marginal bias/coverage benchmark (default)")
    mode.add_argument("--conditional", dest="mode", action="store_const",
                      const="conditional", help="conditional L2-distance benchmark")
    p.set_defaults(mode="marginal")
    return parser


def _cmd_simulate(args) -> int:
    records = simulate.generate(args.n, args.seed)
    write_dataset(args.out, records, simulate.TRIAL_SCHEMA)
    print(f"wrote {len(records)} subjects to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    schedule, schema, config = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    records = load_dataset(args.data, schema, schedule)
    if not records:
        raise DataError("dataset contains no rows")
    if args.marginal:
        fit = fit_marginal(records, schedule, config, args.estimator)
        write_estimate_table(args.out, [fit])
    else:
        if not config.w_indices:
            raise ConfigError(
                "conditional fit needs [regression] w_columns in the config"
            )
        fit = fit_conditional(records, schedule, config, args.estimator)
        from .windows import window_datasets

        anchor = window_datasets(records, schedule)[schedule.anchor - 1]
        w_rows = np.unique(anchor.history[:, list(config.w_indices)], axis=0)
        write_estimate_table(args.out, [fit], w_rows=w_rows)
    print(
        f"fit {args.estimator}: n={len(records)}, folds={config.folds}, "
        f"trimmed rows={fit.trim_count}; wrote {args.out}"
    )
    return EXIT_OK


def _cmd_truth(args) -> int:
    value, se = simulate.truth_marginal(args.tau, args.n, args.seed)
    print(f"P(T > {args.tau}) = {value:.4f} (MC SE {se:.5f}, {args.n} draws)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    tol = 1e-12
    errs = identity_suite(n_laws=args.reps, seed=args.seed)
    errs["two_window_robustness"] = two_window_suite(
        n_laws=max(10, args.reps // 20), seed=args.seed
    )
    failed = False
    print(f"{'identity':<28}{'max abs error':>16}  result")
    for name, err in errs.items():
        ok = err <= tol
        failed |= not ok
        print(f"{name:<28}{err:>16.3e}  {'PASS' if ok else 'FAIL'}")
    return EXIT_FIT if failed else EXIT_OK


def _cmd_benchmark(args) -> int:
    reps = args.reps if args.reps is not None else (500 if args.mode == "marginal" else 200)
    n_grid = args.n if args.n is not None else (
        [2000] if args.mode == "marginal" else [500, 1000, 2000]
    )
    report = simulate.run_benchmark(
        mode=args.mode, n_grid=n_grid, reps=reps, seed=args.seed, threads=args.threads
    )
    out = Path(args.out)
    report.to_csv(out.with_suffix(".csv"))
    report.to_json(out.with_suffix(".json"))
    total_failures = sum(a.failures for a in report.arms)
    print(
        f"{args.mode} benchmark: {reps} reps at n={n_grid}, "
        f"{total_failures} failed replications; wrote {out.with_suffix('.csv')} "
        f"and {out.with_suffix('.json')}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "truth": _cmd_truth,
        "verify": _cmd_verify,
        "benchmark": _cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except RobustSurvError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
