"""``stabcv`` command line: run experiments, draw heatmaps, evaluate the bound."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .cv import bound_from_report
from .errors import ConfigError, NumericalError, StabCVError
from .experiment import ExperimentConfig, load_config, read_record, run_experiment, summarize


def _lambda_list(text):
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _parser():
    ap = argparse.ArgumentParser(prog="stabcv", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="repeated split/select/retrain experiment")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--mode", choices=("kcv", "nested", "bound", "heatmap"))
    run.add_argument("--learner", choices=("ridge", "sparse_ridge", "cart"))
    run.add_argument("--k", type=int)
    run.add_argument("--repeats", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--lambda-grid", type=_lambda_list, help="comma-separated weights")
    run.add_argument("--jobs", type=int, help="worker processes for repeats")
    run.add_argument("--out", help="output directory")

    hm = sub.add_parser("heatmap", help="CV and test error over the (tau, gamma) grid")
    hm.add_argument("--n", type=int, required=True)
    hm.add_argument("--p", type=int, required=True)
    hm.add_argument("--tau-true", type=int, default=5)
    hm.add_argument("--rho", type=float, default=0.3)
    hm.add_argument("--nu", type=float, default=1.0)
    hm.add_argument("--cv", choices=("loocv", "fivefold"), default="fivefold")
    hm.add_argument("--seed", type=int, default=0)
    hm.add_argument("--n-test", type=int, default=10_000)
    hm.add_argument("--svg", action="store_true", help="also write SVG heatmaps")
    hm.add_argument("--out", default=".")

    bd = sub.add_parser("bound", help="test-error bound at a report's selected hyperparameters")
    bd.add_argument("--report", required=True, help="report.json from a selection run")
    bd.add_argument("--M", type=float, help="loss bound; defaults to the largest observed loss")
    bd.add_argument("--delta", type=float, default=0.05)

    sm = sub.add_parser("summarize", help="paired comparison of two run directories")
    sm.add_argument("candidate")
    sm.add_argument("baseline")
    return ap


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = cfg.replace(mode=args.mode, learner=args.learner, k=args.k, repeats=args.repeats,
                      seed=args.seed, lambda_grid=args.lambda_grid, jobs=args.jobs,
                      output_dir=args.out)
    if cfg.output_dir is None:
        cfg = cfg.replace(output_dir=".")
    record = run_experiment(cfg)
    print(json.dumps(record.aggregate, indent=2))


def _cmd_heatmap(args):
    cfg = ExperimentConfig(mode="heatmap", n=args.n, p=args.p, tau_true=args.tau_true,
                           rho=args.rho, nu=args.nu, cv=args.cv, seed=args.seed,
                           n_test=args.n_test, svg=args.svg, output_dir=args.out)
    print(json.dumps(run_experiment(cfg).aggregate, indent=2))


def _report_entries(doc):
    # a RunRecord holds one selection report per repeat; a bare report is itself the entry
    return doc["repeats"] if "repeats" in doc else [doc]


def _cmd_bound(args):
    path = Path(args.report)
    if path.is_dir():
        path = path / "report.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for entry in _report_entries(doc):
            try:
                results.append(bound_from_report(entry, args.delta, args.M))
            except KeyError as exc:
                raise ConfigError(f"{path}: report lacks field {exc}") from None
    print(json.dumps(results[0] if len(results) == 1 else results, indent=2))


def _cmd_summarize(args):
    s = summarize(read_record(args.candidate), read_record(args.baseline))
    print(json.dumps({"ratios": s.per_dataset_ratios, "geometric_mean": s.geometric_mean,
                      "disappointment": s.cv_test_gap, "agreement": s.agreement}, indent=2))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "heatmap": _cmd_heatmap, "bound": _cmd_bound,
               "summarize": _cmd_summarize}[args.command]
    try:
        handler(args)
    except StabCVError as exc:
        print(f"stabcv: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"stabcv: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
