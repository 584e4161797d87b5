"""
Command-line entry point

    hlik audit --model bayarri
    hlik fit --model exp-future-log --data y.txt
    hlik predict --model exp-future-log --data y.txt --param-scale log-lambda --alpha 0.05
    hlik coverage --config configs/coverage.cfg --seed 1 --out cov.csv
    hlik reproduce-paper --seed 1 --jobs 4

Exit codes: 0 on success, 2 on configuration errors (argparse included), 3 when a
computation fails or a fit or reproduction check does not pass.
"""

import argparse
import logging
import sys
from pathlib import Path

from dotenv import dotenv_values
from pydantic import ValidationError

from hlikelihood import settings
from hlikelihood.audit import audit, bartlize_search, parse_theta_grid
from hlikelihood.estimation import marginal_mle, solve_mhle
from hlikelihood.exceptions import ConfigError, HlikError
from hlikelihood.ingest import file_digest, read_observations
from hlikelihood.items import ExperimentConfig, FitReport
from hlikelihood.models import MODELS, get_model
from hlikelihood.pipelines import OutputPipeline
from hlikelihood.prediction import FLAT_PRIORS, PARAM_SCALE_ALIASES, normalize_param_scale, predict
from hlikelihood.reproduce import reproduce
from hlikelihood.simulation import duality_check, r_term_study, run_coverage, scale_sensitivity_study

logger = logging.getLogger(__name__)

EXPERIMENT_KEYS = ("model", "theta", "n", "n_grid", "replications", "alphas", "methods",
                   "param_scale", "prior", "seed")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=None,
                        help=f"Worker threads (default: HLIK_JOBS or {settings.DEFAULT_JOBS}). Results do not depend on it.")
    common.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level.")
    return common


def _experiment_flags(p: argparse.ArgumentParser, seed_required: bool):
    p.add_argument("--config", default=None, help="KEY=value experiment file (keys are ExperimentConfig fields); flags win.")
    p.add_argument("--model", choices=sorted(MODELS), default=None)
    p.add_argument("--theta", default=None, help="True theta on the natural scale, comma separated.")
    p.add_argument("--n", type=int, default=None, help="Sample size.")
    p.add_argument("--n-grid", dest="n_grid", default=None, help="Comma-separated sample sizes.")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--alphas", default=None, help="Comma-separated alpha levels.")
    p.add_argument("--methods", default=None, help="Comma-separated coverage methods.")
    p.add_argument("--param-scale", dest="param_scale", choices=sorted(PARAM_SCALE_ALIASES), default=None)
    p.add_argument("--prior", choices=FLAT_PRIORS, default=None)
    p.add_argument("--seed", type=int, required=seed_required, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog=settings.TOOL_NAME,
                                     description="h-likelihood audits, fits, predictions and simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", parents=[common], help="Bartlett identity audit of a model.")
    p.add_argument("--model", choices=sorted(MODELS), required=True)
    p.add_argument("--theta-grid", default=None, help="'lo:hi:k', 'lin:lo:hi:k' or a comma list.")
    p.add_argument("--n-mc", type=int, default=0, help="Monte Carlo draws for the full identities (0 = skip).")
    p.add_argument("--n-obs", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bartlize", action="store_true", help="Search the transform catalogue for a Bartlized scale.")
    p.add_argument("--out", default="audit.json")

    p = sub.add_parser("fit", parents=[common], help="Maximum h-likelihood estimate.")
    p.add_argument("--model", choices=sorted(MODELS), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--marginal", action="store_true", help="Also maximize the marginal likelihood.")
    p.add_argument("--out", default="fit.json")

    p = sub.add_parser("predict", parents=[common], help="Predictive triple and HDP intervals.")
    p.add_argument("--model", choices=sorted(MODELS), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--param-scale", choices=sorted(PARAM_SCALE_ALIASES), default="lambda")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--prior", choices=FLAT_PRIORS, default=None)
    p.add_argument("--out", default="pred.json")
    p.add_argument("--csv", default=None, help="Also write the density grid table here.")

    for name, out, help_text in (
        ("coverage", "cov.csv", "Coverage of prediction intervals."),
        ("rterm", "rterm.csv", "Remainder-term and Z moment study."),
        ("duality", "duality.csv", "Posterior vs sampling variance decompositions."),
        ("scales", "scales.csv", "Predictive triple distances over n and parameter scales."),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        _experiment_flags(p, seed_required=name != "scales")
        if name in ("rterm", "duality"):
            p.add_argument("--n-mc", type=int, default=settings.MOMENT_DRAWS)
        p.add_argument("--out", default=out)

    p = sub.add_parser("reproduce-paper", parents=[common], help="Run every reproduction check.")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-mc", type=int, default=settings.MOMENT_DRAWS)
    p.add_argument("--replications", type=int, default=settings.COVERAGE_REPLICATIONS)
    p.add_argument("--out", default="report.json")
    return parser


def load_experiment(args) -> ExperimentConfig:
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        for key, value in dotenv_values(path).items():
            if value is None:
                raise ConfigError(f"{path}: key {key} has no value")
            values[key.lower()] = value
        unknown = set(values) - set(EXPERIMENT_KEYS)
        if unknown:
            raise ConfigError(f"unknown keys in {args.config}: {', '.join(sorted(unknown))}")
    for key in EXPERIMENT_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if "param_scale" in values:
        values["param_scale"] = normalize_param_scale(values["param_scale"])
    values.setdefault("seed", 0)
    return ExperimentConfig(**values)


def _args_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "log_level", "jobs")}


def cmd_audit(args, jobs: int) -> int:
    m = get_model(args.model)
    grid = parse_theta_grid(args.theta_grid, m.p) if args.theta_grid else None
    if args.bartlize:
        result = bartlize_search(m, grid, jobs=jobs)
    else:
        result = audit(m, grid, n_mc=args.n_mc, n_obs=args.n_obs, seed=args.seed, jobs=jobs)
    OutputPipeline("audit", _args_config(args), seed=args.seed, jobs=jobs).process_item(result, args.out)
    return 0


def cmd_fit(args, jobs: int) -> int:
    m = get_model(args.model)
    data = read_observations(args.data)
    report = FitReport(solution=solve_mhle(m, data), marginal=marginal_mle(m, data) if args.marginal else None)
    pipeline = OutputPipeline("fit", _args_config(args), jobs=jobs, input_digests={args.data: file_digest(args.data)})
    pipeline.process_item(report, args.out)
    status = report.solution.status
    if status != "Converged":
        logger.error(f"MHLE for {m.name} ended with status {status}: {report.solution.message}")
        return 3
    return 0


def cmd_predict(args, jobs: int) -> int:
    m = get_model(args.model)
    data = read_observations(args.data)
    prediction = predict(m, data, param_scale=args.param_scale, alpha=args.alpha, prior=args.prior)
    pipeline = OutputPipeline("predict", _args_config(args), jobs=jobs,
                              input_digests={args.data: file_digest(args.data)})
    pipeline.process_item(prediction, args.out)
    if args.csv:
        pipeline.process_item(prediction, args.csv)
    return 0


def cmd_experiment(args, jobs: int) -> int:
    cfg = load_experiment(args)
    if args.command == "coverage":
        result = run_coverage(cfg, jobs=jobs)
    elif args.command == "rterm":
        result = r_term_study(cfg, n_mc=args.n_mc, jobs=jobs)
    elif args.command == "duality":
        result = duality_check(cfg, n_mc=args.n_mc, jobs=jobs)
    else:
        result = scale_sensitivity_study(cfg)
    config = {**cfg.model_dump(mode="json"), **{k: v for k, v in _args_config(args).items() if k in ("n_mc", "out")}}
    OutputPipeline(args.command, config, seed=args.seed, jobs=jobs).process_item(result, args.out)
    return 0


def cmd_reproduce(args, jobs: int) -> int:
    report = reproduce(args.seed, jobs=jobs, n_mc=args.n_mc, replications=args.replications)
    OutputPipeline("reproduce-paper", _args_config(args), seed=args.seed, jobs=jobs).process_item(report, args.out)
    for check in report.failed:
        logger.error(f"FAIL {check.name}: computed {check.computed} expected {check.expected} "
                     f"(tolerance {check.tolerance})")
    return 3 if report.failed else 0


COMMANDS = {
    "audit": cmd_audit,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "coverage": cmd_experiment,
    "rterm": cmd_experiment,
    "duality": cmd_experiment,
    "scales": cmd_experiment,
    "reproduce-paper": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=settings.LOG_FORMAT)
    try:
        jobs = args.jobs or settings.default_jobs()
        return COMMANDS[args.command](args, jobs)
    except ValidationError as exc:
        logger.error(f"config: {exc}")
        return 2
    except HlikError as exc:
        logger.error(f"{exc.reason}: {exc}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
