"""Command-line entry point.

Thin orchestrator: parses flags, loads the trial spec, data or study
config, runs one pipeline and writes its artifacts. Each verb maps to a
single library call chain:

  test         one p-value at a fixed tau
  ci           confidence set over a tau grid (+ optional bisection bound)
  estimate     Hodges-Lehmann point estimate from the p-curve
  simulate     enrichment studies (rejection rates or window sizes)
  coverage     one-sided lower bounds and their coverage
  holdout      exact p-curves with and without hold-out units
  placebo      real-data placebo or power protocol
  tune-window  pilot MSEJD for candidate RWM windows
  validate     structural checks of a trial CSV against a spec
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import yaml
from pydantic import ValidationError

from selrand.config import SamplerSettings, StudyConfig, load_config
from selrand.errors import EXIT_DATA, SelrandError, UsageError
from selrand.inference.confidence import (
    confidence_set,
    count_crossings,
    hl_estimate,
    lower_bound_bisect,
    parse_grid,
)
from selrand.inference.problem import SelectiveProblem
from selrand.inference.pvalues import make_pvalue_fn, reference_draws
from selrand.io.csv_ingest import ingest_csv, load_record
from selrand.io.results import (
    draws_frame,
    dumps_json,
    pcurve_frame,
    write_csv,
    write_json,
    write_report,
)
from selrand.samplers.rwm import best_window, pilot_scores
from selrand.samplers.streams import child
from selrand.selection.conditioning import observed_selections
from selrand.settings import RuntimeSettings
from selrand.sim.studies import STUDIES
from selrand.stats.nulls import null_for_selection
from selrand.trial.record import validate_record
from selrand.trial.spec import load_spec

logger = logging.getLogger(__name__)

DEFAULT_OUT = "results"
TESTS = ("selective", "naive", "split")


class _Parser(argparse.ArgumentParser):
    """Flag errors become UsageError so they share the CLI error line and exit code."""

    def error(self, message: str):
        raise UsageError(message)


def _windows(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        message = f"expected comma-separated integers, got {text!r}"
        raise argparse.ArgumentTypeError(message) from exc
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"window sizes must be positive, got {text!r}")
    return values


def _grid_arg(text: str) -> tuple[float, float, float]:
    try:
        return parse_grid(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(exc.message) from exc


def _add_trial_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, help="trial spec JSON")
    p.add_argument("--data", required=True, help="trial CSV, see docs/data-format.md")


def _add_test_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--test", choices=TESTS, default="selective", help="which randomization test")
    p.add_argument("--scope", choices=("all", "selected"), default=None, help="null scope")
    p.add_argument("--sampler", choices=("exact", "rejection", "rwm"), default="rejection")
    p.add_argument("--samples", type=int, default=1000, help="Monte Carlo draws M")
    p.add_argument("--burn-in", type=int, default=None, help="RWM burn-in (default M/10)")
    p.add_argument("--window", type=int, default=5, help="RWM window size")
    p.add_argument("--max-attempts", type=int, default=None, help="rejection proposal budget")
    p.add_argument("--cap", type=int, default=None, help="exact enumeration cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)


def _add_study_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="study config YAML")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="record wall time per p-value")
    p.add_argument("--out", default=DEFAULT_OUT, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selrand", description="Selective randomization inference")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("test", help="p-value at one tau")
    _add_trial_args(p)
    _add_test_args(p)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--out", default=None, help="also write pvalue.json here")
    p.add_argument(
        "--draws", type=int, default=None, help="write N reference-set draws to draws.csv"
    )

    p = verbs.add_parser("ci", help="confidence set by test inversion")
    _add_trial_args(p)
    _add_test_args(p)
    p.add_argument("--tau-grid", type=_grid_arg, default=(-1.0, 1.0, 0.1), help="lo:hi:step")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--bisect", action="store_true", help="add a one-sided lower bound")
    p.add_argument("--tol", type=float, default=0.05, help="bisection tolerance")
    p.add_argument("--out", default=DEFAULT_OUT)

    p = verbs.add_parser("estimate", help="Hodges-Lehmann estimate")
    _add_trial_args(p)
    _add_test_args(p)
    p.add_argument("--tau-grid", type=_grid_arg, default=(-1.0, 1.0, 0.1), help="lo:hi:step")
    p.add_argument("--out", default=DEFAULT_OUT)

    p = verbs.add_parser("simulate", help="enrichment simulation studies")
    _add_study_args(p)
    p.add_argument("--study", choices=("rejection", "windows"), default="rejection")

    p = verbs.add_parser("coverage", help="lower-bound coverage study")
    _add_study_args(p)

    p = verbs.add_parser("holdout", help="hold-out p-curve study")
    _add_study_args(p)

    p = verbs.add_parser("placebo", help="real-data placebo or power protocol")
    _add_study_args(p)
    p.add_argument("--protocol", choices=("placebo", "power"), default="placebo")
    p.add_argument("--dataset", default=None, help="binary-outcome CSV; surrogate if omitted")

    p = verbs.add_parser("tune-window", help="pilot MSEJD per RWM window")
    _add_trial_args(p)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--scope", choices=("all", "selected"), default=None)
    p.add_argument("--windows", type=_windows, default=[2, 5, 10, 15])
    p.add_argument("--pilot-length", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = verbs.add_parser("validate", help="check a trial CSV against a spec")
    _add_trial_args(p)
    return parser


def _sampler(args: argparse.Namespace, threads: int):
    fields = {
        "kind": args.sampler,
        "num_samples": args.samples,
        "window": args.window,
        "burn_in": args.burn_in,
        "max_attempts": args.max_attempts,
    }
    if args.cap is not None:
        fields["exact_cap"] = args.cap
    try:
        return SamplerSettings(**fields).build(threads=threads)
    except (ValidationError, ValueError) as exc:
        raise UsageError(f"invalid sampler flags: {exc}") from exc


def _emit(payload) -> None:
    sys.stdout.write(dumps_json(payload))


def _cmd_test(args, runtime: RuntimeSettings) -> int:
    if args.draws is not None:
        if args.test != "selective":
            raise UsageError("--draws only applies to the selective test")
        if args.draws < 1:
            raise UsageError(f"--draws must be positive, got {args.draws}")
    spec = load_spec(args.spec)
    rec = load_record(args.data, spec)
    threads = args.threads or runtime.threads
    fn = make_pvalue_fn(
        spec,
        rec,
        method=args.test,
        sampler=_sampler(args, threads),
        num_samples=args.samples,
        scope=args.scope,
    )
    result = fn(args.tau, args.seed)
    payload = {"tau": args.tau, **result.to_dict()}
    if args.out:
        write_json(Path(args.out) / "pvalue.json", payload)
    if args.draws is not None:
        _write_draws(args, spec, rec, _sampler(args, threads))
    _emit(payload)
    return 0


def _write_draws(args, spec, rec, sampler) -> None:
    problem = SelectiveProblem.build(spec, rec, null_for_selection(spec, rec, args.tau, args.scope))
    samples = reference_draws(problem, sampler, args.draws, child(args.seed, "draws"))
    write_csv(Path(args.out or DEFAULT_OUT) / "draws.csv", draws_frame(samples, rec.unit_ids))


def _cmd_ci(args, runtime: RuntimeSettings) -> int:
    spec = load_spec(args.spec)
    rec = load_record(args.data, spec)
    threads = args.threads or runtime.threads
    sampler = _sampler(args, threads)
    common = {"method": args.test, "sampler": sampler, "num_samples": args.samples}
    cs = confidence_set(
        spec,
        rec,
        args.tau_grid,
        args.alpha,
        seed=args.seed,
        threads=threads,
        scope=args.scope,
        **common,
    )
    payload = {"method": args.test, "selection": list(rec.selections), **cs.to_dict()}
    if args.bisect:
        bracket = (args.tau_grid[0], args.tau_grid[1])
        payload["lower_bound"] = lower_bound_bisect(
            spec, rec, args.alpha, bracket, args.tol, seed=args.seed, scope=args.scope, **common
        )
    out = Path(args.out)
    write_json(out / "confidence_set.json", payload)
    write_csv(out / "pcurve.csv", pcurve_frame(cs.taus, cs.pvalues, cs.ses, args.test))
    _emit(payload)
    return 0


def _cmd_estimate(args, runtime: RuntimeSettings) -> int:
    spec = load_spec(args.spec)
    rec = load_record(args.data, spec)
    threads = args.threads or runtime.threads
    cs = confidence_set(
        spec,
        rec,
        args.tau_grid,
        0.5,
        method=args.test,
        sampler=_sampler(args, threads),
        num_samples=args.samples,
        seed=args.seed,
        threads=threads,
        scope=args.scope,
    )
    payload = {
        "method": args.test,
        "selection": list(rec.selections),
        "estimate": hl_estimate(cs.taus, cs.pvalues),
        "crossings": count_crossings(cs.pvalues),
        "p_curve": cs.to_dict()["p_curve"],
    }
    out = Path(args.out)
    write_json(out / "estimate.json", payload)
    write_csv(out / "pcurve.csv", pcurve_frame(cs.taus, cs.pvalues, cs.ses, args.test))
    _emit(payload)
    return 0


def _study_config(args, runtime: RuntimeSettings, **extra) -> StudyConfig:
    path = args.config or runtime.config
    try:
        cfg = load_config(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except (ValidationError, ValueError, yaml.YAMLError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    updates = dict(extra)
    if args.replications is not None:
        updates["replications"] = args.replications
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    elif "threads" in runtime.model_fields_set:
        updates["threads"] = runtime.threads
    if args.timing:
        updates["timing_enabled"] = True
    try:
        return StudyConfig.model_validate({**cfg.model_dump(), **updates})
    except ValidationError as exc:
        raise UsageError(f"invalid study flags: {exc}") from exc


def _run_study(name: str, cfg: StudyConfig, out: str) -> int:
    report = STUDIES[name](cfg)
    write_report(out, report)
    _emit(report)
    return 0


def _cmd_simulate(args, runtime: RuntimeSettings) -> int:
    return _run_study(args.study, _study_config(args, runtime), args.out)


def _cmd_coverage(args, runtime: RuntimeSettings) -> int:
    return _run_study("coverage", _study_config(args, runtime), args.out)


def _cmd_holdout(args, runtime: RuntimeSettings) -> int:
    return _run_study("holdout", _study_config(args, runtime), args.out)


def _cmd_placebo(args, runtime: RuntimeSettings) -> int:
    cfg = _study_config(args, runtime)
    if args.dataset:
        cfg = cfg.model_copy(
            update={"real_data": cfg.real_data.model_copy(update={"dataset": args.dataset})}
        )
    return _run_study(args.protocol, cfg, args.out)


def _cmd_tune_window(args, runtime: RuntimeSettings) -> int:
    if args.pilot_length < 1:
        raise UsageError("--pilot-length must be positive")
    spec = load_spec(args.spec)
    rec = load_record(args.data, spec)
    problem = SelectiveProblem.build(spec, rec, null_for_selection(spec, rec, args.tau, args.scope))
    scores = pilot_scores(problem, args.windows, args.pilot_length, args.seed)
    _emit({"window": best_window(scores), "msejd": {str(h): s for h, s in scores.items()}})
    return 0


def _cmd_validate(args, runtime: RuntimeSettings) -> int:
    spec = load_spec(args.spec)
    rec = ingest_csv(args.data, num_stages=spec.num_stages)
    report = validate_record(spec, rec)
    payload = report.to_dict()
    if report.ok:
        payload["selections"] = list(observed_selections(spec, rec))
    _emit(payload)
    return 0 if report.ok else EXIT_DATA


COMMANDS = {
    "test": _cmd_test,
    "ci": _cmd_ci,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "coverage": _cmd_coverage,
    "holdout": _cmd_holdout,
    "placebo": _cmd_placebo,
    "tune-window": _cmd_tune_window,
    "validate": _cmd_validate,
}


def parse_and_dispatch(argv: Sequence[str]) -> int:
    """Run one verb; returns the process exit status."""
    try:
        try:
            runtime = RuntimeSettings()
        except ValidationError as exc:
            raise UsageError(f"invalid SELRAND_* environment: {exc}") from exc
        args = build_parser().parse_args(list(argv))
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        logger.debug("running %s", args.verb)
        return COMMANDS[args.verb](args, runtime)
    except SelrandError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    try:
        level = RuntimeSettings().level
    except ValidationError:
        level = logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    from importlib.metadata import version as pkg_version

    try:
        _version = pkg_version("selrand")
    except Exception:
        _version = "dev"
    logger.debug("selrand v%s", _version)
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
