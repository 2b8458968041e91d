"""
Command-line entry point.

    kalman-adapt <experiment> [--config PATH] [--seed N ...] [--out DIR]
                              [--format csv|json] [--set section.key=value ...]

Experiments write one trace file per seed (and arm) plus a summary and exit 0;
they report, they do not assert. `verify` runs the property suite and exits 1
when any check fails, printing a JSON failure report to stderr.
"""

from __future__ import annotations
from typing import Sequence
import argparse
import json
import logging
import sys

from kalman_adapt.exceptions import ConfigInvalid, KalmanAdaptException
from kalman_adapt.experiments.fewshot import run_fewshot_regression
from kalman_adapt.experiments.shift import run_streaming_shift
from kalman_adapt.experiments.spectral_run import run_spectral
from kalman_adapt.experiments.toy_llm import run_toy_llm
from kalman_adapt.experiments.trace import ExperimentResult
from kalman_adapt.harness.config import Experiment, OutputFormat, Overrides, RunConfig, load_config, max_workers
from kalman_adapt.harness.io import write_result, write_summary
from kalman_adapt.harness.verify import run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

RUNNERS = {
    Experiment.FEWSHOT: run_fewshot_regression,
    Experiment.SHIFT: run_streaming_shift,
    Experiment.TOY_LLM: run_toy_llm,
    Experiment.SPECTRAL: run_spectral,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='kalman-adapt',
        description="Bayesian inference-time adaptation experiments and property checks.",
    )
    parser.add_argument('experiment', choices=[str(e) for e in Experiment])
    parser.add_argument('--config', help="TOML configuration (default: the shipped config of the experiment)")
    parser.add_argument('--seed', type=int, action='append', dest='seeds', metavar='N',
                        help="root seed; repeat for several (replaces the configured list)")
    parser.add_argument('--out', dest='output_path', metavar='DIR', help="output directory")
    parser.add_argument('--format', dest='output_format', choices=[str(f) for f in OutputFormat])
    parser.add_argument('--set', action='append', dest='settings', default=[], metavar='SECTION.KEY=VALUE',
                        help="override one configuration value (TOML literal)")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    return parser


def _failure_report(error: KalmanAdaptException) -> dict:
    report = {'status': 'error', 'error': type(error).__name__, 'message': error.message}
    if isinstance(error, ConfigInvalid):
        report['field'] = error.field
    if error.step is not None:
        report['step'] = error.step
    return report


def dispatch(config: RunConfig, workers: int = 1) -> int:
    """Run the configured experiment or the verify suite and write its outputs."""
    logger.info("Running %s with %d seed(s), fingerprint %s", config.experiment, len(config.seeds),
                config.fingerprint[:12])
    if config.experiment == Experiment.VERIFY:
        report = run_checks(config.verify.checks, seed=config.seeds[0], max_workers=workers)
        summary = write_summary(ExperimentResult('verify', summary=report.as_dict()), config, config.output_path)
        logger.info("%d/%d checks passed; report in %s",
                    len(report.results) - len(report.failures), len(report.results), summary)
        if not report.passed:
            failures = {
                'status': 'failed',
                'failed': [r.as_dict() for r in report.failures],
            }
            print(json.dumps(failures, indent=2, ensure_ascii=False), file=sys.stderr)
            return EXIT_FAILED
        return EXIT_OK

    runner = RUNNERS[config.experiment]
    result = runner(config.settings, list(config.seeds), fingerprint=config.fingerprint, max_workers=workers)
    write_result(result, config)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = Overrides(
        experiment=args.experiment,
        seeds=tuple(args.seeds) if args.seeds else None,
        output_path=args.output_path,
        output_format=args.output_format,
        settings=tuple(args.settings),
    )
    try:
        config = load_config(args.config, overrides)
        return dispatch(config, max_workers())
    except ConfigInvalid as e:
        print(json.dumps(_failure_report(e), ensure_ascii=False), file=sys.stderr)
        return EXIT_INVALID
    except KalmanAdaptException as e:
        logger.error("%s", e.message)
        print(json.dumps(_failure_report(e), ensure_ascii=False), file=sys.stderr)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
