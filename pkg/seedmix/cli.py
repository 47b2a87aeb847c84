"""
The seedmix commands.  Every ``cmd_*`` takes its argument list (without the command name) and returns the exit code:
0 on success, 1 when the configuration or a stage failed, 2 when a solver did not converge and
--allow-nonconverged was not given.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, List, Optional

from loguru import logger

from seedmix.configuration import SeedMixConfig
from seedmix.configuration_utils import apply_overrides, default_config, verify_configuration
from seedmix.errors import PipelineError
from seedmix.ingest import write_experiment, write_region
from seedmix.pipeline import frontiers, load_inputs, load_model, prepare_datasets, project, run_pipeline, stage, train_model, tune, write_frontier_report, write_model
from seedmix.reports import FRONTIER_REPORTS, MODEL_REPORTS, ReportWriter, write_coefficients, write_cv_report, write_json, write_normalizer
from seedmix.synthetic import generate_synthetic

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NONCONVERGED = 2

DESCRIPTION = """
    seedmix estimates per-variety seed yield models from field trials with multi-task regression, projects every
    variety's yield over the historical weather of each location of a sales region, picks the best risk-capped mix of
    varieties per location and aggregates those mixes into a stocking plan of at most five varieties.
"""


def _parser(command: str, description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f'seedmix {command}', description=description)
    parser.add_argument('-c', '--config', '--configfile', dest='configfile', type=Path, help='config file, defaults first to env var SEEDMIX_CONFIG, then ~/.seedmix.cfg, and finally ./.seedmix.cfg.')
    parser.add_argument('-v', '--verbose', action='store_true', help='verbose, print logs')
    parser.add_argument('--seed', type=int, help='seed of the train/test split and the cross validation folds.')
    parser.add_argument('--threads', type=int, help='worker threads for per-location stages and grid search.')
    parser.add_argument('--out', type=Path, help='output directory.')
    return parser


def _data_arguments(parser: argparse.ArgumentParser, region: bool = True):
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--experiment', type=Path, help='experiment.csv with the field trials.')
    group.add_argument('--synthetic', action='store_true', help='generate the data from the [synthetic] config section.')
    if region:
        parser.add_argument('--region-soil', dest='region_soil', type=Path, help='region_soil.csv')
        parser.add_argument('--region-weather', dest='region_weather', type=Path, help='region_weather.csv')


def _solver_arguments(parser: argparse.ArgumentParser, tuning: bool = True):
    parser.add_argument('--solver', choices=['mean', 'graph'], help='mean-regularized or graph-based multi-task regression.')
    parser.add_argument('--lambda', dest='mean_lambda', type=float, help='penalty of the mean-regularized formulation.')
    parser.add_argument('--lambda-l', dest='lambda_l', type=float, help='lasso penalty of the coefficients that build the task graph.')
    parser.add_argument('--threshold', type=float, help='correlation above which two tasks share a graph edge.')
    parser.add_argument('--lambda1', type=float, help='graph penalty weight.')
    parser.add_argument('--lambda2', type=float, help='L1 penalty weight of the graph formulation.')
    parser.add_argument('--allow-nonconverged', dest='allow_nonconverged', action='store_true', help='exit with 0 even if a solver hit its iteration limit.')
    if tuning:
        parser.add_argument('--tune', action='store_true', help='choose the penalties by grid search with cross validation first.')


def _risk_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--rmin', type=float, help='risk cap of land with productivity index 0.')
    parser.add_argument('--rmax', type=float, help='risk cap of land with the highest productivity index.')
    parser.add_argument('--model', type=Path, help='directory of a trained model (model.csv, normalization.csv), skips training.')


def _configure(args: argparse.Namespace) -> Optional[SeedMixConfig]:
    """
    The config file, then the flags.  None when the configuration does not verify.
    """
    if args.configfile is not None and not args.configfile.is_file():
        print(f'Config file does not exist: {args.configfile}', file=sys.stderr)
        return None

    config = apply_overrides(default_config(args.configfile), args)
    if args.verbose:
        level = 'DEBUG' if config.debug else 'INFO'
        logger.add(sys.stdout, format=config.console_format, level=level, diagnose=config.diagnose_errors)

    if not verify_configuration(config):
        print('Invalid configuration, run with -v to see the problems', file=sys.stderr)
        return None

    return config


def _run(action: Callable[[], int]) -> int:
    try:
        return action()
    except PipelineError as error:
        print(f'seedmix failed: {error}', file=sys.stderr)
        return EXIT_FAILURE


def _exit_code(config: SeedMixConfig, converged: bool) -> int:
    if converged or config.allow_nonconverged:
        return EXIT_OK

    print('A solver did not converge (see model_meta.json), rerun with --allow-nonconverged to accept it', file=sys.stderr)
    return EXIT_NONCONVERGED


def cmd_simulate(arg_list: List[str]) -> int:
    """
    Write a synthetic experiment and region, plus the planted model, to the output directory.
    """
    parser = _parser('simulate', 'Generate synthetic experiment and region files from the [synthetic] config section.')
    parser.add_argument('--varieties', dest='num_varieties', type=int, help='number of varieties.')
    parser.add_argument('--locations', dest='num_locations', type=int, help='number of region locations.')
    parser.add_argument('--noise', dest='noise_std', type=float, help='standard deviation of the yield noise.')
    args = parser.parse_args(arg_list)
    args.synthetic = True
    config = _configure(args)
    if config is None:
        return EXIT_FAILURE

    def simulate() -> int:
        with stage('data'):
            data = generate_synthetic(config.synthetic_config())
        with stage('report'), ReportWriter(config.out_dir) as writer:
            write_experiment(data.records, writer.path('experiment.csv'))
            write_region(data.locations, writer.path('region_soil.csv'), writer.path('region_weather.csv'))
            planted = write_coefficients(data.coefficients, writer.path('true_coefficients.csv'))
            write_normalizer(data.normalizer, writer.path('normalization.csv'))
            write_json(config.to_dict(), writer.path('config.json'))

        print(planted)
        return EXIT_OK

    return _run(simulate)


def cmd_train(arg_list: List[str]) -> int:
    parser = _parser('train', 'Train the configured multi-task formulation and write model.csv with its metrics.')
    _data_arguments(parser, region=False)
    _solver_arguments(parser)
    args = parser.parse_args(arg_list)
    config = _configure(args)
    if config is None:
        return EXIT_FAILURE

    def train() -> int:
        inputs = load_inputs(config, need_region=False)
        with stage('report'), ReportWriter(config.out_dir, MODEL_REPORTS) as writer:
            model = train_model(config, inputs)
            write_model(writer, config, model)

        for name, value in sorted(model.metrics.items()):
            if 'rmse' in name:
                print(f'{name}: {value}')
        return _exit_code(config, model.converged)

    return _run(train)


def cmd_tune(arg_list: List[str]) -> int:
    parser = _parser('tune', 'Grid search the penalties of the configured formulation with k-fold cross validation.')
    _data_arguments(parser, region=False)
    _solver_arguments(parser, tuning=False)
    parser.add_argument('--folds', dest='cv_folds', type=int, help='number of cross validation folds.')
    args = parser.parse_args(arg_list)
    config = _configure(args)
    if config is None:
        return EXIT_FAILURE

    def search() -> int:
        inputs = load_inputs(config, need_region=False)
        with stage('estimation'):
            _, train, _ = prepare_datasets(config, inputs)
            result = tune(config, train)
        with stage('report'), ReportWriter(config.out_dir) as writer:
            write_cv_report(result, writer.path('cv_report.csv'))
            write_json({'formulation': result.formulation.value, 'parameters': result.best, 'score': result.best_score}, writer.path('best_params.json'))

        print(f'best {result.formulation.value} parameters: {result.best} (mean validation score {result.best_score})')
        return EXIT_OK

    return _run(search)


def cmd_plan(arg_list: List[str]) -> int:
    parser = _parser('plan', 'Run estimation, projection and planning end to end and write the full report bundle.')
    _data_arguments(parser)
    _solver_arguments(parser)
    _risk_arguments(parser)
    parser.add_argument('--top-m', dest='top_m', type=int, help='candidate varieties kept after the first allocation pass.')
    parser.add_argument('--min-share', dest='min_share', type=float, help='smallest share a variety may keep in the plan.')
    args = parser.parse_args(arg_list)
    config = _configure(args)
    if config is None:
        return EXIT_FAILURE

    def run() -> int:
        result = run_pipeline(config, args.model)
        for variety_id, proportion in result.plan.entries:
            print(f'{variety_id},{proportion!r}')
        return _exit_code(config, result.converged)

    return _run(run)


def cmd_frontier(arg_list: List[str]) -> int:
    parser = _parser('frontier', 'Trace the efficient frontier of one location.')
    _data_arguments(parser)
    _solver_arguments(parser)
    _risk_arguments(parser)
    parser.add_argument('--location', help='location id, the first one when not given.')
    args = parser.parse_args(arg_list)
    config = _configure(args)
    if config is None:
        return EXIT_FAILURE

    def trace() -> int:
        inputs = load_inputs(config)
        location_id = config.frontier_location or min(location.location_id for location in inputs.locations)
        locations = [location for location in inputs.locations if location.location_id == location_id]
        if not locations:
            raise PipelineError('data', KeyError(f'unknown location {location_id}'))

        owned = FRONTIER_REPORTS + (MODEL_REPORTS if args.model is None else [])
        with ReportWriter(config.out_dir, owned) as writer:
            converged = True
            if args.model is not None:
                W, normalizer = load_model(args.model)
            else:
                model = train_model(config, inputs)
                W, normalizer, converged = model.W, model.normalizer, model.converged
                with stage('report'):
                    write_model(writer, config, model)

            projection = project(config, W, normalizer, locations)
            config.frontier_location = location_id
            _, full, _ = frontiers(config, projection)
            with stage('report'):
                write_frontier_report(writer, projection, location_id, full, None)

        for point in full:
            print(f'{point.risk!r},{point.expected_yield!r}')
        return _exit_code(config, converged)

    return _run(trace)


COMMANDS = {
    'simulate': cmd_simulate,
    'train': cmd_train,
    'tune': cmd_tune,
    'plan': cmd_plan,
    'frontier': cmd_frontier,
}


def main(arg_list: List[str]) -> int:
    command = arg_list[0] if arg_list else None
    if command in COMMANDS:
        return COMMANDS[command](arg_list[1:])

    print(DESCRIPTION)
    print("    The first argument should be one of 'simulate', 'train', 'tune', 'plan', 'frontier' or 'help'; for the")
    print("    options of a command call 'seedmix <command> -h'.")
    return EXIT_OK if command in ['-h', '--help', 'help', None] else EXIT_FAILURE
