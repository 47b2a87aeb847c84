"""
End to end runs of the seedmix commands and the pipeline stages on small synthetic regions.
"""

import unittest
from pathlib import Path

import numpy
from loguru import logger

from seedmix.cli import EXIT_FAILURE, EXIT_NONCONVERGED, EXIT_OK, main
from seedmix.errors import PipelineError
from seedmix.ingest import load_experiment, load_region
from seedmix.mtl import CoefficientMatrix
from seedmix.normalization import fit_normalizer
from seedmix.pipeline import plan, project, run_pipeline
from seedmix.records import FEATURE_NAMES, INTERCEPT
from seedmix.reports import read_json
from test import utils

SMALL_RUN = """
[seedmix]
threads = 1
[solver]
max_iterations = 3000
lambda_grid = 0.1, 1.0
[risk]
frontier_points = 5
[synthetic]
num_varieties = 6
num_locations = 8
first_year = 2001
last_year = 2008
min_observations = 15
max_observations = 40
noise_std = 1.0
"""


def _config_file(tmpdir: Path, extra: str = '') -> str:
    path = tmpdir / 'small.cfg'
    path.write_text(SMALL_RUN + extra, encoding='UTF-8')
    return str(path)


def _csv_files(out_dir: Path) -> dict:
    return {str(path.relative_to(out_dir)): path.read_bytes() for path in sorted(out_dir.rglob('*.csv'))}


class UnitTestAsTheDefaultExecution(unittest.TestCase):
    """
    Always test first.
    """

    def __init__(self, method_name='runTest'):
        super().__init__(method_name)

        if not utils.is_debugging():
            logger.remove()

    def test_help_and_unknown_commands(self):
        self.assertEqual(main([]), EXIT_OK)
        self.assertEqual(main(['help']), EXIT_OK)
        self.assertEqual(main(['bogus']), EXIT_FAILURE)

    def test_simulate(self):
        with utils.environment() as tmpdir:
            out = tmpdir / 'data'
            self.assertEqual(main(['simulate', '-c', _config_file(tmpdir), '--out', str(out), '--varieties', '4']), EXIT_OK)
            records = load_experiment(out / 'experiment.csv')
            locations = load_region(out / 'region_soil.csv', out / 'region_weather.csv')
            self.assertEqual(sorted({record.variety_id for record in records}), ['V000', 'V001', 'V002', 'V003'])
            self.assertEqual(len(locations), 8)
            self.assertTrue(all(location.years == list(range(2001, 2009)) for location in locations))
            self.assertTrue((out / 'true_coefficients.csv').exists())
            self.assertTrue((out / 'normalization.csv').exists())

    def test_train_tune_and_plan_from_files(self):
        with utils.environment() as tmpdir:
            config = _config_file(tmpdir)
            data = tmpdir / 'data'
            self.assertEqual(main(['simulate', '-c', config, '--out', str(data)]), EXIT_OK)

            model = tmpdir / 'model'
            code = main(['train', '-c', config, '--experiment', str(data / 'experiment.csv'), '--out', str(model), '--allow-nonconverged'])
            self.assertEqual(code, EXIT_OK)
            metrics = read_json(model / 'metrics.json')
            self.assertIn('train_rmse_paper', metrics)
            self.assertIn('test_rmse_standard', metrics)
            self.assertEqual(read_json(model / 'model_meta.json')['formulation'], 'mean')

            tuned = tmpdir / 'tuned'
            self.assertEqual(main(['tune', '-c', config, '--experiment', str(data / 'experiment.csv'), '--folds', '3', '--out', str(tuned)]), EXIT_OK)
            best = read_json(tuned / 'best_params.json')
            self.assertIn(best['parameters']['lambda'], [0.1, 1.0])
            lines = (tuned / 'cv_report.csv').read_text(encoding='UTF-8').splitlines()
            self.assertEqual(lines[0], 'lambda,fold_1,fold_2,fold_3,mean_score,wall_time')
            self.assertEqual(len(lines), 3)

            planned = tmpdir / 'planned'
            code = main(['plan', '-c', config, '--model', str(model), '--region-soil', str(data / 'region_soil.csv'), '--region-weather', str(data / 'region_weather.csv'), '--out', str(planned)])
            self.assertEqual(code, EXIT_OK)
            self.assertTrue((planned / 'plan.csv').exists())
            self.assertFalse((planned / 'model.csv').exists())

    def test_plan_synthetic(self):
        with utils.environment() as tmpdir:
            out = tmpdir / 'run'
            self.assertEqual(main(['plan', '-c', _config_file(tmpdir), '--synthetic', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            for name in ('model.csv', 'metrics.json', 'allocations.csv', 'restricted_allocations.csv', 'demand.csv', 'plan.csv', 'gaps.csv', 'frontier.csv', 'frontier_restricted.csv', 'demand.svg', 'plan.svg', 'frontier.svg', 'config.json'):
                self.assertTrue((out / name).exists(), name)

            rows = (out / 'plan.csv').read_text(encoding='UTF-8').splitlines()
            self.assertEqual(rows[0], 'variety,proportion')
            proportions = [float(row.split(',')[1]) for row in rows[1:]]
            self.assertTrue(1 <= len(proportions) <= 5)
            self.assertAlmostEqual(sum(proportions), 1.0)
            self.assertTrue(len(proportions) == 1 or min(proportions) >= 0.1)

            gaps = [float(row.split(',')[2]) for row in (out / 'gaps.csv').read_text(encoding='UTF-8').splitlines()[1:]]
            self.assertEqual(len(gaps), 8)
            self.assertTrue(all(gap >= 0 for gap in gaps))

    def test_plan_is_deterministic(self):
        with utils.environment() as tmpdir:
            config = _config_file(tmpdir, '[planning]\ntop_m = 5\n')
            first, second = tmpdir / 'first', tmpdir / 'second'
            for out in (first, second):
                self.assertEqual(main(['plan', '-c', config, '--synthetic', '--seed', '3', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            first_files, second_files = _csv_files(first), _csv_files(second)
            self.assertIn('plan.csv', first_files)
            self.assertEqual(first_files, second_files)

    def test_default_region_plan_is_deterministic(self):
        with utils.environment() as tmpdir:
            config = tmpdir / 'default.cfg'
            config.write_text('[seedmix]\nthreads = 1\n', encoding='UTF-8')
            first, second = tmpdir / 'first', tmpdir / 'second'
            for out in (first, second):
                self.assertEqual(main(['plan', '-c', str(config), '--synthetic', '--seed', '0', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            first_files = _csv_files(first)
            self.assertEqual(len(first_files['gaps.csv'].splitlines()), 201)
            self.assertEqual(first_files, _csv_files(second))

    def test_frontier(self):
        with utils.environment() as tmpdir:
            out = tmpdir / 'frontier'
            self.assertEqual(main(['frontier', '-c', _config_file(tmpdir), '--synthetic', '--location', 'L0003', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            lines = (out / 'frontier.csv').read_text(encoding='UTF-8').splitlines()
            self.assertTrue(lines[0].startswith('risk,expected_yield,V000'))
            self.assertEqual(len(lines), 6)
            yields = [float(line.split(',')[1]) for line in lines[1:]]
            self.assertTrue(all(b >= a - 1e-6 for a, b in zip(yields, yields[1:])))
            self.assertTrue((out / 'frontier.svg').exists())

            self.assertEqual(main(['frontier', '-c', _config_file(tmpdir), '--synthetic', '--location', 'nowhere', '--out', str(tmpdir / 'none')]), EXIT_FAILURE)

    def test_rerun_into_the_same_directory(self):
        with utils.environment() as tmpdir:
            config = _config_file(tmpdir)
            out = tmpdir / 'shared'
            self.assertEqual(main(['plan', '-c', config, '--synthetic', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            self.assertTrue((out / 'frontier_restricted.csv').exists())

            self.assertEqual(main(['frontier', '-c', config, '--synthetic', '--location', 'L0003', '--out', str(out), '--allow-nonconverged']), EXIT_OK)
            self.assertFalse((out / 'frontier_restricted.csv').exists())
            self.assertTrue((out / 'frontier.csv').exists())
            self.assertTrue((out / 'plan.csv').exists())

    def test_failures(self):
        with utils.environment() as tmpdir:
            config = _config_file(tmpdir)
            self.assertEqual(main(['plan', '-c', str(tmpdir / 'missing.cfg'), '--synthetic']), EXIT_FAILURE)
            self.assertEqual(main(['plan', '-c', config, '--experiment', str(tmpdir / 'missing.csv')]), EXIT_FAILURE)
            self.assertEqual(main(['plan', '-c', config, '--synthetic', '--rmin', '6.0', '--out', str(tmpdir / 'bad')]), EXIT_FAILURE)

            self.assertEqual(main(['simulate', '-c', config, '--out', str(tmpdir / 'data')]), EXIT_OK)
            out = tmpdir / 'no_region'
            self.assertEqual(main(['plan', '-c', config, '--experiment', str(tmpdir / 'data' / 'experiment.csv'), '--out', str(out)]), EXIT_FAILURE)
            self.assertFalse(out.exists())

    def test_nonconverged_exit_code(self):
        with utils.environment() as tmpdir:
            config = tmpdir / 'strict.cfg'
            config.write_text(SMALL_RUN.replace('max_iterations = 3000', 'max_iterations = 1'), encoding='UTF-8')
            config = str(config)
            self.assertEqual(main(['train', '-c', config, '--synthetic', '--out', str(tmpdir / 'strict')]), EXIT_NONCONVERGED)
            self.assertTrue((tmpdir / 'strict' / 'model.csv').exists())
            self.assertEqual(main(['train', '-c', config, '--synthetic', '--out', str(tmpdir / 'lenient'), '--allow-nonconverged']), EXIT_OK)

    def test_run_pipeline(self):
        with utils.environment() as tmpdir:
            config = utils.small_synthetic_config(tmpdir / 'run', write_distributions=True, compare=True)
            result = run_pipeline(config)
            self.assertTrue(1 <= len(result.plan.entries) <= 5)
            self.assertIn('distributions/L0000/sigma.csv', result.outputs)
            self.assertIn('comparison', result.model.metrics)
            self.assertIn('planted_max_abs_error', result.model.metrics)
            self.assertEqual(len(result.result.candidates), 6)
            for full, restricted in zip(result.result.allocations, result.result.restricted_allocations):
                self.assertEqual(full.location_id, restricted.location_id)
                self.assertLessEqual(len(restricted.variety_ids), len(full.variety_ids))

    def test_stage_errors_name_the_stage(self):
        config = utils.sample_config()
        W = CoefficientMatrix(numpy.zeros((len(FEATURE_NAMES) + 1, 1)), ['A'], list(FEATURE_NAMES) + [INTERCEPT])
        normalizer = fit_normalizer([utils.record('A')])
        with self.assertRaises(PipelineError) as error:
            project(config, W, normalizer, [])
        self.assertEqual(error.exception.stage, 'projection')

        projection = project(config, W, normalizer, [utils.location('L1'), utils.location('L2', years=(2001,))])
        self.assertEqual(projection.skipped, [('L2', '1 weather years')])
        self.assertEqual(list(projection.distributions), ['L1'])

    def test_dominant_variety_takes_the_plan(self):
        config = utils.sample_config()
        entries = numpy.zeros((len(FEATURE_NAMES) + 1, 3))
        temp = FEATURE_NAMES.index('temp')
        entries[temp] = [2.0, 4.0, -3.0]
        entries[-1] = [150.0, 120.0, 110.0]
        W = CoefficientMatrix(entries, ['A', 'B', 'C'], list(FEATURE_NAMES) + [INTERCEPT])
        normalizer = fit_normalizer([utils.record('A', temp=3800.0), utils.record('A', temp=4000.0)])
        locations = [utils.location(f'L{i}', pi=pi, area=1.0 + i) for i, pi in enumerate((4, 9, 13, 18))]

        projection = project(config, W, normalizer, locations)
        result = plan(config, projection)
        for allocation in result.allocations:
            distribution = projection.distributions[allocation.location_id]
            best = utils.simplex_oracle(distribution.mean, distribution.covariance, allocation.risk_cap)
            self.assertGreaterEqual(allocation.expected_yield, best - 1e-6)
        self.assertEqual(result.plan.variety_ids[0], 'A')
        self.assertGreaterEqual(result.plan.entries[0][1], 0.9)


if __name__ == '__main__':
    unittest.main()
