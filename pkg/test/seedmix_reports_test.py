"""
Test the report files and the report writer.
"""

import unittest

import numpy
from loguru import logger

from seedmix.errors import ValidationError
from seedmix.evaluation import CvResult
from seedmix.mtl import CoefficientMatrix, Formulation, SolverReport
from seedmix.normalization import NormalizationSpec
from seedmix.planning import StockingPlan
from seedmix.portfolio import efficient_frontier
from seedmix.reports import (
    PLAN_REPORTS,
    ReportWriter,
    load_coefficients,
    load_normalizer,
    read_json,
    write_coefficients,
    write_cv_report,
    write_frontier,
    write_model_meta,
    write_normalizer,
    write_plan,
)
from test import utils


class UnitTestAsTheDefaultExecution(unittest.TestCase):
    """
    Always test first.
    """

    def __init__(self, method_name='runTest'):
        super().__init__(method_name)

        if not utils.is_debugging():
            logger.remove()

    def test_coefficients_round_trip(self):
        entries = numpy.array([[0.1 + 0.2, -3.0], [1e-12, 123456.789]])
        report = SolverReport(Formulation.MEAN, {'lambda': 0.5}, iterations=12, objective=4.25)
        W = CoefficientMatrix(entries, ['B', 'A'], ['temp', 'intercept'], report)
        with utils.environment() as tmpdir:
            write_coefficients(W, tmpdir / 'model.csv')
            again = load_coefficients(tmpdir / 'model.csv')
            meta = read_json(write_model_meta(W, tmpdir / 'model_meta.json'))
            header = (tmpdir / 'model.csv').read_text(encoding='UTF-8').splitlines()[0]

        self.assertEqual(header, 'variety,feature,value')
        self.assertEqual(again.variety_ids, ['B', 'A'])
        self.assertEqual(again.feature_names, ['temp', 'intercept'])
        numpy.testing.assert_array_equal(again.entries, entries)
        self.assertEqual(meta['formulation'], 'mean')
        self.assertEqual(meta['penalties'], {'lambda': 0.5})
        self.assertEqual(meta['iterations'], 12)
        self.assertEqual(meta['varieties'], 2)

    def test_incomplete_coefficients(self):
        with utils.environment() as tmpdir:
            path = tmpdir / 'model.csv'
            path.write_text('variety,feature,value\nA,temp,1.0\nA,intercept,2.0\nB,temp,3.0\n', encoding='UTF-8')
            with self.assertRaises(ValidationError):
                load_coefficients(path)

    def test_normalizer_round_trip(self):
        spec = NormalizationSpec(ranges={'a': (0.1, 0.7), 'b': (5.0, 5.0)}, feature_names=['a', 'b'])
        with utils.environment() as tmpdir:
            again = load_normalizer(write_normalizer(spec, tmpdir / 'normalization.csv'))
        self.assertEqual(again, spec)

    def test_cv_report(self):
        result = CvResult(Formulation.MEAN, [{'lambda': 0.1}, {'lambda': 1.0}], [[2.0, 3.0], [1.0, 2.0]], [2.5, 1.5], [0.01, 0.02])
        with utils.environment() as tmpdir:
            lines = write_cv_report(result, tmpdir / 'cv_report.csv').read_text(encoding='UTF-8').splitlines()
        self.assertEqual(lines[0], 'lambda,fold_1,fold_2,mean_score,wall_time')
        self.assertEqual(lines[2], '1.0,1.0,2.0,1.5,0.02')

    def test_plan_and_frontier(self):
        plan = StockingPlan(entries=[('V2', 0.75), ('V1', 0.25)])
        mu = numpy.array([1.0, 2.0])
        sigma = numpy.diag([1.0, 4.0])
        with utils.environment() as tmpdir:
            text = write_plan(plan, tmpdir / 'plan.csv').read_text(encoding='UTF-8')
            frontier = utils.load_frontier(write_frontier(efficient_frontier(mu, sigma, [1.0, 2.0], variety_ids=['V1', 'V2']), tmpdir / 'frontier.csv'))

        self.assertEqual(text, 'variety,proportion\nV2,0.75\nV1,0.25\n')
        self.assertEqual(list(frontier.columns), ['risk', 'expected_yield', 'V1', 'V2'])
        self.assertEqual(frontier['expected_yield'].iloc[-1], 2.0)

    def test_writer_discards_on_failure(self):
        with utils.environment() as tmpdir:
            out_dir = tmpdir / 'run'
            with self.assertRaises(RuntimeError):
                with ReportWriter(out_dir) as writer:
                    writer.path('plan.csv').write_text('x', encoding='UTF-8')
                    writer.path('distributions/L1/mu.csv').write_text('x', encoding='UTF-8')
                    raise RuntimeError('stage failed')
            self.assertFalse(out_dir.exists())

            existing = tmpdir / 'existing'
            existing.mkdir()
            (existing / 'keep.txt').write_text('keep', encoding='UTF-8')
            with ReportWriter(existing) as writer:
                writer.path('plan.csv').write_text('x', encoding='UTF-8')
                self.assertEqual(writer.relative(), ['plan.csv'])
                writer.discard()
            self.assertEqual(sorted(path.name for path in existing.iterdir()), ['keep.txt'])

    def test_writer_removes_outputs_of_an_earlier_run(self):
        with utils.environment() as tmpdir:
            out_dir = tmpdir / 'run'
            out_dir.mkdir()
            for name in ('keep.txt', 'skipped.csv', 'plan.csv', 'distributions/L9/mu.csv', 'distributions/L1/sigma.csv'):
                (out_dir / name).parent.mkdir(parents=True, exist_ok=True)
                (out_dir / name).write_text('old', encoding='UTF-8')

            with self.assertRaises(RuntimeError):
                with ReportWriter(out_dir, PLAN_REPORTS) as writer:
                    writer.path('demand.csv').write_text('new', encoding='UTF-8')
                    raise RuntimeError('stage failed')
            self.assertTrue((out_dir / 'skipped.csv').exists())
            self.assertFalse((out_dir / 'demand.csv').exists())

            with ReportWriter(out_dir, PLAN_REPORTS) as writer:
                writer.path('plan.csv').write_text('new', encoding='UTF-8')
                writer.path('distributions/L1/mu.csv').write_text('new', encoding='UTF-8')
            files = sorted(str(path.relative_to(out_dir)) for path in out_dir.rglob('*') if path.is_file())
            self.assertEqual(files, ['distributions/L1/mu.csv', 'keep.txt', 'plan.csv'])
            self.assertEqual((out_dir / 'plan.csv').read_text(encoding='UTF-8'), 'new')
            self.assertFalse((out_dir / 'distributions' / 'L9').exists())


if __name__ == '__main__':
    unittest.main()
