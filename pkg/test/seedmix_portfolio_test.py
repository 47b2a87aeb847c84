"""
Test the yield scenarios, the risk budget and the risk-capped allocations.
"""

import unittest

import numpy
from loguru import logger

from seedmix.errors import ParameterError, ValidationError
from seedmix.mtl import CoefficientMatrix
from seedmix.normalization import fit_normalizer
from seedmix.portfolio import (
    AllocationWeights,
    default_risk_grid,
    efficient_frontier,
    minimum_variance,
    project_to_simplex,
    solve_allocation,
    suboptimality_gap,
    variety_points,
)
from seedmix.records import FEATURE_NAMES, INTERCEPT
from seedmix.risk import RiskBudget, YieldDistribution, YieldScenarioSet, estimate_distribution, project_scenarios, risk_budget
from test import utils


def _distribution(mu, sigma, variety_ids=None) -> YieldDistribution:
    mu = numpy.asarray(mu, dtype=float)
    return YieldDistribution('L1', variety_ids or [f'V{i}' for i in range(mu.size)], mu, numpy.asarray(sigma, dtype=float))


class UnitTestAsTheDefaultExecution(unittest.TestCase):
    """
    Always test first.
    """

    def __init__(self, method_name='runTest'):
        super().__init__(method_name)

        if not utils.is_debugging():
            logger.remove()

    def test_risk_budget(self):
        self.assertEqual(risk_budget(0), 0.1)
        self.assertEqual(risk_budget(18), 5.1)
        self.assertAlmostEqual(risk_budget(9), 2.6)
        caps = [risk_budget(pi) for pi in range(19)]
        numpy.testing.assert_allclose(numpy.diff(caps), 5.0 / 18.0)
        self.assertEqual(risk_budget(4, RiskBudget(r_min=1.0, r_max=1.0)), 1.0)

        for pi in (-1, 19, 2.5):
            with self.assertRaises(ParameterError):
                risk_budget(pi)
        with self.assertRaises(ParameterError):
            RiskBudget(r_min=3.0, r_max=2.0)

    def test_estimate_distribution(self):
        scenarios = YieldScenarioSet('L1', ['A', 'B'], [2001, 2002], numpy.array([[0.0, 2.0], [0.0, 2.0]]))
        distribution = estimate_distribution(scenarios, epsilon=0.0)
        numpy.testing.assert_array_equal(distribution.mean, [1.0, 1.0])
        numpy.testing.assert_array_equal(distribution.covariance, [[2.0, 2.0], [2.0, 2.0]])

        ridged = estimate_distribution(scenarios, epsilon=0.01)
        self.assertAlmostEqual(ridged.ridge, 0.02)
        numpy.testing.assert_allclose(ridged.covariance, [[2.02, 2.0], [2.0, 2.02]])

        flat = estimate_distribution(YieldScenarioSet('L1', ['A', 'B'], [2001, 2002, 2003], numpy.array([[3.0, 3.0, 3.0], [5.0, 5.0, 5.0]])), epsilon=1e-6)
        numpy.testing.assert_array_equal(flat.covariance, 1e-6 * numpy.eye(2))
        self.assertTrue(numpy.all(numpy.linalg.eigvalsh(flat.covariance) > 0))

        with self.assertRaises(ParameterError):
            estimate_distribution(YieldScenarioSet('L1', ['A'], [2001], numpy.array([[1.0]])))
        with self.assertRaises(ValidationError):
            YieldScenarioSet('L1', ['A'], [2001, 2002], numpy.array([[1.0, numpy.nan]]))

    def test_project_scenarios(self):
        spec = fit_normalizer([utils.record('V1', temp=3800.0), utils.record('V1', temp=4000.0)])
        entries = numpy.zeros((len(FEATURE_NAMES) + 1, 2))
        entries[FEATURE_NAMES.index('temp'), 0] = 10.0
        entries[-1] = [100.0, 105.0]
        W = CoefficientMatrix(entries, ['A', 'B'], list(FEATURE_NAMES) + [INTERCEPT])

        scenarios = project_scenarios(W, utils.location('L1'), spec)
        self.assertEqual(scenarios.years, [2001, 2002, 2003])
        numpy.testing.assert_allclose(scenarios.scenarios, [[100.0, 105.0, 110.0], [105.0, 105.0, 105.0]])

        distribution = estimate_distribution(scenarios)
        numpy.testing.assert_allclose(distribution.mean, [105.0, 105.0])
        restricted = distribution.restrict(['B'])
        self.assertEqual(restricted.variety_ids, ['B'])
        self.assertEqual(restricted.covariance.shape, (1, 1))
        with self.assertRaises(ParameterError):
            distribution.restrict(['C'])

        with self.assertRaises(ParameterError):
            project_scenarios(W, utils.location('L2', years=(2001,)), spec)

    def test_project_to_simplex(self):
        numpy.testing.assert_allclose(project_to_simplex(numpy.array([0.5, 0.5])), [0.5, 0.5])
        numpy.testing.assert_allclose(project_to_simplex(numpy.array([2.0, 0.0])), [1.0, 0.0])
        numpy.testing.assert_allclose(project_to_simplex(numpy.array([-1.0, -1.0])), [0.5, 0.5])
        rng = numpy.random.default_rng(1)
        for _ in range(50):
            w = project_to_simplex(rng.normal(0.0, 3.0, 5))
            self.assertTrue(numpy.all(w >= 0))
            self.assertAlmostEqual(float(w.sum()), 1.0)
        with self.assertRaises(ParameterError):
            project_to_simplex(numpy.array([]))

    def test_riskless_variety(self):
        sigma = numpy.diag([4.0, 0.0])
        mu = numpy.array([2.0, 1.0])
        for cap in (0.5, 1.0, 1.5, 3.0):
            allocation = solve_allocation(mu, sigma, cap)
            self.assertAlmostEqual(allocation.weights[0], min(1.0, cap / 2.0), places=4)
            self.assertLessEqual(allocation.risk, cap * (1.0 + 1e-9))

    def test_large_cap_takes_best_variety(self):
        mu = numpy.array([3.0, 5.0, 4.0])
        sigma = utils.random_covariance(3, numpy.random.default_rng(2))
        allocation = solve_allocation(mu, sigma, 1e6, variety_ids=['A', 'B', 'C'])
        numpy.testing.assert_array_equal(allocation.weights, [0.0, 1.0, 0.0])
        self.assertEqual(allocation.weight('B'), 1.0)
        self.assertTrue(allocation.feasible)

    def test_allocation_matches_grid(self):
        rng = numpy.random.default_rng(7)
        for instance in range(20):
            size = 2 + instance % 3
            mu = rng.uniform(80.0, 120.0, size)
            sigma = utils.random_covariance(size, rng, scale=float(rng.uniform(1.0, 5.0)))
            cap = float(rng.uniform(0.3, 1.2)) * float(numpy.sqrt(numpy.diag(sigma)).max())
            allocation = solve_allocation(mu, sigma, cap)
            best = utils.simplex_oracle(mu, sigma, cap)
            if allocation.feasible:
                self.assertLessEqual(allocation.risk, cap * (1.0 + 1e-6), f'instance {instance}')
                self.assertGreaterEqual(allocation.expected_yield, best - 1e-4 * abs(best), f'instance {instance}')
            else:
                self.assertEqual(best, -numpy.inf, f'instance {instance}')

    def test_infeasible_cap(self):
        sigma = numpy.array([[4.0, 1.0], [1.0, 4.0]])
        allocation = solve_allocation(numpy.array([10.0, 9.0]), sigma, 1.0, location_id='L1')
        self.assertFalse(allocation.feasible)
        numpy.testing.assert_allclose(allocation.weights, [0.5, 0.5], atol=1e-6)
        self.assertAlmostEqual(allocation.risk, numpy.sqrt(2.5), places=5)
        numpy.testing.assert_allclose(minimum_variance(sigma), [0.5, 0.5], atol=1e-6)

    def test_frontier(self):
        rng = numpy.random.default_rng(3)
        mu = numpy.array([100.0, 104.0, 108.0, 103.0])
        sigma = utils.random_covariance(4, rng, scale=3.0)
        grid = default_risk_grid(mu, sigma, points=12)
        self.assertEqual(len(grid), 12)
        self.assertEqual(grid, sorted(grid))

        points = efficient_frontier(mu, sigma, grid)
        yields = numpy.array([point.expected_yield for point in points])
        self.assertTrue(numpy.all(numpy.diff(yields) >= -1e-6))
        self.assertTrue(numpy.all(numpy.diff(yields, 2) <= 1e-3))
        self.assertAlmostEqual(yields[-1], mu.max(), places=6)
        self.assertTrue(all(point.weights.risk <= point.risk * (1.0 + 1e-6) for point in points))

        saturated = efficient_frontier(mu, sigma, [grid[-1], 2.0 * grid[-1]])
        self.assertEqual(saturated[0].expected_yield, saturated[1].expected_yield)

        with self.assertRaises(ParameterError):
            efficient_frontier(mu, sigma, [2.0, 1.0])
        with self.assertRaises(ParameterError):
            efficient_frontier(mu, sigma, [])

    def test_suboptimality_gap(self):
        rng = numpy.random.default_rng(4)
        full = _distribution([100.0, 110.0, 95.0], utils.random_covariance(3, rng, scale=2.0))
        self.assertEqual(suboptimality_gap(full, full, 5.0), 0.0)
        restricted = full.restrict(['V0', 'V2'])
        self.assertGreater(suboptimality_gap(full, restricted, 100.0), 0.0)
        with self.assertRaises(ParameterError):
            suboptimality_gap(full, _distribution([1.0], [[1.0]], ['X']), 1.0)

    def test_variety_points(self):
        points = variety_points(_distribution([1.0, 2.0], [[4.0, 0.0], [0.0, 9.0]]))
        self.assertEqual(points, [('V0', 2.0, 1.0), ('V1', 3.0, 2.0)])

    def test_invalid_inputs(self):
        with self.assertRaises(ParameterError):
            solve_allocation(numpy.array([1.0, 2.0]), numpy.eye(2), 0.0)
        with self.assertRaises(ParameterError):
            solve_allocation(numpy.array([1.0, 2.0]), numpy.array([[1.0, 0.5], [0.0, 1.0]]), 1.0)
        with self.assertRaises(ParameterError):
            solve_allocation(numpy.array([1.0, 2.0]), numpy.eye(3), 1.0)
        with self.assertRaises(ValidationError):
            AllocationWeights('L1', ['A', 'B'], numpy.array([0.7, 0.7]))


if __name__ == '__main__':
    unittest.main()
