"""
Yield scenarios of every variety at a location (one per historical weather year), their mean and covariance, and the
risk a location can tolerate given its productivity index.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy
from loguru import logger

from seedmix.errors import ParameterError, ValidationError
from seedmix.mtl import CoefficientMatrix
from seedmix.normalization import NormalizationSpec
from seedmix.records import PI_MAX, RegionLocation

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class YieldScenarioSet:
    location_id: str
    variety_ids: List[str]
    years: List[int]
    scenarios: numpy.ndarray
    """
    V x T, row i holds variety i's predicted yield under each year's weather.
    """

    def __post_init__(self):
        if self.scenarios.shape != (len(self.variety_ids), len(self.years)):
            raise ValidationError(f'scenario matrix shape {self.scenarios.shape} does not match {len(self.variety_ids)} varieties x {len(self.years)} years')
        if not numpy.all(numpy.isfinite(self.scenarios)):
            raise ValidationError(f'location {self.location_id}: non-finite yield scenarios')


@dataclass(frozen=True, eq=False)
class YieldDistribution:
    location_id: str
    variety_ids: List[str]
    mean: numpy.ndarray
    covariance: numpy.ndarray
    epsilon: float = DEFAULT_EPSILON
    ridge: float = 0.0
    """
    the value actually added to the diagonal.
    """

    def __post_init__(self):
        size = len(self.variety_ids)
        if self.mean.shape != (size,) or self.covariance.shape != (size, size):
            raise ValidationError(f'distribution of {size} varieties has mean {self.mean.shape} and covariance {self.covariance.shape}')

    def indices(self, variety_ids: Sequence[str]) -> List[int]:
        position = {variety_id: i for i, variety_id in enumerate(self.variety_ids)}
        missing = [variety_id for variety_id in variety_ids if variety_id not in position]
        if missing:
            raise ParameterError(f'varieties {missing} are not part of the distribution at {self.location_id}')
        return [position[variety_id] for variety_id in variety_ids]

    def restrict(self, variety_ids: Sequence[str]) -> 'YieldDistribution':
        """
        The marginal over a subset of varieties, in the given order.
        """
        index = self.indices(variety_ids)
        return YieldDistribution(self.location_id, list(variety_ids), self.mean[index], self.covariance[numpy.ix_(index, index)], self.epsilon, self.ridge)

    def risk(self, weights: numpy.ndarray) -> float:
        return float(numpy.sqrt(max(float(weights @ self.covariance @ weights), 0.0)))

    def expected_yield(self, weights: numpy.ndarray) -> float:
        return float(weights @ self.mean)


@dataclass(frozen=True)
class RiskBudget:
    r_min: float = 0.1
    r_max: float = 5.1
    pi_max: int = PI_MAX

    def __post_init__(self):
        if not 0 < self.r_min <= self.r_max:
            raise ParameterError(f'risk budget needs 0 < r_min <= r_max, got {self.r_min}, {self.r_max}')
        if self.pi_max < 1:
            raise ParameterError(f'pi_max must be >= 1, got {self.pi_max}')


def project_scenarios(W: CoefficientMatrix, location: RegionLocation, spec: NormalizationSpec) -> YieldScenarioSet:
    if len(location.weather_history) < 2:
        raise ParameterError(f'location {location.location_id} needs at least 2 weather years, has {len(location.weather_history)}')

    raw = numpy.array([[location.features(weather)[name] for name in spec.feature_names] for weather in location.weather_history], dtype=float)
    design = numpy.hstack([spec.transform(raw), numpy.ones((raw.shape[0], 1))])
    scenarios = (design @ W.entries).T
    return YieldScenarioSet(location.location_id, list(W.variety_ids), location.years, scenarios)


def estimate_distribution(S: YieldScenarioSet, epsilon: float = DEFAULT_EPSILON) -> YieldDistribution:
    """
    Row means and the (T-1)-denominator covariance of the scenarios, plus a ridge of epsilon times the mean variance
    (epsilon itself when every variance is zero).
    """
    if epsilon < 0:
        raise ParameterError(f'epsilon must be >= 0, got {epsilon}')
    if S.scenarios.shape[1] < 2:
        raise ParameterError(f'location {S.location_id} needs at least 2 scenarios, has {S.scenarios.shape[1]}')

    mean = S.scenarios.mean(axis=1)
    covariance = numpy.atleast_2d(numpy.cov(S.scenarios, ddof=1))
    covariance = (covariance + covariance.T) / 2.0
    scale = float(numpy.mean(numpy.diag(covariance)))
    ridge = epsilon * scale if scale > 0 else epsilon
    covariance = covariance + ridge * numpy.eye(covariance.shape[0])
    logger.debug('Location {}: {} varieties over {} scenarios, ridge {}', S.location_id, len(S.variety_ids), len(S.years), ridge)
    return YieldDistribution(S.location_id, list(S.variety_ids), mean, covariance, epsilon, ridge)


def risk_budget(pi: int, budget: RiskBudget = RiskBudget()) -> float:
    """
    Maximal tolerable risk, linear in the productivity index from r_min at 0 to r_max at pi_max.
    """
    if int(pi) != pi or not 0 <= pi <= budget.pi_max:
        raise ParameterError(f'productivity index must be an integer in [0, {budget.pi_max}], got {pi}')
    if pi == budget.pi_max:
        return budget.r_max

    return budget.r_min + (pi / budget.pi_max) * (budget.r_max - budget.r_min)
