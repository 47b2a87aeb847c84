"""
From per-location mixes to a stocking plan: area-weighted demand, the most demanded varieties, re-optimization of
every location over those varieties only, and the final drop-and-renormalize rule.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Sequence, Tuple, TypeVar

import numpy
from loguru import logger

from seedmix.errors import ParameterError, ValidationError
from seedmix.portfolio import AllocationOptions, AllocationWeights, allocate
from seedmix.records import RegionLocation
from seedmix.risk import RiskBudget, YieldDistribution, risk_budget

MIN_CANDIDATES = 5

T = TypeVar('T')
R = TypeVar('R')


def ordered_map(function: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    ``function`` applied to every item, on up to ``threads`` workers, results in item order.
    """
    if threads <= 1:
        return [function(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(function, items))


@dataclass(frozen=True, eq=False)
class DemandVector:
    variety_ids: List[str]
    demand: numpy.ndarray

    def __post_init__(self):
        if self.demand.shape != (len(self.variety_ids),):
            raise ValidationError(f'{self.demand.shape} demand values for {len(self.variety_ids)} varieties')
        if numpy.any(self.demand < 0):
            raise ValidationError('demand must be nonnegative')

    @property
    def total(self) -> float:
        return float(self.demand.sum())

    def restrict(self, variety_ids: Sequence[str]) -> 'DemandVector':
        index = [self.variety_ids.index(variety_id) for variety_id in variety_ids]
        return DemandVector(list(variety_ids), self.demand[index])


@dataclass(frozen=True)
class StockingPlan:
    entries: List[Tuple[str, float]]
    """
    (variety, proportion), largest proportion first.
    """
    dropped: List[Tuple[str, float, str]] = field(default_factory=list)
    """
    (variety, proportion when dropped, reason) in drop order.
    """

    def __post_init__(self):
        proportions = [proportion for _, proportion in self.entries]
        if not proportions:
            raise ValidationError('a stocking plan needs at least one variety')
        if any(not 0 < proportion <= 1 for proportion in proportions) or abs(sum(proportions) - 1.0) > 1e-9:
            raise ValidationError(f'plan proportions must be in (0, 1] and sum to 1, got {proportions}')

    @property
    def variety_ids(self) -> List[str]:
        return [variety_id for variety_id, _ in self.entries]


def aggregate_demand(allocations: Sequence[AllocationWeights], locations: Sequence[RegionLocation]) -> DemandVector:
    """
    d_i = sum over locations of area times the location's weight on variety i.
    """
    if not allocations:
        raise ValidationError('no allocations to aggregate')

    by_location: Dict[str, AllocationWeights] = {}
    for allocation in allocations:
        if allocation.location_id in by_location:
            raise ValidationError(f'two allocations for location {allocation.location_id}')
        by_location[allocation.location_id] = allocation
    areas = {location.location_id: location.area for location in locations}
    if set(by_location) != set(areas):
        unmatched = sorted(set(by_location).symmetric_difference(areas))
        raise ValidationError(f'allocations and locations do not match: {unmatched}')

    variety_ids = list(allocations[0].variety_ids)
    demand = numpy.zeros(len(variety_ids))
    for location_id in sorted(by_location):
        allocation = by_location[location_id]
        if allocation.variety_ids != variety_ids:
            raise ValidationError(f'allocation at {location_id} uses a different variety order')
        demand += areas[location_id] * allocation.weights

    return DemandVector(variety_ids, numpy.maximum(demand, 0.0))


def rank_top_m(d: DemandVector, m: int) -> List[str]:
    """
    The m most demanded varieties, descending, ties to the lexicographically smaller id.
    """
    if m < 1:
        raise ParameterError(f'm must be >= 1, got {m}')
    if m < MIN_CANDIDATES:
        logger.warning('Keeping only {} candidate varieties, at least {} are recommended', m, MIN_CANDIDATES)

    order = sorted(range(len(d.variety_ids)), key=lambda i: (-d.demand[i], d.variety_ids[i]))
    return [d.variety_ids[i] for i in order[: min(m, len(order))]]


def location_risk_caps(locations: Sequence[RegionLocation], budget: RiskBudget = RiskBudget()) -> Dict[str, float]:
    return {location.location_id: risk_budget(location.soil.pi, budget) for location in locations}


def allocate_all(distributions: Mapping[str, YieldDistribution], budgets: Mapping[str, float], opts: AllocationOptions = AllocationOptions(), threads: int = 1) -> List[AllocationWeights]:
    """
    One allocation per location, sorted by location id.
    """
    location_ids = sorted(distributions)
    return ordered_map(lambda location_id: allocate(distributions[location_id], budgets[location_id], opts), location_ids, threads)


def reoptimize_restricted(candidates: Sequence[str], distributions: Mapping[str, YieldDistribution], budgets: Mapping[str, float], opts: AllocationOptions = AllocationOptions(), threads: int = 1) -> List[AllocationWeights]:
    """
    Every location solved again over the candidate varieties only, with the same risk caps.
    """
    if not candidates:
        raise ParameterError('no candidate varieties')

    restricted = {location_id: distribution.restrict(candidates) for location_id, distribution in distributions.items()}
    return allocate_all(restricted, budgets, opts, threads)


def finalize_plan(demand: DemandVector, min_share: float = 0.10, max_entries: int = MIN_CANDIDATES) -> StockingPlan:
    """
    Proportional to demand, then the smallest variety below ``min_share`` is dropped and the rest renormalized until
    every remaining one reaches it (or one is left).  Ties drop the larger id first.
    """
    if not 0 <= min_share <= 1:
        raise ParameterError(f'min_share must be in [0, 1], got {min_share}')
    if len(demand.variety_ids) > max_entries:
        raise ParameterError(f'a plan takes at most {max_entries} varieties, got {len(demand.variety_ids)}')
    if not demand.total > 0:
        raise ParameterError('cannot build a plan from zero demand')

    kept = {variety_id: float(value) for variety_id, value in zip(demand.variety_ids, demand.demand)}
    dropped = []
    for variety_id in sorted(variety_id for variety_id, value in kept.items() if value == 0):
        dropped.append((variety_id, 0.0, 'no demand'))
        del kept[variety_id]

    while len(kept) > 1:
        total = sum(kept.values())
        smallest = min(kept, key=lambda variety_id: (kept[variety_id], _descending(variety_id)))
        share = kept[smallest] / total
        if share >= min_share:
            break
        dropped.append((smallest, share, f'below minimum share {min_share}'))
        del kept[smallest]
        logger.info('Dropped {} at share {:.4f}', smallest, share)

    total = sum(kept.values())
    entries = sorted(((variety_id, value / total) for variety_id, value in kept.items()), key=lambda entry: (-entry[1], entry[0]))
    return StockingPlan(entries=entries, dropped=dropped)


def _descending(text: str) -> Tuple[int, ...]:
    # orders strings from largest to smallest
    return tuple(-ord(character) for character in text) + (1,)
