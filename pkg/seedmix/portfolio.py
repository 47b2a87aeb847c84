"""
Risk-constrained variety mixes on the probability simplex:

    max  w . mu   subject to  w' Sigma w <= cap^2,  w >= 0,  sum w = 1.

When the best single variety is within the cap it is the answer.  Otherwise the cap binds and the solution is found
on the scalarized family  max w . mu - gamma w' Sigma w  by bisecting gamma until the risk of the scalarized optimum
meets the cap.  Each scalarized problem is solved by projected gradient, polished by an exact solve on the current
support whenever that solve satisfies the optimality conditions.
"""

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy
import scipy.linalg
from loguru import logger

from seedmix.errors import ParameterError, ValidationError
from seedmix.risk import YieldDistribution

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AllocationOptions:
    tolerance: float = 1e-6
    """
    relative distance of the achieved risk to the cap at which bisection stops.
    """
    max_bisections: int = 200
    max_iterations: int = 5000
    """
    projected gradient iterations per scalarized problem.
    """
    gamma_low: float = 1e-8
    gamma_high: float = 1e8
    polish_every: int = 10

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ParameterError(f'tolerance must be > 0, got {self.tolerance}')
        if not 0 < self.gamma_low < self.gamma_high:
            raise ParameterError(f'gamma bracket must satisfy 0 < low < high, got {self.gamma_low}, {self.gamma_high}')
        if self.max_bisections < 1 or self.max_iterations < 1 or self.polish_every < 1:
            raise ParameterError('iteration limits must be >= 1')


@dataclass(frozen=True, eq=False)
class AllocationWeights:
    location_id: str
    variety_ids: List[str]
    weights: numpy.ndarray
    expected_yield: float = 0.0
    risk: float = 0.0
    risk_cap: float = 0.0
    feasible: bool = True
    """
    False when even the minimum-variance mix exceeds the cap; the weights are then that mix.
    """

    def __post_init__(self):
        if self.weights.shape != (len(self.variety_ids),):
            raise ValidationError(f'{len(self.weights)} weights for {len(self.variety_ids)} varieties')
        if numpy.any(self.weights < -SIMPLEX_TOLERANCE) or numpy.any(self.weights > 1 + SIMPLEX_TOLERANCE) or abs(self.weights.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ValidationError(f'allocation at {self.location_id} is not on the simplex')

    def weight(self, variety_id: str) -> float:
        return float(self.weights[self.variety_ids.index(variety_id)])


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    risk: float
    """
    the risk cap of this grid point, ``weights.risk`` holds the risk actually reached.
    """
    expected_yield: float
    weights: AllocationWeights


def project_to_simplex(v: numpy.ndarray) -> numpy.ndarray:
    """
    Euclidean projection onto {w >= 0, sum w = 1} by sorting and thresholding.
    """
    v = numpy.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0 or not numpy.all(numpy.isfinite(v)):
        raise ParameterError('can only project a nonempty finite vector')

    u = numpy.sort(v)[::-1]
    excess = numpy.cumsum(u) - 1.0
    index = numpy.arange(1, v.size + 1)
    k = numpy.nonzero(u - excess / index > 0)[0][-1]
    threshold = excess[k] / (k + 1)
    return numpy.maximum(v - threshold, 0.0)


def _risk(sigma: numpy.ndarray, w: numpy.ndarray) -> float:
    return float(numpy.sqrt(max(float(w @ sigma @ w), 0.0)))


def _clean(w: numpy.ndarray) -> numpy.ndarray:
    w = numpy.maximum(w, 0.0)
    return w / w.sum()


def _face_solve(mu: numpy.ndarray, sigma: numpy.ndarray, gamma: float, support: numpy.ndarray) -> Optional[numpy.ndarray]:
    """
    Exact maximizer of w . mu - gamma w' Sigma w over the simplex if its support is ``support``, else None.
    """
    size = support.size
    # stationarity 2 gamma Sigma_SS w_S + nu 1 = mu_S bordered by sum w_S = 1
    K = numpy.zeros((size + 1, size + 1))
    K[:size, :size] = 2.0 * gamma * sigma[numpy.ix_(support, support)]
    K[:size, size] = 1.0
    K[size, :size] = 1.0
    rhs = numpy.append(mu[support], 1.0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
            solution = scipy.linalg.solve(K, rhs, assume_a='sym')
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    if not numpy.all(numpy.isfinite(solution)):
        return None
    w_support, nu = solution[:size], float(solution[size])
    scale = max(1.0, float(numpy.abs(mu).max()), abs(nu))
    if numpy.any(w_support < -1e-12) or numpy.max(numpy.abs(K @ solution - rhs)) > 1e-9 * scale:
        return None

    w = numpy.zeros(mu.size)
    w[support] = w_support
    w = _clean(w)
    outside = numpy.setdiff1d(numpy.arange(mu.size), support)
    if outside.size and numpy.any(mu[outside] - 2.0 * gamma * (sigma[outside] @ w) > nu + 1e-10 * scale):
        return None

    return w


def _scalarized(mu: numpy.ndarray, sigma: numpy.ndarray, gamma: float, start: numpy.ndarray, lam_max: float, opts: AllocationOptions) -> numpy.ndarray:
    """
    argmax w . mu - gamma w' Sigma w over the simplex, starting from ``start``.
    """
    step = 1.0 / (2.0 * gamma * lam_max * (1.0 + 1e-12) + numpy.finfo(float).tiny)
    w = start
    for iteration in range(1, opts.max_iterations + 1):
        w_next = project_to_simplex(w + step * (mu - 2.0 * gamma * (sigma @ w)))
        if iteration % opts.polish_every == 0 or numpy.max(numpy.abs(w_next - w)) < 1e-15:
            exact = _face_solve(mu, sigma, gamma, numpy.flatnonzero(w_next > 0))
            if exact is not None:
                return exact
        if numpy.max(numpy.abs(w_next - w)) < 1e-15:
            return w_next
        w = w_next

    logger.debug('Scalarized allocation at gamma {} stopped after {} iterations', gamma, opts.max_iterations)
    return w


def minimum_variance(sigma: numpy.ndarray, opts: AllocationOptions = AllocationOptions()) -> numpy.ndarray:
    """
    The simplex mix of least variance.
    """
    sigma = numpy.asarray(sigma, dtype=float)
    size = sigma.shape[0]
    lam_max = float(numpy.linalg.eigvalsh(sigma)[-1])
    return _scalarized(numpy.zeros(size), sigma, 1.0, numpy.full(size, 1.0 / size), max(lam_max, numpy.finfo(float).tiny), opts)


def _validate(mu: numpy.ndarray, sigma: numpy.ndarray) -> Tuple[numpy.ndarray, numpy.ndarray]:
    mu = numpy.asarray(mu, dtype=float)
    sigma = numpy.asarray(sigma, dtype=float)
    if mu.ndim != 1 or mu.size == 0 or sigma.shape != (mu.size, mu.size):
        raise ParameterError(f'mean {mu.shape} and covariance {sigma.shape} do not agree')
    if not numpy.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * max(1.0, float(numpy.abs(sigma).max()))):
        raise ParameterError('covariance must be symmetric')

    return mu, sigma


def _allocation(w: numpy.ndarray, mu: numpy.ndarray, sigma: numpy.ndarray, cap: float, location_id: str, variety_ids: Sequence[str], feasible: bool = True) -> AllocationWeights:
    return AllocationWeights(location_id, list(variety_ids), w, float(w @ mu), _risk(sigma, w), cap, feasible)


def solve_allocation(mu: numpy.ndarray, sigma: numpy.ndarray, risk_cap: float, opts: AllocationOptions = AllocationOptions(), location_id: str = '', variety_ids: Optional[Sequence[str]] = None) -> AllocationWeights:
    mu, sigma = _validate(mu, sigma)
    if not risk_cap > 0:
        raise ParameterError(f'risk cap must be > 0, got {risk_cap}')
    variety_ids = list(variety_ids) if variety_ids is not None else [str(i) for i in range(mu.size)]

    # best single variety within the cap, lowest index among ties
    for i in numpy.flatnonzero(mu == mu.max()):
        if numpy.sqrt(max(sigma[i, i], 0.0)) <= risk_cap:
            w = numpy.zeros(mu.size)
            w[i] = 1.0
            return _allocation(w, mu, sigma, risk_cap, location_id, variety_ids)

    w_min = minimum_variance(sigma, opts)
    if _risk(sigma, w_min) > risk_cap * (1.0 + 1e-12):
        logger.warning('Location {}: risk cap {} is below the minimum-variance risk {}', location_id or '?', risk_cap, _risk(sigma, w_min))
        return _allocation(w_min, mu, sigma, risk_cap, location_id, variety_ids, feasible=False)

    lam_max = max(float(numpy.linalg.eigvalsh(sigma)[-1]), numpy.finfo(float).tiny)
    low, high = opts.gamma_low, opts.gamma_high
    w_low = _scalarized(mu, sigma, low, w_min, lam_max, opts)
    if _risk(sigma, w_low) <= risk_cap:
        return _allocation(w_low, mu, sigma, risk_cap, location_id, variety_ids)

    w_high = _scalarized(mu, sigma, high, w_min, lam_max, opts)
    expansions = 0
    while _risk(sigma, w_high) > risk_cap and expansions < 64:
        low, w_low = high, w_high
        high *= 2.0
        w_high = _scalarized(mu, sigma, high, w_high, lam_max, opts)
        expansions += 1
    if _risk(sigma, w_high) > risk_cap:
        return _allocation(w_min, mu, sigma, risk_cap, location_id, variety_ids)

    for _ in range(opts.max_bisections):
        if abs(_risk(sigma, w_high) - risk_cap) <= opts.tolerance * risk_cap or high / low <= 1.0 + 1e-15:
            break
        gamma = numpy.sqrt(low * high)
        w = _scalarized(mu, sigma, gamma, w_high, lam_max, opts)
        if _risk(sigma, w) > risk_cap:
            low = gamma
        else:
            high, w_high = gamma, w

    return _allocation(w_high, mu, sigma, risk_cap, location_id, variety_ids)


def allocate(distribution: YieldDistribution, risk_cap: float, opts: AllocationOptions = AllocationOptions()) -> AllocationWeights:
    return solve_allocation(distribution.mean, distribution.covariance, risk_cap, opts, distribution.location_id, distribution.variety_ids)


def efficient_frontier(mu: numpy.ndarray, sigma: numpy.ndarray, risk_grid: Sequence[float], opts: AllocationOptions = AllocationOptions(), location_id: str = '', variety_ids: Optional[Sequence[str]] = None) -> List[FrontierPoint]:
    grid = [float(r) for r in risk_grid]
    if not grid or any(r <= 0 for r in grid) or any(b < a for a, b in zip(grid, grid[1:])):
        raise ParameterError('risk grid must be nonempty, positive and ascending')

    points = []
    for cap in grid:
        allocation = solve_allocation(mu, sigma, cap, opts, location_id, variety_ids)
        points.append(FrontierPoint(risk=cap, expected_yield=allocation.expected_yield, weights=allocation))

    return points


def suboptimality_gap(full: YieldDistribution, restricted: YieldDistribution, risk_cap: float, opts: AllocationOptions = AllocationOptions()) -> float:
    """
    Expected yield lost at ``risk_cap`` by choosing only among the restricted varieties, never negative.
    """
    full.indices(restricted.variety_ids)
    gap = allocate(full, risk_cap, opts).expected_yield - allocate(restricted, risk_cap, opts).expected_yield
    return max(gap, 0.0)


def variety_points(distribution: YieldDistribution) -> List[Tuple[str, float, float]]:
    """
    (variety, risk, expected yield) of every single-variety mix.
    """
    risks = numpy.sqrt(numpy.maximum(numpy.diag(distribution.covariance), 0.0))
    return [(variety_id, float(risk), float(mean)) for variety_id, risk, mean in zip(distribution.variety_ids, risks, distribution.mean)]


def default_risk_grid(mu: numpy.ndarray, sigma: numpy.ndarray, points: int = 20, opts: AllocationOptions = AllocationOptions()) -> List[float]:
    """
    Evenly spaced caps from the minimum-variance risk to the largest single-variety risk.
    """
    mu, sigma = _validate(mu, sigma)
    if points < 1:
        raise ParameterError(f'points must be >= 1, got {points}')

    low = _risk(sigma, minimum_variance(sigma, opts))
    high = float(numpy.sqrt(numpy.maximum(numpy.diag(sigma), 0.0)).max())
    if points == 1 or high <= low:
        return [max(low, high)]

    return [float(r) for r in numpy.linspace(low, high, points)]
