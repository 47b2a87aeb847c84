"""
Graph-based multi-task learning.  Tasks whose coefficient vectors correlate (under a multi-task lasso bootstrap
model) are joined by an edge, and the penalty lam1 ||W G||_F^2 pulls connected tasks together.
"""

from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy
from loguru import logger

from seedmix.errors import ParameterError, ValidationError
from seedmix.mtl.model import CoefficientMatrix, Formulation, SolverOptions, SolverReport
from seedmix.mtl.objective import objective_value
from seedmix.mtl.proximal import accelerated_proximal_gradient, quadratic_solve
from seedmix.tasks import MultiTaskDataset


@dataclass(frozen=True, eq=False)
class GraphIncidence:
    """
    Signed V x E incidence matrix: column e of edge (i, j), i < j, holds +1 at row i and -1 at row j, so that
    ||W G||_F^2 is the sum over edges of ||beta_i - beta_j||^2.
    """

    matrix: numpy.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValidationError('incidence matrix must be two dimensional')
        for e in range(self.matrix.shape[1]):
            column = self.matrix[:, e]
            if numpy.count_nonzero(column == 1) != 1 or numpy.count_nonzero(column == -1) != 1 or numpy.count_nonzero(column) != 2:
                raise ValidationError(f'incidence column {e} must hold exactly one +1 and one -1')

    @property
    def num_edges(self) -> int:
        return self.matrix.shape[1]

    @staticmethod
    def empty(num_tasks: int) -> 'GraphIncidence':
        return GraphIncidence(numpy.zeros((num_tasks, 0)))


@dataclass(frozen=True)
class TaskGraph:
    num_tasks: int
    edges: List[Tuple[int, int]] = field(default_factory=list)
    threshold: float = 1.0

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f'self loop on task {i}')
            if not (0 <= i < self.num_tasks and 0 <= j < self.num_tasks):
                raise ValidationError(f'edge ({i}, {j}) out of range for {self.num_tasks} tasks')

    def incidence(self) -> GraphIncidence:
        matrix = numpy.zeros((self.num_tasks, len(self.edges)))
        for e, (i, j) in enumerate(self.edges):
            low, high = min(i, j), max(i, j)
            matrix[low, e] = 1.0
            matrix[high, e] = -1.0

        return GraphIncidence(matrix)


def task_correlations(entries: numpy.ndarray) -> numpy.ndarray:
    """
    Pearson correlation between coefficient columns; NaN where a column has zero variance.
    """
    deviations = entries - entries.mean(axis=0, keepdims=True)
    norms = numpy.sqrt((deviations * deviations).sum(axis=0))
    with numpy.errstate(divide='ignore', invalid='ignore'):
        correlation = (deviations.T @ deviations) / numpy.outer(norms, norms)
    correlation[numpy.outer(norms, norms) == 0] = numpy.nan

    return numpy.clip(correlation, -1.0, 1.0)


def build_task_graph(W_basic: CoefficientMatrix, threshold_t: float) -> TaskGraph:
    """
    Edge (i, j) iff the correlation of beta_i and beta_j is strictly larger than the threshold.
    """
    if not 0 <= threshold_t <= 1:
        raise ParameterError(f'correlation threshold must be in [0, 1], got {threshold_t}')
    if W_basic.num_tasks < 2:
        raise ParameterError('a task graph needs at least two tasks')

    correlation = task_correlations(W_basic.entries)
    V = W_basic.num_tasks
    edges = [(i, j) for i in range(V) for j in range(i + 1, V) if not numpy.isnan(correlation[i, j]) and correlation[i, j] > threshold_t]
    logger.debug('Task graph at threshold {}: {} edges over {} tasks', threshold_t, len(edges), V)
    return TaskGraph(num_tasks=V, edges=edges, threshold=threshold_t)


def _incidence_matrix(G: Union[GraphIncidence, TaskGraph, numpy.ndarray, None], num_tasks: int) -> numpy.ndarray:
    if G is None:
        return numpy.zeros((num_tasks, 0))
    if isinstance(G, TaskGraph):
        G = G.incidence()
    matrix = G.matrix if isinstance(G, GraphIncidence) else numpy.asarray(G, dtype=float)
    if matrix.shape[0] != num_tasks:
        raise ValidationError(f'incidence has {matrix.shape[0]} rows for {num_tasks} tasks')

    return matrix


def _solve(data: MultiTaskDataset, lam1: float, lam2: float, G: numpy.ndarray, opts: SolverOptions, report: SolverReport) -> CoefficientMatrix:
    if not data.tasks:
        raise ParameterError('cannot solve on an empty dataset')

    if lam2 == 0:
        entries = quadratic_solve(data, lam1, G)
        report.history = [objective_value(Formulation.GRAPH, data, numpy.zeros_like(entries), lam1=lam1, G=G)]
    else:
        entries, report.iterations, report.converged, report.history = accelerated_proximal_gradient(data, lam1, G, lam2, opts)

    report.objective = objective_value(Formulation.GRAPH, data, entries, lam1=lam1, lam2=lam2, G=G)
    if lam2 == 0:
        report.history.append(report.objective)
    if not report.converged:
        logger.warning('{} solver did not converge in {} iterations', report.formulation.value, report.iterations)

    return CoefficientMatrix(entries, data.variety_ids, list(data.feature_names), report)


def solve_multitask_lasso(data: MultiTaskDataset, lambda_L: float, opts: SolverOptions = SolverOptions()) -> CoefficientMatrix:
    """
    sum_i ||X_i beta_i - Y_i||^2 + lambda_L ||W||_1 (element-wise), the bootstrap model of the task graph.
    """
    if lambda_L < 0:
        raise ParameterError(f'lambda_L must be >= 0, got {lambda_L}')

    report = SolverReport(Formulation.LASSO, {'lambda_l': lambda_L})
    return _solve(data, 0.0, lambda_L, _incidence_matrix(None, data.num_tasks), opts, report)


def solve_graph_mtl(data: MultiTaskDataset, lambda1: float, lambda2: float, G: Union[GraphIncidence, TaskGraph, numpy.ndarray, None], opts: SolverOptions = SolverOptions()) -> CoefficientMatrix:
    if lambda1 < 0 or lambda2 < 0:
        raise ParameterError(f'lambda1 and lambda2 must be >= 0, got {lambda1}, {lambda2}')

    matrix = _incidence_matrix(G, data.num_tasks)
    report = SolverReport(Formulation.GRAPH, {'lambda1': lambda1, 'lambda2': lambda2, 'edges': float(matrix.shape[1])})
    return _solve(data, lambda1, lambda2, matrix, opts, report)
