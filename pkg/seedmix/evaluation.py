"""
Model scoring, k-fold cross validation and exhaustive grid search over the regularization parameters.
"""

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy
from loguru import logger

from seedmix.errors import ParameterError
from seedmix.mtl import CoefficientMatrix, Formulation, SolverOptions, TaskGraph, build_task_graph, fit_graph, fit_formulation, solve_multitask_lasso
from seedmix.mtl.objective import as_entries, residuals
from seedmix.tasks import MultiTaskDataset, cv_folds, fold_training_rows

PARAMETERS = {
    Formulation.MEAN: ['lambda'],
    Formulation.LASSO: ['lambda_l'],
    Formulation.GRAPH: ['lambda_l', 'threshold', 'lambda1', 'lambda2'],
}
"""
Parameters searched per formulation, outermost first.
"""

DEFAULT_LAMBDAS = [0.01, 0.1, 1.0, 10.0, 100.0]
DEFAULT_THRESHOLDS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def _residuals(W: CoefficientMatrix, data: MultiTaskDataset) -> List[numpy.ndarray]:
    if not data.tasks:
        raise ParameterError('cannot score a model on an empty dataset')

    return residuals(data, as_entries(data, W))


def rmse_paper(W: CoefficientMatrix, data: MultiTaskDataset) -> float:
    """
    sum_i sqrt(SSE_i) * n_i / sum_i n_i, the square root taken over the un-averaged squared error of each task.
    """
    sizes = numpy.array(data.sizes, dtype=float)
    norms = numpy.array([numpy.sqrt(residual @ residual) for residual in _residuals(W, data)])
    return float((norms * sizes).sum() / sizes.sum())


def rmse_standard(W: CoefficientMatrix, data: MultiTaskDataset) -> float:
    """
    sqrt of the squared error pooled over every observation of every task.
    """
    total = sum(float(residual @ residual) for residual in _residuals(W, data))
    return float(numpy.sqrt(total / data.total_rows))


def model_metrics(W: CoefficientMatrix, **datasets: MultiTaskDataset) -> Dict[str, float]:
    """
    Both metrics for every named dataset, e.g. ``model_metrics(W, train=train, test=test)``.
    """
    metrics = {}
    for name, data in datasets.items():
        if data.tasks:
            metrics[f'{name}_rmse_paper'] = rmse_paper(W, data)
            metrics[f'{name}_rmse_standard'] = rmse_standard(W, data)

    return metrics


@dataclass
class ParamGrid:
    values: Dict[str, List[float]]

    def __post_init__(self):
        for name, candidates in self.values.items():
            if not len(candidates):
                raise ParameterError(f'grid for {name} is empty')

    @staticmethod
    def default(formulation: Formulation) -> 'ParamGrid':
        values = {name: list(DEFAULT_LAMBDAS) for name in PARAMETERS[Formulation(formulation)]}
        if 'threshold' in values:
            values['threshold'] = list(DEFAULT_THRESHOLDS)
        return ParamGrid(values)

    def combinations(self, formulation: Formulation) -> List[Dict[str, float]]:
        names = PARAMETERS[Formulation(formulation)]
        missing = [name for name in names if name not in self.values]
        if missing:
            raise ParameterError(f'grid for {Formulation(formulation).value} is missing {missing}')

        return [dict(zip(names, values)) for values in itertools.product(*(self.values[name] for name in names))]


@dataclass
class CvResult:
    formulation: Formulation
    combinations: List[Dict[str, float]]
    fold_scores: List[List[float]]
    """
    rmse_paper per combination and fold, NaN for a fold without validation rows.
    """
    mean_scores: List[float]
    wall_times: List[float] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        # first minimum wins ties
        return int(numpy.argmin(self.mean_scores))

    @property
    def best(self) -> Dict[str, float]:
        return self.combinations[self.best_index]

    @property
    def best_score(self) -> float:
        return self.mean_scores[self.best_index]

    @property
    def folds(self) -> int:
        return len(self.fold_scores[0]) if self.fold_scores else 0


@dataclass
class _Fold:
    training: MultiTaskDataset
    validation: MultiTaskDataset


def _folds(data: MultiTaskDataset, k: int, seed: int) -> List[_Fold]:
    folds = []
    for validation in cv_folds(data, k, seed):
        folds.append(_Fold(data.select(fold_training_rows(data, validation)), data.select(validation)))
    if not any(fold.validation.tasks for fold in folds):
        raise ParameterError('no task has enough rows for cross validation')

    return folds


def _score(fold: _Fold, W: CoefficientMatrix) -> float:
    if not fold.validation.tasks:
        return numpy.nan

    return rmse_paper(W, fold.validation)


def _mean(scores: Sequence[float]) -> float:
    return float(numpy.nanmean(numpy.array(scores, dtype=float)))


def k_fold_cv(data: MultiTaskDataset, k: int, formulation: Formulation, params: Mapping[str, float], seed: int, opts: SolverOptions = SolverOptions()) -> float:
    """
    Mean rmse_paper over the validation parts of k stratified folds.
    """
    scores = [_score(fold, fit_formulation(formulation, fold.training, params, opts)) for fold in _folds(data, k, seed)]
    logger.debug('{}-fold CV of {} {}: {}', k, Formulation(formulation).value, dict(params), scores)
    return _mean(scores)


def _fold_graphs(folds: List[_Fold], combinations: List[Dict[str, float]], opts: SolverOptions) -> Dict[Tuple[float, float], List[TaskGraph]]:
    """
    Task graphs for every (lambda_l, threshold) pair, one per fold; the lasso bootstrap is shared across thresholds.
    """
    bootstraps: Dict[Tuple[int, float], CoefficientMatrix] = {}
    graphs: Dict[Tuple[float, float], List[TaskGraph]] = {}
    for combination in combinations:
        key = (combination['lambda_l'], combination['threshold'])
        if key in graphs:
            continue
        graphs[key] = []
        for f, fold in enumerate(folds):
            if fold.training.num_tasks < 2:
                graphs[key].append(TaskGraph(num_tasks=fold.training.num_tasks, threshold=key[1]))
                continue
            if (f, key[0]) not in bootstraps:
                bootstraps[(f, key[0])] = solve_multitask_lasso(fold.training, key[0], opts)
            graphs[key].append(build_task_graph(bootstraps[(f, key[0])], key[1]))

    return graphs


def grid_search(data: MultiTaskDataset, formulation: Formulation, grid: ParamGrid, k: int, seed: int, opts: SolverOptions = SolverOptions(), threads: int = 1) -> CvResult:
    """
    Exhaustive search, every combination scored by k-fold CV on the same folds.  For the graph formulation the
    graph parameters (lambda_l, threshold) are the outer loop and each graph is built once per fold.
    """
    formulation = Formulation(formulation)
    combinations = grid.combinations(formulation)
    folds = _folds(data, k, seed)
    graphs = _fold_graphs(folds, combinations, opts) if formulation == Formulation.GRAPH else {}

    def evaluate(combination: Dict[str, float]) -> Tuple[List[float], float]:
        start = time.perf_counter()
        scores = []
        for f, fold in enumerate(folds):
            if formulation == Formulation.GRAPH:
                graph = graphs[(combination['lambda_l'], combination['threshold'])][f]
                W = fit_graph(fold.training, combination['lambda_l'], combination['threshold'], combination['lambda1'], combination['lambda2'], opts, graph=graph)[0]
            else:
                W = fit_formulation(formulation, fold.training, combination, opts)
            scores.append(_score(fold, W))
        logger.debug('{} {}: {}', formulation.value, combination, scores)
        return scores, time.perf_counter() - start

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        outcomes = list(executor.map(evaluate, combinations))

    result = CvResult(
        formulation=formulation,
        combinations=combinations,
        fold_scores=[scores for scores, _ in outcomes],
        mean_scores=[_mean(scores) for scores, _ in outcomes],
        wall_times=[elapsed for _, elapsed in outcomes],
    )
    logger.info('Best {} parameters {} with CV rmse {}', formulation.value, result.best, result.best_score)
    return result

