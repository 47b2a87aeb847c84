from typing import Mapping, Optional, Tuple

from seedmix.errors import ParameterError
from seedmix.mtl.graph import GraphIncidence, TaskGraph, build_task_graph, solve_graph_mtl, solve_multitask_lasso
from seedmix.mtl.mean import solve_mean_regularized
from seedmix.mtl.model import CoefficientMatrix, Formulation, SolverOptions, SolverReport, predict_yield
from seedmix.mtl.objective import objective_value, soft_threshold
from seedmix.mtl.proximal import least_squares
from seedmix.tasks import MultiTaskDataset

__all__ = [
    'CoefficientMatrix',
    'Formulation',
    'GraphIncidence',
    'SolverOptions',
    'SolverReport',
    'TaskGraph',
    'build_task_graph',
    'fit_graph',
    'fit_formulation',
    'least_squares',
    'objective_value',
    'predict_yield',
    'soft_threshold',
    'solve_graph_mtl',
    'solve_mean_regularized',
    'solve_multitask_lasso',
]


def fit_graph(data: MultiTaskDataset, lambda_l: float, threshold: float, lambda1: float, lambda2: float, opts: SolverOptions = SolverOptions(), graph: Optional[TaskGraph] = None) -> Tuple[CoefficientMatrix, TaskGraph]:
    """
    Bootstrap a multi-task lasso, connect the tasks whose coefficients correlate above the threshold, and solve the
    graph formulation on that graph.  A single task gets an empty graph.
    """
    bootstrap_converged = True
    if graph is None:
        if data.num_tasks < 2:
            graph = TaskGraph(num_tasks=data.num_tasks, threshold=threshold)
        else:
            basic = solve_multitask_lasso(data, lambda_l, opts)
            bootstrap_converged = basic.report.converged
            graph = build_task_graph(basic, threshold)

    W = solve_graph_mtl(data, lambda1, lambda2, graph, opts)
    W.report.penalties.update({'lambda_l': lambda_l, 'threshold': threshold})
    W.report.converged = W.report.converged and bootstrap_converged
    return W, graph


def fit_formulation(formulation: Formulation, data: MultiTaskDataset, params: Mapping[str, float], opts: SolverOptions = SolverOptions()) -> CoefficientMatrix:
    """
    Fit one formulation from a parameter mapping: ``lambda`` for mean, ``lambda_l``, ``threshold``, ``lambda1`` and
    ``lambda2`` for graph, ``lambda_l`` for lasso.
    """
    formulation = Formulation(formulation)
    try:
        if formulation == Formulation.MEAN:
            return solve_mean_regularized(data, params['lambda'], opts)
        if formulation == Formulation.LASSO:
            return solve_multitask_lasso(data, params['lambda_l'], opts)
        return fit_graph(data, params['lambda_l'], params['threshold'], params['lambda1'], params['lambda2'], opts)[0]
    except KeyError as error:
        raise ParameterError(f'{formulation.value} needs parameter {error.args[0]}') from None
