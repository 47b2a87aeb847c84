"""
Objectives of the three formulations, all with the un-halved squared loss sum_i ||X_i beta_i - Y_i||^2:

lasso   loss + lam ||W||_1
mean    loss + lam sum_i ||beta_i - mean_j beta_j||_1
graph   loss + lam1 ||W G||_F^2 + lam2 ||W||_1
"""

from typing import List, Optional, Union

import numpy

from seedmix.mtl.model import CoefficientMatrix, Formulation
from seedmix.tasks import MultiTaskDataset


def soft_threshold(x: numpy.ndarray, threshold: float) -> numpy.ndarray:
    return numpy.sign(x) * numpy.maximum(numpy.abs(x) - threshold, 0.0)


def as_entries(data: MultiTaskDataset, W: Union[CoefficientMatrix, numpy.ndarray]) -> numpy.ndarray:
    """
    Coefficients as a (p+1) x V array whose columns follow the dataset's task order.
    """
    if isinstance(W, CoefficientMatrix):
        return W.columns(data.variety_ids)

    return numpy.asarray(W, dtype=float)


def residuals(data: MultiTaskDataset, entries: numpy.ndarray) -> List[numpy.ndarray]:
    return [task.X @ entries[:, i] - task.Y for i, task in enumerate(data.tasks)]


def squared_loss(data: MultiTaskDataset, entries: numpy.ndarray) -> float:
    return float(sum(residual @ residual for residual in residuals(data, entries)))


def loss_gradient(data: MultiTaskDataset, entries: numpy.ndarray) -> numpy.ndarray:
    gradient = numpy.empty_like(entries)
    for i, task in enumerate(data.tasks):
        gradient[:, i] = 2.0 * (task.X.T @ (task.X @ entries[:, i] - task.Y))

    return gradient


def centered(entries: numpy.ndarray) -> numpy.ndarray:
    """
    W C with C = I - (1/V) 1 1^T: each column minus the mean column.
    """
    return entries - entries.mean(axis=1, keepdims=True)


def objective_value(formulation: Formulation, data: MultiTaskDataset, W: Union[CoefficientMatrix, numpy.ndarray], lam: float = 0.0, lam1: float = 0.0, lam2: float = 0.0, G: Optional[numpy.ndarray] = None) -> float:
    entries = as_entries(data, W)
    value = squared_loss(data, entries)
    formulation = Formulation(formulation)
    if formulation == Formulation.LASSO:
        value += lam * float(numpy.abs(entries).sum())
    elif formulation == Formulation.MEAN:
        value += lam * float(numpy.abs(centered(entries)).sum())
    elif formulation == Formulation.GRAPH:
        if G is not None and G.shape[1] > 0:
            WG = entries @ G
            value += lam1 * float((WG * WG).sum())
        value += lam2 * float(numpy.abs(entries).sum())

    return value
