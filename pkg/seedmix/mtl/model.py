from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy

from seedmix.errors import ParameterError, UnknownVarietyError, ValidationError


class Formulation(str, Enum):
    LASSO = 'lasso'
    MEAN = 'mean'
    GRAPH = 'graph'


@dataclass
class SolverOptions:
    max_iterations: int = 10000
    tolerance: float = 1e-6
    """
    ADMM: relative primal and dual residuals.  Proximal gradient: residual of a proximal step relative to max(1, ||W||).
    """
    rho: float = 1.0
    """
    initial ADMM penalty, adapted by residual balancing.
    """
    backtracking: float = 0.5
    """
    step-size shrink factor of the proximal gradient line search.
    """

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError(f'max_iterations must be >= 1, got {self.max_iterations}')
        if not self.tolerance > 0:
            raise ParameterError(f'tolerance must be > 0, got {self.tolerance}')
        if not self.rho > 0:
            raise ParameterError(f'rho must be > 0, got {self.rho}')
        if not 0 < self.backtracking < 1:
            raise ParameterError(f'backtracking must be in (0, 1), got {self.backtracking}')


@dataclass
class SolverReport:
    formulation: Formulation
    penalties: Dict[str, float]
    iterations: int = 0
    converged: bool = True
    objective: float = 0.0
    history: List[float] = field(default_factory=list)
    """
    objective of each accepted iterate, starting with the initial point.
    """

    def to_dict(self) -> dict:
        return {
            'formulation': self.formulation.value,
            'penalties': dict(self.penalties),
            'iterations': self.iterations,
            'converged': self.converged,
            'objective': self.objective,
        }


@dataclass(eq=False)
class CoefficientMatrix:
    """
    W = [beta_1 ... beta_V], one column of p+1 coefficients per variety, the intercept last.
    """

    entries: numpy.ndarray
    variety_ids: List[str]
    feature_names: List[str]
    report: Optional[SolverReport] = None

    def __post_init__(self):
        self.entries = numpy.asarray(self.entries, dtype=float)
        if self.entries.shape != (len(self.feature_names), len(self.variety_ids)):
            raise ValidationError(f'coefficient matrix shape {self.entries.shape} does not match {len(self.feature_names)} features x {len(self.variety_ids)} varieties')
        if not numpy.all(numpy.isfinite(self.entries)):
            raise ValidationError('coefficient matrix has non-finite entries')

    @property
    def num_tasks(self) -> int:
        return len(self.variety_ids)

    def index(self, variety_id: str) -> int:
        try:
            return self.variety_ids.index(variety_id)
        except ValueError:
            raise UnknownVarietyError(variety_id) from None

    def column(self, variety_id: str) -> numpy.ndarray:
        return self.entries[:, self.index(variety_id)]

    def columns(self, variety_ids: List[str]) -> numpy.ndarray:
        return self.entries[:, [self.index(variety_id) for variety_id in variety_ids]]


def predict_yield(W: CoefficientMatrix, features: numpy.ndarray, variety_id: str) -> float:
    """
    beta_i . (features, 1) for normalized features ordered like W's feature names.
    """
    beta = W.column(variety_id)
    features = numpy.asarray(features, dtype=float)
    if features.shape != (beta.shape[0] - 1,):
        raise ValidationError(f'expected {beta.shape[0] - 1} features, got {features.shape}')

    return float(features @ beta[:-1] + beta[-1])
