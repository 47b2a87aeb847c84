"""
Mean-regularized multi-task learning,

    min_W  sum_i ||X_i beta_i - Y_i||^2 + lam sum_i ||beta_i - mean_j beta_j||_1,

by ADMM on the split Z = W C, C = I - (1/V) 1 1^T.  With the scaled dual U the iteration is

    W <- argmin loss(W) + rho/2 ||W C - Z + U||_F^2
    Z <- soft(W C + U, lam / rho)
    U <- U + W C - Z

The W-update couples the tasks only through the mean column, so it is solved exactly: block-diagonal systems
D_i = 2 X_i^T X_i + rho I for every task plus one (p+1) x (p+1) system for the mean.

Every POLISH_EVERY iterations, and once the residuals are small, the sign pattern of W C is tried as the optimal one
(see ``_pattern_solve``); when it passes, the exact minimizer replaces the ADMM iterate.
"""

import warnings
from typing import List, Optional, Tuple

import numpy
import scipy.linalg
from loguru import logger

from seedmix.errors import ParameterError
from seedmix.mtl.model import CoefficientMatrix, Formulation, SolverOptions, SolverReport
from seedmix.mtl.objective import centered, objective_value, soft_threshold
from seedmix.mtl.proximal import least_squares
from seedmix.tasks import MultiTaskDataset

BALANCE_RATIO = 10.0
BALANCE_FACTOR = 2.0
BALANCE_EVERY = 10
POLISH_EVERY = 25
POLISH_ROUNDS = 3


class _CoupledSystem:
    """
    Factorizations of the W-update for one value of rho.
    """

    def __init__(self, data: MultiTaskDataset, rho: float):
        self.rho = rho
        self.data = data
        columns = data.num_columns
        identity = numpy.eye(columns)
        self.factors: List[Tuple] = []
        self.rhs_data = numpy.empty((columns, data.num_tasks))
        inverse_sum = numpy.zeros((columns, columns))
        for i, task in enumerate(data.tasks):
            factor = scipy.linalg.cho_factor(2.0 * task.X.T @ task.X + rho * identity)
            self.factors.append(factor)
            self.rhs_data[:, i] = 2.0 * task.X.T @ task.Y
            inverse_sum += scipy.linalg.cho_solve(factor, identity)
        self.mean_system = data.num_tasks / rho * identity - inverse_sum

    def solve(self, target: numpy.ndarray) -> numpy.ndarray:
        """
        W minimizing loss(W) + rho/2 ||W C - target||_F^2.
        """
        rhs = self.rhs_data + self.rho * centered(target)
        partial = numpy.column_stack([scipy.linalg.cho_solve(factor, rhs[:, i]) for i, factor in enumerate(self.factors)])
        # m = (rho / V) sum_j beta_j closes the system
        m = scipy.linalg.lstsq(self.mean_system, partial.sum(axis=1))[0]
        correction = numpy.column_stack([scipy.linalg.cho_solve(factor, m) for factor in self.factors])
        return partial + correction


def _pattern_solve(data: MultiTaskDataset, lam: float, W: numpy.ndarray) -> Optional[numpy.ndarray]:
    """
    Exact minimizer when no entry of W C is zero at the optimum.  On a fixed sign pattern S of W C the penalty is the
    linear term lam <W, S C>, so every task solves 2 X_i^T X_i beta_i = 2 X_i^T Y_i - lam (S C)_i on its own.  Signs
    that flip in the solve are taken over for a few rounds; None when no consistent pattern is reached.
    """
    signs = numpy.sign(centered(W))
    if not numpy.all(signs):
        return None

    for _ in range(POLISH_ROUNDS):
        shift = lam * centered(signs)
        entries = numpy.empty_like(W)
        for i, task in enumerate(data.tasks):
            gram = task.X.T @ task.X
            rhs = 2.0 * task.X.T @ task.Y - shift[:, i]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
                    entries[:, i] = scipy.linalg.solve(2.0 * gram, rhs, assume_a='pos')
            except (scipy.linalg.LinAlgError, ValueError):
                return None
            if not numpy.allclose(2.0 * gram @ entries[:, i], rhs, rtol=1e-9, atol=1e-9 * max(1.0, float(numpy.abs(rhs).max()))):
                return None
        if not numpy.all(numpy.isfinite(entries)):
            return None
        found = numpy.sign(centered(entries))
        if numpy.array_equal(found, signs):
            return entries
        if not numpy.all(found):
            return None
        signs = found

    return None


def _admm(data: MultiTaskDataset, lam: float, opts: SolverOptions) -> Tuple[numpy.ndarray, int, bool, list]:
    shape = (data.num_columns, data.num_tasks)
    scale = numpy.sqrt(shape[0] * shape[1])
    W, Z, U = numpy.zeros(shape), numpy.zeros(shape), numpy.zeros(shape)

    best_W = W
    best = objective_value(Formulation.MEAN, data, W, lam=lam)
    history = [best]
    previous = best
    rho = opts.rho
    system = _CoupledSystem(data, rho)
    tried = set()
    converged = False
    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        W = system.solve(Z - U)
        WC = centered(W)
        Z_old = Z
        Z = soft_threshold(WC + U, lam / rho)
        U = U + WC - Z

        primal = float(numpy.linalg.norm(WC - Z))
        dual = rho * float(numpy.linalg.norm(centered(Z - Z_old)))
        current = objective_value(Formulation.MEAN, data, W, lam=lam)
        if current < best:
            best, best_W = current, W
        history.append(best)

        change = abs(previous - current) / max(abs(previous), numpy.finfo(float).tiny)
        previous = current
        primal_limit = scale * opts.tolerance + opts.tolerance * max(float(numpy.linalg.norm(WC)), float(numpy.linalg.norm(Z)))
        dual_limit = scale * opts.tolerance + opts.tolerance * rho * float(numpy.linalg.norm(U))
        done = primal <= primal_limit and (dual <= dual_limit or change < opts.tolerance)

        if done or iteration % POLISH_EVERY == 0:
            key = numpy.sign(centered(W)).tobytes()
            exact = None
            if key not in tried:
                tried.add(key)
                exact = _pattern_solve(data, lam, W)
            if exact is not None:
                value = objective_value(Formulation.MEAN, data, exact, lam=lam)
                if value <= best + 1e-12 * max(1.0, abs(best)):
                    if value < best:
                        best, best_W = value, exact
                        history.append(best)
                    converged = True
                    break
        if done:
            converged = True
            break

        if iteration % BALANCE_EVERY == 0:
            if primal > BALANCE_RATIO * dual:
                rho *= BALANCE_FACTOR
                U = U / BALANCE_FACTOR
            elif dual > BALANCE_RATIO * primal:
                rho /= BALANCE_FACTOR
                U = U * BALANCE_FACTOR
            if rho != system.rho:
                logger.debug('ADMM iteration {}: rho -> {}', iteration, rho)
                system = _CoupledSystem(data, rho)

    logger.debug('ADMM stopped after {} iterations, objective {}, converged {}', iteration, best, converged)
    return best_W, iteration, converged, history


def solve_mean_regularized(data: MultiTaskDataset, lam: float, opts: SolverOptions = SolverOptions()) -> CoefficientMatrix:
    if lam < 0:
        raise ParameterError(f'lambda must be >= 0, got {lam}')
    if not data.tasks:
        raise ParameterError('cannot solve on an empty dataset')

    report = SolverReport(Formulation.MEAN, {'lambda': lam})
    if lam == 0 or data.num_tasks == 1:
        # the penalty vanishes, leaving independent least squares
        entries = least_squares(data)
        report.history = [objective_value(Formulation.MEAN, data, numpy.zeros_like(entries), lam=lam)]
    else:
        entries, report.iterations, report.converged, report.history = _admm(data, lam, opts)

    report.objective = objective_value(Formulation.MEAN, data, entries, lam=lam)
    if report.iterations == 0:
        report.history.append(report.objective)
    if not report.converged:
        logger.warning('mean solver did not converge in {} iterations', report.iterations)

    return CoefficientMatrix(entries, data.variety_ids, list(data.feature_names), report)
