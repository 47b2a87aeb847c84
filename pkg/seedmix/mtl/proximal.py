"""
Accelerated proximal gradient for  loss + lam1 ||W G||_F^2 + lam2 ||W||_1,  the exact solve on a fixed sign pattern
that finishes it, and the direct solve used when the L1 term is off.
"""

import warnings
from typing import Optional, Tuple

import numpy
import scipy.linalg
from loguru import logger

from seedmix.mtl.model import SolverOptions
from seedmix.mtl.objective import loss_gradient, soft_threshold, squared_loss
from seedmix.tasks import MultiTaskDataset

POLISH_EVERY = 25
POLISH_ROUNDS = 3


def least_squares(data: MultiTaskDataset) -> numpy.ndarray:
    """
    Independent (minimum-norm) least squares per task.
    """
    entries = numpy.zeros((data.num_columns, data.num_tasks))
    for i, task in enumerate(data.tasks):
        entries[:, i] = scipy.linalg.lstsq(task.X, task.Y)[0]

    return entries


def _graph_gram(G: Optional[numpy.ndarray]) -> Optional[numpy.ndarray]:
    if G is None or G.shape[1] == 0:
        return None

    return G @ G.T


def normal_equations(data: MultiTaskDataset, lam1: float, G: Optional[numpy.ndarray]) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """
    H and r with  loss + lam1 ||W G||_F^2 = vec(W)' H vec(W) / 2 - r' vec(W) + const,  vec stacking the task columns:
    H = blockdiag(2 X_i^T X_i) + 2 lam1 (G G^T kron I),  r = 2 vec(X_i^T Y_i).
    """
    columns, tasks = data.num_columns, data.num_tasks
    gram = _graph_gram(G)
    H = numpy.zeros((columns * tasks, columns * tasks)) if gram is None or lam1 == 0 else 2.0 * lam1 * numpy.kron(gram, numpy.eye(columns))
    r = numpy.empty(columns * tasks)
    for i, task in enumerate(data.tasks):
        block = slice(i * columns, (i + 1) * columns)
        H[block, block] += 2.0 * task.X.T @ task.X
        r[block] = 2.0 * task.X.T @ task.Y

    return H, r


def _vec(entries: numpy.ndarray) -> numpy.ndarray:
    return entries.T.reshape(-1)


def _unvec(v: numpy.ndarray, data: MultiTaskDataset) -> numpy.ndarray:
    return v.reshape(data.num_tasks, data.num_columns).T


def quadratic_solve(data: MultiTaskDataset, lam1: float, G: Optional[numpy.ndarray]) -> numpy.ndarray:
    """
    Exact minimizer of loss + lam1 ||W G||_F^2 from its normal equations H vec(W) = r.
    """
    gram = _graph_gram(G)
    if gram is None or lam1 == 0:
        return least_squares(data)

    H, r = normal_equations(data, lam1, G)
    try:
        solution = scipy.linalg.solve(H, r, assume_a='pos')
    except (scipy.linalg.LinAlgError, ValueError):
        logger.debug('Graph normal equations are singular, using least squares')
        solution = scipy.linalg.lstsq(H, r)[0]

    return _unvec(solution, data)


def lipschitz_bound(data: MultiTaskDataset, lam1: float, G: Optional[numpy.ndarray]) -> float:
    bound = 2.0 * max(float(numpy.linalg.eigvalsh(task.X.T @ task.X)[-1]) for task in data.tasks)
    gram = _graph_gram(G)
    if gram is not None:
        bound += 2.0 * lam1 * float(numpy.linalg.eigvalsh(gram)[-1])

    return bound


def support_solve(H: numpy.ndarray, r: numpy.ndarray, lam2: float, start: numpy.ndarray) -> Optional[numpy.ndarray]:
    """
    Minimizer of  v' H v / 2 - r' v + lam2 ||v||_1  with the nonzero pattern of ``start``, or None when no sign
    pattern reached from it satisfies the optimality conditions.  Signs that flip in the solve are taken over for a
    few rounds.
    """
    support = numpy.flatnonzero(start)
    signs = numpy.sign(start[support])
    v = numpy.zeros_like(r)
    consistent = False
    for _ in range(POLISH_ROUNDS):
        v = numpy.zeros_like(r)
        if support.size:
            block = H[numpy.ix_(support, support)]
            rhs = r[support] - lam2 * signs
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
                    solution = scipy.linalg.solve(block, rhs, assume_a='pos')
            except (scipy.linalg.LinAlgError, ValueError):
                return None
            if not numpy.all(numpy.isfinite(solution)):
                return None
            scale = max(1.0, float(numpy.abs(rhs).max()), float(numpy.abs(block @ solution).max()))
            if float(numpy.abs(block @ solution - rhs).max()) > 1e-9 * scale:
                return None
            v[support] = solution

        found = numpy.sign(v[support])
        if numpy.array_equal(found, signs):
            consistent = True
            break
        keep = found != 0
        support, signs = support[keep], found[keep]

    if not consistent:
        return None

    outside = numpy.setdiff1d(numpy.arange(r.size), support)
    if outside.size:
        gradient = H @ v - r
        scale = max(1.0, float(numpy.abs(r).max()))
        if float(numpy.abs(gradient[outside]).max()) > lam2 + 1e-9 * scale:
            return None

    return v


def accelerated_proximal_gradient(data: MultiTaskDataset, lam1: float, G: Optional[numpy.ndarray], lam2: float, opts: SolverOptions) -> Tuple[numpy.ndarray, int, bool, list]:
    """
    FISTA with backtracking and function-value restart.  An iterate is only accepted when it does not increase the
    objective, so the recorded history is non-increasing and the returned W is the best one seen.

    Converged means either the proximal gradient residual  ||y - prox(y - step grad f(y))|| / step  fell below
    ``opts.tolerance * max(1, ||W||)``, or an exact solve on the current sign pattern passed the optimality
    conditions.  That exact solve is tried every POLISH_EVERY iterations while the pattern keeps changing.

    Returns (W, iterations, converged, history).
    """
    gram = _graph_gram(G)
    H, r = normal_equations(data, lam1, G)

    def smooth(entries: numpy.ndarray) -> float:
        value = squared_loss(data, entries)
        if gram is not None and lam1:
            WG = entries @ G
            value += lam1 * float((WG * WG).sum())
        return value

    def gradient(entries: numpy.ndarray) -> numpy.ndarray:
        value = loss_gradient(data, entries)
        if gram is not None and lam1:
            value += 2.0 * lam1 * entries @ gram
        return value

    def total(entries: numpy.ndarray) -> float:
        return smooth(entries) + lam2 * float(numpy.abs(entries).sum())

    tried = set()

    def polish(entries: numpy.ndarray) -> Optional[numpy.ndarray]:
        pattern = numpy.sign(entries).tobytes()
        if pattern in tried:
            return None
        tried.add(pattern)
        exact = support_solve(H, r, lam2, _vec(entries))
        return None if exact is None else _unvec(exact, data)

    bound = lipschitz_bound(data, lam1, G)
    step = 1.0 / bound if bound > 0 else 1.0

    x = numpy.zeros((data.num_columns, data.num_tasks))
    F_x = total(x)
    history = [F_x]
    y, t = x, 1.0
    restarted = True
    converged = False
    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        f_y = smooth(y)
        g = gradient(y)
        while True:
            z = soft_threshold(y - step * g, lam2 * step)
            diff = z - y
            f_z = smooth(z)
            if f_z <= f_y + float((g * diff).sum()) + float((diff * diff).sum()) / (2.0 * step) + 1e-12 * max(1.0, abs(f_y)):
                break
            step *= opts.backtracking

        residual = float(numpy.linalg.norm(diff)) / step
        F_z = f_z + lam2 * float(numpy.abs(z).sum())
        stalled = False
        if F_z <= F_x:
            t_next = (1.0 + numpy.sqrt(1.0 + 4.0 * t * t)) / 2.0
            y = z + ((t - 1.0) / t_next) * (z - x)
            x, F_x, t = z, F_z, t_next
            restarted = False
            history.append(F_x)
        elif restarted:
            # a plain proximal step from the best iterate no longer decreases the objective
            stalled = True
        else:
            y, t = x, 1.0
            restarted = True

        small = residual <= opts.tolerance * max(1.0, float(numpy.linalg.norm(z)))
        if small or stalled or iteration % POLISH_EVERY == 0:
            exact = polish(x)
            if exact is not None:
                F_exact = total(exact)
                if F_exact <= F_x + 1e-12 * max(1.0, abs(F_x)):
                    if F_exact < F_x:
                        x, F_x = exact, F_exact
                        history.append(F_x)
                    converged = True
                    break
        if small:
            converged = True
            break
        if stalled:
            logger.debug('Proximal gradient stalled at iteration {} with residual {}', iteration, residual)
            break

    logger.debug('Proximal gradient stopped after {} iterations, objective {}, converged {}', iteration, F_x, converged)
    return x, iteration, converged, history
