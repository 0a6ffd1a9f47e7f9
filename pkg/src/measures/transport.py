import logging
from dataclasses import dataclass

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.errors import DimensionMismatchError, SizeExceededError
from src.measures.empirical import check_same_dim

logger = logging.getLogger(__name__)

METHODS = ('auto', 'quantile1d', 'exact', 'entropic')

EXACT_MAX_SIZE = 10 ** 6
AUTO_EXACT_MAX_SIZE = 250_000
DEFAULT_REG = 0.01
SINKHORN_TOL = 1e-7
SINKHORN_MAX_ITER = 10_000


@dataclass
class TransportPlan:
    coupling: np.ndarray
    row_residual: float
    col_residual: float
    method: str
    converged: bool = True

    def to_dict(self):
        return {
            'method': self.method,
            'row_residual': self.row_residual,
            'col_residual': self.col_residual,
            'converged': self.converged,
        }


def _plan(coupling, a, b, method, converged=True):
    return TransportPlan(
        coupling=coupling,
        row_residual=float(np.abs(coupling.sum(axis=1) - a).max()),
        col_residual=float(np.abs(coupling.sum(axis=0) - b).max()),
        method=method,
        converged=converged,
    )


def pairwise_distances(x, y):
    return cdist(x, y)


def _resolve_method(method, mu, nu, allow_quantile=True):
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown transport method {method!r}")
    if method != 'auto':
        return method
    if allow_quantile and mu.dim == 1:
        return 'quantile1d'
    if mu.n * nu.n <= AUTO_EXACT_MAX_SIZE:
        return 'exact'
    return 'entropic'


def quantile_plan(mu, nu, k):
    """Comonotone coupling of two measures on the line."""
    if mu.dim != 1:
        raise DimensionMismatchError("quantile coupling needs d = 1")
    x, y = mu.points[:, 0], nu.points[:, 0]
    order_x, order_y = np.argsort(x, kind='stable'), np.argsort(y, kind='stable')
    cum_a = np.cumsum(mu.weights[order_x])
    cum_b = np.cumsum(nu.weights[order_y])
    cum_a[-1] = cum_b[-1] = 1.0
    breaks = np.union1d(cum_a, cum_b)
    breaks = breaks[breaks > 0.0]
    lower = np.concatenate([[0.0], breaks[:-1]])
    mass = breaks - lower
    keep = mass > 0
    mid = 0.5 * (lower + breaks)[keep]
    i = order_x[np.minimum(np.searchsorted(cum_a, mid), mu.n - 1)]
    j = order_y[np.minimum(np.searchsorted(cum_b, mid), nu.n - 1)]
    coupling = np.zeros((mu.n, nu.n))
    np.add.at(coupling, (i, j), mass[keep])
    cost = float(mass[keep] @ np.abs(x[i] - y[j]) ** k)
    return cost, _plan(coupling, mu.weights, nu.weights, 'quantile1d')


def exact_plan(a, b, cost_matrix):
    n, m = cost_matrix.shape
    if n * m > EXACT_MAX_SIZE:
        raise SizeExceededError(f"exact transport limited to n*m <= {EXACT_MAX_SIZE}, got {n * m}")
    coupling, log = ot.emd(a, b, cost_matrix, numItermax=10_000_000, log=True)
    if log['result_code'] != 1:
        uniform = n == m and np.all(a == a[0]) and np.all(b == b[0])
        if not uniform:
            logger.warning("network simplex returned code %s: %s", log['result_code'], log['warning'])
        else:
            logger.warning("network simplex failed (%s), using assignment", log['warning'])
            rows, cols = linear_sum_assignment(cost_matrix)
            coupling = np.zeros_like(cost_matrix)
            coupling[rows, cols] = 1.0 / n
            return float((coupling * cost_matrix).sum()), _plan(coupling, a, b, 'assignment')
    return float((coupling * cost_matrix).sum()), _plan(coupling, a, b, 'exact')


def entropic_plan(a, b, cost_matrix, reg=DEFAULT_REG):
    """Log-domain Sinkhorn with reg relative to the largest cost."""
    scale = float(cost_matrix.max())
    if scale == 0.0:
        coupling = np.outer(a, b)
        return 0.0, _plan(coupling, a, b, 'entropic')
    coupling = ot.sinkhorn(a, b, cost_matrix / scale, reg, method='sinkhorn_log',
                           numItermax=SINKHORN_MAX_ITER, stopThr=SINKHORN_TOL)
    plan = _plan(coupling, a, b, 'entropic')
    plan.converged = max(plan.row_residual, plan.col_residual) <= SINKHORN_TOL
    if not plan.converged:
        logger.warning("sinkhorn did not converge (reg=%g, residual %.2e); returning last iterate",
                       reg, max(plan.row_residual, plan.col_residual))
    return float((coupling * cost_matrix).sum()), plan


def transport_cost(mu, nu, cost_matrix, method, reg=None):
    if method == 'exact':
        return exact_plan(mu.weights, nu.weights, cost_matrix)
    if method == 'entropic':
        return entropic_plan(mu.weights, nu.weights, cost_matrix, DEFAULT_REG if reg is None else reg)
    raise ValueError(f"method {method!r} does not take a cost matrix")


def wasserstein_k(mu, nu, k=2.0, method='auto', reg=None):
    check_same_dim(mu, nu)
    if k < 1:
        raise ValueError("k must be >= 1")
    method = _resolve_method(method, mu, nu)
    if method == 'quantile1d':
        cost, plan = quantile_plan(mu, nu, k)
    else:
        cost_matrix = pairwise_distances(mu.points, nu.points) ** k
        cost, plan = transport_cost(mu, nu, cost_matrix, method, reg)
    logger.debug("W_%g via %s: cost %.6g", k, plan.method, cost)
    return float(max(cost, 0.0) ** (1.0 / k)), plan


def wasserstein_alpha_plan(mu, nu, m, method='auto', reg=None):
    check_same_dim(mu, nu)
    # the comonotone coupling is not optimal for concave costs, so 1D uses LP too
    method = _resolve_method(method, mu, nu, allow_quantile=False)
    if method == 'quantile1d':
        raise ValueError("quantile coupling is not optimal for a concave ground cost")
    cost_matrix = m(pairwise_distances(mu.points, nu.points))
    cost, plan = transport_cost(mu, nu, cost_matrix, method, reg)
    return float(max(cost, 0.0)), plan


def wasserstein_alpha(mu, nu, m, method='auto', reg=None):
    return wasserstein_alpha_plan(mu, nu, m, method, reg)[0]
