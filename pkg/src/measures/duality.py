"""LP oracles on the joint finite support of two measures."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from src.measures.empirical import check_same_dim
from src.measures.transport import pairwise_distances, wasserstein_alpha

logger = logging.getLogger(__name__)


def joint_support(mu, nu):
    """Merged atoms z and the signed mass mu - nu carried by each."""
    check_same_dim(mu, nu)
    stacked = np.vstack([mu.points, nu.points])
    atoms, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    signed = np.zeros(len(atoms))
    np.add.at(signed, inverse[:mu.n], mu.weights)
    np.add.at(signed, inverse[mu.n:], -nu.weights)
    return atoms, signed


def dual_walpha_lp(mu, nu, m):
    """max sum_z (mu - nu)(z) f(z) s.t. f(z_i) - f(z_j) <= alpha(|z_i - z_j|)."""
    atoms, signed = joint_support(mu, nu)
    n = len(atoms)
    if n == 1:
        return 0.0
    cost = m(pairwise_distances(atoms, atoms))
    rows, cols = np.where(~np.eye(n, dtype=bool))
    constraints = np.zeros((len(rows), n))
    constraints[np.arange(len(rows)), rows] = 1.0
    constraints[np.arange(len(rows)), cols] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    result = linprog(-signed, A_ub=constraints, b_ub=cost[rows, cols], bounds=bounds, method='highs')
    if result.status != 0:
        raise RuntimeError(f"dual W_alpha LP failed: {result.message}")
    return float(-result.fun)


def weighted_variation_lp(mu, nu, k):
    atoms, signed = joint_support(mu, nu)
    envelope = 1.0 + np.linalg.norm(atoms, axis=1) ** k
    result = linprog(-signed, bounds=list(zip(-envelope, envelope)), method='highs')
    if result.status != 0:
        raise RuntimeError(f"W_k,var LP failed: {result.message}")
    return float(-result.fun)


@dataclass
class DominationCheck:
    w_alpha: float
    w_kvar: float
    constant: float
    passed: bool


def domination_check(mu, nu, m, k, tol=1e-8):
    """W_alpha <= c W_{k,var} with c = sup over the support of alpha(|x|) / (1 + |x|^k)."""
    atoms, _ = joint_support(mu, nu)
    radii = np.linalg.norm(atoms, axis=1)
    constant = float(np.max(m(radii) / (1.0 + radii ** k)))
    w_alpha = wasserstein_alpha(mu, nu, m, method='exact')
    w_kvar = weighted_variation_lp(mu, nu, k)
    return DominationCheck(w_alpha, w_kvar, constant, w_alpha <= constant * w_kvar + tol)
