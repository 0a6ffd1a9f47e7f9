import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from src.errors import DimensionMismatchError, NonFiniteError, SingularCovarianceError, TooFewSamplesError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 50
DEFAULT_KNN = 4


@dataclass
class EntropyEstimate:
    value: float
    stderr: float
    estimator: str


def _as_samples(samples):
    samples = np.asarray(samples, dtype=float)
    return samples[:, None] if samples.ndim == 1 else samples


@dataclass
class KnnReplicates:
    """Per-sample log ratios and the delete-one estimates over p and over q."""
    terms: np.ndarray
    leave_p: np.ndarray
    leave_q: np.ndarray


def _knn_replicates(p, q, k_nn):
    n, m, d = len(p), len(q), p.shape[1]
    rho_dist, rho_idx = cKDTree(p).query(p, k=k_nn + 2)
    nu_dist, nu_idx = cKDTree(q).query(p, k=k_nn + 1)
    rho, nu = rho_dist[:, k_nn], nu_dist[:, k_nn - 1]
    if np.any(rho == 0.0) or np.any(nu == 0.0):
        raise NonFiniteError("repeated sample points make the nearest-neighbour ratio degenerate")
    terms = d * np.log(nu / rho)
    total = terms.sum()

    # dropping p_i pushes rho_l to the next neighbour wherever i is among l's k nearest
    shift_p = np.zeros(n)
    np.add.at(shift_p, rho_idx[:, 1:k_nn + 1].ravel(),
              np.repeat(d * np.log(rho / rho_dist[:, k_nn + 1]), k_nn))
    leave_p = (total - terms + shift_p) / (n - 1.0) + np.log(m / (n - 2.0))

    shift_q = np.zeros(m)
    np.add.at(shift_q, nu_idx[:, :k_nn].ravel(), np.repeat(d * np.log(nu_dist[:, k_nn] / nu), k_nn))
    leave_q = (total + shift_q) / n + np.log((m - 1.0) / (n - 1.0))
    return KnnReplicates(terms, leave_p, leave_q)


def _jackknife_variance(replicates):
    n = len(replicates)
    return (n - 1.0) / n * np.sum((replicates - replicates.mean()) ** 2)


def knn_divergence(samples_p, samples_q, k_nn=DEFAULT_KNN):
    """k-NN estimate of Ent(p | q) with a delete-one jackknife standard error over both sample sets."""
    p, q = _as_samples(samples_p), _as_samples(samples_q)
    if p.shape[1] != q.shape[1]:
        raise DimensionMismatchError("sample sets of different dimension")
    n, m = len(p), len(q)
    if min(n, m) < max(MIN_SAMPLES, k_nn + 2):
        raise TooFewSamplesError(f"KNN divergence needs >= {max(MIN_SAMPLES, k_nn + 2)} samples per side, "
                                 f"got {n} and {m}")
    rep = _knn_replicates(p, q, k_nn)
    value = float(rep.terms.mean() + np.log(m / (n - 1.0)))
    stderr = float(np.sqrt(_jackknife_variance(rep.leave_p) + _jackknife_variance(rep.leave_q)))
    return EntropyEstimate(value, stderr, 'knn')


def gaussian_kl(mean_p, cov_p, mean_q, cov_q):
    mean_p, mean_q = np.atleast_1d(mean_p).astype(float), np.atleast_1d(mean_q).astype(float)
    cov_p, cov_q = np.atleast_2d(cov_p).astype(float), np.atleast_2d(cov_q).astype(float)
    d = len(mean_p)
    try:
        chol_p = linalg.cho_factor(cov_p)
        chol_q = linalg.cho_factor(cov_q)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(str(exc)) from exc
    shift = mean_q - mean_p
    trace = np.trace(linalg.cho_solve(chol_q, cov_p))
    mahalanobis = shift @ linalg.cho_solve(chol_q, shift)
    logdet_q = 2.0 * np.sum(np.log(np.diag(chol_q[0])))
    logdet_p = 2.0 * np.sum(np.log(np.diag(chol_p[0])))
    return float(0.5 * (trace + mahalanobis - d + logdet_q - logdet_p))


def relative_entropy(samples_p, samples_q, estimator='knn', k_nn=DEFAULT_KNN, params=None):
    if estimator == 'knn':
        return knn_divergence(samples_p, samples_q, k_nn)
    if estimator == 'gaussian':
        if params is None:
            raise ValueError("gaussian estimator needs mean/cov parameters")
        value = gaussian_kl(params['mean_p'], params['cov_p'], params['mean_q'], params['cov_q'])
        return EntropyEstimate(value, 0.0, 'gaussian')
    raise ValueError(f"unknown entropy estimator {estimator!r}")
