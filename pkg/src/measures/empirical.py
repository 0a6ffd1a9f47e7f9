import logging
from dataclasses import dataclass

import numpy as np

from src.errors import DimensionMismatchError, LengthMismatchError, NonFiniteError

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float)
        if points.ndim != 2 or len(points) == 0:
            raise LengthMismatchError("a measure needs at least one point given as an n x d array")
        if weights.shape != (len(points),):
            raise LengthMismatchError(f"{len(points)} points but weights of shape {weights.shape}")
        if not np.all(np.isfinite(points)):
            raise NonFiniteError("measure support has non-finite coordinates")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        n = len(points)
        return cls(points, np.full(n, 1.0 / n) if n else np.zeros(0))

    @classmethod
    def dirac(cls, x):
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :], np.ones(1))

    @property
    def n(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def integrate(self, f):
        values = np.asarray(f(self.points), dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def mean(self):
        return self.weights @ self.points

    def push_forward(self, phi, eps=1.0):
        """Law of id + eps*phi under this measure."""
        return EmpiricalMeasure(self.points + eps * np.asarray(phi(self.points), dtype=float),
                                self.weights)


def moment_norm(mu, k):
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    radii = np.linalg.norm(mu.points, axis=1)
    scale = radii.max()
    if scale == 0.0:
        return 0.0
    # rescale before the power so large clouds do not overflow
    return float(scale * (mu.weights @ (radii / scale) ** k) ** (1.0 / k))


def check_same_dim(mu, nu):
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"measures live in R^{mu.dim} and R^{nu.dim}")


def read_points_csv(path, weighted=None):
    """One row per particle, d columns and an optional trailing weight column.

    A header line ending in ``weight`` marks the weight column; without a
    header the caller decides through ``weighted``.
    """
    with open(path) as handle:
        first = handle.readline().strip()
    has_header = bool(first) and not _is_numeric_row(first)
    if has_header and weighted is None:
        weighted = first.split(',')[-1].strip() == 'weight'
    data = np.loadtxt(path, delimiter=',', skiprows=1 if has_header else 0, ndmin=2)
    if weighted:
        weights = data[:, -1]
        return EmpiricalMeasure(data[:, :-1], weights / weights.sum())
    return EmpiricalMeasure.uniform(data)


def write_points_csv(path, mu, with_weights=True):
    names = [f"x{i}" for i in range(mu.dim)]
    data = mu.points
    if with_weights:
        names.append('weight')
        data = np.column_stack([mu.points, mu.weights])
    np.savetxt(path, data, delimiter=',', header=','.join(names), comments='', fmt='%.17g')
    logger.debug("wrote %d points to %s", mu.n, path)


def _is_numeric_row(line):
    try:
        [float(v) for v in line.split(',')]
    except ValueError:
        return False
    return True
