import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from src.errors import QuadratureOverflowError

logger = logging.getLogger(__name__)


@dataclass
class LocalizedNorm:
    p: float
    q: float
    T: float
    centers: np.ndarray
    estimated_norm: float
    argmax_center: np.ndarray
    in_K: bool


def scr_K_check(p, q, d):
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    return bool(p > 2 and q > 2 and d / p + 2.0 / q < 1.0)


def _ball_integral_1d(f, t, center, p, singular_points):
    lo, hi = center - 1.0, center + 1.0
    breaks = [s for s in singular_points if lo < s < hi]
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(lambda x: abs(float(f(t, np.array([[x]]))[0])) ** p,
                                        lo, hi, points=breaks or None, limit=200)
        except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError) as exc:
            raise QuadratureOverflowError(f"inner integral over B({center:g}, 1) not resolvable: {exc}") from exc
    if not np.isfinite(value) or err > 1e-6 * max(1.0, abs(value)):
        raise QuadratureOverflowError(f"inner integral over B({center:g}, 1) did not converge")
    return value


def _ball_integral_nd(f, t, center, p, nodes):
    d = len(center)
    x, w = np.polynomial.legendre.leggauss(nodes)
    grids = np.meshgrid(*([x] * d), indexing='ij')
    pts = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.meshgrid(*([w] * d), indexing='ij'), axis=0).ravel()
    inside = np.linalg.norm(pts, axis=1) <= 1.0
    values = np.abs(np.asarray(f(t, center + pts[inside]), dtype=float)) ** p
    if not np.all(np.isfinite(values)):
        raise QuadratureOverflowError("integrand is not finite on the quadrature lattice")
    return float(values @ weights[inside])


def localized_Lpq_norm(f, p, q, T, lattice):
    """sup over lattice centers y of (int_0^T (int_{B(y,1)} |f|^p dx)^{q/p} dt)^{1/q}.

    The sup runs over finitely many centers, so the result is a lower bound
    of the localized norm. ``lattice`` holds ``centers`` (L x d), and
    optionally ``time_nodes``, ``space_nodes`` and ``singular_points`` (1D).
    """
    centers = np.asarray(lattice['centers'], dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    d = centers.shape[1]
    t_nodes, t_weights = np.polynomial.legendre.leggauss(lattice.get('time_nodes', 16))
    times = 0.5 * T * (t_nodes + 1.0)
    t_weights = 0.5 * T * t_weights
    singular = lattice.get('singular_points', [])

    norms = []
    for center in centers:
        inner = np.array([
            _ball_integral_1d(f, t, center[0], p, singular) if d == 1
            else _ball_integral_nd(f, t, center, p, lattice.get('space_nodes', 24))
            for t in times
        ])
        norms.append(float((t_weights @ inner ** (q / p)) ** (1.0 / q)))
    norms = np.array(norms)
    best = int(np.argmax(norms))
    logger.debug("localized L^%g_%g norm over %d centers: %g", p, q, len(centers), norms[best])
    return LocalizedNorm(p, q, T, centers, float(norms[best]), centers[best], scr_K_check(p, q, d))


def unit_ball_volume(d):
    return np.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)
