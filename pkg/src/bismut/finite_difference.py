"""Finite-difference oracle on the same noise stream."""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.bismut.functionals import as_direction
from src.errors import ConfigInvalidError
from src.measures import EmpiricalMeasure
from src.simulation import SimConfig, initial_points, simulate_mckean_vlasov

logger = logging.getLogger(__name__)

DEFAULT_EPS = (0.1, 0.05)


@dataclass
class FiniteDifferenceEstimate:
    t: float
    value: float
    richardson_value: float
    stderr: float
    eps_list: tuple
    central: list = field(default_factory=list)
    remainders: list = field(default_factory=list)

    def to_dict(self):
        return {'t': self.t, 'fd_value': self.value, 'fd_richardson': self.richardson_value,
                'fd_stderr': self.stderr, 'eps': list(self.eps_list), 'central': list(self.central),
                'remainders': list(self.remainders)}


def richardson(eps_1, d_1, eps_2, d_2):
    """Cancel the eps^2 term of two central differences."""
    return (eps_1 ** 2 * d_2 - eps_2 ** 2 * d_1) / (eps_1 ** 2 - eps_2 ** 2)


def _terminal_values(model, x0, f, cfg):
    bundle = simulate_mckean_vlasov(model, EmpiricalMeasure.uniform(x0), cfg)
    values = np.asarray(f(bundle.states[-1]), dtype=float)
    return values[:, 0] if values.ndim == 2 else values


def finite_difference_intrinsic(model, mu, f, phi, t, eps_list=DEFAULT_EPS, cfg=None, n_paths=None):
    """Central differences per eps, Richardson across the two smallest, per-path stderr.

    ``remainders`` lists |P_t f(mu_eps) - P_t f(mu) - eps D| / eps per eps,
    with D the Richardson value.
    """
    if cfg is None or not isinstance(cfg, SimConfig):
        raise ConfigInvalidError('sim', "finite differences need a simulation config")
    eps_list = tuple(sorted((float(e) for e in eps_list), reverse=True))
    if len(eps_list) < 2 or eps_list[-1] <= 0:
        raise ConfigInvalidError('estimator.eps_list', "need at least two positive eps values")
    phi = as_direction(phi)
    run_cfg = cfg.with_(t_end=t, store_increments=False, snapshot_times=())
    batches = max(1, int(np.ceil(n_paths / cfg.n_particles))) if n_paths else 1

    quotients = {eps: [] for eps in eps_list}
    base, shifted = [], {eps: [] for eps in eps_list}
    for b in range(batches):
        batch_cfg = run_cfg.with_(stream=cfg.stream + b)
        x0 = initial_points(mu, cfg.n_particles, cfg.seed, batch_cfg.stream)
        direction = phi(x0)
        base.append(_terminal_values(model, x0, f, batch_cfg))
        for eps in eps_list:
            plus = _terminal_values(model, x0 + eps * direction, f, batch_cfg)
            minus = _terminal_values(model, x0 - eps * direction, f, batch_cfg)
            quotients[eps].append((plus - minus) / (2.0 * eps))
            shifted[eps].append(plus)

    central = [float(np.concatenate(quotients[eps]).mean()) for eps in eps_list]
    smallest = np.concatenate(quotients[eps_list[-1]])
    value = central[-1]
    stderr = float(smallest.std(ddof=1) / np.sqrt(len(smallest)))
    extrapolated = float(richardson(eps_list[-2], central[-2], eps_list[-1], central[-1]))
    p_base = float(np.concatenate(base).mean())
    remainders = [abs(float(np.concatenate(shifted[eps]).mean()) - p_base - eps * extrapolated) / eps
                  for eps in eps_list]
    logger.info("finite-difference derivative at t=%g: %.6g (Richardson %.6g)", t, value, extrapolated)
    return FiniteDifferenceEstimate(float(t), value, extrapolated, stderr, eps_list, central, remainders)
