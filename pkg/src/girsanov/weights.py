import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from src.errors import (
    ConfigInvalidError,
    FlowGridMismatchError,
    InvariantViolationError,
    MissingIncrementsError,
    TooFewSamplesError,
)
from src.simulation import PathBundle

logger = logging.getLogger(__name__)

MIN_WEIGHTS = 100
TAIL_FRACTION = 0.01
TAIL_SHARE = 0.5


@dataclass(eq=False)
class GirsanovWeights:
    """eta has shape (steps, N, m); log_R_path has shape (steps + 1, N) with log_R_path[0] = 0."""
    times: np.ndarray
    eta: np.ndarray
    log_R_path: np.ndarray

    @property
    def n_paths(self):
        return self.log_R_path.shape[1]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def R_terminal(self):
        return np.exp(self.log_R_path[-1])

    def R(self, j=-1):
        return np.exp(self.log_R_path[j])

    def energy(self, j=None):
        """Per-path int_0^{t_j} |eta|^2 ds."""
        j = len(self.times) - 1 if j is None else j
        return (self.eta[:j] ** 2).sum(axis=(0, 2)) * self.dt

    def entropy_bound(self, j=None):
        """1/2 E int |eta|^2 ds = E[-log R] with its standard error."""
        half = 0.5 * self.energy(j)
        return float(half.mean()), float(half.std(ddof=1) / np.sqrt(len(half)))

    def r_log_r(self, j=-1):
        values = self.R(j) * self.log_R_path[j]
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


def _as_flow(flow):
    return flow.flow() if isinstance(flow, PathBundle) else flow


def eta_between_flows(model, bundle, flow_a, flow_b):
    """eta_s = zeta(X_s) {b(X_s, flow_b(s)) - b(X_s, flow_a(s))} at every step and particle."""
    flow_a, flow_b = _as_flow(flow_a), _as_flow(flow_b)
    for flow in (flow_a, flow_b):
        if flow.times[0] > bundle.times[0] + 1e-9 or flow.times[-1] < bundle.times[-2] - 1e-9:
            raise FlowGridMismatchError("measure flow does not cover the bundle's time grid")
    eta = np.empty((bundle.n_steps, bundle.n_particles, model.dim_w))
    for j in range(bundle.n_steps):
        t, x = bundle.times[j], bundle.states[j]
        gap = model.mean_field_drift(t, x, flow_b.at(t)) - model.mean_field_drift(t, x, flow_a.at(t))
        eta[j] = np.einsum('nmd,nd->nm', model.zeta(t, x), gap)
    return eta


def bridge_eta(model, bundle, flow_a, flow_b, shift):
    """Drift difference of the bridge coupling Y_s = X_s - (1 - s/t) shift.

    ``bundle`` runs from x0 under ``flow_a``; ``shift`` is x0 - y0 per particle.
    Under R dP the process Y solves the SDE driven by ``flow_b`` from y0 and
    meets X at the bundle's end time, so ``weight_path`` on the result bounds
    the entropy between the two terminal laws.
    """
    if not model.sigma_constant:
        raise ConfigInvalidError('model', f"bridge coupling needs state-independent sigma; {model.name} is not")
    flow_a, flow_b = _as_flow(flow_a), _as_flow(flow_b)
    t_end = float(bundle.times[-1])
    shift = np.broadcast_to(np.asarray(shift, dtype=float), bundle.states[0].shape)
    eta = np.empty((bundle.n_steps, bundle.n_particles, model.dim_w))
    for j in range(bundle.n_steps):
        s, x = bundle.times[j], bundle.states[j]
        y = x - (1.0 - s / t_end) * shift
        b_y, _ = model.drift(s, y, flow_b.at(s))
        b_x, _ = model.drift(s, x, flow_a.at(s))
        eta[j] = np.einsum('nmd,nd->nm', model.zeta(s, x), b_y - b_x - shift / t_end)
    return eta


def weight_path(eta, bundle):
    if bundle.increments is None:
        raise MissingIncrementsError("Girsanov weights need the stored Brownian increments")
    eta = np.asarray(eta, dtype=float)
    if eta.shape != bundle.increments.shape:
        raise FlowGridMismatchError(f"eta shape {eta.shape} does not match increments {bundle.increments.shape}")
    steps = np.einsum('jnm,jnm->jn', eta, bundle.increments) - 0.5 * (eta ** 2).sum(axis=2) * bundle.dt
    log_R = np.zeros((bundle.n_steps + 1, bundle.n_particles))
    np.cumsum(steps, axis=0, out=log_R[1:])
    return GirsanovWeights(bundle.times, eta, log_R)


@dataclass
class SecondMoment:
    value: float
    stderr: float
    degenerate: bool = False
    tail_dominated: bool = False
    tail_share: float = 0.0


def _log_values(weights, j):
    if isinstance(weights, GirsanovWeights):
        return weights.log_R_path[j]
    if isinstance(weights, (list, tuple)) and weights and isinstance(weights[0], GirsanovWeights):
        return np.concatenate([w.log_R_path[j] for w in weights])
    return np.log(np.asarray(weights, dtype=float))


def second_moment_log(weights, j=-1):
    """log E[R^2] through logsumexp, with a delta-method standard error.

    Accepts GirsanovWeights, a list of them, or raw positive R values.
    """
    log_r = _log_values(weights, j)
    n = len(log_r)
    if n < MIN_WEIGHTS:
        raise TooFewSamplesError(f"second moment needs >= {MIN_WEIGHTS} weights, got {n}")
    doubled = 2.0 * log_r
    value = float(logsumexp(doubled) - np.log(n))
    scaled = np.exp(doubled - doubled.max())
    stderr = float(scaled.std(ddof=1) / (scaled.mean() * np.sqrt(n)))
    result = SecondMoment(value, stderr)
    if np.all(log_r == log_r[0]):
        result.degenerate = True
        logger.warning("all %d Girsanov weights are identical; stderr is 0", n)
    top = max(1, int(np.ceil(TAIL_FRACTION * n)))
    result.tail_share = float(np.sort(scaled)[-top:].sum() / scaled.sum())
    if result.tail_share > TAIL_SHARE:
        result.tail_dominated = True
        logger.warning("top %d of %d paths carry %.0f%% of E[R^2]; the estimate is tail dominated",
                       top, n, 100 * result.tail_share)
    return result


@dataclass
class MartingaleCheck:
    times: np.ndarray
    means: np.ndarray
    stderr: np.ndarray
    passed: bool

    def records(self):
        return [{'t': float(t), 'mean_R': float(m), 'stderr': float(s)}
                for t, m, s in zip(self.times, self.means, self.stderr)]


def martingale_check(weights, indices=None, z=3.0):
    """E[R_t] = 1 within z standard errors at the given grid indices (default: every step)."""
    if indices is None:
        indices = np.arange(1, len(weights.times))
    indices = np.asarray(indices)
    R = np.exp(weights.log_R_path[indices])
    means = R.mean(axis=1)
    stderr = R.std(axis=1, ddof=1) / np.sqrt(weights.n_paths)
    passed = bool(np.all(np.abs(means - 1.0) <= z * stderr + 1e-12))
    if not passed:
        logger.warning("Girsanov weights fail the martingale check (worst mean %.4g)",
                       means[np.argmax(np.abs(means - 1.0))])
    return MartingaleCheck(weights.times[indices], means, stderr, passed)


@dataclass
class ExponentialBound:
    times: np.ndarray
    log_second_moment: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    passed: bool


def exponential_bound_check(weights, indices=None, slack=3.0, strict=True):
    """log E[R_t^2] <= sum_j sup_paths |eta_j|^2 dt, allowing ``slack`` standard errors.

    Raises InvariantViolationError on failure unless ``strict`` is False.
    """
    if indices is None:
        indices = np.arange(1, len(weights.times))
    indices = np.asarray(indices)
    sup_sq = (weights.eta ** 2).sum(axis=2).max(axis=1) * weights.dt
    bound = np.concatenate([[0.0], np.cumsum(sup_sq)])[indices]
    moments = [second_moment_log(weights, j) for j in indices]
    lhs = np.array([m.value for m in moments])
    stderr = np.array([m.stderr for m in moments])
    passed = bool(np.all(lhs <= bound + slack * stderr + 1e-12))
    result = ExponentialBound(weights.times[indices], lhs, stderr, bound, passed)
    if not passed:
        worst = int(np.argmax(lhs - bound - slack * stderr))
        message = (f"log E[R^2] = {lhs[worst]:.6g} exceeds sum sup |eta|^2 dt = {bound[worst]:.6g} "
                   f"at t = {result.times[worst]:g} (stderr {stderr[worst]:.3g})")
        if strict:
            raise InvariantViolationError(message)
        logger.warning(message)
    return result
