import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import MissingIncrementsError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class JacobianFlow:
    times: np.ndarray
    values: np.ndarray

    def sup_moment(self, k):
        """Per-path sup_t |J_t|^k."""
        return (np.linalg.norm(self.values, axis=2) ** k).max(axis=0)


@dataclass(eq=False)
class MeanFieldDerivativeFlow:
    """values[j, i] approximates the derivative of X^i at t_j along phi.

    ``summary`` holds mean_k grad V(X^k)[D^k] per step for structured drifts,
    ``cross`` the leave-one-out Lions averages used by the Bismut correction.
    """
    times: np.ndarray
    values: np.ndarray
    summary: Optional[np.ndarray] = None
    cross: Optional[np.ndarray] = None

    def sup_moment(self, k):
        return (np.linalg.norm(self.values, axis=2) ** k).max(axis=0)


def _step_noise(model, t, x, direction, dW):
    if model.sigma_constant:
        return 0.0
    return np.einsum('ndm,nm->nd', model.grad_diffusion(t, x, direction), dW)


def jacobian_flow(model, bundle, v, flow=None):
    """Variational equation along the stored path, the measure argument frozen.

    The measure at each step is ``flow.at(t)`` or, by default, the bundle's own
    cloud. ``v`` is one vector or one vector per particle.
    """
    model.require_derivatives()
    if bundle.increments is None:
        raise MissingIncrementsError("the Jacobian flow needs the stored Brownian increments")
    n, d, dt = bundle.n_particles, bundle.dim, bundle.dt
    J = np.empty((bundle.n_steps + 1, n, d))
    J[0] = np.broadcast_to(np.asarray(v, dtype=float), (n, d))
    for j in range(bundle.n_steps):
        t, x = bundle.times[j], bundle.states[j]
        mu = bundle.measure(j) if flow is None else flow.at(t)
        z = model.summary(mu)
        J[j + 1] = J[j] + model.grad_drift(t, x, mu, z, J[j]) * dt + _step_noise(model, t, x, J[j], bundle.increments[j])
    return JacobianFlow(bundle.times, J)


def mean_field_derivative_flow(model, bundle, phi):
    """Linearization of the interacting particle system in the direction phi(X_0)."""
    model.require_derivatives(mean_field=True)
    if bundle.increments is None:
        raise MissingIncrementsError("the derivative flow needs the stored Brownian increments")
    n, d, dt = bundle.n_particles, bundle.dim, bundle.dt
    D = np.empty((bundle.n_steps + 1, n, d))
    D[0] = phi(bundle.states[0])
    structured, lions = model.structured and model.coupled, model.has_lions and model.coupled
    summary = np.empty((bundle.n_steps + 1, model.mean_field.dim_z)) if model.structured else None
    cross = np.empty((bundle.n_steps, n, d)) if lions else None
    weights = np.full(n, 1.0 / n)

    for j in range(bundle.n_steps + 1):
        t, x = bundle.times[j], bundle.states[j]
        if summary is not None:
            summary[j] = model.grad_V(x, D[j]).mean(axis=0)
        if j == bundle.n_steps:
            break
        mu = bundle.measure(j)
        z = model.summary(mu)
        drift = model.grad_drift(t, x, mu, z, D[j])
        if structured:
            drift = drift + model.grad_z(t, x, mu, z, summary[j])
        if lions:
            full = model.lions_contract(t, x, mu, z, x, D[j], weights)
            drift = drift + full
            if n > 1:
                own = model.lions_diagonal(t, x, mu, z, D[j])
                cross[j] = (n * full - own) / (n - 1.0)
            else:
                cross[j] = 0.0
        D[j + 1] = D[j] + drift * dt + _step_noise(model, t, x, D[j], bundle.increments[j])
    logger.debug("mean-field derivative flow: %d steps, sup |D_T| = %.4g", bundle.n_steps,
                 float(np.abs(D[-1]).max()))
    return MeanFieldDerivativeFlow(bundle.times, D, summary, cross)


@dataclass
class DerivativeAudit:
    scale: float
    ratio: float
    stderr: float


def jacobian_moment_audit(model, bundle, scales=(0.1, 1.0, 10.0), k=None):
    """E sup_t |grad_v X_t|^k / |v|^k for v along the first axis at each scale."""
    k = model.constants.k if k is None else k
    out = []
    for scale in scales:
        v = np.zeros(bundle.dim)
        v[0] = scale
        sup = jacobian_flow(model, bundle, v).sup_moment(k) / scale ** k
        out.append(DerivativeAudit(float(scale), float(sup.mean()), float(sup.std(ddof=1) / np.sqrt(len(sup)))))
    return out


def derivative_flow_audit(model, bundle, phi, k=None):
    """E sup_t |D_t|^k / ||phi||^k_{L^k(mu)} for the mean-field derivative flow."""
    k = model.constants.k if k is None else k
    norm = float(np.mean(np.linalg.norm(phi(bundle.states[0]), axis=1) ** k))
    if norm == 0.0:
        return DerivativeAudit(0.0, 0.0, 0.0)
    sup = mean_field_derivative_flow(model, bundle, phi).sup_moment(k) / norm
    return DerivativeAudit(norm ** (1.0 / k), float(sup.mean()), float(sup.std(ddof=1) / np.sqrt(len(sup))))


def zeta_increments(model, bundle, directions):
    """Per-step <zeta(X_j) directions_j, dW_j>, shape (steps, N)."""
    out = np.empty((bundle.n_steps, bundle.n_particles))
    for j in range(bundle.n_steps):
        t, x = bundle.times[j], bundle.states[j]
        out[j] = np.einsum('nmd,nd,nm->n', model.zeta(t, x), directions[j], bundle.increments[j])
    return out


def bismut_increments(model, bundle, phi):
    """Increments of int <zeta grad_{phi(x)} X_s, dW_s> along the frozen-flow Jacobian."""
    J = jacobian_flow(model, bundle, phi(bundle.states[0]))
    return zeta_increments(model, bundle, J.values)
