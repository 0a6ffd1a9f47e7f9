"""D(t) = D^I_phi P_t V(mu) by Picard iteration on a geometric grid, in the
rescaled variable v(t) = w(t) D(t).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.bismut.functionals import as_direction
from src.bismut.jacobian import bismut_increments, mean_field_derivative_flow, zeta_increments
from src.bismut.paths import simulate_batches
from src.errors import ConfigInvalidError, NoConvergenceError
from src.measures import EmpiricalMeasure, moment_norm
from src.moduli import tilde_alpha

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 16
DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-6


@dataclass(eq=False)
class PicardResult:
    times: np.ndarray
    D: np.ndarray
    v: np.ndarray
    weight: np.ndarray
    D0: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    shape_ratio: np.ndarray = None

    @property
    def contraction_ratios(self):
        return [row['ratio'] for row in self.trace if row['ratio'] is not None]

    def on_grid(self, dt, n_steps):
        """D at t_j = j dt for j < n_steps, linear between nodes."""
        return interpolate_nodes(self.times, self.D, self.D0, dt * np.arange(n_steps))

    def records(self):
        return [{'t': float(t), 'D': self.D[i].tolist(), 'v': self.v[i].tolist(),
                 'shape_ratio': float(self.shape_ratio[i])} for i, t in enumerate(self.times)]


def interpolate_nodes(node_times, node_values, value_at_zero, times):
    xs = np.concatenate([[0.0], node_times])
    ys = np.vstack([np.atleast_1d(value_at_zero)[None, :], node_values])
    return np.column_stack([np.interp(times, xs, ys[:, b]) for b in range(ys.shape[1])])


def grid_indices(t_grid, dt, n_steps):
    """Geometric node indices when ``t_grid`` is a count, snapped indices otherwise."""
    if np.ndim(t_grid) == 0:
        raw = np.geomspace(1.0, n_steps, int(t_grid))
    else:
        raw = np.asarray(t_grid, dtype=float) / dt
    idx = np.unique(np.clip(np.round(raw).astype(int), 1, n_steps))
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def rescaling_weight(model, mu_points, times):
    constants = model.constants
    c = 1.0 + constants.kappa * moment_norm(EmpiricalMeasure.uniform(mu_points), constants.k)
    r = c * np.sqrt(times)
    alpha = np.asarray(constants.modulus(r), dtype=float)
    return np.sqrt(times * tilde_alpha(constants.modulus, r)) / alpha, alpha


@dataclass(eq=False)
class PicardInputs:
    """Monte Carlo pieces of the Volterra equation for one path batch."""
    free: np.ndarray
    kernel: np.ndarray
    D0: np.ndarray

    @staticmethod
    def merge(parts):
        return PicardInputs(np.mean([p.free for p in parts], axis=0),
                            np.mean([p.kernel for p in parts], axis=0),
                            np.mean([p.D0 for p in parts], axis=0))


def picard_inputs(model, bundle, phi, idx, weight_increments, cross_increments=None):
    """free[k] = I^V + Ntilde part at node k, kernel[k, j] the (m_B x m_B) response to D(t_j).

    ``weight_increments`` are the per-step <zeta J, dW> of the frozen-flow
    weight, ``cross_increments`` the per-step <zeta Ntilde, dW>.
    """
    n, steps = bundle.n_particles, bundle.n_steps
    dim_z = model.mean_field.dim_z
    V_nodes = np.stack([model.mean_field.V(bundle.states[j]) for j in idx])
    cum = np.vstack([np.zeros((1, n)), np.cumsum(weight_increments, axis=0)])
    free = np.einsum('kib,ki->kb', V_nodes, cum[idx]) / n / bundle.times[idx][:, None]
    if cross_increments is not None:
        cum_cross = np.vstack([np.zeros((1, n)), np.cumsum(cross_increments, axis=0)])
        free = free + np.einsum('kib,ki->kb', V_nodes, cum_cross[idx]) / n

    response = np.empty((steps, n, dim_z))
    eye = np.eye(dim_z)
    for j in range(steps):
        t, x = bundle.times[j], bundle.states[j]
        mu = bundle.measure(j)
        z = model.summary(mu)
        zeta = model.zeta(t, x)
        for b in range(dim_z):
            grad = model.grad_z(t, x, mu, z, eye[b])
            response[j, :, b] = np.einsum('nmd,nd,nm->n', zeta, grad, bundle.increments[j])
    lhs = V_nodes.transpose(0, 2, 1).reshape(len(idx) * dim_z, n)
    rhs = response.transpose(1, 0, 2).reshape(n, steps * dim_z)
    kernel = (lhs @ rhs / n).reshape(len(idx), dim_z, steps, dim_z).transpose(0, 2, 1, 3)
    kernel[np.arange(steps)[None, :] >= idx[:, None]] = 0.0
    D0 = model.grad_V(bundle.states[0], phi(bundle.states[0])).mean(axis=0)
    return PicardInputs(free, kernel, D0)


def solve_picard(model, inputs, idx, dt, mu_points, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL):
    times = idx * dt
    weight, alpha = rescaling_weight(model, mu_points, times)
    steps = inputs.kernel.shape[1]
    fine = dt * np.arange(steps)

    def apply(D):
        path = interpolate_nodes(times, D, inputs.D0, fine)
        return inputs.free + np.einsum('kjbl,jl->kb', inputs.kernel, path)

    D = inputs.free.copy()
    v = weight[:, None] * D
    trace, previous, converged, iterations = [], None, False, 0
    for iterations in range(1, max_iter + 1):
        D_next = apply(D)
        v_next = weight[:, None] * D_next
        diff = float(np.abs(v_next - v).max())
        ratio = diff / previous if previous else None
        trace.append({'iteration': iterations, 'sup_diff': diff, 'ratio': ratio})
        logger.debug("picard iteration %d: sup |dv| = %.3e", iterations, diff)
        D, v, previous = D_next, v_next, diff
        if diff <= tol:
            converged = True
            break
    shape_ratio = np.sqrt(times) * np.linalg.norm(D, axis=1) / alpha
    result = PicardResult(times, D, v, weight, inputs.D0, iterations, converged, trace, shape_ratio)
    if not converged:
        raise NoConvergenceError(f"Picard iteration did not reach tol {tol:g} in {max_iter} iterations", trace)
    logger.info("picard system converged in %d iterations", iterations)
    return result


def solve_for_bundles(model, bundles, phi, t_grid=DEFAULT_GRID_SIZE, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL,
                      cross=None):
    """Picard solve on already simulated clouds.

    ``bundles`` share the initial law and use independent noise streams;
    ``cross`` optionally supplies their per-step <zeta Ntilde, dW> arrays.
    """
    if not model.structured:
        raise ConfigInvalidError('model', f"{model.name} has no structured drift B(x, mu, mu(V))")
    model.require_derivatives(mean_field=True)
    first = bundles[0]
    idx = grid_indices(t_grid, first.dt, first.n_steps)
    parts = []
    for b, bundle in enumerate(bundles):
        increments = bismut_increments(model, bundle, phi)
        parts.append(picard_inputs(model, bundle, phi, idx, increments, None if cross is None else cross[b]))
    return solve_picard(model, PicardInputs.merge(parts), idx, first.dt, first.states[0], max_iter, tol)


def picard_v_system(model, mu, phi, t_grid, cfg, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL, n_paths=None):
    """D^I_phi P_t V(mu) on ``t_grid``: a node count over (0, cfg.t_end] or explicit grid times."""
    phi = as_direction(phi)
    horizon = cfg.t_end if np.ndim(t_grid) == 0 else float(np.max(t_grid))
    bundles = simulate_batches(model, mu, horizon, cfg, n_paths)
    cross = None
    if model.has_lions and model.coupled:
        cross = [zeta_increments(model, b, mean_field_derivative_flow(model, b, phi).cross) for b in bundles]
    return solve_for_bundles(model, bundles, phi, t_grid, max_iter, tol, cross)
